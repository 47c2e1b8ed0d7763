//! Evaluation and analysis: confusion matrices, standard and balanced
//! accuracy, multi-run bias/variance aggregation, relative-change
//! summaries, and the accuracy-vs-count least-squares fit.
//!
//! Terminology: across repeated training runs, the *bias* of an accuracy
//! figure is its mean and the *var* is its variance (higher bias is
//! better — it is mean accuracy, not an error term). The variance divisor
//! is configurable ([`VarianceDivisor`]) because with small run counts
//! the population/sample choice shifts Var noticeably; reports always
//! state which divisor produced them.
//!
//! All functions here are pure and deterministic; formatting helpers
//! round to four decimals so CSV and JSON renderings of the same summary
//! carry identical numbers.

use crate::error::{Error, Result};

// ─── confusion matrix ───────────────────────────────────────────────

/// K×K table of classification outcomes; entry `(t, p)` counts samples
/// whose true category is `t` and predicted category is `p`.
///
/// Row sums therefore equal per-category sample counts and the total
/// equals the number of evaluated samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>, // row-major K×K
}

impl ConfusionMatrix {
    /// An all-zero K×K matrix.
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig(
                "confusion matrix needs at least one category".into(),
            ));
        }
        Ok(Self {
            k,
            counts: vec![0; k * k],
        })
    }

    /// Build a matrix from explicit rows (true category × predicted).
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        let mut cm = Self::new(k)?;
        for (t, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::ShapeMismatch {
                    context: "confusion matrix row",
                    expected: vec![k, k],
                    actual: vec![k, row.len()],
                });
            }
            for (p, &c) in row.iter().enumerate() {
                cm.counts[t * k + p] = c;
            }
        }
        Ok(cm)
    }

    /// Number of categories K.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Count at (true category, predicted category).
    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    /// Record one classified sample.
    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.k {
            return Err(Error::LabelOutOfRange {
                index: 0,
                value: truth,
                limit: self.k,
            });
        }
        if predicted >= self.k {
            return Err(Error::LabelOutOfRange {
                index: 0,
                value: predicted,
                limit: self.k,
            });
        }
        self.counts[truth * self.k + predicted] += 1;
        Ok(())
    }

    /// Samples whose true category is `truth`.
    pub fn row_sum(&self, truth: usize) -> u64 {
        self.counts[truth * self.k..(truth + 1) * self.k]
            .iter()
            .sum()
    }

    /// Correctly classified samples (diagonal sum).
    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.count(i, i)).sum()
    }

    /// All evaluated samples.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Per-category recall: diagonal over row sum, one entry per
    /// category. A category with no samples is a protocol violation
    /// (its recall is undefined), reported as [`Error::EmptyCategory`].
    pub fn per_category_accuracy(&self) -> Result<Vec<f64>> {
        (0..self.k)
            .map(|t| {
                let n = self.row_sum(t);
                if n == 0 {
                    return Err(Error::EmptyCategory { index: t });
                }
                Ok(self.count(t, t) as f64 / n as f64)
            })
            .collect()
    }
}

/// Count prediction/label pairs into a confusion matrix.
pub fn confusion_matrix(predictions: &[usize], labels: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            context: "confusion matrix inputs",
            expected: vec![labels.len()],
            actual: vec![predictions.len()],
        });
    }
    let mut cm = ConfusionMatrix::new(k)?;
    for (i, (&p, &t)) in predictions.iter().zip(labels).enumerate() {
        if t >= k {
            return Err(Error::LabelOutOfRange {
                index: i,
                value: t,
                limit: k,
            });
        }
        if p >= k {
            return Err(Error::LabelOutOfRange {
                index: i,
                value: p,
                limit: k,
            });
        }
        cm.counts[t * k + p] += 1;
    }
    Ok(cm)
}

/// Mean over categories of per-category recall. Every category is
/// weighted equally regardless of its sample count, so this is the
/// figure of merit under class imbalance.
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let per = cm.per_category_accuracy()?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Correct predictions over all samples (trace over total); dominated
/// by majority categories under imbalance.
pub fn standard_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyDataset {
            detail: "confusion matrix has no samples".into(),
        });
    }
    Ok(cm.trace() as f64 / total as f64)
}

// ─── multi-run aggregation ──────────────────────────────────────────

/// Which divisor the run-level variance uses.
///
/// With R runs, `Population` divides by R and `Sample` by R−1; at
/// R = 10 the two differ by 11%, so the choice is explicit and every
/// report header states which one produced its Var column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceDivisor {
    /// Divide by R (the default).
    #[default]
    Population,
    /// Divide by R − 1.
    Sample,
}

impl VarianceDivisor {
    /// Stable lowercase name used in configs and report headers.
    pub fn as_str(self) -> &'static str {
        match self {
            VarianceDivisor::Population => "population",
            VarianceDivisor::Sample => "sample",
        }
    }

    /// Human-readable description for report headers.
    pub fn describe(self) -> &'static str {
        match self {
            VarianceDivisor::Population => "population (divide by R)",
            VarianceDivisor::Sample => "sample (divide by R-1)",
        }
    }
}

impl std::str::FromStr for VarianceDivisor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "population" => Ok(VarianceDivisor::Population),
            "sample" => Ok(VarianceDivisor::Sample),
            other => Err(Error::InvalidConfig(format!(
                "unknown variance divisor {other:?} (expected \"population\" or \"sample\")"
            ))),
        }
    }
}

/// Mean ("Bias") and variance ("Var") of one accuracy figure over runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub bias: f64,
    pub var: f64,
}

fn stat_over(values: &[f64], divisor: VarianceDivisor) -> Stat {
    let r = values.len() as f64;
    let bias = values.iter().sum::<f64>() / r;
    let ss = values.iter().map(|v| (v - bias) * (v - bias)).sum::<f64>();
    let var = match divisor {
        VarianceDivisor::Population => ss / r,
        VarianceDivisor::Sample => ss / (r - 1.0),
    };
    Stat { bias, var }
}

/// Bias/variance analysis of one model's accuracy over R repeated runs.
///
/// `per_category[k]` aggregates category k's recall across runs;
/// `samples` aggregates the per-run standard accuracies; `categories`
/// aggregates the per-run balanced accuracies. By construction the
/// `categories` bias equals the unweighted mean of the per-category
/// biases (means commute), which doubles as an internal consistency
/// check on any rendered report.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub model: String,
    pub runs: usize,
    pub divisor: VarianceDivisor,
    pub per_category: Vec<Stat>,
    pub samples: Stat,
    pub categories: Stat,
}

/// Aggregate per-run accuracies into an [`ExperimentSummary`].
///
/// `per_category` is R×K (row r = category recalls of run r) and
/// `standard` holds the R per-run standard accuracies. Requires R ≥ 2
/// (a single run has no variance to analyse).
pub fn aggregate_runs(
    model: &str,
    per_category: &[Vec<f64>],
    standard: &[f64],
    divisor: VarianceDivisor,
) -> Result<ExperimentSummary> {
    let r = per_category.len();
    if r < 2 {
        return Err(Error::TooFewValues {
            context: "aggregate_runs",
            minimum: 2,
            actual: r,
        });
    }
    if standard.len() != r {
        return Err(Error::ShapeMismatch {
            context: "aggregate_runs standard accuracies",
            expected: vec![r],
            actual: vec![standard.len()],
        });
    }
    let k = per_category[0].len();
    if k == 0 {
        return Err(Error::InvalidConfig(
            "aggregate_runs needs at least one category".into(),
        ));
    }
    for (i, row) in per_category.iter().enumerate() {
        if row.len() != k {
            return Err(Error::ShapeMismatch {
                context: "aggregate_runs per-category accuracies",
                expected: vec![r, k],
                actual: vec![i, row.len()],
            });
        }
    }

    let per_cat_stats = (0..k)
        .map(|j| {
            let column: Vec<f64> = per_category.iter().map(|row| row[j]).collect();
            stat_over(&column, divisor)
        })
        .collect();
    let balanced_per_run: Vec<f64> = per_category
        .iter()
        .map(|row| row.iter().sum::<f64>() / k as f64)
        .collect();

    Ok(ExperimentSummary {
        model: model.to_string(),
        runs: r,
        divisor,
        per_category: per_cat_stats,
        samples: stat_over(standard, divisor),
        categories: stat_over(&balanced_per_run, divisor),
    })
}

// ─── scalar analysis ────────────────────────────────────────────────

/// Percentage change from `before` to `after`: `100·(after−before)/before`.
pub fn relative_change(before: f64, after: f64) -> Result<f64> {
    if before == 0.0 {
        return Err(Error::ZeroBaseline);
    }
    Ok(100.0 * (after - before) / before)
}

/// An ordinary-least-squares line `y = slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionLine {
    pub slope: f64,
    pub intercept: f64,
}

impl RegressionLine {
    /// Evaluate the fitted line at `x`.
    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Fit `y = slope·x + intercept` by ordinary least squares (closed-form
/// normal equations in centered form). Requires at least two points and
/// at least two distinct x values.
pub fn fit_regression(x: &[f64], y: &[f64]) -> Result<RegressionLine> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch {
            context: "fit_regression inputs",
            expected: vec![x.len()],
            actual: vec![y.len()],
        });
    }
    if x.len() < 2 {
        return Err(Error::TooFewValues {
            context: "fit_regression",
            minimum: 2,
            actual: x.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx = x.iter().map(|&xi| (xi - mx) * (xi - mx)).sum::<f64>();
    if sxx == 0.0 {
        return Err(Error::DegenerateRegression { x: x[0] });
    }
    let sxy = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| (xi - mx) * (yi - my))
        .sum::<f64>();
    let slope = sxy / sxx;
    Ok(RegressionLine {
        slope,
        intercept: my - slope * mx,
    })
}

// ─── report rendering ───────────────────────────────────────────────

/// Format with exactly four decimals, normalising `-0.0000` to
/// `0.0000`. Both CSV and JSON reports run every accuracy through this
/// helper, which is what makes the two formats carry identical numbers.
pub fn fmt4(x: f64) -> String {
    let s = format!("{x:.4}");
    if s == "-0.0000" {
        "0.0000".to_string()
    } else {
        s
    }
}

/// Round to four decimals (report precision for accuracies). Defined as
/// the value the four-decimal rendering parses back to, so a JSON field
/// built from `round4` always equals the parsed CSV field built from
/// [`fmt4`] — including on exact decimal ties, where arithmetic rounding
/// and the formatter disagree (e.g. 1/32 = 0.03125).
pub fn round4(x: f64) -> f64 {
    fmt4(x).parse().expect("fixed-width decimal parses")
}

/// One per-category line of a run's validation metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: usize,
    pub model: String,
    pub category: String,
    pub n_train: usize,
    pub n_val: usize,
    pub correct: u64,
    pub total: u64,
    pub accuracy: f64,
}

/// Render per-run records as CSV with the canonical column order.
pub fn render_per_run_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("run_id,model,category,n_train,n_val,correct,total,accuracy\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.run_id,
            r.model,
            r.category,
            r.n_train,
            r.n_val,
            r.correct,
            r.total,
            fmt4(r.accuracy)
        ));
    }
    out
}

/// Render a summary as CSV shaped like the bias/variance tables: one
/// row per category, then the samples-level and categories-level
/// aggregates. The header comment states run count and variance
/// divisor so the Var column is unambiguous.
pub fn render_summary_csv(summary: &ExperimentSummary, category_names: &[String]) -> Result<String> {
    if category_names.len() != summary.per_category.len() {
        return Err(Error::ShapeMismatch {
            context: "summary category names",
            expected: vec![summary.per_category.len()],
            actual: vec![category_names.len()],
        });
    }
    let mut out = format!(
        "# runs={} variance_divisor={}\nmodel,scope,bias,var\n",
        summary.runs,
        summary.divisor.describe()
    );
    for (name, stat) in category_names.iter().zip(&summary.per_category) {
        out.push_str(&format!(
            "{},category:{},{},{}\n",
            summary.model,
            name,
            fmt4(stat.bias),
            fmt4(stat.var)
        ));
    }
    out.push_str(&format!(
        "{},samples,{},{}\n",
        summary.model,
        fmt4(summary.samples.bias),
        fmt4(summary.samples.var)
    ));
    out.push_str(&format!(
        "{},categories,{},{}\n",
        summary.model,
        fmt4(summary.categories.bias),
        fmt4(summary.categories.var)
    ));
    Ok(out)
}
