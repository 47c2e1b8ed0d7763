//! Post-hoc report generation.
//!
//! `report` is deliberately decoupled from training: it reads only the
//! two experiment artifacts (`experiment.json` and `per_run.csv`) and
//! recomputes every aggregate from the integer correct/total counts, so
//! a report can be regenerated — or audited — long after the runs
//! finished. Because the counts carry full precision, the recomputed
//! tables agree byte-for-byte with the summaries written at experiment
//! time.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dbvae_core::data::{CATEGORY_NAMES, NUM_CATEGORIES};
use dbvae_core::error::{Error, Result};
use dbvae_core::metrics::{
    aggregate_runs, fit_regression, fmt4, relative_change, render_summary_csv, round4,
    ExperimentSummary, RegressionLine, RunRecord, VarianceDivisor,
};

use crate::error::{CliError, CliResult};
use crate::rundir::atomic_write;

/// Which report artifacts to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
    All,
}

impl ReportFormat {
    fn wants_csv(self) -> bool {
        matches!(self, ReportFormat::Csv | ReportFormat::All)
    }
    fn wants_json(self) -> bool {
        matches!(self, ReportFormat::Json | ReportFormat::All)
    }
    fn wants_svg(self) -> bool {
        matches!(self, ReportFormat::Svg | ReportFormat::All)
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "svg" => Ok(ReportFormat::Svg),
            "all" => Ok(ReportFormat::All),
            other => Err(Error::InvalidConfig(format!(
                "unknown report format {other:?} (expected csv, json, svg, or all)"
            ))),
        }
    }
}

/// The experiment-level settings document written by `experiment`.
#[derive(Debug, serde::Deserialize)]
pub struct ExperimentDoc {
    pub runs: usize,
    pub seed_base: u64,
    pub models: Vec<String>,
    pub variance_divisor: String,
    pub data: String,
    pub epochs: usize,
    pub batch: usize,
    pub val_fraction: f64,
}

/// Parse `per_run.csv` back into records.
///
/// The accuracy column is re-derived from correct/total and must agree
/// with the stored rendering — a mismatch means the file was edited or
/// corrupted.
pub fn parse_per_run_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let expected = "run_id,model,category,n_train,n_val,correct,total,accuracy";
    if header != expected {
        return Err(Error::InvalidConfig(format!(
            "per-run table header mismatch: expected {expected:?}, got {header:?}"
        )));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::InvalidConfig(format!(
                "per-run table row {} has {} fields, expected 8",
                i + 2,
                fields.len()
            )));
        }
        let bad = |what: &str| {
            Error::InvalidConfig(format!("per-run table row {}: bad {what}: {line:?}", i + 2))
        };
        let record = RunRecord {
            run_id: fields[0].parse().map_err(|_| bad("run_id"))?,
            model: fields[1].to_string(),
            category: fields[2].to_string(),
            n_train: fields[3].parse().map_err(|_| bad("n_train"))?,
            n_val: fields[4].parse().map_err(|_| bad("n_val"))?,
            correct: fields[5].parse().map_err(|_| bad("correct"))?,
            total: fields[6].parse().map_err(|_| bad("total"))?,
            accuracy: fields[7].parse().map_err(|_| bad("accuracy"))?,
        };
        if record.total == 0 {
            return Err(bad("total (must be positive)"));
        }
        if record.correct > record.total {
            return Err(bad("correct (exceeds total)"));
        }
        let recomputed = record.correct as f64 / record.total as f64;
        if fmt4(recomputed) != fields[7] {
            return Err(bad("accuracy (does not match correct/total)"));
        }
        records.push(record);
    }
    Ok(records)
}

/// One model's runs, reassembled from per-run records.
#[derive(Debug)]
pub struct ModelRuns {
    pub model: String,
    /// `per_category[r][k]`: category k's recall in run r (full precision,
    /// re-derived from the integer counts).
    pub per_category: Vec<Vec<f64>>,
    /// Per-run standard accuracy: total correct over total samples.
    pub standard: Vec<f64>,
    /// Training-set size per category (constant across runs: split
    /// counts depend only on the corpus and the validation fraction).
    pub n_train: Vec<usize>,
}

/// Gather the records of one model into per-run matrices.
pub fn collect_model_runs(records: &[RunRecord], model: &str, runs: usize) -> Result<ModelRuns> {
    let category_index: BTreeMap<&str, usize> = CATEGORY_NAMES
        .iter()
        .enumerate()
        .map(|(i, n)| (*n, i))
        .collect();
    let mut per_category = vec![vec![f64::NAN; NUM_CATEGORIES]; runs];
    let mut seen = vec![[false; NUM_CATEGORIES]; runs];
    let mut correct_sum = vec![0u64; runs];
    let mut total_sum = vec![0u64; runs];
    let mut n_train = vec![0usize; NUM_CATEGORIES];

    for record in records.iter().filter(|r| r.model == model) {
        let Some(&k) = category_index.get(record.category.as_str()) else {
            return Err(Error::InvalidConfig(format!(
                "unknown category {:?} in per-run table",
                record.category
            )));
        };
        if record.run_id >= runs {
            return Err(Error::InvalidConfig(format!(
                "run id {} out of range for a {} run experiment",
                record.run_id, runs
            )));
        }
        if seen[record.run_id][k] {
            return Err(Error::InvalidConfig(format!(
                "duplicate record for run {} model {model} category {}",
                record.run_id, record.category
            )));
        }
        seen[record.run_id][k] = true;
        per_category[record.run_id][k] = record.correct as f64 / record.total as f64;
        correct_sum[record.run_id] += record.correct;
        total_sum[record.run_id] += record.total;
        if n_train[k] == 0 {
            n_train[k] = record.n_train;
        } else if n_train[k] != record.n_train {
            return Err(Error::InvalidConfig(format!(
                "inconsistent n_train for category {}: {} vs {}",
                record.category, n_train[k], record.n_train
            )));
        }
    }

    for (r, flags) in seen.iter().enumerate() {
        if let Some(k) = flags.iter().position(|&f| !f) {
            return Err(Error::InvalidConfig(format!(
                "run {r} model {model} is missing category {}",
                CATEGORY_NAMES[k]
            )));
        }
    }

    let standard = correct_sum
        .iter()
        .zip(&total_sum)
        .map(|(&c, &t)| c as f64 / t as f64)
        .collect();
    Ok(ModelRuns {
        model: model.to_string(),
        per_category,
        standard,
        n_train,
    })
}

/// One row of the model-to-model comparison table.
#[derive(Debug, Clone)]
pub struct ChangeRow {
    pub scope: String,
    pub metric: &'static str,
    pub before: f64,
    pub after: f64,
    /// `None` when the baseline is zero (relative change undefined).
    pub change_pct: Option<f64>,
}

/// Everything the report derives from the experiment artifacts.
#[derive(Debug)]
pub struct Report {
    pub doc: ExperimentDoc,
    pub summaries: Vec<ExperimentSummary>,
    pub model_runs: Vec<ModelRuns>,
    pub fits: Vec<RegressionLine>,
    /// Present when the experiment compared exactly two models.
    pub changes: Vec<ChangeRow>,
}

/// Build the full report state from parsed artifacts.
pub fn build_report(doc: ExperimentDoc, records: &[RunRecord]) -> Result<Report> {
    let divisor: VarianceDivisor = doc.variance_divisor.parse()?;
    let mut summaries = Vec::new();
    let mut model_runs = Vec::new();
    let mut fits = Vec::new();
    for model in &doc.models {
        let runs = collect_model_runs(records, model, doc.runs)?;
        let summary = aggregate_runs(model, &runs.per_category, &runs.standard, divisor)?;
        let x: Vec<f64> = runs.n_train.iter().map(|&n| n as f64).collect();
        let y: Vec<f64> = summary.per_category.iter().map(|s| s.bias).collect();
        fits.push(fit_regression(&x, &y)?);
        summaries.push(summary);
        model_runs.push(runs);
    }

    let changes = if summaries.len() == 2 {
        change_rows(&summaries[0], &summaries[1])
    } else {
        Vec::new()
    };

    Ok(Report {
        doc,
        summaries,
        model_runs,
        fits,
        changes,
    })
}

fn change_row(scope: String, metric: &'static str, before: f64, after: f64) -> ChangeRow {
    ChangeRow {
        scope,
        metric,
        before,
        after,
        change_pct: relative_change(before, after).ok(),
    }
}

/// Per-category bias rows, then the samples- and categories-level
/// aggregate rows (bias and variance each).
fn change_rows(baseline: &ExperimentSummary, target: &ExperimentSummary) -> Vec<ChangeRow> {
    let mut rows = Vec::new();
    for (k, name) in CATEGORY_NAMES.iter().enumerate() {
        rows.push(change_row(
            format!("category:{name}"),
            "bias",
            baseline.per_category[k].bias,
            target.per_category[k].bias,
        ));
    }
    rows.push(change_row(
        "samples".into(),
        "bias",
        baseline.samples.bias,
        target.samples.bias,
    ));
    rows.push(change_row(
        "samples".into(),
        "var",
        baseline.samples.var,
        target.samples.var,
    ));
    rows.push(change_row(
        "categories".into(),
        "bias",
        baseline.categories.bias,
        target.categories.bias,
    ));
    rows.push(change_row(
        "categories".into(),
        "var",
        baseline.categories.var,
        target.categories.var,
    ));
    rows
}

/// Round to two decimals the same way `{:.2}` renders, so the CSV and
/// JSON change tables carry identical percentages.
fn round2(x: f64) -> f64 {
    format!("{x:.2}").parse().expect("fixed-width decimal parses")
}

/// `changes.csv`: one row per compared figure.
pub fn render_changes_csv(report: &Report) -> String {
    let mut out = String::from("baseline,target,scope,metric,before,after,change_pct\n");
    if report.summaries.len() != 2 {
        return out;
    }
    let baseline = &report.summaries[0].model;
    let target = &report.summaries[1].model;
    for row in &report.changes {
        let pct = match row.change_pct {
            Some(p) => format!("{p:.2}"),
            None => String::new(),
        };
        out.push_str(&format!(
            "{baseline},{target},{},{},{},{},{pct}\n",
            row.scope,
            row.metric,
            fmt4(row.before),
            fmt4(row.after)
        ));
    }
    out
}

/// `report.json`: the whole report in one machine-readable document.
///
/// Accuracy-scale figures are rounded to report precision (four
/// decimals); regression coefficients are kept at full precision
/// because slopes live at the 1e-5 scale.
pub fn render_report_json(report: &Report) -> String {
    let mut models = serde_json::Map::new();
    for ((summary, runs), fit) in report
        .summaries
        .iter()
        .zip(&report.model_runs)
        .zip(&report.fits)
    {
        let per_category: Vec<serde_json::Value> = (0..NUM_CATEGORIES)
            .map(|k| {
                serde_json::json!({
                    "category": CATEGORY_NAMES[k],
                    "n_train": runs.n_train[k],
                    "bias": round4(summary.per_category[k].bias),
                    "var": round4(summary.per_category[k].var),
                })
            })
            .collect();
        models.insert(
            summary.model.clone(),
            serde_json::json!({
                "per_category": per_category,
                "samples": {
                    "bias": round4(summary.samples.bias),
                    "var": round4(summary.samples.var),
                },
                "categories": {
                    "bias": round4(summary.categories.bias),
                    "var": round4(summary.categories.var),
                },
                "fit": { "slope": fit.slope, "intercept": fit.intercept },
            }),
        );
    }
    let changes: Vec<serde_json::Value> = report
        .changes
        .iter()
        .map(|row| {
            serde_json::json!({
                "baseline": report.summaries[0].model,
                "target": report.summaries[1].model,
                "scope": row.scope,
                "metric": row.metric,
                "before": round4(row.before),
                "after": round4(row.after),
                "change_pct": row.change_pct.map(round2),
            })
        })
        .collect();
    let doc = serde_json::json!({
        "runs": report.doc.runs,
        "seed_base": report.doc.seed_base,
        "variance_divisor": report.doc.variance_divisor,
        "models": report.doc.models,
        "epochs": report.doc.epochs,
        "batch": report.doc.batch,
        "val_fraction": report.doc.val_fraction,
        "summaries": serde_json::Value::Object(models),
        "changes": changes,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
    text.push('\n');
    text
}

// ─── scatter plot ────────────────────────────────────────────────────

const SVG_WIDTH: f64 = 640.0;
const SVG_HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 60.0;

/// Scatter of per-category bias against training-set size with the
/// fitted least-squares line, one file per model.
pub fn render_scatter_svg(summary: &ExperimentSummary, runs: &ModelRuns, fit: &RegressionLine) -> String {
    let x_max = runs.n_train.iter().copied().max().unwrap_or(1).max(1) as f64 * 1.05;
    let plot_w = SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let map_x = |v: f64| MARGIN_LEFT + v / x_max * plot_w;
    let map_y = |v: f64| MARGIN_TOP + (1.0 - v.clamp(0.0, 1.0)) * plot_h;

    let mut svg = format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" ",
            "width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
            "  <style>\n",
            "    .axis {{ stroke: #333; stroke-width: 1; }}\n",
            "    .tick {{ stroke: #333; stroke-width: 1; }}\n",
            "    .grid {{ stroke: #ddd; stroke-width: 0.5; }}\n",
            "    .point {{ fill: #1f6fb2; }}\n",
            "    .fit {{ stroke: #c23b22; stroke-width: 1.5; }}\n",
            "    text {{ font-family: sans-serif; font-size: 11px; fill: #222; }}\n",
            "    .caption {{ font-size: 12px; }}\n",
            "  </style>\n"
        ),
        w = SVG_WIDTH,
        h = SVG_HEIGHT
    );

    // Axes.
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + plot_h;
    svg.push_str(&format!(
        "  <line class=\"axis\" x1=\"{x0}\" y1=\"{y0}\" x2=\"{:.1}\" y2=\"{y0}\"/>\n",
        MARGIN_LEFT + plot_w
    ));
    svg.push_str(&format!(
        "  <line class=\"axis\" x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{MARGIN_TOP}\"/>\n"
    ));

    // Y grid + labels at 0, 0.25, 0.5, 0.75, 1.
    for i in 0..=4 {
        let v = i as f64 * 0.25;
        let y = map_y(v);
        if i > 0 {
            svg.push_str(&format!(
                "  <line class=\"grid\" x1=\"{x0}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\"/>\n",
                MARGIN_LEFT + plot_w
            ));
        }
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.2}</text>\n",
            x0 - 8.0,
            y + 4.0
        ));
    }

    // X ticks at 0 and at each point's n_train would crowd; label 0 and
    // the axis maximum.
    for &v in &[0.0, x_max / 1.05] {
        let x = map_x(v);
        svg.push_str(&format!(
            "  <line class=\"tick\" x1=\"{x:.1}\" y1=\"{y0}\" x2=\"{x:.1}\" y2=\"{:.1}\"/>\n",
            y0 + 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            y0 + 18.0,
            v as u64
        ));
    }

    // Fitted line across the x range, clamped into the plot box.
    svg.push_str(&format!(
        "  <line class=\"fit\" x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\"/>\n",
        map_x(0.0),
        map_y(fit.predict(0.0)),
        map_x(x_max),
        map_y(fit.predict(x_max))
    ));

    // Points with category labels.
    for k in 0..NUM_CATEGORIES {
        let x = map_x(runs.n_train[k] as f64);
        let y = map_y(summary.per_category[k].bias);
        svg.push_str(&format!(
            "  <circle class=\"point\" cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"4\"/>\n"
        ));
        svg.push_str(&format!(
            "  <text class=\"label\" x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            x + 6.0,
            y - 6.0,
            CATEGORY_NAMES[k]
        ));
    }

    // Axis titles and caption with the fitted equation.
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">training samples per category</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        y0 + 34.0
    ));
    svg.push_str(&format!(
        concat!(
            "  <text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" ",
            "transform=\"rotate(-90 14 {:.1})\">balanced-accuracy bias</text>\n"
        ),
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    ));
    svg.push_str(&format!(
        concat!(
            "  <text class=\"caption\" x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">",
            "{}: bias = {:.3e}*n + {:.4}</text>\n"
        ),
        MARGIN_LEFT + plot_w / 2.0,
        SVG_HEIGHT - 8.0,
        summary.model,
        fit.slope,
        fit.intercept
    ));
    svg.push_str("</svg>\n");
    svg
}

/// Read an experiment directory, rebuild every aggregate, and write the
/// requested report artifacts into `out` (default: `<dir>/report`).
pub fn cmd_report(
    experiment_dir: &Path,
    out: Option<&Path>,
    format: ReportFormat,
) -> CliResult<Report> {
    let doc_path = experiment_dir.join("experiment.json");
    let doc_text = std::fs::read_to_string(&doc_path).map_err(|source| Error::Io {
        path: doc_path.clone(),
        source,
    })?;
    let doc: ExperimentDoc = serde_json::from_str(&doc_text).map_err(|e| {
        CliError::Core(Error::InvalidConfig(format!(
            "{}: not a valid experiment document: {e}",
            doc_path.display()
        )))
    })?;

    let table_path = experiment_dir.join("per_run.csv");
    let table_text = std::fs::read_to_string(&table_path).map_err(|source| Error::Io {
        path: table_path,
        source,
    })?;
    let records = parse_per_run_csv(&table_text)?;
    let report = build_report(doc, &records)?;

    let out_dir: PathBuf = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| experiment_dir.join("report"));
    std::fs::create_dir_all(&out_dir).map_err(|source| Error::Io {
        path: out_dir.clone(),
        source,
    })?;

    let names: Vec<String> = CATEGORY_NAMES.iter().map(|s| s.to_string()).collect();
    if format.wants_csv() {
        for summary in &report.summaries {
            let table = render_summary_csv(summary, &names).map_err(CliError::from)?;
            atomic_write(
                &out_dir.join(format!("table_{}.csv", summary.model)),
                table.as_bytes(),
            )?;
        }
        atomic_write(
            &out_dir.join("changes.csv"),
            render_changes_csv(&report).as_bytes(),
        )?;
    }
    if format.wants_json() {
        atomic_write(
            &out_dir.join("report.json"),
            render_report_json(&report).as_bytes(),
        )?;
    }
    if format.wants_svg() {
        for ((summary, runs), fit) in report
            .summaries
            .iter()
            .zip(&report.model_runs)
            .zip(&report.fits)
        {
            atomic_write(
                &out_dir.join(format!("scatter_{}.svg", summary.model)),
                render_scatter_svg(summary, runs, fit).as_bytes(),
            )?;
        }
    }
    Ok(report)
}
