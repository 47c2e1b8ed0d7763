//! Multi-run paired experiments.
//!
//! An experiment trains every requested model R times. Run r of every
//! model uses seed `seed_base + r`, so paired runs share the exact same
//! train/validation partition and the same initial weights — the only
//! difference between a `cnn` and a `dbvae` run with the same run index
//! is the training objective and the resampling policy. Aggregated
//! bias/variance tables then compare models rather than seeds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dbvae_core::data::{load_dataset, Dataset, CATEGORY_NAMES};
use dbvae_core::error::{Error, Result};
use dbvae_core::metrics::{
    aggregate_runs, render_per_run_csv, render_summary_csv, ExperimentSummary, RunRecord,
    VarianceDivisor,
};
use dbvae_core::model::Mode;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::rundir::atomic_write;
use crate::train::run_training;

/// Everything an experiment needs beyond per-run training settings.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Template for each run; `mode`, `seed`, and `out` are overwritten
    /// per run, everything else is shared.
    pub template: RunConfig,
    pub runs: usize,
    pub seed_base: u64,
    pub models: Vec<Mode>,
    pub divisor: VarianceDivisor,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs < 2 {
            return Err(Error::InvalidConfig(format!(
                "experiment needs at least 2 runs to estimate variance, got {}",
                self.runs
            )));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidConfig("no models requested".into()));
        }
        let mut seen = Vec::new();
        for mode in &self.models {
            if seen.contains(mode) {
                return Err(Error::InvalidConfig(format!(
                    "model {mode} listed more than once"
                )));
            }
            seen.push(*mode);
        }
        self.template.validate()
    }
}

/// Result of one full experiment: every per-run record plus one
/// aggregated summary per model.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    pub summaries: Vec<ExperimentSummary>,
}

/// Directory name for one run: `run0_cnn`, `run3_dbvae`, ...
pub fn run_dir_name(run: usize, mode: Mode) -> String {
    format!("run{run}_{mode}")
}

/// Train every (run, model) pair and write the experiment artifacts.
///
/// Layout under `config.out`:
///   run<r>_<model>/     one run directory per pair (config, checkpoint,
///                       metrics, log)
///   per_run.csv         every per-run per-category record
///   summary_<model>.csv one aggregated bias/variance table per model
///   experiment.json     the experiment-level settings for provenance
pub fn run_experiment(config: &ExperimentConfig, dataset: &Dataset) -> CliResult<ExperimentOutcome> {
    config.validate()?;
    std::fs::create_dir_all(&config.out).map_err(|source| Error::Io {
        path: config.out.clone(),
        source,
    })?;

    let mut records: Vec<RunRecord> = Vec::new();
    // per_category[model][run] = per-category balanced-accuracy vector;
    // standard[model][run] = plain accuracy of that run.
    let mut per_category: Vec<Vec<Vec<f64>>> = vec![Vec::new(); config.models.len()];
    let mut standard: Vec<Vec<f64>> = vec![Vec::new(); config.models.len()];

    for run in 0..config.runs {
        for (m, &mode) in config.models.iter().enumerate() {
            let mut run_config = config.template.clone();
            run_config.mode = mode;
            run_config.seed = config.seed_base + run as u64;
            run_config.out = config.out.join(run_dir_name(run, mode));
            let artifacts =
                run_training(&run_config, dataset, run).map_err(|source| CliError::RunFailed {
                    run,
                    model: mode.to_string(),
                    source: Box::new(source),
                })?;
            records.extend(artifacts.records.iter().cloned());
            per_category[m].push(artifacts.per_category.clone());
            standard[m].push(artifacts.standard);
        }
    }

    let mut summaries = Vec::new();
    for (m, &mode) in config.models.iter().enumerate() {
        summaries.push(aggregate_runs(
            &mode.to_string(),
            &per_category[m],
            &standard[m],
            config.divisor,
        )?);
    }

    atomic_write(
        &config.out.join("per_run.csv"),
        render_per_run_csv(&records).as_bytes(),
    )?;
    let names: Vec<String> = CATEGORY_NAMES.iter().map(|s| s.to_string()).collect();
    for summary in &summaries {
        let table = render_summary_csv(summary, &names).map_err(CliError::from)?;
        atomic_write(
            &config.out.join(format!("summary_{}.csv", summary.model)),
            table.as_bytes(),
        )?;
    }
    atomic_write(
        &config.out.join("experiment.json"),
        render_experiment_json(config).as_bytes(),
    )?;

    Ok(ExperimentOutcome { records, summaries })
}

/// The experiment-level settings document.
pub fn render_experiment_json(config: &ExperimentConfig) -> String {
    let models: Vec<String> = config.models.iter().map(|m| m.to_string()).collect();
    let doc = serde_json::json!({
        "runs": config.runs,
        "seed_base": config.seed_base,
        "models": models,
        "variance_divisor": config.divisor.as_str(),
        "data": config.template.data.display().to_string(),
        "epochs": config.template.epochs,
        "batch": config.template.batch,
        "val_fraction": config.template.val_fraction,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("experiment config serializes");
    text.push('\n');
    text
}

/// Load the corpus once and run the experiment against it.
pub fn cmd_experiment(config: &ExperimentConfig, data_root: &Path) -> CliResult<ExperimentOutcome> {
    let dataset = load_dataset(data_root).map_err(CliError::from)?;
    run_experiment(config, &dataset)
}

/// Render a short human-readable comparison to stdout after a run.
pub fn render_comparison(summaries: &[ExperimentSummary]) -> String {
    let mut out = String::new();
    for summary in summaries {
        let _ = writeln!(
            out,
            "{}: balanced bias={:.4} var={:.6}; standard bias={:.4} var={:.6}",
            summary.model,
            summary.categories.bias,
            summary.categories.var,
            summary.samples.bias,
            summary.samples.var,
        );
    }
    if summaries.len() == 2 {
        let delta = summaries[1].categories.bias - summaries[0].categories.bias;
        let _ = writeln!(
            out,
            "balanced-accuracy bias delta ({} - {}): {:+.4}",
            summaries[1].model, summaries[0].model, delta
        );
    }
    out
}
