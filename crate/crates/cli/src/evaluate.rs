//! Checkpoint evaluation: confusion matrix and accuracy documents.
//!
//! `evaluate` re-derives the run's own stratified split from the stored
//! config (the split is a pure function of labels and seed), sweeps the
//! requested side through the checkpointed model, and emits the same
//! numbers in two renderings — a CSV table and a JSON document — both
//! rounded to four decimals so the formats agree exactly.

use std::path::Path;

use dbvae_core::data::{load_dataset, stratified_indices, Dataset, CATEGORY_NAMES, NUM_CATEGORIES};
use dbvae_core::error::{Error, Result};
use dbvae_core::metrics::{
    balanced_accuracy, confusion_matrix, fmt4, round4, standard_accuracy, ConfusionMatrix,
};
use dbvae_core::model::load_checkpoint;

use crate::config::RunConfig;
use crate::rundir::{atomic_write, RunDir};
use crate::train::predict_chunked;

/// Which side of the split to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            other => Err(Error::InvalidConfig(format!(
                "unknown split {other:?} (expected \"train\" or \"val\")"
            ))),
        }
    }
}

/// One evaluated category.
#[derive(Debug, Clone)]
pub struct CategoryEval {
    pub name: &'static str,
    pub total: u64,
    pub correct: u64,
    pub accuracy: f64,
}

/// A full evaluation of one checkpoint on one split.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub model: String,
    pub split: Split,
    pub confusion: ConfusionMatrix,
    pub per_category: Vec<CategoryEval>,
    pub standard: f64,
    pub balanced: f64,
}

/// Sweep `data` through `model` and assemble the document.
pub fn evaluate_dataset(
    model: &dbvae_core::model::DbVae<f32>,
    data: &Dataset,
    split: Split,
) -> Result<Evaluation> {
    let predictions = predict_chunked(model, data)?;
    let cm = confusion_matrix(&predictions, data.labels(), NUM_CATEGORIES)?;
    let per = cm.per_category_accuracy()?;
    let per_category = (0..NUM_CATEGORIES)
        .map(|c| CategoryEval {
            name: CATEGORY_NAMES[c],
            total: cm.row_sum(c),
            correct: cm.count(c, c),
            accuracy: per[c],
        })
        .collect();
    Ok(Evaluation {
        model: model.config().mode.to_string(),
        split,
        standard: standard_accuracy(&cm)?,
        balanced: balanced_accuracy(&cm)?,
        confusion: cm,
        per_category,
    })
}

impl Evaluation {
    /// CSV rendering: per-category rows, aggregate rows, then the
    /// confusion matrix (true category per row).
    pub fn render_csv(&self) -> String {
        let mut out = format!(
            "# model={} split={}\ncategory,total,correct,accuracy\n",
            self.model,
            self.split.as_str()
        );
        for cat in &self.per_category {
            out.push_str(&format!(
                "{},{},{},{}\n",
                cat.name,
                cat.total,
                cat.correct,
                fmt4(cat.accuracy)
            ));
        }
        out.push_str(&format!("standard,,,{}\n", fmt4(self.standard)));
        out.push_str(&format!("balanced,,,{}\n", fmt4(self.balanced)));
        out.push_str("confusion");
        for name in CATEGORY_NAMES {
            out.push_str(&format!(",{name}"));
        }
        out.push('\n');
        for t in 0..NUM_CATEGORIES {
            out.push_str(CATEGORY_NAMES[t]);
            for p in 0..NUM_CATEGORIES {
                out.push_str(&format!(",{}", self.confusion.count(t, p)));
            }
            out.push('\n');
        }
        out
    }

    /// JSON rendering with the same (4-decimal) numbers as the CSV.
    pub fn render_json(&self) -> String {
        let confusion: Vec<Vec<u64>> = (0..NUM_CATEGORIES)
            .map(|t| (0..NUM_CATEGORIES).map(|p| self.confusion.count(t, p)).collect())
            .collect();
        let doc = serde_json::json!({
            "model": self.model,
            "split": self.split.as_str(),
            "per_category": self.per_category.iter().map(|c| serde_json::json!({
                "category": c.name,
                "total": c.total,
                "correct": c.correct,
                "accuracy": round4(c.accuracy),
            })).collect::<Vec<_>>(),
            "standard_accuracy": round4(self.standard),
            "balanced_accuracy": round4(self.balanced),
            "confusion": confusion,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("evaluation serializes");
        text.push('\n');
        text
    }
}

/// Run `evaluate` against a run directory: load its config and
/// checkpoint, re-derive the split, sweep, and write
/// `eval_<split>.csv` / `eval_<split>.json` into the run directory.
pub fn cmd_evaluate(run_root: &Path, data_override: Option<&Path>, split: Split) -> Result<Evaluation> {
    let run_dir = RunDir::open(run_root)?;
    let config = RunConfig::load(&run_dir.config_path())?;
    let checkpoint_path = run_dir.checkpoint_path();
    if !checkpoint_path.is_file() {
        return Err(Error::Io {
            path: checkpoint_path,
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint not found"),
        });
    }
    let (model, _adam, _seed) = load_checkpoint(&checkpoint_path)?;

    let data_root = data_override.unwrap_or(&config.data);
    let dataset = load_dataset(data_root)?;
    let (train_idx, val_idx) = stratified_indices(dataset.labels(), config.val_fraction, config.seed)?;
    let side = match split {
        Split::Train => dataset.subset(&train_idx),
        Split::Val => dataset.subset(&val_idx),
    };

    let evaluation = evaluate_dataset(&model, &side, split)?;
    let base = format!("eval_{}", split.as_str());
    atomic_write(
        &run_root.join(format!("{base}.csv")),
        evaluation.render_csv().as_bytes(),
    )?;
    atomic_write(
        &run_root.join(format!("{base}.json")),
        evaluation.render_json().as_bytes(),
    )?;
    Ok(evaluation)
}
