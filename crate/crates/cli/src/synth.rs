//! Flag handling for `generate-synthetic`.

use dbvae_core::data::synthetic::{SyntheticSpec, DEFAULT_COUNTS};
use dbvae_core::data::{CATEGORY_NAMES, NUM_CATEGORIES};

use crate::error::{CliError, CliResult};

/// Assemble a corpus spec from command-line flags.
///
/// `--scale` shrinks or grows the default per-category counts (each
/// scaled count is rounded and floored at one image); `--counts` sets
/// them outright. The two are mutually exclusive.
pub fn build_spec(
    seed: u64,
    scale: Option<f64>,
    counts: Option<&[usize]>,
    noise: f64,
    jitter: u32,
) -> CliResult<SyntheticSpec> {
    let counts = match (scale, counts) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "--scale and --counts are mutually exclusive".into(),
            ))
        }
        (Some(scale), None) => {
            if !(scale.is_finite() && scale > 0.0) {
                return Err(CliError::Usage(format!(
                    "--scale must be a positive number, got {scale}"
                )));
            }
            let mut scaled = [0usize; NUM_CATEGORIES];
            for (slot, &base) in scaled.iter_mut().zip(&DEFAULT_COUNTS) {
                *slot = ((base as f64 * scale).round() as usize).max(1);
            }
            scaled
        }
        (None, Some(list)) => {
            if list.len() != NUM_CATEGORIES {
                return Err(CliError::Usage(format!(
                    "--counts needs {NUM_CATEGORIES} comma-separated values, got {}",
                    list.len()
                )));
            }
            let mut counts = [0usize; NUM_CATEGORIES];
            counts.copy_from_slice(list);
            counts
        }
        (None, None) => DEFAULT_COUNTS,
    };
    let spec = SyntheticSpec {
        counts,
        noise,
        jitter,
        seed,
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(spec)
}

/// Human-readable category table for stdout.
pub fn render_counts_table(spec: &SyntheticSpec) -> String {
    let total: usize = spec.counts.iter().sum();
    let mut out = String::new();
    for (name, &count) in CATEGORY_NAMES.iter().zip(&spec.counts) {
        out.push_str(&format!(
            "{name:<12} {count:>6}  {:5.2}%\n",
            100.0 * count as f64 / total as f64
        ));
    }
    out.push_str(&format!("{:<12} {total:>6}\n", "total"));
    out
}
