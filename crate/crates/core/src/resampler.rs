//! Adaptive resampling weights from latent-space density.
//!
//! The debiasing loop reweights training samples by the inverse of their
//! estimated density in latent space: samples in sparsely populated
//! regions (under-represented modes) are drawn more often. Density is
//! estimated per latent dimension with an equal-width histogram; a
//! sample's weight combines its per-dimension inverse bin masses.
//!
//! The whole computation is label-blind — it sees only latent means.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Default histogram resolution per latent dimension.
pub const DEFAULT_BINS: usize = 10;

/// Default smoothing constant added to every bin mass.
///
/// Keeps weights finite for samples alone in their bin, and bounds the
/// maximum boost at roughly `1/alpha` relative to a fully dense bin.
pub const DEFAULT_ALPHA: f64 = 1e-3;

/// How per-dimension inverse masses combine into one sample weight.
///
/// `Max` is the default: with tens of latent dimensions, multiplying
/// inverse densities compounds mild per-dimension variation into
/// astronomical weight ratios, and the sampling distribution degenerates
/// onto a handful of images. Taking the single largest boost keeps the
/// distribution's entropy healthy while still up-weighting any sample
/// that is rare in at least one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CombineMode {
    /// Multiply across dimensions (joint independence view). A sample
    /// rare in several dimensions compounds its boost.
    Product,
    /// Take the single largest per-dimension boost.
    #[default]
    Max,
}

impl std::str::FromStr for CombineMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "product" => Ok(CombineMode::Product),
            "max" => Ok(CombineMode::Max),
            other => Err(Error::InvalidConfig(format!(
                "unknown combine mode {other:?} (expected \"product\" or \"max\")"
            ))),
        }
    }
}

/// Histogram and smoothing configuration for [`density_weights`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleConfig {
    pub bins: usize,
    pub alpha: f64,
    pub combine: CombineMode,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            alpha: DEFAULT_ALPHA,
            combine: CombineMode::Max,
        }
    }
}

impl ResampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::ZeroBins { bins: self.bins });
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::NonPositiveAlpha { alpha: self.alpha });
        }
        Ok(())
    }
}

/// One dimension's histogram: bin edges plus normalized masses.
struct DimHistogram {
    lo: f64,
    width: f64,
    masses: Vec<f64>,
}

impl DimHistogram {
    fn bin_of(&self, v: f64) -> usize {
        (((v - self.lo) / self.width) as usize).min(self.masses.len() - 1)
    }
}

/// Build per-dimension histograms over a latent batch `[N, D]`.
///
/// Each dimension gets `bins` equal-width bins spanning
/// `[min − 1e-6, max + 1e-6]`; the widened range keeps both extremes
/// strictly interior.
fn histograms<T: Element>(mu: &Tensor<T>, bins: usize) -> Result<Vec<DimHistogram>> {
    if bins == 0 {
        return Err(Error::ZeroBins { bins });
    }
    if mu.rank() != 2 || mu.dim(0) == 0 {
        return Err(Error::ShapeMismatch {
            context: "latent batch for density estimation",
            expected: vec![1, 1],
            actual: mu.shape().to_vec(),
        });
    }
    let (n, d) = (mu.dim(0), mu.dim(1));
    let mut result = Vec::with_capacity(d);
    for dim in 0..d {
        let col = |j: usize| mu.data()[j * d + dim].to_f64_lossy();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for j in 0..n {
            lo = lo.min(col(j));
            hi = hi.max(col(j));
        }
        let lo = lo - 1e-6;
        let hi = hi + 1e-6;
        let mut hist = DimHistogram {
            lo,
            width: (hi - lo) / bins as f64,
            masses: vec![0.0; bins],
        };
        for j in 0..n {
            let b = hist.bin_of(col(j));
            hist.masses[b] += 1.0;
        }
        for m in hist.masses.iter_mut() {
            *m /= n as f64;
        }
        result.push(hist);
    }
    Ok(result)
}

/// Normalized per-dimension bin masses for a latent batch `[N, D]`:
/// `D` rows of `bins` masses, each row summing to 1.
pub fn bin_masses<T: Element>(mu: &Tensor<T>, bins: usize) -> Result<Vec<Vec<f64>>> {
    Ok(histograms(mu, bins)?.into_iter().map(|h| h.masses).collect())
}

/// Inverse-density sampling weights for a latent batch `[N, D]`.
///
/// Per dimension, a sample scores `1 / (bin mass + alpha)`; scores
/// combine across dimensions per [`CombineMode`] and are normalized to
/// sum to 1. Product combination runs in log space, so 32+ dimensions
/// cannot underflow.
pub fn density_weights<T: Element>(mu: &Tensor<T>, config: &ResampleConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let hists = histograms(mu, config.bins)?;
    let (n, d) = (mu.dim(0), mu.dim(1));

    let mut log_scores = vec![0.0f64; n];
    for (i, score) in log_scores.iter_mut().enumerate() {
        let mut acc: f64 = match config.combine {
            CombineMode::Product => 0.0,
            CombineMode::Max => f64::NEG_INFINITY,
        };
        for (dim, hist) in hists.iter().enumerate() {
            let b = hist.bin_of(mu.data()[i * d + dim].to_f64_lossy());
            let log_boost = -(hist.masses[b] + config.alpha).ln();
            acc = match config.combine {
                CombineMode::Product => acc + log_boost,
                CombineMode::Max => acc.max(log_boost),
            };
        }
        *score = if d == 0 { 0.0 } else { acc };
    }

    // Stable normalization: shift by the max before exponentiating.
    let peak = log_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = log_scores.iter().map(|&s| (s - peak).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(weights)
}

/// A fixed categorical distribution over sample indices.
#[derive(Debug, Clone)]
pub struct SamplingDistribution {
    probs: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl SamplingDistribution {
    /// Build from non-negative weights (not necessarily normalized).
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig(
                "sampling weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::EmptyDistribution);
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let index = WeightedIndex::new(&probs).map_err(|e| {
            Error::InvalidConfig(format!("cannot build sampling distribution: {e}"))
        })?;
        Ok(Self { probs, index })
    }

    /// The uniform distribution over `n` indices.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(&vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Normalized probabilities, summing to 1.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Shannon entropy in nats (`−Σ p ln p`, with `0·ln 0 = 0`).
    ///
    /// Logged per refresh: entropy collapsing toward 0 means the sampler
    /// is fixating on a handful of samples; entropy at `ln n` means the
    /// weights have gone uniform.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    /// Draw one index.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.sample(&self.index)
    }

    /// Draw a batch of indices (with replacement).
    pub fn draw_batch<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

/// When the training loop re-estimates latent densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResampleSchedule {
    /// Refresh every `every` epochs (1 = every epoch).
    pub every: usize,
}

impl Default for ResampleSchedule {
    fn default() -> Self {
        Self { every: 1 }
    }
}

impl ResampleSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.every == 0 {
            return Err(Error::InvalidConfig(
                "resample schedule must refresh at least every N >= 1 epochs".into(),
            ));
        }
        Ok(())
    }

    /// True when densities should be re-estimated at the start of
    /// `epoch` (0-based). Epoch 0 always refreshes.
    pub fn refreshes_at(&self, epoch: usize) -> bool {
        epoch % self.every == 0
    }
}
