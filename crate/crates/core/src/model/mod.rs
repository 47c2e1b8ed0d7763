//! The DB-VAE model: a shared convolutional encoder feeding a classifier
//! head and, in debiasing mode, variational latent heads plus a decoder.
//!
//! Both operating modes run the same trunk and classification path:
//!
//! - `cnn`: the VAE branch is inert — its weight is forced to zero, the
//!   decoder never executes, and the latent heads receive no gradient.
//! - `dbvae`: latent heads produce `(mu, logvar)`, a reparameterized
//!   sample is decoded back to the image, and the loss adds weighted
//!   reconstruction and KL terms.
//!
//! Because the inert branch is skipped entirely (rather than multiplied
//! by zero), a `cnn` run and a `dbvae` run with `vae` weight 0 consume
//! identical random streams and produce bit-identical trajectories.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::adam::Adam;
use crate::error::{Error, Result};
use crate::ops;
use crate::stack::{LayerSpec, Stack};
use crate::tensor::{Element, Tensor};

/// Operating mode: a plain classifier or the debiasing VAE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Cnn,
    Dbvae,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Cnn => "cnn",
            Mode::Dbvae => "dbvae",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(Mode::Cnn),
            "dbvae" => Ok(Mode::Dbvae),
            other => Err(Error::InvalidConfig(format!(
                "unknown model mode {other:?} (expected \"cnn\" or \"dbvae\")"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Scalar weights combining the loss terms:
///
/// `total = classification·CE + vae·(reconstruction·MAE + kl·KL)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub classification: f64,
    pub vae: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            classification: 1.0,
            vae: 1.0,
            reconstruction: 1.0,
            kl: 5e-4,
        }
    }
}

/// Architecture and loss configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub mode: Mode,
    /// Square input side length in pixels.
    pub image_side: usize,
    /// Input channels; the pipeline is grayscale-only.
    pub channels: usize,
    pub num_categories: usize,
    pub latent_dim: usize,
    /// Output channels of each stride-2 encoder block; the decoder mirrors
    /// this sequence.
    pub encoder_filters: Vec<usize>,
    /// Width of the shared fully connected feature layer.
    pub dense_width: usize,
    pub weights: LossWeights,
}

impl ModelConfig {
    /// Defaults for the given mode: 64×64 grayscale, 8 categories, latent
    /// dimension 32, encoder filters [32, 64, 128, 256], dense width 512.
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            image_side: 64,
            channels: 1,
            num_categories: 8,
            latent_dim: 32,
            encoder_filters: vec![32, 64, 128, 256],
            dense_width: 512,
            weights: LossWeights::default(),
        }
    }

    /// Side length of the encoder's bottleneck feature map.
    pub fn bottleneck_side(&self) -> usize {
        self.image_side >> self.encoder_filters.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels != 1 {
            return Err(Error::InvalidConfig(format!(
                "only single-channel images are supported, got {} channels",
                self.channels
            )));
        }
        if self.num_categories < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 categories, got {}",
                self.num_categories
            )));
        }
        if self.latent_dim == 0 {
            return Err(Error::InvalidConfig("latent_dim must be >= 1".into()));
        }
        if self.dense_width == 0 {
            return Err(Error::InvalidConfig("dense_width must be >= 1".into()));
        }
        if self.encoder_filters.is_empty() || self.encoder_filters.contains(&0) {
            return Err(Error::InvalidConfig(
                "encoder_filters must be a non-empty list of positive widths".into(),
            ));
        }
        let blocks = self.encoder_filters.len();
        if self.image_side == 0 || self.image_side % (1 << blocks) != 0 {
            return Err(Error::InvalidConfig(format!(
                "image_side {} must be divisible by 2^{blocks} (one halving per encoder block)",
                self.image_side
            )));
        }
        let w = &self.weights;
        for (name, v) in [
            ("classification", w.classification),
            ("vae", w.vae),
            ("reconstruction", w.reconstruction),
            ("kl", w.kl),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "loss weight {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// The VAE branch weight actually applied: zero in `cnn` mode.
    pub fn effective_vae_weight(&self) -> f64 {
        match self.mode {
            Mode::Cnn => 0.0,
            Mode::Dbvae => self.weights.vae,
        }
    }
}

/// Loss values from one step, reported in `f64`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub classification: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

/// Inference outputs of the shared encoder.
#[derive(Debug, Clone)]
pub struct EncodeOutput<T> {
    pub logits: Tensor<T>,
    pub mu: Tensor<T>,
    pub logvar: Tensor<T>,
}

/// `z = mu + exp(0.5·logvar) ⊙ eps`, all `[N, L]`.
pub fn reparameterize<T: Element>(
    mu: &Tensor<T>,
    logvar: &Tensor<T>,
    eps: &Tensor<T>,
) -> Result<Tensor<T>> {
    if mu.shape() != logvar.shape() || mu.shape() != eps.shape() {
        return Err(Error::ShapeMismatch {
            context: "reparameterize operands",
            expected: mu.shape().to_vec(),
            actual: if mu.shape() != logvar.shape() {
                logvar.shape().to_vec()
            } else {
                eps.shape().to_vec()
            },
        });
    }
    let half = T::from_f64_lossy(0.5);
    let mut z = Tensor::zeros(mu.shape().to_vec());
    for i in 0..z.len() {
        z.data_mut()[i] = mu.data()[i] + (half * logvar.data()[i]).exp() * eps.data()[i];
    }
    Ok(z)
}

/// The model: six layer stacks sharing activations at fixed seams.
#[derive(Debug, Clone, PartialEq)]
pub struct DbVae<T = f32> {
    config: ModelConfig,
    trunk: Stack<T>,
    logit_head: Stack<T>,
    mu_head: Stack<T>,
    logvar_head: Stack<T>,
    dec_fc: Stack<T>,
    dec_conv: Stack<T>,
}

impl<T: Element> DbVae<T> {
    /// Build a model with freshly initialised parameters.
    ///
    /// Stack construction order is fixed (trunk, heads, decoder), so one
    /// rng state always produces one parameter assignment — in both modes,
    /// which keeps `cnn` and zero-weight `dbvae` runs aligned.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let side = config.image_side;
        let blocks = config.encoder_filters.len();
        let bside = config.bottleneck_side();
        let last_filters = *config.encoder_filters.last().expect("validated non-empty");

        let mut trunk_specs = Vec::new();
        let mut in_c = config.channels;
        for &f in &config.encoder_filters {
            trunk_specs.push(LayerSpec::Conv2d {
                in_channels: in_c,
                out_channels: f,
                kernel: 3,
                stride: 2,
                padding: 1,
            });
            trunk_specs.push(LayerSpec::Relu);
            in_c = f;
        }
        trunk_specs.push(LayerSpec::Flatten);
        trunk_specs.push(LayerSpec::Dense {
            inputs: last_filters * bside * bside,
            outputs: config.dense_width,
        });
        trunk_specs.push(LayerSpec::Relu);
        let trunk = Stack::new(trunk_specs, &[config.channels, side, side], rng)?;

        let logit_head = Stack::new(
            vec![LayerSpec::Dense {
                inputs: config.dense_width,
                outputs: config.num_categories,
            }],
            &[config.dense_width],
            rng,
        )?;
        let mu_head = Stack::new(
            vec![LayerSpec::Dense {
                inputs: config.dense_width,
                outputs: config.latent_dim,
            }],
            &[config.dense_width],
            rng,
        )?;
        let logvar_head = Stack::new(
            vec![LayerSpec::Dense {
                inputs: config.dense_width,
                outputs: config.latent_dim,
            }],
            &[config.dense_width],
            rng,
        )?;

        let dec_fc = Stack::new(
            vec![
                LayerSpec::Dense {
                    inputs: config.latent_dim,
                    outputs: last_filters * bside * bside,
                },
                LayerSpec::Relu,
            ],
            &[config.latent_dim],
            rng,
        )?;

        // Mirror the encoder: one stride-2 upsampling block per encoder
        // block (kernel 4 / padding 1 doubles the side exactly), ending in
        // a sigmoid so reconstructions live in [0, 1].
        let mut dec_specs = Vec::new();
        let mut c = last_filters;
        for i in (0..blocks).rev() {
            let out = if i == 0 {
                config.channels
            } else {
                config.encoder_filters[i - 1]
            };
            dec_specs.push(LayerSpec::ConvTranspose2d {
                in_channels: c,
                out_channels: out,
                kernel: 4,
                stride: 2,
                padding: 1,
            });
            if i == 0 {
                dec_specs.push(LayerSpec::Sigmoid);
            } else {
                dec_specs.push(LayerSpec::Relu);
            }
            c = out;
        }
        let dec_conv = Stack::new(dec_specs, &[last_filters, bside, bside], rng)?;

        Ok(Self {
            config,
            trunk,
            logit_head,
            mu_head,
            logvar_head,
            dec_fc,
            dec_conv,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Stack group names in parameter order.
    pub const GROUP_NAMES: [&'static str; 6] = [
        "trunk",
        "head.logits",
        "head.mu",
        "head.logvar",
        "decoder.fc",
        "decoder.conv",
    ];

    fn stacks(&self) -> [&Stack<T>; 6] {
        [
            &self.trunk,
            &self.logit_head,
            &self.mu_head,
            &self.logvar_head,
            &self.dec_fc,
            &self.dec_conv,
        ]
    }

    fn stacks_mut(&mut self) -> [&mut Stack<T>; 6] {
        [
            &mut self.trunk,
            &mut self.logit_head,
            &mut self.mu_head,
            &mut self.logvar_head,
            &mut self.dec_fc,
            &mut self.dec_conv,
        ]
    }

    /// All parameters, flattened in group order.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.stacks().into_iter().flat_map(|s| s.params()).collect()
    }

    /// Mutable references to all parameters, flattened in group order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.stacks_mut()
            .into_iter()
            .flat_map(|s| s.params_mut())
            .collect()
    }

    /// Stable parameter names (`"<group>.<layer>.<field>"`), aligned with
    /// [`Self::params`].
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (group, stack) in Self::GROUP_NAMES.iter().zip(self.stacks()) {
            stack.visit_params(&mut |name, _| names.push(format!("{group}.{name}")));
        }
        names
    }

    /// Overwrite one parameter by its [`Self::param_names`] name.
    pub(crate) fn set_param(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let (group, rest) = match Self::GROUP_NAMES
            .iter()
            .position(|g| name.starts_with(g) && name.as_bytes().get(g.len()) == Some(&b'.'))
        {
            Some(i) => (i, &name[Self::GROUP_NAMES[i].len() + 1..]),
            None => {
                return Err(Error::CheckpointCorrupt {
                    detail: format!("unknown parameter group in {name:?}"),
                })
            }
        };
        self.stacks_mut()[group].set_param(rest, value)
    }

    fn check_batch(&self, images: &Tensor<T>) -> Result<()> {
        let c = &self.config;
        if images.rank() != 4
            || images.dim(1) != c.channels
            || images.dim(2) != c.image_side
            || images.dim(3) != c.image_side
        {
            return Err(Error::ShapeMismatch {
                context: "model input batch",
                expected: vec![0, c.channels, c.image_side, c.image_side],
                actual: images.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Shared-encoder inference: classification logits plus latent stats.
    pub fn encode(&self, images: &Tensor<T>) -> Result<EncodeOutput<T>> {
        self.check_batch(images)?;
        let feat = self.trunk.infer(images.clone())?;
        Ok(EncodeOutput {
            logits: self.logit_head.infer(feat.clone())?,
            mu: self.mu_head.infer(feat.clone())?,
            logvar: self.logvar_head.infer(feat)?,
        })
    }

    /// Latent means only — the resampler's view of the data.
    pub fn latent_mu(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_batch(images)?;
        let feat = self.trunk.infer(images.clone())?;
        self.mu_head.infer(feat)
    }

    /// Decode a latent batch `[N, L]` into images in `[0, 1]`.
    pub fn decode(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        let c = &self.config;
        if z.rank() != 2 || z.dim(1) != c.latent_dim {
            return Err(Error::ShapeMismatch {
                context: "decoder latent batch",
                expected: vec![0, c.latent_dim],
                actual: z.shape().to_vec(),
            });
        }
        let n = z.dim(0);
        let bside = c.bottleneck_side();
        let last = *c.encoder_filters.last().expect("validated non-empty");
        let flat = self.dec_fc.infer(z.clone())?;
        let cube = flat.into_reshaped(vec![n, last, bside, bside])?;
        self.dec_conv.infer(cube)
    }

    /// Predicted category per image: argmax over logits, ties resolved to
    /// the lowest category index.
    pub fn predict(&self, images: &Tensor<T>) -> Result<Vec<usize>> {
        self.check_batch(images)?;
        let feat = self.trunk.infer(images.clone())?;
        let logits = self.logit_head.infer(feat)?;
        let k = self.config.num_categories;
        Ok(logits
            .data()
            .chunks(k)
            .map(|row| {
                let mut best = 0;
                for (i, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect())
    }

    /// Loss and parameter gradients for one batch.
    ///
    /// `eps` supplies the reparameterization noise `[N, latent_dim]` and
    /// is required exactly when the VAE branch is active. Gradients come
    /// back flattened in [`Self::params`] order; branches that did not run
    /// contribute zeros.
    pub fn loss_and_grads(
        &self,
        images: &Tensor<T>,
        labels: &[usize],
        eps: Option<&Tensor<T>>,
    ) -> Result<(LossBreakdown, Vec<Tensor<T>>)> {
        self.check_batch(images)?;
        let n = images.dim(0);
        if labels.len() != n {
            return Err(Error::ShapeMismatch {
                context: "training labels",
                expected: vec![n],
                actual: vec![labels.len()],
            });
        }
        let w = &self.config.weights;
        let vae_weight = self.config.effective_vae_weight();

        // ── forward ────────────────────────────────────────────────────
        let trunk_trace = self.trunk.forward(images.clone())?;
        let feat = trunk_trace.last().expect("trace is never empty").clone();
        let logit_trace = self.logit_head.forward(feat.clone())?;
        let (ce, dlogits) =
            ops::softmax_cross_entropy(logit_trace.last().expect("trace"), labels)?;

        // Classification path gradient, scaled by its loss weight.
        let mut dlogits = dlogits;
        dlogits.scale(T::from_f64_lossy(w.classification));
        let (dfeat_cls, logit_grads) = self.logit_head.backward(&logit_trace, dlogits)?;

        let mut breakdown = LossBreakdown {
            total: w.classification * ce,
            classification: ce,
            reconstruction: 0.0,
            kl: 0.0,
        };

        let mut dfeat = dfeat_cls;
        let (mu_grads, logvar_grads, dec_fc_grads, dec_conv_grads);

        if vae_weight > 0.0 {
            let eps = eps.ok_or_else(|| {
                Error::InvalidConfig(
                    "the VAE branch is active but no epsilon noise was supplied".into(),
                )
            })?;
            let mu_trace = self.mu_head.forward(feat.clone())?;
            let logvar_trace = self.logvar_head.forward(feat.clone())?;
            let mu = mu_trace.last().expect("trace");
            let logvar = logvar_trace.last().expect("trace");
            let z = reparameterize(mu, logvar, eps)?;

            let bside = self.config.bottleneck_side();
            let last = *self.config.encoder_filters.last().expect("non-empty");
            let dec_fc_trace = self.dec_fc.forward(z.clone())?;
            let cube = dec_fc_trace
                .last()
                .expect("trace")
                .clone()
                .into_reshaped(vec![n, last, bside, bside])?;
            let dec_conv_trace = self.dec_conv.forward(cube)?;
            let xhat = dec_conv_trace.last().expect("trace");

            let (mae, mut dxhat) = ops::mean_absolute_error(images, xhat)?;
            let (kl, mut dmu_kl, mut dlv_kl) = ops::kl_standard_normal(mu, logvar)?;
            breakdown.reconstruction = mae;
            breakdown.kl = kl;
            breakdown.total += vae_weight * (w.reconstruction * mae + w.kl * kl);

            // ── backward through the decoder ──────────────────────────
            dxhat.scale(T::from_f64_lossy(vae_weight * w.reconstruction));
            let (dcube, dconv_grads) = self.dec_conv.backward(&dec_conv_trace, dxhat)?;
            let dflat = dcube.into_reshaped(vec![n, last * bside * bside])?;
            let (dz, dfc_grads) = self.dec_fc.backward(&dec_fc_trace, dflat)?;

            // ── combine with the KL gradients at the latent seam ──────
            // z = mu + exp(0.5·logvar)·eps, so
            //   d/dmu     = dz                (plus the KL term)
            //   d/dlogvar = dz·eps·0.5·exp(0.5·logvar)  (plus the KL term)
            let kl_scale = T::from_f64_lossy(vae_weight * w.kl);
            dmu_kl.scale(kl_scale);
            dlv_kl.scale(kl_scale);
            let mut dmu = dz.clone();
            dmu.add_assign(&dmu_kl);
            let half = T::from_f64_lossy(0.5);
            let mut dlv = Tensor::zeros(dz.shape().to_vec());
            for i in 0..dlv.len() {
                dlv.data_mut()[i] = dz.data()[i]
                    * eps.data()[i]
                    * half
                    * (half * logvar.data()[i]).exp()
                    + dlv_kl.data()[i];
            }

            let (dfeat_mu, mg) = self.mu_head.backward(&mu_trace, dmu)?;
            let (dfeat_lv, lg) = self.logvar_head.backward(&logvar_trace, dlv)?;
            dfeat.add_assign(&dfeat_mu);
            dfeat.add_assign(&dfeat_lv);
            mu_grads = Stack::flatten_grads(mg);
            logvar_grads = Stack::flatten_grads(lg);
            dec_fc_grads = Stack::flatten_grads(dfc_grads);
            dec_conv_grads = Stack::flatten_grads(dconv_grads);
        } else {
            // Inert branch: zero gradients keep the optimizer state and
            // parameters untouched, matching a run without the branch.
            mu_grads = self.mu_head.zero_grads();
            logvar_grads = self.logvar_head.zero_grads();
            dec_fc_grads = self.dec_fc.zero_grads();
            dec_conv_grads = self.dec_conv.zero_grads();
        }

        let (_, trunk_grads) = self.trunk.backward(&trunk_trace, dfeat)?;

        let mut grads = Stack::flatten_grads(trunk_grads);
        grads.extend(Stack::flatten_grads(logit_grads));
        grads.extend(mu_grads);
        grads.extend(logvar_grads);
        grads.extend(dec_fc_grads);
        grads.extend(dec_conv_grads);
        debug_assert_eq!(grads.len(), self.params().len());
        Ok((breakdown, grads))
    }

    /// One optimization step on a batch. Draws reparameterization noise
    /// from `eps_rng` when the VAE branch is active (and leaves the rng
    /// untouched otherwise).
    pub fn train_step(
        &mut self,
        adam: &mut Adam<T>,
        images: &Tensor<T>,
        labels: &[usize],
        eps_rng: &mut ChaCha8Rng,
    ) -> Result<LossBreakdown> {
        let eps = if self.config.effective_vae_weight() > 0.0 {
            let n = images.dim(0);
            let mut eps = Tensor::zeros(vec![n, self.config.latent_dim]);
            for v in eps.data_mut().iter_mut() {
                *v = T::standard_normal(eps_rng);
            }
            Some(eps)
        } else {
            None
        };
        let (breakdown, grads) = self.loss_and_grads(images, labels, eps.as_ref())?;
        if !breakdown.total.is_finite() {
            return Err(Error::NumericDivergence {
                quantity: "loss",
                step: adam.step_count() + 1,
            });
        }
        let mut params = self.params_mut();
        adam.step(&mut params, &grads)?;
        Ok(breakdown)
    }
}

/// Finite-difference step for the full-model check.
///
/// The composite loss contains kinks (ReLU, and `|xhat − x|` in the
/// reconstruction term): a central difference is only valid when no kink
/// lies inside the probe window. A smaller step than the stack-level
/// default shrinks that window; [`ModelCheckReport::min_reconstruction_gap`]
/// lets callers verify the reconstruction kinks clear it by a wide margin.
pub const MODEL_FD_STEP: f64 = 1e-6;

/// Outcome of [`check_model_gradient`].
#[derive(Debug, Clone, Copy)]
pub struct ModelCheckReport {
    /// Worst relative error between analytic and numeric gradients.
    pub max_rel_err: f64,
    /// Smallest `|xhat − x|` over all reconstructed pixels at the check
    /// point (`None` when the VAE branch is inert). Finite differencing is
    /// trustworthy only when this gap is much larger than the probe step.
    pub min_reconstruction_gap: Option<f64>,
}

/// Full-model gradient check in `f64`: compares [`DbVae::loss_and_grads`]
/// against central finite differences over **every** parameter, with a
/// fixed epsilon draw, at a deterministic generic point near the seeded
/// initialisation.
pub fn check_model_gradient(
    config: &ModelConfig,
    batch: usize,
    seed: u64,
) -> Result<ModelCheckReport> {
    use crate::gradcheck::max_relative_error;
    use crate::rng::{seeded_rng, stream};

    config.validate()?;
    let mut init_rng = seeded_rng(seed, stream::INIT);
    let mut model: DbVae<f64> = DbVae::new(config.clone(), &mut init_rng)?;
    let slots: usize = model.params().iter().map(|p| p.len()).sum();
    if slots > crate::gradcheck::CHECK_LIMIT {
        return Err(Error::CheckTooLarge {
            params: slots,
            limit: crate::gradcheck::CHECK_LIMIT,
        });
    }

    let mut data_rng = seeded_rng(seed, stream::EPSILON);
    // Check at a generic parameter point. Training starts biases at exactly
    // zero, so a unit whose inputs are all dead (upstream ReLU zeros) sits
    // exactly on its own ReLU kink, where a central difference straddles
    // the corner and disagrees with the conventional relu'(0) = 0
    // subgradient. Differentiation correctness is a property of the code,
    // not of that measure-zero starting point, so the check first nudges
    // every parameter off the kink set.
    for p in model.params_mut() {
        for v in p.data_mut().iter_mut() {
            *v += data_rng.random_range(-0.05..0.05);
        }
    }
    let mut images = Tensor::<f64>::zeros(vec![
        batch,
        config.channels,
        config.image_side,
        config.image_side,
    ]);
    for v in images.data_mut().iter_mut() {
        *v = data_rng.random_range(0.05..0.95);
    }
    let labels: Vec<usize> = (0..batch).map(|i| i % config.num_categories).collect();
    let eps = if config.effective_vae_weight() > 0.0 {
        let mut eps = Tensor::<f64>::zeros(vec![batch, config.latent_dim]);
        for v in eps.data_mut().iter_mut() {
            *v = f64::standard_normal(&mut data_rng);
        }
        Some(eps)
    } else {
        None
    };

    let min_reconstruction_gap = match &eps {
        Some(eps) => {
            let enc = model.encode(&images)?;
            let z = reparameterize(&enc.mu, &enc.logvar, eps)?;
            let xhat = model.decode(&z)?;
            let gap = xhat
                .data()
                .iter()
                .zip(images.data())
                .map(|(a, b)| (a - b).abs())
                .fold(f64::INFINITY, f64::min);
            Some(gap)
        }
        None => None,
    };

    let (_, analytic_tensors) = model.loss_and_grads(&images, &labels, eps.as_ref())?;
    let mut analytic = Vec::with_capacity(slots);
    for g in &analytic_tensors {
        analytic.extend_from_slice(g.data());
    }

    let mut numeric = Vec::with_capacity(slots);
    for slot in 0..slots {
        let probe = |delta: f64, model: &mut DbVae<f64>| -> Result<f64> {
            let mut remaining = slot;
            for p in model.params_mut() {
                if remaining < p.len() {
                    p.data_mut()[remaining] += delta;
                    break;
                }
                remaining -= p.len();
            }
            let (b, _) = model.loss_and_grads(&images, &labels, eps.as_ref())?;
            Ok(b.total)
        };
        let plus = probe(MODEL_FD_STEP, &mut model)?;
        let minus = probe(-2.0 * MODEL_FD_STEP, &mut model)?;
        probe(MODEL_FD_STEP, &mut model)?; // restore
        numeric.push((plus - minus) / (2.0 * MODEL_FD_STEP));
    }
    Ok(ModelCheckReport {
        max_rel_err: max_relative_error(&analytic, &numeric),
        min_reconstruction_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded_rng, stream};

    /// A deliberately tiny config for fast unit tests.
    pub(super) fn miniature(mode: Mode) -> ModelConfig {
        ModelConfig {
            mode,
            image_side: 8,
            channels: 1,
            num_categories: 3,
            latent_dim: 4,
            encoder_filters: vec![2, 4],
            dense_width: 16,
            weights: LossWeights::default(),
        }
    }

    #[test]
    fn config_validation_catches_bad_geometry() {
        let mut c = ModelConfig::new(Mode::Cnn);
        assert!(c.validate().is_ok());
        c.image_side = 63; // not divisible by 2^4
        assert!(c.validate().is_err());
        let mut c = ModelConfig::new(Mode::Cnn);
        c.channels = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::new(Mode::Dbvae);
        c.weights.kl = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn default_config_matches_contract() {
        let c = ModelConfig::new(Mode::Dbvae);
        assert_eq!(c.image_side, 64);
        assert_eq!(c.channels, 1);
        assert_eq!(c.num_categories, 8);
        assert_eq!(c.latent_dim, 32);
        assert_eq!(c.encoder_filters, [32, 64, 128, 256]);
        assert_eq!(c.dense_width, 512);
        assert_eq!(c.weights.kl, 5e-4);
        assert_eq!(c.weights.classification, 1.0);
        assert_eq!(c.weights.vae, 1.0);
        assert_eq!(c.weights.reconstruction, 1.0);
        assert_eq!(c.bottleneck_side(), 4);
    }

    #[test]
    fn shapes_flow_end_to_end() {
        let mut rng = seeded_rng(1, stream::INIT);
        let model: DbVae<f32> = DbVae::new(miniature(Mode::Dbvae), &mut rng).unwrap();
        let images = Tensor::zeros(vec![5, 1, 8, 8]);
        let out = model.encode(&images).unwrap();
        assert_eq!(out.logits.shape(), &[5, 3]);
        assert_eq!(out.mu.shape(), &[5, 4]);
        assert_eq!(out.logvar.shape(), &[5, 4]);
        let z = Tensor::zeros(vec![5, 4]);
        let xhat = model.decode(&z).unwrap();
        assert_eq!(xhat.shape(), &[5, 1, 8, 8]);
        assert!(xhat.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn reparameterize_formula() {
        let mu = Tensor::new(vec![1, 2], vec![1.0f64, -1.0]).unwrap();
        let logvar = Tensor::new(vec![1, 2], vec![0.0f64, 2.0_f64.ln() * 2.0]).unwrap();
        let eps = Tensor::new(vec![1, 2], vec![0.5f64, 1.0]).unwrap();
        let z = reparameterize(&mu, &logvar, &eps).unwrap();
        // sigma = exp(0.5·logvar): 1 and 2.
        assert!((z.data()[0] - 1.5).abs() < 1e-12);
        assert!((z.data()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_eps_recovers_mu() {
        let mu = Tensor::new(vec![2, 2], vec![0.3f32, -0.7, 0.1, 0.9]).unwrap();
        let logvar = Tensor::filled(vec![2, 2], -1.3f32);
        let eps = Tensor::zeros(vec![2, 2]);
        let z = reparameterize(&mu, &logvar, &eps).unwrap();
        assert_eq!(z.data(), mu.data());
    }

    #[test]
    fn predict_breaks_ties_toward_lowest_index() {
        let mut rng = seeded_rng(2, stream::INIT);
        let mut model: DbVae<f32> = DbVae::new(miniature(Mode::Cnn), &mut rng).unwrap();
        // Zero out the logits head entirely: all logits tie at 0.
        let names = model.param_names();
        for (name, p) in names.iter().zip(model.params_mut()) {
            if name.starts_with("head.logits") {
                for v in p.data_mut().iter_mut() {
                    *v = 0.0;
                }
            }
        }
        let preds = model.predict(&Tensor::zeros(vec![3, 1, 8, 8])).unwrap();
        assert_eq!(preds, vec![0, 0, 0]);
    }

    #[test]
    fn cnn_mode_never_consumes_epsilon() {
        let mut rng = seeded_rng(3, stream::INIT);
        let config = miniature(Mode::Cnn);
        let mut model: DbVae<f32> = DbVae::new(config, &mut rng).unwrap();
        let mut adam = Adam::new(Default::default(), &model.params()).unwrap();
        let mut eps_rng = seeded_rng(3, stream::EPSILON);
        let before = eps_rng.clone();
        let images = Tensor::filled(vec![2, 1, 8, 8], 0.5f32);
        model
            .train_step(&mut adam, &images, &[0, 1], &mut eps_rng)
            .unwrap();
        // The rng state is untouched by the inert branch.
        assert_eq!(eps_rng, before);
    }

    #[test]
    fn group_names_cover_all_params() {
        let mut rng = seeded_rng(4, stream::INIT);
        let model: DbVae<f32> = DbVae::new(miniature(Mode::Dbvae), &mut rng).unwrap();
        let names = model.param_names();
        assert_eq!(names.len(), model.params().len());
        // Trunk: 2 conv + 1 dense = 6 tensors; heads: 2 each; dec_fc: 2;
        // dec_conv: 2 conv_t = 4.
        assert_eq!(names.len(), 6 + 2 + 2 + 2 + 2 + 4);
        assert!(names.contains(&"trunk.0.weight".to_string()));
        assert!(names.contains(&"decoder.conv.2.bias".to_string()));
    }
}
