//! Binary checkpoint format for the model, optimizer state, and rng seed.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "DBVW"                      4 bytes
//! format version                    u32 (currently 1)
//! config block                      u32 length + UTF-8 "key=value" lines
//! parameter record count            u32
//! parameter records                 name, shape, f32 payload (see below)
//! optimizer step count              u64
//! optimizer hyperparameters         4 × f64 (lr, beta1, beta2, epsilon)
//! first-moment records              one per parameter, same format
//! second-moment records             one per parameter, same format
//! rng seed                          u64
//! ```
//!
//! A record is `name_len u32 | name | rank u32 | dims u32… | payload f32…`.
//! Records appear in the model's canonical parameter order, and loading
//! verifies names, shapes, and the absence of trailing bytes, so a
//! save → load → save cycle is byte-identical.

use std::path::Path;

use crate::adam::{Adam, AdamConfig};
use crate::error::{io_error, Error, Result};
use crate::model::{DbVae, LossWeights, Mode, ModelConfig};
use crate::rng::{seeded_rng, stream};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"DBVW";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialize model parameters, optimizer state, and the experiment seed.
///
/// The file is written to a sibling temporary path and renamed into place,
/// so a crash mid-write never leaves a half-written checkpoint behind.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &DbVae<f32>,
    adam: &Adam<f32>,
    seed: u64,
) -> Result<()> {
    let path = path.as_ref();
    let names = model.param_names();
    let params = model.params();
    let (m, v) = adam.moments();
    if m.len() != params.len() {
        return Err(Error::CheckpointCorrupt {
            detail: format!(
                "optimizer tracks {} tensors but the model has {}",
                m.len(),
                params.len()
            ),
        });
    }

    let mut buf = Vec::new();
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());

    let config_text = render_config(model.config());
    buf.extend_from_slice(&(config_text.len() as u32).to_le_bytes());
    buf.extend_from_slice(config_text.as_bytes());

    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, p) in names.iter().zip(&params) {
        write_record(&mut buf, name, p);
    }

    let cfg = adam.config();
    buf.extend_from_slice(&adam.step_count().to_le_bytes());
    for value in [cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon] {
        buf.extend_from_slice(&value.to_le_bytes());
    }
    for (name, t) in names.iter().zip(m) {
        write_record(&mut buf, name, t);
    }
    for (name, t) in names.iter().zip(v) {
        write_record(&mut buf, name, t);
    }

    buf.extend_from_slice(&seed.to_le_bytes());

    let tmp = path.with_extension("ckpt.tmp");
    std::fs::write(&tmp, &buf).map_err(|e| io_error(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}

/// Load a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(DbVae<f32>, Adam<f32>, u64)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| io_error(path, e))?;
    let mut r = Reader::new(&bytes);

    r.section = "header";
    let magic: [u8; 4] = r.take(4)?.try_into().expect("length checked");
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::CheckpointMagic { found: magic });
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }

    r.section = "config block";
    let config_len = r.u32()? as usize;
    let config_text = std::str::from_utf8(r.take(config_len)?)
        .map_err(|e| Error::CheckpointCorrupt {
            detail: format!("config block is not UTF-8: {e}"),
        })?
        .to_string();
    let config = parse_config(&config_text)?;

    // Construct with throwaway parameters, then overwrite every tensor.
    let mut rng = seeded_rng(0, stream::INIT);
    let mut model = DbVae::<f32>::new(config, &mut rng)?;
    let names = model.param_names();
    let shapes: Vec<Vec<usize>> = model.params().iter().map(|p| p.shape().to_vec()).collect();

    r.section = "parameter records";
    let count = r.u32()? as usize;
    if count != names.len() {
        return Err(Error::CheckpointCorrupt {
            detail: format!(
                "checkpoint holds {count} parameter records but the configured model has {}",
                names.len()
            ),
        });
    }
    for (name, shape) in names.iter().zip(&shapes) {
        let tensor = r.record(name, shape)?;
        model.set_param(name, tensor)?;
    }

    r.section = "optimizer state";
    let step = r.u64()?;
    let adam_config = AdamConfig {
        learning_rate: r.f64()?,
        beta1: r.f64()?,
        beta2: r.f64()?,
        epsilon: r.f64()?,
    };
    let mut m = Vec::with_capacity(count);
    for (name, shape) in names.iter().zip(&shapes) {
        m.push(r.record(name, shape)?);
    }
    let mut v = Vec::with_capacity(count);
    for (name, shape) in names.iter().zip(&shapes) {
        v.push(r.record(name, shape)?);
    }
    let mut adam = Adam::new(adam_config, &model.params())?;
    adam.restore(step, m, v)?;

    r.section = "rng seed";
    let seed = r.u64()?;
    if !r.is_empty() {
        return Err(Error::CheckpointCorrupt {
            detail: format!("{} trailing bytes after the rng seed", r.remaining()),
        });
    }
    Ok((model, adam, seed))
}

fn render_config(c: &ModelConfig) -> String {
    use std::fmt::Write;
    let filters = c
        .encoder_filters
        .iter()
        .map(|f| f.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let mut s = String::new();
    let w = &c.weights;
    // Display on f64 prints the shortest string that parses back to the
    // same bits, so the text block re-renders identically after a load.
    writeln!(s, "mode={}", c.mode).unwrap();
    writeln!(s, "image_side={}", c.image_side).unwrap();
    writeln!(s, "channels={}", c.channels).unwrap();
    writeln!(s, "num_categories={}", c.num_categories).unwrap();
    writeln!(s, "latent_dim={}", c.latent_dim).unwrap();
    writeln!(s, "encoder_filters={filters}").unwrap();
    writeln!(s, "dense_width={}", c.dense_width).unwrap();
    writeln!(s, "w_classification={}", w.classification).unwrap();
    writeln!(s, "w_vae={}", w.vae).unwrap();
    writeln!(s, "w_reconstruction={}", w.reconstruction).unwrap();
    writeln!(s, "w_kl={}", w.kl).unwrap();
    s
}

fn parse_config(text: &str) -> Result<ModelConfig> {
    fn corrupt(detail: String) -> Error {
        Error::CheckpointCorrupt { detail }
    }
    let mut mode = None;
    let mut image_side = None;
    let mut channels = None;
    let mut num_categories = None;
    let mut latent_dim = None;
    let mut encoder_filters = None;
    let mut dense_width = None;
    let mut weights = LossWeights::default();
    let mut seen_weights = [false; 4];

    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| corrupt(format!("config line {line:?} is not key=value")))?;
        let parse_usize = || {
            value
                .parse::<usize>()
                .map_err(|e| corrupt(format!("config key {key}: {e}")))
        };
        let parse_f64 = || {
            value
                .parse::<f64>()
                .map_err(|e| corrupt(format!("config key {key}: {e}")))
        };
        match key {
            "mode" => mode = Some(value.parse::<Mode>()?),
            "image_side" => image_side = Some(parse_usize()?),
            "channels" => channels = Some(parse_usize()?),
            "num_categories" => num_categories = Some(parse_usize()?),
            "latent_dim" => latent_dim = Some(parse_usize()?),
            "dense_width" => dense_width = Some(parse_usize()?),
            "encoder_filters" => {
                let filters = value
                    .split(',')
                    .map(|v| v.trim().parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| corrupt(format!("config key encoder_filters: {e}")))?;
                encoder_filters = Some(filters);
            }
            "w_classification" => {
                weights.classification = parse_f64()?;
                seen_weights[0] = true;
            }
            "w_vae" => {
                weights.vae = parse_f64()?;
                seen_weights[1] = true;
            }
            "w_reconstruction" => {
                weights.reconstruction = parse_f64()?;
                seen_weights[2] = true;
            }
            "w_kl" => {
                weights.kl = parse_f64()?;
                seen_weights[3] = true;
            }
            other => return Err(corrupt(format!("unknown config key {other:?}"))),
        }
    }

    let missing = |what: &str| corrupt(format!("config block is missing {what}"));
    if !seen_weights.iter().all(|&s| s) {
        return Err(missing("one of the loss weights"));
    }
    Ok(ModelConfig {
        mode: mode.ok_or_else(|| missing("mode"))?,
        image_side: image_side.ok_or_else(|| missing("image_side"))?,
        channels: channels.ok_or_else(|| missing("channels"))?,
        num_categories: num_categories.ok_or_else(|| missing("num_categories"))?,
        latent_dim: latent_dim.ok_or_else(|| missing("latent_dim"))?,
        encoder_filters: encoder_filters.ok_or_else(|| missing("encoder_filters"))?,
        dense_width: dense_width.ok_or_else(|| missing("dense_width"))?,
        weights,
    })
}

fn write_record(buf: &mut Vec<u8>, name: &str, tensor: &Tensor<f32>) {
    buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
    for &d in tensor.shape() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &x in tensor.data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self {
            buf,
            pos: 0,
            section: "header",
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::CheckpointTruncated {
                section: self.section.to_string(),
            });
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Read one tensor record, verifying its name and shape.
    fn record(&mut self, expected_name: &str, expected_shape: &[usize]) -> Result<Tensor<f32>> {
        let name_len = self.u32()? as usize;
        let name = std::str::from_utf8(self.take(name_len)?).map_err(|e| {
            Error::CheckpointCorrupt {
                detail: format!("record name is not UTF-8: {e}"),
            }
        })?;
        if name != expected_name {
            return Err(Error::CheckpointCorrupt {
                detail: format!("expected record {expected_name:?}, found {name:?}"),
            });
        }
        let rank = self.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32()? as usize);
        }
        if shape != expected_shape {
            return Err(Error::CheckpointCorrupt {
                detail: format!(
                    "record {expected_name:?} has shape {shape:?}, expected {expected_shape:?}"
                ),
            });
        }
        let len: usize = shape.iter().product();
        let payload = self.take(len * 4)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(shape, data)
    }

    fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}
