//! Procedural "glyph face" corpus generator.
//!
//! Every image is a 64×64 grayscale face: a common oval outline with
//! eyes and brows, plus one category-specific feature (mouth shape,
//! brow angle, nose wrinkle…). Intra-category variation comes from a
//! seeded translation jitter and per-pixel Gaussian noise, so the
//! classes are cleanly learnable while remaining non-trivial.
//!
//! Rendering is deterministic: each image draws from its own labelled
//! RNG stream derived from `(seed, category, index)`, so a corpus is
//! byte-identical across runs and independent of generation order.
//! Default per-category counts preserve the heavy 69:1 imbalance of
//! the reference corpus at desk scale.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{CATEGORY_NAMES, IMAGE_SIDE, NUM_CATEGORIES};
use crate::error::{io_error, Error, Result};
use crate::rng::seeded_rng;

/// Default per-category image counts (sum 3,286), most to least
/// frequent: happiness … contempt. One tenth of the reference corpus.
pub const DEFAULT_COUNTS: [usize; NUM_CATEGORIES] = [905, 540, 507, 473, 423, 345, 80, 13];

/// Parameters of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Images per category, in canonical category order.
    pub counts: [usize; NUM_CATEGORIES],
    /// Standard deviation of the per-pixel Gaussian noise (gray units,
    /// image range is [0, 1]).
    pub noise: f64,
    /// Maximum |translation| of the whole glyph, in pixels, drawn
    /// uniformly per image on each axis.
    pub jitter: u32,
    /// Base seed of the rendering streams.
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            counts: DEFAULT_COUNTS,
            noise: 0.02,
            jitter: 4,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Validate ranges: counts ≥ 1, noise in [0, 1], jitter ≤ 8 (the
    /// glyph must stay inside the canvas).
    pub fn validate(&self) -> Result<()> {
        for (i, &c) in self.counts.iter().enumerate() {
            if c == 0 {
                return Err(Error::InvalidConfig(format!(
                    "synthetic count for {:?} must be >= 1",
                    CATEGORY_NAMES[i]
                )));
            }
        }
        if !self.noise.is_finite() || !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::InvalidConfig(format!(
                "noise must lie in [0, 1], got {}",
                self.noise
            )));
        }
        if self.jitter > 8 {
            return Err(Error::InvalidConfig(format!(
                "jitter must be <= 8 pixels, got {}",
                self.jitter
            )));
        }
        Ok(())
    }

    /// Total images across all categories.
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

// ─── rasterization ──────────────────────────────────────────────────

const SIDE: usize = IMAGE_SIDE;
const BACKGROUND: f32 = 0.10;
const STROKE: f32 = 0.85;

/// Stamp a soft-edged disc, max-blending onto the canvas.
fn disc(canvas: &mut [f32], cx: f32, cy: f32, r: f32, v: f32) {
    let x0 = (cx - r - 1.0).floor().max(0.0) as usize;
    let x1 = ((cx + r + 1.0).ceil() as usize).min(SIDE - 1);
    let y0 = (cy - r - 1.0).floor().max(0.0) as usize;
    let y1 = ((cy + r + 1.0).ceil() as usize).min(SIDE - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let d = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt();
            let cov = (r + 0.5 - d).clamp(0.0, 1.0);
            if cov > 0.0 {
                let cell = &mut canvas[y * SIDE + x];
                *cell = cell.max(v * cov);
            }
        }
    }
}

/// Stroke a straight segment by stamping discs along it.
fn stroke(canvas: &mut [f32], a: (f32, f32), b: (f32, f32), width: f32, v: f32) {
    let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt().max(1e-6);
    let steps = (len / 0.3).ceil() as usize;
    for s in 0..=steps {
        let t = s as f32 / steps as f32;
        disc(canvas, a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t, width, v);
    }
}

/// Stroke a quadratic Bézier arc (mouths, arched brows).
fn arc(canvas: &mut [f32], p0: (f32, f32), ctrl: (f32, f32), p1: (f32, f32), width: f32, v: f32) {
    let steps = 48;
    for s in 0..=steps {
        let t = s as f32 / steps as f32;
        let u = 1.0 - t;
        let x = u * u * p0.0 + 2.0 * u * t * ctrl.0 + t * t * p1.0;
        let y = u * u * p0.1 + 2.0 * u * t * ctrl.1 + t * t * p1.1;
        disc(canvas, x, y, width, v);
    }
}

/// Stroke an axis-aligned ellipse outline.
fn ellipse_ring(canvas: &mut [f32], cx: f32, cy: f32, rx: f32, ry: f32, width: f32, v: f32) {
    let steps = 360;
    for s in 0..steps {
        let t = s as f32 / steps as f32 * std::f32::consts::TAU;
        disc(canvas, cx + rx * t.cos(), cy + ry * t.sin(), width, v);
    }
}

/// Render the noise-free glyph for `category` translated by (dx, dy).
fn render_glyph(category: usize, dx: f32, dy: f32) -> Vec<f32> {
    let mut canvas = vec![BACKGROUND; SIDE * SIDE];
    let c = &mut canvas;
    let (cx, cy) = (32.0 + dx, 32.0 + dy);

    // Common parts: face outline and eyes.
    ellipse_ring(c, cx, cy, 20.0, 24.0, 0.9, STROKE);
    let wide_eyes = matches!(category, 4 | 5); // surprise, fear
    let eye_r = if wide_eyes { 3.0 } else { 2.0 };
    disc(c, cx - 9.0, cy - 8.0, eye_r, STROKE);
    disc(c, cx + 9.0, cy - 8.0, eye_r, STROKE);

    // Brows.
    match category {
        3 => {
            // anger: V-brows, inner ends pulled down toward the nose
            stroke(c, (cx - 13.0, cy - 16.0), (cx - 4.0, cy - 12.0), 0.8, STROKE);
            stroke(c, (cx + 4.0, cy - 12.0), (cx + 13.0, cy - 16.0), 0.8, STROKE);
        }
        5 => {
            // fear: raised, arched brows
            arc(c, (cx - 13.0, cy - 14.0), (cx - 9.0, cy - 19.0), (cx - 4.0, cy - 14.0), 0.8, STROKE);
            arc(c, (cx + 4.0, cy - 14.0), (cx + 9.0, cy - 19.0), (cx + 13.0, cy - 14.0), 0.8, STROKE);
        }
        4 => {
            // surprise: straight brows lifted high
            stroke(c, (cx - 13.0, cy - 16.0), (cx - 4.0, cy - 16.0), 0.8, STROKE);
            stroke(c, (cx + 4.0, cy - 16.0), (cx + 13.0, cy - 16.0), 0.8, STROKE);
        }
        _ => {
            stroke(c, (cx - 13.0, cy - 13.0), (cx - 4.0, cy - 13.0), 0.8, STROKE);
            stroke(c, (cx + 4.0, cy - 13.0), (cx + 13.0, cy - 13.0), 0.8, STROKE);
        }
    }

    // Mouth (and the odd extra feature).
    match category {
        0 => {
            // happiness: upturned arc
            arc(c, (cx - 8.0, cy + 8.0), (cx, cy + 16.0), (cx + 8.0, cy + 8.0), 0.9, STROKE);
        }
        1 => {
            // sadness: downturned arc
            arc(c, (cx - 8.0, cy + 13.0), (cx, cy + 5.0), (cx + 8.0, cy + 13.0), 0.9, STROKE);
        }
        2 | 3 => {
            // neutrality and anger: flat mouth (anger differs by brows)
            stroke(c, (cx - 7.0, cy + 10.0), (cx + 7.0, cy + 10.0), 0.9, STROKE);
        }
        4 => {
            // surprise: open circular mouth (outline)
            ellipse_ring(c, cx, cy + 10.0, 4.0, 4.5, 0.8, STROKE);
        }
        5 => {
            // fear: open mouth, filled
            disc(c, cx, cy + 10.0, 3.5, STROKE);
        }
        6 => {
            // disgust: flat mouth plus a one-sided nose wrinkle
            stroke(c, (cx - 7.0, cy + 10.0), (cx + 7.0, cy + 10.0), 0.9, STROKE);
            stroke(c, (cx - 6.0, cy + 1.0), (cx - 1.0, cy - 1.0), 0.7, STROKE);
            stroke(c, (cx - 6.0, cy + 4.0), (cx - 1.0, cy + 2.0), 0.7, STROKE);
        }
        _ => {
            // contempt: mouth flat on the left, raised on the right
            stroke(c, (cx - 7.0, cy + 11.0), (cx + 2.0, cy + 11.0), 0.9, STROKE);
            stroke(c, (cx + 2.0, cy + 11.0), (cx + 7.0, cy + 7.0), 0.9, STROKE);
        }
    }

    canvas
}

/// Render one corpus image as 8-bit pixels. Deterministic in
/// `(spec.seed, category, index)` alone.
pub fn render_image(spec: &SyntheticSpec, category: usize, index: usize) -> Result<Vec<u8>> {
    if category >= NUM_CATEGORIES {
        return Err(Error::LabelOutOfRange {
            index,
            value: category,
            limit: NUM_CATEGORIES,
        });
    }
    let mut rng = seeded_rng(spec.seed, &format!("synthetic/{category}/{index}"));
    let j = spec.jitter as i64;
    let dx = rng.random_range(-j..=j) as f32;
    let dy = rng.random_range(-j..=j) as f32;
    let mut canvas = render_glyph(category, dx, dy);
    if spec.noise > 0.0 {
        for v in &mut canvas {
            let n: f64 = rng.sample(rand_distr::StandardNormal);
            *v = (*v as f64 + spec.noise * n) as f32;
        }
    }
    Ok(canvas
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect())
}

/// Generate a corpus under `out`: one directory per category holding
/// `counts[k]` PGM files named `00000.pgm`, `00001.pgm`, …, plus a
/// `manifest.json` recording the spec. Returns the total image count.
pub fn generate_synthetic(spec: &SyntheticSpec, out: &Path) -> Result<usize> {
    spec.validate()?;
    for (cat, name) in CATEGORY_NAMES.iter().enumerate() {
        let dir = out.join(name);
        std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        for index in 0..spec.counts[cat] {
            let pixels = render_image(spec, cat, index)?;
            let path = dir.join(format!("{index:05}.pgm"));
            super::pgm::write_pgm(&path, SIDE, SIDE, &pixels)?;
        }
    }

    // The manifest is written last: its presence marks a complete corpus.
    #[derive(Serialize)]
    struct Manifest<'a> {
        side: usize,
        total: usize,
        categories: [&'static str; NUM_CATEGORIES],
        spec: &'a SyntheticSpec,
    }
    let manifest = serde_json::to_string_pretty(&Manifest {
        side: SIDE,
        total: spec.total(),
        categories: CATEGORY_NAMES,
        spec,
    })
    .expect("manifest serializes");
    let path = out.join("manifest.json");
    std::fs::write(&path, manifest).map_err(|e| io_error(&path, e))?;
    Ok(spec.total())
}
