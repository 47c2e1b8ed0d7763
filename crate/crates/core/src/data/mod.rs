//! Dataset ingestion and splitting.
//!
//! A corpus on disk is `<root>/<category>/*.pgm` with exactly the eight
//! canonical category directories ([`CATEGORY_NAMES`]). Loading parses
//! each binary PGM, resizes to 64×64 (bilinear, corner-aligned) and
//! normalizes to `[0, 1]`; ordering is lexicographic by category then
//! filename, so two loads of the same corpus are identical.
//!
//! Splitting is stratified: each category contributes exactly
//! `max(1, round_half_up(fraction·n))` validation samples, drawn
//! uniformly per category from the seeded `split` stream. The split
//! depends only on the labels and the seed — never on image content or
//! on any model — so paired experiments can share partitions exactly.

pub mod pgm;
pub mod resize;
pub mod synthetic;

use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{io_error, Error, Result};
use crate::rng::{seeded_rng, stream};
use crate::tensor::Tensor;

/// Canonical category order, most to least frequent in the reference
/// corpus. Every table, report and confusion matrix uses this order.
pub const CATEGORY_NAMES: [&str; 8] = [
    "happiness",
    "sadness",
    "neutrality",
    "anger",
    "surprise",
    "fear",
    "disgust",
    "contempt",
];

/// Number of categories (fixed by the corpus contract).
pub const NUM_CATEGORIES: usize = CATEGORY_NAMES.len();

/// Image side length after ingestion.
pub const IMAGE_SIDE: usize = 64;

/// An in-memory corpus: images as one `[n, 1, 64, 64]` tensor in
/// `[0, 1]`, plus per-image category labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Tensor<f32>,
    labels: Vec<usize>,
}

impl Dataset {
    /// Wrap images and labels, validating the [`Dataset`] invariants:
    /// equal lengths, labels < 8, pixel values finite in `[0, 1]`.
    pub fn new(images: Tensor<f32>, labels: Vec<usize>) -> Result<Self> {
        let shape = images.shape().to_vec();
        let n = labels.len();
        if shape != [n, 1, IMAGE_SIDE, IMAGE_SIDE] {
            return Err(Error::ShapeMismatch {
                context: "dataset images",
                expected: vec![n, 1, IMAGE_SIDE, IMAGE_SIDE],
                actual: shape,
            });
        }
        for (index, &label) in labels.iter().enumerate() {
            if label >= NUM_CATEGORIES {
                return Err(Error::LabelOutOfRange {
                    index,
                    value: label,
                    limit: NUM_CATEGORIES,
                });
            }
        }
        if !images.data().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) {
            return Err(Error::InvalidConfig(
                "dataset pixels must be finite values in [0, 1]".into(),
            ));
        }
        Ok(Self { images, labels })
    }

    /// Number of images.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// True when the dataset holds no images.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// All labels, image-aligned.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// The full image tensor, `[n, 1, 64, 64]`.
    pub fn images(&self) -> &Tensor<f32> {
        &self.images
    }

    /// Pixels of image `i` (4096 values, row-major).
    pub fn image(&self, i: usize) -> &[f32] {
        let px = IMAGE_SIDE * IMAGE_SIDE;
        &self.images.data()[i * px..(i + 1) * px]
    }

    /// Copy the given images into a `[b, 1, 64, 64]` batch tensor with
    /// aligned labels. Indices may repeat (sampling with replacement).
    pub fn gather(&self, indices: &[usize]) -> (Tensor<f32>, Vec<usize>) {
        let px = IMAGE_SIDE * IMAGE_SIDE;
        let mut data = Vec::with_capacity(indices.len() * px);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        let images = Tensor::new(vec![indices.len(), 1, IMAGE_SIDE, IMAGE_SIDE], data)
            .expect("gather length matches shape");
        (images, labels)
    }

    /// A new dataset holding the given images (used by splitting).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let (images, labels) = self.gather(indices);
        Dataset { images, labels }
    }

    /// Per-category counts and percentages of this dataset.
    pub fn class_distribution(&self) -> Result<Vec<CategoryShare>> {
        class_distribution(&self.labels)
    }
}

/// One row of a class-distribution table.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryShare {
    pub name: &'static str,
    pub count: usize,
    /// Share of the total in percent, rounded to two decimals.
    pub percent: f64,
}

/// Count labels per category and express each as a percentage of the
/// total (two-decimal precision, the table convention).
pub fn class_distribution(labels: &[usize]) -> Result<Vec<CategoryShare>> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset {
            detail: "class distribution of zero samples".into(),
        });
    }
    let mut counts = [0usize; NUM_CATEGORIES];
    for (index, &label) in labels.iter().enumerate() {
        if label >= NUM_CATEGORIES {
            return Err(Error::LabelOutOfRange {
                index,
                value: label,
                limit: NUM_CATEGORIES,
            });
        }
        counts[label] += 1;
    }
    let total = labels.len() as f64;
    Ok(CATEGORY_NAMES
        .iter()
        .zip(counts)
        .map(|(&name, count)| CategoryShare {
            name,
            count,
            percent: (100.0 * count as f64 / total * 100.0).round() / 100.0,
        })
        .collect())
}

/// Validation size for a category of `n` samples: round-half-up of
/// `fraction·n`, floored at 1 so no category ever vanishes from the
/// validation set.
pub fn validation_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64 + 0.5).floor() as usize).max(1)
}

/// Split labels into (train, val) index lists, stratified per category.
///
/// Each category's indices are shuffled by the `split` stream of `seed`
/// and the first [`validation_count`] go to validation. Index lists are
/// returned sorted. Every category needs ≥ 2 samples (one for each
/// side).
pub fn stratified_indices(labels: &[usize], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::BadFraction { fraction });
    }
    let mut per_category: Vec<Vec<usize>> = vec![Vec::new(); NUM_CATEGORIES];
    for (index, &label) in labels.iter().enumerate() {
        if label >= NUM_CATEGORIES {
            return Err(Error::LabelOutOfRange {
                index,
                value: label,
                limit: NUM_CATEGORIES,
            });
        }
        per_category[label].push(index);
    }
    for (cat, members) in per_category.iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::CategoryTooSmall {
                name: CATEGORY_NAMES[cat].to_string(),
                count: members.len(),
                minimum: 2,
            });
        }
    }

    let mut rng = seeded_rng(seed, stream::SPLIT);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for members in &mut per_category {
        members.shuffle(&mut rng);
        let n_val = validation_count(members.len(), fraction);
        val.extend_from_slice(&members[..n_val]);
        train.extend_from_slice(&members[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// Split a dataset into (train, val) datasets; see [`stratified_indices`].
pub fn stratified_split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, val) = stratified_indices(dataset.labels(), fraction, seed)?;
    Ok((dataset.subset(&train), dataset.subset(&val)))
}

/// Load a corpus from `<root>/<category>/*.pgm`.
///
/// All eight category directories must exist. Files are read in
/// lexicographic filename order within each category, parsed as binary
/// PGM, resized to 64×64 and normalized to `[0, 1]`.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let mut data: Vec<f32> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();

    for (cat, name) in CATEGORY_NAMES.iter().enumerate() {
        let dir = root.join(name);
        if !dir.is_dir() {
            return Err(Error::MissingCategoryDir { path: dir });
        }
        let mut files: Vec<std::path::PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| io_error(&dir, e))?
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| io_error(&dir, e))?
            .into_iter()
            .map(|entry| entry.path())
            .filter(|p| p.extension().is_some_and(|ext| ext == "pgm"))
            .collect();
        files.sort();

        for path in files {
            let img = pgm::read_pgm(&path)?;
            let floats: Vec<f32> = img.pixels.iter().map(|&b| f32::from(b) / 255.0).collect();
            let resized = resize::resize_bilinear(&floats, img.height, img.width, IMAGE_SIDE, IMAGE_SIDE)?;
            data.extend_from_slice(&resized);
            labels.push(cat);
        }
    }

    if labels.is_empty() {
        return Err(Error::EmptyDataset {
            detail: format!("no .pgm files under {}", root.display()),
        });
    }
    let images = Tensor::new(vec![labels.len(), 1, IMAGE_SIDE, IMAGE_SIDE], data)
        .expect("loaded pixel count matches image count");
    Dataset::new(images, labels)
}
