use ndarray::{s, Array2, Array3, Array4};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::filter::{classify, FilterPolicy, FilterVerdict};
use super::manifest::{DatasetManifest, ManifestEntry};
use super::raster::{load_image, resize_bilinear};
use crate::colorspace::{normalize, rgb_to_lab, RgbImage};
use crate::error::{Error, Result};

/// One preprocessed training example.
#[derive(Debug, Clone)]
pub struct Sample {
    /// `(S, S)` normalised lightness.
    pub l_n: Array2<f64>,
    /// `(2, S, S)` normalised chroma.
    pub ab: Array3<f64>,
    pub target: Vec<f64>,
}

/// A stack of samples in `NCHW` layout.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    /// `(B, 1, S, S)`
    pub l_n: Array4<f64>,
    /// `(B, 2, S, S)`
    pub ab_target: Array4<f64>,
    /// `(B, num_classes)`
    pub labels: Array2<f64>,
}

impl SampleBatch {
    pub fn batch_size(&self) -> usize {
        self.l_n.dim().0
    }

    pub fn image_size(&self) -> usize {
        self.l_n.dim().2
    }

    pub fn from_samples(samples: &[&Sample]) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::shape("empty batch"))?;
        let (h, w) = first.l_n.dim();
        let k = first.target.len();
        let b = samples.len();
        let mut l_n = Array4::zeros((b, 1, h, w));
        let mut ab_target = Array4::zeros((b, 2, h, w));
        let mut labels = Array2::zeros((b, k));
        for (i, smp) in samples.iter().enumerate() {
            if smp.l_n.dim() != (h, w) || smp.ab.dim() != (2, h, w) || smp.target.len() != k {
                return Err(Error::shape("samples in one batch differ in shape"));
            }
            l_n.slice_mut(s![i, 0, .., ..]).assign(&smp.l_n);
            ab_target.slice_mut(s![i, .., .., ..]).assign(&smp.ab);
            for (j, &t) in smp.target.iter().enumerate() {
                labels[[i, j]] = t;
            }
        }
        Ok(Self { l_n, ab_target, labels })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterStats {
    pub total: usize,
    pub rejected_grayscale: usize,
    pub rejected_low_chroma: usize,
    pub surviving: usize,
}

/// Applies the colour filter to every manifest entry. The result keeps the
/// manifest order.
pub fn filter_manifest(manifest: &DatasetManifest, policy: &FilterPolicy) -> Result<(DatasetManifest, FilterStats)> {
    policy.validate()?;
    let mut stats = FilterStats {
        total: manifest.len(),
        ..Default::default()
    };
    let mut kept = Vec::new();
    for entry in &manifest.entries {
        let img = load_image(&manifest.image_path(entry))?;
        match classify(&img, policy) {
            FilterVerdict::Keep => kept.push(entry.clone()),
            FilterVerdict::Grayscale => stats.rejected_grayscale += 1,
            FilterVerdict::LowChroma => stats.rejected_low_chroma += 1,
        }
    }
    stats.surviving = kept.len();
    Ok((manifest.with_entries(kept), stats))
}

pub fn preprocess(img: &RgbImage, image_size: usize, target: Vec<f64>) -> Sample {
    let resized = resize_bilinear(img, image_size, image_size);
    let norm = normalize(&rgb_to_lab(&resized));
    Sample {
        l_n: norm.l,
        ab: norm.ab,
        target,
    }
}

/// Filtered, preprocessed training set held in memory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub stats: FilterStats,
    pub image_size: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn prepare(manifest: &DatasetManifest, policy: &FilterPolicy, image_size: usize) -> Result<Self> {
        manifest.validate()?;
        policy.validate()?;
        if image_size == 0 {
            return Err(Error::config("image size must be positive"));
        }
        let mut stats = FilterStats {
            total: manifest.len(),
            ..Default::default()
        };
        let mut kept: Vec<ManifestEntry> = Vec::new();
        let mut samples = Vec::new();
        for entry in &manifest.entries {
            let img = load_image(&manifest.image_path(entry))?;
            match classify(&img, policy) {
                FilterVerdict::Keep => {
                    samples.push(preprocess(&img, image_size, entry.label.target(manifest.num_classes)));
                    kept.push(entry.clone());
                }
                FilterVerdict::Grayscale => stats.rejected_grayscale += 1,
                FilterVerdict::LowChroma => stats.rejected_low_chroma += 1,
            }
        }
        stats.surviving = kept.len();
        if kept.is_empty() {
            return Err(Error::EmptyDataset(format!(
                "all {} images were rejected by the colour filter",
                stats.total
            )));
        }
        Ok(Self {
            manifest: manifest.with_entries(kept),
            stats,
            image_size,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn steps_per_epoch(&self, batch_size: usize) -> usize {
        self.samples.len() / batch_size.max(1)
    }

    /// Sample order for `epoch`: a seeded shuffle, independent of any
    /// previous epoch.
    pub fn epoch_order(&self, seed: u64, epoch: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch as u64 + 1);
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        order.shuffle(&mut rng);
        order
    }
}

/// Iterator over the full batches of one epoch; the trailing partial batch
/// is dropped.
pub struct BatchIter<'a> {
    dataset: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

impl Iterator for BatchIter<'_> {
    type Item = Result<SampleBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        let end = self.next + self.batch_size;
        if end > self.order.len() {
            return None;
        }
        let picked: Vec<&Sample> = self.order[self.next..end]
            .iter()
            .map(|&i| &self.dataset.samples[i])
            .collect();
        self.next = end;
        Some(SampleBatch::from_samples(&picked))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.order.len() - self.next) / self.batch_size;
        (n, Some(n))
    }
}

pub fn make_batches(dataset: &Dataset, batch_size: usize, seed: u64, epoch: usize) -> Result<BatchIter<'_>> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    Ok(BatchIter {
        dataset,
        order: dataset.epoch_order(seed, epoch),
        batch_size,
        next: 0,
    })
}
