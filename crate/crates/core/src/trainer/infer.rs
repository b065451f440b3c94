use std::path::Path;

use ndarray::{s, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::state::CheckpointMeta;
use crate::colorspace::{merge_luminance_chroma, normalize_lightness, rgb_to_lab, RgbImage};
use crate::dataio::{load_image, resize_bilinear, DatasetManifest};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_set, MetricReport};
use crate::networks::{Archive, GeneratorNet, Mode};

/// Generator restored from a checkpoint, run in evaluation mode.
#[derive(Debug, Clone)]
pub struct Colorizer {
    generator: GeneratorNet,
}

impl Colorizer {
    pub fn from_archive(archive: &Archive) -> Result<Self> {
        let meta = CheckpointMeta::parse(archive)?;
        meta.config.network.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut generator = GeneratorNet::new(&meta.config.network, meta.num_classes, &mut rng)?;
        archive.load_module("generator", &mut generator)?;
        Ok(Self { generator })
    }

    pub fn load(checkpoint: &Path) -> Result<Self> {
        Self::from_archive(&Archive::read(checkpoint)?)
    }

    pub fn from_generator(generator: GeneratorNet) -> Self {
        Self { generator }
    }

    pub fn image_size(&self) -> usize {
        self.generator.image_size()
    }

    /// Colourizes the lightness of `image` (any colour content is
    /// discarded) and returns an image of the same dimensions.
    pub fn colorize(&mut self, image: &RgbImage) -> Result<RgbImage> {
        let (h, w) = (image.height(), image.width());
        if h == 0 || w == 0 {
            return Err(Error::shape("cannot colourize an empty image"));
        }
        let size = self.image_size();
        let lab = rgb_to_lab(&resize_bilinear(image, size, size));
        let mut l_n = Array4::zeros((1, 1, size, size));
        l_n.slice_mut(s![0, 0, .., ..]).assign(&lab.l.mapv(normalize_lightness));
        // eval mode never draws from the rng
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.generator.forward(&l_n, Mode::Eval, &mut rng)?;
        let merged = merge_luminance_chroma(lab.l.view(), out.ab.slice(s![0, .., .., ..]))?;
        Ok(resize_bilinear(&merged, h, w))
    }
}

/// Loads `checkpoint` and colourizes one image.
pub fn colorize(checkpoint: &Path, image: &RgbImage) -> Result<RgbImage> {
    Colorizer::load(checkpoint)?.colorize(image)
}

/// Colourizes every image of `manifest` from its own lightness and scores
/// the result against the original.
pub fn evaluate_manifest(colorizer: &mut Colorizer, manifest: &DatasetManifest) -> Result<MetricReport> {
    if manifest.is_empty() {
        return Err(Error::EmptyDataset("evaluation split has no images".into()));
    }
    let mut pairs = Vec::with_capacity(manifest.len());
    for entry in &manifest.entries {
        let truth = load_image(&manifest.image_path(entry))?;
        pairs.push((colorizer.colorize(&truth)?, truth));
    }
    evaluate_set(&pairs)
}
