use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{parse_idx, DataError, IdxTensor};
use crate::autodiff::{kernels, Tensor};
use crate::metrics::ModeSpec;

/// Seed of the fixed pixel-to-feature projection.
pub const PROJECTION_SEED: u64 = 0x5EED_0064;
pub const FEATURE_DIM: usize = 64;

/// `x -> (x/255 - 0.5)/0.5`
pub fn normalize_pixel(x: u8) -> f64 {
    (f64::from(x) / 255.0 - 0.5) / 0.5
}

/// Inverse of [`normalize_pixel`], rounding to the nearest byte and clamping.
pub fn denormalize_pixel(v: f64) -> u8 {
    let x = ((v * 0.5 + 0.5) * 255.0).round();
    if x.is_nan() {
        0
    } else {
        x.clamp(0.0, 255.0) as u8
    }
}

/// Maps a u8 image tensor `[n, ...]` to a real `[n, pixels]` tensor in [-1, 1].
pub fn normalize_images(pixels: &IdxTensor) -> Result<Tensor, DataError> {
    let bytes = pixels.as_u8().ok_or(DataError::NotU8(pixels.element_type()))?;
    let n = pixels.shape()[0];
    let per: usize = pixels.shape()[1..].iter().product();
    Ok(Tensor::new(vec![n, per], bytes.iter().map(|&b| normalize_pixel(b)).collect())?)
}

pub fn denormalize_images(values: &Tensor) -> Vec<u8> {
    values.data().iter().map(|&v| denormalize_pixel(v)).collect()
}

/// Fixed Gaussian projection of flattened pixels to a low-dimensional feature space.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomProjection {
    /// `[out, in]`, entries `N(0, 1/in)`.
    weight: Tensor,
}

impl RandomProjection {
    pub fn new(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (input_dim as f64).sqrt();
        let weight = Tensor::from_fn(&[output_dim, input_dim], |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        });
        Self { weight }
    }

    pub fn standard(input_dim: usize) -> Self {
        Self::new(input_dim, FEATURE_DIM, PROJECTION_SEED)
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn project(&self, x: &Tensor) -> Result<Tensor, DataError> {
        let (n, d) = x.dims2()?;
        if d != self.input_dim() {
            return Err(DataError::InvalidSpec(format!(
                "projection expects {} inputs, got {d}",
                self.input_dim()
            )));
        }
        let out = self.output_dim();
        let data = kernels::matmul_nt(x.data(), self.weight.data(), n, d, out);
        Ok(Tensor::new(vec![n, out], data)?)
    }
}

/// Normalized images with labels and a projected-feature classifier.
#[derive(Clone, Debug)]
pub struct ImageDataset {
    images: Tensor,
    labels: Vec<u8>,
    side: (usize, usize),
    projection: RandomProjection,
}

impl ImageDataset {
    pub fn from_idx(images: &IdxTensor, labels: &IdxTensor) -> Result<Self, DataError> {
        if images.shape().len() != 3 {
            return Err(DataError::Dataset(format!(
                "image file must have shape [n, rows, cols], got {:?}",
                images.shape()
            )));
        }
        let label_bytes = labels.as_u8().ok_or(DataError::NotU8(labels.element_type()))?;
        if labels.shape() != [images.shape()[0]] {
            return Err(DataError::Dataset(format!(
                "label file shape {:?} does not match {} images",
                labels.shape(),
                images.shape()[0]
            )));
        }
        let normalized = normalize_images(images)?;
        let projection = RandomProjection::standard(normalized.shape()[1]);
        let ds = Self {
            images: normalized,
            labels: label_bytes.to_vec(),
            side: (images.shape()[1], images.shape()[2]),
            projection,
        };
        if ds.classes().len() < 2 {
            return Err(DataError::Dataset("need images from at least 2 classes".into()));
        }
        Ok(ds)
    }

    pub fn load(images: &Path, labels: &Path) -> Result<Self, DataError> {
        let read = |p: &Path| {
            std::fs::read(p).map_err(|e| DataError::Io {
                path: p.display().to_string(),
                message: e.to_string(),
            })
        };
        let imgs = parse_idx(&read(images)?)?;
        let labs = parse_idx(&read(labels)?)?;
        Self::from_idx(&imgs, &labs)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixel_dim(&self) -> usize {
        self.images.shape()[1]
    }

    pub fn side(&self) -> (usize, usize) {
        self.side
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn classes(&self) -> Vec<u8> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn projection(&self) -> &RandomProjection {
        &self.projection
    }

    /// Uniform draws with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Tensor, DataError> {
        if n == 0 {
            return Err(DataError::EmptyRequest);
        }
        let d = self.pixel_dim();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            let i = rng.random_range(0..self.len());
            data.extend_from_slice(self.images.row(i));
        }
        Ok(Tensor::new(vec![n, d], data)?)
    }

    /// Class centroids in feature space, with the pooled within-class
    /// per-dimension standard deviation as the mode width.
    pub fn mode_spec(&self, quality_radius: f64) -> Result<ModeSpec, DataError> {
        let feats = self.projection.project(&self.images)?;
        let d = feats.shape()[1];
        let classes = self.classes();
        let mut centers = vec![vec![0.0; d]; classes.len()];
        let mut counts = vec![0usize; classes.len()];
        let slot = |label: u8| classes.binary_search(&label).expect("label listed");
        for (i, &l) in self.labels.iter().enumerate() {
            let k = slot(l);
            counts[k] += 1;
            for (c, v) in centers[k].iter_mut().zip(feats.row(i)) {
                *c += v;
            }
        }
        for (c, &n) in centers.iter_mut().zip(&counts) {
            c.iter_mut().for_each(|v| *v /= n as f64);
        }
        let mut spread = 0.0;
        for (i, &l) in self.labels.iter().enumerate() {
            let c = &centers[slot(l)];
            spread += feats.row(i).iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        let std = (spread / (self.len() * d) as f64).sqrt().max(1e-6);
        Ok(ModeSpec::new(centers, std, quality_radius)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{serialize_idx, IdxData};

    #[test]
    fn normalization_values() {
        assert_eq!(normalize_pixel(255), 1.0);
        assert_eq!(normalize_pixel(0), -1.0);
        assert!((normalize_pixel(128) - 0.00392156862745098).abs() < 1e-15);
        for b in 0..=255u8 {
            assert_eq!(denormalize_pixel(normalize_pixel(b)), b);
        }
        assert_eq!(denormalize_pixel(7.0), 255);
        assert_eq!(denormalize_pixel(f64::NAN), 0);
    }

    fn tiny_dataset() -> (IdxTensor, IdxTensor) {
        let n = 20;
        let pixels: Vec<u8> = (0..n * 16)
            .map(|i| if (i / 16) % 2 == 0 { (i % 16 * 16) as u8 } else { 255 - (i % 16 * 16) as u8 })
            .collect();
        let images = IdxTensor::new(vec![n, 4, 4], IdxData::U8(pixels)).unwrap();
        let labels = IdxTensor::new(vec![n], IdxData::U8((0..n).map(|i| (i % 2) as u8).collect())).unwrap();
        (images, labels)
    }

    #[test]
    fn dataset_loads_and_samples() {
        let (images, labels) = tiny_dataset();
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img.idx");
        let lp = dir.path().join("lab.idx");
        std::fs::write(&ip, serialize_idx(&images)).unwrap();
        std::fs::write(&lp, serialize_idx(&labels)).unwrap();
        let ds = ImageDataset::load(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 20);
        assert_eq!(ds.pixel_dim(), 16);
        assert_eq!(ds.classes(), vec![0, 1]);
        let spec = ds.mode_spec(3.0).unwrap();
        assert_eq!(spec.modes(), 2);
        assert_eq!(spec.dim(), FEATURE_DIM);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = ds.sample(5, &mut rng).unwrap();
        assert_eq!(x.shape(), &[5, 16]);
        assert!(x.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        let feats = ds.projection().project(&x).unwrap();
        assert_eq!(feats.shape(), &[5, FEATURE_DIM]);
    }

    #[test]
    fn mismatched_labels_rejected() {
        let (images, _) = tiny_dataset();
        let labels = IdxTensor::new(vec![3], IdxData::U8(vec![0, 1, 0])).unwrap();
        assert!(matches!(ImageDataset::from_idx(&images, &labels), Err(DataError::Dataset(_))));
        let one_class = IdxTensor::new(vec![20], IdxData::U8(vec![4; 20])).unwrap();
        assert!(ImageDataset::from_idx(&images, &one_class).is_err());
    }

    #[test]
    fn projection_fixed_by_seed() {
        assert_eq!(RandomProjection::standard(10), RandomProjection::standard(10));
        assert_ne!(RandomProjection::new(10, 4, 1), RandomProjection::new(10, 4, 2));
    }
}
