use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::autodiff::Tensor;
use crate::metrics::ModeSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    Ring8,
    Grid25,
    Spiral,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 3] = [SyntheticKind::Ring8, SyntheticKind::Grid25, SyntheticKind::Spiral];

    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::Ring8 => "ring8",
            SyntheticKind::Grid25 => "grid25",
            SyntheticKind::Spiral => "spiral",
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyntheticKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SyntheticKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| DataError::InvalidSpec(format!("unknown synthetic kind {s:?}; valid: ring8, grid25, spiral")))
    }
}

pub const SPIRAL_MODES: usize = 12;

/// A 2-D Gaussian mixture with equally weighted modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    /// Ring radius, grid half-extent or outer spiral radius.
    pub scale: f64,
    pub std: f64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, scale: f64, std: f64) -> Result<Self, DataError> {
        let spec = Self { kind, scale, std };
        spec.validate()?;
        Ok(spec)
    }

    pub fn ring8(radius: f64, std: f64) -> Result<Self, DataError> {
        Self::new(SyntheticKind::Ring8, radius, std)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.std > 0.0 && self.std.is_finite()) {
            return Err(DataError::InvalidSpec(format!("mode std must be positive, got {}", self.std)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(DataError::InvalidSpec(format!("scale must be positive, got {}", self.scale)));
        }
        Ok(())
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        match self.kind {
            SyntheticKind::Ring8 => (0..8)
                .map(|k| {
                    let a = TAU * k as f64 / 8.0;
                    [self.scale * a.cos(), self.scale * a.sin()]
                })
                .collect(),
            SyntheticKind::Grid25 => {
                let step = self.scale / 2.0;
                let mut out = Vec::with_capacity(25);
                for i in -2i32..=2 {
                    for j in -2i32..=2 {
                        out.push([step * i as f64, step * j as f64]);
                    }
                }
                out
            }
            SyntheticKind::Spiral => {
                // Archimedean spiral r = scale * theta / theta_max
                let (start, end) = (PI / 2.0, 3.0 * PI);
                (0..SPIRAL_MODES)
                    .map(|k| {
                        let t = start + (end - start) * k as f64 / (SPIRAL_MODES - 1) as f64;
                        let r = self.scale * t / end;
                        [r * t.cos(), r * t.sin()]
                    })
                    .collect()
            }
        }
    }

    pub fn mode_spec(&self, quality_radius: f64) -> Result<ModeSpec, DataError> {
        let centers = self.centers().iter().map(|c| c.to_vec()).collect();
        Ok(ModeSpec::new(centers, self.std, quality_radius)?)
    }
}

/// Draws `n` points: a uniformly chosen center plus isotropic noise.
pub fn sample_real<R: Rng + ?Sized>(spec: &SyntheticSpec, n: usize, rng: &mut R) -> Result<Tensor, DataError> {
    spec.validate()?;
    if n == 0 {
        return Err(DataError::EmptyRequest);
    }
    let centers = spec.centers();
    let mut data = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let c = centers[rng.random_range(0..centers.len())];
        for v in c {
            let z: f64 = StandardNormal.sample(rng);
            data.push(v + spec.std * z);
        }
    }
    Ok(Tensor::new(vec![n, 2], data)?)
}

/// `n x dim` standard normal draws.
pub fn sample_latent<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Result<Tensor, DataError> {
    if n == 0 || dim == 0 {
        return Err(DataError::EmptyRequest);
    }
    Ok(Tensor::from_fn(&[n, dim], |_| StandardNormal.sample(rng)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{RngStream, Substream};

    #[test]
    fn ring_geometry_in_small_std_limit() {
        let spec = SyntheticSpec::ring8(2.0, 1e-12).unwrap();
        let centers = spec.centers();
        for (k, c) in centers.iter().enumerate() {
            let a = TAU * k as f64 / 8.0;
            assert_eq!(*c, [2.0 * a.cos(), 2.0 * a.sin()]);
        }
        let x = sample_real(&spec, 500, &mut RngStream::new(1, Substream::Data)).unwrap();
        for i in 0..500 {
            let r = x.row(i);
            let near = centers.iter().map(|c| ((r[0] - c[0]).powi(2) + (r[1] - c[1]).powi(2)).sqrt()).fold(f64::INFINITY, f64::min);
            assert!(near < 1e-9);
        }
    }

    #[test]
    fn ring_modes_are_balanced() {
        let spec = SyntheticSpec::ring8(2.0, 0.02).unwrap();
        let x = sample_real(&spec, 10_000, &mut RngStream::new(5, Substream::Data)).unwrap();
        let ms = spec.mode_spec(3.0).unwrap();
        let cov = crate::metrics::mode_coverage(&x, &ms).unwrap();
        for &c in &cov.per_mode {
            assert!((900..=1600).contains(&c), "{c}");
        }
    }

    #[test]
    fn grid_and_spiral_geometry() {
        let g = SyntheticSpec::new(SyntheticKind::Grid25, 2.0, 0.05).unwrap().centers();
        assert_eq!(g.len(), 25);
        assert!(g.contains(&[-2.0, 2.0]) && g.contains(&[0.0, 0.0]) && g.contains(&[1.0, -1.0]));
        let s = SyntheticSpec::new(SyntheticKind::Spiral, 2.0, 0.02).unwrap();
        let c = s.centers();
        assert_eq!(c.len(), SPIRAL_MODES);
        let radii: Vec<f64> = c.iter().map(|p| p[0].hypot(p[1])).collect();
        assert!(radii.windows(2).all(|w| w[1] > w[0]));
        assert!(s.mode_spec(3.0).is_ok());
    }

    #[test]
    fn samplers_reproducible() {
        let spec = SyntheticSpec::ring8(2.0, 0.02).unwrap();
        let a = sample_real(&spec, 64, &mut RngStream::new(9, Substream::Data)).unwrap();
        let b = sample_real(&spec, 64, &mut RngStream::new(9, Substream::Data)).unwrap();
        assert_eq!(a, b);
        let z1 = sample_latent(8, 16, &mut RngStream::new(9, Substream::Latent)).unwrap();
        let z2 = sample_latent(8, 16, &mut RngStream::new(9, Substream::Latent)).unwrap();
        assert_eq!(z1, z2);
        assert!(sample_latent(0, 2, &mut RngStream::new(9, Substream::Latent)).is_err());
        assert!(SyntheticSpec::ring8(2.0, 0.0).is_err());
        assert!("ring9".parse::<SyntheticKind>().is_err());
    }

    #[test]
    fn latent_moments() {
        let z = sample_latent(100_000, 2, &mut RngStream::new(3, Substream::Latent)).unwrap();
        for c in 0..2 {
            let col: Vec<f64> = (0..100_000).map(|i| z.row(i)[c]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 0.02 && (var - 1.0).abs() < 0.02);
        }
    }
}
