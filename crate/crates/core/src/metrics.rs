//! Fréchet distance, inception-score analog and mode coverage for
//! low-dimensional feature spaces.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least 2 samples to fit a Gaussian, got {0}")]
    TooFewSamples(usize),
    #[error("expected an n x d sample matrix, got shape {0:?}")]
    NotAMatrix(Vec<usize>),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("matrix is indefinite (eigenvalue {0:e})")]
    Indefinite(f64),
    #[error("expected a square matrix, got shape {0:?}")]
    NotSquare(Vec<usize>),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid probability row {row}: {reason}")]
    InvalidProbabilities { row: usize, reason: String },
    #[error("invalid split count {splits} for {n} samples")]
    InvalidSplits { splits: usize, n: usize },
    #[error("invalid mode spec: {0}")]
    InvalidModeSpec(String),
    #[error("empty sample set")]
    Empty,
    #[error("stats cache {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("stats cache {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-8;

/// Mean and covariance of a feature cloud.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianStats {
    pub dim: usize,
    pub mu: Vec<f64>,
    /// Row-major `dim x dim`.
    pub sigma: Vec<f64>,
}

impl GaussianStats {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self, MetricsError> {
        let dim = mu.len();
        if dim == 0 {
            return Err(MetricsError::Empty);
        }
        if sigma.len() != dim * dim {
            return Err(MetricsError::NotSquare(vec![sigma.len()]));
        }
        let stats = Self { dim, mu, sigma };
        stats.validate()?;
        Ok(stats)
    }

    fn validate(&self) -> Result<(), MetricsError> {
        if self.mu.len() != self.dim || self.sigma.len() != self.dim * self.dim {
            return Err(MetricsError::NotSquare(vec![self.dim, self.sigma.len()]));
        }
        check_symmetric(&self.sigma_matrix())?;
        Ok(())
    }

    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.sigma)
    }

    pub fn sigma_tensor(&self) -> Tensor {
        Tensor::new(vec![self.dim, self.dim], self.sigma.clone()).expect("square covariance")
    }

    pub fn save_json(&self, path: &Path) -> Result<(), MetricsError> {
        let text = serde_json::to_string(self).map_err(|source| MetricsError::Json {
            path: path.display().to_string(),
            source,
        })?;
        std::fs::write(path, text).map_err(|source| MetricsError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load_json(path: &Path) -> Result<Self, MetricsError> {
        let text = std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let stats: Self = serde_json::from_str(&text).map_err(|source| MetricsError::Json {
            path: path.display().to_string(),
            source,
        })?;
        stats.validate()?;
        Ok(stats)
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<(), MetricsError> {
    let scale = 1.0 + m.amax();
    let asym = (m - m.transpose()).amax();
    if !(asym <= SYMMETRY_TOL * scale) {
        return Err(MetricsError::Asymmetric(asym));
    }
    Ok(())
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Sample mean and unbiased covariance of the rows of `samples`.
pub fn fit_gaussian(samples: &Tensor) -> Result<GaussianStats, MetricsError> {
    let (n, d) = samples
        .dims2()
        .map_err(|_| MetricsError::NotAMatrix(samples.shape().to_vec()))?;
    if n < 2 {
        return Err(MetricsError::TooFewSamples(n));
    }
    let mut mu = vec![0.0; d];
    for i in 0..n {
        for (m, x) in mu.iter_mut().zip(samples.row(i)) {
            *m += x;
        }
    }
    mu.iter_mut().for_each(|m| *m /= n as f64);
    let mut sigma = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for i in 0..n {
        for ((c, x), m) in centered.iter_mut().zip(samples.row(i)).zip(&mu) {
            *c = x - m;
        }
        for a in 0..d {
            let ca = centered[a];
            for b in a..d {
                sigma[a * d + b] += ca * centered[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = sigma[a * d + b] / denom;
            sigma[a * d + b] = v;
            sigma[b * d + a] = v;
        }
    }
    Ok(GaussianStats { dim: d, mu, sigma })
}

fn eigen_psd(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, MetricsError> {
    check_symmetric(m)?;
    let scale = 1.0 + m.amax();
    let eig = SymmetricEigen::new(symmetrize(m));
    if let Some(&low) = eig.eigenvalues.iter().find(|&&l| !(l >= -PSD_TOL * scale)) {
        return Err(MetricsError::Indefinite(low));
    }
    Ok(eig)
}

fn sqrt_matrix(m: &DMatrix<f64>) -> Result<DMatrix<f64>, MetricsError> {
    let eig = eigen_psd(m)?;
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    let s = q * DMatrix::from_diagonal(&roots) * q.transpose();
    Ok(symmetrize(&s))
}

/// Principal square root of a symmetric positive semi-definite matrix.
pub fn matrix_sqrt_psd(sigma: &Tensor) -> Result<Tensor, MetricsError> {
    let (r, c) = sigma
        .dims2()
        .map_err(|_| MetricsError::NotSquare(sigma.shape().to_vec()))?;
    if r != c {
        return Err(MetricsError::NotSquare(sigma.shape().to_vec()));
    }
    let m = DMatrix::from_row_slice(r, c, sigma.data());
    let s = sqrt_matrix(&m)?;
    let data: Vec<f64> = (0..r).flat_map(|i| (0..c).map(move |j| (i, j))).map(|(i, j)| s[(i, j)]).collect();
    Ok(Tensor::new(vec![r, c], data).expect("square shape"))
}

/// Fréchet (2-Wasserstein) distance between two Gaussians.
pub fn frechet_distance(real: &GaussianStats, gen: &GaussianStats) -> Result<f64, MetricsError> {
    if real.dim != gen.dim {
        return Err(MetricsError::DimensionMismatch {
            left: real.dim,
            right: gen.dim,
        });
    }
    let mean_term: f64 = real.mu.iter().zip(&gen.mu).map(|(a, b)| (a - b) * (a - b)).sum();
    let sr = real.sigma_matrix();
    let sg = gen.sigma_matrix();
    let root_r = sqrt_matrix(&sr)?;
    eigen_psd(&sg)?;
    let inner = symmetrize(&(&root_r * &sg * &root_r));
    let scale = 1.0 + inner.amax();
    let cross: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|&l| if l >= -PSD_TOL * scale { l.max(0.0).sqrt() } else { 0.0 })
        .sum();
    let d = mean_term + sr.trace() + sg.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}

/// Rows of class probabilities `p(y|x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierProbs {
    classes: usize,
    data: Vec<f64>,
}

impl ClassifierProbs {
    pub fn new(rows: usize, classes: usize, data: Vec<f64>) -> Result<Self, MetricsError> {
        if rows == 0 || classes == 0 {
            return Err(MetricsError::Empty);
        }
        if data.len() != rows * classes {
            return Err(MetricsError::InvalidProbabilities {
                row: 0,
                reason: format!("expected {} entries, got {}", rows * classes, data.len()),
            });
        }
        for (row, chunk) in data.chunks_exact(classes).enumerate() {
            if let Some(bad) = chunk.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
                return Err(MetricsError::InvalidProbabilities {
                    row,
                    reason: format!("entry {bad} is not a finite non-negative number"),
                });
            }
            let total: f64 = chunk.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(MetricsError::InvalidProbabilities {
                    row,
                    reason: format!("row sums to {total}"),
                });
            }
        }
        Ok(Self { classes, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MetricsError> {
        let classes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != classes) {
            return Err(MetricsError::InvalidProbabilities {
                row: rows.iter().position(|r| r.len() != classes).unwrap_or(0),
                reason: "ragged rows".into(),
            });
        }
        Self::new(rows.len(), classes, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.classes
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }
}

/// Mean and population standard deviation of the per-split scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InceptionScore {
    pub mean: f64,
    pub std: f64,
}

pub const DEFAULT_IS_SPLITS: usize = 10;

/// Split boundaries matching `numpy.array_split`.
fn split_ranges(n: usize, splits: usize) -> Vec<(usize, usize)> {
    let base = n / splits;
    let extra = n % splits;
    let mut start = 0;
    (0..splits)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = (start, start + len);
            start += len;
            r
        })
        .collect()
}

fn split_score(probs: &ClassifierProbs, start: usize, end: usize) -> f64 {
    let k = probs.classes;
    let count = (end - start) as f64;
    let mut marginal = vec![0.0; k];
    for i in start..end {
        for (m, p) in marginal.iter_mut().zip(probs.row(i)) {
            *m += p;
        }
    }
    marginal.iter_mut().for_each(|m| *m /= count);
    let mut kl_sum = 0.0;
    for i in start..end {
        let kl: f64 = probs
            .row(i)
            .iter()
            .zip(&marginal)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, m)| p * (p.ln() - m.ln()))
            .sum();
        kl_sum += kl;
    }
    let mean_kl = (kl_sum / count).clamp(0.0, (k as f64).ln());
    mean_kl.exp().clamp(1.0, k as f64)
}

/// `exp(E_x KL(p(y|x) || p(y)))` per split, summarized over splits.
pub fn inception_score(probs: &ClassifierProbs, n_splits: usize) -> Result<InceptionScore, MetricsError> {
    let n = probs.rows();
    if n_splits == 0 || n_splits > n {
        return Err(MetricsError::InvalidSplits { splits: n_splits, n });
    }
    let scores: Vec<f64> = split_ranges(n, n_splits)
        .into_iter()
        .map(|(a, b)| split_score(probs, a, b))
        .collect();
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / scores.len() as f64;
    Ok(InceptionScore { mean, std: var.sqrt() })
}

/// Known mixture geometry used as a surrogate classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    centers: Vec<Vec<f64>>,
    std: f64,
    quality_radius: f64,
}

impl ModeSpec {
    pub fn new(centers: Vec<Vec<f64>>, std: f64, quality_radius: f64) -> Result<Self, MetricsError> {
        if centers.len() < 2 {
            return Err(MetricsError::InvalidModeSpec(format!(
                "need at least 2 modes, got {}",
                centers.len()
            )));
        }
        let dim = centers[0].len();
        if dim == 0 || centers.iter().any(|c| c.len() != dim) {
            return Err(MetricsError::InvalidModeSpec("centers must share a positive dimension".into()));
        }
        if !(std > 0.0 && std.is_finite()) {
            return Err(MetricsError::InvalidModeSpec(format!("std must be positive, got {std}")));
        }
        if !(quality_radius > 0.0) {
            return Err(MetricsError::InvalidModeSpec(format!(
                "quality radius must be positive, got {quality_radius}"
            )));
        }
        for i in 0..centers.len() {
            for j in 0..i {
                if centers[i] == centers[j] {
                    return Err(MetricsError::InvalidModeSpec(format!("centers {j} and {i} coincide")));
                }
            }
        }
        Ok(Self {
            centers,
            std,
            quality_radius,
        })
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn quality_radius(&self) -> f64 {
        self.quality_radius
    }

    pub fn modes(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    fn check_samples(&self, samples: &Tensor) -> Result<usize, MetricsError> {
        let (n, d) = samples
            .dims2()
            .map_err(|_| MetricsError::NotAMatrix(samples.shape().to_vec()))?;
        if d != self.dim() {
            return Err(MetricsError::DimensionMismatch {
                left: d,
                right: self.dim(),
            });
        }
        Ok(n)
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Softmax over `-|x - c_k|^2 / (2 std^2)`.
pub fn mode_classifier_probs(samples: &Tensor, spec: &ModeSpec) -> Result<ClassifierProbs, MetricsError> {
    let n = spec.check_samples(samples)?;
    let k = spec.modes();
    let denom = 2.0 * spec.std * spec.std;
    let mut data = Vec::with_capacity(n * k);
    let mut logits = vec![0.0; k];
    for i in 0..n {
        let x = samples.row(i);
        for (l, c) in logits.iter_mut().zip(&spec.centers) {
            *l = -squared_distance(x, c) / denom;
        }
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logits.iter().map(|l| (l - top).exp()).sum();
        data.extend(logits.iter().map(|l| (l - top).exp() / total));
    }
    ClassifierProbs::new(n, k, data)
}

/// Per-mode counts of high-quality samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub modes_covered: usize,
    pub high_quality_fraction: f64,
    pub per_mode: Vec<usize>,
}

/// Counts the modes that receive enough samples near their center.
pub fn mode_coverage(samples: &Tensor, spec: &ModeSpec) -> Result<Coverage, MetricsError> {
    let n = spec.check_samples(samples)?;
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    let k = spec.modes();
    let radius = spec.quality_radius * spec.std;
    let radius_sq = radius * radius;
    let mut per_mode = vec![0usize; k];
    let mut high_quality = 0usize;
    for i in 0..n {
        let x = samples.row(i);
        let (best, dist) = spec
            .centers
            .iter()
            .map(|c| squared_distance(x, c))
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (j, d)| if d < acc.1 { (j, d) } else { acc });
        if dist <= radius_sq {
            per_mode[best] += 1;
            high_quality += 1;
        }
    }
    let threshold = (n as f64 / (10.0 * k as f64)).max(1.0);
    let modes_covered = per_mode.iter().filter(|&&c| c as f64 >= threshold).count();
    Ok(Coverage {
        modes_covered,
        high_quality_fraction: high_quality as f64 / n as f64,
        per_mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn stats(mu: Vec<f64>, sigma: Vec<f64>) -> GaussianStats {
        GaussianStats::new(mu, sigma).unwrap()
    }

    fn gaussian_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::from_fn(&[rows, cols], |_| StandardNormal.sample(rng))
    }

    fn max_abs(a: &DMatrix<f64>) -> f64 {
        a.amax()
    }

    #[test]
    fn two_point_fit() {
        let s = fit_gaussian(&Tensor::matrix(&[vec![0.0, 0.0], vec![2.0, 0.0]])).unwrap();
        assert_eq!(s.mu, vec![1.0, 0.0]);
        assert_eq!(s.sigma, vec![2.0, 0.0, 0.0, 0.0]);
        let same = fit_gaussian(&Tensor::matrix(&vec![vec![3.0, -1.0]; 5])).unwrap();
        assert!(same.sigma.iter().all(|&v| v == 0.0));
        assert!(matches!(
            fit_gaussian(&Tensor::matrix(&[vec![1.0, 2.0]])),
            Err(MetricsError::TooFewSamples(1))
        ));
    }

    #[test]
    fn standard_normal_covariance_near_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = fit_gaussian(&gaussian_tensor(&mut rng, 10_000, 3)).unwrap();
        let err = s.sigma_matrix() - DMatrix::identity(3, 3);
        assert!(max_abs(&err) < 0.1);
    }

    #[test]
    fn sqrt_examples() {
        let i = Tensor::matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matrix_sqrt_psd(&i).unwrap().max_abs_diff(&i) < 1e-15);
        let d = matrix_sqrt_psd(&Tensor::matrix(&[vec![4.0, 0.0], vec![0.0, 9.0]])).unwrap();
        assert!(d.max_abs_diff(&Tensor::matrix(&[vec![2.0, 0.0], vec![0.0, 3.0]])) < 1e-14);
        assert!(matches!(
            matrix_sqrt_psd(&Tensor::matrix(&[vec![1.0, 0.5], vec![0.0, 1.0]])),
            Err(MetricsError::Asymmetric(_))
        ));
        assert!(matches!(
            matrix_sqrt_psd(&Tensor::matrix(&[vec![1.0, 0.0], vec![0.0, -1.0]])),
            Err(MetricsError::Indefinite(_))
        ));
    }

    #[test]
    fn sqrt_reconstructs_random_psd_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..100 {
            let d = 1 + case % 32;
            // rank-deficient every third case
            let rows = if case % 3 == 0 { (d / 2).max(1) } else { d + 3 };
            let a = gaussian_tensor(&mut rng, rows, d);
            let am = DMatrix::from_row_slice(rows, d, a.data());
            let sigma = am.transpose() * am;
            let sigma = symmetrize(&sigma);
            let st = Tensor::new(vec![d, d], sigma.iter().copied().collect()).unwrap();
            // column-major iteration of a symmetric matrix is its row-major layout
            let s = matrix_sqrt_psd(&st).unwrap();
            let sm = DMatrix::from_row_slice(d, d, s.data());
            assert!(max_abs(&(&sm - sm.transpose())) <= 1e-12 * (1.0 + max_abs(&sm)));
            let err = max_abs(&(&sm * &sm - &sigma));
            assert!(err <= 1e-8 * (1.0 + max_abs(&sigma)), "case {case}: {err}");
        }
    }

    #[test]
    fn frechet_closed_forms() {
        let a = stats(vec![0.0], vec![1.0]);
        let b = stats(vec![1.0], vec![1.0]);
        assert!((frechet_distance(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let i = stats(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]);
        let four = stats(vec![0.0, 0.0], vec![4.0, 0.0, 0.0, 4.0]);
        assert!((frechet_distance(&i, &four).unwrap() - 2.0).abs() < 1e-12);
        assert!(frechet_distance(&i, &i).unwrap() <= 1e-10);
        assert!(matches!(
            frechet_distance(&a, &i),
            Err(MetricsError::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn stats_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.json");
        let s = stats(vec![0.1, 1.0 / 3.0], vec![2.0, 0.1, 0.1, 1e-17]);
        s.save_json(&path).unwrap();
        assert_eq!(GaussianStats::load_json(&path).unwrap(), s);
        std::fs::write(&path, "{").unwrap();
        assert!(matches!(GaussianStats::load_json(&path), Err(MetricsError::Json { .. })));
    }

    #[test]
    fn inception_examples() {
        let k = 4;
        let uniform = ClassifierProbs::from_rows(&vec![vec![0.25; k]; 40]).unwrap();
        let s = inception_score(&uniform, 10).unwrap();
        assert!((s.mean - 1.0).abs() < 1e-12 && s.std < 1e-12);
        let balanced: Vec<Vec<f64>> = (0..40)
            .map(|i| (0..k).map(|c| if c == i % k { 1.0 } else { 0.0 }).collect())
            .collect();
        let s = inception_score(&ClassifierProbs::from_rows(&balanced).unwrap(), 10).unwrap();
        assert!((s.mean - k as f64).abs() < 1e-12);
        let collapsed = vec![vec![0.0, 1.0, 0.0, 0.0]; 40];
        let s = inception_score(&ClassifierProbs::from_rows(&collapsed).unwrap(), 10).unwrap();
        assert!((s.mean - 1.0).abs() < 1e-12);
        assert!(inception_score(&uniform, 0).is_err());
        assert!(inception_score(&uniform, 41).is_err());
        assert!(ClassifierProbs::from_rows(&[vec![0.5, 0.6]]).is_err());
        assert!(ClassifierProbs::from_rows(&[vec![1.5, -0.5]]).is_err());
    }

    fn ring(k: usize, radius: f64) -> Vec<Vec<f64>> {
        (0..k)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / k as f64;
                vec![radius * a.cos(), radius * a.sin()]
            })
            .collect()
    }

    #[test]
    fn classifier_examples() {
        let spec = ModeSpec::new(ring(8, 2.0), 0.05, 3.0).unwrap();
        let at_centers = Tensor::matrix(spec.centers());
        let probs = mode_classifier_probs(&at_centers, &spec).unwrap();
        for i in 0..8 {
            assert!(probs.row(i)[i] > 0.99);
        }
        let origin = Tensor::matrix(&[vec![0.0, 0.0]]);
        let p = mode_classifier_probs(&origin, &spec).unwrap();
        assert!(p.row(0).iter().all(|v| (v - 0.125).abs() < 1e-12));
        assert!(ModeSpec::new(vec![vec![0.0]], 1.0, 3.0).is_err());
        assert!(ModeSpec::new(vec![vec![0.0], vec![0.0]], 1.0, 3.0).is_err());
        assert!(ModeSpec::new(ring(3, 1.0), 0.0, 3.0).is_err());
    }

    #[test]
    fn coverage_examples() {
        let spec = ModeSpec::new(ring(8, 2.0), 0.05, 3.0).unwrap();
        let c = mode_coverage(&Tensor::matrix(spec.centers()), &spec).unwrap();
        assert_eq!(c.modes_covered, 8);
        assert_eq!(c.high_quality_fraction, 1.0);
        let collapsed = Tensor::matrix(&vec![spec.centers()[3].clone(); 100]);
        assert_eq!(mode_coverage(&collapsed, &spec).unwrap().modes_covered, 1);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let mut data = Vec::with_capacity(2 * n);
        for i in 0..n {
            let c = &spec.centers()[i % 8];
            for v in c {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(v + 0.05 * z);
            }
        }
        let cov = mode_coverage(&Tensor::new(vec![n, 2], data).unwrap(), &spec).unwrap();
        assert_eq!(cov.modes_covered, 8);
        assert!(cov.high_quality_fraction >= 0.95);
    }

    fn diag_stats() -> impl Strategy<Value = GaussianStats> {
        (1usize..6).prop_flat_map(|d| {
            (
                prop::collection::vec(-3.0f64..3.0, d),
                prop::collection::vec(0.0f64..5.0, d),
            )
                .prop_map(move |(mu, var)| {
                    let mut sigma = vec![0.0; d * d];
                    for i in 0..d {
                        sigma[i * d + i] = var[i];
                    }
                    GaussianStats::new(mu, sigma).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn frechet_self_zero_and_symmetric(a in diag_stats(), seed in any::<u64>()) {
            prop_assert!(frechet_distance(&a, &a).unwrap() <= 1e-10);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = a.dim;
            let mut sigma = vec![0.0; d * d];
            for i in 0..d {
                sigma[i * d + i] = rand::Rng::random_range(&mut rng, 0.0..4.0);
            }
            let b = GaussianStats::new(vec![0.5; d], sigma).unwrap();
            let ab = frechet_distance(&a, &b).unwrap();
            let ba = frechet_distance(&b, &a).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() <= 1e-8);
        }

        #[test]
        fn frechet_grows_with_mean_separation(seed in any::<u64>(), d in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = gaussian_tensor(&mut rng, d + 2, d);
            let am = DMatrix::from_row_slice(d + 2, d, a.data());
            let sig: Vec<f64> = symmetrize(&(am.transpose() * am)).iter().copied().collect();
            let base = GaussianStats::new(vec![0.0; d], sig.clone()).unwrap();
            let mut prev = -1.0;
            for step in 0..6 {
                let other = GaussianStats::new(vec![0.5 * step as f64; d], sig.clone()).unwrap();
                let v = frechet_distance(&base, &other).unwrap();
                prop_assert!(v > prev);
                prev = v;
            }
        }

        #[test]
        fn inception_within_bounds(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 5), 10..40),
            splits in 1usize..10,
        ) {
            let norm: Vec<Vec<f64>> = rows
                .into_iter()
                .map(|r| {
                    let t: f64 = r.iter().sum::<f64>() + 1e-3;
                    let mut r: Vec<f64> = r.iter().map(|v| (v + 2e-4) / t).collect();
                    let s: f64 = r.iter().sum();
                    r.iter_mut().for_each(|v| *v /= s);
                    r
                })
                .collect();
            let probs = ClassifierProbs::from_rows(&norm).unwrap();
            let s = inception_score(&probs, splits).unwrap();
            prop_assert!(s.mean >= 1.0 && s.mean <= 5.0);
        }

        #[test]
        fn classifier_rows_sum_to_one(points in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..30)) {
            let spec = ModeSpec::new(ring(8, 2.0), 0.05, 3.0).unwrap();
            let x = Tensor::matrix(&points.iter().map(|&(a, b)| vec![a, b]).collect::<Vec<_>>());
            let p = mode_classifier_probs(&x, &spec).unwrap();
            for i in 0..p.rows() {
                prop_assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
    }
}
