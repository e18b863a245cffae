//! Self-contained property suite behind the `verify` subcommand.
//!
//! Every property returns a [`PropertyResult`] carrying what was measured,
//! so a failing run names the offending property and its numbers. The
//! objective functions under test are injectable through [`Objectives`],
//! which is how the suite is checked against a deliberately broken loss.

use std::fmt;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{apply_primitive, finite_difference_gradient, relative_error, Primitive, Tape, Tensor, Var};
use crate::data::{parse_idx, serialize_idx, IdxData, IdxTensor};
use crate::harness::{Checkpoint, ExperimentConfig, Trainer};
use crate::layers::{build_network, spectral_normalize, Mlp, Mode, NetworkSpec, SpectralNorm};
use crate::losses::{
    discriminator_loss, generator_loss, link_function_variant_check, rmcos_objective, rmcos_objective_with_margin_grad,
    rsgan_objective, Link, LogitBatch, LossError, LossKind, MarginCosineParams,
};
use crate::metrics::{frechet_distance, inception_score, matrix_sqrt_psd, ClassifierProbs, GaussianStats};

type Res<T> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

/// Finite-difference step and tolerance for every gradient comparison.
pub const FD_STEP: f64 = 1e-5;
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
/// Inputs closer than this to a relu/clamp kink are redrawn.
const KINK_CLEARANCE: f64 = 1e-3;

pub type ObjectiveFn = fn(&[f64], &[f64], f64, f64) -> Result<f64, LossError>;
pub type ReferenceFn = fn(&[f64], &[f64]) -> Result<f64, LossError>;

/// The objective implementations the theory properties are evaluated on.
#[derive(Clone, Copy)]
pub struct Objectives {
    /// `(real, fake, scale, margin) -> L_D + L_G` of the margin-cosine loss.
    pub rmcos: ObjectiveFn,
    /// `(real, fake) -> L_D + L_G` of the relativistic cross-entropy loss.
    pub rsgan: ReferenceFn,
}

impl Default for Objectives {
    fn default() -> Self {
        Self {
            rmcos: rmcos_objective,
            rsgan: rsgan_objective,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    /// Human-readable measurements, e.g. the worst error seen.
    pub measured: String,
    pub elapsed: Duration,
}

impl fmt::Display for PropertyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} cases={} {} ({:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.measured,
            self.elapsed.as_secs_f64()
        )
    }
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub results: Vec<PropertyResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn first_failure(&self) -> Option<&PropertyResult> {
        self.results.iter().find(|r| !r.passed)
    }
}

/// Names of all properties, in run order.
pub const PROPERTIES: [&str; 9] = [
    "gradient-oracle",
    "rsgan-reduction",
    "margin-ordering",
    "frechet-closed-forms",
    "inception-bounds",
    "spectral-norm",
    "idx-round-trip",
    "checkpoint-round-trip",
    "determinism-replay",
];

/// Runs one property by name. `None` for an unknown name.
pub fn run_property(name: &str, objectives: &Objectives, seed: u64) -> Option<PropertyResult> {
    let start = Instant::now();
    let (name, outcome): (&'static str, Res<(bool, usize, String)>) = match name {
        "gradient-oracle" => ("gradient-oracle", gradient_oracle(seed)),
        "rsgan-reduction" => ("rsgan-reduction", rsgan_reduction(objectives, seed)),
        "margin-ordering" => ("margin-ordering", margin_ordering(objectives, seed)),
        "frechet-closed-forms" => ("frechet-closed-forms", frechet_closed_forms(seed)),
        "inception-bounds" => ("inception-bounds", inception_bounds(seed)),
        "spectral-norm" => ("spectral-norm", spectral_norm_oracle(seed)),
        "idx-round-trip" => ("idx-round-trip", idx_round_trip(seed)),
        "checkpoint-round-trip" => ("checkpoint-round-trip", checkpoint_round_trip()),
        "determinism-replay" => ("determinism-replay", determinism_replay()),
        _ => return None,
    };
    let (passed, cases, measured) = match outcome {
        Ok(r) => r,
        Err(e) => (false, 0, format!("error: {e}")),
    };
    Some(PropertyResult {
        name,
        passed,
        cases,
        measured,
        elapsed: start.elapsed(),
    })
}

/// Runs every property, calling `on_result` as each one finishes.
pub fn run_all(objectives: &Objectives, seed: u64, mut on_result: impl FnMut(&PropertyResult)) -> VerifyReport {
    let mut report = VerifyReport::default();
    for name in PROPERTIES {
        let r = run_property(name, objectives, seed).expect("known property");
        on_result(&r);
        report.results.push(r);
    }
    report
}

fn uniform_logits(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

fn normal_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.sample(StandardNormal))
}

// ---------------------------------------------------------------- gradients

const PRIMITIVE_CASES: usize = 12;
const ENDPOINT_CASES: usize = 12;

fn gradient_oracle(seed: u64) -> Res<(bool, usize, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a09);
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut cases = 0;
    let mut note = |err: f64, label: String| {
        if err > worst || worst_at.is_empty() {
            worst = worst.max(err);
            worst_at = label;
        }
    };
    for builder in 0..PRIMITIVE_BUILDERS {
        for _ in 0..PRIMITIVE_CASES {
            let (name, err) = primitive_case(builder, &mut rng)?;
            note(err, name.to_string());
            cases += 1;
        }
    }
    for kind in LossKind::ALL {
        for side in [Side::Discriminator, Side::Generator] {
            for _ in 0..ENDPOINT_CASES {
                let err = endpoint_case(kind, side, &mut rng)?;
                note(err, format!("{kind}/{}", side.name()));
                cases += 1;
            }
        }
    }
    Ok((
        worst <= GRADIENT_TOLERANCE,
        cases,
        format!("max_rel_err={worst:.3e} at {worst_at} (tol {GRADIENT_TOLERANCE:e}, h={FD_STEP:e})"),
    ))
}

const PRIMITIVE_BUILDERS: usize = 29;

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.random_range(1..=4), rng.random_range(1..=4))
}

/// Random well-conditioned inputs for the `i`-th primitive.
fn primitive_inputs(i: usize, rng: &mut ChaCha8Rng) -> (Primitive, Vec<Tensor>) {
    let (r, c) = dims(rng);
    let away_from_zero = |rng: &mut ChaCha8Rng| {
        let mag: f64 = rng.random_range(0.5..2.0);
        if rng.random::<bool>() {
            mag
        } else {
            -mag
        }
    };
    match i {
        0 => {
            let n = rng.random_range(1..=4);
            (Primitive::MatMul, vec![normal_tensor(rng, &[r, c]), normal_tensor(rng, &[c, n])])
        }
        1 => (Primitive::Transpose, vec![normal_tensor(rng, &[r, c])]),
        2 => (Primitive::Add, vec![normal_tensor(rng, &[r, c]), normal_tensor(rng, &[r, c])]),
        3 => (Primitive::Sub, vec![normal_tensor(rng, &[r, c]), normal_tensor(rng, &[r, c])]),
        4 => (Primitive::Mul, vec![normal_tensor(rng, &[r, c]), normal_tensor(rng, &[r, c])]),
        5 => {
            let den = Tensor::from_fn(&[r, c], |_| away_from_zero(rng));
            (Primitive::Div, vec![normal_tensor(rng, &[r, c]), den])
        }
        6 => (Primitive::Neg, vec![normal_tensor(rng, &[r, c])]),
        7 => (Primitive::Scale(rng.random_range(-3.0..3.0)), vec![normal_tensor(rng, &[r, c])]),
        8 => (Primitive::Shift(rng.random_range(-3.0..3.0)), vec![normal_tensor(rng, &[r, c])]),
        9 => (Primitive::Exp, vec![normal_tensor(rng, &[r, c])]),
        10 => (Primitive::Log, vec![Tensor::from_fn(&[r, c], |_| rng.random_range(0.2..3.0))]),
        11 => (Primitive::Sigmoid, vec![normal_tensor(rng, &[r, c]).map(|x| 3.0 * x)]),
        12 => (Primitive::LogSigmoid, vec![normal_tensor(rng, &[r, c]).map(|x| 3.0 * x)]),
        13 => (Primitive::Softplus, vec![normal_tensor(rng, &[r, c]).map(|x| 3.0 * x)]),
        14 => (Primitive::Tanh, vec![normal_tensor(rng, &[r, c])]),
        15 => (Primitive::Relu, vec![normal_tensor(rng, &[r, c])]),
        16 => (Primitive::LeakyRelu(rng.random_range(0.01..0.5)), vec![normal_tensor(rng, &[r, c])]),
        17 => (Primitive::Square, vec![normal_tensor(rng, &[r, c])]),
        18 => (Primitive::Sqrt, vec![Tensor::from_fn(&[r, c], |_| rng.random_range(0.2..3.0))]),
        19 => (Primitive::Mean, vec![normal_tensor(rng, &[r, c])]),
        20 => (Primitive::Sum, vec![normal_tensor(rng, &[r, c])]),
        21 => (Primitive::MeanRows, vec![normal_tensor(rng, &[r, c])]),
        22 => (Primitive::BroadcastRows(r), vec![normal_tensor(rng, &[c])]),
        23 => (Primitive::Expand(vec![r, c]), vec![normal_tensor(rng, &[1])]),
        24 => (Primitive::Reshape(vec![r * c]), vec![normal_tensor(rng, &[r, c])]),
        25 => (Primitive::L2NormalizeRows, vec![normal_tensor(rng, &[r, c + 1])]),
        26 => (Primitive::ClampMin(rng.random_range(-1.0..1.0)), vec![normal_tensor(rng, &[r, c])]),
        27 => {
            let parts = rng.random_range(2..=3);
            let ts = (0..parts)
                .map(|_| {
                    let rows = rng.random_range(1..=3);
                    normal_tensor(rng, &[rows, c])
                })
                .collect();
            (Primitive::ConcatRows, ts)
        }
        28 => {
            let rows = r + 1;
            let start = rng.random_range(0..rows);
            let end = rng.random_range(start + 1..=rows);
            (Primitive::SliceRows(start, end), vec![normal_tensor(rng, &[rows, c])])
        }
        _ => unreachable!("primitive builder index"),
    }
}

/// `sum(w * prim(inputs))` checked against central differences for every
/// input. Returns the primitive name and the worst relative error.
fn primitive_case(i: usize, rng: &mut ChaCha8Rng) -> Res<(&'static str, f64)> {
    loop {
        let (prim, inputs) = primitive_inputs(i, rng);
        let out_shape = {
            let refs: Vec<&Tensor> = inputs.iter().collect();
            apply_primitive(&prim, &refs)?.shape().to_vec()
        };
        let weights = normal_tensor(rng, &out_shape);
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let y = tape.apply(prim.clone(), &vars)?;
        if tape.min_kink_distance() < KINK_CLEARANCE {
            continue;
        }
        let w = tape.constant(weights.clone());
        let wy = tape.mul(y, w)?;
        let total = tape.sum(wy)?;
        let grads = tape.backward(total)?;
        let mut worst = 0.0f64;
        for (k, v) in vars.iter().enumerate() {
            let numeric = finite_difference_gradient(
                |x| -> Res<f64> {
                    let mut refs: Vec<&Tensor> = inputs.iter().collect();
                    refs[k] = x;
                    let out = apply_primitive(&prim, &refs)?;
                    Ok(out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum())
                },
                &inputs[k],
                FD_STEP,
            )?;
            worst = worst.max(relative_error(grads.get(*v).data(), numeric.data()));
        }
        return Ok((prim.name(), worst));
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Discriminator,
    Generator,
}

impl Side {
    fn name(self) -> &'static str {
        match self {
            Side::Discriminator => "D",
            Side::Generator => "G",
        }
    }
}

const ENDPOINT_BATCH: usize = 4;

struct Endpoint {
    kind: LossKind,
    side: Side,
    real: Tensor,
    latent: Tensor,
}

impl Endpoint {
    /// Records the loss of one side, exactly as a training step wires it:
    /// real and generated rows share one discriminator pass.
    fn record(&self, generator: &Mlp, discriminator: &Mlp) -> Res<(Tape, Var, Vec<Var>)> {
        let own = |side: Side| if side == self.side { Mode::TRAIN } else { Mode::FROZEN_TRAIN };
        let mut tape = Tape::new();
        let z = tape.constant(self.latent.clone());
        let gen = generator.forward(&mut tape, z, own(Side::Generator))?;
        let x = tape.constant(self.real.clone());
        let both = tape.concat_rows(&[x, gen.output])?;
        let disc = discriminator.forward(&mut tape, both, own(Side::Discriminator))?;
        let cr = tape.slice_rows(disc.output, 0, ENDPOINT_BATCH)?;
        let cf = tape.slice_rows(disc.output, ENDPOINT_BATCH, 2 * ENDPOINT_BATCH)?;
        let batch = LogitBatch::new(&tape, cr, cf)?;
        let params = MarginCosineParams::default();
        let (loss, leaves) = match self.side {
            Side::Discriminator => (discriminator_loss(&mut tape, self.kind, &batch, &params)?, disc.params),
            Side::Generator => (generator_loss(&mut tape, self.kind, &batch, &params)?, gen.params),
        };
        Ok((tape, loss, leaves))
    }

    fn value(&self, generator: &Mlp, discriminator: &Mlp) -> Res<f64> {
        let (tape, loss, _) = self.record(generator, discriminator)?;
        Ok(tape.value(loss).item()?)
    }
}

/// Adds Gaussian noise to every parameter so biases and batch-norm affine
/// terms are non-trivial, as in a trained network.
fn perturbed(mut net: Mlp, rng: &mut ChaCha8Rng) -> Res<Mlp> {
    let values: Vec<Tensor> = net
        .parameters()
        .into_iter()
        .map(|p| {
            let noise = normal_tensor(rng, p.shape());
            Tensor::from_fn(p.shape(), |i| p.data()[i] + 0.5 * noise.data()[i])
        })
        .collect();
    net.set_parameters(&values)?;
    Ok(net)
}

/// One loss endpoint on freshly drawn small networks: all parameter
/// gradients of the updated side against central differences.
fn endpoint_case(kind: LossKind, side: Side, rng: &mut ChaCha8Rng) -> Res<f64> {
    loop {
        let mut gspec = NetworkSpec::generator(vec![3, 5, 2]);
        gspec.init_std = 0.5;
        let mut dspec = NetworkSpec::discriminator(vec![2, 6, 1], kind.head());
        dspec.init_std = 0.5;
        let generator = perturbed(build_network(&gspec, rng)?, rng)?;
        let discriminator = perturbed(build_network(&dspec, rng)?, rng)?;
        let ep = Endpoint {
            kind,
            side,
            real: normal_tensor(rng, &[ENDPOINT_BATCH, 2]),
            latent: normal_tensor(rng, &[ENDPOINT_BATCH, 3]),
        };
        let (tape, loss, leaves) = ep.record(&generator, &discriminator)?;
        if tape.min_kink_distance() < KINK_CLEARANCE {
            continue;
        }
        let grads = tape.backward(loss)?;
        let owner = match side {
            Side::Discriminator => &discriminator,
            Side::Generator => &generator,
        };
        let values: Vec<Tensor> = owner.parameters().into_iter().cloned().collect();
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for (k, leaf) in leaves.iter().enumerate() {
            analytic.extend_from_slice(grads.get(*leaf).data());
            let fd = finite_difference_gradient(
                |p| -> Res<f64> {
                    let mut trial = values.clone();
                    trial[k] = p.clone();
                    let mut net = owner.clone();
                    net.set_parameters(&trial)?;
                    match side {
                        Side::Discriminator => ep.value(&generator, &net),
                        Side::Generator => ep.value(&net, &discriminator),
                    }
                },
                &values[k],
                FD_STEP,
            )?;
            numeric.extend_from_slice(fd.data());
        }
        return Ok(relative_error(&analytic, &numeric));
    }
}

// ------------------------------------------------------------------- theory

const THEORY_BATCHES: usize = 1000;

fn rsgan_reduction(objectives: &Objectives, seed: u64) -> Res<(bool, usize, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbb67);
    let mut worst = 0.0f64;
    for _ in 0..THEORY_BATCHES {
        let n = rng.random_range(1..=32);
        let real = uniform_logits(&mut rng, n);
        let fake = uniform_logits(&mut rng, n);
        let a = (objectives.rmcos)(&real, &fake, 1.0, 0.0)?;
        let b = (objectives.rsgan)(&real, &fake)?;
        worst = worst.max((a - b).abs());
    }
    Ok((worst <= 1e-12, THEORY_BATCHES, format!("max_abs_diff={worst:.3e} (tol 1e-12)")))
}

/// `-0.5, -0.45, ..., 0.5`
pub fn margin_grid() -> Vec<f64> {
    (0..=20).map(|i| -0.5 + 0.05 * i as f64).collect()
}

fn margin_ordering(objectives: &Objectives, seed: u64) -> Res<(bool, usize, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3c6e);
    let grid = margin_grid();
    let mut violations = 0;
    let mut min_step = f64::INFINITY;
    let mut min_derivative = f64::INFINITY;
    let mut link_failures = 0;
    for _ in 0..THEORY_BATCHES {
        let n = rng.random_range(1..=32);
        let real = uniform_logits(&mut rng, n);
        let fake = uniform_logits(&mut rng, n);
        let scale = rng.random_range(0.5..=10.0);
        let values = grid
            .iter()
            .map(|&m| (objectives.rmcos)(&real, &fake, scale, m))
            .collect::<Result<Vec<_>, _>>()?;
        let step = values.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        min_step = min_step.min(step);
        if !(step > 0.0) {
            violations += 1;
        }
        for &m in &grid {
            let (_, d) = rmcos_objective_with_margin_grad(&real, &fake, scale, m)?;
            min_derivative = min_derivative.min(d);
        }
        for link in [Link::Softplus, Link::TanhShifted] {
            if !link_function_variant_check(&real, &fake, scale, &grid, link)?.passed() {
                link_failures += 1;
            }
        }
    }
    let passed = violations == 0 && min_derivative >= -1e-12 && link_failures == 0;
    Ok((
        passed,
        THEORY_BATCHES,
        format!(
            "non_increasing_batches={violations} min_step={min_step:.3e} min_dL/dm={min_derivative:.3e} link_failures={link_failures}"
        ),
    ))
}

// ------------------------------------------------------------------ metrics

fn frechet_closed_forms(seed: u64) -> Res<(bool, usize, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa54f);
    let mut cases = 0;
    let mut identical = 0.0f64;
    for _ in 0..20 {
        let d = rng.random_range(1..=8);
        let b = normal_tensor(&mut rng, &[d, d]);
        let sigma = crate::autodiff::kernels::matmul_nt(b.data(), b.data(), d, d, d);
        let mu = normal_tensor(&mut rng, &[d]).into_data();
        let stats = GaussianStats::new(mu, sigma)?;
        identical = identical.max(frechet_distance(&stats, &stats)?);
        cases += 1;
    }
    let unit_shift = (frechet_distance(
        &GaussianStats::new(vec![0.0], vec![1.0])?,
        &GaussianStats::new(vec![1.0], vec![1.0])?,
    )? - 1.0)
        .abs();
    let scaled = (frechet_distance(
        &GaussianStats::new(vec![0.0; 2], vec![1.0, 0.0, 0.0, 1.0])?,
        &GaussianStats::new(vec![0.0; 2], vec![4.0, 0.0, 0.0, 4.0])?,
    )? - 2.0)
        .abs();
    cases += 2;
    let mut sqrt_err = 0.0f64;
    for _ in 0..100 {
        let d = rng.random_range(1..=32);
        let b = normal_tensor(&mut rng, &[d, d]);
        let a = Tensor::new(vec![d, d], crate::autodiff::kernels::matmul_nt(b.data(), b.data(), d, d, d))?;
        let root = matrix_sqrt_psd(&a)?;
        let back = crate::autodiff::kernels::matmul(root.data(), root.data(), d, d, d);
        let diff: f64 = back.iter().zip(a.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        sqrt_err = sqrt_err.max(diff / a.norm());
        cases += 1;
    }
    let passed = identical <= 1e-10 && unit_shift <= 1e-10 && scaled <= 1e-10 && sqrt_err <= 1e-8;
    Ok((
        passed,
        cases,
        format!(
            "identical={identical:.3e} unit_shift_err={unit_shift:.3e} scaled_cov_err={scaled:.3e} sqrt_rel_err={sqrt_err:.3e}"
        ),
    ))
}

fn inception_bounds(seed: u64) -> Res<(bool, usize, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x510e);
    let mut out_of_range = 0;
    let mut cases = 0;
    for _ in 0..200 {
        let k = rng.random_range(2..=10);
        let rows = rng.random_range(10..=200);
        let sharp = rng.random_range(0.1..8.0);
        let mut data = Vec::with_capacity(rows * k);
        for _ in 0..rows {
            let logits: Vec<f64> = (0..k).map(|_| sharp * rng.sample::<f64, _>(StandardNormal)).collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = e.iter().sum();
            data.extend(e.iter().map(|v| v / z));
        }
        let splits = rng.random_range(1..=10);
        let score = inception_score(&ClassifierProbs::new(rows, k, data)?, splits)?;
        if !(score.mean >= 1.0 && score.mean <= k as f64) {
            out_of_range += 1;
        }
        cases += 1;
    }
    let mut uniform_err = 0.0f64;
    let mut onehot_err = 0.0f64;
    for k in 2..=10 {
        let rows = 10 * k;
        let uniform = ClassifierProbs::new(rows, k, vec![1.0 / k as f64; rows * k])?;
        uniform_err = uniform_err.max((inception_score(&uniform, 10)?.mean - 1.0).abs());
        let onehot: Vec<f64> = (0..rows)
            .flat_map(|i| (0..k).map(move |j| if i % k == j { 1.0 } else { 0.0 }))
            .collect();
        let onehot = ClassifierProbs::new(rows, k, onehot)?;
        onehot_err = onehot_err.max((inception_score(&onehot, 10)?.mean - k as f64).abs());
        cases += 2;
    }
    let passed = out_of_range == 0 && uniform_err <= 1e-12 && onehot_err <= 1e-12;
    Ok((
        passed,
        cases,
        format!("out_of_range={out_of_range} uniform_err={uniform_err:.3e} one_hot_err={onehot_err:.3e}"),
    ))
}

// ------------------------------------------------------------- engineering

/// Power-iteration warmup at construction, then per-step refreshes with the
/// persisted singular vectors, as during training.
const SPECTRAL_WARMUP: usize = 5;
const SPECTRAL_REFRESHES: usize = 20;

fn spectral_norm_oracle(seed: u64) -> Res<(bool, usize, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9b05);
    let mut worst = 0.0f64;
    let cases = 30;
    for _ in 0..cases {
        let (r, c) = (rng.random_range(2..=16), rng.random_range(2..=16));
        let w = normal_tensor(&mut rng, &[r, c]);
        let mut sn = SpectralNorm::new(&w, SPECTRAL_WARMUP, &mut rng)?;
        let mut effective = spectral_normalize(&w, &mut sn)?;
        for _ in 1..SPECTRAL_REFRESHES {
            effective = spectral_normalize(&w, &mut sn)?;
        }
        let top = DMatrix::from_row_slice(r, c, effective.data())
            .singular_values()
            .max();
        worst = worst.max((top - 1.0).abs());
    }
    Ok((
        worst <= 1e-2,
        cases,
        format!("max|sigma_1-1|={worst:.3e} (tol 1e-2, k={SPECTRAL_WARMUP}+{SPECTRAL_REFRESHES})"),
    ))
}

fn idx_round_trip(seed: u64) -> Res<(bool, usize, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1f83);
    let mut failures = 0;
    let cases = 60;
    for i in 0..cases {
        let rank = rng.random_range(1..=3);
        let shape: Vec<usize> = (0..rank).map(|_| rng.random_range(1..=6)).collect();
        let n: usize = shape.iter().product();
        let data = match i % 6 {
            0 => IdxData::U8((0..n).map(|_| rng.random()).collect()),
            1 => IdxData::I8((0..n).map(|_| rng.random()).collect()),
            2 => IdxData::I16((0..n).map(|_| rng.random()).collect()),
            3 => IdxData::I32((0..n).map(|_| rng.random()).collect()),
            4 => IdxData::F32((0..n).map(|_| rng.sample(StandardNormal)).collect()),
            _ => IdxData::F64((0..n).map(|_| rng.sample(StandardNormal)).collect()),
        };
        let t = IdxTensor::new(shape, data)?;
        let bytes = serialize_idx(&t);
        let back = parse_idx(&bytes)?;
        if back != t || serialize_idx(&back) != bytes {
            failures += 1;
        }
    }
    Ok((failures == 0, cases, format!("mismatches={failures}")))
}

fn tiny_config(extra: &[&str]) -> Res<ExperimentConfig> {
    let mut keys = vec![
        "steps=30",
        "eval_interval=10",
        "eval_samples=200",
        "reference_samples=1000",
        "batch_size=16",
        "generator.sizes=[16, 16, 2]",
        "discriminator.sizes=[2, 16, 1]",
    ];
    keys.extend_from_slice(extra);
    let owned: Vec<String> = keys.iter().map(|s| s.to_string()).collect();
    Ok(ExperimentConfig::from_toml_with_overrides("", &owned)?)
}

fn checkpoint_round_trip() -> Res<(bool, usize, String)> {
    let mut failures = 0;
    let mut cases = 0;
    for loss in ["rmcos", "ra-ls"] {
        let mut trainer = Trainer::new(tiny_config(&[&format!("loss={loss}")])?)?;
        for _ in 0..5 {
            trainer.train_step()?;
        }
        let ckpt = trainer.checkpoint();
        let text = ckpt.to_json()?;
        let back = Checkpoint::from_json(&text)?;
        if back != ckpt || back.to_json()? != text {
            failures += 1;
        }
        cases += 1;
    }
    Ok((failures == 0, cases, format!("mismatches={failures}")))
}

fn determinism_replay() -> Res<(bool, usize, String)> {
    let config = tiny_config(&[])?;
    let a = Trainer::new(config.clone())?.run(None)?;
    let b = Trainer::new(config)?.run(None)?;
    let same_report = a.report.without_wall_clock() == b.report.without_wall_clock();
    let mut ca = a.final_checkpoint;
    let mut cb = b.final_checkpoint;
    ca.report = ca.report.without_wall_clock();
    cb.report = cb.report.without_wall_clock();
    let same_state = ca == cb;
    Ok((
        same_report && same_state,
        1,
        format!("report_equal={same_report} state_equal={same_state}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_property_is_none() {
        assert!(run_property("nope", &Objectives::default(), 0).is_none());
    }

    #[test]
    fn reduction_passes_for_the_real_objective() {
        let r = run_property("rsgan-reduction", &Objectives::default(), 1).unwrap();
        assert!(r.passed, "{r}");
        assert!(r.to_string().starts_with("PASS rsgan-reduction cases=1000"));
    }

    #[test]
    fn sign_flipped_objective_fails_reduction_and_ordering() {
        fn flipped(real: &[f64], fake: &[f64], s: f64, m: f64) -> Result<f64, LossError> {
            Ok(-rmcos_objective(real, fake, s, m)?)
        }
        let broken = Objectives {
            rmcos: flipped,
            ..Objectives::default()
        };
        let r = run_property("rsgan-reduction", &broken, 1).unwrap();
        assert!(!r.passed);
        assert!(r.to_string().starts_with("FAIL rsgan-reduction"));
        assert!(!run_property("margin-ordering", &broken, 1).unwrap().passed);
    }

    #[test]
    fn grid_has_step_five_hundredths() {
        let g = margin_grid();
        assert_eq!(g.len(), 21);
        assert!((g[20] - 0.5).abs() < 1e-12);
        assert!(g.windows(2).all(|w| ((w[1] - w[0]) - 0.05).abs() < 1e-12));
    }
}
