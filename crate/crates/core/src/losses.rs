//! Discriminator/generator loss pairs and executable checks of the margin
//! monotonicity of the relativistic margin-cosine objective.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{kernels, AutodiffError, Tape, Tensor, Var};
use crate::layers::HeadVariant;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("empty logit batch")]
    EmptyBatch,
    #[error("real and fake logits differ in length ({real} vs {fake})")]
    LengthMismatch { real: usize, fake: usize },
    #[error("logits must be one-dimensional, got shape {0:?}")]
    NotAVector(Vec<usize>),
    #[error("rmcos needs cosine-head logits in [-1, 1], found {0}")]
    HeadMismatch(f64),
    #[error("scale s must be positive, got {0}")]
    InvalidScale(f64),
    #[error("margin grid must have at least 3 strictly increasing points")]
    InvalidGrid,
    #[error("link {link} produced non-positive value {value} at {input}")]
    LinkDomain {
        link: &'static str,
        input: f64,
        value: f64,
    },
}

/// The eight supported adversarial loss formulations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "ce")]
    Ce,
    #[serde(rename = "r-ce")]
    RCe,
    #[serde(rename = "ra-ce")]
    RaCe,
    #[serde(rename = "ls")]
    Ls,
    #[serde(rename = "ra-ls")]
    RaLs,
    #[serde(rename = "hinge")]
    Hinge,
    #[serde(rename = "ra-hinge")]
    RaHinge,
    #[serde(rename = "rmcos")]
    RmCos,
}

impl LossKind {
    pub const ALL: [LossKind; 8] = [
        LossKind::Ce,
        LossKind::RCe,
        LossKind::RaCe,
        LossKind::Ls,
        LossKind::RaLs,
        LossKind::Hinge,
        LossKind::RaHinge,
        LossKind::RmCos,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ce => "ce",
            LossKind::RCe => "r-ce",
            LossKind::RaCe => "ra-ce",
            LossKind::Ls => "ls",
            LossKind::RaLs => "ra-ls",
            LossKind::Hinge => "hinge",
            LossKind::RaHinge => "ra-hinge",
            LossKind::RmCos => "rmcos",
        }
    }

    /// Critic head this loss is defined over.
    pub fn head(self) -> HeadVariant {
        match self {
            LossKind::RmCos => HeadVariant::Cosine,
            _ => HeadVariant::Linear,
        }
    }

    pub fn valid_names() -> String {
        LossKind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown loss kind {given:?}; valid kinds: {valid}")]
pub struct UnknownLossKind {
    pub given: String,
    pub valid: String,
}

impl FromStr for LossKind {
    type Err = UnknownLossKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == lower || k.name().replace('-', "_") == lower)
            .ok_or_else(|| UnknownLossKind {
                given: s.to_string(),
                valid: LossKind::valid_names(),
            })
    }
}

/// Scale and margin of the margin-cosine loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginCosineParams {
    pub scale: f64,
    pub margin: f64,
}

impl Default for MarginCosineParams {
    fn default() -> Self {
        Self {
            scale: 10.0,
            margin: 0.15,
        }
    }
}

/// Paired critic outputs on the tape: `real[i]` is paired with `fake[i]`.
#[derive(Clone, Copy, Debug)]
pub struct LogitBatch {
    pub real: Var,
    pub fake: Var,
}

const COSINE_SLACK: f64 = 1e-9;

impl LogitBatch {
    pub fn new(tape: &Tape, real: Var, fake: Var) -> Result<Self, LossError> {
        let r = tape.value(real);
        let f = tape.value(fake);
        for t in [r, f] {
            if t.rank() != 1 {
                return Err(LossError::NotAVector(t.shape().to_vec()));
            }
        }
        if r.numel() != f.numel() {
            return Err(LossError::LengthMismatch {
                real: r.numel(),
                fake: f.numel(),
            });
        }
        Ok(Self { real, fake })
    }

    /// Records two untracked logit vectors.
    pub fn constants(tape: &mut Tape, real: &[f64], fake: &[f64]) -> Result<Self, LossError> {
        if real.is_empty() || fake.is_empty() {
            return Err(LossError::EmptyBatch);
        }
        let r = tape.constant(Tensor::vector(real));
        let f = tape.constant(Tensor::vector(fake));
        Self::new(tape, r, f)
    }

    /// Paired difference `h = C(x) - C(G(z))`.
    pub fn difference(&self, tape: &mut Tape) -> Result<Var, LossError> {
        Ok(tape.sub(self.real, self.fake)?)
    }

    fn check_cosine_range(&self, tape: &Tape) -> Result<(), LossError> {
        for v in [self.real, self.fake] {
            if let Some(&bad) = tape
                .value(v)
                .data()
                .iter()
                .find(|x| !(x.abs() <= 1.0 + COSINE_SLACK))
            {
                return Err(LossError::HeadMismatch(bad));
            }
        }
        Ok(())
    }
}

fn neg_mean_log_sigmoid(tape: &mut Tape, x: Var) -> Result<Var, AutodiffError> {
    let ls = tape.log_sigmoid(x)?;
    let m = tape.mean(ls)?;
    tape.neg(m)
}

/// `x - mean(other)`, broadcast over `x`.
fn minus_mean_of(tape: &mut Tape, x: Var, other: Var) -> Result<Var, AutodiffError> {
    let m = tape.mean(other)?;
    let m = tape.expand_as(m, x)?;
    tape.sub(x, m)
}

fn half_mean_square_shifted(tape: &mut Tape, x: Var, target: f64) -> Result<Var, AutodiffError> {
    let d = tape.shift(x, -target)?;
    let sq = tape.square(d)?;
    let m = tape.mean(sq)?;
    tape.scale(m, 0.5)
}

fn mean_square_shifted(tape: &mut Tape, x: Var, shift: f64) -> Result<Var, AutodiffError> {
    let d = tape.shift(x, shift)?;
    let sq = tape.square(d)?;
    tape.mean(sq)
}

/// `mean max(0, 1 + sign * x)`
fn mean_hinge(tape: &mut Tape, x: Var, sign: f64) -> Result<Var, AutodiffError> {
    let a = tape.scale(x, sign)?;
    let a = tape.shift(a, 1.0)?;
    let c = tape.clamp_min(a, 0.0)?;
    tape.mean(c)
}

/// `-mean log sigmoid(s * (a - b - m))` with a tape-resident margin.
fn margin_cosine_term(tape: &mut Tape, a: Var, b: Var, scale: f64, margin: Var) -> Result<Var, AutodiffError> {
    let diff = tape.sub(a, b)?;
    let m = tape.expand_as(margin, diff)?;
    let shifted = tape.sub(diff, m)?;
    let scaled = tape.scale(shifted, scale)?;
    neg_mean_log_sigmoid(tape, scaled)
}

fn validate(tape: &Tape, kind: LossKind, batch: &LogitBatch, params: &MarginCosineParams) -> Result<(), LossError> {
    LogitBatch::new(tape, batch.real, batch.fake)?;
    if kind == LossKind::RmCos {
        if !(params.scale > 0.0) {
            return Err(LossError::InvalidScale(params.scale));
        }
        batch.check_cosine_range(tape)?;
    }
    Ok(())
}

/// The two margin-cosine terms (`L_D`, `L_G`) with the margin supplied as a
/// tape value, so the objective can be differentiated with respect to it.
pub fn rmcos_terms(
    tape: &mut Tape,
    batch: &LogitBatch,
    scale: f64,
    margin: Var,
) -> Result<(Var, Var), LossError> {
    let params = MarginCosineParams { scale, margin: 0.0 };
    validate(tape, LossKind::RmCos, batch, &params)?;
    let d = margin_cosine_term(tape, batch.real, batch.fake, scale, margin)?;
    let g = margin_cosine_term(tape, batch.fake, batch.real, scale, margin)?;
    Ok((d, g))
}

/// Discriminator-side loss, recorded on the tape.
pub fn discriminator_loss(
    tape: &mut Tape,
    kind: LossKind,
    batch: &LogitBatch,
    params: &MarginCosineParams,
) -> Result<Var, LossError> {
    validate(tape, kind, batch, params)?;
    let (cr, cf) = (batch.real, batch.fake);
    let loss = match kind {
        LossKind::Ce => {
            let a = neg_mean_log_sigmoid(tape, cr)?;
            let nf = tape.neg(cf)?;
            let b = neg_mean_log_sigmoid(tape, nf)?;
            tape.add(a, b)?
        }
        LossKind::RCe => {
            let h = tape.sub(cr, cf)?;
            neg_mean_log_sigmoid(tape, h)?
        }
        LossKind::RaCe => {
            let r = minus_mean_of(tape, cr, cf)?;
            let f = minus_mean_of(tape, cf, cr)?;
            let a = neg_mean_log_sigmoid(tape, r)?;
            let nf = tape.neg(f)?;
            let b = neg_mean_log_sigmoid(tape, nf)?;
            tape.add(a, b)?
        }
        LossKind::Ls => {
            let a = half_mean_square_shifted(tape, cr, 1.0)?;
            let b = half_mean_square_shifted(tape, cf, 0.0)?;
            tape.add(a, b)?
        }
        LossKind::RaLs => {
            let r = minus_mean_of(tape, cr, cf)?;
            let f = minus_mean_of(tape, cf, cr)?;
            let a = mean_square_shifted(tape, r, -1.0)?;
            let b = mean_square_shifted(tape, f, 1.0)?;
            tape.add(a, b)?
        }
        LossKind::Hinge => {
            let a = mean_hinge(tape, cr, -1.0)?;
            let b = mean_hinge(tape, cf, 1.0)?;
            tape.add(a, b)?
        }
        LossKind::RaHinge => {
            let r = minus_mean_of(tape, cr, cf)?;
            let f = minus_mean_of(tape, cf, cr)?;
            let a = mean_hinge(tape, r, -1.0)?;
            let b = mean_hinge(tape, f, 1.0)?;
            tape.add(a, b)?
        }
        LossKind::RmCos => {
            let m = tape.scalar(params.margin);
            margin_cosine_term(tape, cr, cf, params.scale, m)?
        }
    };
    Ok(loss)
}

/// Generator-side loss, recorded on the tape.
pub fn generator_loss(
    tape: &mut Tape,
    kind: LossKind,
    batch: &LogitBatch,
    params: &MarginCosineParams,
) -> Result<Var, LossError> {
    validate(tape, kind, batch, params)?;
    let (cr, cf) = (batch.real, batch.fake);
    let loss = match kind {
        LossKind::Ce => neg_mean_log_sigmoid(tape, cf)?,
        LossKind::RCe => {
            let h = tape.sub(cf, cr)?;
            neg_mean_log_sigmoid(tape, h)?
        }
        LossKind::RaCe => {
            let f = minus_mean_of(tape, cf, cr)?;
            let r = minus_mean_of(tape, cr, cf)?;
            let a = neg_mean_log_sigmoid(tape, f)?;
            let nr = tape.neg(r)?;
            let b = neg_mean_log_sigmoid(tape, nr)?;
            tape.add(a, b)?
        }
        LossKind::Ls => half_mean_square_shifted(tape, cf, 1.0)?,
        LossKind::RaLs => {
            let f = minus_mean_of(tape, cf, cr)?;
            let r = minus_mean_of(tape, cr, cf)?;
            let a = mean_square_shifted(tape, f, -1.0)?;
            let b = mean_square_shifted(tape, r, 1.0)?;
            tape.add(a, b)?
        }
        LossKind::Hinge => {
            let m = tape.mean(cf)?;
            tape.neg(m)?
        }
        LossKind::RaHinge => {
            let f = minus_mean_of(tape, cf, cr)?;
            let r = minus_mean_of(tape, cr, cf)?;
            let a = mean_hinge(tape, f, -1.0)?;
            let b = mean_hinge(tape, r, 1.0)?;
            tape.add(a, b)?
        }
        LossKind::RmCos => {
            let m = tape.scalar(params.margin);
            margin_cosine_term(tape, cf, cr, params.scale, m)?
        }
    };
    Ok(loss)
}

/// Untracked `(L_D, L_G)` for plain logit slices.
pub fn loss_pair(
    kind: LossKind,
    real: &[f64],
    fake: &[f64],
    params: &MarginCosineParams,
) -> Result<(f64, f64), LossError> {
    let mut tape = Tape::new();
    let batch = LogitBatch::constants(&mut tape, real, fake)?;
    let d = discriminator_loss(&mut tape, kind, &batch, params)?;
    let g = generator_loss(&mut tape, kind, &batch, params)?;
    Ok((tape.value(d).item()?, tape.value(g).item()?))
}

/// Full margin-cosine saddle objective `L_D + L_G`.
pub fn rmcos_objective(real: &[f64], fake: &[f64], scale: f64, margin: f64) -> Result<f64, LossError> {
    let (d, g) = loss_pair(LossKind::RmCos, real, fake, &MarginCosineParams { scale, margin })?;
    Ok(d + g)
}

/// Relativistic cross-entropy objective with both terms.
pub fn rsgan_objective(real: &[f64], fake: &[f64]) -> Result<f64, LossError> {
    let (d, g) = loss_pair(LossKind::RCe, real, fake, &MarginCosineParams::default())?;
    Ok(d + g)
}

/// Objective and its margin derivative from one taped evaluation.
pub fn rmcos_objective_with_margin_grad(
    real: &[f64],
    fake: &[f64],
    scale: f64,
    margin: f64,
) -> Result<(f64, f64), LossError> {
    let mut tape = Tape::new();
    let batch = LogitBatch::constants(&mut tape, real, fake)?;
    let m = tape.param(Tensor::scalar(margin));
    let (d, g) = rmcos_terms(&mut tape, &batch, scale, m)?;
    let total = tape.add(d, g)?;
    let grads = tape.backward(total)?;
    Ok((tape.value(total).item()?, grads.get(m).item()?))
}

/// Outcome of a sweep of the objective over a margin grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityReport {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// `dL/dm` at every grid point, from the tape.
    pub derivatives: Vec<f64>,
    pub non_decreasing: bool,
    pub strictly_increasing: bool,
    pub min_derivative: f64,
}

impl MonotonicityReport {
    /// Non-decreasing values and no derivative below `-1e-12`.
    pub fn passed(&self) -> bool {
        self.non_decreasing && self.min_derivative >= -1e-12
    }
}

fn check_grid(grid: &[f64]) -> Result<(), LossError> {
    if grid.len() < 3 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(LossError::InvalidGrid);
    }
    Ok(())
}

fn summarize(grid: &[f64], values: Vec<f64>, derivatives: Vec<f64>) -> MonotonicityReport {
    let non_decreasing = values.windows(2).all(|w| w[1] >= w[0]);
    let strictly_increasing = values.windows(2).all(|w| w[1] > w[0]);
    let min_derivative = derivatives.iter().copied().fold(f64::INFINITY, f64::min);
    MonotonicityReport {
        grid: grid.to_vec(),
        values,
        derivatives,
        non_decreasing,
        strictly_increasing,
        min_derivative,
    }
}

/// Evaluates the margin-cosine objective across an increasing margin grid.
pub fn margin_monotonicity_check(
    real: &[f64],
    fake: &[f64],
    scale: f64,
    grid: &[f64],
) -> Result<MonotonicityReport, LossError> {
    check_grid(grid)?;
    let mut values = Vec::with_capacity(grid.len());
    let mut derivatives = Vec::with_capacity(grid.len());
    for &m in grid {
        let (v, d) = rmcos_objective_with_margin_grad(real, fake, scale, m)?;
        values.push(v);
        derivatives.push(d);
    }
    Ok(summarize(grid, values, derivatives))
}

/// Monotone, strictly positive link functions substituted for the sigmoid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Link {
    Sigmoid,
    Softplus,
    /// `(1 + tanh x) / 2`
    TanhShifted,
    /// `1/2 + atan(x) / pi`
    ArctanShifted,
}

impl Link {
    pub const ALL: [Link; 4] = [Link::Sigmoid, Link::Softplus, Link::TanhShifted, Link::ArctanShifted];

    pub fn name(self) -> &'static str {
        match self {
            Link::Sigmoid => "sigmoid",
            Link::Softplus => "softplus",
            Link::TanhShifted => "tanh-shifted",
            Link::ArctanShifted => "arctan-shifted",
        }
    }

    /// `log link(x)` evaluated without cancellation where possible.
    pub fn log_value(self, x: f64) -> Result<f64, LossError> {
        let value = match self {
            Link::Sigmoid => return Ok(kernels::log_sigmoid(x)),
            // (1 + tanh x)/2 = sigmoid(2x)
            Link::TanhShifted => return Ok(kernels::log_sigmoid(2.0 * x)),
            Link::Softplus => kernels::softplus(x),
            Link::ArctanShifted => {
                if x < 0.0 {
                    (-1.0 / x).atan() / std::f64::consts::PI
                } else {
                    0.5 + x.atan() / std::f64::consts::PI
                }
            }
        };
        if !(value > 0.0) {
            return Err(LossError::LinkDomain {
                link: self.name(),
                input: x,
                value,
            });
        }
        Ok(value.ln())
    }

    /// Derivative of `log link(x)`.
    pub fn log_derivative(self, x: f64) -> f64 {
        match self {
            Link::Sigmoid => kernels::sigmoid(-x),
            Link::TanhShifted => 2.0 * kernels::sigmoid(-2.0 * x),
            Link::Softplus => kernels::sigmoid(x) / kernels::softplus(x),
            Link::ArctanShifted => {
                let v = (-(self.log_value(x).unwrap_or(f64::NEG_INFINITY))).exp();
                v / (std::f64::consts::PI * (1.0 + x * x))
            }
        }
    }
}

/// `-mean log link(s(h - m)) - mean log link(s(-h - m))` and its margin
/// derivative, with `h` the paired critic difference.
pub fn generalized_objective(
    real: &[f64],
    fake: &[f64],
    scale: f64,
    margin: f64,
    link: Link,
) -> Result<(f64, f64), LossError> {
    if real.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    if real.len() != fake.len() {
        return Err(LossError::LengthMismatch {
            real: real.len(),
            fake: fake.len(),
        });
    }
    let n = real.len() as f64;
    let mut value = 0.0;
    let mut deriv = 0.0;
    for (&r, &f) in real.iter().zip(fake) {
        let h = r - f;
        for arg in [scale * (h - margin), scale * (-h - margin)] {
            value -= link.log_value(arg)? / n;
            // d/dm of -log link(s(. - m)) = s * (log link)'(arg)
            deriv += scale * link.log_derivative(arg) / n;
        }
    }
    Ok((value, deriv))
}

/// Monotonicity of the generalized objective across a margin grid.
pub fn link_function_variant_check(
    real: &[f64],
    fake: &[f64],
    scale: f64,
    grid: &[f64],
    link: Link,
) -> Result<MonotonicityReport, LossError> {
    check_grid(grid)?;
    let mut values = Vec::with_capacity(grid.len());
    let mut derivatives = Vec::with_capacity(grid.len());
    for &m in grid {
        let (v, d) = generalized_objective(real, fake, scale, m, link)?;
        values.push(v);
        derivatives.push(d);
    }
    Ok(summarize(grid, values, derivatives))
}
