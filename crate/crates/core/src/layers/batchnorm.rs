use serde::{Deserialize, Serialize};

use super::{leaf, LayerError, Mode};
use crate::autodiff::{Tape, Tensor, Var};

/// Per-feature batch normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNormLayer {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f64,
    pub momentum: f64,
}

/// Batch statistics observed in a training-mode pass. `var` is the unbiased
/// estimate used for the running average.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BatchNormLayer {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[features], 1.0),
            beta: Tensor::zeros(&[features]),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::filled(&[features], 1.0),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.numel()
    }

    /// Exponential moving average update of the running statistics.
    pub fn absorb(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, &b) in self.running_var.data_mut().iter_mut().zip(&stats.var) {
            *r = (1.0 - m) * *r + m * b;
        }
    }
}

/// Normalizes `x` (`[batch, features]`). In training mode the batch
/// statistics are returned for [`BatchNormLayer::absorb`]; the layer itself
/// is not modified.
pub fn batchnorm_forward(
    layer: &BatchNormLayer,
    tape: &mut Tape,
    x: Var,
    mode: Mode,
) -> Result<(Var, [Var; 2], Option<BatchStats>), LayerError> {
    let (batch, width) = tape.value(x).dims2()?;
    if width != layer.features() {
        return Err(LayerError::InputWidth {
            layer: "batch_norm",
            expected: layer.features(),
            got: width,
        });
    }
    let gamma = leaf(tape, &layer.gamma, mode.track_params);
    let beta = leaf(tape, &layer.beta, mode.track_params);
    let (xhat, stats) = if mode.training {
        if batch < 2 {
            return Err(LayerError::BatchTooSmall(batch));
        }
        let mean = tape.mean_rows(x)?;
        let mean_rows = tape.broadcast_rows(mean, batch)?;
        let centered = tape.sub(x, mean_rows)?;
        let sq = tape.square(centered)?;
        let var = tape.mean_rows(sq)?;
        let stats = BatchStats {
            mean: tape.value(mean).data().to_vec(),
            var: tape
                .value(var)
                .data()
                .iter()
                .map(|v| v * batch as f64 / (batch - 1) as f64)
                .collect(),
        };
        let shifted = tape.shift(var, layer.eps)?;
        let std = tape.sqrt(shifted)?;
        let std_rows = tape.broadcast_rows(std, batch)?;
        (tape.div(centered, std_rows)?, Some(stats))
    } else {
        let mean = tape.constant(layer.running_mean.clone());
        let std = tape.constant(layer.running_var.map(|v| (v + layer.eps).sqrt()));
        let mean_rows = tape.broadcast_rows(mean, batch)?;
        let std_rows = tape.broadcast_rows(std, batch)?;
        let centered = tape.sub(x, mean_rows)?;
        (tape.div(centered, std_rows)?, None)
    };
    let gamma_rows = tape.broadcast_rows(gamma, batch)?;
    let beta_rows = tape.broadcast_rows(beta, batch)?;
    let scaled = tape.mul(xhat, gamma_rows)?;
    let out = tape.add(scaled, beta_rows)?;
    Ok((out, [gamma, beta], stats))
}
