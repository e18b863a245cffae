use serde::{Deserialize, Serialize};

use super::{leaf, Activation, LayerError, SpectralNorm};
use crate::autodiff::{Tape, Tensor, Var};

/// Fully connected layer `y = act(x W^T + b)` with `W: out x in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
    /// When present the layer uses `W / sigma_1(W)` as its effective weight.
    pub spectral: Option<SpectralNorm>,
}

impl DenseLayer {
    pub fn new(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self, LayerError> {
        let (out, _) = weight.dims2()?;
        if bias.shape() != [out] {
            return Err(LayerError::InvalidSpec(format!(
                "bias shape {:?} does not match {out} outputs",
                bias.shape()
            )));
        }
        Ok(Self {
            weight,
            bias,
            activation,
            spectral: None,
        })
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// Records the layer on `tape`; returns the output and the `[W, b]` leaves.
pub fn dense_forward(
    layer: &DenseLayer,
    tape: &mut Tape,
    x: Var,
    track_params: bool,
) -> Result<(Var, [Var; 2]), LayerError> {
    let (batch, width) = tape.value(x).dims2()?;
    if width != layer.in_features() {
        return Err(LayerError::InputWidth {
            layer: "dense",
            expected: layer.in_features(),
            got: width,
        });
    }
    let w = leaf(tape, &layer.weight, track_params);
    let b = leaf(tape, &layer.bias, track_params);
    let effective = match &layer.spectral {
        Some(sn) => sn.record_normalized(tape, w)?,
        None => w,
    };
    let wt = tape.transpose(effective)?;
    let xw = tape.matmul(x, wt)?;
    let bias_rows = tape.broadcast_rows(b, batch)?;
    let pre = tape.add(xw, bias_rows)?;
    let out = layer.activation.apply(tape, pre)?;
    Ok((out, [w, b]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_difference_gradient, relative_error};

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = DenseLayer::new(
            Tensor::matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
            Tensor::zeros(&[2]),
            Activation::Identity,
        )
        .unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(&[vec![0.5, -2.0], vec![3.0, 4.0]]));
        let (y, _) = dense_forward(&layer, &mut tape, x, false).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn row_sum_layer() {
        let layer = DenseLayer::new(
            Tensor::matrix(&[vec![1.0, 1.0]]),
            Tensor::zeros(&[1]),
            Activation::Identity,
        )
        .unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(&[vec![2.0, 3.0]]));
        let (y, _) = dense_forward(&layer, &mut tape, x, false).unwrap();
        assert_eq!(tape.value(y).data(), &[5.0]);
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let layer = DenseLayer::new(Tensor::zeros(&[1, 3]), Tensor::zeros(&[1]), Activation::Identity).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[4, 2]));
        assert!(matches!(
            dense_forward(&layer, &mut tape, x, false),
            Err(LayerError::InputWidth { expected: 3, got: 2, .. })
        ));
    }

    #[test]
    fn weight_gradient_matches_finite_differences() {
        let weight = Tensor::from_fn(&[3, 4], |i| ((i * 7 % 11) as f64 - 5.0) * 0.23);
        let bias = Tensor::vector(&[0.1, -0.2, 0.3]);
        let input = Tensor::from_fn(&[5, 4], |i| ((i * 3 % 13) as f64 - 6.0) * 0.17);
        let loss = |w: &Tensor| -> Result<(f64, Tensor), LayerError> {
            let layer = DenseLayer::new(w.clone(), bias.clone(), Activation::Tanh)?;
            let mut tape = Tape::new();
            let x = tape.constant(input.clone());
            let (y, [wv, _]) = dense_forward(&layer, &mut tape, x, true)?;
            let sq = tape.square(y)?;
            let l = tape.mean(sq)?;
            let g = tape.backward(l)?;
            Ok((tape.value(l).item()?, g.get(wv)))
        };
        let (_, analytic) = loss(&weight).unwrap();
        let numeric = finite_difference_gradient(|w| loss(w).map(|r| r.0), &weight, 1e-5).unwrap();
        assert!(relative_error(analytic.data(), numeric.data()) < 1e-4);
    }
}
