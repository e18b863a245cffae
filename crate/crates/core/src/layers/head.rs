use serde::{Deserialize, Serialize};

use super::{leaf, LayerError, SpectralNorm};
use crate::autodiff::{AutodiffError, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadVariant {
    /// `W^T v` with a zero bias.
    Linear,
    /// Cosine of the angle between `W` and `v`; always in `[-1, 1]`.
    Cosine,
}

/// Final discriminator layer mapping a feature vector to a scalar critic
/// value. The scale `s` of the margin-cosine loss is applied by the loss,
/// not here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticHead {
    pub variant: HeadVariant,
    pub weight: Tensor,
    /// Only consulted by the linear variant; the cosine variant is already
    /// invariant to the scale of `W`.
    pub spectral: Option<SpectralNorm>,
}

impl CriticHead {
    pub fn new(variant: HeadVariant, weight: Tensor) -> Result<Self, LayerError> {
        if weight.rank() != 1 {
            return Err(LayerError::InvalidSpec(format!(
                "critic weight must be a vector, got shape {:?}",
                weight.shape()
            )));
        }
        Ok(Self {
            variant,
            weight,
            spectral: None,
        })
    }

    pub fn features(&self) -> usize {
        self.weight.numel()
    }

    /// Records the head on the tape. `features` is `[batch, d]`; the result
    /// is `[batch]`.
    pub fn record(&self, tape: &mut Tape, features: Var, track_params: bool) -> Result<(Var, Var), LayerError> {
        let (batch, d) = tape.value(features).dims2()?;
        if d != self.features() {
            return Err(LayerError::InputWidth {
                layer: "critic_head",
                expected: self.features(),
                got: d,
            });
        }
        let w = leaf(tape, &self.weight, track_params);
        let column = tape.reshape(w, &[d, 1])?;
        let logits = match self.variant {
            HeadVariant::Linear => match &self.spectral {
                Some(sn) => {
                    let row = tape.reshape(w, &[1, d])?;
                    let normalized = sn.record_normalized(tape, row)?;
                    let col = tape.reshape(normalized, &[d, 1])?;
                    tape.matmul(features, col)?
                }
                None => tape.matmul(features, column)?,
            },
            HeadVariant::Cosine => {
                let unit = tape.l2_normalize_rows(features).map_err(|e| match e {
                    AutodiffError::Degenerate { row, .. } => LayerError::DegenerateFeatures(row),
                    other => other.into(),
                })?;
                let row = tape.reshape(w, &[1, d])?;
                let w_unit = tape.l2_normalize_rows(row).map_err(|e| match e {
                    AutodiffError::Degenerate { .. } => {
                        LayerError::InvalidSpec("cosine critic weight has zero norm".into())
                    }
                    other => other.into(),
                })?;
                let w_col = tape.transpose(w_unit)?;
                tape.matmul(unit, w_col)?
            }
        };
        Ok((tape.reshape(logits, &[batch])?, w))
    }
}

/// Untracked per-sample critic values for a `[batch, d]` feature matrix.
pub fn critic_logit(head: &CriticHead, features: &Tensor) -> Result<Tensor, LayerError> {
    let mut tape = Tape::new();
    let f = tape.constant(features.clone());
    let (logits, _) = head.record(&mut tape, f, false)?;
    Ok(tape.value(logits).clone())
}
