use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    batchnorm_forward, dense_forward, Activation, BatchNormLayer, BatchStats, CriticHead, DenseLayer,
    HeadVariant, LayerError, Mode, SpectralNorm,
};
use crate::autodiff::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generator,
    Discriminator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Dense(DenseLayer),
    BatchNorm(BatchNormLayer),
    Activation(Activation),
}

/// Architecture description consumed by [`build_network`].
///
/// `sizes` lists layer widths from input to output. For a discriminator the
/// last entry must be 1 and stands for the critic head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub role: Role,
    pub sizes: Vec<usize>,
    pub head: HeadVariant,
    pub batch_norm: bool,
    pub spectral_norm: bool,
    pub hidden_activation: Activation,
    /// Generator output nonlinearity: identity for unbounded toy data, tanh
    /// for images scaled to `[-1, 1]`.
    pub output_activation: Activation,
    /// Standard deviation of the zero-mean Gaussian weight initializer.
    pub init_std: f64,
    /// Power iterations run once at build time.
    pub warmup_iterations: usize,
    /// Power iterations per training-step refresh.
    pub train_iterations: usize,
}

impl NetworkSpec {
    pub fn generator(sizes: Vec<usize>) -> Self {
        Self {
            role: Role::Generator,
            sizes,
            head: HeadVariant::Linear,
            batch_norm: true,
            spectral_norm: false,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
            init_std: 0.02,
            warmup_iterations: 5,
            train_iterations: 1,
        }
    }

    pub fn discriminator(sizes: Vec<usize>, head: HeadVariant) -> Self {
        Self {
            role: Role::Discriminator,
            sizes,
            head,
            batch_norm: false,
            spectral_norm: true,
            hidden_activation: Activation::LeakyRelu(0.2),
            output_activation: Activation::Identity,
            init_std: 0.02,
            warmup_iterations: 5,
            train_iterations: 1,
        }
    }
}

/// Multi-layer perceptron in either role.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub role: Role,
    pub layers: Vec<Layer>,
    /// Present exactly for discriminators.
    pub head: Option<CriticHead>,
}

/// Output of one recorded forward pass.
#[derive(Debug)]
pub struct ForwardPass {
    pub output: Var,
    /// Parameter leaves, in [`Mlp::parameters`] order.
    pub params: Vec<Var>,
    /// Batch statistics per batch-norm layer (layer index), training only.
    pub stats: Vec<(usize, BatchStats)>,
}

pub fn build_network<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Result<Mlp, LayerError> {
    if spec.sizes.len() < 2 {
        return Err(LayerError::InvalidSpec(format!(
            "need at least input and output sizes, got {:?}",
            spec.sizes
        )));
    }
    if spec.sizes.contains(&0) {
        return Err(LayerError::InvalidSpec(format!("zero layer width in {:?}", spec.sizes)));
    }
    if !(spec.init_std > 0.0) {
        return Err(LayerError::InvalidSpec("init_std must be positive".into()));
    }
    let normal = Normal::new(0.0, spec.init_std).expect("positive std");
    let gaussian = |shape: &[usize], rng: &mut R| Tensor::from_fn(shape, |_| normal.sample(rng));
    let mut layers = Vec::new();
    let sn_state = |w: &Tensor, rng: &mut R| -> Result<SpectralNorm, LayerError> {
        let mut sn = SpectralNorm::new(w, spec.warmup_iterations.max(1), rng)?;
        sn.power_iterate(w)?;
        sn.iterations = spec.train_iterations.max(1);
        Ok(sn)
    };

    match spec.role {
        Role::Generator => {
            let n = spec.sizes.len() - 1;
            for (i, pair) in spec.sizes.windows(2).enumerate() {
                let (inp, out) = (pair[0], pair[1]);
                let last = i + 1 == n;
                let weight = gaussian(&[out, inp], rng);
                let activation = if last {
                    spec.output_activation
                } else if spec.batch_norm {
                    Activation::Identity
                } else {
                    spec.hidden_activation
                };
                let mut dense = DenseLayer::new(weight, Tensor::zeros(&[out]), activation)?;
                if spec.spectral_norm {
                    dense.spectral = Some(sn_state(&dense.weight, rng)?);
                }
                layers.push(Layer::Dense(dense));
                if !last && spec.batch_norm {
                    layers.push(Layer::BatchNorm(BatchNormLayer::new(out)));
                    layers.push(Layer::Activation(spec.hidden_activation));
                }
            }
            Ok(Mlp {
                role: Role::Generator,
                layers,
                head: None,
            })
        }
        Role::Discriminator => {
            if spec.sizes.len() < 3 || *spec.sizes.last().unwrap() != 1 {
                return Err(LayerError::InvalidSpec(format!(
                    "discriminator sizes must end in a single critic output after at least one hidden layer, got {:?}",
                    spec.sizes
                )));
            }
            let body = &spec.sizes[..spec.sizes.len() - 1];
            for pair in body.windows(2) {
                let (inp, out) = (pair[0], pair[1]);
                let weight = gaussian(&[out, inp], rng);
                let mut dense = DenseLayer::new(weight, Tensor::zeros(&[out]), spec.hidden_activation)?;
                if spec.spectral_norm {
                    dense.spectral = Some(sn_state(&dense.weight, rng)?);
                }
                layers.push(Layer::Dense(dense));
                if spec.batch_norm {
                    layers.push(Layer::BatchNorm(BatchNormLayer::new(out)));
                }
            }
            let d = *body.last().unwrap();
            let mut head = CriticHead::new(spec.head, gaussian(&[d], rng))?;
            if spec.spectral_norm && spec.head == HeadVariant::Linear {
                let row = head.weight.clone().reshape(vec![1, d])?;
                head.spectral = Some(sn_state(&row, rng)?);
            }
            Ok(Mlp {
                role: Role::Discriminator,
                layers,
                head: Some(head),
            })
        }
    }
}

impl Mlp {
    pub fn input_dim(&self) -> usize {
        self.layers
            .iter()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d.in_features()),
                _ => None,
            })
            .expect("network has a dense layer")
    }

    pub fn output_dim(&self) -> usize {
        if self.head.is_some() {
            return 1;
        }
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d.out_features()),
                _ => None,
            })
            .expect("network has a dense layer")
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => out.extend([&d.weight, &d.bias]),
                Layer::BatchNorm(b) => out.extend([&b.gamma, &b.beta]),
                Layer::Activation(_) => {}
            }
        }
        if let Some(h) = &self.head {
            out.push(&h.weight);
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => out.extend([&mut d.weight, &mut d.bias]),
                Layer::BatchNorm(b) => out.extend([&mut b.gamma, &mut b.beta]),
                Layer::Activation(_) => {}
            }
        }
        if let Some(h) = &mut self.head {
            out.push(&mut h.weight);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.numel()).sum()
    }

    /// Replaces every parameter, in [`Mlp::parameters`] order.
    pub fn set_parameters(&mut self, values: &[Tensor]) -> Result<(), LayerError> {
        let mut slots = self.parameters_mut();
        if slots.len() != values.len() {
            return Err(LayerError::InvalidSpec(format!(
                "expected {} parameter tensors, got {}",
                slots.len(),
                values.len()
            )));
        }
        for (slot, v) in slots.iter_mut().zip(values) {
            if slot.shape() != v.shape() {
                return Err(LayerError::InvalidSpec(format!(
                    "parameter shape {:?} cannot take {:?}",
                    slot.shape(),
                    v.shape()
                )));
            }
            **slot = v.clone();
        }
        Ok(())
    }

    /// Records a forward pass of `x` (`[batch, input_dim]`). Generators
    /// return `[batch, output_dim]`; discriminators return critic values of
    /// shape `[batch]`.
    pub fn forward(&self, tape: &mut Tape, x: Var, mode: Mode) -> Result<ForwardPass, LayerError> {
        let mut h = x;
        let mut params = Vec::new();
        let mut stats = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Dense(d) => {
                    let (out, p) = dense_forward(d, tape, h, mode.track_params)?;
                    params.extend(p);
                    h = out;
                }
                Layer::BatchNorm(b) => {
                    let (out, p, s) = batchnorm_forward(b, tape, h, mode)?;
                    params.extend(p);
                    if let Some(s) = s {
                        stats.push((i, s));
                    }
                    h = out;
                }
                Layer::Activation(a) => h = a.apply(tape, h)?,
            }
        }
        if let Some(head) = &self.head {
            let (logits, w) = head.record(tape, h, mode.track_params)?;
            params.push(w);
            h = logits;
        }
        Ok(ForwardPass {
            output: h,
            params,
            stats,
        })
    }

    /// Untracked evaluation of a whole batch.
    pub fn evaluate(&self, input: &Tensor, mode: Mode) -> Result<Tensor, LayerError> {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let pass = self.forward(&mut tape, x, Mode { track_params: false, ..mode })?;
        Ok(tape.value(pass.output).clone())
    }

    /// Folds training-mode batch statistics into the running averages.
    pub fn absorb(&mut self, stats: &[(usize, BatchStats)]) {
        for (i, s) in stats {
            if let Some(Layer::BatchNorm(b)) = self.layers.get_mut(*i) {
                b.absorb(s);
            }
        }
    }

    /// One refresh of every spectral-norm estimate.
    pub fn power_iterate(&mut self) -> Result<(), LayerError> {
        for layer in &mut self.layers {
            if let Layer::Dense(DenseLayer {
                weight,
                spectral: Some(sn),
                ..
            }) = layer
            {
                sn.power_iterate(weight)?;
            }
        }
        if let Some(CriticHead {
            weight,
            spectral: Some(sn),
            ..
        }) = &mut self.head
        {
            let row = weight.clone().reshape(vec![1, weight.numel()])?;
            sn.power_iterate(&row)?;
        }
        Ok(())
    }

    /// Effective (spectrally normalized where enabled) dense weights.
    pub fn effective_weights(&self) -> Result<Vec<Tensor>, LayerError> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Layer::Dense(d) = layer {
                out.push(match &d.spectral {
                    Some(sn) => {
                        let s = sn.sigma(&d.weight)?;
                        d.weight.map(|x| x / s)
                    }
                    None => d.weight.clone(),
                });
            }
        }
        Ok(out)
    }
}
