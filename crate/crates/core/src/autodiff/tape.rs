use super::kernels::{self, log_sigmoid, sigmoid, softplus};
use super::{AutodiffError, Tensor};

/// Differentiable primitive operations. Scalar attributes ride along in the
/// variant.
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    /// `[m,k] x [k,n] -> [m,n]`
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale(f64),
    Shift(f64),
    Exp,
    Log,
    Sigmoid,
    LogSigmoid,
    Softplus,
    Tanh,
    Relu,
    LeakyRelu(f64),
    Square,
    Sqrt,
    /// Mean of all entries, shape `[1]`.
    Mean,
    /// Sum of all entries, shape `[1]`.
    Sum,
    /// Column means of a matrix: `[r,c] -> [c]`.
    MeanRows,
    /// Repeats a `[c]` or `[1,c]` row: `-> [rows, c]`.
    BroadcastRows(usize),
    /// Repeats a single-element tensor into the given shape.
    Expand(Vec<usize>),
    Reshape(Vec<usize>),
    /// Divides every row of a matrix (or a vector) by its L2 norm.
    L2NormalizeRows,
    ClampMin(f64),
    /// Stacks matrices with equal column counts.
    ConcatRows,
    /// Half-open range along the first axis.
    SliceRows(usize, usize),
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Transpose => "transpose",
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::Div => "div",
            Primitive::Neg => "neg",
            Primitive::Scale(_) => "scale",
            Primitive::Shift(_) => "shift",
            Primitive::Exp => "exp",
            Primitive::Log => "log",
            Primitive::Sigmoid => "sigmoid",
            Primitive::LogSigmoid => "log_sigmoid",
            Primitive::Softplus => "softplus",
            Primitive::Tanh => "tanh",
            Primitive::Relu => "relu",
            Primitive::LeakyRelu(_) => "leaky_relu",
            Primitive::Square => "square",
            Primitive::Sqrt => "sqrt",
            Primitive::Mean => "mean",
            Primitive::Sum => "sum",
            Primitive::MeanRows => "mean_rows",
            Primitive::BroadcastRows(_) => "broadcast_rows",
            Primitive::Expand(_) => "expand",
            Primitive::Reshape(_) => "reshape",
            Primitive::L2NormalizeRows => "l2_normalize_rows",
            Primitive::ClampMin(_) => "clamp_min",
            Primitive::ConcatRows => "concat_rows",
            Primitive::SliceRows(..) => "slice_rows",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Primitive::MatMul
            | Primitive::Add
            | Primitive::Sub
            | Primitive::Mul
            | Primitive::Div => Some(2),
            Primitive::ConcatRows => None,
            _ => Some(1),
        }
    }

    /// Location of the non-differentiable point for piecewise primitives.
    fn kink(&self) -> Option<f64> {
        match self {
            Primitive::Relu | Primitive::LeakyRelu(_) => Some(0.0),
            Primitive::ClampMin(floor) => Some(*floor),
            _ => None,
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), AutodiffError> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(AutodiffError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        })
    }
}

/// Elementwise pullback `f(x, y, upstream)` of a unary primitive.
fn unary(x: &Tensor, y: &Tensor, g: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Vec<Option<Tensor>> {
    let data = x
        .data()
        .iter()
        .zip(y.data())
        .zip(g.data())
        .map(|((&xv, &yv), &gv)| f(xv, yv, gv))
        .collect();
    vec![Some(Tensor::new(x.shape().to_vec(), data).expect("shape"))]
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shape preserved")
}

/// Rows/cols view for row-wise primitives: vectors count as a single row.
fn row_view(t: &Tensor) -> Result<(usize, usize), AutodiffError> {
    match t.shape() {
        &[c] => Ok((1, c)),
        &[r, c] => Ok((r, c)),
        s => Err(AutodiffError::RankMismatch {
            expected: 2,
            shape: s.to_vec(),
        }),
    }
}

/// Evaluates a primitive without recording anything.
pub fn apply_primitive(prim: &Primitive, inputs: &[&Tensor]) -> Result<Tensor, AutodiffError> {
    if let Some(n) = prim.arity() {
        if inputs.len() != n {
            return Err(AutodiffError::Arity {
                op: prim.name(),
                expected: n,
                got: inputs.len(),
            });
        }
    } else if inputs.is_empty() {
        return Err(AutodiffError::Arity {
            op: prim.name(),
            expected: 1,
            got: 0,
        });
    }
    let x = inputs[0];
    let out = match prim {
        Primitive::MatMul => {
            let b = inputs[1];
            let (m, k) = x.dims2()?;
            let (k2, n) = b.dims2()?;
            if k != k2 {
                return Err(AutodiffError::ShapeMismatch {
                    op: "matmul",
                    left: x.shape().to_vec(),
                    right: b.shape().to_vec(),
                });
            }
            Tensor::new(vec![m, n], kernels::matmul(x.data(), b.data(), m, k, n))?
        }
        Primitive::Transpose => {
            let (r, c) = x.dims2()?;
            Tensor::new(vec![c, r], kernels::transpose(x.data(), r, c))?
        }
        Primitive::Add => {
            same_shape("add", x, inputs[1])?;
            zip_map(x, inputs[1], |a, b| a + b)
        }
        Primitive::Sub => {
            same_shape("sub", x, inputs[1])?;
            zip_map(x, inputs[1], |a, b| a - b)
        }
        Primitive::Mul => {
            same_shape("mul", x, inputs[1])?;
            zip_map(x, inputs[1], |a, b| a * b)
        }
        Primitive::Div => {
            same_shape("div", x, inputs[1])?;
            zip_map(x, inputs[1], |a, b| a / b)
        }
        Primitive::Neg => x.map(|v| -v),
        Primitive::Scale(c) => x.map(|v| c * v),
        Primitive::Shift(c) => x.map(|v| v + c),
        Primitive::Exp => x.map(f64::exp),
        Primitive::Log => {
            if let Some(&bad) = x.data().iter().find(|&&v| !(v > 0.0)) {
                return Err(AutodiffError::Domain { op: "log", value: bad });
            }
            x.map(f64::ln)
        }
        Primitive::Sigmoid => x.map(sigmoid),
        Primitive::LogSigmoid => x.map(log_sigmoid),
        Primitive::Softplus => x.map(softplus),
        Primitive::Tanh => x.map(f64::tanh),
        Primitive::Relu => x.map(|v| if v > 0.0 { v } else { 0.0 }),
        Primitive::LeakyRelu(a) => x.map(|v| if v > 0.0 { v } else { a * v }),
        Primitive::Square => x.map(|v| v * v),
        Primitive::Sqrt => {
            if let Some(&bad) = x.data().iter().find(|&&v| !(v > 0.0)) {
                return Err(AutodiffError::Domain { op: "sqrt", value: bad });
            }
            x.map(f64::sqrt)
        }
        Primitive::Mean => Tensor::scalar(x.sum() / x.numel() as f64),
        Primitive::Sum => Tensor::scalar(x.sum()),
        Primitive::MeanRows => {
            let (r, c) = x.dims2()?;
            let mut acc = vec![0.0; c];
            for row in x.data().chunks_exact(c) {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
            acc.iter_mut().for_each(|a| *a /= r as f64);
            Tensor::new(vec![c], acc)?
        }
        Primitive::BroadcastRows(rows) => {
            let c = match x.shape() {
                &[c] | &[1, c] => c,
                s => {
                    return Err(AutodiffError::ShapeMismatch {
                        op: "broadcast_rows",
                        left: s.to_vec(),
                        right: vec![*rows, 0],
                    })
                }
            };
            let mut data = Vec::with_capacity(rows * c);
            for _ in 0..*rows {
                data.extend_from_slice(x.data());
            }
            Tensor::new(vec![*rows, c], data)?
        }
        Primitive::Expand(shape) => {
            let v = x.item()?;
            Tensor::new(shape.clone(), vec![v; shape.iter().product()])?
        }
        Primitive::Reshape(shape) => x.clone().reshape(shape.clone())?,
        Primitive::L2NormalizeRows => {
            let (_, c) = row_view(x)?;
            let mut data = x.data().to_vec();
            for (i, row) in data.chunks_exact_mut(c).enumerate() {
                let norm = kernels::dot(row, row).sqrt();
                if !(norm > 0.0) {
                    return Err(AutodiffError::Degenerate { op: "l2_normalize_rows", row: i });
                }
                row.iter_mut().for_each(|v| *v /= norm);
            }
            Tensor::new(x.shape().to_vec(), data)?
        }
        Primitive::ClampMin(floor) => x.map(|v| if v > *floor { v } else { *floor }),
        Primitive::ConcatRows => {
            let (_, c) = x.dims2()?;
            let mut rows = 0;
            let mut data = Vec::new();
            for t in inputs {
                let (r, c2) = t.dims2()?;
                if c2 != c {
                    return Err(AutodiffError::ShapeMismatch {
                        op: "concat_rows",
                        left: x.shape().to_vec(),
                        right: t.shape().to_vec(),
                    });
                }
                rows += r;
                data.extend_from_slice(t.data());
            }
            Tensor::new(vec![rows, c], data)?
        }
        Primitive::SliceRows(start, end) => {
            let first = x.shape()[0];
            if start >= end || *end > first {
                return Err(AutodiffError::ShapeMismatch {
                    op: "slice_rows",
                    left: x.shape().to_vec(),
                    right: vec![*start, *end],
                });
            }
            let inner: usize = x.shape()[1..].iter().product();
            let mut shape = x.shape().to_vec();
            shape[0] = end - start;
            Tensor::new(shape, x.data()[start * inner..end * inner].to_vec())?
        }
    };
    Ok(out)
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
struct Node {
    prim: Option<Primitive>,
    inputs: Vec<usize>,
    value: Tensor,
    tracked: bool,
}

/// Define-by-run tape. Node ids are creation order, so the recorded graph is
/// topologically sorted by construction.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `v`; zeros when `v` does not influence the root.
    pub fn get(&self, v: Var) -> Tensor {
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    pub fn is_connected(&self, v: Var) -> bool {
        matches!(self.grads.get(v.0), Some(Some(_)))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push_leaf(&mut self, value: Tensor, tracked: bool) -> Var {
        self.nodes.push(Node {
            prim: None,
            inputs: Vec::new(),
            value,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a gradient-tracked leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// Records an untracked leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn apply(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var, AutodiffError> {
        let values: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let value = apply_primitive(&prim, &values)?;
        let tracked = inputs.iter().any(|v| self.nodes[v.0].tracked);
        self.nodes.push(Node {
            prim: Some(prim),
            inputs: inputs.iter().map(|v| v.0).collect(),
            value,
            tracked,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Smallest distance between any input of a piecewise-linear primitive
    /// and its kink. Finite-difference checks are only meaningful when this
    /// is comfortably larger than the step size.
    pub fn min_kink_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for node in &self.nodes {
            if let Some(k) = node.prim.as_ref().and_then(Primitive::kink) {
                if !node.tracked {
                    continue;
                }
                let input = &self.nodes[node.inputs[0]].value;
                for &x in input.data() {
                    best = best.min((x - k).abs());
                }
            }
        }
        best
    }

    /// Reverse sweep from a single-element root.
    pub fn backward(&self, root: Var) -> Result<Gradients, AutodiffError> {
        let root_node = &self.nodes[root.0];
        if root_node.value.numel() != 1 {
            return Err(AutodiffError::NotScalar(root_node.value.shape().to_vec()));
        }
        if !root_node.tracked {
            return Err(AutodiffError::Untracked);
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::filled(root_node.value.shape(), 1.0));
        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            let Some(prim) = node.prim.as_ref() else { continue };
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let contributions = self.pullback(prim, node, &g)?;
            for (&input, contrib) in node.inputs.iter().zip(contributions) {
                let Some(contrib) = contrib else { continue };
                if !self.nodes[input].tracked {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => {
                        for (a, c) in acc.data_mut().iter_mut().zip(contrib.data()) {
                            *a += c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            }
            grads[id] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn pullback(
        &self,
        prim: &Primitive,
        node: &Node,
        g: &Tensor,
    ) -> Result<Vec<Option<Tensor>>, AutodiffError> {
        let input = |i: usize| &self.nodes[node.inputs[i]].value;
        let wants = |i: usize| self.nodes[node.inputs[i]].tracked;
        let y = &node.value;
        let x = input(0);
        let out = match prim {
            Primitive::MatMul => {
                let b = input(1);
                let (m, k) = x.dims2()?;
                let (_, n) = b.dims2()?;
                let ga = wants(0)
                    .then(|| Tensor::new(vec![m, k], kernels::matmul_nt(g.data(), b.data(), m, n, k)))
                    .transpose()?;
                let gb = wants(1)
                    .then(|| Tensor::new(vec![k, n], kernels::matmul_tn(x.data(), g.data(), m, k, n)))
                    .transpose()?;
                vec![ga, gb]
            }
            Primitive::Transpose => {
                let (r, c) = x.dims2()?;
                vec![Some(Tensor::new(vec![r, c], kernels::transpose(g.data(), c, r))?)]
            }
            Primitive::Add => vec![Some(g.clone()), Some(g.clone())],
            Primitive::Sub => vec![Some(g.clone()), Some(g.map(|v| -v))],
            Primitive::Mul => {
                let b = input(1);
                vec![
                    wants(0).then(|| zip_map(g, b, |gv, bv| gv * bv)),
                    wants(1).then(|| zip_map(g, x, |gv, av| gv * av)),
                ]
            }
            Primitive::Div => {
                let b = input(1);
                let gb = wants(1).then(|| {
                    let data = g
                        .data()
                        .iter()
                        .zip(x.data())
                        .zip(b.data())
                        .map(|((&gv, &av), &bv)| -gv * av / (bv * bv))
                        .collect();
                    Tensor::new(b.shape().to_vec(), data).expect("shape")
                });
                vec![wants(0).then(|| zip_map(g, b, |gv, bv| gv / bv)), gb]
            }
            Primitive::Neg => vec![Some(g.map(|v| -v))],
            Primitive::Scale(c) => vec![Some(g.map(|v| c * v))],
            Primitive::Shift(_) => vec![Some(g.clone())],
            Primitive::Exp => unary(x, y, g, |_, yv, gv| gv * yv),
            Primitive::Log => unary(x, y, g, |xv, _, gv| gv / xv),
            Primitive::Sigmoid => unary(x, y, g, |_, yv, gv| gv * yv * (1.0 - yv)),
            Primitive::LogSigmoid => unary(x, y, g, |xv, _, gv| gv * sigmoid(-xv)),
            Primitive::Softplus => unary(x, y, g, |xv, _, gv| gv * sigmoid(xv)),
            Primitive::Tanh => unary(x, y, g, |_, yv, gv| gv * (1.0 - yv * yv)),
            Primitive::Relu => unary(x, y, g, |xv, _, gv| if xv > 0.0 { gv } else { 0.0 }),
            Primitive::LeakyRelu(a) => unary(x, y, g, |xv, _, gv| if xv > 0.0 { gv } else { a * gv }),
            Primitive::Square => unary(x, y, g, |xv, _, gv| 2.0 * xv * gv),
            Primitive::Sqrt => unary(x, y, g, |_, yv, gv| gv / (2.0 * yv)),
            Primitive::ClampMin(floor) => unary(x, y, g, |xv, _, gv| if xv > *floor { gv } else { 0.0 }),
            Primitive::Mean => {
                let gv = g.item()? / x.numel() as f64;
                vec![Some(Tensor::filled(x.shape(), gv))]
            }
            Primitive::Sum => vec![Some(Tensor::filled(x.shape(), g.item()?))],
            Primitive::MeanRows => {
                let (r, c) = x.dims2()?;
                let mut data = Vec::with_capacity(r * c);
                for _ in 0..r {
                    data.extend(g.data().iter().map(|v| v / r as f64));
                }
                vec![Some(Tensor::new(vec![r, c], data)?)]
            }
            Primitive::BroadcastRows(_) => {
                let c = x.numel();
                let mut acc = vec![0.0; c];
                for row in g.data().chunks_exact(c) {
                    for (a, v) in acc.iter_mut().zip(row) {
                        *a += v;
                    }
                }
                vec![Some(Tensor::new(x.shape().to_vec(), acc)?)]
            }
            Primitive::Expand(_) => vec![Some(Tensor::filled(x.shape(), g.sum()))],
            Primitive::Reshape(_) => vec![Some(g.clone().reshape(x.shape().to_vec())?)],
            Primitive::L2NormalizeRows => {
                let (_, c) = row_view(x)?;
                let mut data = Vec::with_capacity(x.numel());
                for ((xr, yr), gr) in x
                    .data()
                    .chunks_exact(c)
                    .zip(y.data().chunks_exact(c))
                    .zip(g.data().chunks_exact(c))
                {
                    let norm = kernels::dot(xr, xr).sqrt();
                    let proj = kernels::dot(yr, gr);
                    data.extend(yr.iter().zip(gr).map(|(yv, gv)| (gv - yv * proj) / norm));
                }
                vec![Some(Tensor::new(x.shape().to_vec(), data)?)]
            }
            Primitive::ConcatRows => {
                let (_, c) = g.dims2()?;
                let mut offset = 0;
                let mut parts = Vec::with_capacity(node.inputs.len());
                for (i, &inp) in node.inputs.iter().enumerate() {
                    let t = &self.nodes[inp].value;
                    let n = t.numel();
                    parts.push(wants(i).then(|| {
                        Tensor::new(t.shape().to_vec(), g.data()[offset..offset + n].to_vec())
                            .expect("shape")
                    }));
                    offset += n;
                    debug_assert_eq!(n % c, 0);
                }
                parts
            }
            Primitive::SliceRows(start, _) => {
                let inner: usize = x.shape()[1..].iter().product();
                let mut full = Tensor::zeros(x.shape());
                full.data_mut()[start * inner..start * inner + g.numel()].copy_from_slice(g.data());
                vec![Some(full)]
            }
        };
        Ok(out)
    }
}

macro_rules! unary_ops {
    ($($name:ident => $prim:expr),* $(,)?) => {
        impl Tape {
            $(
                pub fn $name(&mut self, x: Var) -> Result<Var, AutodiffError> {
                    self.apply($prim, &[x])
                }
            )*
        }
    };
}

macro_rules! binary_ops {
    ($($name:ident => $prim:expr),* $(,)?) => {
        impl Tape {
            $(
                pub fn $name(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
                    self.apply($prim, &[a, b])
                }
            )*
        }
    };
}

unary_ops! {
    transpose => Primitive::Transpose,
    neg => Primitive::Neg,
    exp => Primitive::Exp,
    log => Primitive::Log,
    sigmoid => Primitive::Sigmoid,
    log_sigmoid => Primitive::LogSigmoid,
    softplus => Primitive::Softplus,
    tanh => Primitive::Tanh,
    relu => Primitive::Relu,
    square => Primitive::Square,
    sqrt => Primitive::Sqrt,
    mean => Primitive::Mean,
    sum => Primitive::Sum,
    mean_rows => Primitive::MeanRows,
    l2_normalize_rows => Primitive::L2NormalizeRows,
}

binary_ops! {
    matmul => Primitive::MatMul,
    add => Primitive::Add,
    sub => Primitive::Sub,
    mul => Primitive::Mul,
    div => Primitive::Div,
}

impl Tape {
    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var, AutodiffError> {
        self.apply(Primitive::Scale(c), &[x])
    }

    pub fn shift(&mut self, x: Var, c: f64) -> Result<Var, AutodiffError> {
        self.apply(Primitive::Shift(c), &[x])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var, AutodiffError> {
        self.apply(Primitive::LeakyRelu(slope), &[x])
    }

    pub fn clamp_min(&mut self, x: Var, floor: f64) -> Result<Var, AutodiffError> {
        self.apply(Primitive::ClampMin(floor), &[x])
    }

    pub fn broadcast_rows(&mut self, x: Var, rows: usize) -> Result<Var, AutodiffError> {
        self.apply(Primitive::BroadcastRows(rows), &[x])
    }

    pub fn expand(&mut self, x: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        self.apply(Primitive::Expand(shape.to_vec()), &[x])
    }

    /// Broadcasts a single-element `x` to the shape of `like`.
    pub fn expand_as(&mut self, x: Var, like: Var) -> Result<Var, AutodiffError> {
        let shape = self.value(like).shape().to_vec();
        self.apply(Primitive::Expand(shape), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        self.apply(Primitive::Reshape(shape.to_vec()), &[x])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        self.apply(Primitive::ConcatRows, parts)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var, AutodiffError> {
        self.apply(Primitive::SliceRows(start, end), &[x])
    }

    /// Records a scalar constant.
    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_of_zero_is_half() {
        let y = apply_primitive(&Primitive::Sigmoid, &[&Tensor::vector(&[0.0])]).unwrap();
        assert_eq!(y.data(), &[0.5]);
    }

    #[test]
    fn clamp_min_clips_hinge_case() {
        let y = apply_primitive(&Primitive::ClampMin(0.0), &[&Tensor::vector(&[1.0 - 2.0])]).unwrap();
        assert_eq!(y.data(), &[0.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[4, 2]);
        let err = apply_primitive(&Primitive::MatMul, &[&a, &b]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn log_and_sqrt_reject_non_positive() {
        let t = Tensor::vector(&[1.0, 0.0]);
        assert!(matches!(
            apply_primitive(&Primitive::Log, &[&t]),
            Err(AutodiffError::Domain { op: "log", .. })
        ));
        assert!(matches!(
            apply_primitive(&Primitive::Sqrt, &[&Tensor::vector(&[-1.0])]),
            Err(AutodiffError::Domain { op: "sqrt", .. })
        ));
    }

    #[test]
    fn square_backward() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let y = tape.square(x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).data(), &[6.0]);
    }

    #[test]
    fn sum_backward_is_one_for_both_leaves() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(1.5));
        let y = tape.param(Tensor::scalar(-4.0));
        let s = tape.add(x, y).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).data(), &[1.0]);
        assert_eq!(g.get(y).data(), &[1.0]);
    }

    #[test]
    fn disconnected_leaf_gets_zeros() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(&[1.0, 2.0]));
        let unused = tape.param(Tensor::vector(&[5.0, 6.0, 7.0]));
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert!(!g.is_connected(unused));
        assert_eq!(g.get(unused).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_and_untracked_roots() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(&[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(AutodiffError::NotScalar(_))));
        let c = tape.constant(Tensor::vector(&[1.0, 2.0]));
        let s = tape.sum(c).unwrap();
        assert!(matches!(tape.backward(s), Err(AutodiffError::Untracked)));
    }

    #[test]
    fn l2_normalize_rejects_zero_row() {
        let t = Tensor::matrix(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(matches!(
            apply_primitive(&Primitive::L2NormalizeRows, &[&t]),
            Err(AutodiffError::Degenerate { row: 1, .. })
        ));
    }

    #[test]
    fn concat_and_slice_are_inverse() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::matrix(&[vec![1.0, 2.0]]));
        let b = tape.param(Tensor::matrix(&[vec![3.0, 4.0], vec![5.0, 6.0]]));
        let c = tape.concat_rows(&[a, b]).unwrap();
        let s = tape.slice_rows(c, 1, 3).unwrap();
        assert_eq!(tape.value(s), tape.value(b));
        let sq = tape.square(s).unwrap();
        let total = tape.sum(sq).unwrap();
        let g = tape.backward(total).unwrap();
        assert_eq!(g.get(a).data(), &[0.0, 0.0]);
        assert_eq!(g.get(b).data(), &[6.0, 8.0, 10.0, 12.0]);
    }
}
