//! Tape-based reverse-mode differentiation.
//!
//! Every op evaluates eagerly and appends a node holding its value plus
//! whatever it needs for the backward sweep. Node ids increase in evaluation
//! order, so walking the tape backwards is a valid topological order.

use rand::Rng;

use super::params::ParamSet;
use super::tensor::{Scalar, Tensor};
use crate::error::{invalid, Error, Result};

/// Probabilities are clamped to this before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<F> {
    Input,
    Param,
    Conv1d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
    },
    MaxPool1d {
        x: NodeId,
        argmax: Vec<usize>,
    },
    Reshape {
        x: NodeId,
    },
    Linear {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Relu {
        x: NodeId,
    },
    Tanh {
        x: NodeId,
    },
    Dropout {
        x: NodeId,
        mask: Vec<F>,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Sub {
        a: NodeId,
        b: NodeId,
    },
    SubRow {
        a: NodeId,
        row: NodeId,
    },
    Scale {
        x: NodeId,
        factor: F,
    },
    Softmax {
        x: NodeId,
    },
    CrossEntropy {
        probs: NodeId,
        targets: Vec<usize>,
    },
    MeanRows {
        x: NodeId,
    },
    SquaredNorm {
        x: NodeId,
    },
}

#[derive(Debug)]
struct Node<F> {
    op: Op<F>,
    value: Tensor<F>,
}

/// Parameter leaves created by [`Graph::bind`]; one node per tensor.
#[derive(Debug, Clone)]
pub struct BoundParams {
    ids: Vec<NodeId>,
}

impl BoundParams {
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }
}

#[derive(Debug, Default)]
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op<F>, value: Tensor<F>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn input(&mut self, t: Tensor<F>) -> NodeId {
        self.push(Op::Input, t)
    }

    /// Registers every tensor of `params` as a differentiable leaf.
    pub fn bind(&mut self, params: &ParamSet<F>) -> BoundParams {
        let ids = params
            .tensors()
            .iter()
            .map(|t| self.push(Op::Param, t.clone()))
            .collect();
        BoundParams { ids }
    }

    /// Valid 1-D convolution. `x`: [N, C, L], `w`: [O, C, K], `b`: [O].
    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize) -> Result<NodeId> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 3 || ws.len() != 3 || bs.len() != 1 {
            return invalid(format!(
                "conv1d expects [N,C,L], [O,C,K], [O]; got {xs:?}, {ws:?}, {bs:?}"
            ));
        }
        let (n, c, l) = (xs[0], xs[1], xs[2]);
        let (o, wc, k) = (ws[0], ws[1], ws[2]);
        if wc != c || bs[0] != o {
            return invalid(format!(
                "conv1d channel mismatch: input {xs:?}, kernels {ws:?}, bias {bs:?}"
            ));
        }
        if stride == 0 || k == 0 {
            return invalid("conv1d stride and kernel width must be >= 1");
        }
        if l < k {
            return invalid(format!("conv1d input length {l} shorter than kernel {k}"));
        }
        let lo = (l - k) / stride + 1;
        let xd = self.nodes[x.0].value.data();
        let wd = self.nodes[w.0].value.data();
        let bd = self.nodes[b.0].value.data();
        let mut out = vec![F::zero(); n * o * lo];
        for ni in 0..n {
            for oi in 0..o {
                let row = &mut out[(ni * o + oi) * lo..(ni * o + oi + 1) * lo];
                row.iter_mut().for_each(|v| *v = bd[oi]);
                for ci in 0..c {
                    let xrow = &xd[(ni * c + ci) * l..(ni * c + ci + 1) * l];
                    let wrow = &wd[(oi * c + ci) * k..(oi * c + ci + 1) * k];
                    for (j, &wv) in wrow.iter().enumerate() {
                        if stride == 1 {
                            for (r, &xv) in row.iter_mut().zip(&xrow[j..j + lo]) {
                                *r += wv * xv;
                            }
                        } else {
                            for (t, r) in row.iter_mut().enumerate() {
                                *r += wv * xrow[t * stride + j];
                            }
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![n, o, lo], out)?;
        Ok(self.push(Op::Conv1d { x, w, b, stride }, value))
    }

    /// Non-overlapping max pooling over the last axis of [N, C, L].
    /// Trailing elements that do not fill a window are dropped.
    pub fn maxpool1d(&mut self, x: NodeId, width: usize) -> Result<NodeId> {
        let xs = self.shape(x);
        if width == 0 {
            return invalid("maxpool width must be >= 1");
        }
        if xs.len() != 3 {
            return invalid(format!("maxpool1d expects [N,C,L], got {xs:?}"));
        }
        let (n, c, l) = (xs[0], xs[1], xs[2]);
        if l < width {
            return invalid(format!(
                "maxpool input length {l} shorter than width {width}"
            ));
        }
        let lo = l / width;
        let xd = self.nodes[x.0].value.data();
        let mut out = Vec::with_capacity(n * c * lo);
        let mut argmax = Vec::with_capacity(n * c * lo);
        for row in 0..n * c {
            for t in 0..lo {
                let start = row * l + t * width;
                let mut best = start;
                for idx in start + 1..start + width {
                    // strict comparison keeps the lowest index on ties
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                out.push(xd[best]);
                argmax.push(best);
            }
        }
        let value = Tensor::new(vec![n, c, lo], out)?;
        Ok(self.push(Op::MaxPool1d { x, argmax }, value))
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let value = self.nodes[x.0].value.clone().reshape(shape)?;
        Ok(self.push(Op::Reshape { x }, value))
    }

    /// `x`: [N, I], `w`: [O, I], `b`: [O] -> [N, O].
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || bs.len() != 1 || ws[1] != xs[1] || bs[0] != ws[0] {
            return invalid(format!(
                "linear expects [N,I], [O,I], [O]; got {xs:?}, {ws:?}, {bs:?}"
            ));
        }
        let (n, i_dim, o) = (xs[0], xs[1], ws[0]);
        let xd = self.nodes[x.0].value.data();
        let wd = self.nodes[w.0].value.data();
        let bd = self.nodes[b.0].value.data();
        let mut out = vec![F::zero(); n * o];
        for ni in 0..n {
            let xrow = &xd[ni * i_dim..(ni + 1) * i_dim];
            for oi in 0..o {
                let wrow = &wd[oi * i_dim..(oi + 1) * i_dim];
                let mut acc = bd[oi];
                for (&a, &b) in xrow.iter().zip(wrow) {
                    acc += a * b;
                }
                out[ni * o + oi] = acc;
            }
        }
        let value = Tensor::new(vec![n, o], out)?;
        Ok(self.push(Op::Linear { x, w, b }, value))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0]
            .value
            .map(|v| if v > F::zero() { v } else { F::zero() });
        self.push(Op::Relu { x }, value)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.map(|v| v.tanh());
        self.push(Op::Tanh { x }, value)
    }

    /// Inverted dropout: survivors are scaled by `1/(1-p)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: NodeId, p: f64, rng: &mut R) -> Result<NodeId> {
        if !(0.0..1.0).contains(&p) {
            return invalid(format!("drop probability {p} outside [0,1)"));
        }
        let keep = F::of(1.0 / (1.0 - p));
        let xv = &self.nodes[x.0].value;
        let mask: Vec<F> = (0..xv.len())
            .map(|_| {
                if rng.gen::<f64>() < p {
                    F::zero()
                } else {
                    keep
                }
            })
            .collect();
        let data = xv.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(Op::Dropout { x, mask }, value))
    }

    fn binary(&mut self, a: NodeId, b: NodeId, f: impl Fn(F, F) -> F) -> Result<Tensor<F>> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return invalid(format!(
                "shape mismatch {:?} vs {:?}",
                av.shape(),
                bv.shape()
            ));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.binary(a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add { a, b }, value))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.binary(a, b, |x, y| x - y)?;
        Ok(self.push(Op::Sub { a, b }, value))
    }

    /// `a`: [N, F] minus `row`: [F] broadcast over rows.
    pub fn sub_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (av, rv) = (&self.nodes[a.0].value, &self.nodes[row.0].value);
        let f = rv.len();
        if av.shape().len() != 2 || av.shape()[1] != f {
            return invalid(format!("sub_row: {:?} minus row of {f}", av.shape()));
        }
        let data = av
            .data()
            .chunks(f)
            .flat_map(|r| r.iter().zip(rv.data()).map(|(&x, &y)| x - y))
            .collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(Op::SubRow { a, row }, value))
    }

    pub fn scale(&mut self, x: NodeId, factor: F) -> NodeId {
        let value = self.nodes[x.0].value.map(|v| v * factor);
        self.push(Op::Scale { x, factor }, value)
    }

    /// Row-wise softmax over [N, K] with max subtraction.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = &self.nodes[x.0].value;
        if xv.shape().len() != 2 {
            return invalid(format!("softmax expects [N,K], got {:?}", xv.shape()));
        }
        let k = xv.shape()[1];
        let mut data = Vec::with_capacity(xv.len());
        for row in xv.data().chunks(k) {
            data.extend(softmax_slice(row));
        }
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(Op::Softmax { x }, value))
    }

    /// Mean over rows of `-log q[target]`, with `q` clamped at [`LOG_CLAMP`].
    pub fn cross_entropy(&mut self, probs: NodeId, targets: &[usize]) -> Result<NodeId> {
        let pv = &self.nodes[probs.0].value;
        if pv.shape().len() != 2 || pv.shape()[0] != targets.len() || targets.is_empty() {
            return invalid(format!(
                "cross_entropy: probabilities {:?} with {} targets",
                pv.shape(),
                targets.len()
            ));
        }
        let k = pv.shape()[1];
        if let Some(&t) = targets.iter().find(|&&t| t >= k) {
            return invalid(format!("target class {t} out of range for {k} classes"));
        }
        let clamp = F::of(LOG_CLAMP);
        let n = F::of(targets.len() as f64);
        let total: F = targets
            .iter()
            .enumerate()
            .map(|(r, &t)| -pv.data()[r * k + t].max(clamp).ln())
            .sum();
        let value = Tensor::scalar(total / n);
        Ok(self.push(
            Op::CrossEntropy {
                probs,
                targets: targets.to_vec(),
            },
            value,
        ))
    }

    /// Mean over the first axis of [N, F] -> [F].
    pub fn mean_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = &self.nodes[x.0].value;
        if xv.shape().len() != 2 || xv.shape()[0] == 0 {
            return invalid(format!(
                "mean_rows expects non-empty [N,F], got {:?}",
                xv.shape()
            ));
        }
        let (n, f) = (xv.shape()[0], xv.shape()[1]);
        let mut out = vec![F::zero(); f];
        for row in xv.data().chunks(f) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let inv = F::one() / F::of(n as f64);
        out.iter_mut().for_each(|v| *v *= inv);
        let value = Tensor::new(vec![f], out)?;
        Ok(self.push(Op::MeanRows { x }, value))
    }

    pub fn squared_norm(&mut self, x: NodeId) -> NodeId {
        let s: F = self.nodes[x.0].value.data().iter().map(|&v| v * v).sum();
        self.push(Op::SquaredNorm { x }, Tensor::scalar(s))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<F>> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Usage(
                "backward requested for a node that no forward pass recorded".into(),
            ));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, node has shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.nodes[loss.0].value.shape(), F::one()));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Input | Op::Param => {
                    grads[id] = Some(g);
                }
                Op::Conv1d { x, w, b, stride } => {
                    let (xv, wv) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
                    let (n, c, l) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
                    let (o, k) = (wv.shape()[0], wv.shape()[2]);
                    let lo = node.value.shape()[2];
                    let (xd, wd, gd) = (xv.data(), wv.data(), g.data());
                    let mut dx = vec![F::zero(); xd.len()];
                    let mut dw = vec![F::zero(); wd.len()];
                    let mut db = vec![F::zero(); o];
                    for ni in 0..n {
                        for oi in 0..o {
                            let grow = &gd[(ni * o + oi) * lo..(ni * o + oi + 1) * lo];
                            db[oi] += grow.iter().copied().sum::<F>();
                            for ci in 0..c {
                                let xbase = (ni * c + ci) * l;
                                let wbase = (oi * c + ci) * k;
                                for j in 0..k {
                                    let wv = wd[wbase + j];
                                    let mut acc = F::zero();
                                    for (t, &gv) in grow.iter().enumerate() {
                                        let xi = xbase + t * stride + j;
                                        acc += gv * xd[xi];
                                        dx[xi] += gv * wv;
                                    }
                                    dw[wbase + j] += acc;
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, *x, xv.shape(), dx);
                    accumulate(&mut grads, *w, wv.shape(), dw);
                    accumulate(&mut grads, *b, &[o], db);
                }
                Op::MaxPool1d { x, argmax } => {
                    let xv = &self.nodes[x.0].value;
                    let mut dx = vec![F::zero(); xv.len()];
                    for (&src, &gv) in argmax.iter().zip(g.data()) {
                        dx[src] += gv;
                    }
                    accumulate(&mut grads, *x, xv.shape(), dx);
                }
                Op::Reshape { x } => {
                    let shape = self.nodes[x.0].value.shape().to_vec();
                    accumulate(&mut grads, *x, &shape, g.into_data());
                }
                Op::Linear { x, w, b } => {
                    let (xv, wv) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
                    let (n, i_dim, o) = (xv.shape()[0], xv.shape()[1], wv.shape()[0]);
                    let (xd, wd, gd) = (xv.data(), wv.data(), g.data());
                    let mut dx = vec![F::zero(); xd.len()];
                    let mut dw = vec![F::zero(); wd.len()];
                    let mut db = vec![F::zero(); o];
                    for ni in 0..n {
                        let xrow = &xd[ni * i_dim..(ni + 1) * i_dim];
                        let dxrow = &mut dx[ni * i_dim..(ni + 1) * i_dim];
                        for oi in 0..o {
                            let gv = gd[ni * o + oi];
                            if gv == F::zero() {
                                continue;
                            }
                            db[oi] += gv;
                            let wrow = &wd[oi * i_dim..(oi + 1) * i_dim];
                            let dwrow = &mut dw[oi * i_dim..(oi + 1) * i_dim];
                            for i in 0..i_dim {
                                dxrow[i] += gv * wrow[i];
                                dwrow[i] += gv * xrow[i];
                            }
                        }
                    }
                    accumulate(&mut grads, *x, xv.shape(), dx);
                    accumulate(&mut grads, *w, wv.shape(), dw);
                    accumulate(&mut grads, *b, &[o], db);
                }
                Op::Relu { x } => {
                    let xv = &self.nodes[x.0].value;
                    let dx = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &gv)| if v > F::zero() { gv } else { F::zero() })
                        .collect();
                    accumulate(&mut grads, *x, xv.shape(), dx);
                }
                Op::Tanh { x } => {
                    let dx = node
                        .value
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&y, &gv)| gv * (F::one() - y * y))
                        .collect();
                    accumulate(&mut grads, *x, node.value.shape(), dx);
                }
                Op::Dropout { x, mask } => {
                    let dx = mask.iter().zip(g.data()).map(|(&m, &gv)| m * gv).collect();
                    accumulate(&mut grads, *x, node.value.shape(), dx);
                }
                Op::Add { a, b } => {
                    let shape = g.shape().to_vec();
                    accumulate(&mut grads, *a, &shape, g.data().to_vec());
                    accumulate(&mut grads, *b, &shape, g.into_data());
                }
                Op::Sub { a, b } => {
                    let neg = g.data().iter().map(|&v| -v).collect();
                    let shape = g.shape().to_vec();
                    accumulate(&mut grads, *b, &shape, neg);
                    accumulate(&mut grads, *a, &shape, g.into_data());
                }
                Op::SubRow { a, row } => {
                    let f = self.nodes[row.0].value.len();
                    let mut dr = vec![F::zero(); f];
                    for r in g.data().chunks(f) {
                        for (d, &v) in dr.iter_mut().zip(r) {
                            *d -= v;
                        }
                    }
                    let rshape = self.nodes[row.0].value.shape().to_vec();
                    accumulate(&mut grads, *row, &rshape, dr);
                    let shape = g.shape().to_vec();
                    accumulate(&mut grads, *a, &shape, g.into_data());
                }
                Op::Scale { x, factor } => {
                    let dx = g.data().iter().map(|&v| v * *factor).collect();
                    accumulate(&mut grads, *x, g.shape(), dx);
                }
                Op::Softmax { x } => {
                    let k = node.value.shape()[1];
                    let mut dx = Vec::with_capacity(node.value.len());
                    for (yrow, grow) in node.value.data().chunks(k).zip(g.data().chunks(k)) {
                        let dot: F = yrow.iter().zip(grow).map(|(&y, &gv)| y * gv).sum();
                        dx.extend(yrow.iter().zip(grow).map(|(&y, &gv)| y * (gv - dot)));
                    }
                    accumulate(&mut grads, *x, node.value.shape(), dx);
                }
                Op::CrossEntropy { probs, targets } => {
                    let pv = &self.nodes[probs.0].value;
                    let k = pv.shape()[1];
                    let clamp = F::of(LOG_CLAMP);
                    let scale = g.data()[0] / F::of(targets.len() as f64);
                    let mut dq = vec![F::zero(); pv.len()];
                    for (r, &t) in targets.iter().enumerate() {
                        let q = pv.data()[r * k + t];
                        if q > clamp {
                            dq[r * k + t] = -scale / q;
                        }
                    }
                    accumulate(&mut grads, *probs, pv.shape(), dq);
                }
                Op::MeanRows { x } => {
                    let xv = &self.nodes[x.0].value;
                    let n = xv.shape()[0];
                    let inv = F::one() / F::of(n as f64);
                    let row: Vec<F> = g.data().iter().map(|&v| v * inv).collect();
                    let dx = (0..n).flat_map(|_| row.iter().copied()).collect();
                    accumulate(&mut grads, *x, xv.shape(), dx);
                }
                Op::SquaredNorm { x } => {
                    let xv = &self.nodes[x.0].value;
                    let two_g = F::of(2.0) * g.data()[0];
                    let dx = xv.data().iter().map(|&v| two_g * v).collect();
                    accumulate(&mut grads, *x, xv.shape(), dx);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate<F: Scalar>(
    grads: &mut [Option<Tensor<F>>],
    id: NodeId,
    shape: &[usize],
    data: Vec<F>,
) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(data) {
                *a += b;
            }
        }
        slot @ None => {
            *slot = Some(
                Tensor::new(shape.to_vec(), data).expect("gradient shape follows value shape"),
            );
        }
    }
}

/// Numerically stable softmax of one logit row.
pub fn softmax_slice<F: Scalar>(row: &[F]) -> Vec<F> {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = row.iter().map(|&v| (v - max).exp()).collect();
    let total: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cross-entropy `-sum p log q` for a one-hot `target` and a probability
/// vector `predicted` (clamped at [`LOG_CLAMP`]).
pub fn cross_entropy<F: Scalar>(target: &[F], predicted: &[F]) -> Result<F> {
    if target.len() != predicted.len() {
        return invalid("cross_entropy: length mismatch");
    }
    let ones = target.iter().filter(|&&v| v == F::one()).count();
    let zeros = target.iter().filter(|&&v| v == F::zero()).count();
    if ones != 1 || ones + zeros != target.len() {
        return invalid("cross_entropy: target must be one-hot");
    }
    let clamp = F::of(LOG_CLAMP);
    Ok(target
        .iter()
        .zip(predicted)
        .filter(|(&p, _)| p == F::one())
        .map(|(_, &q)| -q.max(clamp).ln())
        .sum())
}

/// Per-node gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients<F> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<F>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradients for a bound parameter set, zero where the loss does not
    /// depend on a tensor.
    pub fn for_params(&self, bound: &BoundParams, params: &ParamSet<F>) -> ParamSet<F> {
        let tensors = bound
            .ids
            .iter()
            .zip(params.tensors())
            .map(|(&id, p)| {
                self.get(id)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(p.shape()))
            })
            .collect();
        ParamSet::new(tensors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn identity_kernel_and_zero_kernel() {
        let mut g = Graph::<f64>::new();
        let x = g.input(t(&[1, 1, 3], &[5.0, 7.0, 9.0]));
        let w = g.input(t(&[1, 1, 1], &[1.0]));
        let b = g.input(t(&[1], &[0.0]));
        let y = g.conv1d(x, w, b, 1).unwrap();
        assert_eq!(g.value(y).data(), &[5.0, 7.0, 9.0]);

        let x = g.input(t(&[1, 1, 4], &[1.0, 2.0, 3.0, 4.0]));
        let w = g.input(t(&[1, 1, 2], &[0.0, 0.0]));
        let b = g.input(t(&[1], &[3.0]));
        let y = g.conv1d(x, w, b, 1).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 3.0, 3.0]);
    }

    #[test]
    fn conv_shape_errors() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::zeros(&[1, 2, 4]));
        let w = g.input(Tensor::zeros(&[1, 3, 2]));
        let b = g.input(Tensor::zeros(&[1]));
        assert!(g.conv1d(x, w, b, 1).is_err());
        let w = g.input(Tensor::zeros(&[1, 2, 5]));
        assert!(g.conv1d(x, w, b, 1).is_err());
        let w = g.input(Tensor::zeros(&[1, 2, 2]));
        assert!(g.conv1d(x, w, b, 0).is_err());
    }

    #[test]
    fn maxpool_examples() {
        let mut g = Graph::<f64>::new();
        let x = g.input(t(&[1, 1, 4], &[1.0, 3.0, 2.0, 5.0]));
        let y = g.maxpool1d(x, 2).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 5.0]);

        let x = g.input(t(&[1, 1, 3], &[9.0, 1.0, 2.0]));
        let y = g.maxpool1d(x, 2).unwrap();
        assert_eq!(g.value(y).data(), &[9.0]);

        assert!(g.maxpool1d(x, 0).is_err());
    }

    #[test]
    fn maxpool_tie_routes_gradient_to_first() {
        let mut g = Graph::<f64>::new();
        let x = g.input(t(&[1, 1, 4], &[4.0, 4.0, 4.0, 4.0]));
        let y = g.maxpool1d(x, 2).unwrap();
        assert_eq!(g.value(y).data(), &[4.0, 4.0]);
        let s = g.squared_norm(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[8.0, 0.0, 8.0, 0.0]);
    }

    #[test]
    fn backward_before_forward_is_usage_error() {
        let g = Graph::<f64>::new();
        let err = g.backward(NodeId(0)).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));

        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::zeros(&[3]));
        assert!(matches!(g.backward(x).unwrap_err(), Error::Usage(_)));
    }

    #[test]
    fn dense_squared_loss_matches_closed_form() {
        // L = ||W x + b - y||^2 ; dL/dW = 2 r x^T, dL/db = 2 r
        let mut g = Graph::<f64>::new();
        let x = g.input(t(&[1, 2], &[1.0, -2.0]));
        let w = g.input(t(&[2, 2], &[0.5, 1.0, -1.0, 2.0]));
        let b = g.input(t(&[2], &[0.1, 0.2]));
        let target = g.input(t(&[1, 2], &[1.0, 1.0]));
        let y = g.linear(x, w, b).unwrap();
        let r = g.sub(y, target).unwrap();
        let loss = g.squared_norm(r);
        let grads = g.backward(loss).unwrap();
        // y = [0.5 - 2 + 0.1, -1 - 4 + 0.2] = [-1.4, -4.8]; r = [-2.4, -5.8]
        let r = [-2.4, -5.8];
        let xs = [1.0, -2.0];
        let dw: Vec<f64> = (0..2)
            .flat_map(|o| (0..2).map(move |i| 2.0 * r[o] * xs[i]))
            .collect();
        for (a, e) in grads.get(w).unwrap().data().iter().zip(&dw) {
            assert!((a - e).abs() < 1e-12);
        }
        for (a, e) in grads.get(b).unwrap().data().iter().zip(&r) {
            assert!((a - 2.0 * e).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_ce_gradient_is_q_minus_p() {
        let mut g = Graph::<f64>::new();
        let z = g.input(Tensor::zeros(&[1, 5]));
        let q = g.softmax(z).unwrap();
        let ce = g.cross_entropy(q, &[2]).unwrap();
        assert!((g.value(ce).data()[0] - 5f64.ln()).abs() < 1e-12);
        let grads = g.backward(ce).unwrap();
        let expected = [0.2, 0.2, -0.8, 0.2, 0.2];
        for (a, e) in grads.get(z).unwrap().data().iter().zip(expected) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_examples() {
        let p = softmax_slice(&[0.0f64; 5]);
        assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-15));
        let p = softmax_slice(&[123.4f64; 5]);
        assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-15));
        let p = softmax_slice(&[2.0f64, 0.0, 0.0, 0.0, 0.0]);
        // e^2 / (e^2 + 4) evaluated independently
        let e2 = std::f64::consts::E * std::f64::consts::E;
        assert!((p[0] - e2 / (e2 + 4.0)).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_examples() {
        let onehot = |c: usize| {
            let mut v = vec![0.0f64; 5];
            v[c] = 1.0;
            v
        };
        let mut q = vec![0.0; 5];
        q[3] = 1.0;
        assert_eq!(cross_entropy(&onehot(3), &q).unwrap(), 0.0);
        let uni = vec![0.2; 5];
        assert!((cross_entropy(&onehot(0), &uni).unwrap() - 5f64.ln()).abs() < 1e-12);
        let q = [0.1, 0.5, 0.2, 0.1, 0.1];
        assert!((cross_entropy(&onehot(1), &q).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(cross_entropy(&[0.5, 0.5, 0.0, 0.0, 0.0], &uni).is_err());
        assert!(cross_entropy(&[0.0; 5], &uni).is_err());
        // zero probability is clamped rather than producing inf
        let q = [1.0, 0.0, 0.0, 0.0, 0.0];
        assert!((cross_entropy(&onehot(1), &q).unwrap() - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn dropout_modes() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::full(&[100_000], 1.0));
        let y = g.dropout(x, 0.0, &mut rng).unwrap();
        assert_eq!(g.value(y), g.value(x));
        let y = g.dropout(x, 0.2, &mut rng).unwrap();
        let mean = g.value(y).data().iter().sum::<f64>() / 100_000.0;
        assert!((0.98..=1.02).contains(&mean), "mean {mean}");
        let zeros = g.value(y).data().iter().filter(|&&v| v == 0.0).count();
        assert!((19_000..21_000).contains(&zeros));
        assert!(g.dropout(x, 1.0, &mut rng).is_err());
    }
}
