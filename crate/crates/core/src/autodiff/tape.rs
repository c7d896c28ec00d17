//! Reverse-mode tape. Every op appends a node holding its forward value and
//! whatever it needs for the vector-Jacobian product; `backward` walks the
//! nodes in reverse insertion order.

use super::conv::{self, ConvGeometry};
use super::norm::{self, BatchNormConfig, Layout};
use super::params::{ParamId, ParamStore, RunningStats};
use super::real::{gemm, MatView};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

enum Op<T> {
    Leaf,
    Param(ParamId),
    Conv2d {
        input: Var,
        weight: Var,
        geom: ConvGeometry,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        saved: norm::Saved<T>,
        batch_stats: bool,
    },
    Dense {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Relu(Var),
    MaxPool2 {
        input: Var,
        argmax: Vec<usize>,
    },
    GlobalAvgPool(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Concat(Vec<Var>),
    Narrow {
        input: Var,
        start: usize,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Gradients of every node reached by a backward pass.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

#[derive(Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Leaf that does not receive gradients.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf whose gradient is reported in [`Gradients`].
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Snapshot of a stored parameter; its gradient is accumulated back into
    /// the store by `backward`.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.param(id).value.clone(), Op::Param(id), true)
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let geom = ConvGeometry::new(
            self.value(input).shape(),
            self.value(weight).shape(),
            stride,
            padding,
        )?;
        let out = conv::forward(self.value(input).data(), self.value(weight).data(), &geom);
        let value = Tensor::new(geom.output_shape().to_vec(), out)?;
        let rg = self.rg(&[input, weight]);
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                geom,
            },
            rg,
        ))
    }

    /// Per-channel normalization of an `N x C x ...` input.
    pub fn batch_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        stats: &mut RunningStats<T>,
        mode: Mode,
        cfg: BatchNormConfig,
    ) -> Result<Var> {
        let shape = self.value(input).shape().to_vec();
        if shape.len() < 2 {
            return Err(Error::shape(
                "batch_norm",
                format!("input must be N x C x ..., got {shape:?}"),
            ));
        }
        let channels = shape[1];
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.value(v).numel() != channels {
                return Err(Error::shape(
                    "batch_norm",
                    format!(
                        "{name} has {} entries for {channels} channels",
                        self.value(v).numel()
                    ),
                ));
            }
        }
        if stats.mean.numel() != channels {
            return Err(Error::shape("batch_norm", "running statistics width"));
        }
        let layout = Layout {
            batch: shape[0],
            channels,
            spatial: shape[2..].iter().product(),
        };
        let (x, g, b) = (
            self.value(input).data(),
            self.value(gamma).data(),
            self.value(beta).data(),
        );
        let (out, saved) = match mode {
            Mode::Train => norm::forward_train(x, g, b, stats, &layout, cfg),
            Mode::Eval => norm::forward_eval(x, g, b, stats, &layout, cfg),
        };
        let rg = self.rg(&[input, gamma, beta]);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                saved,
                batch_stats: mode == Mode::Train,
            },
            rg,
        ))
    }

    /// `input (N x D) · weight (D x C) + bias (C)`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (xs, ws, bs) = (
            self.value(input).shape(),
            self.value(weight).shape(),
            self.value(bias).shape(),
        );
        let (&[n, d], &[wd, c]) = (xs, ws) else {
            return Err(Error::shape(
                "dense",
                format!("expected N x D input and D x C weight, got {xs:?} and {ws:?}"),
            ));
        };
        if d != wd {
            return Err(Error::shape(
                "dense",
                format!("input width {d} != weight rows {wd}"),
            ));
        }
        if bs != [c] {
            return Err(Error::shape(
                "dense",
                format!("bias {bs:?} for {c} outputs"),
            ));
        }
        let mut out = Vec::with_capacity(n * c);
        for _ in 0..n {
            out.extend_from_slice(self.value(bias).data());
        }
        gemm(
            self.value(input).data(),
            MatView::row_major(n, d),
            self.value(weight).data(),
            MatView::row_major(d, c),
            T::one(),
            &mut out,
            MatView::row_major(n, c),
        );
        let rg = self.rg(&[input, weight, bias]);
        Ok(self.push(
            Tensor::new([n, c], out)?,
            Op::Dense {
                input,
                weight,
                bias,
            },
            rg,
        ))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let value = self
            .value(input)
            .map(|v| if v > T::zero() { v } else { T::zero() });
        let rg = self.rg(&[input]);
        self.push(value, Op::Relu(input), rg)
    }

    /// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
    pub fn max_pool2(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let &[n, c, h, w] = x.shape() else {
            return Err(Error::shape(
                "max_pool2",
                format!("input must be NCHW, got {:?}", x.shape()),
            ));
        };
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return Err(Error::shape(
                "max_pool2",
                format!("{h}x{w} input is too small"),
            ));
        }
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        let data = x.data();
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if data[idx] > data[best] {
                            best = idx;
                        }
                    }
                    out.push(data[best]);
                    argmax.push(best);
                }
            }
        }
        let rg = self.rg(&[input]);
        Ok(self.push(
            Tensor::new([n, c, oh, ow], out)?,
            Op::MaxPool2 { input, argmax },
            rg,
        ))
    }

    /// Mean over spatial positions: `N x C x H x W -> N x C`.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let &[n, c, h, w] = x.shape() else {
            return Err(Error::shape(
                "global_avg_pool",
                format!("input must be NCHW, got {:?}", x.shape()),
            ));
        };
        let inv = T::lit(1.0 / (h * w) as f64);
        let out = x
            .data()
            .chunks(h * w)
            .map(|p| p.iter().copied().sum::<T>() * inv)
            .collect();
        let rg = self.rg(&[input]);
        Ok(self.push(Tensor::new([n, c], out)?, Op::GlobalAvgPool(input), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Var {
        let value = self.value(input).map(|v| v * factor);
        let rg = self.rg(&[input]);
        self.push(value, Op::Scale(input, factor), rg)
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let value = Tensor::scalar(self.value(input).sum());
        let rg = self.rg(&[input]);
        self.push(value, Op::Sum(input), rg)
    }

    /// Concatenation along the leading axis.
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let tail = self.value(*first).shape()[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &v in inputs {
            let s = self.value(v).shape();
            if s.is_empty() || s[1..] != tail[..] {
                return Err(Error::shape(
                    "concat",
                    format!("{s:?} does not stack with trailing dims {tail:?}"),
                ));
            }
            lead += s[0];
            data.extend_from_slice(self.value(v).data());
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        let rg = self.rg(inputs);
        Ok(self.push(Tensor::new(shape, data)?, Op::Concat(inputs.to_vec()), rg))
    }

    /// Items `start..start + len` of the leading axis.
    pub fn narrow(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let value = self.value(input).narrow_batch(start, len)?;
        let rg = self.rg(&[input]);
        Ok(self.push(value, Op::Narrow { input, start }, rg))
    }

    /// Mean over rows of `-log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let x = self.value(logits);
        let &[n, k] = x.shape() else {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("logits must be N x K, got {:?}", x.shape()),
            ));
        };
        if labels.len() != n {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("{} labels for {n} rows", labels.len()),
            ));
        }
        if n == 0 {
            return Err(Error::shape("softmax_cross_entropy", "empty batch"));
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::Label {
                op: "softmax_cross_entropy",
                row,
                label,
                classes: k,
            });
        }
        let mut probs = vec![T::zero(); n * k];
        let mut total = T::zero();
        for (i, row) in x.data().chunks(k).enumerate() {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for (p, &v) in probs[i * k..(i + 1) * k].iter_mut().zip(row) {
                *p = (v - max).exp();
                z += *p;
            }
            for p in &mut probs[i * k..(i + 1) * k] {
                *p = *p / z;
            }
            total += z.ln() - (row[labels[i]] - max);
        }
        let value = Tensor::scalar(total / T::lit(n as f64));
        let rg = self.rg(&[logits]);
        Ok(self.push(
            value,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Signature of every piecewise choice taken in the forward pass (ReLU
    /// signs, pooling winners). Two evaluations with equal signatures lie on
    /// the same smooth piece.
    pub fn activation_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(input) => {
                    out.extend(
                        self.value(*input)
                            .data()
                            .iter()
                            .map(|&v| (v > T::zero()) as usize),
                    );
                }
                Op::MaxPool2 { argmax, .. } => out.extend_from_slice(argmax),
                _ => {}
            }
        }
        out
    }

    /// Back-propagates from a scalar `loss`, accumulating parameter gradients
    /// into `store`. Gradients are added to whatever the store already holds.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape().to_vec(), T::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let (before, after) = grads.split_at_mut(i);
            let Some(g) = after[0].as_ref() else {
                continue;
            };
            let mut sink = Sink {
                nodes: &self.nodes,
                grads: before,
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => store.accumulate_grad(*id, g),
                Op::Conv2d {
                    input,
                    weight,
                    geom,
                } => {
                    let (dx, dw) = conv::backward(
                        self.value(*input).data(),
                        self.value(*weight).data(),
                        g.data(),
                        geom,
                        sink.wants(*input),
                        sink.wants(*weight),
                    );
                    if let Some(dx) = dx {
                        sink.add_vec(*input, dx);
                    }
                    if let Some(dw) = dw {
                        sink.add_vec(*weight, dw);
                    }
                }
                Op::BatchNorm {
                    input,
                    gamma,
                    beta,
                    saved,
                    batch_stats,
                } => {
                    let shape = self.value(*input).shape();
                    let layout = Layout {
                        batch: shape[0],
                        channels: shape[1],
                        spatial: shape[2..].iter().product(),
                    };
                    let (dx, dg, db) = norm::backward(
                        self.value(*input).data(),
                        g.data(),
                        self.value(*gamma).data(),
                        saved,
                        &layout,
                        *batch_stats,
                    );
                    sink.add_vec(*input, dx);
                    sink.add_vec(*gamma, dg);
                    sink.add_vec(*beta, db);
                }
                Op::Dense {
                    input,
                    weight,
                    bias,
                } => {
                    let (n, d) = (self.value(*input).shape()[0], self.value(*input).shape()[1]);
                    let c = self.value(*weight).shape()[1];
                    if sink.wants(*input) {
                        let mut dx = vec![T::zero(); n * d];
                        gemm(
                            g.data(),
                            MatView::row_major(n, c),
                            self.value(*weight).data(),
                            MatView::transposed(d, c),
                            T::zero(),
                            &mut dx,
                            MatView::row_major(n, d),
                        );
                        sink.add_vec(*input, dx);
                    }
                    if sink.wants(*weight) {
                        let mut dw = vec![T::zero(); d * c];
                        gemm(
                            self.value(*input).data(),
                            MatView::transposed(n, d),
                            g.data(),
                            MatView::row_major(n, c),
                            T::zero(),
                            &mut dw,
                            MatView::row_major(d, c),
                        );
                        sink.add_vec(*weight, dw);
                    }
                    if sink.wants(*bias) {
                        let mut db = vec![T::zero(); c];
                        for row in g.data().chunks(c) {
                            for (acc, &v) in db.iter_mut().zip(row) {
                                *acc += v;
                            }
                        }
                        sink.add_vec(*bias, db);
                    }
                }
                Op::Relu(input) => {
                    let dx = g
                        .data()
                        .iter()
                        .zip(self.value(*input).data())
                        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                        .collect();
                    sink.add_vec(*input, dx);
                }
                Op::MaxPool2 { input, argmax } => {
                    let mut dx = vec![T::zero(); self.value(*input).numel()];
                    for (&src, &gv) in argmax.iter().zip(g.data()) {
                        dx[src] += gv;
                    }
                    sink.add_vec(*input, dx);
                }
                Op::GlobalAvgPool(input) => {
                    let shape = self.value(*input).shape();
                    let hw = shape[2] * shape[3];
                    let inv = T::lit(1.0 / hw as f64);
                    let mut dx = Vec::with_capacity(self.value(*input).numel());
                    for &gv in g.data() {
                        dx.extend(std::iter::repeat_n(gv * inv, hw));
                    }
                    sink.add_vec(*input, dx);
                }
                Op::Add(a, b) => {
                    sink.add_vec(*a, g.data().to_vec());
                    sink.add_vec(*b, g.data().to_vec());
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    if sink.wants(*a) {
                        sink.add_vec(*a, g.data().iter().zip(vb).map(|(&g, &y)| g * y).collect());
                    }
                    if sink.wants(*b) {
                        sink.add_vec(*b, g.data().iter().zip(va).map(|(&g, &x)| g * x).collect());
                    }
                }
                Op::Scale(input, factor) => {
                    sink.add_vec(*input, g.data().iter().map(|&v| v * *factor).collect());
                }
                Op::Sum(input) => {
                    let n = self.value(*input).numel();
                    sink.add_vec(*input, vec![g.item(); n]);
                }
                Op::Concat(inputs) => {
                    let mut offset = 0;
                    for &v in inputs {
                        let len = self.value(v).numel();
                        sink.add_vec(v, g.data()[offset..offset + len].to_vec());
                        offset += len;
                    }
                }
                Op::Narrow { input, start } => {
                    let src = self.value(*input);
                    let per = src.numel() / src.shape()[0].max(1);
                    let mut dx = vec![T::zero(); src.numel()];
                    dx[start * per..start * per + g.numel()].copy_from_slice(g.data());
                    sink.add_vec(*input, dx);
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    labels,
                    probs,
                } => {
                    let k = self.value(*logits).shape()[1];
                    let scale = g.item() / T::lit(labels.len() as f64);
                    let mut dx: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                    for (i, &l) in labels.iter().enumerate() {
                        dx[i * k + l] -= scale;
                    }
                    sink.add_vec(*logits, dx);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Accumulates gradient contributions into earlier nodes.
struct Sink<'a, T> {
    nodes: &'a [Node<T>],
    grads: &'a mut [Option<Tensor<T>>],
}

impl<T: Real> Sink<'_, T> {
    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn add_vec(&mut self, v: Var, data: Vec<T>) {
        if !self.wants(v) {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => {
                for (a, b) in existing.data_mut().iter_mut().zip(data) {
                    *a += b;
                }
            }
            slot @ None => {
                let shape = self.nodes[v.0].value.shape().to_vec();
                *slot = Some(Tensor::new(shape, data).expect("gradient matches value shape"));
            }
        }
    }
}
