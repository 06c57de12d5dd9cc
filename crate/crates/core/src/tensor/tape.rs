use std::collections::HashMap;

use super::conv::{ConvGeometry, ConvSpec};
use super::kernels::{self, BatchNormConfig, BatchStats, BnMode, BnRunning, BnSaved};
use super::{cast, Real, Shape, Tensor};
use crate::error::{config_err, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Conv {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        spec: ConvSpec,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        saved: BnSaved<T>,
    },
    Relu(Var),
    Sigmoid(Var),
    Resize(Var),
    GlobalAvgPool(Var),
    Concat(Vec<Var>),
    SliceChannels {
        input: Var,
        start: usize,
    },
    MaxPool2 {
        input: Var,
        argmax: Vec<u32>,
    },
    Mul(Var, Var),
    Add(Var, Var),
    Sum(Var),
    Scale(Var, T),
    Bce {
        pred: Var,
        target: Vec<T>,
    },
    SquaredError {
        pred: Var,
        target: Vec<T>,
        divisor: T,
    },
    WeightedSum(Vec<(Var, T)>),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Ordered record of executed operations.
///
/// Nodes are appended in execution order and [`Tape::backward`] walks them
/// strictly in reverse; a tape can be differentiated only once.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<usize, Var>,
    param_of: Vec<Option<usize>>,
    consumed: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar with respect to every leaf that needs one.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    param_of: Vec<Option<usize>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of model parameter `id`, if it took part in the computation.
    pub fn param(&self, id: usize) -> Option<&[T]> {
        self.param_of
            .iter()
            .position(|p| *p == Some(id))
            .and_then(|i| self.grads[i].as_deref())
    }

    /// Moves parameter gradients out, indexed by parameter id.
    pub fn into_param_grads(mut self, count: usize) -> Vec<Option<Vec<T>>> {
        let mut out: Vec<Option<Vec<T>>> = (0..count).map(|_| None).collect();
        for (i, p) in self.param_of.iter().enumerate() {
            if let Some(id) = *p {
                if id < count {
                    out[id] = self.grads[i].take();
                }
            }
        }
        out
    }
}

fn same_spatial(a: Shape, b: Shape) -> bool {
    a.n == b.n && a.h == b.h && a.w == b.w
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: HashMap::new(),
            param_of: Vec::new(),
            consumed: false,
        }
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

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        #[cfg(debug_assertions)]
        {
            let inputs = inputs_of(&op);
            let inputs_finite = inputs.iter().all(|v| self.nodes[v.0].value.all_finite());
            debug_assert!(
                inputs.is_empty() || !inputs_finite || value.all_finite(),
                "non-finite output from finite inputs at node {}",
                self.nodes.len()
            );
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        self.param_of.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Records an input; it receives a gradient if `requires_grad` is set.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let needs = tensor.requires_grad();
        self.push(tensor, Op::Leaf, needs)
    }

    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.push(tensor.with_requires_grad(false), Op::Leaf, false)
    }

    /// Records model parameter `id` once per tape and returns its handle.
    pub fn param(&mut self, id: usize, tensor: &Tensor<T>) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let mut t = tensor.clone();
        t.clear_grad();
        let v = self.push(t.with_requires_grad(true), Op::Leaf, true);
        self.param_of[v.0] = Some(id);
        self.params.insert(id, v);
        v
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let geo = ConvGeometry::new(
            self.shape(input),
            self.shape(weight),
            bias.map(|b| self.shape(b)),
            spec,
        )?;
        let out = geo.forward(
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
        );
        let needs = self.needs(input) || self.needs(weight) || bias.is_some_and(|b| self.needs(b));
        let value = Tensor::from_vec(geo.output, out)?;
        Ok(self.push(
            value,
            Op::Conv {
                input,
                weight,
                bias,
                spec,
            },
            needs,
        ))
    }

    /// Batch normalisation; in train mode the running statistics are updated.
    pub fn batchnorm2d(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running: &mut BnRunning<T>,
        mode: BnMode,
        cfg: BatchNormConfig,
    ) -> Result<Var> {
        let (v, stats) = self.batchnorm_inner(input, gamma, beta, running, mode, cfg)?;
        if let Some(stats) = stats {
            running.update(&stats, cfg.momentum);
        }
        Ok(v)
    }

    /// Batch normalisation that leaves the running statistics untouched.
    pub fn batchnorm2d_frozen(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running: &BnRunning<T>,
        mode: BnMode,
        cfg: BatchNormConfig,
    ) -> Result<Var> {
        Ok(self.batchnorm_inner(input, gamma, beta, running, mode, cfg)?.0)
    }

    fn batchnorm_inner(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running: &BnRunning<T>,
        mode: BnMode,
        cfg: BatchNormConfig,
    ) -> Result<(Var, Option<BatchStats<T>>)> {
        let shape = self.shape(input);
        let (y, saved, stats) = kernels::batchnorm_forward(
            shape,
            self.value(input).data(),
            self.value(gamma).data(),
            self.value(beta).data(),
            running,
            mode,
            cfg,
        )?;
        let needs = self.needs(input) || self.needs(gamma) || self.needs(beta);
        let v = self.push(
            Tensor::from_vec(shape, y)?,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                saved,
            },
            needs,
        );
        Ok((v, stats))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let x = self.value(input);
        // NaN passes through so bad values reach the loss check
        let data = x.data().iter().map(|&v| if v < T::zero() { T::zero() } else { v }).collect();
        let value = Tensor::from_vec(x.shape(), data).expect("same shape");
        let needs = self.needs(input);
        self.push(value, Op::Relu(input), needs)
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| sigmoid(v)).collect();
        let value = Tensor::from_vec(x.shape(), data).expect("same shape");
        let needs = self.needs(input);
        self.push(value, Op::Sigmoid(input), needs)
    }

    /// Bilinear upsampling by an integer factor, half-pixel centres.
    pub fn bilinear_upsample(&mut self, input: Var, scale: usize) -> Result<Var> {
        if scale < 2 {
            return Err(config_err!("upsample scale must be at least 2, got {scale}"));
        }
        let s = self.shape(input);
        self.resize_bilinear(input, s.h * scale, s.w * scale)
    }

    /// Bilinear resampling to an arbitrary size, half-pixel centres.
    pub fn resize_bilinear(&mut self, input: Var, h: usize, w: usize) -> Result<Var> {
        let s = self.shape(input);
        if h == 0 || w == 0 || s.h == 0 || s.w == 0 {
            return Err(config_err!("cannot resize {s} to {h}x{w}"));
        }
        let out = kernels::resize_forward(s, self.value(input).data(), h, w);
        let value = Tensor::from_vec(Shape::new(s.n, s.c, h, w), out)?;
        let needs = self.needs(input);
        Ok(self.push(value, Op::Resize(input), needs))
    }

    pub fn global_avg_pool(&mut self, input: Var) -> Var {
        let s = self.shape(input);
        let x = self.value(input).data();
        let denom: T = cast(s.plane() as f64);
        let data = x
            .chunks(s.plane())
            .map(|p| p.iter().copied().sum::<T>() / denom)
            .collect();
        let value = Tensor::from_vec(Shape::new(s.n, s.c, 1, 1), data).expect("n*c values");
        let needs = self.needs(input);
        self.push(value, Op::GlobalAvgPool(input), needs)
    }

    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = match inputs.first() {
            Some(v) => self.shape(*v),
            None => return Err(config_err!("concat of zero tensors")),
        };
        let mut channels = 0;
        for v in inputs {
            let s = self.shape(*v);
            if !same_spatial(s, first) {
                return Err(config_err!("concat of {s} with {first}"));
            }
            channels += s.c;
        }
        let out_shape = Shape::new(first.n, channels, first.h, first.w);
        let mut data = Vec::with_capacity(out_shape.numel());
        for n in 0..first.n {
            for v in inputs {
                let t = self.value(*v);
                let per = t.shape().c * first.plane();
                data.extend_from_slice(&t.data()[n * per..(n + 1) * per]);
            }
        }
        let needs = inputs.iter().any(|v| self.needs(*v));
        Ok(self.push(Tensor::from_vec(out_shape, data)?, Op::Concat(inputs.to_vec()), needs))
    }

    pub fn slice_channels(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(input);
        if start + len > s.c || len == 0 {
            return Err(config_err!("channel slice {start}..{} of {s}", start + len));
        }
        let x = self.value(input).data();
        let plane = s.plane();
        let mut data = Vec::with_capacity(s.n * len * plane);
        for n in 0..s.n {
            let off = (n * s.c + start) * plane;
            data.extend_from_slice(&x[off..off + len * plane]);
        }
        let value = Tensor::from_vec(Shape::new(s.n, len, s.h, s.w), data)?;
        let needs = self.needs(input);
        Ok(self.push(value, Op::SliceChannels { input, start }, needs))
    }

    pub fn maxpool2(&mut self, input: Var) -> Result<Var> {
        let s = self.shape(input);
        if s.h % 2 != 0 || s.w % 2 != 0 || s.h == 0 || s.w == 0 {
            return Err(config_err!("maxpool2 needs even spatial dims, got {s}"));
        }
        let (out, argmax) = kernels::maxpool2_forward(s, self.value(input).data());
        let value = Tensor::from_vec(Shape::new(s.n, s.c, s.h / 2, s.w / 2), out)?;
        let needs = self.needs(input);
        Ok(self.push(value, Op::MaxPool2 { input, argmax }, needs))
    }

    fn broadcast_shape(&self, a: Var, b: Var) -> Result<Shape> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            return Ok(sa);
        }
        if same_spatial(sa, sb) && sb.c == 1 {
            return Ok(sa);
        }
        Err(config_err!("elementwise op on {sa} and {sb}"))
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let shape = self.broadcast_shape(a, b)?;
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let plane = shape.plane();
        let b_channels = self.shape(b).c;
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..shape.n {
            for c in 0..shape.c {
                let xo = (n * shape.c + c) * plane;
                let yo = (n * b_channels + if b_channels == 1 { 0 } else { c }) * plane;
                data.extend((0..plane).map(|i| f(x[xo + i], y[yo + i])));
            }
        }
        Tensor::from_vec(shape, data)
    }

    /// Elementwise product; `b` may have a single channel broadcast over `a`'s.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, |x, y| x * y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul(a, b), needs))
    }

    /// Elementwise sum; `b` may have a single channel broadcast over `a`'s.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, |x, y| x + y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), needs))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let value = Tensor::scalar(self.value(input).sum());
        let needs = self.needs(input);
        self.push(value, Op::Sum(input), needs)
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| v * factor).collect();
        let value = Tensor::from_vec(x.shape(), data).expect("same shape");
        let needs = self.needs(input);
        self.push(value, Op::Scale(input, factor), needs)
    }

    /// Mean binary cross-entropy of probabilities against a binary target.
    /// Predictions are clamped to `[clamp, 1 - clamp]`.
    pub fn bce(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var> {
        let s = self.shape(pred);
        if s != target.shape() {
            return Err(config_err!("bce prediction {s} vs target {}", target.shape()));
        }
        let p = self.value(pred).data();
        let (lo, hi) = bce_bounds::<T>();
        let mut total = T::zero();
        for (&pi, &ti) in p.iter().zip(target.data()) {
            let pc = pi.max(lo).min(hi);
            total -= ti * pc.ln() + (T::one() - ti) * (T::one() - pc).ln();
        }
        let value = Tensor::scalar(total / cast(p.len() as f64));
        let needs = self.needs(pred);
        Ok(self.push(
            value,
            Op::Bce {
                pred,
                target: target.data().to_vec(),
            },
            needs,
        ))
    }

    /// `sum((pred - target)^2) / divisor`.
    pub fn squared_error(&mut self, pred: Var, target: &Tensor<T>, divisor: T) -> Result<Var> {
        let s = self.shape(pred);
        if s != target.shape() {
            return Err(config_err!("density prediction {s} vs target {}", target.shape()));
        }
        if divisor <= T::zero() {
            return Err(config_err!("squared-error divisor must be positive"));
        }
        let total: T = self
            .value(pred)
            .data()
            .iter()
            .zip(target.data())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        let value = Tensor::scalar(total / divisor);
        let needs = self.needs(pred);
        Ok(self.push(
            value,
            Op::SquaredError {
                pred,
                target: target.data().to_vec(),
                divisor,
            },
            needs,
        ))
    }

    /// `sum_i w_i * x_i` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Result<Var> {
        let mut total = T::zero();
        for (v, w) in terms {
            let t = self.value(*v);
            if t.shape() != Shape::scalar() {
                return Err(config_err!("weighted_sum term of shape {}", t.shape()));
            }
            total += *w * t.data()[0];
        }
        let needs = terms.iter().any(|(v, _)| self.needs(*v));
        Ok(self.push(Tensor::scalar(total), Op::WeightedSum(terms.to_vec()), needs))
    }

    /// Reverse pass from a scalar node. Consumes the tape's single backward.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::Tape("backward already ran on this tape; re-run forward".into()));
        }
        if self.shape(loss) != Shape::scalar() {
            return Err(Error::Tape(format!(
                "backward needs a scalar, got {}",
                self.shape(loss)
            )));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            for (input, contribution) in self.node_backward(i, &g)? {
                if !self.needs(input) {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => {
                        for (a, c) in acc.iter_mut().zip(&contribution) {
                            *a += *c;
                        }
                    }
                    slot @ None => *slot = Some(contribution),
                }
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients {
            grads,
            param_of: self.param_of.clone(),
        })
    }

    fn node_backward(&self, i: usize, g: &[T]) -> Result<Vec<(Var, Vec<T>)>> {
        let node = &self.nodes[i];
        let out_shape = node.value.shape();
        let out = node.value.data();
        Ok(match &node.op {
            Op::Leaf => Vec::new(),
            Op::Conv {
                input,
                weight,
                bias,
                spec,
            } => {
                let geo = ConvGeometry::new(
                    self.shape(*input),
                    self.shape(*weight),
                    bias.map(|b| self.shape(b)),
                    *spec,
                )?;
                let (dx, dw, db) = geo.backward(
                    self.value(*input).data(),
                    self.value(*weight).data(),
                    g,
                    self.needs(*input),
                );
                let mut res = vec![(*weight, dw)];
                if let Some(dx) = dx {
                    res.push((*input, dx));
                }
                if let Some(b) = bias {
                    res.push((*b, db));
                }
                res
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                saved,
            } => {
                let (dx, dg, db) = kernels::batchnorm_backward(
                    self.shape(*input),
                    saved,
                    self.value(*gamma).data(),
                    g,
                );
                vec![(*input, dx), (*gamma, dg), (*beta, db)]
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let d = xv
                    .iter()
                    .zip(g)
                    .map(|(&v, &gi)| if v > T::zero() { gi } else { T::zero() })
                    .collect();
                vec![(*x, d)]
            }
            Op::Sigmoid(x) => {
                let d = out
                    .iter()
                    .zip(g)
                    .map(|(&y, &gi)| gi * y * (T::one() - y))
                    .collect();
                vec![(*x, d)]
            }
            Op::Resize(x) => {
                let d = kernels::resize_backward(self.shape(*x), g, out_shape.h, out_shape.w);
                vec![(*x, d)]
            }
            Op::GlobalAvgPool(x) => {
                let s = self.shape(*x);
                let denom: T = cast(s.plane() as f64);
                let mut d = Vec::with_capacity(s.numel());
                for &gi in g {
                    d.extend(std::iter::repeat(gi / denom).take(s.plane()));
                }
                vec![(*x, d)]
            }
            Op::Concat(inputs) => {
                let plane = out_shape.plane();
                let mut res: Vec<(Var, Vec<T>)> = inputs
                    .iter()
                    .map(|v| (*v, Vec::with_capacity(self.shape(*v).numel())))
                    .collect();
                let mut off = 0;
                for _ in 0..out_shape.n {
                    for (v, buf) in res.iter_mut() {
                        let len = self.shape(*v).c * plane;
                        buf.extend_from_slice(&g[off..off + len]);
                        off += len;
                    }
                }
                res
            }
            Op::SliceChannels { input, start } => {
                let s = self.shape(*input);
                let plane = s.plane();
                let len = out_shape.c * plane;
                let mut d = vec![T::zero(); s.numel()];
                for n in 0..s.n {
                    let dst = (n * s.c + start) * plane;
                    d[dst..dst + len].copy_from_slice(&g[n * len..(n + 1) * len]);
                }
                vec![(*input, d)]
            }
            Op::MaxPool2 { input, argmax } => {
                let mut d = vec![T::zero(); self.shape(*input).numel()];
                for (&a, &gi) in argmax.iter().zip(g) {
                    d[a as usize] += gi;
                }
                vec![(*input, d)]
            }
            Op::Mul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let plane = sa.plane();
                let mut da = vec![T::zero(); sa.numel()];
                let mut db = vec![T::zero(); sb.numel()];
                for n in 0..sa.n {
                    for c in 0..sa.c {
                        let ao = (n * sa.c + c) * plane;
                        let bo = (n * sb.c + if sb.c == 1 { 0 } else { c }) * plane;
                        for p in 0..plane {
                            da[ao + p] = g[ao + p] * bv[bo + p];
                            db[bo + p] += g[ao + p] * av[ao + p];
                        }
                    }
                }
                vec![(*a, da), (*b, db)]
            }
            Op::Add(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let plane = sa.plane();
                let mut db = vec![T::zero(); sb.numel()];
                for n in 0..sa.n {
                    for c in 0..sa.c {
                        let ao = (n * sa.c + c) * plane;
                        let bo = (n * sb.c + if sb.c == 1 { 0 } else { c }) * plane;
                        for p in 0..plane {
                            db[bo + p] += g[ao + p];
                        }
                    }
                }
                vec![(*a, g.to_vec()), (*b, db)]
            }
            Op::Sum(x) => vec![(*x, vec![g[0]; self.shape(*x).numel()])],
            Op::Scale(x, f) => vec![(*x, g.iter().map(|&v| v * *f).collect())],
            Op::Bce { pred, target } => {
                let p = self.value(*pred).data();
                let (lo, hi) = bce_bounds::<T>();
                let m: T = cast(p.len() as f64);
                let d = p
                    .iter()
                    .zip(target)
                    .map(|(&pi, &ti)| {
                        if pi < lo || pi > hi {
                            T::zero()
                        } else {
                            g[0] * (-ti / pi + (T::one() - ti) / (T::one() - pi)) / m
                        }
                    })
                    .collect();
                vec![(*pred, d)]
            }
            Op::SquaredError {
                pred,
                target,
                divisor,
            } => {
                let two: T = cast(2.0);
                let d = self
                    .value(*pred)
                    .data()
                    .iter()
                    .zip(target)
                    .map(|(&a, &b)| g[0] * two * (a - b) / *divisor)
                    .collect();
                vec![(*pred, d)]
            }
            Op::WeightedSum(terms) => terms.iter().map(|(v, w)| (*v, vec![g[0] * *w])).collect(),
        })
    }
}

#[cfg(debug_assertions)]
fn inputs_of<T>(op: &Op<T>) -> Vec<Var> {
    match op {
        Op::Leaf => Vec::new(),
        Op::Conv {
            input,
            weight,
            bias,
            ..
        } => {
            let mut v = vec![*input, *weight];
            v.extend(bias);
            v
        }
        Op::BatchNorm {
            input, gamma, beta, ..
        } => vec![*input, *gamma, *beta],
        Op::Relu(x)
        | Op::Sigmoid(x)
        | Op::Resize(x)
        | Op::GlobalAvgPool(x)
        | Op::Sum(x)
        | Op::Scale(x, _) => vec![*x],
        Op::SliceChannels { input, .. } | Op::MaxPool2 { input, .. } => vec![*input],
        Op::Concat(v) => v.clone(),
        Op::Mul(a, b) | Op::Add(a, b) => vec![*a, *b],
        Op::Bce { pred, .. } | Op::SquaredError { pred, .. } => vec![*pred],
        Op::WeightedSum(t) => t.iter().map(|(v, _)| *v).collect(),
    }
}

/// Logistic function kept strictly inside `(0, 1)` for every finite input.
fn sigmoid<T: Real>(x: T) -> T {
    let y = if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    };
    let top = T::one() - T::epsilon() / cast(2.0);
    y.max(T::min_positive_value()).min(top)
}

pub(crate) fn bce_bounds<T: Real>() -> (T, T) {
    let c: T = cast(crate::loss::BCE_CLAMP);
    (c, T::one() - c)
}
