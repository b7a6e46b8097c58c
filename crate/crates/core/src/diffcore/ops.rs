//! Pointwise, pooling, reshaping and reduction ops.

use super::float::Float;
use super::tape::{GradSink, Op, Tape, Var};
use super::tensor::{dims4, Tensor};
use super::GUARD_EPS;
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

/// Right-hand operand of an elementwise op.
#[derive(Debug, Clone, Copy)]
pub enum Rhs<T> {
    Var(Var),
    Scalar(T),
}

impl<T> From<Var> for Rhs<T> {
    fn from(v: Var) -> Self {
        Rhs::Var(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
    /// `ln(1 + e^x)`, used for losses in the logit domain.
    Softplus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    /// Mean over H and W: N×C×H×W → N×C×1×1.
    GlobalAvgSpatial,
    /// Mean over channels: N×C×H×W → N×1×H×W.
    ChannelMean,
    /// Max over channels: N×C×H×W → N×1×H×W. Ties go to the lowest channel.
    ChannelMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Mean,
    Sum,
    /// `mean(|x|)`, with subgradient 0 at exactly 0.
    AbsMean,
}

fn guard<T: Float>(d: T) -> (T, bool) {
    let eps = T::of(GUARD_EPS);
    if d.abs() < eps {
        (if d < T::zero() { -eps } else { eps }, true)
    } else {
        (d, false)
    }
}

/// For each flat index of `a_shape`, the flat index of the broadcast operand.
fn broadcast_map(a_shape: &[usize], b_shape: &[usize]) -> Result<Option<Vec<usize>>> {
    if a_shape == b_shape {
        return Ok(None);
    }
    let b_numel: usize = b_shape.iter().product();
    let numel: usize = a_shape.iter().product();
    if b_numel == 1 {
        return Ok(Some(vec![0; numel]));
    }
    let compatible = a_shape.len() == b_shape.len() && a_shape.iter().zip(b_shape).all(|(&a, &b)| a == b || b == 1);
    if !compatible {
        return Err(shape_err!("cannot broadcast {:?} onto {:?}", b_shape, a_shape));
    }
    let rank = a_shape.len();
    let mut b_strides = vec![0usize; rank];
    let mut stride = 1;
    for d in (0..rank).rev() {
        b_strides[d] = if b_shape[d] == 1 { 0 } else { stride };
        stride *= b_shape[d];
    }
    let mut map = Vec::with_capacity(numel);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..numel {
        map.push(off);
        for d in (0..rank).rev() {
            idx[d] += 1;
            off += b_strides[d];
            if idx[d] < a_shape[d] {
                break;
            }
            off -= b_strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    Ok(Some(map))
}

fn apply<T: Float>(kind: BinaryKind, x: T, y: T) -> T {
    match kind {
        BinaryKind::Add => x + y,
        BinaryKind::Sub => x - y,
        BinaryKind::Mul => x * y,
        BinaryKind::Div => x / guard(y).0,
    }
}

fn sigmoid<T: Float>(x: T) -> T {
    let one = T::one();
    let s = if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    };
    clamp_keep_nan(s, T::min_positive_value(), T::below_one())
}

/// Like `clamp`, but NaN passes through so divergence stays visible.
fn clamp_keep_nan<T: Float>(v: T, lo: T, hi: T) -> T {
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

fn softplus<T: Float>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

impl<T: Float> Tape<T> {
    /// `a (op) b`, where `b` is a tensor of the same shape, a tensor whose
    /// size-1 dimensions broadcast onto `a`, or a scalar.
    pub fn elementwise(&mut self, a: Var, b: impl Into<Rhs<T>>, kind: BinaryKind) -> Result<Var> {
        self.check(a)?;
        match b.into() {
            Rhs::Scalar(s) => {
                let x = self.value(a);
                let data = x.data().iter().map(|&v| apply(kind, v, s)).collect();
                let out = Tensor::from_parts(x.shape().to_vec(), data);
                let rg = self.requires_grad(a);
                Ok(self.push(out, Op::BinaryScalar { kind, a, s }, rg))
            }
            Rhs::Var(b) => {
                self.check(b)?;
                let (xa, xb) = (self.value(a), self.value(b));
                let bmap = broadcast_map(xa.shape(), xb.shape())?;
                let (da, db) = (xa.data(), xb.data());
                let data: Vec<T> = match &bmap {
                    None => da.iter().zip(db).map(|(&x, &y)| apply(kind, x, y)).collect(),
                    Some(m) => da.iter().zip(m).map(|(&x, &j)| apply(kind, x, db[j])).collect(),
                };
                let out = Tensor::from_parts(xa.shape().to_vec(), data);
                let rg = self.requires_grad(a) || self.requires_grad(b);
                Ok(self.push(out, Op::Binary { kind, a, b, bmap }, rg))
            }
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, BinaryKind::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, BinaryKind::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, BinaryKind::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, BinaryKind::Div)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        self.elementwise(a, Rhs::Scalar(T::of(s)), BinaryKind::Add)
    }

    pub fn mul_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        self.elementwise(a, Rhs::Scalar(T::of(s)), BinaryKind::Mul)
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Result<Var> {
        self.check(input)?;
        if let Activation::LeakyRelu(alpha) = kind {
            if !(0.0..1.0).contains(&alpha) {
                return Err(Error::Config(format!("leaky_relu slope {alpha} outside [0, 1)")));
            }
        }
        let x = self.value(input);
        let x_shape = x.shape().to_vec();
        let data: Vec<T> = match kind {
            Activation::Relu => x
                .data()
                .iter()
                .map(|&v| if v < T::zero() { T::zero() } else { v })
                .collect(),
            Activation::LeakyRelu(alpha) => {
                let a = T::of(alpha);
                x.data()
                    .iter()
                    .map(|&v| if v > T::zero() { v } else { a * v })
                    .collect()
            }
            Activation::Sigmoid => x.data().iter().map(|&v| sigmoid(v)).collect(),
            Activation::Tanh => {
                let lim = T::below_one();
                x.data().iter().map(|&v| clamp_keep_nan(v.tanh(), -lim, lim)).collect()
            }
            Activation::Softplus => x.data().iter().map(|&v| softplus(v)).collect(),
        };
        if self.tracks_branches() {
            let x = self.value(input).data().to_vec();
            match kind {
                Activation::Relu | Activation::LeakyRelu(_) => {
                    self.note_branches(x.iter().map(|&v| (v > T::zero()) as u64))
                }
                Activation::Sigmoid | Activation::Tanh => {
                    let lim = T::below_one();
                    let lo = if kind == Activation::Tanh {
                        -lim
                    } else {
                        T::min_positive_value()
                    };
                    self.note_branches(data.iter().map(|&v| (v >= lim) as u64 | (((v <= lo) as u64) << 1)))
                }
                Activation::Softplus => {}
            }
        }
        let out = Tensor::from_parts(x_shape, data);
        let rg = self.requires_grad(input);
        Ok(self.push(out, Op::Act { input, kind }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Relu)
    }

    pub fn leaky_relu(&mut self, x: Var, alpha: f64) -> Result<Var> {
        self.activation(x, Activation::LeakyRelu(alpha))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Tanh)
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Softplus)
    }

    pub fn pool(&mut self, input: Var, kind: PoolKind) -> Result<Var> {
        self.check(input)?;
        let x = self.value(input);
        let [n, c, h, w] = x.dims4()?;
        let hw = h * w;
        let d = x.data();
        let mut argmax = Vec::new();
        let out = match kind {
            PoolKind::GlobalAvgSpatial => {
                let inv = T::one() / T::of(hw as f64);
                let data = d.chunks_exact(hw).map(|p| p.iter().copied().sum::<T>() * inv).collect();
                Tensor::from_parts(vec![n, c, 1, 1], data)
            }
            PoolKind::ChannelMean => {
                let inv = T::one() / T::of(c as f64);
                let mut data = vec![T::zero(); n * hw];
                for b in 0..n {
                    let o = &mut data[b * hw..(b + 1) * hw];
                    for ch in 0..c {
                        let src = &d[(b * c + ch) * hw..(b * c + ch + 1) * hw];
                        o.iter_mut().zip(src).for_each(|(o, &v)| *o += v);
                    }
                    o.iter_mut().for_each(|v| *v *= inv);
                }
                Tensor::from_parts(vec![n, 1, h, w], data)
            }
            PoolKind::ChannelMax => {
                let mut data = vec![T::zero(); n * hw];
                argmax = vec![0u32; n * hw];
                for b in 0..n {
                    for p in 0..hw {
                        let mut best = d[b * c * hw + p];
                        let mut arg = 0u32;
                        for ch in 1..c {
                            let v = d[(b * c + ch) * hw + p];
                            if v > best {
                                best = v;
                                arg = ch as u32;
                            }
                        }
                        data[b * hw + p] = best;
                        argmax[b * hw + p] = arg;
                    }
                }
                Tensor::from_parts(vec![n, 1, h, w], data)
            }
        };
        if kind == PoolKind::ChannelMax && self.tracks_branches() {
            let a = argmax.clone();
            self.note_words(a.iter().map(|&v| v as u64));
        }
        let rg = self.requires_grad(input);
        Ok(self.push(out, Op::Pool { input, kind, argmax }, rg))
    }

    /// Joins tensors along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = *inputs.first().ok_or_else(|| shape_err!("concat of zero tensors"))?;
        for &v in inputs {
            self.check(v)?;
        }
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(shape_err!("concat axis {axis} out of range for rank {}", base.len()));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let same_rank = s.len() == base.len();
            if !same_rank || s.iter().zip(&base).enumerate().any(|(d, (a, b))| d != axis && a != b) {
                return Err(shape_err!("concat along axis {axis}: {:?} vs {:?}", s, base));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut shape = base.clone();
        shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let x = self.value(v);
                let row = x.shape()[axis] * inner;
                data.extend_from_slice(&x.data()[o * row..(o + 1) * row]);
            }
        }
        let rg = inputs.iter().any(|&v| self.requires_grad(v));
        let out = Tensor::from_parts(shape, data);
        Ok(self.push(
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    pub fn reduce(&mut self, input: Var, kind: ReduceKind) -> Result<Var> {
        self.check(input)?;
        let x = self.value(input);
        let n = x.numel();
        if n == 0 {
            return Err(shape_err!("reduction over an empty tensor"));
        }
        let d = x.data();
        let v = match kind {
            ReduceKind::Sum => d.iter().copied().sum::<T>(),
            ReduceKind::Mean => d.iter().copied().sum::<T>() / T::of(n as f64),
            ReduceKind::AbsMean => d.iter().map(|v| v.abs()).sum::<T>() / T::of(n as f64),
        };
        if kind == ReduceKind::AbsMean && self.tracks_branches() {
            let x = self.value(input).data().to_vec();
            self.note_branches(
                x.iter()
                    .map(|&v| (v > T::zero()) as u64 | (((v < T::zero()) as u64) << 1)),
            );
        }
        let rg = self.requires_grad(input);
        Ok(self.push(Tensor::scalar(v), Op::Reduce { input, kind }, rg))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.reduce(x, ReduceKind::Mean)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.reduce(x, ReduceKind::Sum)
    }

    /// Zero padding of the spatial dims by `[top, bottom, left, right]`.
    pub fn pad2d(&mut self, input: Var, pads: [usize; 4]) -> Result<Var> {
        self.check(input)?;
        let x = self.value(input);
        let [n, c, h, w] = x.dims4()?;
        let [top, bottom, left, right] = pads;
        let (oh, ow) = (h + top + bottom, w + left + right);
        let mut data = vec![T::zero(); n * c * oh * ow];
        for (plane, src) in x.data().chunks_exact(h * w).enumerate() {
            let dst = &mut data[plane * oh * ow..(plane + 1) * oh * ow];
            for r in 0..h {
                let o = (r + top) * ow + left;
                dst[o..o + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
        }
        let rg = self.requires_grad(input);
        let out = Tensor::from_parts(vec![n, c, oh, ow], data);
        Ok(self.push(out, Op::Pad2d { input, pads }, rg))
    }

    /// Padding by `[top, bottom, left, right]` that repeats the edge
    /// pixels, so a constant plane stays constant.
    pub fn pad_replicate(&mut self, input: Var, pads: [usize; 4]) -> Result<Var> {
        self.check(input)?;
        let x = self.value(input);
        let [n, c, h, w] = x.dims4()?;
        let (oh, ow) = (h + pads[0] + pads[1], w + pads[2] + pads[3]);
        let src_of = replicate_map(h, w, pads);
        let mut data = Vec::with_capacity(n * c * oh * ow);
        for src in x.data().chunks_exact(h * w) {
            data.extend(src_of.iter().map(|&i| src[i]));
        }
        let rg = self.requires_grad(input);
        let out = Tensor::from_parts(vec![n, c, oh, ow], data);
        Ok(self.push(out, Op::PadReplicate { input, pads }, rg))
    }

    /// Nearest-neighbour spatial upsampling by an integer factor.
    pub fn upsample_nearest(&mut self, input: Var, scale: usize) -> Result<Var> {
        self.check(input)?;
        if scale == 0 {
            return Err(Error::Config("upsample scale must be at least 1".into()));
        }
        let x = self.value(input);
        let [n, c, h, w] = x.dims4()?;
        let (oh, ow) = (h * scale, w * scale);
        let mut data = vec![T::zero(); n * c * oh * ow];
        for (plane, src) in x.data().chunks_exact(h * w).enumerate() {
            let dst = &mut data[plane * oh * ow..(plane + 1) * oh * ow];
            for r in 0..oh {
                let srow = &src[(r / scale) * w..(r / scale + 1) * w];
                for (cidx, o) in dst[r * ow..(r + 1) * ow].iter_mut().enumerate() {
                    *o = srow[cidx / scale];
                }
            }
        }
        let rg = self.requires_grad(input);
        let out = Tensor::from_parts(vec![n, c, oh, ow], data);
        Ok(self.push(out, Op::Upsample { input, scale }, rg))
    }
}

fn reduce_into<T: Float>(slot: &mut [T], bmap: Option<&[usize]>, contrib: impl Iterator<Item = T>) {
    match bmap {
        None => slot.iter_mut().zip(contrib).for_each(|(s, v)| *s += v),
        Some(m) => m.iter().zip(contrib).for_each(|(&j, v)| slot[j] += v),
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn binary_backward<T: Float>(
    kind: BinaryKind,
    xa: &Tensor<T>,
    xb: &Tensor<T>,
    a: Var,
    b: Var,
    bmap: Option<&[usize]>,
    g: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let (da, db) = (xa.data(), xb.data());
    let bval = |i: usize| match bmap {
        None => db[i],
        Some(m) => db[m[i]],
    };
    if let Some(slot) = sink.slot(a) {
        match kind {
            BinaryKind::Add | BinaryKind::Sub => slot.iter_mut().zip(g).for_each(|(s, &v)| *s += v),
            BinaryKind::Mul => slot.iter_mut().enumerate().for_each(|(i, s)| *s += g[i] * bval(i)),
            BinaryKind::Div => slot
                .iter_mut()
                .enumerate()
                .for_each(|(i, s)| *s += g[i] / guard(bval(i)).0),
        }
    }
    if let Some(slot) = sink.slot(b) {
        match kind {
            BinaryKind::Add => reduce_into(slot, bmap, g.iter().copied()),
            BinaryKind::Sub => reduce_into(slot, bmap, g.iter().map(|&v| -v)),
            BinaryKind::Mul => reduce_into(slot, bmap, g.iter().zip(da).map(|(&v, &x)| v * x)),
            BinaryKind::Div => reduce_into(
                slot,
                bmap,
                g.iter().zip(da).enumerate().map(|(i, (&v, &x))| {
                    let (d, clamped) = guard(bval(i));
                    if clamped {
                        T::zero()
                    } else {
                        -v * x / (d * d)
                    }
                }),
            ),
        }
    }
}

pub(crate) fn scalar_backward<T: Float>(
    kind: BinaryKind,
    _xa: &Tensor<T>,
    a: Var,
    s: T,
    g: &[T],
    sink: &mut GradSink<'_, T>,
) {
    if let Some(slot) = sink.slot(a) {
        let factor = match kind {
            BinaryKind::Add | BinaryKind::Sub => T::one(),
            BinaryKind::Mul => s,
            BinaryKind::Div => T::one() / guard(s).0,
        };
        slot.iter_mut().zip(g).for_each(|(o, &v)| *o += v * factor);
    }
}

pub(crate) fn act_backward<T: Float>(
    kind: Activation,
    x: &Tensor<T>,
    y: &Tensor<T>,
    input: Var,
    g: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let Some(slot) = sink.slot(input) else { return };
    let (xd, yd) = (x.data(), y.data());
    let one = T::one();
    match kind {
        Activation::Relu => {
            for i in 0..slot.len() {
                if xd[i] > T::zero() {
                    slot[i] += g[i];
                }
            }
        }
        Activation::LeakyRelu(alpha) => {
            let a = T::of(alpha);
            for i in 0..slot.len() {
                slot[i] += if xd[i] > T::zero() { g[i] } else { a * g[i] };
            }
        }
        Activation::Sigmoid => {
            for i in 0..slot.len() {
                slot[i] += g[i] * yd[i] * (one - yd[i]);
            }
        }
        Activation::Tanh => {
            for i in 0..slot.len() {
                slot[i] += g[i] * (one - yd[i] * yd[i]);
            }
        }
        Activation::Softplus => {
            for i in 0..slot.len() {
                slot[i] += g[i] * sigmoid(xd[i]);
            }
        }
    }
}

pub(crate) fn pool_backward<T: Float>(
    kind: PoolKind,
    x: &Tensor<T>,
    input: Var,
    argmax: &[u32],
    g: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let Some(slot) = sink.slot(input) else { return };
    let [n, c, h, w] = dims4(x.shape()).expect("pool input is 4-D");
    let hw = h * w;
    match kind {
        PoolKind::GlobalAvgSpatial => {
            let inv = T::one() / T::of(hw as f64);
            for (plane, &gv) in g.iter().enumerate() {
                slot[plane * hw..(plane + 1) * hw]
                    .iter_mut()
                    .for_each(|s| *s += gv * inv);
            }
        }
        PoolKind::ChannelMean => {
            let inv = T::one() / T::of(c as f64);
            for b in 0..n {
                for ch in 0..c {
                    let dst = &mut slot[(b * c + ch) * hw..(b * c + ch + 1) * hw];
                    dst.iter_mut()
                        .zip(&g[b * hw..(b + 1) * hw])
                        .for_each(|(s, &gv)| *s += gv * inv);
                }
            }
        }
        PoolKind::ChannelMax => {
            for b in 0..n {
                for p in 0..hw {
                    let ch = argmax[b * hw + p] as usize;
                    slot[(b * c + ch) * hw + p] += g[b * hw + p];
                }
            }
        }
    }
}

pub(crate) fn concat_backward<T: Float>(
    inputs: &[Var],
    shapes: &[&[usize]],
    axis: usize,
    g: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let base = shapes[0];
    let outer: usize = base[..axis].iter().product();
    let inner: usize = base[axis + 1..].iter().product();
    let total: usize = shapes.iter().map(|s| s[axis]).sum();
    let mut offset = 0;
    for (&v, s) in inputs.iter().zip(shapes) {
        let row = s[axis] * inner;
        if let Some(slot) = sink.slot(v) {
            for o in 0..outer {
                let src = &g[o * total * inner + offset..o * total * inner + offset + row];
                slot[o * row..(o + 1) * row]
                    .iter_mut()
                    .zip(src)
                    .for_each(|(d, &gv)| *d += gv);
            }
        }
        offset += row;
    }
}

pub(crate) fn reduce_backward<T: Float>(
    kind: ReduceKind,
    x: &Tensor<T>,
    input: Var,
    g: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let Some(slot) = sink.slot(input) else { return };
    let gv = g[0];
    let n = T::of(x.numel() as f64);
    match kind {
        ReduceKind::Sum => slot.iter_mut().for_each(|s| *s += gv),
        ReduceKind::Mean => {
            let d = gv / n;
            slot.iter_mut().for_each(|s| *s += d);
        }
        ReduceKind::AbsMean => {
            let d = gv / n;
            for (s, &v) in slot.iter_mut().zip(x.data()) {
                if v > T::zero() {
                    *s += d;
                } else if v < T::zero() {
                    *s -= d;
                }
            }
        }
    }
}

pub(crate) fn pad_backward<T: Float>(x: &Tensor<T>, input: Var, pads: [usize; 4], g: &[T], sink: &mut GradSink<'_, T>) {
    let Some(slot) = sink.slot(input) else { return };
    let [_, _, h, w] = dims4(x.shape()).expect("pad input is 4-D");
    let [top, bottom, left, right] = pads;
    let (oh, ow) = (h + top + bottom, w + left + right);
    for (plane, dst) in slot.chunks_exact_mut(h * w).enumerate() {
        let src = &g[plane * oh * ow..(plane + 1) * oh * ow];
        for r in 0..h {
            let o = (r + top) * ow + left;
            dst[r * w..(r + 1) * w]
                .iter_mut()
                .zip(&src[o..o + w])
                .for_each(|(d, &v)| *d += v);
        }
    }
}

/// Source index within an `h×w` plane of every replicate-padded pixel.
fn replicate_map(h: usize, w: usize, pads: [usize; 4]) -> Vec<usize> {
    let [top, bottom, left, right] = pads;
    let (oh, ow) = (h + top + bottom, w + left + right);
    (0..oh)
        .flat_map(|r| {
            let sr = r.saturating_sub(top).min(h - 1);
            (0..ow).map(move |c| sr * w + c.saturating_sub(left).min(w - 1))
        })
        .collect()
}

pub(crate) fn pad_replicate_backward<T: Float>(
    x: &Tensor<T>,
    input: Var,
    pads: [usize; 4],
    g: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let Some(slot) = sink.slot(input) else { return };
    let [_, _, h, w] = dims4(x.shape()).expect("pad input is 4-D");
    let src_of = replicate_map(h, w, pads);
    for (dst, src) in slot.chunks_exact_mut(h * w).zip(g.chunks_exact(src_of.len())) {
        for (&i, &v) in src_of.iter().zip(src) {
            dst[i] += v;
        }
    }
}

pub(crate) fn upsample_backward<T: Float>(
    x: &Tensor<T>,
    input: Var,
    scale: usize,
    g: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let Some(slot) = sink.slot(input) else { return };
    let [_, _, h, w] = dims4(x.shape()).expect("upsample input is 4-D");
    let (oh, ow) = (h * scale, w * scale);
    for (plane, dst) in slot.chunks_exact_mut(h * w).enumerate() {
        let src = &g[plane * oh * ow..(plane + 1) * oh * ow];
        for r in 0..oh {
            for cidx in 0..ow {
                dst[(r / scale) * w + cidx / scale] += src[r * ow + cidx];
            }
        }
    }
}
