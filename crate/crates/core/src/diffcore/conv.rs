//! 2-D convolution and its adjoint via im2col + GEMM.
//!
//! Work is done per batch sample and, within a sample, in bands of output
//! rows so the column buffer stays bounded on large images.

use super::float::{gemm, Float, MatMut, MatRef};
use super::tape::{GradSink, Op, Tape, Var};
use super::tensor::{dims4, Tensor};
use crate::error::{shape_err, Error, Result};

/// Upper bound on column-buffer elements per band.
const COL_BUDGET: usize = 1 << 22;

/// Stride and symmetric zero padding of a convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn new(stride: usize, padding: usize) -> Self {
        ConvSpec { stride, padding }
    }

    /// Output extent of a convolution over `size` with kernel extent `k`.
    pub fn conv_out(&self, size: usize, k: usize) -> Result<usize> {
        self.validate(k)?;
        let padded = size + 2 * self.padding;
        if padded < k {
            return Err(shape_err!(
                "kernel {k} larger than padded input {padded} (size {size}, padding {})",
                self.padding
            ));
        }
        Ok((padded - k) / self.stride + 1)
    }

    /// Output extent of a transposed convolution over `size`.
    pub fn transpose_out(&self, size: usize, k: usize) -> Result<usize> {
        self.validate(k)?;
        if size == 0 {
            return Err(shape_err!("empty transposed-convolution input"));
        }
        let full = (size - 1) * self.stride + k;
        if full <= 2 * self.padding {
            return Err(shape_err!("padding {} consumes the whole output", self.padding));
        }
        Ok(full - 2 * self.padding)
    }

    fn validate(&self, k: usize) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Config("convolution stride must be at least 1".into()));
        }
        if k == 0 {
            return Err(shape_err!("convolution kernel extent must be at least 1"));
        }
        Ok(())
    }
}

/// Geometry of one convolution viewed from its "image" side (`c×h×w`) and
/// its "column" side (`oh×ow` kernel placements).
#[derive(Clone, Copy)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geom {
    fn k(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn band_rows(&self) -> usize {
        (COL_BUDGET / (self.k() * self.ow).max(1)).clamp(1, self.oh)
    }

    /// Source pixel for placement row `r`, kernel row `ki` (None = padding).
    #[inline]
    fn src(&self, out: usize, kidx: usize, extent: usize) -> Option<usize> {
        let v = (out * self.stride + kidx) as isize - self.pad as isize;
        (v >= 0 && (v as usize) < extent).then_some(v as usize)
    }
}

/// Fills `col` (`k × (r1-r0)·ow`) with patches of `img` for placement rows `r0..r1`.
fn im2col<T: Float>(img: &[T], g: &Geom, r0: usize, r1: usize, col: &mut [T]) {
    let np = (r1 - r0) * g.ow;
    let mut row = 0;
    for ci in 0..g.c {
        let plane = &img[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let dst = &mut col[row * np..(row + 1) * np];
                for (ri, r) in (r0..r1).enumerate() {
                    let line = &mut dst[ri * g.ow..(ri + 1) * g.ow];
                    match g.src(r, ki, g.h) {
                        None => line.iter_mut().for_each(|v| *v = T::zero()),
                        Some(y) => {
                            let src = &plane[y * g.w..(y + 1) * g.w];
                            for (oc, v) in line.iter_mut().enumerate() {
                                *v = match g.src(oc, kj, g.w) {
                                    Some(x) => src[x],
                                    None => T::zero(),
                                };
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-adds `col` back onto `img`; the adjoint of [`im2col`].
fn col2im<T: Float>(col: &[T], g: &Geom, r0: usize, r1: usize, img: &mut [T]) {
    let np = (r1 - r0) * g.ow;
    let mut row = 0;
    for ci in 0..g.c {
        let plane = &mut img[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let src = &col[row * np..(row + 1) * np];
                for (ri, r) in (r0..r1).enumerate() {
                    let Some(y) = g.src(r, ki, g.h) else { continue };
                    let line = &src[ri * g.ow..(ri + 1) * g.ow];
                    let dst = &mut plane[y * g.w..(y + 1) * g.w];
                    for (oc, &v) in line.iter().enumerate() {
                        if let Some(x) = g.src(oc, kj, g.w) {
                            dst[x] += v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn add_bias<T: Float>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_exact_mut(plane).zip(bias.iter().cycle()) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn bias_grad<T: Float>(slot: &mut [T], g: &[T], plane: usize) {
    let c = slot.len();
    for (i, chunk) in g.chunks_exact(plane).enumerate() {
        slot[i % c] += chunk.iter().copied().sum::<T>();
    }
}

impl<T: Float> Tape<T> {
    /// Cross-correlation of `input` (N×Cin×H×W) with `weight` (Cout×Cin×kH×kW).
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, spec: ConvSpec) -> Result<Var> {
        self.check(input)?;
        self.check(weight)?;
        let [n, cin, h, w] = self.value(input).dims4()?;
        let [cout, wcin, kh, kw] = self.value(weight).dims4()?;
        if wcin != cin {
            return Err(shape_err!(
                "conv2d: weight expects {wcin} input channels, input has {cin}"
            ));
        }
        let oh = spec.conv_out(h, kh)?;
        let ow = spec.conv_out(w, kw)?;
        if let Some(b) = bias {
            self.check(b)?;
            if self.shape(b) != [cout] {
                return Err(shape_err!("conv2d: bias shape {:?}, expected [{cout}]", self.shape(b)));
            }
        }
        let g = Geom {
            c: cin,
            h,
            w,
            kh,
            kw,
            stride: spec.stride,
            pad: spec.padding,
            oh,
            ow,
        };
        let k = g.k();
        let x = self.value(input).data();
        let wd = self.value(weight).data();
        let mut out = vec![T::zero(); n * cout * oh * ow];
        let band = g.band_rows();
        let mut col = vec![T::zero(); k * band * ow];
        for b in 0..n {
            let img = &x[b * cin * h * w..(b + 1) * cin * h * w];
            let ob = &mut out[b * cout * oh * ow..(b + 1) * cout * oh * ow];
            for r0 in (0..oh).step_by(band) {
                let r1 = (r0 + band).min(oh);
                let np = (r1 - r0) * ow;
                im2col(img, &g, r0, r1, &mut col[..k * np]);
                gemm(
                    MatRef::rows(wd, 0, cout, k, k),
                    MatRef::rows(&col, 0, k, np, np),
                    T::zero(),
                    MatMut::rows(ob, r0 * ow, cout, np, oh * ow),
                );
            }
        }
        if let Some(bv) = bias {
            add_bias(&mut out, self.value(bv).data(), oh * ow);
        }
        let rg = self.requires_grad(input) || self.requires_grad(weight) || bias.is_some_and(|b| self.requires_grad(b));
        let t = Tensor::from_parts(vec![n, cout, oh, ow], out);
        Ok(self.push(
            t,
            Op::Conv2d {
                input,
                weight,
                bias,
                spec,
            },
            rg,
        ))
    }

    /// Transposed convolution — the adjoint of [`Tape::conv2d`] in its
    /// input. `weight` is Cin×Cout×kH×kW, i.e. the weight of the conv2d
    /// being transposed.
    pub fn conv_transpose2d(&mut self, input: Var, weight: Var, bias: Option<Var>, spec: ConvSpec) -> Result<Var> {
        self.check(input)?;
        self.check(weight)?;
        let [n, cin, h, w] = self.value(input).dims4()?;
        let [wcin, cout, kh, kw] = self.value(weight).dims4()?;
        if wcin != cin {
            return Err(shape_err!(
                "conv_transpose2d: weight expects {wcin} input channels, input has {cin}"
            ));
        }
        let oh = spec.transpose_out(h, kh)?;
        let ow = spec.transpose_out(w, kw)?;
        if let Some(b) = bias {
            self.check(b)?;
            if self.shape(b) != [cout] {
                return Err(shape_err!(
                    "conv_transpose2d: bias shape {:?}, expected [{cout}]",
                    self.shape(b)
                ));
            }
        }
        // Image side is the output; placements are the input pixels.
        let g = Geom {
            c: cout,
            h: oh,
            w: ow,
            kh,
            kw,
            stride: spec.stride,
            pad: spec.padding,
            oh: h,
            ow: w,
        };
        if spec.conv_out(oh, kh)? != h || spec.conv_out(ow, kw)? != w {
            return Err(shape_err!("conv_transpose2d: inconsistent geometry"));
        }
        let k = g.k();
        let x = self.value(input).data();
        let wd = self.value(weight).data();
        let mut out = vec![T::zero(); n * cout * oh * ow];
        let band = g.band_rows();
        let mut col = vec![T::zero(); k * band * w];
        for b in 0..n {
            let xb = &x[b * cin * h * w..(b + 1) * cin * h * w];
            let ob = &mut out[b * cout * oh * ow..(b + 1) * cout * oh * ow];
            for r0 in (0..h).step_by(band) {
                let r1 = (r0 + band).min(h);
                let np = (r1 - r0) * w;
                gemm(
                    MatRef::transposed(wd, 0, k, cin, k),
                    MatRef::rows(xb, r0 * w, cin, np, h * w),
                    T::zero(),
                    MatMut::rows(&mut col, 0, k, np, np),
                );
                col2im(&col[..k * np], &g, r0, r1, ob);
            }
        }
        if let Some(bv) = bias {
            add_bias(&mut out, self.value(bv).data(), oh * ow);
        }
        let rg = self.requires_grad(input) || self.requires_grad(weight) || bias.is_some_and(|b| self.requires_grad(b));
        let t = Tensor::from_parts(vec![n, cout, oh, ow], out);
        Ok(self.push(
            t,
            Op::ConvTranspose2d {
                input,
                weight,
                bias,
                spec,
            },
            rg,
        ))
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Float>(
    xv: &Tensor<T>,
    wv: &Tensor<T>,
    input: Var,
    weight: Var,
    bias: Option<Var>,
    spec: ConvSpec,
    gout: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let [n, cin, h, w] = dims4(xv.shape()).expect("conv input is 4-D");
    let [cout, _, kh, kw] = dims4(wv.shape()).expect("conv weight is 4-D");
    let oh = spec.conv_out(h, kh).expect("validated in forward");
    let ow = spec.conv_out(w, kw).expect("validated in forward");
    let g = Geom {
        c: cin,
        h,
        w,
        kh,
        kw,
        stride: spec.stride,
        pad: spec.padding,
        oh,
        ow,
    };
    let k = g.k();
    let plane = oh * ow;
    if let Some(b) = bias {
        if let Some(slot) = sink.slot(b) {
            bias_grad(slot, gout, plane);
        }
    }
    let want_w = sink.wants(weight);
    let want_x = sink.wants(input);
    if !want_w && !want_x {
        return;
    }
    let band = g.band_rows();
    let mut col = vec![T::zero(); k * band * ow];
    let mut dw = if want_w { vec![T::zero(); cout * k] } else { Vec::new() };
    let mut dx = if want_x {
        vec![T::zero(); n * cin * h * w]
    } else {
        Vec::new()
    };
    let x = xv.data();
    let wd = wv.data();
    for b in 0..n {
        let img = &x[b * cin * h * w..(b + 1) * cin * h * w];
        let gb = &gout[b * cout * plane..(b + 1) * cout * plane];
        for r0 in (0..oh).step_by(band) {
            let r1 = (r0 + band).min(oh);
            let np = (r1 - r0) * ow;
            if want_w {
                im2col(img, &g, r0, r1, &mut col[..k * np]);
                gemm(
                    MatRef::rows(gb, r0 * ow, cout, np, plane),
                    MatRef::transposed(&col, 0, np, k, np),
                    T::one(),
                    MatMut::rows(&mut dw, 0, cout, k, k),
                );
            }
            if want_x {
                gemm(
                    MatRef::transposed(wd, 0, k, cout, k),
                    MatRef::rows(gb, r0 * ow, cout, np, plane),
                    T::zero(),
                    MatMut::rows(&mut col, 0, k, np, np),
                );
                col2im(
                    &col[..k * np],
                    &g,
                    r0,
                    r1,
                    &mut dx[b * cin * h * w..(b + 1) * cin * h * w],
                );
            }
        }
    }
    if let Some(slot) = sink.slot(weight) {
        slot.iter_mut().zip(&dw).for_each(|(s, &v)| *s += v);
    }
    if let Some(slot) = sink.slot(input) {
        slot.iter_mut().zip(&dx).for_each(|(s, &v)| *s += v);
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_transpose2d_backward<T: Float>(
    xv: &Tensor<T>,
    wv: &Tensor<T>,
    input: Var,
    weight: Var,
    bias: Option<Var>,
    spec: ConvSpec,
    out: &Tensor<T>,
    gout: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let [n, cin, h, w] = dims4(xv.shape()).expect("input is 4-D");
    let [_, cout, kh, kw] = dims4(wv.shape()).expect("weight is 4-D");
    let [_, _, oh, ow] = dims4(out.shape()).expect("output is 4-D");
    let g = Geom {
        c: cout,
        h: oh,
        w: ow,
        kh,
        kw,
        stride: spec.stride,
        pad: spec.padding,
        oh: h,
        ow: w,
    };
    let k = g.k();
    let oplane = oh * ow;
    if let Some(b) = bias {
        if let Some(slot) = sink.slot(b) {
            bias_grad(slot, gout, oplane);
        }
    }
    let want_w = sink.wants(weight);
    let want_x = sink.wants(input);
    if !want_w && !want_x {
        return;
    }
    let band = g.band_rows();
    let mut col = vec![T::zero(); k * band * w];
    let mut dw = if want_w { vec![T::zero(); cin * k] } else { Vec::new() };
    let mut dx = if want_x {
        vec![T::zero(); n * cin * h * w]
    } else {
        Vec::new()
    };
    let x = xv.data();
    let wd = wv.data();
    for b in 0..n {
        let gb = &gout[b * cout * oplane..(b + 1) * cout * oplane];
        let xb = &x[b * cin * h * w..(b + 1) * cin * h * w];
        for r0 in (0..h).step_by(band) {
            let r1 = (r0 + band).min(h);
            let np = (r1 - r0) * w;
            im2col(gb, &g, r0, r1, &mut col[..k * np]);
            if want_x {
                gemm(
                    MatRef::rows(wd, 0, cin, k, k),
                    MatRef::rows(&col, 0, k, np, np),
                    T::zero(),
                    MatMut::rows(&mut dx, b * cin * h * w + r0 * w, cin, np, h * w),
                );
            }
            if want_w {
                gemm(
                    MatRef::rows(xb, r0 * w, cin, np, h * w),
                    MatRef::transposed(&col, 0, np, k, np),
                    T::one(),
                    MatMut::rows(&mut dw, 0, cin, k, k),
                );
            }
        }
    }
    if let Some(slot) = sink.slot(weight) {
        slot.iter_mut().zip(&dw).for_each(|(s, &v)| *s += v);
    }
    if let Some(slot) = sink.slot(input) {
        slot.iter_mut().zip(&dx).for_each(|(s, &v)| *s += v);
    }
}
