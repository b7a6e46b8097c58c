//! Per-channel batch normalisation.

use super::float::Float;
use super::tape::{GradSink, Op, Tape, Var};
use super::tensor::{dims4, Tensor};
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchNormSpec {
    /// Weight of the current batch in the running-statistics update.
    pub momentum: f64,
    pub eps: f64,
}

impl Default for BatchNormSpec {
    fn default() -> Self {
        BatchNormSpec {
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

impl<T: Float> Tape<T> {
    /// Batch normalisation over N, H, W.
    ///
    /// In training mode the output uses the biased batch variance, and the
    /// running statistics are blended towards the batch mean and unbiased
    /// variance. In evaluation mode the running statistics are used as-is
    /// and left untouched.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm2d(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running_mean: &mut [T],
        running_var: &mut [T],
        training: bool,
        spec: BatchNormSpec,
    ) -> Result<Var> {
        if spec.eps.is_nan() || spec.eps <= 0.0 {
            return Err(Error::Config(format!(
                "batch-norm eps must be positive, got {}",
                spec.eps
            )));
        }
        if !(0.0..=1.0).contains(&spec.momentum) {
            return Err(Error::Config(format!(
                "batch-norm momentum {} outside [0, 1]",
                spec.momentum
            )));
        }
        for v in [input, gamma, beta] {
            self.check(v)?;
        }
        let [n, c, h, w] = self.value(input).dims4()?;
        if self.shape(gamma) != [c] || self.shape(beta) != [c] || running_mean.len() != c || running_var.len() != c {
            return Err(shape_err!(
                "batch-norm parameters must have {c} channels (gamma {:?}, beta {:?}, running {} / {})",
                self.shape(gamma),
                self.shape(beta),
                running_mean.len(),
                running_var.len()
            ));
        }
        let hw = h * w;
        let count = n * hw;
        let x = self.value(input).data();
        let eps = T::of(spec.eps);
        let mut mean = vec![T::zero(); c];
        let mut inv_std = vec![T::zero(); c];
        if training {
            if count == 0 {
                return Err(shape_err!("batch-norm over an empty batch"));
            }
            let m = T::of(spec.momentum);
            let inv_count = T::one() / T::of(count as f64);
            for ch in 0..c {
                let planes = (0..n).map(|b| &x[(b * c + ch) * hw..(b * c + ch + 1) * hw]);
                let mu = planes.clone().flatten().copied().sum::<T>() * inv_count;
                let ss = planes.flatten().map(|&v| (v - mu) * (v - mu)).sum::<T>();
                let var = ss * inv_count;
                mean[ch] = mu;
                inv_std[ch] = T::one() / (var + eps).sqrt();
                let unbiased = if count > 1 { ss / T::of((count - 1) as f64) } else { var };
                running_mean[ch] = (T::one() - m) * running_mean[ch] + m * mu;
                running_var[ch] = (T::one() - m) * running_var[ch] + m * unbiased;
            }
        } else {
            for ch in 0..c {
                mean[ch] = running_mean[ch];
                inv_std[ch] = T::one() / (running_var[ch].max(T::zero()) + eps).sqrt();
            }
        }
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let mut out = vec![T::zero(); x.len()];
        for (plane, (o, src)) in out.chunks_exact_mut(hw).zip(x.chunks_exact(hw)).enumerate() {
            let ch = plane % c;
            let scale = gd[ch] * inv_std[ch];
            let shift = bd[ch] - mean[ch] * scale;
            o.iter_mut().zip(src).for_each(|(o, &v)| *o = v * scale + shift);
        }
        let rg = self.requires_grad(input) || self.requires_grad(gamma) || self.requires_grad(beta);
        let t = Tensor::from_parts(vec![n, c, h, w], out);
        Ok(self.push(
            t,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                mean,
                inv_std,
                training,
            },
            rg,
        ))
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn batch_norm_backward<T: Float>(
    xv: &Tensor<T>,
    gv: &Tensor<T>,
    input: Var,
    gamma: Var,
    beta: Var,
    mean: &[T],
    inv_std: &[T],
    training: bool,
    g: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let [n, c, h, w] = dims4(xv.shape()).expect("batch-norm input is 4-D");
    let hw = h * w;
    let x = xv.data();
    // Per-channel Σg and Σg·x̂.
    let mut sum_g = vec![T::zero(); c];
    let mut sum_gx = vec![T::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * hw;
            for i in off..off + hw {
                let xhat = (x[i] - mean[ch]) * inv_std[ch];
                sum_g[ch] += g[i];
                sum_gx[ch] += g[i] * xhat;
            }
        }
    }
    if let Some(slot) = sink.slot(gamma) {
        slot.iter_mut().zip(&sum_gx).for_each(|(s, &v)| *s += v);
    }
    if let Some(slot) = sink.slot(beta) {
        slot.iter_mut().zip(&sum_g).for_each(|(s, &v)| *s += v);
    }
    let Some(slot) = sink.slot(input) else { return };
    let gamma_d = gv.data();
    let count = T::of((n * hw) as f64);
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * hw;
            let k = gamma_d[ch] * inv_std[ch];
            if training {
                let (mg, mgx) = (sum_g[ch] / count, sum_gx[ch] / count);
                for i in off..off + hw {
                    let xhat = (x[i] - mean[ch]) * inv_std[ch];
                    slot[i] += k * (g[i] - mg - xhat * mgx);
                }
            } else {
                for i in off..off + hw {
                    slot[i] += k * g[i];
                }
            }
        }
    }
}
