//! Training objective: adversarial, perceptual and L1 terms.
//!
//! Adversarial terms work on raw logits: `−log σ(z) = softplus(−z)` and
//! `−log(1 − σ(z)) = softplus(z)`, which stay finite for any logit.

use serde::{Deserialize, Serialize};

use crate::diffcore::{Float, ReduceKind, Tape, Var};
use crate::error::{shape_err, Error, Result};
use crate::model::{Bindings, FeatureNet};

/// Scaling of the perceptual (`lambda1`) and L1 (`lambda2`) terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 10.0,
            lambda2: 100.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

fn same_shape<T: Float>(tape: &Tape<T>, a: Var, b: Var, what: &str) -> Result<()> {
    if tape.shape(a) != tape.shape(b) {
        return Err(shape_err!("{what}: {:?} vs {:?}", tape.shape(a), tape.shape(b)));
    }
    Ok(())
}

/// Discriminator loss `mean(−log σ(real)) + mean(−log(1 − σ(fake)))`.
///
/// Both branches differentiate with respect to the discriminator. Keeping
/// the generator out of it is the caller's job: compute `fake` from a
/// detached generator output.
pub fn adv_loss_d<T: Float>(tape: &mut Tape<T>, real: Var, fake: Var) -> Result<Var> {
    same_shape(tape, real, fake, "adversarial logits")?;
    let neg = tape.mul_scalar(real, -1.0)?;
    let r = tape.softplus(neg)?;
    let r = tape.mean(r)?;
    let f = tape.softplus(fake)?;
    let f = tape.mean(f)?;
    tape.add(r, f)
}

/// Non-saturating generator loss `mean(−log σ(fake))`.
pub fn adv_loss_g<T: Float>(tape: &mut Tape<T>, fake: Var) -> Result<Var> {
    let neg = tape.mul_scalar(fake, -1.0)?;
    let l = tape.softplus(neg)?;
    tape.mean(l)
}

/// `Σ_j mean|Φ_j(y) − Φ_j(ŷ)|` over the tap layers; the mean supplies the
/// 1/(C_j·H_j·W_j) normalisation (and averages over the batch). `y` is
/// treated as a constant target.
pub fn perceptual_loss<T: Float>(
    tape: &mut Tape<T>,
    net: &FeatureNet<T>,
    vars: &Bindings,
    y: Var,
    y_hat: Var,
    taps: &[usize],
) -> Result<Var> {
    same_shape(tape, y, y_hat, "perceptual loss inputs")?;
    net.check_taps(taps)?;
    let y = tape.detach(y);
    let fy = net.features(tape, vars, y, taps)?;
    let fh = net.features(tape, vars, y_hat, taps)?;
    let mut total: Option<Var> = None;
    for (a, b) in fy.into_iter().zip(fh) {
        let d = tape.sub(a, b)?;
        let term = tape.reduce(d, ReduceKind::AbsMean)?;
        total = Some(match total {
            None => term,
            Some(t) => tape.add(t, term)?,
        });
    }
    Ok(total.expect("taps are non-empty"))
}

/// Mean absolute error over all elements.
pub fn l1_loss<T: Float>(tape: &mut Tape<T>, y: Var, y_hat: Var) -> Result<Var> {
    same_shape(tape, y, y_hat, "l1 loss inputs")?;
    let d = tape.sub(y, y_hat)?;
    tape.reduce(d, ReduceKind::AbsMean)
}

/// `adv + λ1·per + λ2·l1`.
pub fn total_g_loss<T: Float>(tape: &mut Tape<T>, adv: Var, per: Var, l1: Var, w: LossWeights) -> Result<Var> {
    w.validate()?;
    let p = tape.mul_scalar(per, w.lambda1)?;
    let l = tape.mul_scalar(l1, w.lambda2)?;
    let s = tape.add(adv, p)?;
    tape.add(s, l)
}
