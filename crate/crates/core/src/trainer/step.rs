use serde::{Deserialize, Serialize};

use super::Nets;
use crate::diffcore::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::objective::{adv_loss_d, adv_loss_g, l1_loss, perceptual_loss, total_g_loss, LossWeights};

/// Scalar losses of one optimisation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub d_loss: f64,
    pub g_adv: f64,
    pub g_per: f64,
    pub g_l1: f64,
    pub g_total: f64,
}

fn finite_or_diverge(tape: &Tape<f32>, v: crate::Var, what: &str, step: u64) -> Result<f64> {
    let x = tape.value(v).item()? as f64;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Divergence {
            step,
            detail: format!("{what} became {x}"),
        })
    }
}

/// One adversarial update on a batch: the discriminator first, against a
/// detached fake, then the generator against the updated discriminator.
/// Neither update leaks into the other network.
pub fn train_step(
    nets: &mut Nets,
    x: &Tensor<f32>,
    y: &Tensor<f32>,
    weights: LossWeights,
    taps: &[usize],
    step: u64,
) -> Result<StepLosses> {
    if x.shape() != y.shape() {
        return Err(crate::error::shape_err!(
            "input {:?} and reference {:?} differ",
            x.shape(),
            y.shape()
        ));
    }
    let mut tape = Tape::new();
    let gv = nets.generator.params.bind(&mut tape, true);
    let xv = tape.constant(x.detached());
    let yv = tape.constant(y.detached());
    let fake = nets.generator.forward(&mut tape, &gv, xv, true)?;
    if tape.value(fake).data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            step,
            detail: "generator output became non-finite".into(),
        });
    }

    let dv = nets.discriminator.params.bind(&mut tape, true);
    let real_logits = nets.discriminator.forward(&mut tape, &dv, xv, yv, true)?;
    let fake_d = tape.detach(fake);
    let fake_logits = nets.discriminator.forward(&mut tape, &dv, xv, fake_d, true)?;
    let d_loss = adv_loss_d(&mut tape, real_logits, fake_logits)?;
    let d_val = finite_or_diverge(&tape, d_loss, "discriminator loss", step)?;
    tape.backward(d_loss)?;
    let grads_d = dv.collect_grads(&tape);
    nets.opt_d.step(&mut nets.discriminator.params, &grads_d)?;

    let dc = nets.discriminator.params.bind(&mut tape, false);
    let fv = nets.features.bind(&mut tape);
    let g_logits = nets.discriminator.forward(&mut tape, &dc, xv, fake, true)?;
    let adv = adv_loss_g(&mut tape, g_logits)?;
    let per = perceptual_loss(&mut tape, &nets.features, &fv, yv, fake, taps)?;
    let l1 = l1_loss(&mut tape, yv, fake)?;
    let total = total_g_loss(&mut tape, adv, per, l1, weights)?;
    let losses = StepLosses {
        d_loss: d_val,
        g_adv: finite_or_diverge(&tape, adv, "adversarial loss", step)?,
        g_per: finite_or_diverge(&tape, per, "perceptual loss", step)?,
        g_l1: finite_or_diverge(&tape, l1, "L1 loss", step)?,
        g_total: finite_or_diverge(&tape, total, "generator loss", step)?,
    };
    tape.backward(total)?;
    let grads_g = gv.collect_grads(&tape);
    nets.opt_g.step(&mut nets.generator.params, &grads_g)?;
    Ok(losses)
}
