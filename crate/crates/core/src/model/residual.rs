//! Identity-skip residual block: act(F + BN(conv(act(BN(conv(F)))))).

use rand::Rng;

use super::{add_bn, add_conv, Graph, ParamStore};
use crate::diffcore::{ConvSpec, Float, Var};
use crate::error::{shape_err, Result};

pub fn init_residual<T: Float, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    rng: &mut R,
    prefix: &str,
    c: usize,
) -> Result<()> {
    for i in 1..=2 {
        add_conv(store, rng, &format!("{prefix}.conv{i}"), [c, c, 3, 3], None)?;
        add_bn(store, &format!("{prefix}.bn{i}"), c)?;
    }
    Ok(())
}

/// Shape-preserving residual block with 3×3 convolutions and leaky ReLU.
pub fn residual_block<T: Float>(g: &mut Graph<'_, T>, f: Var, prefix: &str, slope: f64) -> Result<Var> {
    let c = g.tape.value(f).dims4()?[1];
    if let Some(w) = g.store.param(&format!("{prefix}.conv1.weight")) {
        if w.shape()[1] != c {
            return Err(shape_err!(
                "residual block {prefix} built for {} channels, input has {c}",
                w.shape()[1]
            ));
        }
    }
    let spec = ConvSpec::new(1, 1);
    let h = g.conv(f, &format!("{prefix}.conv1"), spec)?;
    let h = g.batch_norm(h, &format!("{prefix}.bn1"))?;
    let h = g.tape.leaky_relu(h, slope)?;
    let h = g.conv(h, &format!("{prefix}.conv2"), spec)?;
    let h = g.batch_norm(h, &format!("{prefix}.bn2"))?;
    let s = g.tape.add(f, h)?;
    g.tape.leaky_relu(s, slope)
}
