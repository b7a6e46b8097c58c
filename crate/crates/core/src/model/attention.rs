//! Spatio-channel attention: a channel gate followed by a spatial gate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{add_conv, Graph, ParamStore};
use crate::diffcore::{ConvSpec, Float, PoolKind, Var};
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaConfig {
    /// Channel-attention bottleneck ratio r (hidden width max(C/r, 1)).
    pub reduction: usize,
    /// Odd spatial-attention kernel size.
    pub kernel: usize,
}

impl Default for ScaConfig {
    fn default() -> Self {
        ScaConfig {
            reduction: 8,
            kernel: 7,
        }
    }
}

impl ScaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reduction == 0 {
            return Err(Error::Config("attention reduction ratio must be at least 1".into()));
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "spatial-attention kernel must be odd, got {}",
                self.kernel
            )));
        }
        Ok(())
    }

    fn hidden(&self, c: usize) -> usize {
        (c / self.reduction).max(1)
    }
}

/// Registers `{prefix}.ca1`, `{prefix}.ca2` and `{prefix}.sa` for `c` channels.
pub fn init_sca<T: Float, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    rng: &mut R,
    prefix: &str,
    c: usize,
    cfg: &ScaConfig,
) -> Result<()> {
    cfg.validate()?;
    let hid = cfg.hidden(c);
    add_conv(store, rng, &format!("{prefix}.ca1"), [hid, c, 1, 1], Some(hid))?;
    add_conv(store, rng, &format!("{prefix}.ca2"), [c, hid, 1, 1], Some(c))?;
    let k = cfg.kernel;
    add_conv(store, rng, &format!("{prefix}.sa"), [1, 2, k, k], Some(1))?;
    Ok(())
}

/// Channel gate in (0, 1), shape N×C×1×1.
pub fn channel_gate<T: Float>(g: &mut Graph<'_, T>, f: Var, prefix: &str) -> Result<Var> {
    let c = g.tape.value(f).dims4()?[1];
    let expect = g
        .store
        .param(&format!("{prefix}.ca2.weight"))
        .map(|w| w.shape()[0])
        .ok_or_else(|| Error::Contract(format!("no attention parameters under {prefix}")))?;
    if expect != c {
        return Err(shape_err!(
            "attention {prefix} built for {expect} channels, input has {c}"
        ));
    }
    let pooled = g.tape.pool(f, PoolKind::GlobalAvgSpatial)?;
    let h = g.conv(pooled, &format!("{prefix}.ca1"), ConvSpec::new(1, 0))?;
    let h = g.tape.relu(h)?;
    let h = g.conv(h, &format!("{prefix}.ca2"), ConvSpec::new(1, 0))?;
    g.tape.sigmoid(h)
}

/// Spatial gate in (0, 1), shape N×1×H×W. The descriptor is padded by
/// edge replication, so a spatially constant input gets a constant gate.
pub fn spatial_gate<T: Float>(g: &mut Graph<'_, T>, f: Var, prefix: &str) -> Result<Var> {
    let k = g
        .store
        .param(&format!("{prefix}.sa.weight"))
        .map(|w| w.shape()[2])
        .ok_or_else(|| Error::Contract(format!("no attention parameters under {prefix}")))?;
    let mean = g.tape.pool(f, PoolKind::ChannelMean)?;
    let max = g.tape.pool(f, PoolKind::ChannelMax)?;
    let desc = g.tape.concat(&[mean, max], 1)?;
    let r = k / 2;
    let desc = g.tape.pad_replicate(desc, [r, r, r, r])?;
    let s = g.conv(desc, &format!("{prefix}.sa"), ConvSpec::new(1, 0))?;
    g.tape.sigmoid(s)
}

pub fn channel_attention<T: Float>(g: &mut Graph<'_, T>, f: Var, prefix: &str) -> Result<Var> {
    let gate = channel_gate(g, f, prefix)?;
    g.tape.mul(f, gate)
}

pub fn spatial_attention<T: Float>(g: &mut Graph<'_, T>, f: Var, prefix: &str) -> Result<Var> {
    let gate = spatial_gate(g, f, prefix)?;
    g.tape.mul(f, gate)
}

/// Channel attention, then spatial attention on its output.
pub fn sca<T: Float>(g: &mut Graph<'_, T>, f: Var, prefix: &str) -> Result<Var> {
    let c = channel_attention(g, f, prefix)?;
    spatial_attention(g, c, prefix)
}
