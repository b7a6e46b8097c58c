//! Conditional patch discriminator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{add_bn, add_conv, check_finite, Bindings, Graph, ParamStore};
use crate::diffcore::{ConvSpec, Float, Tape, Var};
use crate::error::{shape_err, Error, Result};

pub const PREFIX: &str = "discriminator";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    /// Output channels of the four 3×3 stride-2 layers.
    pub widths: Vec<usize>,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            widths: vec![32, 64, 128, 256],
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.len() != 4 || self.widths.contains(&0) {
            return Err(Error::Config(format!(
                "discriminator needs 4 positive widths, got {:?}",
                self.widths
            )));
        }
        Ok(())
    }
}

/// Scores (condition, candidate) pairs with an n×n grid of raw logits.
#[derive(Debug, Clone)]
pub struct Discriminator<T: Float = f32> {
    pub config: DiscriminatorConfig,
    pub params: ParamStore<T>,
}

impl<T: Float> Discriminator<T> {
    pub fn new<R: Rng + ?Sized>(config: DiscriminatorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut p = ParamStore::new();
        let mut cin = 6;
        for (i, &c) in config.widths.iter().enumerate() {
            let name = format!("{PREFIX}.l{}", i + 1);
            if i == 0 {
                add_conv(&mut p, rng, &name, [c, cin, 3, 3], Some(c))?;
            } else {
                add_conv(&mut p, rng, &name, [c, cin, 3, 3], None)?;
                add_bn(&mut p, &format!("{name}.bn"), c)?;
            }
            cin = c;
        }
        add_conv(&mut p, rng, &format!("{PREFIX}.l5"), [1, cin, 4, 4], Some(1))?;
        Ok(Discriminator { config, params: p })
    }

    /// Side of the logit grid for S×S inputs.
    pub fn grid_size(s: usize) -> Result<usize> {
        let mut n = s;
        for _ in 0..4 {
            n = ConvSpec::new(2, 1).conv_out(n, 3)?;
        }
        ConvSpec::new(1, 0).conv_out(n, 4)
    }

    pub fn forward(&mut self, tape: &mut Tape<T>, vars: &Bindings, x: Var, y: Var, training: bool) -> Result<Var> {
        if tape.shape(x) != tape.shape(y) {
            return Err(shape_err!(
                "discriminator pair mismatch: {:?} vs {:?}",
                tape.shape(x),
                tape.shape(y)
            ));
        }
        let [_, c, _, _] = tape.value(x).dims4()?;
        if c != 3 {
            return Err(shape_err!("discriminator expects 3-channel images, got {c}"));
        }
        check_finite(tape, x, "discriminator condition")?;
        check_finite(tape, y, "discriminator candidate")?;
        let mut g = Graph {
            tape,
            vars,
            store: &mut self.params,
            training,
        };
        let mut h = g.tape.concat(&[x, y], 1)?;
        for i in 1..=4 {
            let name = format!("{PREFIX}.l{i}");
            h = g.conv(h, &name, ConvSpec::new(2, 1))?;
            if i > 1 {
                h = g.batch_norm(h, &format!("{name}.bn"))?;
            }
            h = g.tape.relu(h)?;
        }
        g.conv(h, &format!("{PREFIX}.l5"), ConvSpec::new(1, 0))
    }
}
