//! Frozen convolutional feature extractor for the perceptual loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{normal_tensor, Bindings, ParamStore};
use crate::diffcore::{ConvSpec, Float, Tape, Tensor, Var};
use crate::error::{shape_err, Error, Result};

pub const PREFIX: &str = "features";
/// Seed of the default extractor weights; deliberately independent of the
/// run seed so every run measures the same feature space.
pub const DEFAULT_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNetConfig {
    /// Output channels of each 3×3 conv + ReLU layer.
    pub widths: Vec<usize>,
    pub strides: Vec<usize>,
    pub seed: u64,
}

impl Default for FeatureNetConfig {
    fn default() -> Self {
        FeatureNetConfig {
            widths: vec![16, 16, 32, 32, 64],
            strides: vec![1, 1, 2, 1, 2],
            seed: DEFAULT_SEED,
        }
    }
}

impl FeatureNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.len() != self.strides.len() {
            return Err(Error::Config(format!(
                "feature extractor needs matching non-empty widths and strides, got {:?} / {:?}",
                self.widths, self.strides
            )));
        }
        if self.widths.contains(&0) || self.strides.contains(&0) {
            return Err(Error::Config(
                "feature extractor widths and strides must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A stack of 3×3 conv + ReLU layers whose weights never train.
#[derive(Debug, Clone)]
pub struct FeatureNet<T: Float = f32> {
    pub config: FeatureNetConfig,
    pub params: ParamStore<T>,
}

impl<T: Float> FeatureNet<T> {
    /// He-normal weights drawn from `config.seed`, zero biases.
    pub fn new(config: FeatureNetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut p = ParamStore::new();
        let mut cin = 3;
        for (i, &c) in config.widths.iter().enumerate() {
            let std = (2.0 / (cin * 9) as f64).sqrt();
            p.insert_param(
                format!("{PREFIX}.conv{}.weight", i + 1),
                normal_tensor(&mut rng, vec![c, cin, 3, 3], std),
            )?;
            p.insert_param(format!("{PREFIX}.conv{}.bias", i + 1), Tensor::zeros(vec![c]))?;
            cin = c;
        }
        Ok(FeatureNet { config, params: p })
    }

    /// Replaces the weights, e.g. with pretrained ones from a file.
    pub fn with_params(config: FeatureNetConfig, params: ParamStore<T>) -> Result<Self> {
        let mut net = Self::new(config)?;
        net.params.load_from(|name| params.get(name).cloned())?;
        Ok(net)
    }

    pub fn layers(&self) -> usize {
        self.config.widths.len()
    }

    /// Always binds as constants: nothing upstream can train these weights.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bindings {
        self.params.bind(tape, false)
    }

    pub fn check_taps(&self, taps: &[usize]) -> Result<()> {
        if taps.is_empty() {
            return Err(Error::Config("at least one perceptual tap layer is required".into()));
        }
        match taps.iter().find(|&&t| t >= self.layers()) {
            Some(t) => Err(Error::Config(format!(
                "tap layer {t} out of range for a {}-layer extractor",
                self.layers()
            ))),
            None => Ok(()),
        }
    }

    /// Activations after each listed (0-based) layer, in `taps` order.
    pub fn features(&self, tape: &mut Tape<T>, vars: &Bindings, x: Var, taps: &[usize]) -> Result<Vec<Var>> {
        self.check_taps(taps)?;
        if tape.value(x).dims4()?[1] != 3 {
            return Err(shape_err!(
                "feature extractor expects 3 channels, got {:?}",
                tape.shape(x)
            ));
        }
        let deepest = *taps.iter().max().expect("non-empty");
        let mut outs = vec![None; deepest + 1];
        let mut h = x;
        for (i, &s) in self.config.strides.iter().enumerate().take(deepest + 1) {
            let w = vars.get(&format!("{PREFIX}.conv{}.weight", i + 1))?;
            let b = vars.get(&format!("{PREFIX}.conv{}.bias", i + 1))?;
            h = tape.conv2d(h, w, Some(b), ConvSpec::new(s, 1))?;
            h = tape.relu(h)?;
            outs[i] = Some(h);
        }
        Ok(taps.iter().map(|&t| outs[t].expect("computed")).collect())
    }
}
