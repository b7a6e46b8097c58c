use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DiscriminatorConfig, FeatureNetConfig, GeneratorConfig, HeadUpsample, ScaConfig, LEAKY_SLOPE};
use crate::objective::LossWeights;

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "MULA_SEED";

/// Every training hyperparameter; persisted in checkpoints. Missing keys
/// take the defaults below, unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Square training resolution; must be divisible by 32.
    pub image_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many steps in total, if set.
    pub max_steps: Option<u64>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub seed: u64,
    /// Encoder stages (2..=5) followed by spatio-channel attention.
    pub sca_stages: Vec<usize>,
    /// Generator encoder widths, down1..down5.
    pub channel_widths: Vec<usize>,
    pub disc_widths: Vec<usize>,
    pub ca_reduction: usize,
    pub sa_kernel: usize,
    pub head_upsample: HeadUpsample,
    /// 0-based feature-extractor layers compared by the perceptual loss.
    pub perceptual_taps: Vec<usize>,
    /// Optional checkpoint-format file with `features.*` weights.
    pub feature_weights: Option<PathBuf>,
    /// Random horizontal flips, applied identically to input and reference.
    pub augment: bool,
    /// Save a checkpoint every this many steps (0 = only at the end).
    pub checkpoint_every: u64,
    pub input_dir: Option<PathBuf>,
    pub reference_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let g = GeneratorConfig::default();
        let w = LossWeights::default();
        TrainConfig {
            image_size: 64,
            batch_size: 2,
            epochs: 1,
            max_steps: None,
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            lambda1: w.lambda1,
            lambda2: w.lambda2,
            seed: 0,
            sca_stages: g.sca_stages,
            channel_widths: g.widths,
            disc_widths: DiscriminatorConfig::default().widths,
            ca_reduction: g.sca.reduction,
            sa_kernel: g.sca.kernel,
            head_upsample: g.head_upsample,
            perceptual_taps: vec![3],
            feature_weights: None,
            augment: true,
            checkpoint_every: 0,
            input_dir: None,
            reference_dir: None,
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    /// Reads a JSON config; relative data paths resolve against the file's
    /// directory, and [`SEED_ENV`] overrides the seed.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.input_dir, &mut cfg.reference_dir, &mut cfg.feature_weights]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.apply_env()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config is serialisable")
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            widths: self.channel_widths.clone(),
            sca_stages: self.sca_stages.clone(),
            sca: ScaConfig {
                reduction: self.ca_reduction,
                kernel: self.sa_kernel,
            },
            leaky_slope: LEAKY_SLOPE,
            head_upsample: self.head_upsample,
        }
    }

    pub fn discriminator_config(&self) -> DiscriminatorConfig {
        DiscriminatorConfig {
            widths: self.disc_widths.clone(),
        }
    }

    pub fn feature_config(&self) -> FeatureNetConfig {
        FeatureNetConfig::default()
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.image_size == 0 || !self.image_size.is_multiple_of(32) {
            return bad(format!(
                "image_size {} must be a positive multiple of 32",
                self.image_size
            ));
        }
        if self.image_size < 64 {
            return bad(format!(
                "image_size {} is too small for the discriminator (minimum 64)",
                self.image_size
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (n, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{n} must lie in [0, 1), got {b}"));
            }
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        self.loss_weights().validate()?;
        self.generator_config().validate()?;
        self.discriminator_config().validate()?;
        if self.perceptual_taps.is_empty() {
            return bad("perceptual_taps must not be empty".into());
        }
        Ok(())
    }
}
