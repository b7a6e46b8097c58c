use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::{Adam, TrainConfig};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::model::{Discriminator, FeatureNet, Generator, ParamStore};
use crate::pipeline::Checkpoint;

/// Checkpoint metadata tag.
pub const CHECKPOINT_KIND: &str = "mula_training_state";

/// The three networks and both optimisers of one training run.
#[derive(Debug, Clone)]
pub struct Nets {
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    pub features: FeatureNet<f32>,
    pub opt_g: Adam,
    pub opt_d: Adam,
}

/// Deterministic initial state for `cfg`; the same seed gives bitwise
/// identical weights.
pub fn init_params(cfg: &TrainConfig, seed: u64) -> Result<Nets> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let generator = Generator::new(cfg.generator_config(), &mut rng)?;
    let discriminator = Discriminator::new(cfg.discriminator_config(), &mut rng)?;
    let features = match &cfg.feature_weights {
        None => FeatureNet::new(cfg.feature_config())?,
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let mut store = ParamStore::new();
            for (name, t) in &ck.tensors {
                if name.starts_with("features.") {
                    store.insert_param(name.clone(), t.to::<f32>())?;
                }
            }
            FeatureNet::with_params(cfg.feature_config(), store)?
        }
    };
    features.check_taps(&cfg.perceptual_taps)?;
    let adam = |p: &ParamStore<f32>| Adam::new(p, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
    Ok(Nets {
        opt_g: adam(&generator.params),
        opt_d: adam(&discriminator.params),
        generator,
        discriminator,
        features,
    })
}

impl Nets {
    /// Full training state after `step` completed optimisation steps.
    pub fn to_checkpoint(&self, cfg: &TrainConfig, step: u64) -> Result<Checkpoint> {
        let meta = json!({
            "kind": CHECKPOINT_KIND,
            "step": step,
            "config": cfg.to_json(),
            "optim": {
                "generator": {"step": self.opt_g.steps()},
                "discriminator": {"step": self.opt_d.steps()},
            },
        });
        let mut ck = Checkpoint::new(meta);
        ck.insert_store(&self.generator.params)?;
        ck.insert_store(&self.discriminator.params)?;
        ck.insert_store(&self.features.params)?;
        self.opt_g.save_into(&mut ck, &self.generator.params)?;
        self.opt_d.save_into(&mut ck, &self.discriminator.params)?;
        Ok(ck)
    }

    /// Rebuilds the state saved by [`Nets::to_checkpoint`]; returns it with
    /// the completed step count. Architecture comes from the checkpoint's
    /// own config.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, TrainConfig, u64)> {
        let cfg = checkpoint_config(ck)?;
        let step = meta_u64(&ck.metadata, &["step"])?;
        let mut nets = init_params(
            &TrainConfig {
                feature_weights: None,
                ..cfg.clone()
            },
            cfg.seed,
        )?;
        ck.restore_store(&mut nets.generator.params)?;
        ck.restore_store(&mut nets.discriminator.params)?;
        ck.restore_store(&mut nets.features.params)?;
        let sg = meta_u64(&ck.metadata, &["optim", "generator", "step"])?;
        let sd = meta_u64(&ck.metadata, &["optim", "discriminator", "step"])?;
        nets.opt_g.load_from(ck, sg)?;
        nets.opt_d.load_from(ck, sd)?;
        Ok((nets, cfg, step))
    }
}

fn meta_u64(meta: &Value, path: &[&str]) -> Result<u64> {
    let mut v = meta;
    for k in path {
        v = v
            .get(k)
            .ok_or_else(|| Error::Data(format!("checkpoint metadata lacks {}", path.join("."))))?;
    }
    v.as_u64()
        .ok_or_else(|| Error::Data(format!("checkpoint metadata {} is not an integer", path.join("."))))
}

/// The training config recorded in a checkpoint.
pub fn checkpoint_config(ck: &Checkpoint) -> Result<TrainConfig> {
    if ck.metadata.get("kind").and_then(Value::as_str) != Some(CHECKPOINT_KIND) {
        return Err(Error::Data("not a training checkpoint".into()));
    }
    let c = ck
        .metadata
        .get("config")
        .ok_or_else(|| Error::Data("checkpoint metadata lacks config".into()))?;
    let cfg: TrainConfig =
        serde_json::from_value(c.clone()).map_err(|e| Error::Data(format!("checkpoint config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Generator weights (and its training resolution) from a checkpoint file.
pub fn load_generator(path: &Path) -> Result<(Generator<f32>, usize)> {
    let ck = Checkpoint::load(path)?;
    let cfg = checkpoint_config(&ck)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut g = Generator::new(cfg.generator_config(), &mut rng)?;
    ck.restore_store(&mut g.params)?;
    Ok((g, cfg.image_size))
}

/// Stacks [3,S,S] images into one [N,3,S,S] batch, mirroring the flagged
/// ones left to right.
pub fn stack_batch(images: &[(&Tensor<f32>, bool)]) -> Result<Tensor<f32>> {
    let first = images
        .first()
        .ok_or_else(|| Error::Contract("empty batch".into()))?
        .0
        .shape()
        .to_vec();
    if first.len() != 3 {
        return Err(crate::error::shape_err!("batch images must be [3,H,W], got {first:?}"));
    }
    let (h, w) = (first[1], first[2]);
    let mut data = Vec::with_capacity(images.len() * first.iter().product::<usize>());
    for (t, flip) in images {
        if t.shape() != first.as_slice() {
            return Err(crate::error::shape_err!(
                "batch images differ in shape: {:?} vs {first:?}",
                t.shape()
            ));
        }
        let d = t.data();
        if *flip {
            for row in d.chunks(w) {
                data.extend(row.iter().rev());
            }
        } else {
            data.extend_from_slice(d);
        }
    }
    Tensor::new(vec![images.len(), 3, h, w], data)
}
