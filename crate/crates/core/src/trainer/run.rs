use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{init_params, stack_batch, train_step, Nets, RunLog, StepRecord, TrainConfig};
use crate::error::{Error, Result};
use crate::pipeline::{ingest_dataset, Checkpoint, Dataset};

pub const FINAL_CHECKPOINT: &str = "final.mlag";
pub const RUNLOG_FILE: &str = "runlog.csv";

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub nets: Nets,
    pub log: RunLog,
    /// Completed steps, including those before a resume.
    pub steps: u64,
    pub final_checkpoint: PathBuf,
}

pub fn checkpoint_name(step: u64) -> String {
    format!("step_{step:06}.mlag")
}

/// Sample order and flip flags of one epoch; a pure function of
/// (seed, epoch), which is what makes resuming exact.
pub fn epoch_plan(seed: u64, epoch: u64, n: usize, augment: bool) -> Vec<(usize, bool)> {
    let mixed = seed ^ (epoch.wrapping_add(1)).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
        .into_iter()
        .map(|i| (i, augment && rng.random_bool(0.5)))
        .collect()
}

/// Loads the configured pairs and trains on them.
pub fn train_loop(cfg: &TrainConfig, resume: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let input = cfg
        .input_dir
        .as_deref()
        .ok_or_else(|| Error::Config("training needs input_dir".into()))?;
    let reference = cfg
        .reference_dir
        .as_deref()
        .ok_or_else(|| Error::Config("training needs reference_dir".into()))?;
    let ds = ingest_dataset(input, Some(reference), cfg.image_size, cfg.augment)?;
    for w in &ds.warnings {
        log::warn!("{w}");
    }
    train_on_dataset(cfg, &ds, resume)
}

fn same_architecture(a: &TrainConfig, b: &TrainConfig) -> bool {
    a.image_size == b.image_size
        && a.generator_config() == b.generator_config()
        && a.discriminator_config() == b.discriminator_config()
}

/// Trains on an already ingested dataset, writing checkpoints and the run
/// log into `cfg.output_dir`.
pub fn train_on_dataset(cfg: &TrainConfig, ds: &Dataset, resume: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Data("dataset is empty".into()));
    }
    let mut pairs = Vec::with_capacity(ds.len());
    for s in &ds.samples {
        let y =
            s.y.as_ref()
                .ok_or_else(|| Error::Data(format!("sample {} has no reference image", s.id)))?;
        if s.x.shape() != [3, cfg.image_size, cfg.image_size] || y.shape() != s.x.shape() {
            return Err(crate::error::shape_err!(
                "sample {} is {:?}, training expects [3, {s}, {s}]",
                s.id,
                s.x.shape(),
                s = cfg.image_size
            ));
        }
        pairs.push((&s.x, y));
    }
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let log_path = out.join(RUNLOG_FILE);

    let (mut nets, start, mut log) = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let (nets, saved, step) = Nets::from_checkpoint(&ck)?;
            if !same_architecture(&saved, cfg) {
                return Err(Error::Config(format!(
                    "checkpoint {} was trained with a different architecture",
                    path.display()
                )));
            }
            let mut log = if log_path.exists() {
                RunLog::load(&log_path)?
            } else {
                RunLog::new()
            };
            log.truncate_to(step);
            (nets, step, log)
        }
        None => (init_params(cfg, cfg.seed)?, 0, RunLog::new()),
    };
    let snapshot = serde_json::to_string_pretty(&cfg.to_json()).expect("serialisable");
    let cfg_path = out.join("config.json");
    std::fs::write(&cfg_path, snapshot).map_err(|e| Error::io(&cfg_path, e))?;

    let per_epoch = pairs.len().div_ceil(cfg.batch_size) as u64;
    let mut total = per_epoch * cfg.epochs as u64;
    if let Some(m) = cfg.max_steps {
        total = total.min(m);
    }
    let weights = cfg.loss_weights();
    let clock = Instant::now();
    let mut step = start;
    'epochs: for epoch in start / per_epoch..cfg.epochs as u64 {
        let plan = epoch_plan(cfg.seed, epoch, pairs.len(), cfg.augment);
        for (b, chunk) in plan.chunks(cfg.batch_size).enumerate() {
            let global = epoch * per_epoch + b as u64 + 1;
            if global <= start {
                continue;
            }
            if global > total {
                break 'epochs;
            }
            let xs: Vec<_> = chunk.iter().map(|&(i, f)| (pairs[i].0, f)).collect();
            let ys: Vec<_> = chunk.iter().map(|&(i, f)| (pairs[i].1, f)).collect();
            let x = stack_batch(&xs)?;
            let y = stack_batch(&ys)?;
            let losses = match train_step(&mut nets, &x, &y, weights, &cfg.perceptual_taps, global) {
                Ok(l) => l,
                Err(e) => {
                    if let Error::Divergence { step, detail } = &e {
                        let path = out.join("divergence.json");
                        let rec = json!({"step": step, "detail": detail, "last_logged_step": log.last_step()});
                        let _ = std::fs::write(&path, rec.to_string());
                        let _ = log.save(&log_path);
                    }
                    return Err(e);
                }
            };
            step = global;
            log.push(StepRecord {
                step,
                losses,
                seconds: clock.elapsed().as_secs_f64(),
            })?;
            log::info!(
                "step {step}/{total} d={:.4} g={:.4} (adv {:.4} per {:.4} l1 {:.4})",
                losses.d_loss,
                losses.g_total,
                losses.g_adv,
                losses.g_per,
                losses.g_l1
            );
            if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
                nets.to_checkpoint(cfg, step)?.save(out.join(checkpoint_name(step)))?;
                log.save(&log_path)?;
            }
        }
    }
    let final_checkpoint = out.join(FINAL_CHECKPOINT);
    nets.to_checkpoint(cfg, step)?.save(&final_checkpoint)?;
    log.save(&log_path)?;
    Ok(TrainOutcome {
        nets,
        log,
        steps: step,
        final_checkpoint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_is_a_permutation_and_reproducible() {
        let a = epoch_plan(7, 3, 10, true);
        assert_eq!(a, epoch_plan(7, 3, 10, true));
        assert_ne!(a, epoch_plan(7, 4, 10, true));
        let mut idx: Vec<_> = a.iter().map(|p| p.0).collect();
        idx.sort();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
        assert!(epoch_plan(7, 3, 10, false).iter().all(|p| !p.1));
    }
}
