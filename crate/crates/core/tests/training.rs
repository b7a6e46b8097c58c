mod common;

use common::{pair_dirs, small_config};
use mulagan::objective::{adv_loss_g, l1_loss, perceptual_loss, total_g_loss};
use mulagan::pipeline::{ingest_dataset, Checkpoint, Dataset};
use mulagan::trainer::{
    init_params, stack_batch, train_on_dataset, train_step, Nets, RunLog, FINAL_CHECKPOINT, RUNLOG_FILE, RUNLOG_HEADER,
};
use mulagan::{Error, ErrorKind, ParamStore, Tape, Tensor, TrainConfig};

fn four_pairs(size: usize) -> Dataset {
    let (input, reference) = pair_dirs();
    let mut ds = ingest_dataset(&input, Some(&reference), size, false).unwrap();
    ds.samples.truncate(4);
    ds
}

fn batch(ds: &Dataset, idx: &[usize]) -> (Tensor<f32>, Tensor<f32>) {
    let xs: Vec<_> = idx.iter().map(|&i| (&ds.samples[i].x, false)).collect();
    let ys: Vec<_> = idx
        .iter()
        .map(|&i| (ds.samples[i].y.as_ref().unwrap(), false))
        .collect();
    (stack_batch(&xs).unwrap(), stack_batch(&ys).unwrap())
}

fn same_params(a: &ParamStore<f32>, b: &ParamStore<f32>) -> bool {
    a.params()
        .zip(b.params())
        .all(|((na, ta), (nb, tb))| na == nb && ta == tb)
}

fn step_once(
    cfg: &TrainConfig,
    nets: &mut Nets,
    ds: &Dataset,
    step: u64,
) -> mulagan::Result<mulagan::trainer::StepLosses> {
    let (x, y) = batch(ds, &[0, 1]);
    train_step(nets, &x, &y, cfg.loss_weights(), &cfg.perceptual_taps, step)
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..small_config("unused".into())
    };
    let ds = four_pairs(64);
    // Validation rejects lr = 0, so build with a valid rate and zero it afterwards.
    let mut nets = init_params(&small_config("unused".into()), 3).unwrap();
    nets.opt_g.lr = 0.0;
    nets.opt_d.lr = 0.0;
    let before = nets.clone();
    let l = step_once(&cfg, &mut nets, &ds, 1).unwrap();
    for v in [l.d_loss, l.g_adv, l.g_per, l.g_l1, l.g_total] {
        assert!(v.is_finite());
    }
    assert!(same_params(&nets.generator.params, &before.generator.params));
    assert!(same_params(&nets.discriminator.params, &before.discriminator.params));
}

#[test]
fn initial_discriminator_loss_is_near_two_ln_two() {
    let cfg = small_config("unused".into());
    let ds = four_pairs(64);
    for seed in 0..4 {
        let mut nets = init_params(&cfg, seed).unwrap();
        let d = step_once(&cfg, &mut nets, &ds, 1).unwrap().d_loss;
        assert!((d - 2.0 * std::f64::consts::LN_2).abs() <= 0.7, "seed {seed}: {d}");
    }
}

#[test]
fn each_update_touches_only_its_own_network() {
    let cfg = small_config("unused".into());
    let ds = four_pairs(64);
    let fresh = init_params(&cfg, 5).unwrap();

    // Freezing G's optimiser exposes what the D update alone does.
    let mut nets = fresh.clone();
    nets.opt_g.lr = 0.0;
    step_once(&cfg, &mut nets, &ds, 1).unwrap();
    assert!(same_params(&nets.generator.params, &fresh.generator.params));
    assert!(!same_params(&nets.discriminator.params, &fresh.discriminator.params));

    let mut nets = fresh.clone();
    nets.opt_d.lr = 0.0;
    step_once(&cfg, &mut nets, &ds, 1).unwrap();
    assert!(same_params(&nets.discriminator.params, &fresh.discriminator.params));
    assert!(!same_params(&nets.generator.params, &fresh.generator.params));

    let mut nets = fresh.clone();
    for s in 1..=3 {
        step_once(&cfg, &mut nets, &ds, s).unwrap();
    }
    assert!(nets.features.params.tensors().eq(fresh.features.params.tensors()));
}

/// The generator's first Adam step moves every weight by −lr·sign(∂L_G/∂θ),
/// where the gradient is taken against the already-updated discriminator
/// and contains nothing from the discriminator's loss.
#[test]
fn generator_step_follows_its_own_gradient() {
    let cfg = small_config("unused".into());
    let ds = four_pairs(64);
    let before = init_params(&cfg, 6).unwrap();
    let mut after = before.clone();
    step_once(&cfg, &mut after, &ds, 1).unwrap();

    let (x, y) = batch(&ds, &[0, 1]);
    let mut g = before.generator.clone();
    let mut d = before.discriminator.clone();
    d.params = after.discriminator.params.clone();
    let mut tape = Tape::new();
    let gv = g.params.bind(&mut tape, true);
    let dc = d.params.bind(&mut tape, false);
    let fv = before.features.bind(&mut tape);
    let (xv, yv) = (tape.constant(x), tape.constant(y));
    let fake = g.forward(&mut tape, &gv, xv, true).unwrap();
    let logits = d.forward(&mut tape, &dc, xv, fake, true).unwrap();
    let adv = adv_loss_g(&mut tape, logits).unwrap();
    let per = perceptual_loss(&mut tape, &before.features, &fv, yv, fake, &cfg.perceptual_taps).unwrap();
    let l1 = l1_loss(&mut tape, yv, fake).unwrap();
    let total = total_g_loss(&mut tape, adv, per, l1, cfg.loss_weights()).unwrap();
    tape.backward(total).unwrap();
    let grads = gv.collect_grads(&tape);

    let lr = cfg.learning_rate as f32;
    let mut checked = 0;
    for (name, w0) in before.generator.params.params() {
        let w1 = after.generator.params.param(name).unwrap();
        for ((a, b), gi) in w0.data().iter().zip(w1.data()).zip(&grads[name]) {
            if gi.abs() > 1e-5 {
                let want = -lr * gi.signum();
                assert!(
                    (b - a - want).abs() < 1e-3 * lr + 1e-7,
                    "{name}: moved {} want {want}",
                    b - a
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 1000, "only {checked} weights had clear gradients");
}

fn run_dir(tag: &str) -> tempfile::TempDir {
    tempfile::Builder::new().prefix(tag).tempdir().unwrap()
}

#[test]
fn resumed_run_reproduces_continuous_losses() {
    let ds = Dataset {
        augment: true,
        ..four_pairs(64)
    };
    let (a, b) = (run_dir("cont"), run_dir("resume"));
    let cfg = TrainConfig {
        epochs: 3,
        checkpoint_every: 3,
        seed: 11,
        ..small_config(a.path().into())
    };
    let cont = train_on_dataset(&cfg, &ds, None).unwrap();
    assert_eq!(cont.steps, 6);
    let mid = a.path().join("step_000003.mlag");
    assert!(mid.exists());

    let cfg_b = TrainConfig {
        output_dir: b.path().into(),
        ..cfg.clone()
    };
    let resumed = train_on_dataset(&cfg_b, &ds, Some(&mid)).unwrap();
    assert_eq!(resumed.steps, 6);
    let tail: Vec<_> = cont.log.records()[3..].iter().map(|r| (r.step, r.losses)).collect();
    let got: Vec<_> = resumed.log.records().iter().map(|r| (r.step, r.losses)).collect();
    assert_eq!(got, tail);
    let (ca, cb) = (
        Checkpoint::load(&cont.final_checkpoint).unwrap(),
        Checkpoint::load(&resumed.final_checkpoint).unwrap(),
    );
    assert_eq!(ca.tensors, cb.tensors);
}

#[test]
fn zero_epochs_writes_only_the_initial_checkpoint() {
    let dir = run_dir("zero");
    let cfg = TrainConfig {
        epochs: 0,
        checkpoint_every: 1,
        seed: 2,
        ..small_config(dir.path().into())
    };
    let out = train_on_dataset(&cfg, &four_pairs(64), None).unwrap();
    assert_eq!(out.steps, 0);
    assert!(out.log.is_empty());
    let mut files: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".mlag"))
        .collect();
    files.sort();
    assert_eq!(files, [FINAL_CHECKPOINT]);
    let init = init_params(&cfg, 2).unwrap().to_checkpoint(&cfg, 0).unwrap();
    assert_eq!(
        Checkpoint::load(&out.final_checkpoint).unwrap().to_bytes().unwrap(),
        init.to_bytes().unwrap()
    );
    let csv = std::fs::read_to_string(dir.path().join(RUNLOG_FILE)).unwrap();
    assert_eq!(csv.lines().next().unwrap(), RUNLOG_HEADER.join(","));
}

#[test]
fn training_is_deterministic() {
    let ds = Dataset {
        augment: true,
        ..four_pairs(64)
    };
    let dir = run_dir("det");
    let cfg = TrainConfig {
        epochs: 2,
        seed: 8,
        ..small_config(dir.path().into())
    };
    let first = train_on_dataset(&cfg, &ds, None).unwrap();
    let bytes = std::fs::read(&first.final_checkpoint).unwrap();
    let log = RunLog::load(&dir.path().join(RUNLOG_FILE)).unwrap();
    std::fs::remove_dir_all(dir.path()).unwrap();
    let second = train_on_dataset(&cfg, &ds, None).unwrap();
    assert_eq!(second.log, first.log);
    assert_eq!(RunLog::load(&dir.path().join(RUNLOG_FILE)).unwrap(), log);
    assert_eq!(std::fs::read(&second.final_checkpoint).unwrap(), bytes);
    assert_eq!(second.nets.opt_g, first.nets.opt_g);
    assert_eq!(second.nets.opt_d, first.nets.opt_d);

    let other = TrainConfig { seed: 9, ..cfg };
    let third = train_on_dataset(&other, &ds, None).unwrap();
    assert_ne!(third.log, first.log);
}

#[test]
fn non_finite_losses_halt_training() {
    let cfg = small_config("unused".into());
    let ds = four_pairs(64);
    let mut nets = init_params(&cfg, 1).unwrap();
    for (_, t) in nets.generator.params.params_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = f32::NAN);
    }
    match step_once(&cfg, &mut nets, &ds, 7) {
        Err(Error::Divergence { step, .. }) => assert_eq!(step, 7),
        other => panic!("expected divergence, got {other:?}"),
    }

    let dir = run_dir("diverge");
    let wild = TrainConfig {
        learning_rate: 1e30,
        epochs: 3,
        ..small_config(dir.path().into())
    };
    let err = train_on_dataset(&wild, &ds, None).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Divergence);
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("divergence.json")).unwrap()).unwrap();
    let Error::Divergence { step, .. } = err else {
        unreachable!()
    };
    assert_eq!(record["step"], step);
    assert_eq!(record["last_logged_step"], step - 1);
}

#[test]
fn dataset_preconditions() {
    let dir = run_dir("pre");
    let cfg = small_config(dir.path().into());
    let empty = Dataset::default();
    assert_eq!(
        train_on_dataset(&cfg, &empty, None).unwrap_err().kind(),
        ErrorKind::Data
    );
    let mut unpaired = four_pairs(64);
    unpaired.samples[2].y = None;
    assert_eq!(
        train_on_dataset(&cfg, &unpaired, None).unwrap_err().kind(),
        ErrorKind::Data
    );
    let wrong = four_pairs(96);
    assert_eq!(
        train_on_dataset(&cfg, &wrong, None).unwrap_err().kind(),
        ErrorKind::Shape
    );
}
