use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diffcore::gradcheck::DEFAULT_EPS;
use crate::diffcore::{
    finite_diff_report, BatchNormSpec, ConvSpec, FdCoord, FdReport, PoolKind, ReduceKind, Tape, Tensor, Var,
};
use crate::error::Result;
use crate::model::{
    init_residual, init_sca, residual_block, sca, Bindings, Discriminator, DiscriminatorConfig, FeatureNet,
    FeatureNetConfig, Generator, GeneratorConfig, Graph, ParamStore, ScaConfig, LEAKY_SLOPE,
};
use crate::objective::{adv_loss_d, adv_loss_g, l1_loss, perceptual_loss, total_g_loss, LossWeights};

/// Pass threshold for every entry.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Side of the images used for the end-to-end loss check; the smallest the
/// discriminator accepts.
pub const LOSS_CHECK_SIZE: usize = 64;
/// Generator parameters that must be scored by the end-to-end loss check.
pub const LOSS_CHECK_COORDS: usize = 16;
/// Upper bound on candidates drawn for it; those whose stencil crosses a
/// kink are dropped and replaced.
pub const LOSS_CHECK_CANDIDATES: usize = 1024;
const CANDIDATE_BATCH: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckEntry {
    pub name: String,
    pub max_rel_err: f64,
    /// Coordinates scored.
    pub checked: usize,
    /// Coordinates excluded because their stencil crosses a kink.
    pub straddled: usize,
}

impl GradcheckEntry {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= GRADCHECK_TOLERANCE && self.checked > 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradcheckReport {
    pub entries: Vec<GradcheckEntry>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(GradcheckEntry::passed)
    }

    pub fn worst(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max)
    }
}

struct Suite {
    rng: ChaCha8Rng,
    report: GradcheckReport,
}

/// Values in ±[0.1, 1]: far enough from zero that no kink lies within a
/// finite-difference step.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m: f64 = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

fn normal(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        })
        .collect::<Vec<f64>>();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// `sum(out ⊙ r)` for a fixed random `r`, so every output element carries
/// its own upstream gradient.
fn project(tape: &mut Tape<f64>, out: Var, weights: &mut Option<Tensor<f64>>, seed: u64) -> Result<Var> {
    let r = weights.get_or_insert_with(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        normal(&mut rng, tape.shape(out), 1.0)
    });
    let rv = tape.constant(r.clone());
    let p = tape.mul(out, rv)?;
    tape.sum(p)
}

impl Suite {
    fn record(&mut self, name: &str, r: FdReport) {
        log::info!("gradcheck {name}: {:.3e} over {} coordinates", r.max_rel_err, r.checked);
        self.report.entries.push(GradcheckEntry {
            name: name.to_string(),
            max_rel_err: r.max_rel_err,
            checked: r.checked,
            straddled: r.straddled.len(),
        });
    }

    /// Checks every coordinate of `inputs` through `f`, whose (tensor)
    /// output is reduced by a random projection.
    fn op<F>(&mut self, name: &str, inputs: Vec<Tensor<f64>>, mut f: F) -> Result<()>
    where
        F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
    {
        let seed = self.rng.random();
        let mut r = None;
        let coords = all_coords(&inputs);
        let report = finite_diff_report(
            |t, v| {
                let out = f(t, v)?;
                project(t, out, &mut r, seed)
            },
            &inputs,
            &coords,
            DEFAULT_EPS,
        )?;
        self.record(name, report);
        Ok(())
    }

    fn x(&mut self, shape: &[usize]) -> Tensor<f64> {
        away_from_zero(&mut self.rng, shape)
    }
}

/// Runs a named block on a parameter store whose tensors are the checked
/// inputs; `inputs[0]` is the block input, the rest follow `names`.
fn store_inputs(store: &ParamStore<f64>, x: Tensor<f64>) -> (Vec<String>, Vec<Tensor<f64>>) {
    let names: Vec<String> = store.params().map(|(k, _)| k.to_string()).collect();
    let mut inputs = vec![x];
    inputs.extend(store.params().map(|(_, t)| t.detached()));
    (names, inputs)
}

fn all_coords(inputs: &[Tensor<f64>]) -> Vec<FdCoord> {
    inputs
        .iter()
        .enumerate()
        .flat_map(|(input, t)| (0..t.numel()).map(move |index| FdCoord { input, index }))
        .collect()
}

fn bind_named(names: &[String], vars: &[Var]) -> Bindings {
    names.iter().cloned().zip(vars.iter().copied()).collect()
}

/// The whole finite-difference suite in double precision: every primitive
/// op, the attention and residual blocks, and both end-to-end losses.
pub fn gradcheck_suite(seed: u64) -> Result<GradcheckReport> {
    let mut s = Suite {
        rng: ChaCha8Rng::seed_from_u64(seed),
        report: GradcheckReport::default(),
    };
    let sh = [2, 3, 4, 4];

    let (a, b) = (s.x(&sh), s.x(&sh));
    s.op("add", vec![a.clone(), b.clone()], |t, v| t.add(v[0], v[1]))?;
    s.op("sub", vec![a.clone(), b.clone()], |t, v| t.sub(v[0], v[1]))?;
    s.op("mul", vec![a.clone(), b.clone()], |t, v| t.mul(v[0], v[1]))?;
    s.op("div", vec![a.clone(), b.clone()], |t, v| t.div(v[0], v[1]))?;
    let bc = s.x(&[1, 3, 1, 1]);
    s.op("mul_broadcast", vec![a.clone(), bc], |t, v| t.mul(v[0], v[1]))?;
    s.op("scale_shift", vec![a.clone()], |t, v| {
        let m = t.mul_scalar(v[0], -1.7)?;
        t.add_scalar(m, 0.3)
    })?;
    s.op("relu", vec![a.clone()], |t, v| t.relu(v[0]))?;
    s.op("leaky_relu", vec![a.clone()], |t, v| t.leaky_relu(v[0], LEAKY_SLOPE))?;
    s.op("sigmoid", vec![a.clone()], |t, v| t.sigmoid(v[0]))?;
    s.op("tanh", vec![a.clone()], |t, v| t.tanh(v[0]))?;
    s.op("softplus", vec![a.clone()], |t, v| t.softplus(v[0]))?;
    s.op("global_avg_pool", vec![a.clone()], |t, v| {
        t.pool(v[0], PoolKind::GlobalAvgSpatial)
    })?;
    s.op("channel_mean", vec![a.clone()], |t, v| {
        t.pool(v[0], PoolKind::ChannelMean)
    })?;
    s.op("channel_max", vec![a.clone()], |t, v| {
        t.pool(v[0], PoolKind::ChannelMax)
    })?;
    let c2 = s.x(&[2, 2, 4, 4]);
    s.op("concat", vec![a.clone(), c2], |t, v| t.concat(&[v[0], v[1]], 1))?;
    s.op("mean", vec![a.clone()], |t, v| t.reduce(v[0], ReduceKind::Mean))?;
    s.op("sum", vec![a.clone()], |t, v| t.reduce(v[0], ReduceKind::Sum))?;
    s.op("abs_mean", vec![a.clone()], |t, v| t.reduce(v[0], ReduceKind::AbsMean))?;
    s.op("pad2d", vec![a.clone()], |t, v| t.pad2d(v[0], [1, 0, 2, 1]))?;
    s.op("pad_replicate", vec![a.clone()], |t, v| {
        t.pad_replicate(v[0], [1, 2, 2, 0])
    })?;
    s.op("upsample_nearest", vec![a.clone()], |t, v| t.upsample_nearest(v[0], 2))?;

    let img = s.x(&[1, 2, 6, 6]);
    let w = s.x(&[3, 2, 3, 3]);
    let bias = s.x(&[3]);
    s.op("conv2d", vec![img.clone(), w, bias], |t, v| {
        t.conv2d(v[0], v[1], Some(v[2]), ConvSpec::new(2, 1))
    })?;
    let wt = s.x(&[2, 3, 4, 4]);
    let bt = s.x(&[3]);
    s.op("conv_transpose2d", vec![img, wt, bt], |t, v| {
        t.conv_transpose2d(v[0], v[1], Some(v[2]), ConvSpec::new(2, 1))
    })?;

    let gamma = s.x(&[3]);
    let beta = s.x(&[3]);
    for training in [true, false] {
        let name = if training {
            "batch_norm2d_train"
        } else {
            "batch_norm2d_eval"
        };
        // Fresh running statistics per evaluation keep eval mode a pure
        // function of its inputs.
        s.op(name, vec![a.clone(), gamma.clone(), beta.clone()], |t, v| {
            let (mut rm, mut rv) = (vec![0.1, -0.2, 0.3], vec![0.5, 1.5, 0.8]);
            t.batch_norm2d(v[0], v[1], v[2], &mut rm, &mut rv, training, BatchNormSpec::default())
        })?;
    }

    let mut store = ParamStore::<f64>::new();
    let mut prng = ChaCha8Rng::seed_from_u64(s.rng.random());
    init_sca(&mut store, &mut prng, "sca", 8, &ScaConfig::default())?;
    scale_params(&mut store, &mut prng);
    let x = s.x(&[1, 8, 16, 16]);
    let (names, inputs) = store_inputs(&store, x);
    s.op("sca_16x16", inputs, |t, v| {
        let vars = bind_named(&names, &v[1..]);
        let mut g = Graph {
            tape: t,
            vars: &vars,
            store: &mut store,
            training: true,
        };
        sca(&mut g, v[0], "sca")
    })?;

    let mut store = ParamStore::<f64>::new();
    init_residual(&mut store, &mut prng, "res", 4)?;
    scale_params(&mut store, &mut prng);
    let x = s.x(&[2, 4, 16, 16]);
    let (names, inputs) = store_inputs(&store, x);
    s.op("residual_block_16x16", inputs, |t, v| {
        let vars = bind_named(&names, &v[1..]);
        let mut g = Graph {
            tape: t,
            vars: &vars,
            store: &mut store,
            training: true,
        };
        residual_block(&mut g, v[0], "res", LEAKY_SLOPE)
    })?;

    let r = generator_loss_check(&mut s.rng)?;
    s.record(&format!("generator_total_loss_{LOSS_CHECK_SIZE}x{LOSS_CHECK_SIZE}"), r);
    let r = discriminator_loss_check(&mut s.rng)?;
    s.record(&format!("discriminator_loss_{LOSS_CHECK_SIZE}x{LOSS_CHECK_SIZE}"), r);
    Ok(s.report)
}

/// Re-draws parameters at unit scale so that small-init weights do not
/// shrink every gradient towards the relative-error floor.
fn scale_params(store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng) {
    for (_, t) in store.params_mut() {
        let fresh = away_from_zero(rng, t.shape());
        t.data_mut().copy_from_slice(fresh.data());
    }
}

/// Kink-aware check of `f` on random coordinates of `inputs`, drawn in
/// batches until [`LOSS_CHECK_COORDS`] of them lie on smooth pieces.
///
/// Thousands of piecewise-linear units sit downstream of every network
/// parameter, so some stencils inevitably cross a kink; those coordinates
/// are reported and replaced by further candidates rather than scored.
fn sampled_check<F>(rng: &mut ChaCha8Rng, inputs: &[Tensor<f64>], mut f: F) -> Result<FdReport>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let total: usize = inputs.iter().map(Tensor::numel).sum();
    let mut report = FdReport {
        max_rel_err: 0.0,
        checked: 0,
        straddled: Vec::new(),
    };
    let mut drawn = 0;
    while report.checked < LOSS_CHECK_COORDS && drawn < LOSS_CHECK_CANDIDATES {
        let batch: Vec<FdCoord> = (0..CANDIDATE_BATCH)
            .map(|_| {
                let mut k = rng.random_range(0..total);
                let mut input = 0;
                while k >= inputs[input].numel() {
                    k -= inputs[input].numel();
                    input += 1;
                }
                FdCoord { input, index: k }
            })
            .collect();
        drawn += batch.len();
        let r = finite_diff_report(&mut f, inputs, &batch, DEFAULT_EPS)?;
        report.max_rel_err = report.max_rel_err.max(r.max_rel_err);
        report.checked += r.checked;
        report.straddled.extend(r.straddled);
    }
    if report.checked < LOSS_CHECK_COORDS {
        // Too few smooth coordinates to count as a check at all.
        report.max_rel_err = f64::INFINITY;
    }
    Ok(report)
}

struct LossFixture {
    gen: Generator<f64>,
    disc: Discriminator<f64>,
    feat: FeatureNet<f64>,
    x: Tensor<f64>,
    y: Tensor<f64>,
}

fn loss_fixture(rng: &mut ChaCha8Rng) -> Result<LossFixture> {
    let mut prng = ChaCha8Rng::seed_from_u64(rng.random());
    let gcfg = GeneratorConfig {
        widths: vec![4; 5],
        ..GeneratorConfig::default()
    };
    let gen = Generator::<f64>::new(gcfg, &mut prng)?;
    let disc = Discriminator::<f64>::new(DiscriminatorConfig { widths: vec![4; 4] }, &mut prng)?;
    let feat = FeatureNet::<f64>::new(FeatureNetConfig::default())?;
    let s = LOSS_CHECK_SIZE;
    let x = away_from_zero(&mut prng, &[2, 3, s, s]);
    let y = away_from_zero(&mut prng, &[2, 3, s, s]);
    Ok(LossFixture { gen, disc, feat, x, y })
}

/// Total generator loss (adversarial + perceptual + L1, default weights)
/// against a fixed discriminator, with respect to generator parameters.
fn generator_loss_check(rng: &mut ChaCha8Rng) -> Result<FdReport> {
    let LossFixture {
        mut gen,
        mut disc,
        feat,
        x,
        y,
    } = loss_fixture(rng)?;
    let names: Vec<String> = gen.params.params().map(|(k, _)| k.to_string()).collect();
    let inputs: Vec<Tensor<f64>> = gen.params.params().map(|(_, t)| t.detached()).collect();
    let taps = [3usize];
    sampled_check(rng, &inputs, |t, v| {
        let gv = bind_named(&names, v);
        let xv = t.constant(x.clone());
        let yv = t.constant(y.clone());
        let fake = gen.forward(t, &gv, xv, true)?;
        let dv = disc.params.bind(t, false);
        let fv = feat.bind(t);
        let logits = disc.forward(t, &dv, xv, fake, true)?;
        let adv = adv_loss_g(t, logits)?;
        let per = perceptual_loss(t, &feat, &fv, yv, fake, &taps)?;
        let l1 = l1_loss(t, yv, fake)?;
        total_g_loss(t, adv, per, l1, LossWeights::default())
    })
}

/// Discriminator loss on a real pair and a (detached) generated pair, with
/// respect to discriminator parameters.
fn discriminator_loss_check(rng: &mut ChaCha8Rng) -> Result<FdReport> {
    let LossFixture {
        mut gen,
        mut disc,
        x,
        y,
        ..
    } = loss_fixture(rng)?;
    let fake = gen.enhance(&x)?;
    let names: Vec<String> = disc.params.params().map(|(k, _)| k.to_string()).collect();
    let inputs: Vec<Tensor<f64>> = disc.params.params().map(|(_, t)| t.detached()).collect();
    sampled_check(rng, &inputs, |t, v| {
        let dv = bind_named(&names, v);
        let xv = t.constant(x.clone());
        let yv = t.constant(y.clone());
        let fv = t.constant(fake.clone());
        let real = disc.forward(t, &dv, xv, yv, true)?;
        let fake = disc.forward(t, &dv, xv, fv, true)?;
        adv_loss_d(t, real, fake)
    })
}
