//! Attention U-Net generator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::{init_sca, sca, ScaConfig};
use super::residual::{init_residual, residual_block};
use super::{add_bn, add_conv, check_finite, Bindings, Graph, ParamStore, LEAKY_SLOPE};
use crate::diffcore::{ConvSpec, Float, Tape, Tensor, Var};
use crate::error::{shape_err, Error, Result};

pub const PREFIX: &str = "generator";
/// Number of stride-2 encoder stages.
pub const STAGES: usize = 5;
/// 4×4 kernels at stride 2 halve (or, transposed, double) the resolution.
const DOWN: ConvSpec = ConvSpec { stride: 2, padding: 1 };

/// How the head restores full resolution before its final convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HeadUpsample {
    #[default]
    Nearest,
    /// A learned 4×4 stride-2 transposed convolution.
    Transposed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Output channels of down1..down5.
    pub widths: Vec<usize>,
    /// Encoder stages (2..=5) followed by spatio-channel attention.
    pub sca_stages: Vec<usize>,
    pub sca: ScaConfig,
    pub leaky_slope: f64,
    pub head_upsample: HeadUpsample,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            widths: vec![32, 64, 128, 256, 256],
            sca_stages: vec![2, 3, 4, 5],
            sca: ScaConfig::default(),
            leaky_slope: LEAKY_SLOPE,
            head_upsample: HeadUpsample::Nearest,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.len() != STAGES || self.widths.contains(&0) {
            return Err(Error::Config(format!(
                "generator needs {STAGES} positive channel widths, got {:?}",
                self.widths
            )));
        }
        if let Some(s) = self.sca_stages.iter().find(|s| !(2..=STAGES).contains(s)) {
            return Err(Error::Config(format!("attention stage {s} outside 2..={STAGES}")));
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return Err(Error::Config(format!(
                "leaky slope {} outside [0, 1)",
                self.leaky_slope
            )));
        }
        self.sca.validate()
    }
}

/// Maps an N×3×S×S image in [−1, 1] to an enhanced image of the same shape.
#[derive(Debug, Clone)]
pub struct Generator<T: Float = f32> {
    pub config: GeneratorConfig,
    pub params: ParamStore<T>,
}

impl<T: Float> Generator<T> {
    pub fn new<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let w = &config.widths;
        let mut p = ParamStore::new();
        let mut cin = 3;
        for i in 1..=STAGES {
            let name = format!("{PREFIX}.down{i}");
            let c = w[i - 1];
            add_conv(&mut p, rng, &format!("{name}.conv"), [c, cin, 4, 4], None)?;
            add_bn(&mut p, &format!("{name}.bn"), c)?;
            init_residual(&mut p, rng, &format!("{name}.res"), c)?;
            if config.sca_stages.contains(&i) {
                init_sca(&mut p, rng, &format!("{name}.sca"), c, &config.sca)?;
            }
            cin = c;
        }
        // up_i consumes the previous decoder output (or down5) and emits the
        // width of the encoder skip it is concatenated with.
        for i in 1..STAGES {
            let name = format!("{PREFIX}.up{i}");
            let cout = w[STAGES - 1 - i];
            add_conv(&mut p, rng, &format!("{name}.deconv"), [cin, cout, 4, 4], None)?;
            add_bn(&mut p, &format!("{name}.bn"), cout)?;
            cin = 2 * cout;
        }
        if config.head_upsample == HeadUpsample::Transposed {
            add_conv(&mut p, rng, &format!("{PREFIX}.head.up"), [cin, cin, 4, 4], Some(cin))?;
        }
        add_conv(&mut p, rng, &format!("{PREFIX}.head.conv"), [3, cin, 4, 4], Some(3))?;
        Ok(Generator { config, params: p })
    }

    /// Records the encoder and returns the output of each of its stages
    /// (the skip features), shallowest first.
    pub fn encode(&mut self, tape: &mut Tape<T>, vars: &Bindings, x: Var, training: bool) -> Result<Vec<Var>> {
        let [_, c, h, w] = tape.value(x).dims4()?;
        let step = 1 << STAGES;
        if c != 3 || h == 0 || w == 0 || h % step != 0 || w % step != 0 {
            return Err(shape_err!(
                "generator expects N×3×S×S with S divisible by {step}, got {:?}",
                tape.shape(x)
            ));
        }
        check_finite(tape, x, "generator input")?;
        let slope = self.config.leaky_slope;
        let sca_stages = self.config.sca_stages.clone();
        let mut g = Graph {
            tape,
            vars,
            store: &mut self.params,
            training,
        };
        let mut skips = Vec::with_capacity(STAGES);
        let mut d = x;
        for i in 1..=STAGES {
            let name = format!("{PREFIX}.down{i}");
            d = g.conv(d, &format!("{name}.conv"), DOWN)?;
            d = g.batch_norm(d, &format!("{name}.bn"))?;
            d = g.tape.leaky_relu(d, slope)?;
            d = residual_block(&mut g, d, &format!("{name}.res"), slope)?;
            if sca_stages.contains(&i) {
                d = sca(&mut g, d, &format!("{name}.sca"))?;
            }
            skips.push(d);
        }
        Ok(skips)
    }

    /// Records the forward pass; `vars` must come from binding `self.params`.
    pub fn forward(&mut self, tape: &mut Tape<T>, vars: &Bindings, x: Var, training: bool) -> Result<Var> {
        let skips = self.encode(tape, vars, x, training)?;
        let head = self.config.head_upsample;
        let mut g = Graph {
            tape,
            vars,
            store: &mut self.params,
            training,
        };
        let mut u = skips[STAGES - 1];
        for i in 1..STAGES {
            let name = format!("{PREFIX}.up{i}");
            u = g.conv_transpose(u, &format!("{name}.deconv"), DOWN)?;
            u = g.batch_norm(u, &format!("{name}.bn"))?;
            u = g.tape.relu(u)?;
            u = g.tape.concat(&[u, skips[STAGES - 1 - i]], 1)?;
        }
        u = match head {
            HeadUpsample::Nearest => g.tape.upsample_nearest(u, 2)?,
            HeadUpsample::Transposed => g.conv_transpose(u, &format!("{PREFIX}.head.up"), DOWN)?,
        };
        // A 4×4 kernel needs three rows of padding to keep the size; the
        // extra one goes on the top/left.
        u = g.tape.pad2d(u, [1, 0, 1, 0])?;
        u = g.conv(u, &format!("{PREFIX}.head.conv"), ConvSpec::new(1, 1))?;
        g.tape.tanh(u)
    }

    /// Inference with running batch-norm statistics.
    pub fn enhance(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape, false);
        let xv = tape.constant(x.detached());
        let y = self.forward(&mut tape, &vars, xv, false)?;
        Ok(tape.value(y).detached())
    }
}
