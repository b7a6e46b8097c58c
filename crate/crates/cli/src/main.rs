//! `mula`: train, enhance, evaluate, gradcheck and fit-niqe.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mulagan::metrics::{evaluate, fit_niqe_model, NiqeModel, DEFAULT_PATCH};
use mulagan::pipeline::{enhance_dir, load_dir};
use mulagan::trainer::{gradcheck_suite, load_generator, train_loop, GRADCHECK_TOLERANCE};
use mulagan::{Error, ErrorKind, TrainConfig};

#[derive(Parser)]
#[command(
    name = "mula",
    version,
    about = "Underwater image enhancement with an attention U-Net GAN"
)]
struct Cli {
    /// Cap on worker threads for per-file work.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Enhance every image in a directory.
    Enhance {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Processing resolution; defaults to the training size.
        #[arg(long)]
        size: Option<usize>,
        /// Resize results back to each input's dimensions.
        #[arg(long)]
        keep_size: bool,
    },
    /// Score images and write a CSV (plus sibling JSON) report.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Pristine model from `fit-niqe`; the bundled one otherwise.
        #[arg(long)]
        niqe_model: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the finite-difference gradient suite.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit a NIQE pristine model on a directory of clean images.
    FitNiqe {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PATCH)]
        patch: usize,
    },
}

enum Failure {
    Usage(String),
    Lib(Error),
    Gradcheck(f64),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage_error",
            Failure::Lib(e) => e.kind().code(),
            Failure::Gradcheck(_) => "gradcheck_failed",
        }
    }

    fn exit(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Gradcheck(_) => 3,
            Failure::Lib(e) => match e.kind() {
                ErrorKind::Config => 1,
                ErrorKind::Numerical | ErrorKind::Divergence | ErrorKind::Contract => 3,
                ErrorKind::Shape
                | ErrorKind::Input
                | ErrorKind::Data
                | ErrorKind::Decode
                | ErrorKind::Format
                | ErrorKind::Io => 2,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Lib(e) => e.to_string(),
            Failure::Gradcheck(w) => format!("worst relative error {w:.3e} exceeds {GRADCHECK_TOLERANCE:e}"),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot size thread pool: {e}")))?;
    }
    match cli.command {
        Command::Train { config, resume } => {
            let cfg = TrainConfig::load(&config)?;
            let out = train_loop(&cfg, resume.as_deref())?;
            if let Some(last) = out.log.records().last() {
                println!(
                    "trained {} steps; last g_l1={:.6} d_loss={:.6}",
                    out.steps, last.losses.g_l1, last.losses.d_loss
                );
            }
            println!("checkpoint: {}", out.final_checkpoint.display());
        }
        Command::Enhance {
            ckpt,
            input,
            output,
            size,
            keep_size,
        } => {
            let (gen, trained) = load_generator(&ckpt)?;
            let s = size.unwrap_or(trained);
            if s == 0 || s % 32 != 0 {
                return Err(Failure::Usage(format!("--size {s} must be a positive multiple of 32")));
            }
            let summary = enhance_dir(&gen, &input, &output, s, keep_size)?;
            for w in &summary.warnings {
                log::warn!("{w}");
            }
            println!("enhanced {} images into {}", summary.written.len(), output.display());
        }
        Command::Evaluate {
            input,
            reference,
            niqe_model,
            report,
        } => {
            let model = match niqe_model {
                Some(p) => NiqeModel::load(&p)?,
                None => NiqeModel::bundled()?,
            };
            let (inputs, warnings) = load_dir(&input)?;
            let refs = match &reference {
                Some(dir) => {
                    let (r, w) = load_dir(dir)?;
                    warnings.iter().chain(&w).for_each(|w| log::warn!("{w}"));
                    Some(r)
                }
                None => {
                    warnings.iter().for_each(|w| log::warn!("{w}"));
                    None
                }
            };
            let r = evaluate(&inputs, refs.as_deref(), &model)?;
            r.save(&report)?;
            let m = &r.means;
            let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
            println!(
                "{} images: psnr {} ssim {} uiqm {:.4} uciqe {:.4} niqe {:.4}",
                r.images.len(),
                opt(m.psnr),
                opt(m.ssim),
                m.uiqm,
                m.uciqe,
                m.niqe
            );
        }
        Command::Gradcheck { seed } => {
            let report = gradcheck_suite(seed)?;
            for e in &report.entries {
                let verdict = if e.passed() { "ok" } else { "FAIL" };
                let kinks = if e.straddled > 0 {
                    format!(" ({} kink-straddling coordinates skipped)", e.straddled)
                } else {
                    String::new()
                };
                println!("{:<28} {:.3e} {verdict}  n={}{kinks}", e.name, e.max_rel_err, e.checked);
            }
            if !report.passed() {
                return Err(Failure::Gradcheck(report.worst()));
            }
        }
        Command::FitNiqe { corpus, out, patch } => {
            let (images, warnings) = load_dir(&corpus)?;
            warnings.iter().for_each(|w| log::warn!("{w}"));
            let imgs: Vec<_> = images.into_iter().map(|(_, i)| i).collect();
            let mut model = fit_niqe_model(&imgs, patch)?;
            model.source = corpus.display().to_string();
            model.save(&out)?;
            println!("fitted NIQE model on {} images (patch {patch})", imgs.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("error_code=usage_error {}", e.to_string().trim_end());
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error_code={} {}", f.code(), f.message());
            ExitCode::from(f.exit())
        }
    }
}
