use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use deblur_cli::config::{BaselineMethod, PipelineConfig};
use deblur_cli::pipeline::{self, ExportKind, Reference};
use deblur_cli::{exit_code, EXIT_CONFIG};
use deblur_core::deblur::InitMode;
use deblur_core::Result;

#[derive(Parser, Debug)]
#[command(name = "deblur", version, about = "Generator-regularized dynamic MRI reconstruction pipeline")]
struct Cli {
    /// Pipeline configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory shared by all stages.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Acquisition length preset in seconds.
    #[arg(long, global = true, value_enum)]
    duration: Option<Duration>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Duration {
    #[value(name = "14")]
    S14,
    #[value(name = "28")]
    S28,
    #[value(name = "42")]
    S42,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Init {
    Storm,
    Lowrank,
    Random,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Synthesize the ground-truth series, coil maps and sampling schedule.
    Phantom,
    /// Simulate noisy multi-coil k-space.
    Acquire,
    /// Run a baseline reconstruction.
    Baseline {
        #[arg(long, value_enum)]
        method: Option<BaselineMethod>,
    },
    /// Fit the generators to baseline factors.
    Pretrain {
        #[arg(long, value_enum)]
        init: Option<Init>,
    },
    /// Joint regularized fit.
    Reconstruct {
        #[arg(long, value_enum)]
        init: Option<Init>,
        /// Run id; defaults to `deblur_<init>`.
        #[arg(long)]
        run: Option<String>,
        /// SER reference: truth, storm, lowrank, none or a run id.
        #[arg(long, default_value = "truth")]
        reference: String,
    },
    /// Per-frame SER, PSNR, HFEN and SSIM against a reference.
    Evaluate {
        /// Reconstructions to score: storm, lowrank, truth or run ids.
        #[arg(long, required = true, num_args = 1..)]
        rec: Vec<String>,
        #[arg(long, default_value = "truth")]
        reference: String,
    },
    /// Export frames, latents, curves or an x-t profile of a run.
    Export {
        #[arg(long)]
        run: String,
        #[arg(long, value_enum)]
        what: ExportKind,
        /// 16-bit frames instead of 8-bit.
        #[arg(long)]
        bits16: bool,
        /// Image row for the x-t profile.
        #[arg(long)]
        row: Option<usize>,
    },
}

fn init_mode(i: Init) -> InitMode {
    match i {
        Init::Storm => InitMode::Storm,
        Init::Lowrank => InitMode::Lowrank,
        Init::Random => InitMode::Random,
    }
}

fn load(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.override_seed(s);
    }
    if let Some(d) = cli.duration {
        cfg.phantom.duration = match d {
            Duration::S14 => 14.0,
            Duration::S28 => 28.0,
            Duration::S42 => 42.0,
        };
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = load(cli)?;
    let out = &cli.out;
    match &cli.cmd {
        Cmd::Phantom => pipeline::cmd_phantom(&cfg, out),
        Cmd::Acquire => pipeline::cmd_acquire(&cfg, out),
        Cmd::Baseline { method } => {
            let m = method.unwrap_or(cfg.baseline.method);
            pipeline::cmd_baseline(&cfg, out, m)
        }
        Cmd::Pretrain { init } => {
            if let Some(i) = init {
                cfg.recon.init = init_mode(*i);
            }
            pipeline::cmd_pretrain(&cfg, out)
        }
        Cmd::Reconstruct { init, run, reference } => {
            if let Some(i) = init {
                cfg.recon.init = init_mode(*i);
            }
            let name = run.clone().unwrap_or_else(|| format!("deblur_{}", deblur_cli::config::init_name(cfg.recon.init)));
            pipeline::cmd_reconstruct(&cfg, out, &name, &Reference::parse(reference))
        }
        Cmd::Evaluate { rec, reference } => {
            let recs: Vec<Reference> = rec.iter().map(|r| Reference::parse(r)).collect();
            pipeline::cmd_evaluate(&cfg, out, &recs, &Reference::parse(reference))
        }
        Cmd::Export { run, what, bits16, row } => pipeline::cmd_export(&cfg, out, run, *what, *bits16, *row),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = exit_code(&e);
            debug_assert!(code == EXIT_CONFIG || code == deblur_cli::EXIT_NUMERICAL);
            ExitCode::from(code as u8)
        }
    }
}
