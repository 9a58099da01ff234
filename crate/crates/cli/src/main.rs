//! `xmodal`: compatibility invariants for embedding pairs over a shared
//! sample graph. Subcommands cover the full pipeline (site, whiten,
//! hardness, obstruction, report), a bridge comparison, and two
//! self-checking demos. Every failure exits nonzero with a single-line
//! `error[CODE]: message` on stderr.

mod commands;
mod config;
mod demo;
mod engine;
mod svg;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use xmodal_core::Error;

use commands::{cmd_bridge, cmd_profiles, cmd_report, cmd_site, cmd_whiten, effective_config, Overrides};
use config::resolve_out_dir;

#[derive(Parser)]
#[command(name = "xmodal", version, about = "Cross-modal compatibility invariants over a shared sample graph")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the shared neighborhood graph and report its spectrum
    Site(ConfigArgs),
    /// Whiten every modality on a seeded training split
    Whiten(ConfigArgs),
    /// Hardness + obstruction profiles for configured pairs
    Hardness(PairArgs),
    /// Same profiles as `hardness`, plus tradeoff SVG plots
    Obstruction(PairArgs),
    /// Generate a bridge scenario and compare composed vs direct alignment
    Bridge(BridgeArgs),
    /// Self-checking demonstration scenarios
    Demo {
        #[command(subcommand)]
        which: DemoCmd,
    },
    /// Full pipeline: site, whitening, profiles, relation, report.json
    Report(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Path to the run-config JSON
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides config and XMODAL_OUT_DIR)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PairArgs {
    /// Path to the run-config JSON
    #[arg(long)]
    config: PathBuf,
    /// Restrict to a single pair, e.g. --pair a,b
    #[arg(long)]
    pair: Option<String>,
    /// Replace the configured epsilon list with one value
    #[arg(long)]
    eps: Option<f64>,
    /// Output directory (overrides config and XMODAL_OUT_DIR)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BridgeArgs {
    /// Sawtooth width parameter of the bridge construction
    #[arg(long, default_value_t = 2)]
    width: usize,
    /// Number of samples
    #[arg(long, default_value_t = 256)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Error tolerance for feasibility
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    /// Output directory (overrides XMODAL_OUT_DIR)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum DemoCmd {
    /// Two sign clusters: the obstruction tracks 4x the cut size
    Signflip {
        /// Number of edges crossing the two clusters
        #[arg(long, default_value_t = 3)]
        cut: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Piecewise-linear bridge: two easy stages, one hard direct map
    Relu {
        /// Sawtooth width parameter
        #[arg(long, default_value_t = 2)]
        width: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> xmodal_core::Result<()> {
    match cli.cmd {
        Cmd::Site(a) => {
            let (cfg, out) = load(&a)?;
            cmd_site(&cfg, &out)
        }
        Cmd::Whiten(a) => {
            let (cfg, out) = load(&a)?;
            cmd_whiten(&cfg, &out)
        }
        Cmd::Hardness(a) => {
            let (cfg, out) = load_pair(&a)?;
            cmd_profiles(&cfg, &out, false)
        }
        Cmd::Obstruction(a) => {
            let (cfg, out) = load_pair(&a)?;
            cmd_profiles(&cfg, &out, true)
        }
        Cmd::Bridge(a) => {
            let out = resolve_out_dir(a.out.as_deref(), None);
            cmd_bridge(a.width, a.n, a.seed, a.eps, &out)
        }
        Cmd::Demo { which } => match which {
            DemoCmd::Signflip { cut, seed, out } => {
                let out = resolve_out_dir(out.as_deref(), None);
                demo::run_signflip(cut, seed, &out)
            }
            DemoCmd::Relu { width, seed, out } => {
                let out = resolve_out_dir(out.as_deref(), None);
                demo::run_relu(width, seed, &out)
            }
        },
        Cmd::Report(a) => {
            let (cfg, out) = load(&a)?;
            cmd_report(&cfg, &out)
        }
    }
}

fn load(a: &ConfigArgs) -> xmodal_core::Result<(config::RunConfig, PathBuf)> {
    effective_config(
        &a.config,
        &Overrides { out: a.out.clone(), seed: a.seed, eps: None, pair: None },
    )
}

fn load_pair(a: &PairArgs) -> xmodal_core::Result<(config::RunConfig, PathBuf)> {
    effective_config(
        &a.config,
        &Overrides { out: a.out.clone(), seed: a.seed, eps: a.eps, pair: a.pair.clone() },
    )
}

fn error_code(e: &Error) -> &'static str {
    match e {
        Error::Io(_) => "E_IO",
        Error::Parse { .. } => "E_PARSE",
        Error::Json(_) => "E_JSON",
        Error::InvalidInput(_) => "E_INVALID",
        Error::Disconnected { .. } => "E_DISCONNECTED",
        Error::SingularCovariance => "E_SINGULAR_COVARIANCE",
        Error::Numerical(_) => "E_NUMERICAL",
        Error::CheckFailed(_) => "E_CHECK_FAILED",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let first = e.to_string();
            let first = first.lines().find(|l| !l.trim().is_empty()).unwrap_or("bad usage");
            eprintln!("error[E_USAGE]: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', "; ");
            eprintln!("error[{}]: {msg}", error_code(&e));
            ExitCode::FAILURE
        }
    }
}
