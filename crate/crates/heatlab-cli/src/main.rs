use clap::{Args, Parser, Subcommand};
use heatlab_cli::config::{apply_overrides, parse_config, Overrides, RunConfig};
use heatlab_cli::run;
use std::path::PathBuf;
use std::process::ExitCode;

/// Measures mesh-uniform constants of the discrete heat semigroup on
/// structured square and L-shaped meshes.
#[derive(Parser)]
#[command(name = "heatlab", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Runs the configured scenarios and writes one CSV report.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// INI-style config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scenario to run (repeatable). Default: all.
    #[arg(long = "scenario")]
    scenario: Vec<String>,
    /// Inclusive mesh-level range, e.g. 3..5.
    #[arg(long)]
    levels: Option<String>,
    /// square, lshape, or both.
    #[arg(long)]
    domain: Option<String>,
    /// Seed for the random probe family.
    #[arg(long)]
    seed: Option<u64>,
    /// Interior-dof cap for the dense eigensolver.
    #[arg(long)]
    cap: Option<usize>,
    /// Directory for on-disk eigendecomposition caching.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run(args) => run_cmd(args),
    }
}

/// Honors HEATLAB_THREADS; rayon's default (all cores) applies otherwise.
fn configure_threads() {
    if let Ok(v) = std::env::var("HEATLAB_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring HEATLAB_THREADS={v:?} (want a positive integer)"),
        }
    }
}

fn run_cmd(args: RunArgs) -> ExitCode {
    let base = match &args.config {
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            };
            match parse_config(&text) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("error: {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
        }
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        out: args.out,
        scenarios: args.scenario,
        levels: args.levels,
        domain: args.domain,
        seed: args.seed,
        cap: args.cap,
        cache_dir: args.cache_dir,
    };
    let cfg = match apply_overrides(base, &overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run::run(&cfg) {
        Ok(report) => {
            print!("{}", report.summary);
            if report.exit_ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
