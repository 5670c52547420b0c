use std::path::PathBuf;
use std::process::ExitCode;

use canopy_lab::plots::emit_plot_data;
use canopy_lab::{run, ExperimentConfig, ExperimentKind, LabError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "canopy-lab", version, about = "Spectral experiments on truncated Bethe lattices and canopy trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tree sizes and block tiling.
    Geometry(RunArgs),
    /// Block Schur and inertia results against dense linear algebra.
    Oracle(RunArgs),
    /// Expected eigenvalue count against the Wegner bound.
    Wegner(RunArgs),
    /// Eigenvalue-count tails against the Minami bound.
    Minami(RunArgs),
    /// Decay of fractional Green function moments.
    Fracmom(RunArgs),
    /// Finite-volume density of states against the canopy formula.
    Dos(RunArgs),
    /// Rescaled eigenvalue process and its compound Poisson fit.
    Process(RunArgs),
    /// Plot-ready tables from a finished run.
    EmitPlots {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; the reference setting is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the effective config and exit.
    #[arg(long)]
    print_config: bool,
}

fn resolve(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig, LabError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(kind),
    };
    if cfg.kind() != kind {
        return Err(LabError::KindMismatch {
            expected: kind.name().into(),
            found: cfg.kind().name().into(),
        });
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<bool, LabError> {
    let (kind, args) = match cli.command {
        Command::EmitPlots { out } => {
            for d in emit_plot_data(&out)? {
                println!("{}  {}", d.sha256, out.join(&d.file).display());
            }
            return Ok(true);
        }
        Command::Geometry(a) => (ExperimentKind::Geometry, a),
        Command::Oracle(a) => (ExperimentKind::Oracle, a),
        Command::Wegner(a) => (ExperimentKind::Wegner, a),
        Command::Minami(a) => (ExperimentKind::Minami, a),
        Command::Fracmom(a) => (ExperimentKind::Fracmom, a),
        Command::Dos(a) => (ExperimentKind::Dos, a),
        Command::Process(a) => (ExperimentKind::Process, a),
    };
    let cfg = resolve(kind, &args)?;
    if args.print_config {
        println!("{}", cfg.to_json());
        return Ok(true);
    }
    let manifest = run(&cfg)?;
    for v in &manifest.verdicts {
        println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    println!("outputs written to {}", cfg.output_dir.display());
    Ok(manifest.pass)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
