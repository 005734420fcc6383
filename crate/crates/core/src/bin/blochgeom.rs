use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use blochgeom::cli::{parse_config, run_command, CliError, CommandKind, MethodChoice, RunConfig, RunOptions};

#[derive(Parser)]
#[command(
    name = "blochgeom",
    version,
    about = "Bloch bands, correction terms, Berry curvature and adiabatic ramps"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory receiving the output files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; defaults to every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for random k-points and gauge phases.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Band energies along the configured k-path.
    Bands,
    /// Berry curvature on the configured k-grid.
    Curvature {
        #[arg(long, value_enum, default_value_t = MethodChoice::All)]
        method: MethodChoice,
    },
    /// Closed-form correction term against its integral routes.
    DeltaVerify,
    /// Free particle in a box: velocity and position identities.
    FreeParticle,
    /// Coefficient evolution along the configured ramp.
    Adiabatic,
    /// Every check; the bundled configurations are used without --config.
    VerifyAll,
}

fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text)
}

fn run(args: Args) -> Result<bool, CliError> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot start {n} threads: {e}")))?;
    }
    let (kind, method) = match args.command {
        Command::Bands => (CommandKind::Bands, MethodChoice::All),
        Command::Curvature { method } => (CommandKind::Curvature, method),
        Command::DeltaVerify => (CommandKind::DeltaVerify, MethodChoice::All),
        Command::FreeParticle => (CommandKind::FreeParticle, MethodChoice::All),
        Command::Adiabatic => (CommandKind::Adiabatic, MethodChoice::All),
        Command::VerifyAll => (CommandKind::VerifyAll, MethodChoice::All),
    };
    let cfg = args.config.as_deref().map(load).transpose()?;
    let opts = RunOptions {
        method,
        seed: args.seed,
    };
    let outcome = run_command(kind, cfg.as_ref(), &opts)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    for a in &outcome.artifacts {
        let path = args.out.join(&a.name);
        std::fs::write(&path, &a.contents).map_err(|e| CliError::io(&path, e))?;
        log::info!("wrote {}", path.display());
    }
    for c in outcome.checks.iter().filter(|c| !c.pass) {
        log::warn!("check {} failed: {:e} vs {:e}", c.id, c.measured, c.tolerance);
    }
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.category.exit_code() as u8)
        }
    }
}
