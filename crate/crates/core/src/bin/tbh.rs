use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tbh_core::config::SweepConfig;
use tbh_core::error::Error;
use tbh_core::{export, sweep};

/// Exact diagonalization of the tilted Bose-Hubbard chain.
#[derive(Parser)]
#[command(name = "tbh", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the Fock basis (and Hamiltonian triplets if requested).
    Basis(Common),
    /// Eigenvalues and gap-ratio statistics per point.
    Spectrum(Common),
    /// Participation ratio, entropy and imbalance of every eigenstate.
    Eigenstates(Common),
    /// Survival probability, entropy and imbalance after a quench.
    Quench(Common),
    /// Eigenvalues-only chaos map over the (U, D) grid.
    ChaosMap(Common),
    /// All requested diagnostics along a one-parameter cut.
    Cut(Common),
}

#[derive(Args)]
struct Common {
    /// TOML or JSON sweep configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, overriding the config.
    #[arg(long)]
    workers: Option<usize>,
    /// RNG seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Keep records already present in the output directory.
    #[arg(long)]
    resume: bool,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_RESOURCE: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. }
        | Error::InvalidSpec(_)
        | Error::InvalidParams(_)
        | Error::InvalidTimeGrid(_)
        | Error::InvalidArgument(_)
        | Error::Json(_) => EXIT_CONFIG,
        Error::DimensionTooLarge { .. } | Error::Overflow { .. } => EXIT_RESOURCE,
        _ => EXIT_PARTIAL,
    }
}

/// OpenBLAS picks its kernels when the library loads, so the core type
/// must be in the environment before `main` runs.
#[cfg(all(target_os = "linux", target_arch = "x86_64"))]
fn ensure_blas_coretype() {
    use std::os::unix::process::CommandExt;
    if std::env::var_os("OPENBLAS_CORETYPE").is_some() {
        return;
    }
    let Ok(exe) = std::env::current_exe() else { return };
    let err = std::process::Command::new(exe)
        .args(std::env::args_os().skip(1))
        .env("OPENBLAS_CORETYPE", "Haswell")
        .exec();
    eprintln!("warning: could not re-exec with OPENBLAS_CORETYPE set: {err}");
}

#[cfg(not(all(target_os = "linux", target_arch = "x86_64")))]
fn ensure_blas_coretype() {}

fn load(c: &Common) -> tbh_core::Result<SweepConfig> {
    let mut cfg = SweepConfig::from_path(&c.config)?;
    if let Some(out) = &c.out {
        cfg.output_dir = out.clone();
    }
    if let Some(w) = c.workers {
        cfg.worker_count = w;
    }
    if let Some(s) = c.seed {
        cfg.rng_seed = s;
    }
    cfg.validate()
}

fn run(cli: Cli) -> Result<u8, Error> {
    let (common, kind) = match &cli.command {
        Command::Basis(c) => (c, "basis"),
        Command::Spectrum(c) => (c, "spectrum"),
        Command::Eigenstates(c) => (c, "eigenstates"),
        Command::Quench(c) => (c, "quench"),
        Command::ChaosMap(c) => (c, "chaos-map"),
        Command::Cut(c) => (c, "cut"),
    };
    // Any failure to read or validate the config is a config error.
    let cfg = match load(common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_CONFIG);
        }
    };
    log::info!("{kind}: config hash {}, output {}", cfg.hash(), cfg.output_dir.display());
    let single = |f: fn(&SweepConfig) -> tbh_core::Result<Vec<PathBuf>>| -> tbh_core::Result<u8> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.worker_count)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        let written = pool.install(|| f(&cfg))?;
        log::info!("wrote {} files", written.len());
        Ok(0)
    };
    let outcome = match &cli.command {
        Command::Basis(_) => return single(export::run_basis),
        Command::Spectrum(_) => return single(export::run_spectrum),
        Command::Eigenstates(_) => return single(export::run_eigenstates),
        Command::Quench(_) => return single(export::run_quench),
        Command::ChaosMap(_) => sweep::run_chaos_map(&cfg, common.resume)?,
        Command::Cut(_) => sweep::run_cut(&cfg, common.resume)?,
    };
    log::info!(
        "{} points ({} resumed, {} failed, {} skipped) -> {}",
        outcome.records.len(),
        outcome.n_resumed,
        outcome.n_failed,
        outcome.n_skipped,
        outcome.records_path.display()
    );
    Ok(if outcome.n_failed > 0 {
        EXIT_PARTIAL
    } else if outcome.n_skipped > 0 {
        EXIT_RESOURCE
    } else {
        0
    })
}

fn main() -> ExitCode {
    ensure_blas_coretype();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
