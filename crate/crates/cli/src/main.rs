//! `udn`: runs the interacting-queue experiments and writes their CSV tables.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tempfile::NamedTempFile;

use udn_core::experiment::{self, Sweep};
use udn_core::geometry::write_realizations_csv;
use udn_core::queuesim::write_link_stats_csv;
use udn_core::selfcheck::{run_selfcheck, Mutations};
use udn_core::{ConfigError, SimConfig, ValidatedConfig};

#[derive(Parser)]
#[command(name = "udn", version, about = "Delay and stability experiments for interacting queues in dense wireless networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Critical arrival rates of the sufficient and both necessary conditions over an access-probability grid.
    StabilityRegion(RunArgs),
    /// Backlogged local-delay statistics over a θ or p grid.
    LocalDelay(RunArgs),
    /// Bounds, empirical and approximate cdfs of the per-link mean delay.
    DelayCdf(RunArgs),
    /// Fast built-in consistency checks.
    Selfcheck(SelfcheckArgs),
    /// Dumps the sampled deployments.
    Sample(RunArgs),
    /// Per-link statistics of the configured system variant.
    Simulate(RunArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output CSV path. Standard output when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Parameter grid `NAME=START:STOP:STEP`.
    #[arg(long, value_name = "SPEC")]
    sweep: Option<String>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, env = "UDN_WORKERS")]
    workers: Option<usize>,
    /// Number of sampled deployments.
    #[arg(long, default_value_t = 20)]
    realizations: usize,
    /// Overrides the configured horizon in slots.
    #[arg(long)]
    horizon: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mutation {
    StrictThreshold,
    CorruptCoupling,
}

#[derive(Args)]
struct SelfcheckArgs {
    /// Injects a known fault to confirm the checks catch it.
    #[arg(long, value_enum, hide = true)]
    mutate: Vec<Mutation>,
}

fn load_config(args: &RunArgs) -> Result<ValidatedConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SimConfig::from_kv_str(&text)?
        }
        None => SimConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(h) = args.horizon {
        config.horizon = h;
    }
    Ok(config.validate()?)
}

fn sweep_or(args: &RunArgs, default: &str) -> Result<Sweep> {
    Ok(args.sweep.as_deref().unwrap_or(default).parse::<Sweep>()?)
}

/// Writes the output through a temporary file so a failed run leaves nothing behind.
fn emit(out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
        Some(path) => {
            let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
            write(tmp.as_file_mut())?;
            tmp.as_file_mut().flush()?;
            tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    Ok(())
}

fn with_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let threads = workers.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().context("starting worker pool")?;
    pool.install(job)
}

fn run_experiment(command: &Command, args: &RunArgs) -> Result<()> {
    let config = load_config(args)?;
    let csv: Vec<u8> = with_pool(args.workers, || {
        let mut buf = Vec::new();
        match command {
            Command::StabilityRegion(_) => {
                let sweep = sweep_or(args, "p=0.1:1.0:0.1")?;
                if sweep.field()? != "access_prob" {
                    bail!("stability-region sweeps the access probability `p`");
                }
                if let Some(bad) = sweep.values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    bail!("access probability {bad} outside [0, 1]");
                }
                let ensemble = experiment::sample_ensemble(&config, args.realizations);
                let rows = experiment::stability_region(&config, &ensemble, &sweep.values)?;
                experiment::write_stability_csv(&mut buf, &rows)?;
            }
            Command::LocalDelay(_) => {
                let Some(spec) = &args.sweep else {
                    bail!("local-delay needs --sweep, e.g. theta=0.25:8:0.25 or p=0.1:1:0.1");
                };
                let sweep: Sweep = spec.parse()?;
                let ensemble = experiment::sample_ensemble(&config, args.realizations);
                let rows = experiment::local_delay_sweep(&config, &ensemble, &sweep)?;
                experiment::write_local_delay_csv(&mut buf, &rows)?;
            }
            Command::DelayCdf(_) => {
                let grid = match &args.sweep {
                    Some(spec) => spec.parse::<Sweep>()?.values,
                    None => experiment::default_cdf_grid(),
                };
                let ensemble = experiment::sample_ensemble(&config, args.realizations);
                let report = experiment::delay_cdf(&config, &ensemble, &grid)?;
                experiment::write_cdf_csv(&mut buf, &report)?;
            }
            Command::Sample(_) => {
                let ensemble = experiment::sample_ensemble(&config, args.realizations);
                write_realizations_csv(&mut buf, &ensemble)?;
            }
            Command::Simulate(_) => {
                let ensemble = experiment::sample_ensemble(&config, args.realizations);
                let runs = experiment::run_ensemble(&config, &ensemble, config.variant)?;
                let stats: Vec<_> = runs.into_iter().flatten().collect();
                write_link_stats_csv(&mut buf, &stats)?;
            }
            Command::Selfcheck(_) => unreachable!("handled separately"),
        }
        Ok(buf)
    })?;
    emit(args.out.as_deref(), |w| Ok(w.write_all(&csv)?))
}

fn selfcheck(args: &SelfcheckArgs) -> Result<bool> {
    let mut mutations = Mutations::default();
    for m in &args.mutate {
        match m {
            Mutation::StrictThreshold => mutations.strict_threshold = true,
            Mutation::CorruptCoupling => mutations.corrupt_coupling = true,
        }
    }
    let report = run_selfcheck(mutations)?;
    print!("{report}");
    println!("{}", if report.passed() { "selfcheck passed" } else { "selfcheck FAILED" });
    Ok(report.passed())
}

fn config_error(err: &anyhow::Error) -> Option<&ConfigError> {
    err.chain().find_map(|e| {
        e.downcast_ref::<ConfigError>().or_else(|| match e.downcast_ref::<udn_core::Error>() {
            Some(udn_core::Error::Config(c)) => Some(c),
            _ => None,
        })
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Selfcheck(args) => selfcheck(args),
        cmd @ (Command::StabilityRegion(a)
        | Command::LocalDelay(a)
        | Command::DelayCdf(a)
        | Command::Sample(a)
        | Command::Simulate(a)) => run_experiment(cmd, a).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            if let Some(cfg) = config_error(&err) {
                eprintln!("error: {cfg}");
                return ExitCode::from(2);
            }
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
