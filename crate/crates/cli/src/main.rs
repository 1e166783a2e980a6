use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use noisy_arq_cli::output::{self, with_suffix};
use noisy_arq_cli::regions::{self, BOUNDARY_HEADER, ZETA_BASELINE_NOTE, ZETA_HEADER};
use noisy_arq_cli::spec::ExperimentSpec;
use noisy_arq_cli::{run, verify, CliError};

#[derive(Parser)]
#[command(name = "noisy-arq", version, about = "ARQ/HARQ with noisy feedback: sweeps, regions and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed (overrides the spec).
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo packets per cell (overrides the spec).
    #[arg(long)]
    packets: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Output file (overrides the spec).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every grid cell and write a CSV table.
    Run {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Reuse cells finished by an earlier run of the same spec.
        #[arg(long)]
        resume: bool,
    },
    /// Largest p_b keeping the relative outage increase within beta percent.
    BetaRegion {
        spec: PathBuf,
        /// Percent; defaults to the spec value.
        #[arg(long)]
        beta: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Optimized throughput relative to the noise-free uniform baseline.
    RelThroughput {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Largest p_b at which ARQ still beats single-shot transmission.
    UsefulRegion {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Cross-check Monte Carlo against the closed forms on a fixed grid.
    Verify {
        #[command(flatten)]
        common: Common,
    },
}

fn load(path: &Path, common: &Common) -> Result<ExperimentSpec, CliError> {
    let mut spec = ExperimentSpec::load(path)?;
    if let Some(s) = common.seed {
        spec.seed = s;
    }
    if let Some(p) = common.packets {
        spec.mc_packets = p;
    }
    Ok(spec)
}

fn derived_path(spec: &ExperimentSpec, common: &Common, suffix: &str) -> PathBuf {
    common
        .out
        .clone()
        .unwrap_or_else(|| with_suffix(&run::output_path(spec, None).with_extension(""), suffix))
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    let common = match &cli.command {
        Command::Run { common, .. }
        | Command::BetaRegion { common, .. }
        | Command::RelThroughput { common, .. }
        | Command::UsefulRegion { common, .. }
        | Command::Verify { common } => common.clone(),
    };
    if let Some(t) = common.threads {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Run { spec, resume, .. } => {
            let spec = load(&spec, &common)?;
            let out = run::output_path(&spec, common.out.as_deref());
            let s = run::run(&spec, &out, resume)?;
            println!(
                "{}: {} cells ({} reused, {} skipped)",
                s.output.display(),
                s.cells,
                s.reused,
                s.skipped
            );
            for v in &s.violations {
                eprintln!("invariant violation: {v}");
            }
            Ok(s.violations.is_empty())
        }
        Command::BetaRegion { spec, beta, .. } => {
            let spec = load(&spec, &common)?;
            let beta = beta.unwrap_or(spec.beta);
            let rows = regions::beta_region(&spec, beta)?;
            let out = derived_path(&spec, &common, "_beta_region.csv");
            let recs: Vec<_> = rows.iter().map(|r| r.record()).collect();
            output::write_csv(&out, &BOUNDARY_HEADER, &recs)?;
            println!("{}: {} rows", out.display(), rows.len());
            Ok(true)
        }
        Command::RelThroughput { spec, .. } => {
            let spec = load(&spec, &common)?;
            let rows = regions::relative_throughput(&spec)?;
            let out = derived_path(&spec, &common, "_zeta.csv");
            let recs: Vec<_> = rows.iter().map(|r| r.record()).collect();
            output::write_csv(&out, &ZETA_HEADER, &recs)?;
            output::write_json(
                &with_suffix(&out, ".meta.json"),
                &serde_json::json!({ "spec": spec, "baseline": ZETA_BASELINE_NOTE }),
            )?;
            println!("{}: {} rows", out.display(), rows.len());
            Ok(true)
        }
        Command::UsefulRegion { spec, .. } => {
            let spec = load(&spec, &common)?;
            let rows = regions::usefulness_region(&spec)?;
            let out = derived_path(&spec, &common, "_useful_region.csv");
            let recs: Vec<_> = rows.iter().map(|r| r.record()).collect();
            output::write_csv(&out, &BOUNDARY_HEADER, &recs)?;
            println!("{}: {} rows", out.display(), rows.len());
            Ok(true)
        }
        Command::Verify { .. } => {
            let packets = common.packets.unwrap_or(200_000);
            let cells = verify::verify(packets, common.seed.unwrap_or(1))?;
            let failed: Vec<_> = cells.iter().filter(|c| !c.mismatches.is_empty()).collect();
            let worst = cells.iter().map(|c| c.worst_z).fold(0.0, f64::max);
            for c in &failed {
                for m in &c.mismatches {
                    eprintln!(
                        "{:?} M={} p_b={} snr_db={}: {} analytic {} simulated {} (z = {:.2})",
                        c.config.protocol,
                        c.config.max_retx,
                        c.config.p_b,
                        c.snr_db,
                        m.quantity,
                        m.analytic,
                        m.simulated,
                        m.z()
                    );
                }
            }
            println!(
                "verify: {}/{} cells agree at {} packets (largest |z| = {worst:.2})",
                cells.len() - failed.len(),
                cells.len(),
                packets
            );
            Ok(failed.is_empty())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
