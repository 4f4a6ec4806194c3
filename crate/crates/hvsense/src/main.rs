use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hvsense::bench::{run_sweep, Frontend, Solver, SweepSpec, TrialOptions};
use hvsense::config::load_config;
use hvsense::report::write_sweep;
use hvsense::BenchError;
use hvsense_core::channel::ScenarioConfig;

#[derive(Parser)]
#[command(name = "hvsense", version, about = "Hidden-vehicle sensing Monte Carlo bench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write per-trial rows plus a summary CSV.
    Run {
        /// JSON scenario; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// `var=v1,v2,...` with var one of paths, distance, tx_power,
        /// multibounce_fraction, Q.
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, value_enum, default_value_t = Solver::Single2d)]
        solver: Solver,
        /// Master seed; defaults to the scenario's `rng_seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Frontend::Parametric)]
        frontend: Frontend,
        /// Pool Q transmissions through random directional beams.
        #[arg(long, value_name = "Q")]
        beam: Option<usize>,
        /// Pool Q isotropic transmissions.
        #[arg(long, value_name = "Q", conflicts_with = "beam")]
        slots: Option<usize>,
    },
}

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_ALL_INFEASIBLE: u8 = 3;

fn exit_code(e: &BenchError) -> u8 {
    match e {
        BenchError::Config(_) | BenchError::Sweep(_) => EXIT_CONFIG,
        BenchError::Io { .. } | BenchError::Csv(_) => EXIT_IO,
    }
}

fn main() -> ExitCode {
    let Command::Run {
        config,
        sweep,
        trials,
        solver,
        seed,
        out,
        frontend,
        beam,
        slots,
    } = Cli::parse().command;

    let result = (|| {
        let cfg = match &config {
            Some(p) => load_config(p)?,
            None => ScenarioConfig::default(),
        };
        let spec = match &sweep {
            Some(s) => SweepSpec::parse(s, trials)?,
            None => SweepSpec::single(trials),
        };
        let mut opts = TrialOptions::new(solver);
        opts.frontend = frontend;
        if let Some(q) = beam.or(slots) {
            opts.slots = q;
            opts.beam = beam.is_some();
        }
        let output = run_sweep(&cfg, &opts, &spec, seed.unwrap_or(cfg.rng_seed))?;
        let summary = write_sweep(&out, &output)?;
        Ok::<_, BenchError>((output, summary))
    })();

    match result {
        Ok((output, summary)) => {
            for s in &output.summary {
                let value = s
                    .sweep_value
                    .map(|v| format!("{}={v} ", s.sweep_var))
                    .unwrap_or_default();
                let mean = s
                    .mean_positioning_error
                    .map(|m| format!("{m:.4e} m²"))
                    .unwrap_or_else(|| "-".into());
                println!("{value}success {:.3}  positioning {mean}", s.success_rate);
            }
            eprintln!("wrote {} and {}", out.display(), summary.display());
            if output.all_failed() {
                eprintln!("every trial was infeasible");
                ExitCode::from(EXIT_ALL_INFEASIBLE)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
