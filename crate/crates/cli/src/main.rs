use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use funnel_core::switch::SwitchStrategy;
use funnel_core::terrain::{PolicyKind, TrackMode};
use funnel_switch::commands::{self, Context};
use funnel_switch::config::RunConfig;
use funnel_switch::CliError;

#[derive(Debug, Parser)]
#[command(name = "funnel-switch", version, about = "Train terrain policies and switch estimators for a planar biped, then compare switching strategies")]
struct Cli {
    /// TOML run configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: logical cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate and validate one track.
    GenTrack {
        /// multi, or single:<kind>
        #[arg(long, default_value = "multi")]
        mode: String,
    },
    /// Train one policy through the full curriculum.
    TrainPolicy {
        #[arg(long)]
        kind: PolicyKind,
    },
    /// Collect labelled switch samples (all specialists when --kind is omitted).
    CollectSwitch {
        #[arg(long)]
        kind: Option<PolicyKind>,
    },
    /// Train switch estimators from collected samples.
    TrainEstimator {
        #[arg(long)]
        kind: Option<PolicyKind>,
    },
    /// Build the switch-distance lookup table.
    BuildLookup,
    /// Evaluate one policy on tracks of its own terrain.
    EvalSingle {
        #[arg(long)]
        kind: PolicyKind,
        #[arg(long)]
        trials: Option<usize>,
        /// Write a per-step trace of the first trial.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Compare switching strategies on paired multi-artifact tracks.
    EvalCompare {
        /// Comma-separated or repeated; all five by default.
        #[arg(long, value_delimiter = ',')]
        strategy: Vec<SwitchStrategy>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the numerical self-checks.
    Verify,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--workers: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let ctx = Context::new(cfg);
    let positive = |t: Option<usize>| match t {
        Some(0) => Err(CliError::Usage("--trials must be at least 1".into())),
        t => Ok(t),
    };
    match cli.command {
        Command::GenTrack { mode } => {
            let mode: TrackMode = mode.parse().map_err(|e: funnel_core::Error| CliError::Usage(e.to_string()))?;
            println!("{}", commands::gen_track(&ctx, mode)?);
        }
        Command::TrainPolicy { kind } => {
            let t0 = std::time::Instant::now();
            let p = commands::train_policy_cmd(&ctx, kind, &mut |row| {
                if row.iter % 25 == 0 {
                    eprintln!("[{:>6.0}s] {}", t0.elapsed().as_secs_f64(), row.to_csv());
                }
            })?;
            println!(
                "trained {} policy: {} iterations, curriculum {}",
                kind,
                p.iterations,
                if p.complete { "complete" } else { "incomplete" }
            );
        }
        Command::CollectSwitch { kind } => {
            for ds in commands::collect_switch(&ctx, kind)? {
                println!("{}: {} samples, {} positive", ds.kind, ds.samples.len(), ds.positives());
            }
        }
        Command::TrainEstimator { kind } => print!("{}", commands::train_estimator_cmd(&ctx, kind)?),
        Command::BuildLookup => {
            let table = commands::build_lookup_cmd(&ctx)?;
            for (from, to) in table.pairs.keys() {
                println!("{from} -> {to}: switch at {:.3} m", table.argmax_distance(*from, *to).unwrap_or(0.0));
            }
        }
        Command::EvalSingle { kind, trials, trace } => {
            let r = commands::eval_single(&ctx, kind, positive(trials)?, trace.as_deref())?;
            print!("{}", funnel_core::eval::reports_table(&[r]));
        }
        Command::EvalCompare { strategy, trials, trace } => {
            let strategies = if strategy.is_empty() {
                SwitchStrategy::ALL.to_vec()
            } else {
                strategy
            };
            let reports: Vec<_> = commands::eval_compare(&ctx, &strategies, positive(trials)?, trace.as_deref())?
                .into_iter()
                .map(|(r, _)| r)
                .collect();
            print!("{}", funnel_core::eval::reports_table(&reports));
        }
        Command::Verify => {
            let (checks, text) = commands::verify_cmd(ctx.cfg.seed);
            print!("{text}");
            if checks.iter().any(|c| !c.passed) {
                return Err(CliError::Other("verification failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
