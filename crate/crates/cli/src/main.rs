use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use minimax_exploiter::harness::{
    emit_curves, run_experiment, run_tournament, verify, write_tournament, ExperimentConfig, HarnessError,
    Participant,
};

#[derive(Parser)]
#[command(name = "mmx", version, about = "Minimax Exploiter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment config.
    Train {
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Override the config's seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Round-robin between checkpoints and built-in players
    /// (`minimax:<depth>`, `random`, `scripted`).
    Tournament {
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 100)]
        games: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(required = true, num_args = 2..)]
        participants: Vec<String>,
    },
    /// Aggregate per-seed metrics files into mean / min / max curves.
    Curves {
        #[arg(long)]
        out: PathBuf,
        /// Files or glob patterns.
        #[arg(required = true)]
        metrics: Vec<String>,
    },
    /// Run the invariant and oracle checks.
    Verify {
        /// Fraction of the full sample sizes.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

struct Failure {
    kind: &'static str,
    message: String,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", serde_json::json!({ "error": f.kind, "message": f.message }));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train { config, output_dir, seeds } => train(&config, output_dir, seeds),
        Command::Tournament { env, games, out, seed, participants } => {
            let entrants = participants
                .iter()
                .map(|p| Participant::parse(p))
                .collect::<Result<Vec<_>, _>>()?;
            let results = run_tournament(&env, &entrants, games, seed)?;
            write_tournament(&out, &results)?;
            println!("first,second,games,wins,losses,draws,score");
            for r in &results {
                println!("{},{},{},{},{},{},{:.4}", r.first, r.second, r.games, r.wins, r.losses, r.draws, r.score);
            }
            Ok(())
        }
        Command::Curves { out, metrics } => {
            let files = expand(&metrics)?;
            let points = emit_curves(&files, Some(&out))?;
            println!("wrote {} points to {}", points.len(), out.display());
            Ok(())
        }
        Command::Verify { scale, seed } => {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(HarnessError::ConfigInvalid("--scale must be positive".into()).into());
            }
            let reports = verify::run_all(scale, seed);
            let mut failed = Vec::new();
            for r in &reports {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                if !r.passed {
                    failed.push(r.name);
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure {
                    kind: "VerifyFailed",
                    message: format!("failed checks: {}", failed.join(", ")),
                })
            }
        }
    }
}

fn train(path: &Path, output_dir: Option<PathBuf>, seeds: Option<Vec<u64>>) -> Result<(), Failure> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(dir) = output_dir {
        config.output_dir = dir;
    }
    if let Some(s) = seeds {
        config.seeds = s;
    }
    for report in run_experiment(&config)? {
        let last = report.rows.last();
        println!(
            "seed={} episodes={} env_steps={} eval_score={} metrics={}",
            report.seed,
            last.map_or(0, |r| r.episodes),
            last.map_or(0, |r| r.env_steps),
            last.map_or(f64::NAN, |r| r.eval_score),
            report.metrics.display()
        );
        if let Some(league) = &report.league {
            println!(
                "seed={} converged_exploiters={} main_snapshots={} journal={}",
                report.seed,
                league.converged_exploiters,
                league.main_snapshots,
                league.journal.display()
            );
        }
    }
    Ok(())
}

fn expand(patterns: &[String]) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    for p in patterns {
        let matches: Vec<PathBuf> = glob::glob(p)
            .map_err(|e| HarnessError::ConfigInvalid(format!("bad pattern {p}: {e}")))?
            .filter_map(Result::ok)
            .collect();
        if matches.is_empty() {
            return Err(HarnessError::Io(format!("no files match {p}")).into());
        }
        files.extend(matches);
    }
    files.sort();
    files.dedup();
    Ok(files)
}
