//! Config-driven experiment runner, evaluation, tournaments and curve
//! aggregation.

mod config;
mod curves;
mod league_run;
mod tournament;
mod train;
pub mod verify;

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    AgentSection, BudgetSection, DepthValue, ExperimentConfig, LeagueSection, OpponentKind, OpponentSection,
    RewardSection,
};
pub use curves::{emit_curves, read_metrics, CurvePoint};
pub use league_run::{run_league_seed, LeagueSummary};
pub use tournament::{run_tournament, write_tournament, Participant, TournamentResult};
pub use train::{evaluate_agent, run_single_seed, EvalSummary};

use crate::dqn::DqnError;
use crate::exploiter::ExploiterError;
use crate::game::{Action, GameError, PlayerRole, Policy};
use crate::league::LeagueError;
use crate::minimax::MinimaxError;
use crate::neural::NeuralError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("unknown environment `{0}`")]
    EnvironmentUnknown(String),
    #[error("incompatible checkpoints: {0}")]
    IncompatibleCheckpoints(String),
    #[error("misaligned evaluation grids: {0}")]
    MisalignedGrids(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Game(GameError),
    #[error(transparent)]
    Dqn(#[from] DqnError),
    #[error(transparent)]
    Exploiter(#[from] ExploiterError),
    #[error(transparent)]
    League(#[from] LeagueError),
    #[error(transparent)]
    Minimax(#[from] MinimaxError),
}

impl HarnessError {
    /// Short stable identifier for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::ConfigInvalid(_) => "ConfigInvalid",
            HarnessError::EnvironmentUnknown(_) => "EnvironmentUnknown",
            HarnessError::IncompatibleCheckpoints(_) => "IncompatibleCheckpoints",
            HarnessError::MisalignedGrids(_) => "MisalignedGrids",
            HarnessError::Io(_) => "Io",
            HarnessError::Game(_) => "Game",
            HarnessError::Dqn(_) => "Dqn",
            HarnessError::Exploiter(_) => "Exploiter",
            HarnessError::League(_) => "League",
            HarnessError::Minimax(_) => "Minimax",
        }
    }
}

impl From<GameError> for HarnessError {
    fn from(e: GameError) -> Self {
        match e {
            GameError::UnknownEnvironment(id) => HarnessError::EnvironmentUnknown(id),
            other => HarnessError::Game(other),
        }
    }
}

impl From<NeuralError> for HarnessError {
    fn from(e: NeuralError) -> Self {
        HarnessError::Dqn(e.into())
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

/// One row of a per-seed metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub config: String,
    pub seed: u64,
    pub env_steps: u64,
    pub episodes: u64,
    /// Mean outcome (+1 win, 0 draw, -1 loss) over greedy evaluation games.
    pub eval_score: f64,
    pub win_rate: f64,
    pub draw_rate: f64,
    /// Converged exploiter generations (league runs; 0 otherwise).
    pub generation: u64,
    /// Checkpoint written at this row, relative to the output directory.
    pub checkpoint: String,
}

/// Per-seed timing, kept apart so the metrics file stays reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub seed: u64,
    pub episodes: u64,
    pub wall_seconds: f64,
}

pub fn metrics_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("metrics_seed{seed}.csv"))
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Result of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedReport {
    pub seed: u64,
    pub metrics: PathBuf,
    pub rows: Vec<MetricRow>,
    pub league: Option<LeagueSummary>,
}

/// Runs every seed of `config` and writes per-seed metrics, timing sidecars
/// and checkpoints under `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<SeedReport>, HarnessError> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir)?;
    std::fs::write(config.output_dir.join("config.toml"), config.to_toml())?;
    let workers = config.workers();
    let mut reports: Vec<Option<Result<SeedReport, HarnessError>>> = vec![None; config.seeds.len()];
    for chunk_start in (0..config.seeds.len()).step_by(workers) {
        let chunk = &config.seeds[chunk_start..(chunk_start + workers).min(config.seeds.len())];
        let results: Vec<Result<SeedReport, HarnessError>> = if chunk.len() == 1 {
            vec![run_seed(config, chunk[0])]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = chunk.iter().map(|&s| scope.spawn(move || run_seed(config, s))).collect();
                handles.into_iter().map(|h| h.join().expect("seed worker panicked")).collect()
            })
        };
        for (i, r) in results.into_iter().enumerate() {
            reports[chunk_start + i] = Some(r);
        }
    }
    reports.into_iter().map(|r| r.expect("every seed ran")).collect()
}

fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedReport, HarnessError> {
    match config.opponent.kind {
        OpponentKind::League => run_league_seed(config, seed),
        _ => run_single_seed(config, seed),
    }
}

/// Uniformly random legal moves.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    base_seed: u64,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            base_seed: seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _role: PlayerRole, _observation: &[f64], legal: &[bool]) -> Action {
        let moves: Vec<Action> = legal.iter().enumerate().filter_map(|(a, &ok)| ok.then_some(a)).collect();
        moves[self.rng.gen_range(0..moves.len())]
    }

    fn begin_episode(&mut self, episode_seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(self.base_seed ^ episode_seed.rotate_left(17));
    }
}

/// Deterministic 64-bit mix of a seed and a stream index.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
