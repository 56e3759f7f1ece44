//! Two-archetype league: an append-only opponent pool, win-rate-proportional
//! matchmaking with uniform mixing, sliding-window convergence gates and the
//! main-agent / main-exploiter generation lifecycle.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::Write;

use rand::Rng;
use thiserror::Error;

use crate::game::MatchResult;

/// Probability of ignoring win-rates and sampling uniformly.
pub const UNIFORM_MIX: f64 = 0.1;
pub const DEFAULT_THRESHOLD: f64 = 0.85;
pub const DEFAULT_WINDOW: usize = 200;
/// Sampling weight given to an entry before any games against the main agent.
pub const INITIAL_WIN_RATE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LeagueError {
    #[error("opponent pool is empty")]
    EmptyPool,
    #[error("unknown opponent `{0}`")]
    UnknownOpponent(String),
    #[error("window against `{0}` is not full yet")]
    NotReady(String),
    #[error("event inconsistent with league state: {0}")]
    InconsistentEvent(String),
    #[error("duplicate pool entry `{0}`")]
    DuplicateEntry(String),
    #[error("invalid monitor settings: {0}")]
    InvalidMonitor(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Archetype {
    MainAgentSnapshot,
    ConvergedExploiter,
    Scripted,
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Archetype::MainAgentSnapshot => "main_snapshot",
            Archetype::ConvergedExploiter => "converged_exploiter",
            Archetype::Scripted => "scripted",
        })
    }
}

#[derive(Debug, Clone)]
pub struct OpponentPoolEntry<M> {
    pub id: String,
    pub archetype: Archetype,
    /// This entry's win-rate against the current main agent.
    pub win_rate_vs_main: f64,
    pub games_played: u64,
    pub model: M,
}

/// Append-only pool; models are never replaced once inserted.
#[derive(Debug, Clone)]
pub struct OpponentPool<M> {
    entries: Vec<OpponentPoolEntry<M>>,
}

impl<M> Default for OpponentPool<M> {
    fn default() -> Self {
        Self { entries: Vec::new() }
    }
}

impl<M> OpponentPool<M> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, archetype: Archetype, model: M) -> Result<usize, LeagueError> {
        let id = id.into();
        if self.position(&id).is_some() {
            return Err(LeagueError::DuplicateEntry(id));
        }
        self.entries.push(OpponentPoolEntry {
            id,
            archetype,
            win_rate_vs_main: INITIAL_WIN_RATE,
            games_played: 0,
            model,
        });
        Ok(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[OpponentPoolEntry<M>] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&OpponentPoolEntry<M>> {
        self.position(id).map(|i| &self.entries[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    /// Updates the matchmaking statistics of an entry (never its model).
    pub fn set_win_rate(&mut self, id: &str, win_rate: f64, games_played: u64) -> Result<(), LeagueError> {
        let i = self.position(id).ok_or_else(|| LeagueError::UnknownOpponent(id.to_string()))?;
        self.entries[i].win_rate_vs_main = win_rate.clamp(0.0, 1.0);
        self.entries[i].games_played = games_played;
        Ok(())
    }
}

/// Per-entry selection probabilities: `0.1 / n + 0.9 · w_i / Σw`, with the
/// proportional part uniform when every win-rate is zero.
pub fn sampling_probabilities<M>(pool: &OpponentPool<M>) -> Result<Vec<f64>, LeagueError> {
    let n = pool.len();
    if n == 0 {
        return Err(LeagueError::EmptyPool);
    }
    let total: f64 = pool.entries.iter().map(|e| e.win_rate_vs_main).sum();
    let uniform = 1.0 / n as f64;
    Ok(pool
        .entries
        .iter()
        .map(|e| {
            let proportional = if total > 0.0 { e.win_rate_vs_main / total } else { uniform };
            UNIFORM_MIX * uniform + (1.0 - UNIFORM_MIX) * proportional
        })
        .collect())
}

pub fn sample_opponent<'a, M, R: Rng + ?Sized>(
    pool: &'a OpponentPool<M>,
    rng: &mut R,
) -> Result<&'a OpponentPoolEntry<M>, LeagueError> {
    let n = pool.len();
    if n == 0 {
        return Err(LeagueError::EmptyPool);
    }
    let total: f64 = pool.entries.iter().map(|e| e.win_rate_vs_main).sum();
    if rng.gen::<f64>() < UNIFORM_MIX || total <= 0.0 {
        return Ok(&pool.entries[rng.gen_range(0..n)]);
    }
    let mut x = rng.gen::<f64>() * total;
    for e in &pool.entries {
        if x < e.win_rate_vs_main {
            return Ok(e);
        }
        x -= e.win_rate_vs_main;
    }
    Ok(pool
        .entries
        .iter()
        .rev()
        .find(|e| e.win_rate_vs_main > 0.0)
        .expect("positive total"))
}

/// Sliding-window win counters, one window per opponent.
#[derive(Debug, Clone)]
pub struct ConvergenceMonitor {
    threshold: f64,
    window: usize,
    results: BTreeMap<String, VecDeque<bool>>,
}

impl ConvergenceMonitor {
    pub fn new(threshold: f64, window: usize) -> Result<Self, LeagueError> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(LeagueError::InvalidMonitor(format!("threshold {threshold}")));
        }
        if window == 0 {
            return Err(LeagueError::InvalidMonitor("window must be at least 1".into()));
        }
        Ok(Self {
            threshold,
            window,
            results: BTreeMap::new(),
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn register(&mut self, id: impl Into<String>) {
        self.results.entry(id.into()).or_default();
    }

    /// Drops all counters (used when the tracked learner is reset).
    pub fn clear(&mut self) {
        self.results.clear();
    }

    pub fn record_result(&mut self, id: &str, result: MatchResult) -> Result<(), LeagueError> {
        let window = self.window;
        let w = self
            .results
            .get_mut(id)
            .ok_or_else(|| LeagueError::UnknownOpponent(id.to_string()))?;
        if w.len() == window {
            w.pop_front();
        }
        w.push_back(result == MatchResult::Win);
        Ok(())
    }

    pub fn games(&self, id: &str) -> usize {
        self.results.get(id).map_or(0, VecDeque::len)
    }

    pub fn is_ready(&self, id: &str) -> bool {
        self.games(id) == self.window
    }

    /// Win fraction over whatever the window currently holds.
    pub fn win_rate(&self, id: &str) -> Option<f64> {
        let w = self.results.get(id)?;
        if w.is_empty() {
            return None;
        }
        Some(w.iter().filter(|&&won| won).count() as f64 / w.len() as f64)
    }

    fn full_rate(&self, id: &str) -> Result<f64, LeagueError> {
        let w = self
            .results
            .get(id)
            .ok_or_else(|| LeagueError::UnknownOpponent(id.to_string()))?;
        if w.len() < self.window {
            return Err(LeagueError::NotReady(id.to_string()));
        }
        Ok(w.iter().filter(|&&won| won).count() as f64 / w.len() as f64)
    }

    /// Win-rate against `target` ≥ threshold over a full window.
    pub fn exploiter_converged(&self, target: &str) -> Result<bool, LeagueError> {
        Ok(self.full_rate(target)? >= self.threshold)
    }

    /// Win-rate ≥ threshold against every listed opponent, each over a full
    /// window. Vacuously true for an empty list.
    pub fn main_converged<S: AsRef<str>>(&self, pool_ids: &[S]) -> Result<bool, LeagueError> {
        let mut all = true;
        for id in pool_ids {
            all &= self.full_rate(id.as_ref())? >= self.threshold;
        }
        Ok(all)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExploiterStatus {
    Training,
    /// Converged against the latest main snapshot; waits for a newer one.
    Idle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationState {
    pub generation: u64,
    /// Newest main-agent snapshot in the pool.
    pub latest_main: String,
    /// Main-agent snapshot the exploiter is trained against.
    pub exploiter_target: String,
    pub exploiter_status: ExploiterStatus,
    pub converged_exploiters: u64,
    pub main_snapshots: u64,
}

impl GenerationState {
    pub fn new(initial_main: impl Into<String>) -> Self {
        let id = initial_main.into();
        Self {
            generation: 0,
            latest_main: id.clone(),
            exploiter_target: id,
            exploiter_status: ExploiterStatus::Training,
            converged_exploiters: 0,
            main_snapshots: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LeagueEvent {
    ExploiterConverged { checkpoint: String },
    MainConverged { snapshot: String },
}

/// What the runner must do after an event.
#[derive(Debug, Clone, PartialEq)]
pub enum LeagueEffect {
    AddToPool { checkpoint: String, archetype: Archetype },
    /// Reinitialize the exploiter and train it against `target`.
    ResetExploiter { target: String },
    ExploiterIdle,
}

pub fn advance_generation(
    state: &GenerationState,
    event: &LeagueEvent,
) -> Result<(GenerationState, Vec<LeagueEffect>), LeagueError> {
    let mut next = state.clone();
    let mut effects = Vec::new();
    match event {
        LeagueEvent::ExploiterConverged { checkpoint } => {
            if state.exploiter_status == ExploiterStatus::Idle {
                return Err(LeagueEvent::inconsistent("idle exploiter cannot converge again"));
            }
            effects.push(LeagueEffect::AddToPool {
                checkpoint: checkpoint.clone(),
                archetype: Archetype::ConvergedExploiter,
            });
            next.converged_exploiters += 1;
            if state.latest_main != state.exploiter_target {
                next.generation += 1;
                next.exploiter_target = state.latest_main.clone();
                effects.push(LeagueEffect::ResetExploiter {
                    target: state.latest_main.clone(),
                });
            } else {
                next.exploiter_status = ExploiterStatus::Idle;
                effects.push(LeagueEffect::ExploiterIdle);
            }
        }
        LeagueEvent::MainConverged { snapshot } => {
            if *snapshot == state.latest_main {
                return Err(LeagueEvent::inconsistent("snapshot already in the pool"));
            }
            effects.push(LeagueEffect::AddToPool {
                checkpoint: snapshot.clone(),
                archetype: Archetype::MainAgentSnapshot,
            });
            next.latest_main = snapshot.clone();
            next.main_snapshots += 1;
            if state.exploiter_status == ExploiterStatus::Idle {
                next.generation += 1;
                next.exploiter_target = snapshot.clone();
                next.exploiter_status = ExploiterStatus::Training;
                effects.push(LeagueEffect::ResetExploiter {
                    target: snapshot.clone(),
                });
            }
        }
    }
    Ok((next, effects))
}

impl LeagueEvent {
    fn inconsistent(msg: &str) -> LeagueError {
        LeagueError::InconsistentEvent(msg.to_string())
    }

    pub fn name(&self) -> &'static str {
        match self {
            LeagueEvent::ExploiterConverged { .. } => "exploiter_converged",
            LeagueEvent::MainConverged { .. } => "main_converged",
        }
    }
}

/// Append-only, one line per event. The clock is the league's env-step
/// counter so journals are reproducible.
pub struct LeagueJournal<W: Write> {
    out: W,
}

impl<W: Write> LeagueJournal<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn line(&mut self, env_steps: u64, kind: &str, fields: &[(&str, String)]) -> std::io::Result<()> {
        write!(self.out, "step={env_steps} event={kind}")?;
        for (k, v) in fields {
            write!(self.out, " {k}={v}")?;
        }
        writeln!(self.out)
    }

    pub fn event(&mut self, env_steps: u64, event: &LeagueEvent, state: &GenerationState, pool_size: usize) -> std::io::Result<()> {
        let checkpoint = match event {
            LeagueEvent::ExploiterConverged { checkpoint } => checkpoint,
            LeagueEvent::MainConverged { snapshot } => snapshot,
        };
        self.line(
            env_steps,
            event.name(),
            &[
                ("checkpoint", checkpoint.clone()),
                ("generation", state.generation.to_string()),
                ("target", state.exploiter_target.clone()),
                ("pool_size", pool_size.to_string()),
            ],
        )
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
