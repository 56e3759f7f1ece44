use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{derive_seed, write_rows, HarnessError, RandomPolicy};
use crate::dqn::{DqnAgent, ModelPolicy};
use crate::game::{play_episode_with_opening, MatchResult, PlayerRole, Policy};
use crate::games::{make_environment, Connect4State, ScriptedDuelist, TicTacToeState};
use crate::minimax::{MinimaxPolicy, SearchDepth};
use crate::neural::ParameterSet;

/// A tournament entrant.
#[derive(Debug, Clone)]
pub enum Participant {
    Agent { id: String, params: ParameterSet, environment: Option<String> },
    Minimax(SearchDepth),
    Random,
    Scripted,
}

impl Participant {
    /// `minimax:<depth>`, `random`, `scripted`, or a checkpoint path.
    pub fn parse(spec: &str) -> Result<Self, HarnessError> {
        if let Some(depth) = spec.strip_prefix("minimax:") {
            return depth
                .parse()
                .map(Participant::Minimax)
                .map_err(HarnessError::ConfigInvalid);
        }
        match spec {
            "random" => Ok(Participant::Random),
            "scripted" => Ok(Participant::Scripted),
            path => Self::from_checkpoint(Path::new(path)),
        }
    }

    pub fn from_checkpoint(path: &Path) -> Result<Self, HarnessError> {
        let agent = DqnAgent::load(path)?;
        Ok(Participant::Agent {
            id: path.display().to_string(),
            environment: agent.metadata.get("environment").cloned(),
            params: agent.online().clone(),
        })
    }

    pub fn from_params(id: impl Into<String>, params: ParameterSet) -> Self {
        Participant::Agent {
            id: id.into(),
            params,
            environment: None,
        }
    }

    pub fn id(&self) -> String {
        match self {
            Participant::Agent { id, .. } => id.clone(),
            Participant::Minimax(SearchDepth::Unlimited) => "minimax:unlimited".into(),
            Participant::Minimax(SearchDepth::Limited(d)) => format!("minimax:{d}"),
            Participant::Random => "random".into(),
            Participant::Scripted => "scripted".into(),
        }
    }

    fn check(&self, env_id: &str, obs_dim: usize, actions: usize) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::IncompatibleCheckpoints(m));
        match self {
            Participant::Agent { id, params, environment } => {
                if let Some(e) = environment {
                    if e != env_id {
                        return bad(format!("{id} was trained on {e}, tournament is {env_id}"));
                    }
                }
                let spec = params.spec();
                if spec.input_dim != obs_dim || spec.output_dim != actions {
                    return bad(format!(
                        "{id} maps {}→{}, {env_id} needs {obs_dim}→{actions}",
                        spec.input_dim, spec.output_dim
                    ));
                }
                Ok(())
            }
            Participant::Minimax(_) if env_id == "duelsim" => bad("minimax cannot play duelsim".into()),
            Participant::Scripted if env_id != "duelsim" => bad(format!("scripted duelist cannot play {env_id}")),
            _ => Ok(()),
        }
    }

    fn policy(&self, env_id: &str, seed: u64) -> Box<dyn Policy> {
        match self {
            Participant::Agent { params, .. } => Box::new(ModelPolicy::from_params(params.clone(), 0.0, seed)),
            Participant::Minimax(depth) if env_id == "tictactoe" => {
                Box::new(MinimaxPolicy::<TicTacToeState>::new(*depth, seed))
            }
            Participant::Minimax(depth) => Box::new(MinimaxPolicy::<Connect4State>::new(*depth, seed)),
            Participant::Random => Box::new(RandomPolicy::new(seed)),
            Participant::Scripted => Box::new(ScriptedDuelist::new(seed)),
        }
    }
}

/// Random plies played before the entrants take over.
pub fn opening_plies(env_id: &str) -> u32 {
    match env_id {
        "tictactoe" => 1,
        _ => 2,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentResult {
    pub first: String,
    pub second: String,
    pub games: u64,
    pub wins: u64,
    pub losses: u64,
    pub draws: u64,
    /// Wins of `first` over all games.
    pub win_rate: f64,
    /// `(wins + draws / 2) / games`.
    pub score: f64,
}

/// Round-robin over all unordered pairs. Games come in seat-swapped pairs
/// that share an opening, so each entrant plays both seats equally often.
pub fn run_tournament(
    env_id: &str,
    participants: &[Participant],
    games_per_pair: u64,
    seed: u64,
) -> Result<Vec<TournamentResult>, HarnessError> {
    if participants.len() < 2 {
        return Err(HarnessError::IncompatibleCheckpoints("need at least two participants".into()));
    }
    if games_per_pair == 0 {
        return Err(HarnessError::ConfigInvalid("games per pair must be positive".into()));
    }
    let mut env = make_environment(env_id)?;
    for p in participants {
        p.check(env_id, env.observation_dim(), env.num_actions())?;
    }
    let plies = opening_plies(env_id);
    let mut results = Vec::new();
    let mut pair_index = 0u64;
    for i in 0..participants.len() {
        for j in i + 1..participants.len() {
            let pair_seed = derive_seed(seed, pair_index);
            pair_index += 1;
            let mut a = participants[i].policy(env_id, derive_seed(pair_seed, 1));
            let mut b = participants[j].policy(env_id, derive_seed(pair_seed, 2));
            let (mut wins, mut losses, mut draws) = (0, 0, 0);
            for g in 0..games_per_pair {
                let game_seed = derive_seed(pair_seed, 10 + g / 2);
                let a_role = if g % 2 == 0 { PlayerRole::First } else { PlayerRole::Second };
                let trace = if a_role == PlayerRole::First {
                    play_episode_with_opening(env.as_mut(), game_seed, g, [a.as_mut(), b.as_mut()], plies)?
                } else {
                    play_episode_with_opening(env.as_mut(), game_seed, g, [b.as_mut(), a.as_mut()], plies)?
                };
                match trace.outcome.expect("finished game").result_for(a_role) {
                    MatchResult::Win => wins += 1,
                    MatchResult::Loss => losses += 1,
                    MatchResult::Draw => draws += 1,
                }
            }
            let n = games_per_pair as f64;
            results.push(TournamentResult {
                first: participants[i].id(),
                second: participants[j].id(),
                games: games_per_pair,
                wins,
                losses,
                draws,
                win_rate: wins as f64 / n,
                score: (wins as f64 + 0.5 * draws as f64) / n,
            });
        }
    }
    Ok(results)
}

pub fn write_tournament(path: &Path, results: &[TournamentResult]) -> Result<PathBuf, HarnessError> {
    write_rows(path, results)?;
    Ok(path.to_path_buf())
}
