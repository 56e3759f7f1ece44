use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    derive_seed, metrics_path, write_rows, ExperimentConfig, HarnessError, MetricRow, OpponentKind, RandomPolicy,
    SeedReport, TimingRow,
};
use crate::dqn::{DqnAgent, ModelPolicy, ReplayBuffer};
use crate::exploiter::{
    pair_transitions, transform_batch, AuditLog, BatchAudit, ExploiterError, ExploiterRewardConfig,
    MinimaxEvaluator, OpponentEvaluator,
};
use crate::game::{play_episode, Environment, MatchResult, PlayerRole, Policy};
use crate::games::{make_environment, Connect4State, ScriptedDuelist, TicTacToeState};
use crate::minimax::{MinimaxConfig, MinimaxPolicy};
use crate::neural::ParameterSet;

/// Evaluator for modes that never query the opponent.
pub(crate) struct NoEvaluator;

impl OpponentEvaluator for NoEvaluator {
    fn max_q(&self, _: &[f64], _: &[bool]) -> Result<f64, ExploiterError> {
        Err(ExploiterError::Evaluator("opponent has no value function".into()))
    }
}

pub(crate) fn make_opponent(config: &ExperimentConfig, seed: u64) -> Result<Box<dyn Policy + Send>, HarnessError> {
    let depth = config.opponent.search_depth()?;
    Ok(match (config.opponent.kind, config.environment.as_str()) {
        (OpponentKind::Random, _) => Box::new(RandomPolicy::new(seed)),
        (OpponentKind::Minimax, "tictactoe") => Box::new(MinimaxPolicy::<TicTacToeState>::new(depth, seed)),
        (OpponentKind::Minimax, "connect4") => Box::new(MinimaxPolicy::<Connect4State>::new(depth, seed)),
        (OpponentKind::Scripted | OpponentKind::League, "duelsim") => Box::new(match config.opponent.scripted_weights {
            Some(w) => ScriptedDuelist::with_weights(seed, w),
            None => ScriptedDuelist::new(seed),
        }),
        (kind, env) => {
            return Err(HarnessError::ConfigInvalid(format!("opponent {kind:?} is not available for {env}")))
        }
    })
}

fn make_evaluator(config: &ExperimentConfig) -> Result<Box<dyn OpponentEvaluator>, HarnessError> {
    if !config.mode.uses_opponent() {
        return Ok(Box::new(NoEvaluator));
    }
    let mm = MinimaxConfig {
        max_depth: config.opponent.search_depth()?,
        tie_break_seed: 0,
    };
    Ok(match config.environment.as_str() {
        "tictactoe" => Box::new(MinimaxEvaluator::<TicTacToeState>::new(mm)),
        "connect4" => Box::new(MinimaxEvaluator::<Connect4State>::new(mm)),
        other => {
            return Err(HarnessError::ConfigInvalid(format!(
                "no opponent value function available for {other}"
            )))
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub games: u64,
    /// Mean outcome from the agent's side: +1 win, 0 draw, -1 loss.
    pub score: f64,
    pub win_rate: f64,
    pub draw_rate: f64,
}

/// Greedy evaluation with the agent alternating between first and second seat.
pub fn evaluate_agent(
    env: &mut dyn Environment,
    params: &ParameterSet,
    opponent: &mut dyn Policy,
    games: u64,
    seed: u64,
) -> Result<EvalSummary, HarnessError> {
    let mut agent = ModelPolicy::from_params(params.clone(), 0.0, seed);
    let (mut wins, mut draws, mut losses) = (0u64, 0u64, 0u64);
    for g in 0..games {
        let role = if g % 2 == 0 { PlayerRole::First } else { PlayerRole::Second };
        let episode_seed = derive_seed(seed, g);
        let trace = if role == PlayerRole::First {
            play_episode(env, episode_seed, g, [&mut agent, opponent])?
        } else {
            play_episode(env, episode_seed, g, [opponent, &mut agent])?
        };
        match trace.outcome.expect("finished episode").result_for(role) {
            MatchResult::Win => wins += 1,
            MatchResult::Draw => draws += 1,
            MatchResult::Loss => losses += 1,
        }
    }
    let n = games.max(1) as f64;
    Ok(EvalSummary {
        games,
        score: (wins as f64 - losses as f64) / n,
        win_rate: wins as f64 / n,
        draw_rate: draws as f64 / n,
    })
}

pub(crate) fn merge_audit(total: &mut BatchAudit, batch: &BatchAudit) {
    let shaped = total.shaped + batch.shaped;
    if shaped > 0 {
        total.mean_opp_max_q =
            (total.mean_opp_max_q * total.shaped as f64 + batch.mean_opp_max_q * batch.shaped as f64) / shaped as f64;
    }
    let n = total.transitions + batch.transitions;
    if n > 0 {
        total.mean_shaped_reward = (total.mean_shaped_reward * total.transitions as f64
            + batch.mean_shaped_reward * batch.transitions as f64)
            / n as f64;
    }
    total.transitions = n;
    total.shaped = shaped;
    total.terminal_paired += batch.terminal_paired;
    total.bound_violations += batch.bound_violations;
}

pub(crate) struct Budget {
    max_steps: Option<u64>,
    max_seconds: Option<f64>,
    start: Instant,
}

impl Budget {
    pub(crate) fn new(config: &ExperimentConfig) -> Self {
        Self {
            max_steps: config.budget.max_env_steps,
            max_seconds: config.budget.max_wall_seconds,
            start: Instant::now(),
        }
    }

    pub(crate) fn exhausted(&self, env_steps: u64) -> bool {
        self.max_steps.is_some_and(|m| env_steps >= m)
            || self.max_seconds.is_some_and(|m| self.start.elapsed().as_secs_f64() >= m)
    }

    pub(crate) fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

/// Learner plus its replay and bookkeeping, shared with the league runner.
pub(crate) struct Learner {
    pub agent: DqnAgent,
    pub replay: ReplayBuffer,
    pub rng: ChaCha8Rng,
    pending_updates: f64,
    train_every: u64,
}

impl Learner {
    pub(crate) fn new(config: &ExperimentConfig, reward: &ExploiterRewardConfig, env: &dyn Environment, seed: u64) -> Result<Self, HarnessError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = config.agent.spec(env.observation_dim(), env.num_actions());
        let mut dqn = config.agent.dqn_config();
        dqn.discount = reward.learner_discount(dqn.discount);
        let mut agent = DqnAgent::new(spec, dqn, &mut rng)?;
        agent.metadata.insert("environment".into(), config.environment.clone());
        agent.metadata.insert("mode".into(), config.mode.to_string());
        Ok(Self {
            agent,
            replay: ReplayBuffer::new(config.agent.replay_capacity),
            rng,
            pending_updates: 0.0,
            train_every: config.agent.train_every,
        })
    }

    pub(crate) fn acting_policy(&mut self) -> ModelPolicy {
        let seed = self.rng.next_u64();
        ModelPolicy::from_params(self.agent.online().clone(), self.agent.config().epsilon, seed)
    }

    /// Stores the episode's decisions and runs the owed optimizer steps.
    pub(crate) fn absorb(&mut self, transitions: Vec<crate::game::Transition>, policy: &ModelPolicy) -> Result<(), HarnessError> {
        if let Some(v) = policy.value_floor() {
            self.agent.observe_value(v);
        }
        self.pending_updates += transitions.len() as f64 / self.train_every as f64;
        self.replay.extend(transitions);
        let need = self.agent.config().learn_start.max(self.agent.config().batch_size);
        while self.pending_updates >= 1.0 {
            self.pending_updates -= 1.0;
            if self.replay.len() >= need {
                self.agent.learn_step(&self.replay, &mut self.rng)?;
            }
        }
        Ok(())
    }
}

/// Trains one learner against a fixed opponent until the budget runs out.
pub fn run_single_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedReport, HarnessError> {
    let mut env = make_environment(&config.environment)?;
    let reward = config.reward_config()?;
    let evaluator = make_evaluator(config)?;
    let mut opponent = make_opponent(config, derive_seed(seed, 1))?;
    let mut learner = Learner::new(config, &reward, env.as_ref(), seed)?;
    let budget = Budget::new(config);
    let out = &config.output_dir;
    let ckpt_dir = format!("checkpoints/seed{seed}");
    std::fs::create_dir_all(out.join(&ckpt_dir))?;
    let mut audit_log = AuditLog::new(std::fs::File::create(out.join(format!("audit_seed{seed}.csv")))?);
    let mut interval_audit = BatchAudit::default();

    let mut rows = Vec::new();
    let mut timing = Vec::new();
    let mut env_steps = 0u64;
    let mut episodes = 0u64;
    let mut evals = 0u64;
    while !budget.exhausted(env_steps) {
        let role = if episodes % 2 == 0 { PlayerRole::First } else { PlayerRole::Second };
        let mut policy = learner.acting_policy();
        let episode_seed = derive_seed(seed, 1_000_000 + episodes);
        let trace = if role == PlayerRole::First {
            play_episode(env.as_mut(), episode_seed, episodes, [&mut policy, opponent.as_mut()])?
        } else {
            play_episode(env.as_mut(), episode_seed, episodes, [opponent.as_mut(), &mut policy])?
        };
        env_steps += trace.len_ticks() as u64;
        episodes += 1;
        let paired = pair_transitions(trace.role(role), trace.role(role.opponent()))?;
        let (shaped, audit) = transform_batch(&paired, evaluator.as_ref(), &reward)?;
        merge_audit(&mut interval_audit, &audit);
        learner.absorb(shaped, &policy)?;

        if episodes % config.eval_interval == 0 {
            evals += 1;
            let mut eval_opponent = make_opponent(config, derive_seed(seed, 2_000_000 + evals))?;
            let summary = evaluate_agent(
                env.as_mut(),
                learner.agent.online(),
                eval_opponent.as_mut(),
                config.eval_episodes,
                derive_seed(seed, 3_000_000 + evals),
            )?;
            audit_log.record(&interval_audit)?;
            interval_audit = BatchAudit::default();
            let mut checkpoint = String::new();
            if config.checkpoint_every > 0 && evals % config.checkpoint_every == 0 {
                checkpoint = format!("{ckpt_dir}/ep{episodes}.agent");
                learner.agent.save(&out.join(&checkpoint))?;
            } else {
                // Kept so the last row can reference the exact evaluated weights.
                learner.agent.save(&out.join(format!("{ckpt_dir}/latest.agent")))?;
            }
            rows.push(MetricRow {
                config: config.name.clone(),
                seed,
                env_steps,
                episodes,
                eval_score: summary.score,
                win_rate: summary.win_rate,
                draw_rate: summary.draw_rate,
                generation: 0,
                checkpoint,
            });
            timing.push(TimingRow {
                seed,
                episodes,
                wall_seconds: budget.elapsed(),
            });
            if config.budget.stop_score.is_some_and(|s| summary.score >= s) {
                break;
            }
        }
    }
    audit_log.flush()?;
    finish_checkpoints(out, &ckpt_dir, &mut rows)?;
    learner.agent.metadata.insert("episodes".into(), episodes.to_string());
    learner.agent.save(&out.join(format!("{ckpt_dir}/final.agent")))?;
    let metrics = metrics_path(out, seed);
    write_rows(&metrics, &rows)?;
    write_rows(&out.join(format!("timing_seed{seed}.csv")), &timing)?;
    Ok(SeedReport {
        seed,
        metrics,
        rows,
        league: None,
    })
}

/// Gives the last metrics row a permanent checkpoint of the weights it evaluated.
pub(crate) fn finish_checkpoints(out: &std::path::Path, ckpt_dir: &str, rows: &mut [MetricRow]) -> Result<(), HarnessError> {
    let latest = out.join(format!("{ckpt_dir}/latest.agent"));
    if let Some(last) = rows.last_mut() {
        if last.checkpoint.is_empty() {
            last.checkpoint = format!("{ckpt_dir}/ep{}.agent", last.episodes);
            std::fs::rename(&latest, out.join(&last.checkpoint))?;
        }
    }
    if latest.exists() {
        std::fs::remove_file(latest)?;
    }
    Ok(())
}
