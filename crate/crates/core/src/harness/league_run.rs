//! DuelSim league: a pretrained main agent trains against the opponent pool
//! while a main exploiter trains against the latest frozen main snapshot.
//! Main and exploiter episodes are interleaved one-for-one on a single thread
//! so that a run is a pure function of its seed.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::train::{evaluate_agent, finish_checkpoints, make_opponent, merge_audit, Budget, Learner};
use super::{derive_seed, metrics_path, write_rows, ExperimentConfig, HarnessError, MetricRow, SeedReport, TimingRow};
use crate::dqn::FrozenModel;
use crate::exploiter::{pair_transitions, transform_batch, AuditLog, BatchAudit, ExploiterRewardConfig, RewardMode};
use crate::game::{play_episode, EpisodeTrace, Environment, MatchResult, PlayerRole, Policy};
use crate::games::make_environment;
use crate::league::{
    advance_generation, sample_opponent, Archetype, ConvergenceMonitor, ExploiterStatus, GenerationState,
    LeagueEffect, LeagueEvent, LeagueJournal, OpponentPool,
};

const SCRIPTED_ID: &str = "scripted";

#[derive(Debug, Clone, PartialEq)]
pub struct LeagueSummary {
    pub converged_exploiters: u64,
    pub main_snapshots: u64,
    pub generation: u64,
    pub pretrain_steps: u64,
    pub pretrain_converged: bool,
    pub league_steps: u64,
    pub journal: PathBuf,
}

#[derive(Clone)]
enum PoolModel {
    Scripted,
    Frozen(FrozenModel),
}

fn seat(episode: u64) -> PlayerRole {
    if episode % 2 == 0 {
        PlayerRole::First
    } else {
        PlayerRole::Second
    }
}

fn play_seated(
    env: &mut dyn Environment,
    seed: u64,
    episode: u64,
    role: PlayerRole,
    me: &mut dyn Policy,
    other: &mut dyn Policy,
) -> Result<EpisodeTrace, HarnessError> {
    Ok(if role == PlayerRole::First {
        play_episode(env, seed, episode, [me, other])?
    } else {
        play_episode(env, seed, episode, [other, me])?
    })
}

fn result_of(trace: &EpisodeTrace, role: PlayerRole) -> MatchResult {
    trace.outcome.expect("finished episode").result_for(role)
}

/// Runs one league seed; main pretraining is not charged to the budget.
pub fn run_league_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedReport, HarnessError> {
    let mut env = make_environment(&config.environment)?;
    let out = &config.output_dir;
    let ckpt_dir = format!("checkpoints/seed{seed}");
    std::fs::create_dir_all(out.join(&ckpt_dir))?;
    let journal_path = out.join(format!("league_journal_seed{seed}.log"));
    let mut journal = LeagueJournal::new(BufWriter::new(File::create(&journal_path)?));
    let mut audit_log = AuditLog::new(File::create(out.join(format!("audit_seed{seed}.csv")))?);
    let lc = &config.league;
    let exploiter_reward = config.reward_config()?;
    let main_reward = ExploiterRewardConfig {
        mode: RewardMode::Vanilla,
        ..exploiter_reward.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 7));

    // Pretraining against the scripted duelist.
    let mut main = Learner::new(config, &main_reward, env.as_ref(), derive_seed(seed, 10))?;
    let mut scripted = make_opponent(config, derive_seed(seed, 11))?;
    let mut pretrain = ConvergenceMonitor::new(lc.threshold, lc.window)?;
    pretrain.register(SCRIPTED_ID);
    let mut pretrain_steps = 0u64;
    let mut pretrain_episodes = 0u64;
    let mut pretrain_converged = false;
    while pretrain_steps < lc.pretrain_max_steps {
        let role = seat(pretrain_episodes);
        let mut policy = main.acting_policy();
        let trace = play_seated(
            env.as_mut(),
            derive_seed(seed, 100_000_000 + pretrain_episodes),
            pretrain_episodes,
            role,
            &mut policy,
            scripted.as_mut(),
        )?;
        pretrain_steps += trace.len_ticks() as u64;
        pretrain_episodes += 1;
        pretrain.record_result(SCRIPTED_ID, result_of(&trace, role))?;
        main.absorb(trace.role(role).to_vec(), &policy)?;
        if pretrain.is_ready(SCRIPTED_ID) && pretrain.exploiter_converged(SCRIPTED_ID)? {
            pretrain_converged = true;
            break;
        }
    }
    journal.line(
        0,
        "pretrained",
        &[
            ("steps", pretrain_steps.to_string()),
            ("episodes", pretrain_episodes.to_string()),
            ("win_rate", format!("{:.3}", pretrain.win_rate(SCRIPTED_ID).unwrap_or(0.0))),
            ("converged", pretrain_converged.to_string()),
        ],
    )?;

    // Initial pool: scripted duelist and the pretrained main.
    let mut pool: OpponentPool<PoolModel> = OpponentPool::new();
    let mut main_monitor = ConvergenceMonitor::new(lc.threshold, lc.window)?;
    pool.insert(SCRIPTED_ID, Archetype::Scripted, PoolModel::Scripted)?;
    main_monitor.register(SCRIPTED_ID);
    let mut snapshot_count = 0u64;
    let main0 = format!("main-{snapshot_count}");
    let mut target = main.agent.freeze(main0.clone());
    std::fs::write(out.join(format!("{ckpt_dir}/{main0}.agent")), main.agent.checkpoint_frozen())?;
    pool.insert(main0.clone(), Archetype::MainAgentSnapshot, PoolModel::Frozen(target.clone()))?;
    main_monitor.register(main0.clone());
    let mut state = GenerationState::new(main0.clone());

    let mut exploiter_index = 0u64;
    let mut exploiter = Learner::new(config, &exploiter_reward, env.as_ref(), derive_seed(seed, 20))?;
    let mut exploiter_monitor = ConvergenceMonitor::new(lc.threshold, lc.window)?;
    exploiter_monitor.register(main0.clone());
    let mut interval_audit = BatchAudit::default();

    let budget = Budget::new(config);
    let mut steps = 0u64;
    let mut main_episodes = 0u64;
    let mut exploiter_episodes = 0u64;
    let mut evals = 0u64;
    let mut rows = Vec::new();
    let mut timing = Vec::new();

    while !budget.exhausted(steps) {
        // Main agent episode against a sampled pool member.
        let (opp_id, opp_model) = {
            let e = sample_opponent(&pool, &mut rng)?;
            (e.id.clone(), e.model.clone())
        };
        let opp_seed = rng.next_u64();
        let mut opp_policy: Box<dyn Policy> = match &opp_model {
            PoolModel::Scripted => make_opponent(config, opp_seed)?,
            PoolModel::Frozen(m) => Box::new(m.policy(lc.opponent_epsilon, opp_seed)),
        };
        let role = seat(main_episodes);
        let mut policy = main.acting_policy();
        let trace = play_seated(
            env.as_mut(),
            derive_seed(seed, 200_000_000 + main_episodes),
            main_episodes,
            role,
            &mut policy,
            opp_policy.as_mut(),
        )?;
        steps += trace.len_ticks() as u64;
        main_episodes += 1;
        main_monitor.record_result(&opp_id, result_of(&trace, role))?;
        main.absorb(trace.role(role).to_vec(), &policy)?;
        let opp_rate = 1.0 - main_monitor.win_rate(&opp_id).unwrap_or(0.5);
        pool.set_win_rate(&opp_id, opp_rate, main_monitor.games(&opp_id) as u64)?;

        let ids = pool.ids();
        if ids.iter().all(|id| main_monitor.is_ready(id)) && main_monitor.main_converged(&ids)? {
            snapshot_count += 1;
            let id = format!("main-{snapshot_count}");
            let frozen = main.agent.freeze(id.clone());
            std::fs::write(out.join(format!("{ckpt_dir}/{id}.agent")), main.agent.checkpoint_frozen())?;
            let event = LeagueEvent::MainConverged { snapshot: id.clone() };
            let (next, effects) = advance_generation(&state, &event)?;
            state = next;
            for effect in effects {
                match effect {
                    LeagueEffect::AddToPool { checkpoint, archetype } => {
                        pool.insert(checkpoint.clone(), archetype, PoolModel::Frozen(frozen.clone()))?;
                        main_monitor.register(checkpoint);
                    }
                    LeagueEffect::ResetExploiter { target: t } => {
                        exploiter_index += 1;
                        exploiter = Learner::new(config, &exploiter_reward, env.as_ref(), derive_seed(seed, 20 + exploiter_index))?;
                        exploiter_monitor.clear();
                        exploiter_monitor.register(t.clone());
                        target = frozen.clone();
                        journal.line(steps, "exploiter_reset", &[("target", t)])?;
                    }
                    LeagueEffect::ExploiterIdle => {}
                }
            }
            journal.event(steps, &event, &state, pool.len())?;
        }

        // Exploiter episode against the frozen target.
        if state.exploiter_status == ExploiterStatus::Training {
            let role = seat(exploiter_episodes);
            let mut policy = exploiter.acting_policy();
            let mut opp_policy = target.policy(lc.opponent_epsilon, rng.next_u64());
            let trace = play_seated(
                env.as_mut(),
                derive_seed(seed, 300_000_000 + exploiter_episodes),
                exploiter_episodes,
                role,
                &mut policy,
                &mut opp_policy,
            )?;
            steps += trace.len_ticks() as u64;
            exploiter_episodes += 1;
            let mut reward = exploiter_reward.clone();
            if config.reward.use_value_floor {
                if let Some(floor) = target.value_floor() {
                    reward = reward.with_value_floor(floor);
                }
            }
            let paired = pair_transitions(trace.role(role), trace.role(role.opponent()))?;
            let (shaped, audit) = transform_batch(&paired, &target, &reward)?;
            merge_audit(&mut interval_audit, &audit);
            exploiter.absorb(shaped, &policy)?;
            let target_id = state.exploiter_target.clone();
            exploiter_monitor.record_result(&target_id, result_of(&trace, role))?;
            if exploiter_monitor.is_ready(&target_id) && exploiter_monitor.exploiter_converged(&target_id)? {
                let id = format!("exploiter-{}", state.converged_exploiters);
                let frozen = exploiter.agent.freeze(id.clone());
                std::fs::write(out.join(format!("{ckpt_dir}/{id}.agent")), exploiter.agent.checkpoint_frozen())?;
                let event = LeagueEvent::ExploiterConverged { checkpoint: id.clone() };
                let (next, effects) = advance_generation(&state, &event)?;
                state = next;
                for effect in effects {
                    match effect {
                        LeagueEffect::AddToPool { checkpoint, archetype } => {
                            pool.insert(checkpoint.clone(), archetype, PoolModel::Frozen(frozen.clone()))?;
                            main_monitor.register(checkpoint);
                        }
                        LeagueEffect::ResetExploiter { target: t } => {
                            exploiter_index += 1;
                            exploiter = Learner::new(config, &exploiter_reward, env.as_ref(), derive_seed(seed, 20 + exploiter_index))?;
                            exploiter_monitor.clear();
                            exploiter_monitor.register(t.clone());
                            target = match &pool.get(&t).expect("target snapshot in pool").model {
                                PoolModel::Frozen(m) => m.clone(),
                                PoolModel::Scripted => unreachable!("targets are main snapshots"),
                            };
                            journal.line(steps, "exploiter_reset", &[("target", t)])?;
                        }
                        LeagueEffect::ExploiterIdle => journal.line(steps, "exploiter_idle", &[])?,
                    }
                }
                journal.event(steps, &event, &state, pool.len())?;
            }
        }

        if main_episodes % config.eval_interval == 0 {
            evals += 1;
            let mut eval_opponent = make_opponent(config, derive_seed(seed, 2_000_000 + evals))?;
            let summary = evaluate_agent(
                env.as_mut(),
                main.agent.online(),
                eval_opponent.as_mut(),
                config.eval_episodes,
                derive_seed(seed, 3_000_000 + evals),
            )?;
            audit_log.record(&interval_audit)?;
            interval_audit = BatchAudit::default();
            let mut checkpoint = String::new();
            if config.checkpoint_every > 0 && evals % config.checkpoint_every == 0 {
                checkpoint = format!("{ckpt_dir}/ep{main_episodes}.agent");
                main.agent.save(&out.join(&checkpoint))?;
            } else {
                main.agent.save(&out.join(format!("{ckpt_dir}/latest.agent")))?;
            }
            rows.push(MetricRow {
                config: config.name.clone(),
                seed,
                env_steps: steps,
                episodes: main_episodes,
                eval_score: summary.score,
                win_rate: summary.win_rate,
                draw_rate: summary.draw_rate,
                generation: state.converged_exploiters,
                checkpoint,
            });
            timing.push(TimingRow {
                seed,
                episodes: main_episodes,
                wall_seconds: budget.elapsed(),
            });
        }
    }
    journal.line(
        steps,
        "budget_exhausted",
        &[
            ("converged_exploiters", state.converged_exploiters.to_string()),
            ("main_snapshots", state.main_snapshots.to_string()),
            ("generation", state.generation.to_string()),
            ("exploiter_episodes", exploiter_episodes.to_string()),
            ("main_episodes", main_episodes.to_string()),
        ],
    )?;
    audit_log.flush()?;
    finish_checkpoints(out, &ckpt_dir, &mut rows)?;
    main.agent.save(&out.join(format!("{ckpt_dir}/final.agent")))?;
    let metrics = metrics_path(out, seed);
    write_rows(&metrics, &rows)?;
    write_rows(&out.join(format!("timing_seed{seed}.csv")), &timing)?;
    journal.into_inner().into_inner().map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(SeedReport {
        seed,
        metrics,
        rows,
        league: Some(LeagueSummary {
            converged_exploiters: state.converged_exploiters,
            main_snapshots: state.main_snapshots,
            generation: state.generation,
            pretrain_steps,
            pretrain_converged,
            league_steps: steps,
            journal: journal_path,
        }),
    })
}
