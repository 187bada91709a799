//! Episode orchestration: rollouts with the innate critic in the loop,
//! training, greedy evaluation, Monte-Carlo value estimates, checkpoints.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::approximator::ParameterVector;
use crate::checkpoint::Checkpoint;
use crate::critic::{
    compute_innate_reward, extract_features, team_average_reward, update_internal_state,
    InnateValueProfile, InternalState,
};
use crate::env::{BattleEnv, ScenarioConfig, WorldState, NOOP};
use crate::error::{Error, Result};
use crate::learners::{select_actions, Learner, LearnerConfig, LearnerDims, Networks};
use crate::metrics::{aggregate, write_csv, EpisodeOutcome, MetricsRecord};
use crate::replay::{EpisodeRecord, Frame, ReplayStore, StepRecord};
use crate::seeding::{stream, substream, Stream, StreamRng};

/// Everything a training run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    /// Shared by every ally.
    pub profile: InnateValueProfile<f64>,
    pub learner: LearnerConfig,
    pub total_steps: u64,
    /// Environment steps between greedy evaluations.
    pub eval_period: u64,
    pub eval_episodes: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads for evaluation; results do not depend on it.
    pub eval_threads: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.learner.validate()?;
        self.profile
            .validate(self.learner.algorithm)
            .map_err(|e| Error::Config(format!("critic: {e}")))?;
        if self.eval_period == 0 {
            return Err(Error::Config("run.eval_period: must be positive".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("run.eval_episodes: must be at least 1".into()));
        }
        if self.eval_threads == 0 {
            return Err(Error::Config("run.eval_threads: must be at least 1".into()));
        }
        Ok(())
    }

    /// `{algorithm}_{personality}_seed{seed}`, the stem of every output file.
    pub fn file_stem(&self) -> String {
        format!(
            "{}_{}_seed{}",
            self.learner.algorithm, self.profile.personality, self.seed
        )
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.output_dir.join(format!("{}.csv", self.file_stem()))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.output_dir.join(format!("{}.ckpt", self.file_stem()))
    }

    pub fn profiles(&self) -> Vec<InnateValueProfile<f64>> {
        vec![self.profile; self.scenario.n_allies()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// Evaluations in step order.
    pub records: Vec<MetricsRecord>,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    /// Environment steps actually taken (episodes are never cut short).
    pub final_step: u64,
    pub final_epsilon: f64,
    pub learner_updates: u64,
    pub duration: Duration,
}

/// Learner widths for a scenario: the agent input is the observation
/// followed by a one-hot of the agent's previous action.
pub fn learner_dims(scenario: &ScenarioConfig) -> LearnerDims {
    LearnerDims {
        n_agents: scenario.n_allies(),
        obs_dim: scenario.obs_dim() + scenario.n_actions(),
        n_actions: scenario.n_actions(),
        state_dim: scenario.state_dim(),
    }
}

/// A finished episode with the state it ended in.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub episode: EpisodeRecord<f64>,
    pub final_state: WorldState,
}

impl Rollout {
    /// Undiscounted innate return of every agent.
    pub fn agent_returns(&self) -> Vec<f64> {
        let n = self.episode.n_agents();
        let mut out = vec![0.0; n];
        for step in self.episode.steps() {
            for (acc, r) in out.iter_mut().zip(&step.rewards) {
                *acc += r;
            }
        }
        out
    }

    pub fn outcome(&self) -> EpisodeOutcome {
        let returns = self.agent_returns();
        EpisodeOutcome {
            outcome: self.final_state.outcome,
            dead_allies: self.final_state.dead_allies(),
            dead_enemies: self.final_state.dead_enemies(),
            innate_return: returns.iter().sum::<f64>() / returns.len() as f64,
        }
    }
}

fn frame(
    env: &BattleEnv,
    state: &WorldState,
    internal: &[InternalState<f64>],
    last_actions: &[Option<usize>],
) -> Arc<Frame<f64>> {
    let n_actions = env.config().n_actions();
    let n = state.ally_units.len();
    let mut observations = Vec::with_capacity(n);
    let mut masks = Vec::with_capacity(n);
    for i in 0..n {
        let mut obs = env.observe(state, i, &internal[i]);
        let base = obs.len();
        obs.resize(base + n_actions, 0.0);
        if let Some(a) = last_actions[i] {
            obs[base + a] = 1.0;
        }
        observations.push(obs);
        masks.push(env.available_actions(state, i));
    }
    Arc::new(Frame {
        observations,
        global_state: env.global_state(state),
        masks,
        alive: state.ally_units.iter().map(|u| u.alive).collect(),
    })
}

/// Plays one episode from a fresh reset.
///
/// Every per-agent reward comes from the critic: the step's events are
/// turned into need features, weighted by that agent's profile, and the
/// features also advance the agent's internal state, which is part of its
/// next observation.
pub fn rollout_episode<R1, R2>(
    env: &BattleEnv,
    agent_params: &ParameterVector<f64>,
    profiles: &[InnateValueProfile<f64>],
    epsilon: f64,
    reset_rng: &mut R1,
    explore_rng: &mut R2,
) -> Result<Rollout>
where
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    let n = env.config().n_allies();
    if profiles.len() != n {
        return Err(Error::ShapeMismatch {
            what: "critic profile count",
            expected: n,
            got: profiles.len(),
        });
    }
    let mut state = env.reset(reset_rng);
    let mut internal = vec![InternalState::new(); n];
    let mut last_actions = vec![None; n];
    let mut current = frame(env, &state, &internal, &last_actions);
    let mut steps = Vec::new();
    loop {
        let actions = select_actions(
            agent_params,
            &current.observations,
            &current.masks,
            epsilon,
            explore_rng,
        )?;
        let (next_state, events) = env.step(&state, &actions)?;
        let mut rewards = Vec::with_capacity(n);
        for i in 0..n {
            let features = extract_features(&events, i)?;
            rewards.push(compute_innate_reward(&profiles[i], &features)?);
            let (shield, hp) = env.ally_fractions(&next_state, i);
            internal[i] = update_internal_state(&internal[i], &features, shield, hp)?;
            last_actions[i] = Some(actions[i]).filter(|&a| a != NOOP);
        }
        let team_reward = team_average_reward(&rewards)?;
        let terminal = next_state.outcome.is_terminal();
        let next = frame(env, &next_state, &internal, &last_actions);
        steps.push(StepRecord {
            frame: current,
            next: Arc::clone(&next),
            actions,
            rewards,
            team_reward,
            terminal,
        });
        current = next;
        state = next_state;
        if terminal {
            break;
        }
    }
    let outcome = state.outcome;
    Ok(Rollout {
        episode: EpisodeRecord::new(steps, outcome)?,
        final_state: state,
    })
}

/// Greedy evaluation over `n_episodes` fresh battles.
///
/// Episode `k` resets from its own substream of the evaluation stream, so
/// the record is the same for any `threads` and any scheduling.
pub fn evaluate(
    env: &BattleEnv,
    agent_params: &ParameterVector<f64>,
    profiles: &[InnateValueProfile<f64>],
    n_episodes: usize,
    seed: u64,
    step: u64,
    threads: usize,
) -> Result<MetricsRecord> {
    if n_episodes == 0 {
        return Err(Error::InvalidInput("evaluation needs at least one episode".into()));
    }
    let run = |k: usize| -> Result<EpisodeOutcome> {
        let mut rng = substream(seed, Stream::Eval, k as u64 + 1);
        let mut unused = rand::rngs::mock::StepRng::new(0, 0);
        Ok(rollout_episode(env, agent_params, profiles, 0.0, &mut rng, &mut unused)?.outcome())
    };
    let threads = threads.clamp(1, n_episodes);
    let outcomes: Vec<EpisodeOutcome> = if threads == 1 {
        (0..n_episodes).map(run).collect::<Result<_>>()?
    } else {
        std::thread::scope(|scope| {
            let workers: Vec<_> = (0..threads)
                .map(|w| {
                    let run = &run;
                    scope.spawn(move || {
                        (w..n_episodes)
                            .step_by(threads)
                            .map(run)
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            let mut all = Vec::with_capacity(n_episodes);
            for worker in workers {
                all.extend(worker.join().expect("evaluation worker panicked")?);
            }
            Ok::<_, Error>(all)
        })?
    };
    aggregate(step, &outcomes)
}

/// `sum_t gamma^t rewards[t]`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, &r| r + gamma * acc)
}

/// Per-agent mean discounted innate return of the greedy joint policy over
/// `n_rollouts` battles, each reset from its own substream of `seed`.
pub fn monte_carlo_value(
    env: &BattleEnv,
    agent_params: &ParameterVector<f64>,
    profiles: &[InnateValueProfile<f64>],
    gamma: f64,
    n_rollouts: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_rollouts == 0 {
        return Err(Error::InvalidInput("need at least one rollout".into()));
    }
    let n = env.config().n_allies();
    let mut totals = vec![0.0; n];
    for k in 0..n_rollouts {
        let mut rng = substream(seed, Stream::Rollout, k as u64 + 1);
        let mut unused = rand::rngs::mock::StepRng::new(0, 0);
        let rollout = rollout_episode(env, agent_params, profiles, 0.0, &mut rng, &mut unused)?;
        for (i, total) in totals.iter_mut().enumerate() {
            let rewards: Vec<f64> = rollout.episode.steps().iter().map(|s| s.rewards[i]).collect();
            *total += discounted_return(&rewards, gamma);
        }
    }
    Ok(totals.into_iter().map(|t| t / n_rollouts as f64).collect())
}

/// Checkpoint of a learner's networks and optimizer after `step` env steps.
pub fn learner_checkpoint(learner: &Learner<f64>, step: u64, tag: &str) -> Checkpoint<f64> {
    Checkpoint {
        step,
        tag: tag.to_string(),
        networks: learner
            .networks()
            .parts()
            .into_iter()
            .map(|(name, p)| (name.to_string(), p.clone()))
            .collect(),
        optimizer: Some(learner.optimizer().clone()),
    }
}

pub fn save_checkpoint(learner: &Learner<f64>, step: u64, tag: &str, path: &Path) -> Result<()> {
    learner_checkpoint(learner, step, tag).save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint<f64>> {
    Checkpoint::load(path)
}

/// Rebuilds a learner from a checkpoint; the widths must match `config`.
pub fn restore_learner(
    config: &LearnerConfig,
    dims: LearnerDims,
    checkpoint: Checkpoint<f64>,
) -> Result<Learner<f64>> {
    let networks = Networks::from_parts(config, &dims, checkpoint.networks)?;
    Learner::from_parts(
        config.clone(),
        dims,
        networks,
        checkpoint.optimizer.clone(),
        checkpoint.optimizer.map_or(0, |o| o.step),
    )
}

/// Runs training with the default no-op progress callback.
pub fn train(config: &RunConfig) -> Result<RunSummary> {
    train_with(config, |_| {})
}

/// Trains, evaluating every `eval_period` environment steps and once at the
/// end, then writes the metrics CSV and final checkpoint. `on_record` sees
/// each evaluation as it is made.
pub fn train_with<F>(config: &RunConfig, mut on_record: F) -> Result<RunSummary>
where
    F: FnMut(&MetricsRecord),
{
    config.validate()?;
    let started = Instant::now();
    let env = BattleEnv::new(config.scenario.clone())?;
    let dims = learner_dims(&config.scenario);
    let profiles = config.profiles();
    let seed = config.seed;

    let mut init_rng = stream(seed, Stream::Init);
    let mut env_rng: StreamRng = stream(seed, Stream::Env);
    let mut explore_rng = stream(seed, Stream::Explore);
    let mut sample_rng = stream(seed, Stream::Sample);

    let mut learner = Learner::new(config.learner.clone(), dims, &mut init_rng)?;
    let mut store = ReplayStore::new(config.learner.buffer_capacity)?
        .with_episode_limit(config.scenario.episode_limit as usize);
    let schedule = config.learner.epsilon_schedule();

    let mut records = Vec::new();
    let mut evaluate_at = |step: u64, learner: &Learner<f64>| -> Result<()> {
        let record = evaluate(
            &env,
            learner.agent_params(),
            &profiles,
            config.eval_episodes,
            seed,
            step,
            config.eval_threads,
        )?;
        on_record(&record);
        records.push(record);
        Ok(())
    };

    let mut t = 0u64;
    let mut next_eval = 0u64;
    while t < config.total_steps {
        if t >= next_eval {
            evaluate_at(t, &learner)?;
            while next_eval <= t {
                next_eval += config.eval_period;
            }
        }
        let epsilon = schedule.value(t);
        let rollout = rollout_episode(
            &env,
            learner.agent_params(),
            &profiles,
            epsilon,
            &mut env_rng,
            &mut explore_rng,
        )?;
        t += rollout.episode.len() as u64;
        store.push_episode(rollout.episode)?;
        if store.len() >= config.learner.batch_size {
            let batch = store.sample_batch(config.learner.batch_size, &mut sample_rng)?;
            learner.update(&batch)?;
        }
    }
    if config.total_steps > 0 {
        evaluate_at(t, &learner)?;
    }

    fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
    let metrics_path = config.metrics_path();
    let checkpoint_path = config.checkpoint_path();
    write_csv(&records, &metrics_path)?;
    let tag = format!(
        "{} {} seed {}",
        config.learner.algorithm, config.profile.personality, seed
    );
    save_checkpoint(&learner, t, &tag, &checkpoint_path)?;
    Ok(RunSummary {
        records,
        metrics_path,
        checkpoint_path,
        final_step: t,
        final_epsilon: schedule.value(t),
        learner_updates: learner.updates(),
        duration: started.elapsed(),
    })
}
