//! Episode-granularity experience storage with seeded uniform sampling.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;

use crate::critic::team_average_reward;
use crate::env::Outcome;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// What all agents saw at one tick: network inputs, global state, masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<S> {
    pub observations: Vec<Vec<S>>,
    pub global_state: Vec<S>,
    pub masks: Vec<Vec<bool>>,
    pub alive: Vec<bool>,
}

impl<S> Frame<S> {
    pub fn n_agents(&self) -> usize {
        self.observations.len()
    }
}

/// One joint transition. Consecutive steps share their frames.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<S> {
    pub frame: Arc<Frame<S>>,
    pub next: Arc<Frame<S>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<S>,
    pub team_reward: S,
    pub terminal: bool,
}

impl<S: Scalar> StepRecord<S> {
    fn validate(&self) -> Result<()> {
        let n = self.frame.n_agents();
        let consistent = self.frame.masks.len() == n
            && self.frame.alive.len() == n
            && self.next.n_agents() == n
            && self.next.masks.len() == n
            && self.next.alive.len() == n
            && self.actions.len() == n
            && self.rewards.len() == n;
        if !consistent || n == 0 {
            return Err(Error::InvalidInput(
                "step record has inconsistent agent counts".into(),
            ));
        }
        for (i, (&a, mask)) in self.actions.iter().zip(&self.frame.masks).enumerate() {
            if !mask.get(a).copied().unwrap_or(false) {
                return Err(Error::InvalidInput(format!(
                    "agent {i} recorded unavailable action {a}"
                )));
            }
        }
        let mean = team_average_reward(&self.rewards)?;
        if (mean - self.team_reward).abs() > S::lit(1e-12) {
            return Err(Error::InvalidInput(format!(
                "team reward {} is not the mean of the agent rewards ({mean})",
                self.team_reward
            )));
        }
        Ok(())
    }
}

/// A complete episode; only the last step is terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord<S> {
    steps: Vec<StepRecord<S>>,
    outcome: Outcome,
}

impl<S: Scalar> EpisodeRecord<S> {
    pub fn new(steps: Vec<StepRecord<S>>, outcome: Outcome) -> Result<Self> {
        let ep = Self { steps, outcome };
        ep.validate(None)?;
        Ok(ep)
    }

    pub fn steps(&self) -> &[StepRecord<S>] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn outcome(&self) -> Outcome {
        self.outcome
    }

    pub fn n_agents(&self) -> usize {
        self.steps[0].frame.n_agents()
    }

    /// Checks the record; `episode_limit` additionally bounds the length.
    pub fn validate(&self, episode_limit: Option<usize>) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::InvalidInput("episode has no steps".into()));
        }
        if let Some(limit) = episode_limit {
            if self.steps.len() > limit {
                return Err(Error::InvalidInput(format!(
                    "episode length {} exceeds limit {limit}",
                    self.steps.len()
                )));
            }
        }
        let last = self.steps.len() - 1;
        let n = self.steps[0].frame.n_agents();
        for (t, step) in self.steps.iter().enumerate() {
            step.validate()?;
            if step.frame.n_agents() != n {
                return Err(Error::InvalidInput(format!(
                    "step {t} has {} agents, episode has {n}",
                    step.frame.n_agents()
                )));
            }
            if step.terminal != (t == last) {
                return Err(Error::InvalidInput(format!(
                    "terminal flag at step {t} of {} is {}",
                    self.steps.len(),
                    step.terminal
                )));
            }
        }
        Ok(())
    }
}

/// Ring of episodes with strictly oldest-first eviction.
#[derive(Debug, Clone)]
pub struct ReplayStore<S> {
    episodes: VecDeque<Arc<EpisodeRecord<S>>>,
    capacity: usize,
    inserted: u64,
    episode_limit: Option<usize>,
}

impl<S: Scalar> ReplayStore<S> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            episodes: VecDeque::with_capacity(capacity.min(1024)),
            capacity,
            inserted: 0,
            episode_limit: None,
        })
    }

    /// Rejects episodes longer than `limit` on insertion.
    pub fn with_episode_limit(mut self, limit: usize) -> Self {
        self.episode_limit = Some(limit);
        self
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total episodes ever inserted.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push_episode(&mut self, episode: EpisodeRecord<S>) -> Result<()> {
        episode.validate(self.episode_limit)?;
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(Arc::new(episode));
        self.inserted += 1;
        Ok(())
    }

    /// `batch_size` episodes drawn uniformly with replacement.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<Arc<EpisodeRecord<S>>>> {
        if batch_size == 0 || self.episodes.len() < batch_size {
            return Err(Error::NotReady {
                have: self.episodes.len(),
                need: batch_size.max(1),
            });
        }
        let n = self.episodes.len();
        Ok((0..batch_size)
            .map(|_| Arc::clone(&self.episodes[rng.gen_range(0..n)]))
            .collect())
    }

    /// Cheap immutable view of the stored episodes, oldest first.
    pub fn snapshot(&self) -> Vec<Arc<EpisodeRecord<S>>> {
        self.episodes.iter().cloned().collect()
    }
}
