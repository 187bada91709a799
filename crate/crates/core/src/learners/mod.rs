//! Value-based multi-agent learners over innate rewards.
//!
//! All three share one agent Q network across agents (agent identity is part
//! of the observation). IQL trains it on each agent's own reward; QMIX mixes
//! the chosen per-agent values through a monotonic hypernetwork mixer and
//! trains on the team-average reward; QTRAN (base variant, simplified) adds
//! a joint action-value head and a state-value head with consistency losses.

mod iql;
mod qmix;
mod qtran;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approximator::{
    copy_to_target, forward, init_params, mlp_spec, optimizer_step, Activation, OptimizerState,
    ParameterVector,
};
use crate::error::{Error, Result};
use crate::replay::EpisodeRecord;
use crate::scalar::Scalar;

pub use iql::iql_loss;
pub use qmix::{qmix_loss, qmix_mix, MixerParams};
pub use qtran::{qtran_losses, QtranHeads, QtranLosses};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Qmix,
    Iql,
    Qtran,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Qmix, Algorithm::Iql, Algorithm::Qtran];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Qmix => "qmix",
            Algorithm::Iql => "iql",
            Algorithm::Qtran => "qtran",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qmix" => Ok(Algorithm::Qmix),
            "iql" => Ok(Algorithm::Iql),
            "qtran" => Ok(Algorithm::Qtran),
            other => Err(Error::InvalidInput(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Learner hyperparameters as they appear in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub learning_rate: f64,
    /// Episodes per training batch.
    pub batch_size: usize,
    /// Learner updates between hard target copies.
    pub target_update_period: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Environment steps over which epsilon decays linearly.
    pub epsilon_horizon: u64,
    /// Hidden widths of the agent Q network.
    pub hidden: Vec<usize>,
    /// Mixer embedding width (QMIX) and hidden width of the QTRAN heads.
    pub mixing_embed: usize,
    pub lambda_opt: f64,
    pub lambda_nopt: f64,
    /// Replay capacity in episodes.
    pub buffer_capacity: usize,
    /// Global gradient-norm clip; `0` disables clipping.
    pub grad_clip: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Qmix,
            gamma: 0.99,
            learning_rate: 5e-4,
            batch_size: 8,
            target_update_period: 200,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_horizon: 50_000,
            hidden: vec![64],
            mixing_embed: 32,
            lambda_opt: 1.0,
            lambda_nopt: 1.0,
            buffer_capacity: 5000,
            grad_clip: 10.0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Config(format!("learner.{field}: {why}")));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma", "must lie in [0, 1)");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate", "must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if self.target_update_period == 0 {
            return bad("target_update_period", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) {
            return bad("epsilon_start", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilon_end", "must lie in [0, 1]");
        }
        if self.epsilon_end > self.epsilon_start {
            return bad("epsilon_end", "must not exceed epsilon_start");
        }
        if self.hidden.contains(&0) {
            return bad("hidden", "widths must be positive");
        }
        if self.mixing_embed == 0 {
            return bad("mixing_embed", "must be positive");
        }
        for (field, v) in [("lambda_opt", self.lambda_opt), ("lambda_nopt", self.lambda_nopt)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(field, "must be finite and non-negative");
            }
        }
        if self.buffer_capacity == 0 {
            return bad("buffer_capacity", "must be positive");
        }
        if !(self.grad_clip.is_finite() && self.grad_clip >= 0.0) {
            return bad("grad_clip", "must be finite and non-negative");
        }
        Ok(())
    }

    pub fn epsilon_schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            end: self.epsilon_end,
            horizon: self.epsilon_horizon,
        }
    }
}

/// Linear decay `max(end, start - (start - end) * t / horizon)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon: u64,
}

impl EpsilonSchedule {
    pub fn value(&self, t: u64) -> f64 {
        if t >= self.horizon {
            return self.end;
        }
        let frac = t as f64 / self.horizon as f64;
        (self.start - (self.start - self.end) * frac).max(self.end)
    }
}

/// Widths the learner networks are built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LearnerDims {
    pub n_agents: usize,
    /// Agent network input width.
    pub obs_dim: usize,
    pub n_actions: usize,
    pub state_dim: usize,
}

/// Algorithm-specific networks on top of the shared agent network.
#[derive(Debug, Clone, PartialEq)]
pub enum Heads<S> {
    Iql,
    Qmix(MixerParams<S>),
    Qtran(QtranHeads<S>),
}

/// Every trainable network of a learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Networks<S> {
    pub agent: ParameterVector<S>,
    pub heads: Heads<S>,
}

impl<S: Scalar> Networks<S> {
    pub fn build<R: Rng + ?Sized>(
        config: &LearnerConfig,
        dims: &LearnerDims,
        rng: &mut R,
    ) -> Result<Self> {
        let agent = init_params(
            &mlp_spec(dims.obs_dim, &config.hidden, dims.n_actions, Activation::Identity),
            rng,
        )?;
        let heads = match config.algorithm {
            Algorithm::Iql => Heads::Iql,
            Algorithm::Qmix => Heads::Qmix(MixerParams::init(
                dims.n_agents,
                dims.state_dim,
                config.mixing_embed,
                rng,
            )?),
            Algorithm::Qtran => Heads::Qtran(QtranHeads::init(dims, config.mixing_embed, rng)?),
        };
        Ok(Self { agent, heads })
    }

    /// Networks in checkpoint order with their names.
    pub fn parts(&self) -> Vec<(&'static str, &ParameterVector<S>)> {
        let mut out = vec![("agent_q", &self.agent)];
        match &self.heads {
            Heads::Iql => {}
            Heads::Qmix(m) => out.extend(m.parts()),
            Heads::Qtran(h) => out.extend(h.parts()),
        }
        out
    }

    pub fn parts_mut(&mut self) -> Vec<&mut ParameterVector<S>> {
        let mut out = vec![&mut self.agent];
        match &mut self.heads {
            Heads::Iql => {}
            Heads::Qmix(m) => out.extend(m.parts_mut()),
            Heads::Qtran(h) => out.extend(h.parts_mut()),
        }
        out
    }

    pub fn flat_len(&self) -> usize {
        self.parts().iter().map(|(_, p)| p.len()).sum()
    }

    pub fn flat_values(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.flat_len());
        for (_, p) in self.parts() {
            out.extend_from_slice(p.values());
        }
        out
    }

    fn set_flat_values(&mut self, flat: &[S]) {
        let mut offset = 0;
        for p in self.parts_mut() {
            let n = p.len();
            p.values_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    /// Rebuilds networks of the given shape from named parts (checkpoint
    /// loading); every width must match what `build` would produce.
    pub fn from_parts(
        config: &LearnerConfig,
        dims: &LearnerDims,
        parts: Vec<(String, ParameterVector<S>)>,
    ) -> Result<Self> {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut template = Self::build(config, dims, &mut rng)?;
        let expected: Vec<(&'static str, Vec<_>)> = template
            .parts()
            .iter()
            .map(|(n, p)| (*n, p.layers().to_vec()))
            .collect();
        if expected.len() != parts.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} networks for {}, found {}",
                expected.len(),
                config.algorithm,
                parts.len()
            )));
        }
        for ((name, layers), (got_name, got)) in expected.iter().zip(&parts) {
            if name != got_name || layers.as_slice() != got.layers() {
                return Err(Error::InvalidInput(format!(
                    "network `{got_name}` does not match the configured `{name}` shape"
                )));
            }
        }
        for (dst, (_, src)) in template.parts_mut().into_iter().zip(parts) {
            *dst = src;
        }
        Ok(template)
    }
}

/// Offsets of each network's slice in a flat gradient.
pub(crate) fn offsets<S: Scalar>(nets: &Networks<S>) -> Vec<usize> {
    let mut acc = 0;
    nets.parts()
        .iter()
        .map(|(_, p)| {
            let o = acc;
            acc += p.len();
            o
        })
        .collect()
}

/// Lowest-index maximum of `q` over allowed entries.
pub fn masked_argmax<S: Scalar>(q: &[S], mask: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, S)> = None;
    for (a, (&v, &ok)) in q.iter().zip(mask).enumerate() {
        if ok && best.is_none_or(|(_, b)| v > b) {
            best = Some((a, v));
        }
    }
    best.map(|(a, _)| a)
}

/// Greedy state value `max_a Q(s, a)` over allowed actions.
pub fn state_value<S: Scalar>(
    q_params: &ParameterVector<S>,
    observation: &[S],
    mask: &[bool],
) -> Result<S> {
    let q = forward(q_params, observation)?;
    masked_argmax(&q, mask)
        .map(|a| q[a])
        .ok_or_else(|| Error::ContractViolation("action mask allows nothing".into()))
}

/// Masked epsilon-greedy joint action.
pub fn select_actions<S: Scalar, R: Rng + ?Sized>(
    q_params: &ParameterVector<S>,
    observations: &[Vec<S>],
    masks: &[Vec<bool>],
    epsilon: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if observations.len() != masks.len() {
        return Err(Error::ShapeMismatch {
            what: "mask count",
            expected: observations.len(),
            got: masks.len(),
        });
    }
    observations
        .iter()
        .zip(masks)
        .map(|(obs, mask)| {
            let allowed: Vec<usize> = (0..mask.len()).filter(|&a| mask[a]).collect();
            if allowed.is_empty() {
                return Err(Error::ContractViolation("action mask allows nothing".into()));
            }
            if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
                return Ok(allowed[rng.gen_range(0..allowed.len())]);
            }
            let q = forward(q_params, obs)?;
            Ok(masked_argmax(&q, mask).expect("mask has an allowed action"))
        })
        .collect()
}

/// One-step bootstrapped target.
pub fn td_target<S: Scalar>(reward: S, next_best_q: S, terminal: bool, gamma: S) -> S {
    if terminal {
        reward
    } else {
        reward + gamma * next_best_q
    }
}

/// Hard-copies `params` into `target` when `step_counter` is a multiple of
/// `period`; returns whether a copy happened.
pub fn maybe_update_target<S: Scalar>(
    step_counter: u64,
    period: u64,
    params: &Networks<S>,
    target: &mut Networks<S>,
) -> bool {
    if period == 0 || step_counter % period != 0 {
        return false;
    }
    for (dst, (_, src)) in target.parts_mut().into_iter().zip(params.parts()) {
        *dst = copy_to_target(src);
    }
    true
}

/// Losses of one learner update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport<S> {
    /// Quantity the gradient descends.
    pub total: S,
    pub td: S,
    pub opt: S,
    pub nopt: S,
}

/// Learner state owned by the training loop.
#[derive(Debug, Clone)]
pub struct Learner<S> {
    config: LearnerConfig,
    dims: LearnerDims,
    params: Networks<S>,
    target: Networks<S>,
    optimizer: OptimizerState<S>,
    updates: u64,
}

impl<S: Scalar> Learner<S> {
    pub fn new<R: Rng + ?Sized>(
        config: LearnerConfig,
        dims: LearnerDims,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let params = Networks::build(&config, &dims, rng)?;
        let target = params.clone();
        let optimizer = Self::fresh_optimizer(&config, params.flat_len());
        Ok(Self {
            config,
            dims,
            params,
            target,
            optimizer,
            updates: 0,
        })
    }

    fn fresh_optimizer(config: &LearnerConfig, n: usize) -> OptimizerState<S> {
        let clip = (config.grad_clip > 0.0).then(|| S::lit(config.grad_clip));
        OptimizerState::new(n)
            .with_learning_rate(S::lit(config.learning_rate))
            .with_clip_norm(clip)
    }

    /// Reassembles a learner from checkpointed parts. The target networks
    /// restart as copies of the online networks.
    pub fn from_parts(
        config: LearnerConfig,
        dims: LearnerDims,
        params: Networks<S>,
        optimizer: Option<OptimizerState<S>>,
        updates: u64,
    ) -> Result<Self> {
        config.validate()?;
        let optimizer = match optimizer {
            Some(o) if o.len() == params.flat_len() => o,
            Some(o) => {
                return Err(Error::ShapeMismatch {
                    what: "optimizer state length",
                    expected: params.flat_len(),
                    got: o.len(),
                })
            }
            None => Self::fresh_optimizer(&config, params.flat_len()),
        };
        Ok(Self {
            target: params.clone(),
            config,
            dims,
            params,
            optimizer,
            updates,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn dims(&self) -> &LearnerDims {
        &self.dims
    }

    pub fn agent_params(&self) -> &ParameterVector<S> {
        &self.params.agent
    }

    pub fn networks(&self) -> &Networks<S> {
        &self.params
    }

    pub fn target_networks(&self) -> &Networks<S> {
        &self.target
    }

    pub fn optimizer(&self) -> &OptimizerState<S> {
        &self.optimizer
    }

    /// Number of completed updates.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Loss and flat gradient for `batch` under the current networks.
    pub fn loss_and_gradient(
        &self,
        batch: &[Arc<EpisodeRecord<S>>],
    ) -> Result<(LossReport<S>, Vec<S>)> {
        if batch.is_empty() {
            return Err(Error::NotReady {
                have: 0,
                need: self.config.batch_size,
            });
        }
        let gamma = S::lit(self.config.gamma);
        match self.config.algorithm {
            Algorithm::Iql => {
                let (loss, grad) = iql_loss(batch, &self.params.agent, &self.target.agent, gamma)?;
                Ok((
                    LossReport {
                        total: loss,
                        td: loss,
                        opt: S::zero(),
                        nopt: S::zero(),
                    },
                    grad,
                ))
            }
            Algorithm::Qmix => {
                let (loss, grad) = qmix_loss(batch, &self.params, &self.target, gamma)?;
                Ok((
                    LossReport {
                        total: loss,
                        td: loss,
                        opt: S::zero(),
                        nopt: S::zero(),
                    },
                    grad,
                ))
            }
            Algorithm::Qtran => {
                let l = qtran_losses(
                    batch,
                    &self.params,
                    &self.target,
                    gamma,
                    S::lit(self.config.lambda_opt),
                    S::lit(self.config.lambda_nopt),
                )?;
                Ok((
                    LossReport {
                        total: l.total,
                        td: l.td,
                        opt: l.opt,
                        nopt: l.nopt,
                    },
                    l.gradient,
                ))
            }
        }
    }

    /// One training update: target sync on schedule, loss, optimizer step.
    pub fn update(&mut self, batch: &[Arc<EpisodeRecord<S>>]) -> Result<LossReport<S>> {
        maybe_update_target(
            self.updates,
            self.config.target_update_period,
            &self.params,
            &mut self.target,
        );
        let (report, grad) = self.loss_and_gradient(batch)?;
        let mut flat = self.params.flat_values();
        optimizer_step(&mut flat, &grad, &mut self.optimizer)?;
        self.params.set_flat_values(&flat);
        self.updates += 1;
        Ok(report)
    }
}
