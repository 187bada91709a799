use std::sync::Arc;

use rand::Rng;

use crate::approximator::{backward, forward, forward_tape, init_params, mlp_spec, Activation, ParameterVector};
use crate::error::{Error, Result};
use crate::replay::EpisodeRecord;
use crate::scalar::Scalar;

use super::{masked_argmax, offsets, td_target, Heads, LearnerDims, Networks};

/// Joint action-value network over `state ++ one-hot(joint action)` and a
/// state-value network over the global state.
#[derive(Debug, Clone, PartialEq)]
pub struct QtranHeads<S> {
    pub joint: ParameterVector<S>,
    pub value: ParameterVector<S>,
    pub n_agents: usize,
    pub n_actions: usize,
}

impl<S: Scalar> QtranHeads<S> {
    pub fn init<R: Rng + ?Sized>(dims: &LearnerDims, embed: usize, rng: &mut R) -> Result<Self> {
        let joint_in = dims.state_dim + dims.n_agents * dims.n_actions;
        Ok(Self {
            joint: init_params(&mlp_spec(joint_in, &[embed, embed], 1, Activation::Identity), rng)?,
            value: init_params(&mlp_spec(dims.state_dim, &[embed], 1, Activation::Identity), rng)?,
            n_agents: dims.n_agents,
            n_actions: dims.n_actions,
        })
    }

    pub fn parts(&self) -> Vec<(&'static str, &ParameterVector<S>)> {
        vec![("qtran_joint", &self.joint), ("qtran_value", &self.value)]
    }

    pub fn parts_mut(&mut self) -> Vec<&mut ParameterVector<S>> {
        vec![&mut self.joint, &mut self.value]
    }

    /// Joint network input for `state` and `actions`.
    pub fn joint_input(&self, state: &[S], actions: &[usize]) -> Vec<S> {
        let mut x = state.to_vec();
        let base = x.len();
        x.resize(base + self.n_agents * self.n_actions, S::zero());
        for (i, &a) in actions.iter().enumerate() {
            x[base + i * self.n_actions + a] = S::one();
        }
        x
    }
}

/// Batch-mean losses and the gradient of `total` over
/// `[agent, qtran_joint, qtran_value]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QtranLosses<S> {
    pub total: S,
    pub td: S,
    pub opt: S,
    pub nopt: S,
    pub gradient: Vec<S>,
}

fn heads_of<S>(nets: &Networks<S>) -> Result<&QtranHeads<S>> {
    match &nets.heads {
        Heads::Qtran(h) => Ok(h),
        _ => Err(Error::InvalidInput("networks carry no QTRAN heads".into())),
    }
}

fn greedy<S: Scalar>(q: &[S], mask: &[bool]) -> Result<usize> {
    masked_argmax(q, mask).ok_or_else(|| Error::ContractViolation("action mask allows nothing".into()))
}

/// QTRAN-base losses on the team reward.
///
/// `L_td` regresses the joint network on `r + gamma * Q_jt_target(s', u')`
/// with `u'` the target agents' greedy actions. With `Q'` the sum of chosen
/// agent values and the joint value treated as a constant,
/// `L_opt = (Q'(u_greedy) - Q_jt(u_greedy) + V)^2` and
/// `L_nopt = min(Q'(u) - Q_jt(u) + V, 0)^2` on the taken actions.
pub fn qtran_losses<S: Scalar>(
    batch: &[Arc<EpisodeRecord<S>>],
    params: &Networks<S>,
    target: &Networks<S>,
    gamma: S,
    lambda_opt: S,
    lambda_nopt: S,
) -> Result<QtranLosses<S>> {
    let heads = heads_of(params)?;
    let target_heads = heads_of(target)?;
    let offs = offsets(params);
    let mut gradient = vec![S::zero(); params.flat_len()];
    let n_steps: usize = batch.iter().map(|ep| ep.len()).sum();
    let (mut td, mut opt, mut nopt) = (S::zero(), S::zero(), S::zero());
    if n_steps == 0 {
        return Ok(QtranLosses {
            total: S::zero(),
            td,
            opt,
            nopt,
            gradient,
        });
    }
    let two_over_n = S::lit(2.0) / S::from_usize_lossy(n_steps);
    let n_actions = heads.n_actions;
    let (agent_grad, rest) = gradient.split_at_mut(offs[1]);
    let (joint_grad, value_grad) = rest.split_at_mut(offs[2] - offs[1]);
    let mut upstream = vec![S::zero(); n_actions];

    for step in batch.iter().flat_map(|ep| ep.steps()) {
        let n = step.frame.n_agents();
        let state = &step.frame.global_state;

        let next_joint = if step.terminal {
            S::zero()
        } else {
            let mut next_actions = Vec::with_capacity(n);
            for i in 0..n {
                let q = forward(&target.agent, &step.next.observations[i])?;
                next_actions.push(greedy(&q, &step.next.masks[i])?);
            }
            let x = target_heads.joint_input(&step.next.global_state, &next_actions);
            forward(&target_heads.joint, &x)?[0]
        };
        let y = td_target(step.team_reward, next_joint, step.terminal, gamma);

        let joint_taken = forward_tape(&heads.joint, &heads.joint_input(state, &step.actions))?;
        let td_diff = joint_taken.output()[0] - y;
        td += td_diff * td_diff;
        backward(&heads.joint, &joint_taken, &[two_over_n * td_diff], joint_grad)?;

        let mut tapes = Vec::with_capacity(n);
        let mut greedy_actions = Vec::with_capacity(n);
        for i in 0..n {
            let tape = forward_tape(&params.agent, &step.frame.observations[i])?;
            greedy_actions.push(greedy(tape.output(), &step.frame.masks[i])?);
            tapes.push(tape);
        }
        let value_tape = forward_tape(&heads.value, state)?;
        let v = value_tape.output()[0];

        let q_sum = |actions: &[usize]| {
            tapes
                .iter()
                .zip(actions)
                .fold(S::zero(), |acc, (t, &a)| acc + t.output()[a])
        };
        let joint_greedy = forward(&heads.joint, &heads.joint_input(state, &greedy_actions))?[0];
        let opt_diff = q_sum(&greedy_actions) - joint_greedy + v;
        opt += opt_diff * opt_diff;
        let nopt_diff = (q_sum(&step.actions) - joint_taken.output()[0] + v).min(S::zero());
        nopt += nopt_diff * nopt_diff;

        let d_opt = lambda_opt * two_over_n * opt_diff;
        let d_nopt = lambda_nopt * two_over_n * nopt_diff;
        backward(&heads.value, &value_tape, &[d_opt + d_nopt], value_grad)?;
        for (i, tape) in tapes.iter().enumerate() {
            upstream.iter_mut().for_each(|u| *u = S::zero());
            upstream[greedy_actions[i]] += d_opt;
            upstream[step.actions[i]] += d_nopt;
            if upstream.iter().all(|&u| u == S::zero()) {
                continue;
            }
            backward(&params.agent, tape, &upstream, agent_grad)?;
        }
    }
    let count = S::from_usize_lossy(n_steps);
    let (td, opt, nopt) = (td / count, opt / count, nopt / count);
    Ok(QtranLosses {
        total: td + lambda_opt * opt + lambda_nopt * nopt,
        td,
        opt,
        nopt,
        gradient,
    })
}
