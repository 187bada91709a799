use std::sync::Arc;

use crate::approximator::{backward, forward, forward_tape, ParameterVector};
use crate::error::{Error, Result};
use crate::replay::EpisodeRecord;
use crate::scalar::Scalar;

use super::{masked_argmax, td_target};

/// Independent Q-learning loss: mean squared TD error over every
/// (step, live agent) pair, each agent bootstrapping on its own reward.
///
/// Steps where the agent is already dead are skipped. An agent that dies
/// during a step gets a terminal target, since nothing it observes later
/// is trained.
pub fn iql_loss<S: Scalar>(
    batch: &[Arc<EpisodeRecord<S>>],
    q_params: &ParameterVector<S>,
    target_params: &ParameterVector<S>,
    gamma: S,
) -> Result<(S, Vec<S>)> {
    let count: usize = batch
        .iter()
        .flat_map(|ep| ep.steps())
        .map(|s| s.frame.alive.iter().filter(|&&a| a).count())
        .sum();
    let mut grad = vec![S::zero(); q_params.len()];
    if count == 0 {
        return Ok((S::zero(), grad));
    }
    let scale = S::lit(2.0) / S::from_usize_lossy(count);
    let mut loss = S::zero();
    let mut upstream = vec![S::zero(); q_params.output_width()];
    for step in batch.iter().flat_map(|ep| ep.steps()) {
        for i in 0..step.frame.n_agents() {
            if !step.frame.alive[i] {
                continue;
            }
            let done = step.terminal || !step.next.alive[i];
            let next_best = if done {
                S::zero()
            } else {
                let q_next = forward(target_params, &step.next.observations[i])?;
                let a = masked_argmax(&q_next, &step.next.masks[i]).ok_or_else(|| {
                    Error::ContractViolation("next-step mask allows nothing".into())
                })?;
                q_next[a]
            };
            let y = td_target(step.rewards[i], next_best, done, gamma);
            let tape = forward_tape(q_params, &step.frame.observations[i])?;
            let a = step.actions[i];
            let diff = tape.output()[a] - y;
            loss += diff * diff;
            upstream.iter_mut().for_each(|u| *u = S::zero());
            upstream[a] = scale * diff;
            backward(q_params, &tape, &upstream, &mut grad)?;
        }
    }
    Ok((loss / S::from_usize_lossy(count), grad))
}
