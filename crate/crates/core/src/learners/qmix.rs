use std::sync::Arc;

use rand::Rng;

use crate::approximator::{
    backward, forward, forward_tape, init_params, Activation, LayerSpec, ParameterVector, Tape,
};
use crate::error::{Error, Result};
use crate::replay::EpisodeRecord;
use crate::scalar::Scalar;

use super::{masked_argmax, offsets, td_target, Heads, Networks};

/// Hypernetworks that turn the global state into the weights of a two-layer
/// monotonic mixer:
///
/// `Q_tot = w2 . relu(q W1 + b1) + b2`, with `W1 = |hyper_w1(s)|`
/// (agents x embed), `b1 = hyper_b1(s)`, `w2 = |hyper_w2(s)|` and
/// `b2 = hyper_b2(s)`. The absolute values are the last activation of the
/// weight hypernetworks, so `Q_tot` is non-decreasing in every agent value.
#[derive(Debug, Clone, PartialEq)]
pub struct MixerParams<S> {
    pub hyper_w1: ParameterVector<S>,
    pub hyper_b1: ParameterVector<S>,
    pub hyper_w2: ParameterVector<S>,
    pub hyper_b2: ParameterVector<S>,
    pub n_agents: usize,
    pub embed: usize,
}

impl<S: Scalar> MixerParams<S> {
    pub fn layouts(n_agents: usize, state_dim: usize, embed: usize) -> [Vec<LayerSpec>; 4] {
        [
            vec![LayerSpec::new(state_dim, n_agents * embed, Activation::AbsoluteValue)],
            vec![LayerSpec::new(state_dim, embed, Activation::Identity)],
            vec![LayerSpec::new(state_dim, embed, Activation::AbsoluteValue)],
            vec![
                LayerSpec::new(state_dim, embed, Activation::Rectifier),
                LayerSpec::new(embed, 1, Activation::Identity),
            ],
        ]
    }

    pub fn init<R: Rng + ?Sized>(
        n_agents: usize,
        state_dim: usize,
        embed: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let [w1, b1, w2, b2] = Self::layouts(n_agents, state_dim, embed);
        Ok(Self {
            hyper_w1: init_params(&w1, rng)?,
            hyper_b1: init_params(&b1, rng)?,
            hyper_w2: init_params(&w2, rng)?,
            hyper_b2: init_params(&b2, rng)?,
            n_agents,
            embed,
        })
    }

    pub fn parts(&self) -> Vec<(&'static str, &ParameterVector<S>)> {
        vec![
            ("mixer_w1", &self.hyper_w1),
            ("mixer_b1", &self.hyper_b1),
            ("mixer_w2", &self.hyper_w2),
            ("mixer_b2", &self.hyper_b2),
        ]
    }

    pub fn parts_mut(&mut self) -> Vec<&mut ParameterVector<S>> {
        vec![
            &mut self.hyper_w1,
            &mut self.hyper_b1,
            &mut self.hyper_w2,
            &mut self.hyper_b2,
        ]
    }
}

struct MixTape<S> {
    w1: Tape<S>,
    b1: Tape<S>,
    w2: Tape<S>,
    b2: Tape<S>,
    hidden_pre: Vec<S>,
    output: S,
}

fn check_len<S: Scalar>(qs: &[S], mixer: &MixerParams<S>) -> Result<()> {
    if qs.len() != mixer.n_agents {
        return Err(Error::ShapeMismatch {
            what: "agent value count",
            expected: mixer.n_agents,
            got: qs.len(),
        });
    }
    Ok(())
}

fn mix_tape<S: Scalar>(qs: &[S], state: &[S], mixer: &MixerParams<S>) -> Result<MixTape<S>> {
    check_len(qs, mixer)?;
    let w1 = forward_tape(&mixer.hyper_w1, state)?;
    let b1 = forward_tape(&mixer.hyper_b1, state)?;
    let w2 = forward_tape(&mixer.hyper_w2, state)?;
    let b2 = forward_tape(&mixer.hyper_b2, state)?;
    let e = mixer.embed;
    let hidden_pre: Vec<S> = (0..e)
        .map(|k| {
            qs.iter()
                .enumerate()
                .fold(b1.output()[k], |acc, (i, &q)| acc + q * w1.output()[i * e + k])
        })
        .collect();
    let output = hidden_pre
        .iter()
        .zip(w2.output())
        .fold(b2.output()[0], |acc, (&h, &w)| acc + w * h.max(S::zero()));
    Ok(MixTape {
        w1,
        b1,
        w2,
        b2,
        hidden_pre,
        output,
    })
}

/// Joint value of the chosen per-agent values under the state-conditioned
/// monotonic mixer.
pub fn qmix_mix<S: Scalar>(
    agent_chosen_qs: &[S],
    global_state: &[S],
    mixer: &MixerParams<S>,
) -> Result<S> {
    check_len(agent_chosen_qs, mixer)?;
    let w1 = forward(&mixer.hyper_w1, global_state)?;
    let b1 = forward(&mixer.hyper_b1, global_state)?;
    let w2 = forward(&mixer.hyper_w2, global_state)?;
    let b2 = forward(&mixer.hyper_b2, global_state)?;
    let e = mixer.embed;
    let mut out = b2[0];
    for k in 0..e {
        let pre = agent_chosen_qs
            .iter()
            .enumerate()
            .fold(b1[k], |acc, (i, &q)| acc + q * w1[i * e + k]);
        out += w2[k] * pre.max(S::zero());
    }
    Ok(out)
}

/// Backpropagates `upstream = dL/dQ_tot` into the four hypernetwork
/// gradient slices and returns `dL/dq_i`.
fn mix_backward<S: Scalar>(
    tape: &MixTape<S>,
    qs: &[S],
    upstream: S,
    mixer: &MixerParams<S>,
    grads: [&mut [S]; 4],
) -> Result<Vec<S>> {
    let e = mixer.embed;
    let [g_w1, g_b1, g_w2, g_b2] = grads;
    let d_hidden_pre: Vec<S> = (0..e)
        .map(|k| {
            if tape.hidden_pre[k] > S::zero() {
                upstream * tape.w2.output()[k]
            } else {
                S::zero()
            }
        })
        .collect();
    let d_w2: Vec<S> = tape
        .hidden_pre
        .iter()
        .map(|&h| upstream * h.max(S::zero()))
        .collect();
    backward(&mixer.hyper_w2, &tape.w2, &d_w2, g_w2)?;
    backward(&mixer.hyper_b2, &tape.b2, &[upstream], g_b2)?;
    backward(&mixer.hyper_b1, &tape.b1, &d_hidden_pre, g_b1)?;
    let mut d_w1 = vec![S::zero(); mixer.n_agents * e];
    let mut d_q = vec![S::zero(); mixer.n_agents];
    for (i, &q) in qs.iter().enumerate() {
        for k in 0..e {
            d_w1[i * e + k] = q * d_hidden_pre[k];
            d_q[i] += tape.w1.output()[i * e + k] * d_hidden_pre[k];
        }
    }
    backward(&mixer.hyper_w1, &tape.w1, &d_w1, g_w1)?;
    Ok(d_q)
}

fn mixer_of<S>(nets: &Networks<S>) -> Result<&MixerParams<S>> {
    match &nets.heads {
        Heads::Qmix(m) => Ok(m),
        _ => Err(Error::InvalidInput("networks carry no QMIX mixer".into())),
    }
}

/// Squared TD error of the mixed joint value against
/// `team_reward + gamma * Q_tot_target(s', greedy target actions)`, averaged
/// over all steps in the batch. Returns the loss and the flat gradient over
/// `[agent, mixer_w1, mixer_b1, mixer_w2, mixer_b2]`.
pub fn qmix_loss<S: Scalar>(
    batch: &[Arc<EpisodeRecord<S>>],
    params: &Networks<S>,
    target: &Networks<S>,
    gamma: S,
) -> Result<(S, Vec<S>)> {
    let mixer = mixer_of(params)?;
    let target_mixer = mixer_of(target)?;
    let offs = offsets(params);
    let mut grad = vec![S::zero(); params.flat_len()];
    let n_steps: usize = batch.iter().map(|ep| ep.len()).sum();
    if n_steps == 0 {
        return Ok((S::zero(), grad));
    }
    let scale = S::lit(2.0) / S::from_usize_lossy(n_steps);
    let n_actions = params.agent.output_width();
    let mut loss = S::zero();
    for step in batch.iter().flat_map(|ep| ep.steps()) {
        let n = step.frame.n_agents();
        let mut tapes = Vec::with_capacity(n);
        let mut chosen = Vec::with_capacity(n);
        for i in 0..n {
            let tape = forward_tape(&params.agent, &step.frame.observations[i])?;
            chosen.push(tape.output()[step.actions[i]]);
            tapes.push(tape);
        }
        let next_value = if step.terminal {
            S::zero()
        } else {
            let mut next_qs = Vec::with_capacity(n);
            for i in 0..n {
                let q = forward(&target.agent, &step.next.observations[i])?;
                let a = masked_argmax(&q, &step.next.masks[i]).ok_or_else(|| {
                    Error::ContractViolation("next-step mask allows nothing".into())
                })?;
                next_qs.push(q[a]);
            }
            qmix_mix(&next_qs, &step.next.global_state, target_mixer)?
        };
        let y = td_target(step.team_reward, next_value, step.terminal, gamma);
        let mix = mix_tape(&chosen, &step.frame.global_state, mixer)?;
        let diff = mix.output - y;
        loss += diff * diff;

        let (agent_grad, rest) = grad.split_at_mut(offs[1]);
        let (g_w1, rest) = rest.split_at_mut(offs[2] - offs[1]);
        let (g_b1, rest) = rest.split_at_mut(offs[3] - offs[2]);
        let (g_w2, g_b2) = rest.split_at_mut(offs[4] - offs[3]);
        let d_q = mix_backward(&mix, &chosen, scale * diff, mixer, [g_w1, g_b1, g_w2, g_b2])?;
        let mut upstream = vec![S::zero(); n_actions];
        for (i, tape) in tapes.iter().enumerate() {
            if d_q[i] == S::zero() {
                continue;
            }
            upstream.iter_mut().for_each(|u| *u = S::zero());
            upstream[step.actions[i]] = d_q[i];
            backward(&params.agent, tape, &upstream, agent_grad)?;
        }
    }
    Ok((loss / S::from_usize_lossy(n_steps), grad))
}
