//! Innate-value critic.
//!
//! Turns simulator transitions into per-agent innate rewards through a
//! personality weight vector over three needs (battle won, shield, health),
//! keeps each agent's accumulated need satisfaction, and averages rewards
//! across a team for the cooperative learners.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{Outcome, TransitionEvents};
use crate::error::{Error, Result};
use crate::learners::Algorithm;
use crate::scalar::Scalar;

/// Need features of one agent for one transition.
///
/// `shield_lost` and `hp_lost` are the agent's own losses this step as
/// non-negative magnitudes; `battle_won` is 1 only on the winning terminal
/// transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeedFeatures<S> {
    pub battle_won: S,
    pub shield_lost: S,
    pub hp_lost: S,
}

impl<S: Scalar> NeedFeatures<S> {
    pub fn new(battle_won: S, shield_lost: S, hp_lost: S) -> Self {
        Self {
            battle_won,
            shield_lost,
            hp_lost,
        }
    }

    pub fn zero() -> Self {
        Self::new(S::zero(), S::zero(), S::zero())
    }

    pub fn as_array(&self) -> [S; 3] {
        [self.battle_won, self.shield_lost, self.hp_lost]
    }

    fn check(&self) -> Result<()> {
        let [bw, sl, hp] = self.as_array();
        if !(bw.is_finite() && sl.is_finite() && hp.is_finite()) {
            return Err(Error::InvalidInput("need features must be finite".into()));
        }
        if bw != S::zero() && bw != S::one() {
            return Err(Error::InvalidInput(format!("battle_won must be 0 or 1, got {bw}")));
        }
        if sl < S::zero() || hp < S::zero() {
            return Err(Error::InvalidInput(format!(
                "losses must be non-negative, got shield {sl}, hp {hp}"
            )));
        }
        Ok(())
    }
}

/// Named regimes of the innate-value weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Personality {
    Coward,
    Neutral,
    Reckless,
    Custom,
}

impl Personality {
    /// The three preset personalities in weight-table column order.
    pub const PRESETS: [Personality; 3] =
        [Personality::Coward, Personality::Neutral, Personality::Reckless];

    pub fn name(self) -> &'static str {
        match self {
            Personality::Coward => "coward",
            Personality::Neutral => "neutral",
            Personality::Reckless => "reckless",
            Personality::Custom => "custom",
        }
    }
}

impl fmt::Display for Personality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Personality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coward" => Ok(Personality::Coward),
            "neutral" => Ok(Personality::Neutral),
            "reckless" => Ok(Personality::Reckless),
            "custom" => Ok(Personality::Custom),
            other => Err(Error::InvalidInput(format!("unknown personality `{other}`"))),
        }
    }
}

/// Static innate-value model of an agent: weights over
/// `[battle won, shield, health]` plus the personality label they encode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnateValueProfile<S> {
    pub w_bw: S,
    pub w_sl: S,
    pub w_hp: S,
    pub personality: Personality,
}

impl<S: Scalar> InnateValueProfile<S> {
    /// A profile with arbitrary weights, labelled `Custom`.
    pub fn custom(weights: [S; 3]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidInput("profile weights must be finite".into()));
        }
        Ok(Self {
            w_bw: weights[0],
            w_sl: weights[1],
            w_hp: weights[2],
            personality: Personality::Custom,
        })
    }

    /// Preset weights for `personality` in the row of `algorithm`.
    pub fn preset(algorithm: Algorithm, personality: Personality) -> Result<Self> {
        let idx = Personality::PRESETS
            .iter()
            .position(|p| *p == personality)
            .ok_or_else(|| {
                Error::InvalidInput("custom personality has no preset weights".into())
            })?;
        Ok(preset_profiles(algorithm)[idx])
    }

    pub fn weights(&self) -> [S; 3] {
        [self.w_bw, self.w_sl, self.w_hp]
    }

    /// Checks the label/weights invariant against `algorithm`'s preset row.
    pub fn validate(&self, algorithm: Algorithm) -> Result<()> {
        if self.weights().iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidInput("profile weights must be finite".into()));
        }
        if self.personality != Personality::Custom {
            let preset = Self::preset(algorithm, self.personality)?;
            if preset.weights() != self.weights() {
                return Err(Error::InvalidInput(format!(
                    "{} profile weights do not match the {} preset",
                    self.personality, algorithm
                )));
            }
        }
        Ok(())
    }
}

/// Innate reward: dot product of the profile weights with the need features.
pub fn compute_innate_reward<S: Scalar>(
    profile: &InnateValueProfile<S>,
    features: &NeedFeatures<S>,
) -> Result<S> {
    if profile.weights().iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidInput("profile weights must be finite".into()));
    }
    features.check()?;
    Ok(profile.w_bw * features.battle_won
        + profile.w_sl * features.shield_lost
        + profile.w_hp * features.hp_lost)
}

/// Reads ally `agent_index`'s need features out of one step's events.
pub fn extract_features<S: Scalar>(
    events: &TransitionEvents,
    agent_index: usize,
) -> Result<NeedFeatures<S>> {
    let loss = events.ally_losses.get(agent_index).ok_or_else(|| {
        Error::InvalidInput(format!(
            "agent index {agent_index} out of range for {} allies",
            events.ally_losses.len()
        ))
    })?;
    let won = if events.outcome == Outcome::Won {
        S::one()
    } else {
        S::zero()
    };
    Ok(NeedFeatures::new(
        won,
        S::lit(loss.shield_lost),
        S::lit(loss.hp_lost),
    ))
}

/// Maps a weight vector onto a personality label.
///
/// `|w_sl|` and `|w_hp|` at least twice `|w_bw|` with both negative is a
/// coward, both positive a reckless agent; all three magnitudes within 25%
/// of each other is neutral; anything else is custom.
pub fn classify_personality<S: Scalar>(profile: &InnateValueProfile<S>) -> Result<Personality> {
    let [bw, sl, hp] = profile.weights();
    if !(bw.is_finite() && sl.is_finite() && hp.is_finite()) {
        return Err(Error::InvalidInput("profile weights must be finite".into()));
    }
    if bw <= S::zero() {
        return Err(Error::InvalidInput(format!(
            "battle-won weight must be positive, got {bw}"
        )));
    }
    let two = S::lit(2.0);
    let dominant = sl.abs() >= two * bw && hp.abs() >= two * bw;
    if dominant && sl < S::zero() && hp < S::zero() {
        return Ok(Personality::Coward);
    }
    if dominant && sl > S::zero() && hp > S::zero() {
        return Ok(Personality::Reckless);
    }
    let close = |a: S, b: S| {
        let (a, b) = (a.abs(), b.abs());
        (a - b).abs() <= S::lit(0.25) * a.max(b)
    };
    if close(bw, sl) && close(bw, hp) && close(sl, hp) {
        return Ok(Personality::Neutral);
    }
    Ok(Personality::Custom)
}

/// Mean of the per-agent rewards.
pub fn team_average_reward<S: Scalar>(rewards: &[S]) -> Result<S> {
    if rewards.is_empty() {
        return Err(Error::InvalidInput("cannot average an empty reward list".into()));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidInput("rewards must be finite".into()));
    }
    // Summing in sorted order makes the result independent of agent order;
    // the clamp absorbs rounding so the mean stays within [min, max].
    let mut sorted = rewards.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let sum: S = sorted.iter().copied().sum();
    let mean = sum / S::from_usize_lossy(rewards.len());
    Ok(mean.max(sorted[0]).min(sorted[sorted.len() - 1]))
}

/// Weight vectors of the three personalities for `algorithm`, ordered
/// coward, neutral, reckless.
pub fn preset_profiles<S: Scalar>(algorithm: Algorithm) -> [InnateValueProfile<S>; 3] {
    let extreme = match algorithm {
        Algorithm::Qmix | Algorithm::Iql => 2.5,
        Algorithm::Qtran => 3.0,
    };
    let make = |sl: f64, personality| InnateValueProfile {
        w_bw: S::one(),
        w_sl: S::lit(sl),
        w_hp: S::lit(sl),
        personality,
    };
    [
        make(-extreme, Personality::Coward),
        make(-1.0, Personality::Neutral),
        make(extreme, Personality::Reckless),
    ]
}

/// Accumulated need satisfaction of one agent within an episode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InternalState<S> {
    pub satisfied_achievement: S,
    pub satisfied_safety: S,
    pub satisfied_basic: S,
    /// Number of updates since the episode started.
    pub steps: usize,
}

impl<S: Scalar> InternalState<S> {
    pub fn new() -> Self {
        Self {
            satisfied_achievement: S::zero(),
            satisfied_safety: S::zero(),
            satisfied_basic: S::zero(),
            steps: 0,
        }
    }

    /// The accumulators divided by the step count, each in `[0, 1]`.
    pub fn observation_features(&self) -> [S; 3] {
        let n = S::from_usize_lossy(self.steps.max(1));
        [
            self.satisfied_achievement / n,
            self.satisfied_safety / n,
            self.satisfied_basic / n,
        ]
    }
}

/// Advances an agent's internal state by one transition.
pub fn update_internal_state<S: Scalar>(
    state: &InternalState<S>,
    features: &NeedFeatures<S>,
    current_shield_fraction: S,
    current_hp_fraction: S,
) -> Result<InternalState<S>> {
    features.check()?;
    for (name, f) in [
        ("shield", current_shield_fraction),
        ("hp", current_hp_fraction),
    ] {
        if !(f >= S::zero() && f <= S::one()) {
            return Err(Error::InvalidInput(format!(
                "{name} fraction must lie in [0, 1], got {f}"
            )));
        }
    }
    Ok(InternalState {
        satisfied_achievement: state.satisfied_achievement + features.battle_won,
        satisfied_safety: state.satisfied_safety + current_shield_fraction,
        satisfied_basic: state.satisfied_basic + current_hp_fraction,
        steps: state.steps + 1,
    })
}
