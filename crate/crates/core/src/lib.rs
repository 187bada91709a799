//! Innate-value-driven multi-agent reinforcement learning on a small grid
//! battle.
//!
//! Agents receive no environment reward. A critic turns each step's events
//! into need features (battle won, shield lost, health lost) and weighs
//! them with a static innate-value profile; IQL, QMIX and a simplified
//! QTRAN learn from that signal.

pub mod approximator;
pub mod checkpoint;
pub mod config;
pub mod critic;
pub mod env;
pub mod error;
pub mod harness;
pub mod learners;
pub mod metrics;
pub mod replay;
pub mod scalar;
pub mod seeding;

pub use critic::{NeedFeatures, Personality};
pub use env::{BattleEnv, Outcome, ScenarioConfig};
pub use error::{Error, Result};
pub use learners::{Algorithm, LearnerConfig};
pub use metrics::MetricsRecord;
pub use scalar::Scalar;

pub type InnateValueProfile = critic::InnateValueProfile<f64>;
pub type InternalState = critic::InternalState<f64>;
pub type ParameterVector = approximator::ParameterVector<f64>;
pub type OptimizerState = approximator::OptimizerState<f64>;
pub type EpisodeRecord = replay::EpisodeRecord<f64>;
pub type ReplayStore = replay::ReplayStore<f64>;
pub type Learner = learners::Learner<f64>;
pub type Networks = learners::Networks<f64>;
pub type Checkpoint = checkpoint::Checkpoint<f64>;

/// Single-precision variants of the generic types.
pub mod f32 {
    pub type InnateValueProfile = crate::critic::InnateValueProfile<f32>;
    pub type ParameterVector = crate::approximator::ParameterVector<f32>;
    pub type OptimizerState = crate::approximator::OptimizerState<f32>;
    pub type EpisodeRecord = crate::replay::EpisodeRecord<f32>;
    pub type ReplayStore = crate::replay::ReplayStore<f32>;
    pub type Learner = crate::learners::Learner<f32>;
    pub type Networks = crate::learners::Networks<f32>;
    pub type Checkpoint = crate::checkpoint::Checkpoint<f32>;
}
