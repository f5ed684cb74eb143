//! Seeded pedestrian world and the planning executive.

pub mod config;
pub mod episode;
pub mod metrics;
pub mod world;

use thiserror::Error;

pub use config::{
    ExecutiveParams, GTrueSpec, MapSource, PathEnd, PedKind, PedestrianSpec, Scenario, ScenarioConfig, SensorSpec,
};
pub use episode::{avoid_trigger, run_episode, CommandError, Episode, Outcome, PedRecord, StepRecord};
pub use metrics::{metrics, EpisodeLog, Metrics};
pub use world::{pedestrian_step, sense, MoveContext, SensorFrame, SimPed};

use crate::belief::BeliefError;
use crate::despot::SolveError;
use crate::mdp::PlanError;
use crate::pomdp::ModelError;
use crate::tracker::TrackerError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("episode already finished")]
    EpisodeOver,
}
