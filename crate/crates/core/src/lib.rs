//! Sequential vaccine-safety surveillance on simulated data.
//!
//! The crate simulates subject-level adverse-event trajectories, turns
//! accrued data into log-likelihood profiles for the effect of exposure
//! under two epidemiological designs (historical comparator and
//! self-controlled case series), and runs three sequential testing methods
//! over monthly looks: MaxSPRT with Monte Carlo critical values, plain
//! Bayesian posterior-probability monitoring, and Bayesian monitoring with
//! adaptive bias correction learned from negative-control outcomes.

pub mod bayes;
pub mod bias;
pub mod config;
pub mod design;
pub mod error;
pub mod eval;
pub mod grid;
pub mod maxsprt;
pub mod num;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use grid::BetaGrid;

pub use bayes::{DecisionThreshold, GridPosterior, PriorSpec};
pub use design::{DesignSpec, LikelihoodProfile};
pub use maxsprt::{CriticalValue, SequentialDecision, SurveillanceSchedule};
pub use sim::{LookSnapshot, ScenarioConfig, SubjectTrajectory};
