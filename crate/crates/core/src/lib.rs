//! Seedable space-air-ground network simulator with a MAPE-K control plane.
//!
//! The per-episode loop is: [`perceiver::monitor`] and [`perceiver::analyze`]
//! condense telemetry into a [`perceiver::SemanticState`], the
//! [`orchestrator::Orchestrator`] turns it into a penalty coefficient, a
//! planner from [`agents`] places each task in [`sim::EnvState`], and the
//! outcome lands in the [`knowledge::KnowledgeStore`] and the
//! [`learner::AdaptiveLearner`]. [`harness::run`] drives whole experiments.

pub mod agents;
pub mod alloc;
pub mod env;
pub mod error;
pub mod harness;
pub mod knowledge;
pub mod learner;
pub mod orchestrator;
pub mod perceiver;
pub mod sim;

pub use error::{Error, Result};
