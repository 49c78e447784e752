//! Fast-timescale planners: diffusion actor (D3PG), DDPG, DQN and the greedy
//! heuristic, plus the small MLP substrate they share.

pub mod config;
pub mod d3pg;
pub mod ddpg;
pub mod dqn;
pub mod greedy;
pub mod nn;
pub mod params;
pub mod replay;

use std::path::Path;

pub use config::AgentConfig;
pub use d3pg::{D3pgAgent, DiffusionSchedule, SampleMode};
pub use ddpg::DdpgAgent;
pub use dqn::DqnAgent;
pub use greedy::greedy_select;
pub use nn::{Activation, Adam, Mlp};
pub use replay::{ReplayBuffer, Transition};

use crate::env::{NodeKind, World};
use crate::error::Result;
use crate::sim::{EnvState, PlacementDecision};

/// What a planner emitted for one step, before decoding.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentAction {
    Continuous(Vec<f64>),
    Discrete(usize),
    Placement,
}

/// Canonical continuous encoding of a placement: +1 on the processing node's
/// score and -1 elsewhere, relay preference +1 (ground) / -1 (UAV) / 0, and
/// the power entry inverted from the affine power map.
pub fn encode_continuous(world: &World, decision: &PlacementDecision) -> Vec<f64> {
    let n = world.node_count();
    let mut a = vec![-1.0; n + 2];
    a[decision.processing_node] = 1.0;
    a[n] = if !decision.is_relayed() {
        0.0
    } else if world.kind(decision.access_node) == NodeKind::GroundBaseStation {
        1.0
    } else {
        -1.0
    };
    let e = &world.config.energy;
    let span = e.power_max_w - e.power_min_w;
    a[n + 1] = if span > 0.0 {
        (2.0 * (decision.power - e.power_min_w) / span - 1.0).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    a
}

#[derive(Debug, Clone)]
pub enum Agent {
    D3pg(Box<D3pgAgent>),
    Ddpg(Box<DdpgAgent>),
    Dqn(Box<DqnAgent>),
    Greedy,
}

impl Agent {
    /// Chooses an action for the current state and decodes it.
    pub fn act(
        &mut self,
        obs: &[f64],
        env: &EnvState,
        episode: usize,
        explore: bool,
        sigma: f64,
        epsilon_at: impl Fn(usize) -> f64,
    ) -> Result<(AgentAction, PlacementDecision)> {
        match self {
            Agent::D3pg(a) => {
                let action = a.select(obs, explore)?;
                let d = env.decode_continuous(&action)?;
                Ok((AgentAction::Continuous(action), d))
            }
            Agent::Ddpg(a) => {
                let action = a.select(obs, if explore { sigma } else { 0.0 })?;
                let d = env.decode_continuous(&action)?;
                Ok((AgentAction::Continuous(action), d))
            }
            Agent::Dqn(a) => {
                let eps = if explore { epsilon_at(episode) } else { 0.0 };
                let index = a.select(obs, eps)?;
                let d = env.decode_discrete(index)?;
                Ok((AgentAction::Discrete(index), d))
            }
            Agent::Greedy => Ok((AgentAction::Placement, greedy_select(env)?)),
        }
    }

    pub fn remember(&mut self, obs: Vec<f64>, action: AgentAction, reward: f64, next_obs: Vec<f64>, done: bool) {
        match (self, action) {
            (Agent::D3pg(a), AgentAction::Continuous(action)) => a.remember(Transition {
                obs,
                action,
                reward,
                next_obs,
                done,
            }),
            (Agent::Ddpg(a), AgentAction::Continuous(action)) => a.remember(Transition {
                obs,
                action,
                reward,
                next_obs,
                done,
            }),
            (Agent::Dqn(a), AgentAction::Discrete(action)) => a.remember(Transition {
                obs,
                action,
                reward,
                next_obs,
                done,
            }),
            _ => {}
        }
    }

    pub fn buffer_len(&self) -> usize {
        match self {
            Agent::D3pg(a) => a.buffer.len(),
            Agent::Ddpg(a) => a.buffer.len(),
            Agent::Dqn(a) => a.buffer.len(),
            Agent::Greedy => 0,
        }
    }

    pub fn train_step(&mut self) -> Result<Option<f64>> {
        match self {
            Agent::D3pg(a) => a.train_step(),
            Agent::Ddpg(a) => a.train_step(),
            Agent::Dqn(a) => a.train_step(),
            Agent::Greedy => Ok(None),
        }
    }

    pub fn is_learning(&self) -> bool {
        !matches!(self, Agent::Greedy)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            Agent::D3pg(a) => params::save(path, &a.nets()),
            Agent::Ddpg(a) => params::save(path, &a.nets()),
            Agent::Dqn(a) => params::save(path, &a.nets()),
            Agent::Greedy => Ok(()),
        }
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        match self {
            Agent::D3pg(a) => params::load_into(path, &mut a.nets_mut()),
            Agent::Ddpg(a) => params::load_into(path, &mut a.nets_mut()),
            Agent::Dqn(a) => params::load_into(path, &mut a.nets_mut()),
            Agent::Greedy => Ok(()),
        }
    }
}
