use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Learning hyperparameters shared by the RL planners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub actor_rate: f64,
    pub critic_rate: f64,
    pub batch: usize,
    pub tau: f64,
    pub hidden: Vec<usize>,
    pub replay_capacity: usize,
    /// Gaussian exploration noise for DDPG and for explore-mode diffusion sampling.
    pub exploration_sigma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: usize,
    /// One gradient update every `train_every` environment steps.
    pub train_every: usize,
    /// Transitions collected before the first update.
    pub warmup_transitions: usize,
    /// Critic-only updates before the policy network starts following dQ/da.
    pub critic_warmup_updates: usize,
    pub diffusion_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Greedy-controller episodes logged to the knowledge store before a
    /// diffusion planner is warm-started.
    pub demo_episodes: usize,
    pub pretrain_top_k: usize,
    pub pretrain_epochs: usize,
    pub pretrain_rate: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            actor_rate: 1e-4,
            critic_rate: 1e-3,
            batch: 64,
            tau: 0.005,
            hidden: vec![64, 64],
            replay_capacity: 50_000,
            exploration_sigma: 0.1,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_episodes: 500,
            train_every: 2,
            warmup_transitions: 1000,
            critic_warmup_updates: 2000,
            diffusion_steps: 5,
            beta_min: 1e-4,
            beta_max: 0.1,
            demo_episodes: 100,
            pretrain_top_k: 100,
            pretrain_epochs: 200,
            pretrain_rate: 1e-3,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("agent.gamma", "must lie in (0, 1]"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("agent.tau", "must lie in (0, 1]"));
        }
        for (field, v) in [
            ("agent.actor_rate", self.actor_rate),
            ("agent.critic_rate", self.critic_rate),
            ("agent.pretrain_rate", self.pretrain_rate),
        ] {
            if !(v > 0.0) {
                return Err(Error::config(field, "must be strictly positive"));
            }
        }
        if self.batch == 0 || self.replay_capacity == 0 || self.train_every == 0 {
            return Err(Error::config(
                "agent",
                "batch, replay_capacity and train_every must be positive",
            ));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("agent.hidden", "need at least one non-empty layer"));
        }
        if self.diffusion_steps == 0 {
            return Err(Error::config("agent.diffusion_steps", "must be at least 1"));
        }
        if !(0.0 < self.beta_min && self.beta_min <= self.beta_max && self.beta_max < 1.0)
            || (self.diffusion_steps > 1 && self.beta_min == self.beta_max)
        {
            return Err(Error::config(
                "agent.beta_min",
                "need 0 < beta_min < beta_max < 1",
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon_end) || !(0.0..=1.0).contains(&self.epsilon_start) {
            return Err(Error::config("agent.epsilon_start", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Linear epsilon schedule for the DQN planner.
    pub fn epsilon(&self, episode: usize) -> f64 {
        if episode >= self.epsilon_decay_episodes {
            return self.epsilon_end;
        }
        let frac = (episode as f64 / self.epsilon_decay_episodes as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    pub(crate) fn layer_sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(output);
        sizes
    }
}
