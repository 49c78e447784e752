//! Deterministic policy gradient actor-critic, shared critic machinery for
//! the diffusion planner.

use rand::SeedableRng;
use rand::Rng;
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;

use super::config::AgentConfig;
use super::nn::{soft_update, Activation, Adam, Mlp};
use super::replay::{Batch, ReplayBuffer, Transition};
use crate::error::Result;

/// `clamp(actor(obs) + sigma * N(0, I), -1, 1)`.
pub fn ddpg_select<R: Rng + ?Sized>(actor: &Mlp, obs: &[f64], sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
    let mut a = actor.forward(obs)?;
    for v in &mut a {
        let n: f64 = rng.sample(StandardNormal);
        *v = (*v + sigma * n).clamp(-1.0, 1.0);
    }
    Ok(a)
}

/// Row-wise concatenation of two row-major matrices.
pub(crate) fn concat_rows(a: &[f64], a_cols: usize, b: &[f64], b_cols: usize, rows: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * (a_cols + b_cols));
    for r in 0..rows {
        out.extend_from_slice(&a[r * a_cols..(r + 1) * a_cols]);
        out.extend_from_slice(&b[r * b_cols..(r + 1) * b_cols]);
    }
    out
}

/// Critic pair with target network and optimizer. Input is `obs ++ action`.
#[derive(Debug, Clone)]
pub struct Critic {
    pub net: Mlp,
    pub target: Mlp,
    opt: Adam,
    obs_dim: usize,
    action_dim: usize,
}

impl Critic {
    pub fn new(obs_dim: usize, action_dim: usize, config: &AgentConfig, rng: &mut Pcg64) -> Self {
        let net = Mlp::new(
            &config.layer_sizes(obs_dim + action_dim, 1),
            Activation::Identity,
            rng,
        );
        Self {
            target: net.clone(),
            opt: Adam::new(config.critic_rate, net.param_count()),
            net,
            obs_dim,
            action_dim,
        }
    }

    /// Regresses Q(s, a) toward `r + gamma * (1 - done) * Q_target(s', a')`
    /// with `next_actions` supplied by the caller's target policy.
    pub(crate) fn fit(
        &mut self,
        batch: &Batch,
        actions: &[f64],
        next_actions: &[f64],
        gamma: f64,
    ) -> Result<f64> {
        let n = batch.size;
        let next_in = concat_rows(&batch.next_obs, self.obs_dim, next_actions, self.action_dim, n);
        let q_next = self.target.forward_batch(&next_in, n)?;
        let input = concat_rows(&batch.obs, self.obs_dim, actions, self.action_dim, n);
        let tape = self.net.forward_batch(&input, n)?;
        let mut upstream = vec![0.0; n];
        let mut loss = 0.0;
        for r in 0..n {
            let bootstrap = if batch.dones[r] { 0.0 } else { gamma * q_next.output()[r] };
            let err = tape.output()[r] - (batch.rewards[r] + bootstrap);
            loss += 0.5 * err * err;
            upstream[r] = err / n as f64;
        }
        let mut grads = vec![0.0; self.net.param_count()];
        self.net.backward(&tape, &upstream, Some(&mut grads), false)?;
        self.opt.step(self.net.params_mut(), &grads);
        Ok(loss / n as f64)
    }

    /// Returns mean Q over the batch and `-dQ/da / n` per row, the upstream
    /// gradient for a policy that minimizes `-mean Q`.
    pub(crate) fn action_gradient(&self, obs: &[f64], actions: &[f64], n: usize) -> Result<(f64, Vec<f64>)> {
        let input = concat_rows(obs, self.obs_dim, actions, self.action_dim, n);
        let tape = self.net.forward_batch(&input, n)?;
        let mean_q = tape.output().iter().sum::<f64>() / n as f64;
        let upstream = vec![-1.0 / n as f64; n];
        let dinput = self
            .net
            .backward(&tape, &upstream, None, true)?
            .expect("input gradient requested");
        let width = self.obs_dim + self.action_dim;
        let mut da = Vec::with_capacity(n * self.action_dim);
        for r in 0..n {
            da.extend_from_slice(&dinput[r * width + self.obs_dim..(r + 1) * width]);
        }
        Ok((mean_q, da))
    }

    pub fn soft_update(&mut self, tau: f64) {
        soft_update(&mut self.target, &self.net, tau);
    }
}

#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub actor: Mlp,
    pub actor_target: Mlp,
    actor_opt: Adam,
    pub critic: Critic,
    pub buffer: ReplayBuffer<Vec<f64>>,
    config: AgentConfig,
    rng: Pcg64,
    obs_dim: usize,
    action_dim: usize,
    updates: usize,
}

impl DdpgAgent {
    pub fn new(obs_dim: usize, action_dim: usize, config: &AgentConfig, seed: u64) -> Self {
        let mut rng = Pcg64::seed_from_u64(seed);
        let actor = Mlp::with_output_scale(
            &config.layer_sizes(obs_dim, action_dim),
            Activation::Tanh,
            0.1,
            &mut rng,
        );
        let critic = Critic::new(obs_dim, action_dim, config, &mut rng);
        Self {
            actor_target: actor.clone(),
            actor_opt: Adam::new(config.actor_rate, actor.param_count()),
            actor,
            critic,
            buffer: ReplayBuffer::new(config.replay_capacity),
            config: config.clone(),
            rng,
            obs_dim,
            action_dim,
            updates: 0,
        }
    }

    pub fn select(&mut self, obs: &[f64], sigma: f64) -> Result<Vec<f64>> {
        ddpg_select(&self.actor, obs, sigma, &mut self.rng)
    }

    pub fn remember(&mut self, t: Transition<Vec<f64>>) {
        self.buffer.push(t);
    }

    pub fn train_step(&mut self) -> Result<Option<f64>> {
        ddpg_train_step(self)
    }

    pub fn nets(&self) -> Vec<&Mlp> {
        vec![&self.actor, &self.actor_target, &self.critic.net, &self.critic.target]
    }

    pub fn nets_mut(&mut self) -> Vec<&mut Mlp> {
        vec![
            &mut self.actor,
            &mut self.actor_target,
            &mut self.critic.net,
            &mut self.critic.target,
        ]
    }
}

/// Critic TD step, actor ascent along dQ/da, then soft target updates.
/// Returns the critic loss, or `None` for an empty buffer.
pub fn ddpg_train_step(agent: &mut DdpgAgent) -> Result<Option<f64>> {
    if agent.buffer.is_empty() {
        return Ok(None);
    }
    let idx = agent.buffer.sample_indices(agent.config.batch, &mut agent.rng);
    let batch = agent.buffer.gather(&idx);
    let n = batch.size;
    let mut actions = Vec::with_capacity(n * agent.action_dim);
    for &i in &idx {
        actions.extend_from_slice(&agent.buffer.get(i).action);
    }
    let next_actions = agent.actor_target.forward_batch(&batch.next_obs, n)?;
    let loss = agent
        .critic
        .fit(&batch, &actions, next_actions.output(), agent.config.gamma)?;

    agent.updates += 1;
    if agent.updates > agent.config.critic_warmup_updates {
        let policy = agent.actor.forward_batch(&batch.obs, n)?;
        let (_, upstream) = agent.critic.action_gradient(&batch.obs, policy.output(), n)?;
        let mut grads = vec![0.0; agent.actor.param_count()];
        agent.actor.backward(&policy, &upstream, Some(&mut grads), false)?;
        agent.actor_opt.step(agent.actor.params_mut(), &grads);
        soft_update(&mut agent.actor_target, &agent.actor, agent.config.tau);
    }
    agent.critic.soft_update(agent.config.tau);
    debug_assert_eq!(agent.obs_dim, agent.actor.input_dim());
    Ok(Some(loss))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_is_actor_output() {
        let mut rng = Pcg64::seed_from_u64(2);
        let actor = Mlp::new(&[22, 64, 64, 12], Activation::Tanh, &mut rng);
        let obs: Vec<f64> = (0..22).map(|i| i as f64 / 22.0).collect();
        let a = ddpg_select(&actor, &obs, 0.0, &mut rng).unwrap();
        assert_eq!(a, actor.forward(&obs).unwrap());
    }

    #[test]
    fn noisy_actions_are_clamped() {
        let mut rng = Pcg64::seed_from_u64(3);
        let actor = Mlp::new(&[4, 8, 12], Activation::Tanh, &mut rng);
        for _ in 0..100 {
            let a = ddpg_select(&actor, &[0.1, 0.2, 0.3, 0.4], 5.0, &mut rng).unwrap();
            assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn actor_moves_toward_better_action() {
        // reward = -(a0 - 0.5)^2 for a single-step problem
        let cfg = AgentConfig {
            batch: 32,
            actor_rate: 1e-3,
            ..AgentConfig::default()
        };
        let mut agent = DdpgAgent::new(1, 1, &cfg, 11);
        let mut rng = Pcg64::seed_from_u64(4);
        for _ in 0..512 {
            let a: f64 = rng.gen_range(-1.0..1.0);
            agent.remember(Transition {
                obs: vec![1.0],
                action: vec![a],
                reward: -(a - 0.5) * (a - 0.5),
                next_obs: vec![1.0],
                done: true,
            });
        }
        for _ in 0..3000 {
            agent.train_step().unwrap();
        }
        let a = agent.actor.forward(&[1.0]).unwrap()[0];
        assert!((a - 0.5).abs() < 0.1, "actor output {a}");
    }
}
