//! Deep Q-network over the discrete placement catalogue.

use rand::Rng;
use rand::SeedableRng;
use rand_pcg::Pcg64;

use super::config::AgentConfig;
use super::nn::{soft_update, Activation, Adam, Mlp};
use super::replay::{ReplayBuffer, Transition};
use crate::error::Result;

/// Epsilon-greedy choice. A uniform draw decides exploration; otherwise the
/// argmax of Q with ties going to the lowest index.
pub fn dqn_select<R: Rng + ?Sized>(q_net: &Mlp, obs: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    let n = q_net.output_dim();
    let u: f64 = rng.gen();
    if u < epsilon {
        return Ok(rng.gen_range(0..n));
    }
    let q = q_net.forward(obs)?;
    Ok(argmax(&q))
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One-step TD targets `r + gamma * (1 - done) * max_a Q_target(s', a)`.
pub fn td_targets(
    target_net: &Mlp,
    next_obs: &[f64],
    rewards: &[f64],
    dones: &[bool],
    gamma: f64,
) -> Result<Vec<f64>> {
    let batch = rewards.len();
    let tape = target_net.forward_batch(next_obs, batch)?;
    let n = target_net.output_dim();
    Ok((0..batch)
        .map(|r| {
            if dones[r] {
                rewards[r]
            } else {
                let row = &tape.output()[r * n..(r + 1) * n];
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                rewards[r] + gamma * max
            }
        })
        .collect())
}

/// Squared TD loss step on a sampled batch followed by a soft target
/// update. Returns the batch loss, or `None` when the buffer is empty.
pub fn dqn_train_step(
    buffer: &ReplayBuffer<usize>,
    q_net: &mut Mlp,
    target_net: &mut Mlp,
    opt: &mut Adam,
    config: &AgentConfig,
    rng: &mut Pcg64,
) -> Result<Option<f64>> {
    if buffer.is_empty() {
        return Ok(None);
    }
    let idx = buffer.sample_indices(config.batch, rng);
    let batch = buffer.gather(&idx);
    let targets = td_targets(target_net, &batch.next_obs, &batch.rewards, &batch.dones, config.gamma)?;
    let tape = q_net.forward_batch(&batch.obs, batch.size)?;
    let n = q_net.output_dim();
    let mut upstream = vec![0.0; batch.size * n];
    let mut loss = 0.0;
    for (r, &i) in idx.iter().enumerate() {
        let a = buffer.get(i).action;
        let err = tape.output()[r * n + a] - targets[r];
        loss += 0.5 * err * err;
        upstream[r * n + a] = err / batch.size as f64;
    }
    let mut grads = vec![0.0; q_net.param_count()];
    q_net.backward(&tape, &upstream, Some(&mut grads), false)?;
    opt.step(q_net.params_mut(), &grads);
    soft_update(target_net, q_net, config.tau);
    Ok(Some(loss / batch.size as f64))
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub q_net: Mlp,
    pub target_net: Mlp,
    opt: Adam,
    pub buffer: ReplayBuffer<usize>,
    config: AgentConfig,
    rng: Pcg64,
}

impl DqnAgent {
    pub fn new(obs_dim: usize, actions: usize, config: &AgentConfig, seed: u64) -> Self {
        let mut rng = Pcg64::seed_from_u64(seed);
        let q_net = Mlp::new(&config.layer_sizes(obs_dim, actions), Activation::Identity, &mut rng);
        Self {
            target_net: q_net.clone(),
            opt: Adam::new(config.critic_rate, q_net.param_count()),
            q_net,
            buffer: ReplayBuffer::new(config.replay_capacity),
            config: config.clone(),
            rng,
        }
    }

    pub fn select(&mut self, obs: &[f64], epsilon: f64) -> Result<usize> {
        dqn_select(&self.q_net, obs, epsilon, &mut self.rng)
    }

    pub fn remember(&mut self, t: Transition<usize>) {
        self.buffer.push(t);
    }

    pub fn train_step(&mut self) -> Result<Option<f64>> {
        dqn_train_step(
            &self.buffer,
            &mut self.q_net,
            &mut self.target_net,
            &mut self.opt,
            &self.config,
            &mut self.rng,
        )
    }

    pub fn nets(&self) -> Vec<&Mlp> {
        vec![&self.q_net, &self.target_net]
    }

    pub fn nets_mut(&mut self) -> Vec<&mut Mlp> {
        vec![&mut self.q_net, &mut self.target_net]
    }
}
