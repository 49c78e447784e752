//! Diffusion actor trained by deterministic policy gradient.
//!
//! The actor is a conditional denoiser `f(obs, a, k/K)` driving a K-step
//! chain `a <- clamp(a - beta_k * f(obs, a, k/K), -1, 1)` for `k = K..1`.
//! Evaluation starts the chain from the zero vector; exploration starts from
//! a standard Gaussian and adds clamped Gaussian noise after every step.
//! Policy gradients flow through all K clamped steps; a clamp passes the
//! gradient strictly inside `(-1, 1)` and blocks it at the bounds.
//!
//! Warm starting regresses the denoiser onto stored (obs, action) pairs. With
//! `c_k = beta_1 + ... + beta_k`, a stored action `a*` is perturbed to
//! `a_k = clamp(a* + (c_k / c_K) * eps)` and the denoiser is fit to
//! `(a_k - a*) / c_k`, which equals the injected noise `eps / c_K` away from
//! the bounds. A perfect fit makes every chain step remove the fraction
//! `beta_k / c_k` of the remaining gap, so the last step lands on `a*`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;

use super::config::AgentConfig;
use super::ddpg::{concat_rows, Critic};
use super::nn::{soft_update, Activation, Adam, Mlp, Tape};
use super::replay::{ReplayBuffer, Transition};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    betas: Vec<f64>,
}

impl DiffusionSchedule {
    /// `steps` betas spaced linearly from `beta_min` (k = 1) to `beta_max` (k = K).
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::config("agent.diffusion_steps", "must be at least 1"));
        }
        let betas: Vec<f64> = if steps == 1 {
            vec![beta_max]
        } else {
            (0..steps)
                .map(|i| beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64)
                .collect()
        };
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::config("agent.diffusion_steps", "must be at least 1"));
        }
        if betas.iter().any(|&b| !(b > 0.0 && b <= 1.0)) {
            return Err(Error::config("agent.beta", "every beta must lie in (0, 1]"));
        }
        if betas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("agent.beta", "betas must be strictly increasing"));
        }
        Ok(Self { betas })
    }

    pub fn from_config(config: &AgentConfig) -> Result<Self> {
        Self::linear(config.diffusion_steps, config.beta_min, config.beta_max)
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `beta_k` for `k` in `1..=K`.
    pub fn beta(&self, k: usize) -> f64 {
        self.betas[k - 1]
    }

    fn cumulative(&self, k: usize) -> f64 {
        self.betas[..k].iter().sum()
    }

    fn embedding(&self, k: usize) -> f64 {
        k as f64 / self.steps() as f64
    }
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        Self::linear(5, 1e-4, 0.1).expect("default schedule is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleMode {
    Eval,
    Explore { sigma: f64 },
}

fn denoiser_rows(obs: &[f64], obs_dim: usize, a: &[f64], action_dim: usize, embed: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * (obs_dim + action_dim + 1));
    for r in 0..n {
        out.extend_from_slice(&obs[r * obs_dim..(r + 1) * obs_dim]);
        out.extend_from_slice(&a[r * action_dim..(r + 1) * action_dim]);
        out.push(embed);
    }
    out
}

fn action_dim_of(denoiser: &Mlp) -> usize {
    denoiser.output_dim()
}

fn obs_dim_of(denoiser: &Mlp) -> usize {
    denoiser.input_dim() - denoiser.output_dim() - 1
}

/// Runs the denoising chain for one observation.
pub fn d3pg_sample<R: Rng + ?Sized>(
    denoiser: &Mlp,
    obs: &[f64],
    schedule: &DiffusionSchedule,
    mode: SampleMode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let action_dim = action_dim_of(denoiser);
    let obs_dim = obs_dim_of(denoiser);
    if obs.len() != obs_dim {
        return Err(Error::Shape {
            context: "diffusion observation",
            expected: obs_dim,
            got: obs.len(),
        });
    }
    let mut a: Vec<f64> = match mode {
        SampleMode::Eval => vec![0.0; action_dim],
        SampleMode::Explore { .. } => (0..action_dim).map(|_| rng.sample(StandardNormal)).collect(),
    };
    let mut input = Vec::with_capacity(denoiser.input_dim());
    for k in (1..=schedule.steps()).rev() {
        input.clear();
        input.extend_from_slice(obs);
        input.extend_from_slice(&a);
        input.push(schedule.embedding(k));
        let f = denoiser.forward(&input)?;
        let beta = schedule.beta(k);
        for (ai, fi) in a.iter_mut().zip(&f) {
            *ai = (*ai - beta * fi).clamp(-1.0, 1.0);
        }
        if let SampleMode::Explore { sigma } = mode {
            for ai in &mut a {
                let n: f64 = rng.sample(StandardNormal);
                *ai = (*ai + sigma * n).clamp(-1.0, 1.0);
            }
        }
    }
    Ok(a)
}

/// Recorded eval-mode chain over a batch, for backpropagation.
pub struct ChainTape {
    n: usize,
    /// One entry per executed step, in execution order (k = K first).
    steps: Vec<(usize, Tape, Vec<bool>)>,
    output: Vec<f64>,
}

impl ChainTape {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// Pre-activation signs of every step followed by the clamp masks.
    pub fn signature(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for (_, tape, mask) in &self.steps {
            out.extend(tape.signature());
            out.extend_from_slice(mask);
        }
        out
    }
}

/// Eval-mode chain over `n` observations starting from zero actions.
pub fn chain_forward(denoiser: &Mlp, obs: &[f64], n: usize, schedule: &DiffusionSchedule) -> Result<ChainTape> {
    let action_dim = action_dim_of(denoiser);
    let obs_dim = obs_dim_of(denoiser);
    if obs.len() != n * obs_dim {
        return Err(Error::Shape {
            context: "diffusion observation batch",
            expected: n * obs_dim,
            got: obs.len(),
        });
    }
    let mut a = vec![0.0; n * action_dim];
    let mut steps = Vec::with_capacity(schedule.steps());
    for k in (1..=schedule.steps()).rev() {
        let input = denoiser_rows(obs, obs_dim, &a, action_dim, schedule.embedding(k), n);
        let tape = denoiser.forward_batch(&input, n)?;
        let beta = schedule.beta(k);
        let mut mask = Vec::with_capacity(a.len());
        for (ai, fi) in a.iter_mut().zip(tape.output()) {
            let pre = *ai - beta * fi;
            mask.push(pre > -1.0 && pre < 1.0);
            *ai = pre.clamp(-1.0, 1.0);
        }
        steps.push((k, tape, mask));
    }
    Ok(ChainTape { n, steps, output: a })
}

/// Backpropagates `upstream = dL/da_0` through the chain, accumulating
/// denoiser parameter gradients into `grads`.
pub fn chain_backward(
    denoiser: &Mlp,
    tape: &ChainTape,
    upstream: &[f64],
    schedule: &DiffusionSchedule,
    grads: &mut [f64],
) -> Result<()> {
    let action_dim = action_dim_of(denoiser);
    let obs_dim = obs_dim_of(denoiser);
    let width = denoiser.input_dim();
    if upstream.len() != tape.n * action_dim {
        return Err(Error::Shape {
            context: "diffusion upstream gradient",
            expected: tape.n * action_dim,
            got: upstream.len(),
        });
    }
    let mut g = upstream.to_vec();
    for (i, (k, step_tape, mask)) in tape.steps.iter().enumerate().rev() {
        let beta = schedule.beta(*k);
        for (gi, &m) in g.iter_mut().zip(mask) {
            if !m {
                *gi = 0.0;
            }
        }
        let df: Vec<f64> = g.iter().map(|gi| -beta * gi).collect();
        // the first executed step starts from a constant, so its input gradient is unused
        let want_input = i > 0;
        let dx = denoiser.backward(step_tape, &df, Some(grads), want_input)?;
        if let Some(dx) = dx {
            for r in 0..tape.n {
                let src = &dx[r * width + obs_dim..r * width + obs_dim + action_dim];
                for (gi, d) in g[r * action_dim..(r + 1) * action_dim].iter_mut().zip(src) {
                    *gi += d;
                }
            }
        }
    }
    Ok(())
}

/// Denoising regression of the chain onto stored (obs, action) pairs.
/// Returns the mean loss of the last epoch, or `None` when nothing ran.
pub fn pretrain_denoiser(
    pairs: &[(Vec<f64>, Vec<f64>)],
    denoiser: &mut Mlp,
    schedule: &DiffusionSchedule,
    epochs: usize,
    rate: f64,
    batch: usize,
    rng: &mut Pcg64,
) -> Result<Option<f64>> {
    if pairs.is_empty() || epochs == 0 {
        return Ok(None);
    }
    let action_dim = action_dim_of(denoiser);
    let obs_dim = obs_dim_of(denoiser);
    let steps = schedule.steps();
    let total = schedule.cumulative(steps);
    let mut opt = Adam::new(rate, denoiser.param_count());
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut last = None;
    for _ in 0..epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch.max(1)) {
            let n = chunk.len();
            let mut input = Vec::with_capacity(n * denoiser.input_dim());
            let mut targets = Vec::with_capacity(n * action_dim);
            for &i in chunk {
                let (obs, target_action) = &pairs[i];
                if obs.len() != obs_dim || target_action.len() != action_dim {
                    return Err(Error::Shape {
                        context: "pretraining pair",
                        expected: obs_dim + action_dim,
                        got: obs.len() + target_action.len(),
                    });
                }
                let k = rng.gen_range(1..=steps);
                let c_k = schedule.cumulative(k);
                let scale = c_k / total;
                input.extend_from_slice(obs);
                let mut noisy = Vec::with_capacity(action_dim);
                for &a in target_action {
                    let eps: f64 = rng.sample(StandardNormal);
                    noisy.push((a + scale * eps).clamp(-1.0, 1.0));
                }
                for (x, &a) in noisy.iter().zip(target_action) {
                    targets.push((x - a) / c_k);
                }

                input.extend_from_slice(&noisy);
                input.push(schedule.embedding(k));
            }
            let tape = denoiser.forward_batch(&input, n)?;
            let mut upstream = vec![0.0; n * action_dim];
            let mut loss = 0.0;
            for ((u, &o), &t) in upstream.iter_mut().zip(tape.output()).zip(&targets) {
                let err = o - t;
                loss += 0.5 * err * err;
                *u = err / n as f64;
            }
            epoch_loss += loss;
            let mut grads = vec![0.0; denoiser.param_count()];
            denoiser.backward(&tape, &upstream, Some(&mut grads), false)?;
            opt.step(denoiser.params_mut(), &grads);
        }
        last = Some(epoch_loss / pairs.len() as f64);
    }
    Ok(last)
}

#[derive(Debug, Clone)]
pub struct D3pgAgent {
    pub denoiser: Mlp,
    pub denoiser_target: Mlp,
    opt: Adam,
    pub critic: Critic,
    pub buffer: ReplayBuffer<Vec<f64>>,
    pub schedule: DiffusionSchedule,
    config: AgentConfig,
    rng: Pcg64,
    action_dim: usize,
    updates: usize,
}

impl D3pgAgent {
    pub fn new(obs_dim: usize, action_dim: usize, config: &AgentConfig, seed: u64) -> Result<Self> {
        let schedule = DiffusionSchedule::from_config(config)?;
        let mut rng = Pcg64::seed_from_u64(seed);
        let denoiser = Mlp::new(
            &config.layer_sizes(obs_dim + action_dim + 1, action_dim),
            Activation::Identity,
            &mut rng,
        );
        let critic = Critic::new(obs_dim, action_dim, config, &mut rng);
        Ok(Self {
            denoiser_target: denoiser.clone(),
            opt: Adam::new(config.actor_rate, denoiser.param_count()),
            denoiser,
            critic,
            buffer: ReplayBuffer::new(config.replay_capacity),
            schedule,
            config: config.clone(),
            rng,
            action_dim,
            updates: 0,
        })
    }

    pub fn select(&mut self, obs: &[f64], explore: bool) -> Result<Vec<f64>> {
        let mode = if explore {
            SampleMode::Explore {
                sigma: self.config.exploration_sigma,
            }
        } else {
            SampleMode::Eval
        };
        d3pg_sample(&self.denoiser, obs, &self.schedule, mode, &mut self.rng)
    }

    pub fn remember(&mut self, t: Transition<Vec<f64>>) {
        self.buffer.push(t);
    }

    /// Warm start from stored (obs, action) pairs; the target denoiser is
    /// synchronized afterwards.
    pub fn warm_start(&mut self, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<Option<f64>> {
        let loss = pretrain_denoiser(
            pairs,
            &mut self.denoiser,
            &self.schedule,
            self.config.pretrain_epochs,
            self.config.pretrain_rate,
            self.config.batch,
            &mut self.rng,
        )?;
        self.denoiser_target = self.denoiser.clone();
        Ok(loss)
    }

    pub fn train_step(&mut self) -> Result<Option<f64>> {
        d3pg_train_step(self)
    }

    pub fn nets(&self) -> Vec<&Mlp> {
        vec![
            &self.denoiser,
            &self.denoiser_target,
            &self.critic.net,
            &self.critic.target,
        ]
    }

    pub fn nets_mut(&mut self) -> Vec<&mut Mlp> {
        vec![
            &mut self.denoiser,
            &mut self.denoiser_target,
            &mut self.critic.net,
            &mut self.critic.target,
        ]
    }
}

/// Critic TD step with eval-mode target-chain next actions, then policy
/// ascent on Q(s, a_0) through the whole chain, then soft updates.
pub fn d3pg_train_step(agent: &mut D3pgAgent) -> Result<Option<f64>> {
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
    let next = chain_forward(&agent.denoiser_target, &batch.next_obs, n, &agent.schedule)?;
    let loss = agent.critic.fit(&batch, &actions, next.output(), agent.config.gamma)?;

    agent.updates += 1;
    if agent.updates > agent.config.critic_warmup_updates {
        let chain = chain_forward(&agent.denoiser, &batch.obs, n, &agent.schedule)?;
        let (_, upstream) = agent.critic.action_gradient(&batch.obs, chain.output(), n)?;
        let mut grads = vec![0.0; agent.denoiser.param_count()];
        chain_backward(&agent.denoiser, &chain, &upstream, &agent.schedule, &mut grads)?;
        agent.opt.step(agent.denoiser.params_mut(), &grads);
        soft_update(&mut agent.denoiser_target, &agent.denoiser, agent.config.tau);
    }
    agent.critic.soft_update(agent.config.tau);
    Ok(Some(loss))
}

/// Critic input for a batch of chain outputs; exposed for gradient tests.
pub fn critic_rows(obs: &[f64], obs_dim: usize, actions: &[f64], action_dim: usize, n: usize) -> Vec<f64> {
    concat_rows(obs, obs_dim, actions, action_dim, n)
}
