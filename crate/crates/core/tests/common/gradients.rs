//! Analytic gradients against central differences: critic TD loss, DPG actor
//! loss through a frozen critic, and the full eval-mode diffusion chain.
//! Each suite returns a report instead of panicking so the acceptance run can
//! print it.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use sagin_core::agents::d3pg::{chain_backward, chain_forward, critic_rows};
use sagin_core::agents::{Activation, DiffusionSchedule, Mlp};

const OBS: usize = 22;
const ACT: usize = 12;
const BATCH: usize = 4;
const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
pub const INSTANCES: u64 = 100;
const COORDS: usize = 24;

fn uniform(rng: &mut Pcg64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Relative error between two gradient vectors in the Euclidean norm.
fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = analytic
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        .sqrt()
        .max(numeric.iter().map(|b| b * b).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of `loss` with respect to the chosen parameters.
/// `loss` also returns the activation signature; a probe whose two sides
/// land on different linear pieces straddles a ReLU kink or clamp edge and
/// is skipped, as the difference quotient is meaningless there.
fn numeric_params(
    net: &Mlp,
    coords: &[usize],
    loss: impl Fn(&Mlp) -> (f64, Vec<bool>),
) -> Vec<Option<f64>> {
    let base = loss(net).1;
    let mut probe = net.clone();
    coords
        .iter()
        .map(|&i| {
            let x = probe.params()[i];
            probe.params_mut()[i] = x + H;
            let (up, sig_up) = loss(&probe);
            probe.params_mut()[i] = x - H;
            let (down, sig_down) = loss(&probe);
            probe.params_mut()[i] = x;
            (sig_up == base && sig_down == base).then(|| (up - down) / (2.0 * H))
        })
        .collect()
}

#[derive(Debug, Default)]
pub struct GradReport {
    pub instances: u64,
    pub worst: f64,
    pub skipped: usize,
    pub failures: Vec<String>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.instances == INSTANCES
    }

    fn skip(&mut self, inst: u64, skipped: usize) {
        self.skipped += skipped;
        if skipped * 4 >= COORDS {
            self.failures.push(format!("instance {inst}: {skipped} of {COORDS} probes straddle a kink"));
        }
    }

    fn check(&mut self, inst: u64, what: &str, e: f64) {
        if !(e < TOL) {
            self.failures.push(format!("instance {inst}: {what} rel error {e:e}"));
        }
        self.worst = self.worst.max(e);
    }
}

/// Keeps the coordinates with a usable difference quotient.
fn paired(analytic: impl Fn(usize) -> f64, coords: &[usize], numeric: &[Option<f64>]) -> (Vec<f64>, Vec<f64>, usize) {
    let mut a = Vec::new();
    let mut n = Vec::new();
    let mut skipped = 0;
    for (&i, fd) in coords.iter().zip(numeric) {
        match fd {
            Some(v) => {
                a.push(analytic(i));
                n.push(*v);
            }
            None => skipped += 1,
        }
    }
    (a, n, skipped)
}

fn pick(rng: &mut Pcg64, count: usize) -> Vec<usize> {
    (0..COORDS).map(|_| rng.gen_range(0..count)).collect()
}

fn critic_loss(critic: &Mlp, input: &[f64], targets: &[f64]) -> (f64, Vec<bool>) {
    let q = critic.forward_batch(input, BATCH).unwrap();
    let loss = q
        .output()
        .iter()
        .zip(targets)
        .map(|(q, y)| 0.5 * (q - y).powi(2))
        .sum::<f64>()
        / BATCH as f64;
    (loss, q.signature())
}

pub fn critic_suite() -> GradReport {
    let mut report = GradReport::default();
    for inst in 0..INSTANCES {
        report.instances += 1;
        let mut rng = Pcg64::seed_from_u64(1000 + inst);
        let critic = Mlp::new(&[OBS + ACT, 64, 64, 1], Activation::Identity, &mut rng);
        let obs = uniform(&mut rng, BATCH * OBS, 0.0, 1.0);
        let actions = uniform(&mut rng, BATCH * ACT, -1.0, 1.0);
        let targets = uniform(&mut rng, BATCH, -3.0, 0.0);
        let input = critic_rows(&obs, OBS, &actions, ACT, BATCH);

        let tape = critic.forward_batch(&input, BATCH).unwrap();
        let upstream: Vec<f64> = tape
            .output()
            .iter()
            .zip(&targets)
            .map(|(q, y)| (q - y) / BATCH as f64)
            .collect();
        let mut grads = vec![0.0; critic.param_count()];
        let dinput = critic.backward(&tape, &upstream, Some(&mut grads), true).unwrap().unwrap();

        let coords = pick(&mut rng, critic.param_count());
        let numeric = numeric_params(&critic, &coords, |c| critic_loss(c, &input, &targets));
        let (analytic, numeric, s) = paired(|i| grads[i], &coords, &numeric);
        report.skip(inst, s);
        report.check(inst, "parameter", rel_error(&analytic, &numeric));

        // input gradient, which the policy update relies on
        let base = tape.signature();
        let mut analytic_in = Vec::with_capacity(input.len());
        let mut numeric_in = Vec::with_capacity(input.len());
        let mut probe = input.clone();
        for i in 0..input.len() {
            let x = probe[i];
            probe[i] = x + H;
            let (up, sig_up) = critic_loss(&critic, &probe, &targets);
            probe[i] = x - H;
            let (down, sig_down) = critic_loss(&critic, &probe, &targets);
            probe[i] = x;
            if sig_up == base && sig_down == base {
                analytic_in.push(dinput[i]);
                numeric_in.push((up - down) / (2.0 * H));
            } else {
                report.skipped += 1;
            }
        }
        report.check(inst, "input", rel_error(&analytic_in, &numeric_in));
    }
    report
}

fn actor_loss(actor: &Mlp, critic: &Mlp, obs: &[f64]) -> (f64, Vec<bool>) {
    let a = actor.forward_batch(obs, BATCH).unwrap();
    let q = critic
        .forward_batch(&critic_rows(obs, OBS, a.output(), ACT, BATCH), BATCH)
        .unwrap();
    let mut sig = a.signature();
    sig.extend(q.signature());
    (-q.output().iter().sum::<f64>() / BATCH as f64, sig)
}

pub fn actor_suite() -> GradReport {
    let mut report = GradReport::default();
    for inst in 0..INSTANCES {
        report.instances += 1;
        let mut rng = Pcg64::seed_from_u64(2000 + inst);
        let actor = Mlp::new(&[OBS, 64, 64, ACT], Activation::Tanh, &mut rng);
        let critic = Mlp::new(&[OBS + ACT, 64, 64, 1], Activation::Identity, &mut rng);
        let obs = uniform(&mut rng, BATCH * OBS, 0.0, 1.0);

        let policy = actor.forward_batch(&obs, BATCH).unwrap();
        let input = critic_rows(&obs, OBS, policy.output(), ACT, BATCH);
        let q = critic.forward_batch(&input, BATCH).unwrap();
        let dq = critic
            .backward(&q, &vec![-1.0 / BATCH as f64; BATCH], None, true)
            .unwrap()
            .unwrap();
        let width = OBS + ACT;
        let upstream: Vec<f64> = (0..BATCH)
            .flat_map(|r| dq[r * width + OBS..(r + 1) * width].to_vec())
            .collect();
        let mut grads = vec![0.0; actor.param_count()];
        actor.backward(&policy, &upstream, Some(&mut grads), false).unwrap();

        let coords = pick(&mut rng, actor.param_count());
        let numeric = numeric_params(&actor, &coords, |a| actor_loss(a, &critic, &obs));
        let (analytic, numeric, s) = paired(|i| grads[i], &coords, &numeric);
        report.skip(inst, s);
        report.check(inst, "parameter", rel_error(&analytic, &numeric));
    }
    report
}

fn chain_loss(denoiser: &Mlp, obs: &[f64], weights: &[f64], schedule: &DiffusionSchedule) -> (f64, Vec<bool>) {
    let tape = chain_forward(denoiser, obs, BATCH, schedule).unwrap();
    let loss = tape.output().iter().zip(weights).map(|(a, w)| a * w).sum();
    (loss, tape.signature())
}

pub fn chain_suite() -> GradReport {
    let schedule = DiffusionSchedule::default();
    let mut report = GradReport::default();
    for inst in 0..INSTANCES {
        report.instances += 1;
        let mut rng = Pcg64::seed_from_u64(3000 + inst);
        let denoiser = Mlp::new(&[OBS + ACT + 1, 64, 64, ACT], Activation::Identity, &mut rng);
        let obs = uniform(&mut rng, BATCH * OBS, 0.0, 1.0);
        let weights = uniform(&mut rng, BATCH * ACT, -1.0, 1.0);

        let tape = chain_forward(&denoiser, &obs, BATCH, &schedule).unwrap();
        let mut grads = vec![0.0; denoiser.param_count()];
        chain_backward(&denoiser, &tape, &weights, &schedule, &mut grads).unwrap();

        let coords = pick(&mut rng, denoiser.param_count());
        let numeric = numeric_params(&denoiser, &coords, |d| chain_loss(d, &obs, &weights, &schedule));
        let (analytic, numeric, s) = paired(|i| grads[i], &coords, &numeric);
        report.skip(inst, s);
        report.check(inst, "parameter", rel_error(&analytic, &numeric));
    }
    report
}
