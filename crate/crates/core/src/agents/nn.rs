//! Minimal dense MLP with hand-written reverse-mode gradients, Adam, and
//! soft target updates.
//!
//! Parameters live in one flat vector. Layer `l` stores its weight matrix as
//! `[fan_in][fan_out]` row-major followed by its bias vector, so a forward
//! pass is `y = x W + b`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    output: Activation,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Activations recorded by `forward_batch` for a later `backward`.
#[derive(Debug, Clone)]
pub struct Tape {
    batch: usize,
    /// `acts[l]` is the input of layer `l`; the last entry is the network output.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape has at least one layer")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Sign of every pre-activation. Two tapes with the same signature lie
    /// on the same linear piece of any ReLU layer, which gradient checks use
    /// to skip probes that straddle a kink.
    pub fn signature(&self) -> Vec<bool> {
        self.pre.iter().flatten().map(|&p| p > 0.0).collect()
    }
}

fn layer_offsets(sizes: &[usize]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(sizes.len().saturating_sub(1));
    let mut total = 0;
    for pair in sizes.windows(2) {
        offsets.push(total);
        total += pair[0] * pair[1] + pair[1];
    }
    (offsets, total)
}

/// `c += a * b` for row-major `c` (m x n); `a` (m x k) and `b` (k x n) are
/// given as (data, row stride, column stride).
fn gemm(m: usize, k: usize, n: usize, a: (&[f64], usize, usize), b: (&[f64], usize, usize), c: &mut [f64]) {
    assert!(c.len() >= m * n);
    assert!(m == 0 || k == 0 || a.0.len() > (m - 1) * a.1 + (k - 1) * a.2);
    assert!(k == 0 || n == 0 || b.0.len() > (k - 1) * b.1 + (n - 1) * b.2);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl Mlp {
    /// Uniform fan-in initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: Activation, rng: &mut R) -> Self {
        Self::with_output_scale(sizes, output, 1.0, rng)
    }

    /// As `new`, with the final layer's initial range multiplied by `scale`.
    pub fn with_output_scale<R: Rng + ?Sized>(
        sizes: &[usize],
        output: Activation,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least one layer");
        let (offsets, total) = layer_offsets(sizes);
        let mut params = vec![0.0; total];
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (fi, fo) = (sizes[l], sizes[l + 1]);
            let mut bound = 1.0 / (fi as f64).sqrt();
            if l + 1 == layers {
                bound *= scale;
            }
            let start = offsets[l];
            for p in &mut params[start..start + fi * fo + fo] {
                *p = if bound > 0.0 {
                    rng.gen_range(-bound..=bound)
                } else {
                    0.0
                };
            }
        }
        Self {
            sizes: sizes.to_vec(),
            output,
            params,
            offsets,
        }
    }

    pub fn from_params(sizes: &[usize], output: Activation, params: Vec<f64>) -> Result<Self> {
        let (offsets, total) = layer_offsets(sizes);
        if params.len() != total {
            return Err(Error::Shape {
                context: "mlp parameters",
                expected: total,
                got: params.len(),
            });
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            output,
            params,
            offsets,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layer_count() {
            self.output
        } else {
            Activation::Relu
        }
    }

    fn weights(&self, layer: usize) -> (&[f64], &[f64]) {
        let (fi, fo) = (self.sizes[layer], self.sizes[layer + 1]);
        let start = self.offsets[layer];
        let w = &self.params[start..start + fi * fo];
        let b = &self.params[start + fi * fo..start + fi * fo + fo];
        (w, b)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(x, 1)?.acts.pop().unwrap())
    }

    /// Forward pass over `batch` row-major inputs, recording a tape.
    pub fn forward_batch(&self, x: &[f64], batch: usize) -> Result<Tape> {
        let fi0 = self.input_dim();
        if x.len() != batch * fi0 {
            return Err(Error::Shape {
                context: "mlp input",
                expected: batch * fi0,
                got: x.len(),
            });
        }
        let layers = self.layer_count();
        let mut acts = Vec::with_capacity(layers + 1);
        let mut pre = Vec::with_capacity(layers);
        acts.push(x.to_vec());
        for l in 0..layers {
            let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.weights(l);
            let input = &acts[l];
            let mut z = vec![0.0; batch * fo];
            for zr in z.chunks_exact_mut(fo) {
                zr.copy_from_slice(b);
            }
            gemm(batch, fi, fo, (input, fi, 1), (w, fo, 1), &mut z);
            let act = self.activation(l);
            let a: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
            pre.push(z);
            acts.push(a);
        }
        Ok(Tape { batch, acts, pre })
    }

    /// Reverse pass. `upstream` is dLoss/dOutput for every row of the tape.
    /// Parameter gradients are accumulated into `grads` when given; the
    /// input gradient is returned when `want_input` is set.
    pub fn backward(
        &self,
        tape: &Tape,
        upstream: &[f64],
        mut grads: Option<&mut [f64]>,
        want_input: bool,
    ) -> Result<Option<Vec<f64>>> {
        let batch = tape.batch;
        if upstream.len() != batch * self.output_dim() {
            return Err(Error::Shape {
                context: "mlp upstream gradient",
                expected: batch * self.output_dim(),
                got: upstream.len(),
            });
        }
        if let Some(g) = grads.as_deref() {
            if g.len() != self.params.len() {
                return Err(Error::Shape {
                    context: "mlp gradient buffer",
                    expected: self.params.len(),
                    got: g.len(),
                });
            }
        }
        let layers = self.layer_count();
        let mut delta = upstream.to_vec();
        for l in (0..layers).rev() {
            let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
            let act = self.activation(l);
            let pre = &tape.pre[l];
            let out = &tape.acts[l + 1];
            for ((d, &p), &o) in delta.iter_mut().zip(pre).zip(out) {
                *d *= act.derivative(p, o);
            }
            let input = &tape.acts[l];
            if let Some(g) = grads.as_deref_mut() {
                let start = self.offsets[l];
                let (gw, gb) = g[start..start + fi * fo + fo].split_at_mut(fi * fo);
                // dW += X^T delta
                gemm(fi, batch, fo, (input, 1, fi), (&delta, fo, 1), gw);
                for dr in delta.chunks_exact(fo) {
                    axpy(1.0, dr, gb);
                }
            }
            if l == 0 && !want_input {
                return Ok(None);
            }
            let (w, _) = self.weights(l);
            let mut next = vec![0.0; batch * fi];
            // delta W^T
            gemm(batch, fo, fi, (&delta, fo, 1), (w, 1, fo), &mut next);
            delta = next;
        }
        Ok(Some(delta))
    }
}

/// Gradients of `upstream · net(x)` with respect to all parameters and to
/// the input, for a single input vector.
pub fn mlp_gradients(net: &Mlp, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let tape = net.forward_batch(x, 1)?;
    let mut grads = vec![0.0; net.param_count()];
    let input = net
        .backward(&tape, upstream, Some(&mut grads), true)?
        .expect("input gradient requested");
    Ok((grads, input))
}

/// `target <- tau * online + (1 - tau) * target`, element-wise.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    debug_assert_eq!(target.sizes, online.sizes);
    for (t, &o) in target.params.iter_mut().zip(&online.params) {
        *t = tau * o + (1.0 - tau) * *t;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(rate: f64, param_count: usize) -> Self {
        Self {
            rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    /// Descent step on `params` along `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let step = self.rate * bc2.sqrt() / bc1;
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= step * *m / (v.sqrt() + self.eps);
        }
    }
}
