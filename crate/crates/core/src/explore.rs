//! Exploration mechanisms: annealed epsilon-greedy action selection and
//! factorized Gaussian parameter noise for noisy layers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{argmax, Layer, LayerNoise, Network};
use crate::rng::RngStream;

/// Linearly annealed epsilon: `start` at step 0, `end` from `anneal_steps` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: u64,
}

impl EpsilonSchedule {
    pub fn new(start: f64, end: f64, anneal_steps: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&end) {
            return Err(Error::RejectedInput("epsilon bounds must lie in [0,1]".into()));
        }
        if start < end {
            return Err(Error::RejectedInput("epsilon start must be >= end".into()));
        }
        if anneal_steps == 0 {
            return Err(Error::RejectedInput("anneal_steps must be >= 1".into()));
        }
        Ok(Self { start, end, anneal_steps })
    }

    pub fn value(&self, step: u64) -> f64 {
        if step >= self.anneal_steps {
            return self.end;
        }
        let frac = step as f64 / self.anneal_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// `f(x) = sign(x) * sqrt(|x|)`, the factorized-noise shaping function.
pub fn noise_shape(x: f64) -> f64 {
    x.signum() * x.abs().sqrt()
}

/// Draws one factorized Gaussian noise sample for a layer of the given shape.
///
/// Independent unit Gaussians `eps_in` (length `in_dim`) and `eps_out`
/// (length `out_dim`) are shaped with [`noise_shape`]; the weight-noise entry
/// `(i, j)` is `f(eps_out[i]) * f(eps_in[j])` and the bias noise is
/// `f(eps_out[i])`, so the weight noise is a rank-1 outer product.
pub fn sample_factorized_noise(
    in_dim: usize,
    out_dim: usize,
    rng: &mut RngStream,
) -> LayerNoise {
    let eps_in: Vec<f64> = (0..in_dim).map(|_| noise_shape(rng.normal())).collect();
    let eps_out: Vec<f64> = (0..out_dim).map(|_| noise_shape(rng.normal())).collect();
    let weights = Matrix::from_fn(out_dim, in_dim, |i, j| eps_out[i] * eps_in[j]);
    LayerNoise { weights, biases: eps_out }
}

/// Resamples the noise of every noisy layer in the network.
///
/// Returns `false` (a warning flag, not an error) when the network has no
/// noisy layers and the call was a no-op. The agent enforces the usage
/// protocol: resample before each action selection, and give the online and
/// target networks one independent sample each per replay batch.
pub fn resample_noise(net: &mut Network, rng: &mut RngStream) -> bool {
    let mut any = false;
    for layer in net.layers_mut() {
        if let Layer::Noisy(noisy) = layer {
            let sample =
                sample_factorized_noise(noisy.mu_weights.cols(), noisy.mu_weights.rows(), rng);
            noisy.set_noise(sample).expect("sampled noise matches layer shape");
            any = true;
        }
    }
    any
}

/// Epsilon-greedy: uniform random action with probability `epsilon(step)`,
/// otherwise the argmax of `q` with ties broken by lowest index.
pub fn epsilon_greedy_action(
    q: &[f64],
    step: u64,
    sched: &EpsilonSchedule,
    rng: &mut RngStream,
) -> usize {
    debug_assert!(!q.is_empty());
    let eps = sched.value(step);
    if rng.uniform() < eps {
        rng.below(q.len())
    } else {
        argmax(q)
    }
}
