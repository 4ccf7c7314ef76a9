use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam over an ordered list of parameter tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub hp: AdamParams,
    pub t: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(sizes: &[usize], hp: AdamParams) -> Self {
        AdamState {
            hp,
            t: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.first.iter().map(Vec::len).collect()
    }

    /// One step. Nothing is modified when any gradient entry is non-finite.
    pub fn update(&mut self, params: &mut [&mut Tensor], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Config(format!(
                "adam: state tracks {} tensors, got {} params and {} gradients",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.numel() != self.first[k].len() || g.len() != self.first[k].len() {
                return Err(Error::Config(format!(
                    "adam: tensor {k} has {} values, gradient {}, state {}",
                    p.numel(),
                    g.len(),
                    self.first[k].len()
                )));
            }
            if let Some(bad) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "adam: non-finite gradient {} at tensor {k}, entry {bad} (step {})",
                    g[bad], self.t
                )));
            }
        }
        self.t += 1;
        let AdamParams { lr, beta1, beta2, eps } = self.hp;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (k, p) in params.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.first[k], &mut self.second[k], &grads[k]);
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Generalized regularized dual averaging hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrdaParams {
    /// Learning rate γ.
    pub lr: f64,
    pub c: f64,
    pub mu: f64,
}

impl Default for GrdaParams {
    fn default() -> Self {
        GrdaParams {
            lr: 1e-3,
            c: 0.5,
            mu: 0.8,
        }
    }
}

impl GrdaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("grda learning rate must be > 0, got {}", self.lr)));
        }
        if !(self.c >= 0.0) || !(self.mu >= 0.0) {
            return Err(Error::Config(format!(
                "grda c and mu must be non-negative, got c={} mu={}",
                self.c, self.mu
            )));
        }
        Ok(())
    }

    /// Soft-threshold after `t` updates: `c·γ^½·(t·γ)^μ`.
    pub fn threshold(&self, t: u64) -> f64 {
        self.c * self.lr.sqrt() * (t as f64 * self.lr).powf(self.mu)
    }
}

/// gRDA state for a vector of gated scalars.
///
/// The accumulator holds `w0 − γ·Σ g`; the emitted weight is its
/// soft-thresholded value. Each coordinate keeps its own step counter so a
/// single coordinate can be reset without disturbing the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrdaState {
    pub hp: GrdaParams,
    weight: Vec<f64>,
    accum: Vec<f64>,
    init: Vec<f64>,
    steps: Vec<u64>,
}

impl GrdaState {
    pub fn new(init: Vec<f64>, hp: GrdaParams) -> Result<Self> {
        hp.validate()?;
        Ok(GrdaState {
            hp,
            weight: init.clone(),
            accum: init.clone(),
            steps: vec![0; init.len()],
            init,
        })
    }

    pub fn len(&self) -> usize {
        self.weight.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weight.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weight[k]
    }

    pub fn accumulator(&self, k: usize) -> f64 {
        self.accum[k]
    }

    pub fn initial(&self, k: usize) -> f64 {
        self.init[k]
    }

    pub fn steps(&self, k: usize) -> u64 {
        self.steps[k]
    }

    /// Updates every coordinate.
    pub fn update(&mut self, grads: &[f64]) -> Result<()> {
        self.update_where(grads, |_| true)
    }

    /// Updates the coordinates for which `active` holds; the rest are left
    /// untouched, counters included.
    pub fn update_where(&mut self, grads: &[f64], active: impl Fn(usize) -> bool) -> Result<()> {
        if grads.len() != self.weight.len() {
            return Err(Error::Config(format!(
                "grda: {} gradients for {} weights",
                grads.len(),
                self.weight.len()
            )));
        }
        if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("grda: non-finite gradient at {bad}")));
        }
        for (k, g) in grads.iter().enumerate() {
            if !active(k) {
                continue;
            }
            self.accum[k] -= self.hp.lr * g;
            self.steps[k] += 1;
            let tau = self.hp.threshold(self.steps[k]);
            self.weight[k] = soft_threshold(self.accum[k], tau);
        }
        Ok(())
    }

    /// Restarts coordinate `k` at `value` with a fresh counter.
    pub fn reset(&mut self, k: usize, value: f64) {
        self.weight[k] = value;
        self.accum[k] = value;
        self.init[k] = value;
        self.steps[k] = 0;
    }

    /// Copies coordinate `j` of `other` into coordinate `k`, so the copied
    /// relevance is exactly the donor's current output.
    pub fn copy_coord(&mut self, k: usize, other: &GrdaState, j: usize) {
        self.weight[k] = other.weight[j];
        self.accum[k] = other.accum[j];
        self.init[k] = other.init[j];
        self.steps[k] = other.steps[j];
    }

    /// Overwrites a weight without touching the accumulator. Used only to
    /// place fixed relevance values (frozen or randomly pruned genomes).
    pub fn set_fixed(&mut self, k: usize, value: f64) {
        self.weight[k] = value;
        self.accum[k] = value;
        self.init[k] = value;
    }
}

fn soft_threshold(a: f64, tau: f64) -> f64 {
    let mag = a.abs() - tau;
    if mag > 0.0 {
        a.signum() * mag
    } else {
        0.0
    }
}
