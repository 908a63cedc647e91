//! Adam optimizer and finite-difference gradient verification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient entry {value} at index {index}")]
    NonFiniteGradient { index: usize, value: f64 },
    #[error("parameter/gradient length mismatch: {params} vs {grads}")]
    LengthMismatch { params: usize, grads: usize },
    #[error("objective is not finite at probe {index}")]
    NonFiniteObjective { index: usize },
    #[error("invalid finite-difference setup: {0}")]
    BadProbe(String),
}

/// Adam moments, step counter and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> AdamState<T> {
    /// Standard hyperparameters `β = (0.9, 0.999)`, `ε = 1e-8`.
    pub fn new(n: usize, lr: T) -> Self {
        Self::with_hyper(n, lr, T::lit(0.9), T::lit(0.999), T::lit(1e-8))
    }

    pub fn with_hyper(n: usize, lr: T, beta1: T, beta2: T, eps: T) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
            lr,
            beta1,
            beta2,
            eps,
        }
    }

    /// Advances the step counter; call once before one or more [`Self::apply`].
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Updates `params` (coordinates `offset..offset + params.len()` of the
    /// full vector) with the bias-corrected Adam rule at the current step.
    pub fn apply(&mut self, params: &mut [T], grads: &[T], offset: usize) -> Result<(), OptimError> {
        if params.len() != grads.len() || offset + params.len() > self.m.len() {
            return Err(OptimError::LengthMismatch {
                params: params.len(),
                grads: grads.len(),
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(OptimError::NonFiniteGradient {
                index: offset + i,
                value: grads[i].as_f64(),
            });
        }
        let one = T::one();
        let t = self.step.min(i32::MAX as u64) as i32;
        let bc1 = one - self.beta1.powi(t);
        let bc2 = one - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let m = &mut self.m[offset..offset + params.len()];
        let v = &mut self.v[offset..offset + params.len()];
        for i in 0..params.len() {
            let g = grads[i];
            m[i] = b1 * m[i] + (one - b1) * g;
            v[i] = b2 * v[i] + (one - b2) * g * g;
            let mh = m[i] / bc1;
            let vh = v[i] / bc2;
            params[i] -= lr * mh / (vh.sqrt() + eps);
        }
        Ok(())
    }
}

/// One full Adam step over the whole parameter vector.
pub fn adam_step<T: Real>(params: &mut [T], grads: &[T], state: &mut AdamState<T>) -> Result<(), OptimError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(OptimError::LengthMismatch {
            params: params.len(),
            grads: grads.len(),
        });
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(OptimError::NonFiniteGradient {
            index: i,
            value: grads[i].as_f64(),
        });
    }
    state.begin_step();
    state.apply(params, grads, 0)
}

/// Central-difference check of `analytic` at `n_probes` coordinates drawn
/// uniformly at random. Returns the largest relative error, measured
/// against `max(1e-12, |analytic|, |numeric|)`.
pub fn finite_diff_check<T: Real, F: FnMut(&[T]) -> T>(
    f: F,
    analytic: &[T],
    params: &[T],
    step: T,
    n_probes: usize,
    seed: u64,
) -> Result<T, OptimError> {
    if n_probes == 0 || params.is_empty() {
        return Err(OptimError::BadProbe("need at least one probe and one parameter".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx: Vec<usize> = (0..n_probes).map(|_| rng.gen_range(0..params.len())).collect();
    finite_diff_check_indices(f, analytic, params, step, &idx)
}

/// [`finite_diff_check`] on caller-chosen coordinates.
pub fn finite_diff_check_indices<T: Real, F: FnMut(&[T]) -> T>(
    mut f: F,
    analytic: &[T],
    params: &[T],
    step: T,
    indices: &[usize],
) -> Result<T, OptimError> {
    if !(step > T::zero()) || indices.is_empty() {
        return Err(OptimError::BadProbe("step must be positive and probes non-empty".into()));
    }
    if analytic.len() != params.len() {
        return Err(OptimError::LengthMismatch {
            params: params.len(),
            grads: analytic.len(),
        });
    }
    let mut work = params.to_vec();
    let mut worst = T::zero();
    for &i in indices {
        let orig = work[i];
        work[i] = orig + step;
        let fp = f(&work);
        work[i] = orig - step;
        let fm = f(&work);
        work[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(OptimError::NonFiniteObjective { index: i });
        }
        let numeric = (fp - fm) / (step + step);
        let denom = T::lit(1e-12).max(analytic[i].abs()).max(numeric.abs());
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}
