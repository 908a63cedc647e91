//! Height-field training by weighted quantile (pinball) regression over
//! ray samples, and height-based density masking.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::field::{GradSink, HeightModel, HeightSurface, SparseGrad};
use crate::optim::{AdamState, OptimError};
use crate::rays::RaySampleBatch;
use crate::scalar::Real;
use crate::terrain::Bounds;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("quantile must lie in (0, 1), got {0}")]
    BadQuantile(f64),
    #[error("empty sample batch")]
    EmptyBatch,
    #[error("no ray batches supplied")]
    EmptyStream,
    #[error("no trainable samples (all weights below threshold or outside bounds)")]
    NoTrainableSamples,
    #[error("weights must be nonnegative with a positive sum")]
    BadWeights,
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("training diverged at iteration {iteration}: loss {loss}")]
    Diverged { iteration: usize, loss: f64 },
    #[error(transparent)]
    Optim(#[from] OptimError),
}

fn check_q<T: Real>(q: T) -> Result<(), TrainError> {
    if q > T::zero() && q < T::one() {
        Ok(())
    } else {
        Err(TrainError::BadQuantile(q.as_f64()))
    }
}

/// Pinball loss of prediction `z_hat` for target `z`: `q·e` for `e ≥ 0`,
/// `−(1 − q)·e` otherwise, with `e = z − z_hat`.
pub fn pinball_loss<T: Real>(z: T, z_hat: T, q: T) -> Result<T, TrainError> {
    check_q(q)?;
    Ok(pinball_unchecked(z - z_hat, q))
}

#[inline]
fn pinball_unchecked<T: Real>(e: T, q: T) -> T {
    if e >= T::zero() {
        q * e
    } else {
        -(T::one() - q) * e
    }
}

/// `∂L_q/∂ẑ`: `−q` when the target is above, `1 − q` when below, 0 at `e = 0`.
#[inline]
pub fn pinball_grad<T: Real>(z: T, z_hat: T, q: T) -> T {
    let e = z - z_hat;
    if e > T::zero() {
        -q
    } else if e < T::zero() {
        T::one() - q
    } else {
        T::zero()
    }
}

/// Weighted pinball loss `Σ w_i·L_q(z_i, Ĥ(x_i, y_i))` over a batch and
/// its exact parameter gradient (weights treated as constants).
pub fn weighted_quantile_loss<T: Real, M: HeightModel<T>>(
    batch: &RaySampleBatch<T>,
    model: &M,
    q: T,
) -> Result<(T, Vec<T>), TrainError> {
    check_q(q)?;
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let mut grad = vec![T::zero(); model.params().len()];
    let mut scratch = model.scratch();
    let mut total = T::zero();
    for (p, &w) in batch.points.iter().zip(&batch.weights) {
        if w == T::zero() {
            continue;
        }
        let z_hat = model.forward(p[0], p[1], &mut scratch);
        total += w * pinball_unchecked(p[2] - z_hat, q);
        let up = w * pinball_grad(p[2], z_hat, q);
        if up != T::zero() {
            model.backward(&scratch, up, &mut grad);
        }
    }
    Ok((total, grad))
}

/// Brute-force weighted quantile: the smallest value whose cumulative
/// normalized weight reaches `q`.
pub fn weighted_quantile_oracle<T: Real>(values: &[T], weights: &[T], q: T) -> Result<T, TrainError> {
    check_q(q)?;
    if values.is_empty() || values.len() != weights.len() {
        return Err(TrainError::BadWeights);
    }
    if weights.iter().any(|&w| !(w >= T::zero())) {
        return Err(TrainError::BadWeights);
    }
    let total: T = weights.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(TrainError::BadWeights);
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut cum = T::zero();
    let mut k = 0;
    while k < idx.len() {
        // ties share one cumulative step
        let v = values[idx[k]];
        while k < idx.len() && values[idx[k]] == v {
            cum += weights[idx[k]];
            k += 1;
        }
        if cum / total >= q {
            return Ok(v);
        }
    }
    Ok(values[idx[idx.len() - 1]])
}

/// Zeroes the density of every sample lying more than `margin` above the
/// predicted surface and re-derives `T`, `α`, `w` on the affected rays.
/// A negative margin disables masking.
pub fn apply_height_mask<T: Real, S: HeightSurface<T> + ?Sized>(
    batch: &RaySampleBatch<T>,
    field: &S,
    margin: T,
) -> RaySampleBatch<T> {
    let mut out = batch.clone();
    if margin < T::zero() {
        return out;
    }
    let changed: Vec<bool> = (0..batch.n_rays())
        .into_par_iter()
        .map(|r| {
            batch.ray_range(r).any(|i| {
                let p = batch.points[i];
                batch.densities[i] > T::zero() && p[2] > field.height(p[0], p[1]) + margin
            })
        })
        .collect();
    for (r, _) in changed.iter().enumerate().filter(|(_, &c)| c) {
        let range = out.ray_range(r);
        for i in range.clone() {
            let p = out.points[i];
            if out.densities[i] > T::zero() && p[2] > field.height(p[0], p[1]) + margin {
                out.densities[i] = T::zero();
            }
        }
        crate::rays::fill_weights(
            &out.densities[range.clone()],
            &out.deltas[range.clone()],
            &mut out.transmittances[range.clone()],
            &mut out.opacities[range.clone()],
            &mut out.weights[range],
        );
    }
    out
}

/// A height model with a single trainable constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantField<T> {
    pub value: [T; 1],
}

impl<T: Real> ConstantField<T> {
    pub fn new(value: T) -> Self {
        Self { value: [value] }
    }
}

impl<T: Real> HeightSurface<T> for ConstantField<T> {
    fn height(&self, _x: T, _y: T) -> T {
        self.value[0]
    }
}

impl<T: Real> HeightModel<T> for ConstantField<T> {
    type Scratch = ();

    fn scratch(&self) {}

    fn params(&self) -> &[T] {
        &self.value
    }

    fn params_mut(&mut self) -> &mut [T] {
        &mut self.value
    }

    fn forward(&self, _x: T, _y: T, _s: &mut ()) -> T {
        self.value[0]
    }

    fn backward<G: GradSink<T>>(&self, _s: &(), upstream: T, sink: &mut G) {
        sink.add(0, upstream);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub quantile: T,
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    pub batch_size: usize,
    pub iterations: usize,
    /// Masking margin in height units; negative disables masking.
    pub mask_margin: T,
    /// Iterations between mask refreshes when masking is enabled.
    pub mask_interval: usize,
    /// Samples with smaller rendering weight are left out of the pool.
    pub min_weight: T,
    /// Fraction of rays per batch held out for evaluation.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl<T: Real> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            quantile: T::lit(0.5),
            learning_rate: T::lit(1e-3),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
            batch_size: 8192,
            iterations: 5000,
            mask_margin: T::lit(-1.0),
            mask_interval: 100,
            min_weight: T::lit(1e-6),
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

impl<T: Real> TrainConfig<T> {
    pub fn validate(&self) -> Result<(), TrainError> {
        check_q(self.quantile)?;
        let bad = |m: &str| Err(TrainError::BadConfig(m.into()));
        if !(self.learning_rate > T::zero()) {
            return bad("learning_rate must be positive");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if self.batch_size == 0 || self.mask_interval == 0 {
            return bad("batch_size and mask_interval must be positive");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord<T> {
    pub iteration: usize,
    pub loss: T,
    pub mean_abs_err: T,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory<T> {
    pub records: Vec<TrainRecord<T>>,
    /// `(iteration, seconds since start)` every 100 iterations and at the end.
    pub wall_time: Vec<(usize, f64)>,
    /// Mean `|e|` over held-out samples with `w > 0.1` after training.
    pub held_out_mae: Option<T>,
}

impl<T: Real> TrainHistory<T> {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,loss,mean_abs_err\n");
        for r in &self.records {
            s.push_str(&format!("{},{},{}\n", r.iteration, r.loss, r.mean_abs_err));
        }
        s
    }

    /// Mean loss over a fraction of the history taken from the start
    /// (`from_end = false`) or the end.
    pub fn mean_loss_fraction(&self, fraction: f64, from_end: bool) -> T {
        let n = ((self.records.len() as f64 * fraction).ceil() as usize).max(1).min(self.records.len());
        let slice = if from_end {
            &self.records[self.records.len() - n..]
        } else {
            &self.records[..n]
        };
        slice.iter().map(|r| r.loss).sum::<T>() / T::from_usize_lossy(n)
    }
}

/// `(x, y, z, w)` for one training sample.
type PoolEntry<T> = [T; 4];

const CHUNK: usize = 1024;
const HELD_OUT_MIN_WEIGHT: f64 = 0.1;

struct SamplePool<T> {
    train: Vec<PoolEntry<T>>,
    held_out: Vec<PoolEntry<T>>,
}

fn held_out_rays(batch_index: usize, n_rays: usize, fraction: f64, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_4e1d);
    rng.set_stream(batch_index as u64);
    (0..n_rays).map(|_| rng.gen::<f64>() < fraction).collect()
}

fn build_pool<T: Real, M: HeightModel<T>>(
    batches: &[RaySampleBatch<T>],
    holdout: &[Vec<bool>],
    model: &M,
    cfg: &TrainConfig<T>,
    bounds: Option<Bounds<T>>,
) -> SamplePool<T> {
    let mut pool = SamplePool {
        train: Vec::new(),
        held_out: Vec::new(),
    };
    for (b, batch) in batches.iter().enumerate() {
        let masked;
        let src = if cfg.mask_margin >= T::zero() {
            masked = apply_height_mask(batch, model, cfg.mask_margin);
            &masked
        } else {
            batch
        };
        for r in 0..src.n_rays() {
            let held = holdout[b][r];
            for i in src.ray_range(r) {
                let w = src.weights[i];
                let p = src.points[i];
                if bounds.is_some_and(|bd| !bd.contains(p[0], p[1])) {
                    continue;
                }
                if held {
                    if w > T::lit(HELD_OUT_MIN_WEIGHT) {
                        pool.held_out.push([p[0], p[1], p[2], w]);
                    }
                } else if w >= cfg.min_weight && w > T::zero() {
                    pool.train.push([p[0], p[1], p[2], w]);
                }
            }
        }
    }
    pool
}

/// Mean `|z − Ĥ(x, y)|` over pool entries.
fn mean_abs_error<T: Real, S: HeightSurface<T> + ?Sized>(entries: &[PoolEntry<T>], model: &S) -> Option<T> {
    if entries.is_empty() {
        return None;
    }
    let sum: T = entries
        .par_chunks(CHUNK)
        .map(|c| c.iter().map(|e| (e[2] - model.height(e[0], e[1])).abs()).sum::<T>())
        .collect::<Vec<T>>()
        .into_iter()
        .sum();
    Some(sum / T::from_usize_lossy(entries.len()))
}

/// Fits `model` to the ray samples with Adam on the mean weighted pinball
/// loss. Each iteration draws `batch_size` samples from a seeded
/// shuffle of the training pool. Held-out rays are never trained on.
pub fn train_height_field<T: Real, M>(
    batches: &[RaySampleBatch<T>],
    mut model: M,
    bounds: Option<Bounds<T>>,
    cfg: &TrainConfig<T>,
) -> Result<(M, TrainHistory<T>), TrainError>
where
    M: HeightModel<T> + Sync,
{
    cfg.validate()?;
    if batches.is_empty() {
        return Err(TrainError::EmptyStream);
    }
    let start = Instant::now();
    let holdout: Vec<Vec<bool>> = batches
        .iter()
        .enumerate()
        .map(|(b, batch)| held_out_rays(b, batch.n_rays(), cfg.holdout_fraction, cfg.seed))
        .collect();
    let mut pool = build_pool(batches, &holdout, &model, cfg, bounds);
    if pool.train.is_empty() {
        return Err(TrainError::NoTrainableSamples);
    }

    let n_params = model.params().len();
    let split = model.sparse_prefix();
    let mut adam = AdamState::with_hyper(n_params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pool.train.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut grad = vec![T::zero(); n_params];
    let mut picks = Vec::with_capacity(cfg.batch_size);
    let mut history = TrainHistory::default();
    let q = cfg.quantile;

    for it in 0..cfg.iterations {
        if cfg.mask_margin >= T::zero() && it > 0 && it % cfg.mask_interval == 0 {
            pool = build_pool(batches, &holdout, &model, cfg, bounds);
            if pool.train.is_empty() {
                return Err(TrainError::NoTrainableSamples);
            }
            order = (0..pool.train.len()).collect();
            order.shuffle(&mut rng);
            cursor = 0;
        }
        picks.clear();
        while picks.len() < cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let take = (cfg.batch_size - picks.len()).min(order.len() - cursor);
            picks.extend(order[cursor..cursor + take].iter().map(|&i| pool.train[i]));
            cursor += take;
        }

        let n = T::from_usize_lossy(picks.len());
        let model_ref = &model;
        let parts: Vec<(T, T, SparseGrad<T>)> = picks
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut scratch = model_ref.scratch();
                let mut sink = SparseGrad::new(split, n_params);
                let (mut loss, mut abs) = (T::zero(), T::zero());
                for e in chunk {
                    let z_hat = model_ref.forward(e[0], e[1], &mut scratch);
                    let err = e[2] - z_hat;
                    loss += e[3] * pinball_unchecked(err, q);
                    abs += err.abs();
                    let up = e[3] * pinball_grad(e[2], z_hat, q) / n;
                    if up != T::zero() {
                        model_ref.backward(&scratch, up, &mut sink);
                    }
                }
                (loss, abs, sink)
            })
            .collect();

        grad.iter_mut().for_each(|g| *g = T::zero());
        let (mut loss, mut abs) = (T::zero(), T::zero());
        for (l, a, sink) in &parts {
            loss += *l;
            abs += *a;
            sink.merge_into(&mut grad);
        }
        let loss = loss / n;
        if !loss.is_finite() {
            return Err(TrainError::Diverged {
                iteration: it,
                loss: loss.as_f64(),
            });
        }
        history.records.push(TrainRecord {
            iteration: it,
            loss,
            mean_abs_err: abs / n,
        });
        adam.begin_step();
        adam.apply(model.params_mut(), &grad, 0).map_err(|e| match e {
            OptimError::NonFiniteGradient { .. } => TrainError::Diverged {
                iteration: it,
                loss: f64::NAN,
            },
            other => other.into(),
        })?;
        if (it + 1) % 100 == 0 || it + 1 == cfg.iterations {
            history.wall_time.push((it + 1, start.elapsed().as_secs_f64()));
        }
    }
    history.held_out_mae = mean_abs_error(&pool.held_out, &model);
    Ok((model, history))
}
