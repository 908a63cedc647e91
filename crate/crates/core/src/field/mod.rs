//! Continuous height field `H: ℝ² → ℝ`: a hashed multi-resolution feature
//! grid followed by a one-hidden-layer MLP, with analytic spatial first and
//! second derivatives and an exact parameter backward pass.

pub mod checkpoint;
pub mod encoding;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
use encoding::{level_corners, LevelCorners};

use crate::scalar::{softplus_with_derivs, Real};
use crate::terrain::{Bounds, TerrainSpec};

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("invalid height field config: {0}")]
    InvalidConfig(String),
    #[error("second derivatives are not available with the relu activation")]
    HessianUnsupported,
    #[error("parameter count {got} does not match config ({expected})")]
    ParamCount { got: usize, expected: usize },
    #[error("non-finite parameter at index {0}")]
    NonFinite(usize),
}

/// Anything that can be queried for a height.
pub trait HeightSurface<T: Real>: Sync {
    fn height(&self, x: T, y: T) -> T;
}

/// Height surface with analytic spatial derivatives.
pub trait SmoothSurface<T: Real>: HeightSurface<T> {
    fn height_grad(&self, x: T, y: T) -> (T, [T; 2]);

    /// Height, gradient and symmetric Hessian.
    fn height_grad_hessian(&self, x: T, y: T) -> Result<(T, [T; 2], [[T; 2]; 2]), FieldError>;
}

/// Receives parameter gradient contributions.
pub trait GradSink<T: Real> {
    fn add(&mut self, index: usize, value: T);

    /// Adds `scale · src[k]` at `start + k` for every `k`.
    fn add_scaled(&mut self, start: usize, src: &[T], scale: T) {
        for (k, &v) in src.iter().enumerate() {
            self.add(start + k, scale * v);
        }
    }
}

impl<T: Real> GradSink<T> for Vec<T> {
    #[inline]
    fn add(&mut self, index: usize, value: T) {
        self[index] += value;
    }

    #[inline]
    fn add_scaled(&mut self, start: usize, src: &[T], scale: T) {
        for (d, &v) in self[start..start + src.len()].iter_mut().zip(src) {
            *d += scale * v;
        }
    }
}

/// Gradient accumulator that stores contributions below `split` as a
/// sparse list and the rest densely.
#[derive(Debug, Clone)]
pub struct SparseGrad<T> {
    pub split: usize,
    pub entries: Vec<(u32, T)>,
    pub tail: Vec<T>,
}

impl<T: Real> SparseGrad<T> {
    pub fn new(split: usize, total: usize) -> Self {
        Self {
            split,
            entries: Vec::new(),
            tail: vec![T::zero(); total - split],
        }
    }

    pub fn clear(&mut self) {
        self.entries.clear();
        self.tail.iter_mut().for_each(|v| *v = T::zero());
    }

    /// Adds the accumulated contributions into a dense gradient.
    pub fn merge_into(&self, dense: &mut [T]) {
        for &(i, v) in &self.entries {
            dense[i as usize] += v;
        }
        for (d, &v) in dense[self.split..].iter_mut().zip(&self.tail) {
            *d += v;
        }
    }
}

impl<T: Real> GradSink<T> for SparseGrad<T> {
    #[inline]
    fn add(&mut self, index: usize, value: T) {
        if index < self.split {
            self.entries.push((index as u32, value));
        } else {
            self.tail[index - self.split] += value;
        }
    }

    #[inline]
    fn add_scaled(&mut self, start: usize, src: &[T], scale: T) {
        if start >= self.split {
            let off = start - self.split;
            for (d, &v) in self.tail[off..off + src.len()].iter_mut().zip(src) {
                *d += scale * v;
            }
        } else {
            for (k, &v) in src.iter().enumerate() {
                self.add(start + k, scale * v);
            }
        }
    }
}

/// Dot product with four independent accumulators.
#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// A differentiable height model with flat trainable parameters.
pub trait HeightModel<T: Real>: HeightSurface<T> {
    type Scratch: Send;

    fn scratch(&self) -> Self::Scratch;
    fn params(&self) -> &[T];
    fn params_mut(&mut self) -> &mut [T];
    /// Number of leading parameters whose gradients are sparse per point.
    fn sparse_prefix(&self) -> usize {
        0
    }
    /// Evaluates `(x, y)` and retains the intermediates needed by `backward`.
    fn forward(&self, x: T, y: T, scratch: &mut Self::Scratch) -> T;
    /// Adds `upstream · ∂z/∂θ` for the point last passed to `forward`.
    fn backward<G: GradSink<T>>(&self, scratch: &Self::Scratch, upstream: T, sink: &mut G);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `ln(1 + eˣ) − ln 2`; smooth, zero at the origin.
    Softplus,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HeightFieldConfig<T> {
    pub levels: usize,
    pub base_resolution: usize,
    pub growth_factor: f64,
    pub features_per_level: usize,
    pub table_size: usize,
    pub hidden_width: usize,
    pub activation: Activation,
    pub bounds: Bounds<T>,
    pub height_scale: T,
    pub height_offset: T,
}

impl<T: Real> HeightFieldConfig<T> {
    /// Same configuration with scalars converted to `U`.
    pub fn cast<U: Real>(&self) -> HeightFieldConfig<U> {
        let conv = |v: T| U::lit(v.as_f64());
        let b = self.bounds;
        HeightFieldConfig {
            levels: self.levels,
            base_resolution: self.base_resolution,
            growth_factor: self.growth_factor,
            features_per_level: self.features_per_level,
            table_size: self.table_size,
            hidden_width: self.hidden_width,
            activation: self.activation,
            bounds: Bounds::new(conv(b.x_min), conv(b.x_max), conv(b.y_min), conv(b.y_max)),
            height_scale: conv(self.height_scale),
            height_offset: conv(self.height_offset),
        }
    }

    pub fn new(bounds: Bounds<T>, height_scale: T, height_offset: T) -> Self {
        Self {
            levels: 8,
            base_resolution: 16,
            growth_factor: 1.5,
            features_per_level: 2,
            table_size: 1 << 16,
            hidden_width: 64,
            activation: Activation::Softplus,
            bounds,
            height_scale,
            height_offset,
        }
    }

    /// Default config with normalization taken from the terrain's height
    /// range: offset at mid-range, scale equal to the range (at least 1).
    pub fn for_terrain(spec: &TerrainSpec<T>) -> Self {
        let (lo, hi) = spec.height_range();
        let two = T::lit(2.0);
        Self::new(spec.bounds, (hi - lo).max(T::one()), (lo + hi) / two)
    }

    pub fn resolutions(&self) -> Vec<usize> {
        (0..self.levels)
            .map(|l| (self.base_resolution as f64 * self.growth_factor.powi(l as i32)).floor() as usize)
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.levels * self.features_per_level
    }

    pub fn feature_count(&self) -> usize {
        self.levels * self.table_size * self.features_per_level
    }

    pub fn param_count(&self) -> usize {
        let d = self.input_dim();
        let h = self.hidden_width;
        self.feature_count() + h * d + h + h + 1
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let bad = |m: &str| Err(FieldError::InvalidConfig(m.to_string()));
        if self.levels == 0 {
            return bad("levels must be at least 1");
        }
        if self.base_resolution == 0 {
            return bad("base_resolution must be positive");
        }
        if self.features_per_level == 0 || self.hidden_width == 0 {
            return bad("features_per_level and hidden_width must be positive");
        }
        if !self.table_size.is_power_of_two() {
            return bad("table_size must be a power of two");
        }
        let res = self.resolutions();
        if res.windows(2).any(|w| w[1] <= w[0]) {
            return bad("level resolutions must be strictly increasing");
        }
        if res.last().is_some_and(|&r| r >= u32::MAX as usize) {
            return bad("resolution too large");
        }
        if self.bounds.validate().is_err() {
            return bad("bounds are degenerate");
        }
        if !(self.height_scale > T::zero()) || !self.height_offset.is_finite() {
            return bad("height_scale must be positive and height_offset finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    d: usize,
    h: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

/// Hashed-grid + MLP height field. Parameters are stored flat in the order
/// feature tables (level-major, `table_size × features_per_level` each),
/// `w1` (row-major, `hidden × input`), `b1`, `w2`, `b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField<T> {
    config: HeightFieldConfig<T>,
    resolutions: Vec<usize>,
    params: Vec<T>,
}

/// Intermediates of one forward evaluation.
#[derive(Debug, Clone)]
pub struct FieldScratch<T> {
    corners: Vec<LevelCorners<T>>,
    feats: Vec<T>,
    act: Vec<T>,
    dact: Vec<T>,
}

impl<T: Real> HeightField<T> {
    /// Random initialization: features uniform in ±1e-4, Glorot-uniform MLP
    /// weights, zero biases.
    pub fn init(config: HeightFieldConfig<T>, seed: u64) -> Result<Self, FieldError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nf = config.feature_count();
        let mut params = Vec::with_capacity(config.param_count());
        for _ in 0..nf {
            params.push(T::lit(rng.gen_range(-1e-4..=1e-4)));
        }
        let d = config.input_dim();
        let h = config.hidden_width;
        let a1 = (6.0 / (d + h) as f64).sqrt();
        for _ in 0..h * d {
            params.push(T::lit(rng.gen_range(-a1..=a1)));
        }
        params.extend(std::iter::repeat(T::zero()).take(h));
        let a2 = (6.0 / (h + 1) as f64).sqrt();
        for _ in 0..h {
            params.push(T::lit(rng.gen_range(-a2..=a2)));
        }
        params.push(T::zero());
        Self::from_params(config, params)
    }

    pub fn from_params(config: HeightFieldConfig<T>, params: Vec<T>) -> Result<Self, FieldError> {
        config.validate()?;
        let expected = config.param_count();
        if params.len() != expected {
            return Err(FieldError::ParamCount {
                got: params.len(),
                expected,
            });
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(FieldError::NonFinite(i));
        }
        let resolutions = config.resolutions();
        Ok(Self {
            config,
            resolutions,
            params,
        })
    }

    pub fn config(&self) -> &HeightFieldConfig<T> {
        &self.config
    }

    pub fn bounds(&self) -> Bounds<T> {
        self.config.bounds
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn layout(&self) -> Layout {
        let d = self.config.input_dim();
        let h = self.config.hidden_width;
        let w1 = self.config.feature_count();
        let b1 = w1 + h * d;
        let w2 = b1 + h;
        Layout {
            d,
            h,
            w1,
            b1,
            w2,
            b2: w2 + h,
        }
    }

    /// Normalized coordinates and their derivatives with respect to `(x, y)`
    /// (zero outside the bounds, where the field is constant).
    #[inline]
    fn normalize(&self, x: T, y: T) -> (T, T, T, T) {
        let b = &self.config.bounds;
        let (cx, cy) = b.clamp(x, y);
        let w = b.width();
        let h = b.height();
        let dux = if x < b.x_min || x > b.x_max { T::zero() } else { T::one() / w };
        let dvy = if y < b.y_min || y > b.y_max { T::zero() } else { T::one() / h };
        ((cx - b.x_min) / w, (cy - b.y_min) / h, dux, dvy)
    }

    #[inline]
    fn feature_base(&self, level: usize, entry: usize) -> usize {
        (level * self.config.table_size + entry) * self.config.features_per_level
    }

    fn encode(&self, u: T, v: T, corners: &mut Vec<LevelCorners<T>>, feats: &mut [T]) {
        let f = self.config.features_per_level;
        corners.clear();
        for (l, &res) in self.resolutions.iter().enumerate() {
            let c = level_corners(u, v, res, self.config.table_size);
            for k in 0..f {
                let mut acc = T::zero();
                for j in 0..4 {
                    acc += c.weights[j] * self.params[self.feature_base(l, c.entries[j]) + k];
                }
                feats[l * f + k] = acc;
            }
            corners.push(c);
        }
    }

    #[inline]
    fn activate(&self, pre: T) -> (T, T, T) {
        match self.config.activation {
            Activation::Softplus => {
                let (v, d1, d2) = softplus_with_derivs(pre);
                (v - T::LN_2(), d1, d2)
            }
            Activation::Relu => {
                if pre > T::zero() {
                    (pre, T::one(), T::zero())
                } else {
                    (T::zero(), T::zero(), T::zero())
                }
            }
        }
    }

    /// Height at `(x, y)`; coordinates outside the bounds are clamped.
    pub fn query(&self, x: T, y: T) -> T {
        let mut s = self.scratch_impl();
        self.forward_impl(x, y, &mut s)
    }

    /// `(∂z/∂x, ∂z/∂y)`.
    pub fn grad(&self, x: T, y: T) -> [T; 2] {
        self.value_and_grad(x, y).1
    }

    pub fn value_and_grad(&self, x: T, y: T) -> (T, [T; 2]) {
        match self.derivs(x, y, false) {
            Ok((z, g, _)) => (z, g),
            Err(_) => unreachable!("first derivatives exist for every activation"),
        }
    }

    /// Symmetric matrix of second spatial derivatives.
    pub fn hessian(&self, x: T, y: T) -> Result<[[T; 2]; 2], FieldError> {
        Ok(self.derivs(x, y, true)?.2)
    }

    fn derivs(&self, x: T, y: T, second: bool) -> Result<(T, [T; 2], [[T; 2]; 2]), FieldError> {
        if second && self.config.activation == Activation::Relu {
            return Err(FieldError::HessianUnsupported);
        }
        let lay = self.layout();
        let f = self.config.features_per_level;
        let (u, v, dux, dvy) = self.normalize(x, y);
        let mut corners = Vec::with_capacity(self.resolutions.len());
        let mut feats = vec![T::zero(); lay.d];
        self.encode(u, v, &mut corners, &mut feats);

        // feature derivatives with respect to x, y
        let mut fx = vec![T::zero(); lay.d];
        let mut fy = vec![T::zero(); lay.d];
        let mut fxx = vec![T::zero(); if second { lay.d } else { 0 }];
        let mut fxy = fxx.clone();
        let mut fyy = fxx.clone();
        for (l, c) in corners.iter().enumerate() {
            let r = T::from_usize_lossy(self.resolutions[l]);
            let (kx, ky) = (r * dux, r * dvy);
            let (gx, gy) = c.weight_grads();
            let hs = if second { Some(c.weight_hessians()) } else { None };
            for k in 0..f {
                let i = l * f + k;
                for j in 0..4 {
                    let p = self.params[self.feature_base(l, c.entries[j]) + k];
                    fx[i] += gx[j] * kx * p;
                    fy[i] += gy[j] * ky * p;
                    if let Some((hxx, hxy, hyy)) = hs {
                        fxx[i] += hxx[j] * kx * kx * p;
                        fxy[i] += hxy[j] * kx * ky * p;
                        fyy[i] += hyy[j] * ky * ky * p;
                    }
                }
            }
        }

        let p = &self.params;
        let mut out = p[lay.b2];
        let mut g = [T::zero(); 2];
        let mut hm = [[T::zero(); 2]; 2];
        for hi in 0..lay.h {
            let row = &p[lay.w1 + hi * lay.d..lay.w1 + (hi + 1) * lay.d];
            let pre = p[lay.b1 + hi] + dot(row, &feats);
            let (mut px, mut py) = (T::zero(), T::zero());
            let (mut pxx, mut pxy, mut pyy) = (T::zero(), T::zero(), T::zero());
            for k in 0..lay.d {
                px += row[k] * fx[k];
                py += row[k] * fy[k];
                if second {
                    pxx += row[k] * fxx[k];
                    pxy += row[k] * fxy[k];
                    pyy += row[k] * fyy[k];
                }
            }
            let (a, da, dda) = self.activate(pre);
            let w2 = p[lay.w2 + hi];
            out += w2 * a;
            g[0] += w2 * da * px;
            g[1] += w2 * da * py;
            if second {
                hm[0][0] += w2 * (dda * px * px + da * pxx);
                let off = w2 * (dda * px * py + da * pxy);
                hm[0][1] += off;
                hm[1][1] += w2 * (dda * py * py + da * pyy);
            }
        }
        let s = self.config.height_scale;
        hm[1][0] = hm[0][1];
        for row in hm.iter_mut() {
            for e in row.iter_mut() {
                *e *= s;
            }
        }
        Ok((
            self.config.height_offset + s * out,
            [s * g[0], s * g[1]],
            hm,
        ))
    }

    fn scratch_impl(&self) -> FieldScratch<T> {
        let lay = self.layout();
        FieldScratch {
            corners: Vec::with_capacity(self.resolutions.len()),
            feats: vec![T::zero(); lay.d],
            act: vec![T::zero(); lay.h],
            dact: vec![T::zero(); lay.h],
        }
    }

    fn forward_impl(&self, x: T, y: T, s: &mut FieldScratch<T>) -> T {
        let lay = self.layout();
        let (u, v, _, _) = self.normalize(x, y);
        self.encode(u, v, &mut s.corners, &mut s.feats);
        let p = &self.params;
        let w1 = &p[lay.w1..lay.b1];
        let mut out = p[lay.b2];
        for hi in 0..lay.h {
            let row = &w1[hi * lay.d..(hi + 1) * lay.d];
            let pre = p[lay.b1 + hi] + dot(row, &s.feats);
            let (a, da, _) = self.activate(pre);
            s.act[hi] = a;
            s.dact[hi] = da;
            out += p[lay.w2 + hi] * a;
        }
        self.config.height_offset + self.config.height_scale * out
    }

    fn backward_impl<G: GradSink<T>>(&self, s: &FieldScratch<T>, upstream: T, sink: &mut G) {
        let lay = self.layout();
        let f = self.config.features_per_level;
        let p = &self.params;
        let g_out = upstream * self.config.height_scale;
        sink.add(lay.b2, g_out);
        let mut gfeat = [T::zero(); 64];
        let mut gfeat_vec;
        let gf: &mut [T] = if lay.d <= 64 {
            &mut gfeat[..lay.d]
        } else {
            gfeat_vec = vec![T::zero(); lay.d];
            &mut gfeat_vec
        };
        for hi in 0..lay.h {
            let w2 = p[lay.w2 + hi];
            sink.add(lay.w2 + hi, g_out * s.act[hi]);
            let delta = g_out * w2 * s.dact[hi];
            if delta == T::zero() {
                continue;
            }
            sink.add(lay.b1 + hi, delta);
            let base = lay.w1 + hi * lay.d;
            sink.add_scaled(base, &s.feats, delta);
            for (g, &w) in gf.iter_mut().zip(&p[base..base + lay.d]) {
                *g += delta * w;
            }
        }
        for (l, c) in s.corners.iter().enumerate() {
            for j in 0..4 {
                let w = c.weights[j];
                if w == T::zero() {
                    continue;
                }
                let base = self.feature_base(l, c.entries[j]);
                for k in 0..f {
                    sink.add(base + k, w * gf[l * f + k]);
                }
            }
        }
    }

    /// Exact gradient of `Σ_k upstream_k · z(x_k, y_k)` with respect to every
    /// parameter, added into `acc` (length [`Self::n_params`]).
    pub fn backward_batch(&self, points: &[(T, T)], upstream: &[T], acc: &mut Vec<T>) {
        assert_eq!(points.len(), upstream.len());
        assert_eq!(acc.len(), self.n_params());
        let mut s = self.scratch_impl();
        for (&(x, y), &g) in points.iter().zip(upstream) {
            if g == T::zero() {
                continue;
            }
            self.forward_impl(x, y, &mut s);
            self.backward_impl(&s, g, acc);
        }
    }

    /// Convenience wrapper returning a fresh accumulator.
    pub fn param_gradient(&self, points: &[(T, T)], upstream: &[T]) -> Vec<T> {
        let mut acc = vec![T::zero(); self.n_params()];
        self.backward_batch(points, upstream, &mut acc);
        acc
    }

    pub fn to_precision<U: Real>(&self) -> HeightField<U> {
        let conv = |v: T| U::lit(v.as_f64());
        let config = self.config.cast();
        HeightField {
            config,
            resolutions: self.resolutions.clone(),
            params: self.params.iter().map(|&v| conv(v)).collect(),
        }
    }
}

impl<T: Real> HeightSurface<T> for HeightField<T> {
    fn height(&self, x: T, y: T) -> T {
        self.query(x, y)
    }
}

impl<T: Real> SmoothSurface<T> for HeightField<T> {
    fn height_grad(&self, x: T, y: T) -> (T, [T; 2]) {
        self.value_and_grad(x, y)
    }

    fn height_grad_hessian(&self, x: T, y: T) -> Result<(T, [T; 2], [[T; 2]; 2]), FieldError> {
        self.derivs(x, y, true)
    }
}

impl<T: Real> HeightModel<T> for HeightField<T> {
    type Scratch = FieldScratch<T>;

    fn scratch(&self) -> Self::Scratch {
        self.scratch_impl()
    }

    fn params(&self) -> &[T] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    fn sparse_prefix(&self) -> usize {
        self.config.feature_count()
    }

    fn forward(&self, x: T, y: T, scratch: &mut Self::Scratch) -> T {
        self.forward_impl(x, y, scratch)
    }

    fn backward<G: GradSink<T>>(&self, scratch: &Self::Scratch, upstream: T, sink: &mut G) {
        self.backward_impl(scratch, upstream, sink)
    }
}

impl<T: Real> HeightSurface<T> for TerrainSpec<T> {
    fn height(&self, x: T, y: T) -> T {
        crate::terrain::surface_height(self, x, y)
    }
}

impl<T: Real> SmoothSurface<T> for TerrainSpec<T> {
    fn height_grad(&self, x: T, y: T) -> (T, [T; 2]) {
        self.height_and_gradient(x, y)
    }

    fn height_grad_hessian(&self, x: T, y: T) -> Result<(T, [T; 2], [[T; 2]; 2]), FieldError> {
        let (z, g) = self.height_and_gradient(x, y);
        Ok((z, g, self.hessian(x, y)))
    }
}
