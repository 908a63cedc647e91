//! Synthetic stand-in for a trained radiance field: orbit cameras, an
//! analytic density around a terrain surface, and per-sample volumetric
//! rendering weights `w = T·α`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::scalar::Real;
use crate::terrain::{surface_height, TerrainSpec};

#[derive(Debug, Error, PartialEq)]
pub enum RayError {
    #[error("array length mismatch: {what} has {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("negative density {value} at sample {index}")]
    NegativeDensity { index: usize, value: f64 },
    #[error("non-positive step size {value} at sample {index}")]
    NonPositiveDelta { index: usize, value: f64 },
    #[error("near plane {near} must be below far plane {far}")]
    BadDepthRange { near: f64, far: f64 },
    #[error("need at least {min} {what}, got {got}")]
    TooFew {
        what: &'static str,
        got: usize,
        min: usize,
    },
    #[error("bad ray offsets: {0}")]
    BadOffsets(String),
    #[error("invalid camera pose: {0}")]
    BadPose(String),
    #[error("sample {index}: stored {what} {stored} disagrees with recomputed {expected}")]
    InvariantViolation {
        index: usize,
        what: &'static str,
        stored: f64,
        expected: f64,
    },
}

pub type Vec3<T> = [T; 3];

#[inline]
pub(crate) fn sub3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn dot3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn normalize3<T: Real>(a: Vec3<T>) -> Vec3<T> {
    let n = dot3(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Pinhole camera in the East-North-Up scene frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose<T> {
    pub position: Vec3<T>,
    pub direction: Vec3<T>,
    pub up: Vec3<T>,
    pub fov: T,
    pub width: u32,
    pub height: u32,
}

impl<T: Real> CameraPose<T> {
    pub fn look_at(position: Vec3<T>, target: Vec3<T>, up: Vec3<T>, fov: T, width: u32, height: u32) -> Self {
        Self {
            position,
            direction: normalize3(sub3(target, position)),
            up: normalize3(up),
            fov,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<(), RayError> {
        let tol = T::lit(1e-9).max(T::epsilon() * T::lit(16.0));
        let one = T::one();
        if (dot3(self.direction, self.direction).sqrt() - one).abs() > tol
            || (dot3(self.up, self.up).sqrt() - one).abs() > tol
        {
            return Err(RayError::BadPose("direction and up must be unit vectors".into()));
        }
        let c = cross3(self.direction, self.up);
        if dot3(c, c).sqrt() <= tol {
            return Err(RayError::BadPose("direction and up are parallel".into()));
        }
        if !(self.fov > T::zero() && self.fov < T::PI()) || self.width == 0 || self.height == 0 {
            return Err(RayError::BadPose("fov must lie in (0, π) and image must be non-empty".into()));
        }
        Ok(())
    }

    /// Unit direction through continuous pixel coordinates `(px, py)`,
    /// `py` growing downwards.
    pub fn pixel_direction(&self, px: T, py: T) -> Vec3<T> {
        let forward = self.direction;
        let right = normalize3(cross3(forward, self.up));
        let up = cross3(right, forward);
        let two = T::lit(2.0);
        let w = T::from_u32(self.width).unwrap();
        let h = T::from_u32(self.height).unwrap();
        let tan_half = (self.fov / two).tan();
        let sx = (two * px / w - T::one()) * tan_half;
        let sy = (T::one() - two * py / h) * tan_half * h / w;
        normalize3([
            forward[0] + sx * right[0] + sy * up[0],
            forward[1] + sx * right[1] + sy * up[1],
            forward[2] + sx * right[2] + sy * up[2],
        ])
    }
}

/// `n` cameras evenly spaced on a horizontal circle around `target`, all
/// looking at it. Pose `k` sits at angle `2πk/n` from the +x axis.
pub fn make_orbit_cameras<T: Real>(
    n: usize,
    radius: T,
    altitude: T,
    target: Vec3<T>,
    fov: T,
) -> Result<Vec<CameraPose<T>>, RayError> {
    if n == 0 {
        return Err(RayError::TooFew {
            what: "cameras",
            got: 0,
            min: 1,
        });
    }
    if !(radius > T::zero()) {
        return Err(RayError::BadPose("orbit radius must be positive".into()));
    }
    let tau = T::PI() + T::PI();
    Ok((0..n)
        .map(|k| {
            let a = tau * T::from_usize_lossy(k) / T::from_usize_lossy(n);
            let pos = [target[0] + radius * a.cos(), target[1] + radius * a.sin(), altitude];
            CameraPose::look_at(pos, target, [T::zero(), T::zero(), T::one()], fov, 640, 480)
        })
        .collect())
}

/// Orbit rig scaled to the scene: radius and altitude `1.25·extent` above
/// the lowest ground, looking at the bounds center at that ground level.
pub fn orbit_cameras_for<T: Real>(spec: &TerrainSpec<T>, n: usize) -> Result<Vec<CameraPose<T>>, RayError> {
    let e = spec.bounds.extent();
    let (lo, _) = spec.height_range();
    let (cx, cy) = spec.bounds.center();
    let r = T::lit(1.25) * e;
    make_orbit_cameras(n, r, lo + r, [cx, cy, lo], T::one())
}

/// Density of the synthetic scene: `rho0` under the surface, zero above;
/// `softness > 0` blends with a logistic profile of that length scale.
pub fn synth_density<T: Real>(spec: &TerrainSpec<T>, point: Vec3<T>, rho0: T, softness: T) -> T {
    let s = surface_height(spec, point[0], point[1]);
    if softness <= T::zero() {
        if point[2] < s {
            rho0
        } else {
            T::zero()
        }
    } else {
        let u = (s - point[2]) / softness;
        rho0 / (T::one() + (-u).exp())
    }
}

/// Opacity, transmittance and weight recursion over one ray, written into
/// the output slices.
pub(crate) fn fill_weights<T: Real>(densities: &[T], deltas: &[T], t: &mut [T], a: &mut [T], w: &mut [T]) {
    let mut trans = T::one();
    for i in 0..densities.len() {
        let alpha = -(-densities[i] * deltas[i]).exp_m1();
        t[i] = trans;
        a[i] = alpha;
        w[i] = trans * alpha;
        trans = trans * (T::one() - alpha);
    }
}

/// Per-sample `(T, α, w)` for one ray with `α = 1 − exp(−ρδ)`,
/// `T₁ = 1`, `T_{i+1} = T_i(1 − α_i)` and `w = T·α`.
pub fn volumetric_weights<T: Real>(densities: &[T], deltas: &[T]) -> Result<(Vec<T>, Vec<T>, Vec<T>), RayError> {
    if densities.len() != deltas.len() {
        return Err(RayError::LengthMismatch {
            what: "deltas",
            got: deltas.len(),
            expected: densities.len(),
        });
    }
    check_density_delta(densities, deltas, 0)?;
    let n = densities.len();
    let (mut t, mut a, mut w) = (vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]);
    fill_weights(densities, deltas, &mut t, &mut a, &mut w);
    Ok((t, a, w))
}

fn check_density_delta<T: Real>(densities: &[T], deltas: &[T], base: usize) -> Result<(), RayError> {
    for (i, (&rho, &d)) in densities.iter().zip(deltas).enumerate() {
        if !(rho >= T::zero()) {
            return Err(RayError::NegativeDensity {
                index: base + i,
                value: rho.as_f64(),
            });
        }
        if !(d > T::zero()) {
            return Err(RayError::NonPositiveDelta {
                index: base + i,
                value: d.as_f64(),
            });
        }
    }
    Ok(())
}

/// Flat sample stream for a set of rays. Ray `r` owns samples
/// `ray_offsets[r]..ray_offsets[r + 1]` (the last ray runs to the end).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RaySampleBatch<T> {
    pub points: Vec<Vec3<T>>,
    pub densities: Vec<T>,
    pub deltas: Vec<T>,
    pub transmittances: Vec<T>,
    pub opacities: Vec<T>,
    pub weights: Vec<T>,
    pub ray_offsets: Vec<usize>,
}

impl<T: Real> RaySampleBatch<T> {
    /// Builds a batch from geometry and densities, deriving `T`, `α`, `w`.
    pub fn from_densities(
        points: Vec<Vec3<T>>,
        densities: Vec<T>,
        deltas: Vec<T>,
        ray_offsets: Vec<usize>,
    ) -> Result<Self, RayError> {
        let n = points.len();
        for (what, got) in [("densities", densities.len()), ("deltas", deltas.len())] {
            if got != n {
                return Err(RayError::LengthMismatch { what, got, expected: n });
            }
        }
        check_offsets(&ray_offsets, n)?;
        check_density_delta(&densities, &deltas, 0)?;
        let mut batch = Self {
            points,
            densities,
            deltas,
            transmittances: vec![T::zero(); n],
            opacities: vec![T::zero(); n],
            weights: vec![T::zero(); n],
            ray_offsets,
        };
        batch.recompute_weights();
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_rays(&self) -> usize {
        self.ray_offsets.len()
    }

    pub fn ray_range(&self, ray: usize) -> std::ops::Range<usize> {
        let start = self.ray_offsets[ray];
        let end = self.ray_offsets.get(ray + 1).copied().unwrap_or(self.len());
        start..end
    }

    /// Re-derives `T`, `α`, `w` from the stored densities and deltas.
    pub fn recompute_weights(&mut self) {
        for r in 0..self.n_rays() {
            let range = self.ray_range(r);
            fill_weights(
                &self.densities[range.clone()],
                &self.deltas[range.clone()],
                &mut self.transmittances[range.clone()],
                &mut self.opacities[range.clone()],
                &mut self.weights[range],
            );
        }
    }

    /// Residual transmittance `Π(1 − α)` past the last sample of a ray.
    pub fn residual_transmittance(&self, ray: usize) -> T {
        self.ray_range(ray)
            .map(|i| T::one() - self.opacities[i])
            .fold(T::one(), |acc, v| acc * v)
    }

    pub fn ray_weight_sum(&self, ray: usize) -> T {
        self.ray_range(ray).map(|i| self.weights[i]).sum()
    }

    /// Checks the stored `T` and `α` against the recursion from `ρ` and `δ`.
    pub fn validate(&self, tol: T) -> Result<(), RayError> {
        let n = self.len();
        for (what, got) in [
            ("densities", self.densities.len()),
            ("deltas", self.deltas.len()),
            ("transmittances", self.transmittances.len()),
            ("opacities", self.opacities.len()),
            ("weights", self.weights.len()),
        ] {
            if got != n {
                return Err(RayError::LengthMismatch { what, got, expected: n });
            }
        }
        check_offsets(&self.ray_offsets, n)?;
        check_density_delta(&self.densities, &self.deltas, 0)?;
        for r in 0..self.n_rays() {
            let mut trans = T::one();
            for i in self.ray_range(r) {
                let alpha = -(-self.densities[i] * self.deltas[i]).exp_m1();
                for (what, stored, expected) in [
                    ("opacity", self.opacities[i], alpha),
                    ("transmittance", self.transmittances[i], trans),
                ] {
                    if !((stored - expected).abs() <= tol) {
                        return Err(RayError::InvariantViolation {
                            index: i,
                            what,
                            stored: stored.as_f64(),
                            expected: expected.as_f64(),
                        });
                    }
                }
                trans = trans * (T::one() - alpha);
            }
        }
        Ok(())
    }

    /// Concatenates batches, shifting ray offsets.
    pub fn concat(batches: impl IntoIterator<Item = Self>) -> Self {
        let mut out = Self::default();
        for b in batches {
            let shift = out.len();
            out.ray_offsets.extend(b.ray_offsets.iter().map(|o| o + shift));
            out.points.extend(b.points);
            out.densities.extend(b.densities);
            out.deltas.extend(b.deltas);
            out.transmittances.extend(b.transmittances);
            out.opacities.extend(b.opacities);
            out.weights.extend(b.weights);
        }
        out
    }

    /// Keeps only the listed rays, in the given order.
    pub fn select_rays(&self, rays: &[usize]) -> Self {
        let mut out = Self::default();
        for &r in rays {
            let range = self.ray_range(r);
            out.ray_offsets.push(out.len());
            out.points.extend_from_slice(&self.points[range.clone()]);
            out.densities.extend_from_slice(&self.densities[range.clone()]);
            out.deltas.extend_from_slice(&self.deltas[range.clone()]);
            out.transmittances.extend_from_slice(&self.transmittances[range.clone()]);
            out.opacities.extend_from_slice(&self.opacities[range.clone()]);
            out.weights.extend_from_slice(&self.weights[range]);
        }
        out
    }
}

fn check_offsets(offsets: &[usize], n: usize) -> Result<(), RayError> {
    if n > 0 && offsets.first() != Some(&0) {
        return Err(RayError::BadOffsets("first ray must start at sample 0".into()));
    }
    if offsets.windows(2).any(|w| w[0] > w[1]) {
        return Err(RayError::BadOffsets("offsets must be nondecreasing".into()));
    }
    if offsets.last().is_some_and(|&o| o > n) {
        return Err(RayError::BadOffsets(format!("offset beyond sample count {n}")));
    }
    Ok(())
}

/// Sampling parameters for [`cast_rays`].
#[derive(Debug, Clone, PartialEq)]
pub struct RayCastConfig<T> {
    pub rays_per_pose: usize,
    pub samples_per_ray: usize,
    pub near: T,
    pub far: T,
    pub rho0: T,
    pub softness: T,
    pub seed: u64,
}

impl<T: Real> RayCastConfig<T> {
    /// Depth window bracketing the scene as seen from [`orbit_cameras_for`],
    /// with a hard surface (`rho0 = 1000`, no softness).
    pub fn for_terrain(spec: &TerrainSpec<T>, rays_per_pose: usize, samples_per_ray: usize, seed: u64) -> Self {
        let e = spec.bounds.extent();
        Self {
            rays_per_pose,
            samples_per_ray,
            near: T::lit(1.375) * e,
            far: T::lit(2.375) * e,
            rho0: T::lit(1000.0),
            softness: T::zero(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), RayError> {
        if !(self.near < self.far) {
            return Err(RayError::BadDepthRange {
                near: self.near.as_f64(),
                far: self.far.as_f64(),
            });
        }
        if self.rays_per_pose == 0 {
            return Err(RayError::TooFew {
                what: "rays per pose",
                got: 0,
                min: 1,
            });
        }
        if self.samples_per_ray < 2 {
            return Err(RayError::TooFew {
                what: "samples per ray",
                got: self.samples_per_ray,
                min: 2,
            });
        }
        Ok(())
    }
}

/// Appends one stratified ray (one jittered sample per equal-depth bin).
fn push_ray<T: Real, R: Rng>(
    out: &mut RaySampleBatch<T>,
    spec: &TerrainSpec<T>,
    origin: Vec3<T>,
    dir: Vec3<T>,
    cfg: &RayCastConfig<T>,
    rng: &mut R,
) {
    let n = cfg.samples_per_ray;
    let delta = (cfg.far - cfg.near) / T::from_usize_lossy(n);
    let start = out.len();
    out.ray_offsets.push(start);
    for k in 0..n {
        let jitter = T::lit(rng.gen::<f64>());
        let t = cfg.near + (T::from_usize_lossy(k) + jitter) * delta;
        let p = [origin[0] + t * dir[0], origin[1] + t * dir[1], origin[2] + t * dir[2]];
        out.points.push(p);
        out.densities.push(synth_density(spec, p, cfg.rho0, cfg.softness));
        out.deltas.push(delta);
    }
    let end = out.len();
    out.transmittances.resize(end, T::zero());
    out.opacities.resize(end, T::zero());
    out.weights.resize(end, T::zero());
    fill_weights(
        &out.densities[start..end],
        &out.deltas[start..end],
        &mut out.transmittances[start..end],
        &mut out.opacities[start..end],
        &mut out.weights[start..end],
    );
}

/// Casts a single ray from `origin` along unit `dir`.
pub fn cast_single_ray<T: Real>(
    spec: &TerrainSpec<T>,
    origin: Vec3<T>,
    dir: Vec3<T>,
    cfg: &RayCastConfig<T>,
) -> Result<RaySampleBatch<T>, RayError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = RaySampleBatch::default();
    push_ray(&mut out, spec, origin, normalize3(dir), cfg, &mut rng);
    Ok(out)
}

/// Rays of one camera; its random stream is selected by `pose_index`.
pub fn cast_pose<T: Real>(
    spec: &TerrainSpec<T>,
    pose: &CameraPose<T>,
    pose_index: usize,
    cfg: &RayCastConfig<T>,
) -> Result<RaySampleBatch<T>, RayError> {
    cfg.validate()?;
    pose.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(pose_index as u64);
    let mut out = RaySampleBatch {
        points: Vec::with_capacity(cfg.rays_per_pose * cfg.samples_per_ray),
        ..Default::default()
    };
    let w = pose.width as f64;
    let h = pose.height as f64;
    for _ in 0..cfg.rays_per_pose {
        let px = T::lit(rng.gen::<f64>() * w);
        let py = T::lit(rng.gen::<f64>() * h);
        let dir = pose.pixel_direction(px, py);
        push_ray(&mut out, spec, pose.position, dir, cfg, &mut rng);
    }
    Ok(out)
}

/// One batch per camera, generated in parallel; deterministic per seed.
pub fn cast_rays_per_pose<T: Real>(
    spec: &TerrainSpec<T>,
    poses: &[CameraPose<T>],
    cfg: &RayCastConfig<T>,
) -> Result<Vec<RaySampleBatch<T>>, RayError> {
    cfg.validate()?;
    poses
        .par_iter()
        .enumerate()
        .map(|(k, pose)| cast_pose(spec, pose, k, cfg))
        .collect()
}

/// All cameras' rays in a single batch.
pub fn cast_rays<T: Real>(
    spec: &TerrainSpec<T>,
    poses: &[CameraPose<T>],
    cfg: &RayCastConfig<T>,
) -> Result<RaySampleBatch<T>, RayError> {
    Ok(RaySampleBatch::concat(cast_rays_per_pose(spec, poses, cfg)?))
}
