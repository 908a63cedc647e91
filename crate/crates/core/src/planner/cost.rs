//! Path cost terms, the unicycle flatness map and exact waypoint gradients.

use super::spline::{sample_path, PathSample, PathSpline, SampleCoefs};
use super::{PlanConfig, PlanError, SlopePenalty};
use crate::field::SmoothSurface;
use crate::scalar::Real;

/// Unicycle inputs recovered from a flat output trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controls<T> {
    pub v: T,
    pub omega: T,
    pub theta: T,
}

/// `v = ‖ṗ‖`, `θ = atan2(ṗ_y, ṗ_x)`, `ω = (ṗ_x p̈_y − ṗ_y p̈_x)/‖ṗ‖²`.
pub fn flatness_controls<T: Real>(dp: [T; 2], ddp: [T; 2], v_min: T) -> Result<Controls<T>, PlanError> {
    let v = dp[0].hypot(dp[1]);
    if !(v >= v_min) {
        return Err(PlanError::DegenerateSpeed {
            tau: f64::NAN,
            speed: v.as_f64(),
            iteration: None,
        });
    }
    Ok(Controls {
        v,
        omega: (dp[0] * ddp[1] - dp[1] * ddp[0]) / (v * v),
        theta: dp[1].atan2(dp[0]),
    })
}

/// Integrated cost terms and their per-sample traces.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport<T> {
    pub j1_integral: T,
    pub j2_integral: T,
    pub j3_integral: T,
    pub j_total: T,
    /// `∫ ṗ·∇H dτ`, which should equal `H(goal) − H(start)`.
    pub signed_slope_integral: T,
    pub tau: Vec<T>,
    pub j1: Vec<T>,
    pub j2: Vec<T>,
    pub j3: Vec<T>,
    pub signed_slope: Vec<T>,
}

/// Trapezoid weight of sample `k` out of `n` with spacing `d`.
#[inline]
fn trapezoid<T: Real>(k: usize, n: usize, d: T) -> T {
    if k == 0 || k == n - 1 {
        d * T::lit(0.5)
    } else {
        d
    }
}

fn evaluate<T: Real, S: SmoothSurface<T> + ?Sized>(
    spline: &PathSpline<T>,
    field: &S,
    cfg: &PlanConfig<T>,
    total_samples: usize,
    want_grad: bool,
) -> Result<(CostReport<T>, Vec<T>), PlanError> {
    let samples = sample_path(spline, total_samples)?;
    let n = samples.len();
    let d = spline.horizon / T::from_usize_lossy(n - 1);
    let mut rep = CostReport {
        j1_integral: T::zero(),
        j2_integral: T::zero(),
        j3_integral: T::zero(),
        j_total: T::zero(),
        signed_slope_integral: T::zero(),
        tau: Vec::with_capacity(n),
        j1: Vec::with_capacity(n),
        j2: Vec::with_capacity(n),
        j3: Vec::with_capacity(n),
        signed_slope: Vec::with_capacity(n),
    };
    let knots = spline.n_knots();
    let mut gy = vec![[T::zero(); 2]; if want_grad { knots } else { 0 }];
    let mut gm = gy.clone();
    let h = spline.knot_spacing();
    let two = T::lit(2.0);

    for (k, smp) in samples.iter().enumerate() {
        let PathSample { tau, p, dp, ddp } = *smp;
        let ctl = flatness_controls(dp, ddp, cfg.v_min).map_err(|e| e.at_tau(tau.as_f64()))?;
        let (v, omega) = (ctl.v, ctl.omega);
        let (grad_h, hess) = if want_grad {
            let (_, g, hm) = field.height_grad_hessian(p[0], p[1])?;
            (g, hm)
        } else {
            (field.height_grad(p[0], p[1]).1, [[T::zero(); 2]; 2])
        };
        let s = dp[0] * grad_h[0] + dp[1] * grad_h[1];
        let j1 = v;
        let j2 = match cfg.slope_penalty {
            SlopePenalty::Squared => s * s,
            SlopePenalty::Absolute => s.abs(),
        };
        let j3 = cfg.r_v * v * v + cfg.r_omega * omega * omega;
        let q = trapezoid(k, n, d);
        rep.j1_integral += q * j1;
        rep.j2_integral += q * j2;
        rep.j3_integral += q * j3;
        rep.signed_slope_integral += q * s;
        rep.tau.push(tau);
        rep.j1.push(j1);
        rep.j2.push(j2);
        rep.j3.push(j3);
        rep.signed_slope.push(s);

        if !want_grad {
            continue;
        }
        // dJ2/ds
        let ds = match cfg.slope_penalty {
            SlopePenalty::Squared => two * s,
            SlopePenalty::Absolute => {
                if s > T::zero() {
                    T::one()
                } else if s < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            }
        };
        let c = dp[0] * ddp[1] - dp[1] * ddp[0];
        let v2 = v * v;
        let v4 = v2 * v2;
        let mut gp = [T::zero(); 2];
        let mut gv = [T::zero(); 2];
        let mut ga = [T::zero(); 2];
        // ∂ω/∂ṗ and ∂ω/∂p̈
        let dw_dv = [ddp[1] / v2 - two * c * dp[0] / v4, -ddp[0] / v2 - two * c * dp[1] / v4];
        let dw_da = [-dp[1] / v2, dp[0] / v2];
        for a in 0..2 {
            let hv = hess[a][0] * dp[0] + hess[a][1] * dp[1];
            gp[a] = q * cfg.beta2 * ds * hv;
            gv[a] = q
                * (cfg.beta1 * dp[a] / v
                    + cfg.beta2 * ds * grad_h[a]
                    + two * cfg.r_v * dp[a]
                    + two * cfg.r_omega * omega * dw_dv[a]);
            ga[a] = q * two * cfg.r_omega * omega * dw_da[a];
        }
        let (i, t) = spline.locate(tau);
        let cf = SampleCoefs::new(h, t);
        for a in 0..2 {
            gy[i][a] += cf.p[0] * gp[a] + cf.dp[0] * gv[a];
            gy[i + 1][a] += cf.p[1] * gp[a] + cf.dp[1] * gv[a];
            gm[i][a] += cf.p[2] * gp[a] + cf.dp[2] * gv[a] + cf.ddp[0] * ga[a];
            gm[i + 1][a] += cf.p[3] * gp[a] + cf.dp[3] * gv[a] + cf.ddp[1] * ga[a];
        }
    }
    rep.j_total = cfg.beta1 * rep.j1_integral + cfg.beta2 * rep.j2_integral + rep.j3_integral;
    if !want_grad {
        return Ok((rep, Vec::new()));
    }

    // adjoint of K·M = (6/h²)·D2·y
    let scale = T::lit(6.0) / (h * h);
    let mut grad = vec![T::zero(); 2 * (knots - 2)];
    for a in 0..2 {
        let mut lam: Vec<T> = (1..knots - 1).map(|i| gm[i][a]).collect();
        super::spline::solve_knot_system(&mut lam);
        let at = |i: usize| if i == 0 || i == knots - 1 { T::zero() } else { lam[i - 1] };
        for j in 1..knots - 1 {
            let back = scale * (at(j - 1) - two * at(j) + at(j + 1));
            grad[2 * (j - 1) + a] = gy[j][a] + back;
        }
    }
    Ok((rep, grad))
}

/// Integrated cost of a spline over `total_samples` uniform samples.
pub fn path_cost<T: Real, S: SmoothSurface<T> + ?Sized>(
    spline: &PathSpline<T>,
    field: &S,
    cfg: &PlanConfig<T>,
    total_samples: usize,
) -> Result<CostReport<T>, PlanError> {
    Ok(evaluate(spline, field, cfg, total_samples, false)?.0)
}

/// Cost and `∂J_total/∂W` over the interior waypoints, flattened as
/// `[x₁, y₁, x₂, y₂, …]`.
pub fn path_cost_gradient<T: Real, S: SmoothSurface<T> + ?Sized>(
    spline: &PathSpline<T>,
    field: &S,
    cfg: &PlanConfig<T>,
    total_samples: usize,
) -> Result<(CostReport<T>, Vec<T>), PlanError> {
    evaluate(spline, field, cfg, total_samples, true)
}
