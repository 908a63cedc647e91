//! Waypoint refinement with Adam, returning the best iterate seen.

use super::cost::{path_cost_gradient, CostReport};
use super::spline::PathSpline;
use super::{PlanConfig, PlanError};
use crate::field::SmoothSurface;
use crate::optim::{adam_step, AdamState};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostRecord<T> {
    pub iteration: usize,
    pub j1: T,
    pub j2: T,
    pub j3: T,
    pub j_total: T,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CostHistory<T> {
    /// Cost of iterate `k` for `k = 0..=refine_iterations`.
    pub records: Vec<CostRecord<T>>,
    pub best_iteration: usize,
}

impl<T: Real> CostHistory<T> {
    pub fn initial(&self) -> Option<&CostRecord<T>> {
        self.records.first()
    }

    pub fn best(&self) -> Option<&CostRecord<T>> {
        self.records.get(self.best_iteration)
    }

    /// Running minimum of `J_total` after each iterate.
    pub fn best_so_far(&self) -> Vec<T> {
        let mut cur = T::infinity();
        self.records
            .iter()
            .map(|r| {
                cur = cur.min(r.j_total);
                cur
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,J1,J2,J3,J_total\n");
        for r in &self.records {
            s.push_str(&format!("{},{},{},{},{}\n", r.iteration, r.j1, r.j2, r.j3, r.j_total));
        }
        s
    }
}

fn record<T: Real>(iteration: usize, r: &CostReport<T>) -> CostRecord<T> {
    CostRecord {
        iteration,
        j1: r.j1_integral,
        j2: r.j2_integral,
        j3: r.j3_integral,
        j_total: r.j_total,
    }
}

/// Minimizes `J_total` over the interior waypoints with Adam. Endpoints
/// stay fixed. Returns the lowest-cost iterate and the per-iterate history.
pub fn optimize_path<T: Real, S: SmoothSurface<T> + ?Sized>(
    spline: &PathSpline<T>,
    field: &S,
    cfg: &PlanConfig<T>,
) -> Result<(PathSpline<T>, CostHistory<T>), PlanError> {
    cfg.validate()?;
    let samples = cfg.total_samples_for(spline.waypoints.len());
    let mut current = spline.clone();
    let mut params = current.flat_waypoints();
    let mut adam = AdamState::new(params.len(), cfg.learning_rate);
    let mut history = CostHistory::default();
    let mut best = (T::infinity(), current.clone());
    for it in 0..=cfg.refine_iterations {
        let (rep, grad) = path_cost_gradient(&current, field, cfg, samples).map_err(|e| e.at_iteration(it))?;
        history.records.push(record(it, &rep));
        if rep.j_total < best.0 {
            best = (rep.j_total, current.clone());
            history.best_iteration = it;
        }
        if it == cfg.refine_iterations {
            break;
        }
        adam_step(&mut params, &grad, &mut adam)?;
        current.set_waypoints(params.chunks(2).map(|c| [c[0], c[1]]).collect());
    }
    Ok((best.1, history))
}
