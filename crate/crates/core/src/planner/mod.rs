//! A* initialization on a rasterized height field followed by gradient
//! refinement of a spline path under a unicycle model.

mod astar;
mod cost;
mod export;
mod optimize;
mod pipeline;
mod spline;

use thiserror::Error;

pub use astar::{astar_init, edge_cost, grid_path_cost, NEIGHBORS};
pub use cost::{flatness_controls, path_cost, path_cost_gradient, Controls, CostReport};
pub use export::{path_csv, polyline_rows, read_path_csv, spline_rows, PathCsvError, PathRow, PATH_HEADER};
pub use optimize::{optimize_path, CostHistory, CostRecord};
pub use pipeline::{plan_path, PlanOutcome};
pub use spline::{
    gridpath_points, resample_polyline, sample_path, spline_from_gridpath, spline_from_polyline, PathSample,
    PathSpline, Point2,
};

use crate::field::FieldError;
use crate::optim::OptimError;
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("invalid planner config: {0}")]
    BadConfig(String),
    #[error("cell ({row}, {col}) is outside the grid")]
    OutOfGrid { row: usize, col: usize },
    #[error("grid has nodata at cell ({row}, {col})")]
    NoData { row: usize, col: usize },
    #[error("point ({x}, {y}) lies outside the field bounds")]
    OutsideBounds { x: f64, y: f64 },
    #[error("goal is unreachable")]
    Unreachable,
    #[error("need at least {min} points, got {got}")]
    TooFewPoints { got: usize, min: usize },
    #[error("start and goal must be distinct")]
    CoincidentEndpoints,
    #[error("speed {speed} below minimum at tau = {tau}{}", iteration.map(|i| format!(" (iteration {i})")).unwrap_or_default())]
    DegenerateSpeed {
        tau: f64,
        speed: f64,
        iteration: Option<usize>,
    },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

impl PlanError {
    pub(crate) fn at_tau(self, t: f64) -> Self {
        match self {
            PlanError::DegenerateSpeed { speed, iteration, .. } => PlanError::DegenerateSpeed {
                tau: t,
                speed,
                iteration,
            },
            other => other,
        }
    }

    pub(crate) fn at_iteration(self, it: usize) -> Self {
        match self {
            PlanError::DegenerateSpeed { tau, speed, .. } => PlanError::DegenerateSpeed {
                tau,
                speed,
                iteration: Some(it),
            },
            other => other,
        }
    }
}

/// How the directional slope `s = ṗ·∇H` enters the cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SlopePenalty {
    /// `s²`
    #[default]
    Squared,
    /// `|s|`
    Absolute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanConfig<T> {
    pub grid_cols: usize,
    pub grid_rows: usize,
    /// `λ` in the A* edge cost.
    pub slope_weight: T,
    pub n_waypoints: usize,
    pub samples_per_segment: usize,
    /// Duration `T` of the path in seconds.
    pub horizon: T,
    pub beta1: T,
    pub beta2: T,
    /// Diagonal of the control weight `R` for `(v, ω)`.
    pub r_v: T,
    pub r_omega: T,
    pub refine_iterations: usize,
    pub learning_rate: T,
    pub seed: u64,
    pub slope_penalty: SlopePenalty,
    pub v_min: T,
}

impl<T: Real> Default for PlanConfig<T> {
    fn default() -> Self {
        Self {
            grid_cols: 64,
            grid_rows: 64,
            slope_weight: T::one(),
            n_waypoints: 32,
            samples_per_segment: 8,
            horizon: T::one(),
            beta1: T::one(),
            beta2: T::one(),
            r_v: T::one(),
            r_omega: T::one(),
            refine_iterations: 500,
            learning_rate: T::lit(1e-3),
            seed: 0,
            slope_penalty: SlopePenalty::Squared,
            v_min: T::lit(1e-6),
        }
    }
}

impl<T: Real> PlanConfig<T> {
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: &str| Err(PlanError::BadConfig(m.into()));
        if self.n_waypoints < 2 {
            return bad("n_waypoints must be at least 2");
        }
        if self.samples_per_segment < 2 {
            return bad("samples_per_segment must be at least 2");
        }
        if self.grid_cols < 2 || self.grid_rows < 2 {
            return bad("grid must be at least 2x2");
        }
        if !(self.beta1 >= T::zero() && self.beta2 >= T::zero()) {
            return bad("beta1 and beta2 must be nonnegative");
        }
        if !(self.r_v >= T::zero() && self.r_omega >= T::zero()) {
            return bad("control weights must be nonnegative");
        }
        if !(self.horizon > T::zero()) || !(self.learning_rate > T::zero()) {
            return bad("horizon and learning_rate must be positive");
        }
        if !(self.slope_weight >= T::zero()) || !(self.v_min >= T::zero()) {
            return bad("slope_weight and v_min must be nonnegative");
        }
        Ok(())
    }

    /// `(N + 1)·M + 1` samples: `M` per knot interval plus the end point.
    pub fn total_samples(&self) -> usize {
        self.total_samples_for(self.n_waypoints)
    }

    pub fn total_samples_for(&self, n_waypoints: usize) -> usize {
        (n_waypoints + 1) * self.samples_per_segment + 1
    }
}
