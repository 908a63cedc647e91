//! Raster, A*, spline fit and refinement in one call.

use super::astar::astar_init;
use super::optimize::{optimize_path, CostHistory};
use super::spline::{gridpath_points, spline_from_polyline, PathSpline, Point2};
use super::{PlanConfig, PlanError};
use crate::field::SmoothSurface;
use crate::grid::{rasterize_field, Cell, GridMap};
use crate::scalar::Real;
use crate::terrain::Bounds;

#[derive(Debug, Clone)]
pub struct PlanOutcome<T> {
    /// Raster the A* search ran on.
    pub grid: GridMap<T>,
    pub cells: Vec<Cell>,
    /// A* cell centers with the first and last replaced by the exact
    /// start and goal.
    pub polyline: Vec<Point2<T>>,
    pub initial: PathSpline<T>,
    /// Lowest-cost iterate of the refinement.
    pub refined: PathSpline<T>,
    pub history: CostHistory<T>,
}

/// Plans from `start` to `goal` over `field` restricted to `bounds`.
pub fn plan_path<T: Real, S: SmoothSurface<T> + ?Sized>(
    field: &S,
    bounds: Bounds<T>,
    start: Point2<T>,
    goal: Point2<T>,
    cfg: &PlanConfig<T>,
) -> Result<PlanOutcome<T>, PlanError> {
    cfg.validate()?;
    if start == goal {
        return Err(PlanError::CoincidentEndpoints);
    }
    let grid = rasterize_field(field, bounds, cfg.grid_cols, cfg.grid_rows)
        .map_err(|e| PlanError::BadConfig(e.to_string()))?;
    let locate = |p: Point2<T>| {
        grid.cell_at(p[0], p[1]).ok_or(PlanError::OutsideBounds {
            x: p[0].as_f64(),
            y: p[1].as_f64(),
        })
    };
    let cells = astar_init(&grid, locate(start)?, locate(goal)?, cfg.slope_weight)?;
    let mut polyline = gridpath_points(&cells, &grid);
    if polyline.len() == 1 {
        polyline.push(goal);
    }
    polyline[0] = start;
    *polyline.last_mut().unwrap() = goal;
    let initial = spline_from_polyline(&polyline, cfg.n_waypoints, cfg.horizon)?;
    let (refined, history) = optimize_path(&initial, field, cfg)?;
    Ok(PlanOutcome {
        grid,
        cells,
        polyline,
        initial,
        refined,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::TerrainSpec;

    #[test]
    fn endpoints_are_exact_and_errors_are_typed() {
        let b = Bounds::centered_square(4.0);
        let flat = TerrainSpec::flat(0.0, b);
        let cfg = PlanConfig {
            grid_cols: 16,
            grid_rows: 16,
            n_waypoints: 4,
            refine_iterations: 5,
            ..PlanConfig::default()
        };
        let out = plan_path(&flat, b, [-1.33, -1.71], [1.2, 0.9], &cfg).unwrap();
        assert_eq!(out.refined.start, [-1.33, -1.71]);
        assert_eq!(out.refined.goal, [1.2, 0.9]);
        assert_eq!(out.polyline.len(), out.cells.len());
        assert_eq!(out.history.records.len(), 6);
        assert_eq!(
            plan_path(&flat, b, [0.5, 0.5], [0.5, 0.5], &cfg).unwrap_err(),
            PlanError::CoincidentEndpoints
        );
        assert!(matches!(
            plan_path(&flat, b, [0.5, 0.5], [5.0, 0.5], &cfg),
            Err(PlanError::OutsideBounds { .. })
        ));
        // both points in one cell still yield a two-point polyline
        let out = plan_path(&flat, b, [0.51, 0.51], [0.55, 0.6], &cfg).unwrap();
        assert_eq!(out.polyline, vec![[0.51, 0.51], [0.55, 0.6]]);
    }
}
