//! 8-connected A* over a height grid with a slope-weighted edge cost.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::PlanError;
use crate::grid::{Cell, GridMap};
use crate::scalar::Real;

/// Neighbor offsets `(drow, dcol)` in a fixed expansion order.
pub const NEIGHBORS: [(isize, isize); 8] = [(-1, 0), (0, 1), (1, 0), (0, -1), (-1, 1), (1, 1), (1, -1), (-1, -1)];

/// Cost of one move between adjacent cells: horizontal distance plus
/// `λ·|Δh|`.
#[inline]
pub fn edge_cost<T: Real>(grid: &GridMap<T>, a: Cell, b: Cell, slope_weight: T) -> T {
    let diagonal = a.row != b.row && a.col != b.col;
    let run = if diagonal {
        grid.cell_size * T::SQRT_2()
    } else {
        grid.cell_size
    };
    run + slope_weight * (grid.height(b) - grid.height(a)).abs()
}

/// Total cost of a cell path, accumulated from the start.
pub fn grid_path_cost<T: Real>(grid: &GridMap<T>, path: &[Cell], slope_weight: T) -> T {
    path.windows(2)
        .fold(T::zero(), |acc, w| acc + edge_cost(grid, w[0], w[1], slope_weight))
}

pub(crate) fn neighbor(grid_rows: usize, grid_cols: usize, c: Cell, d: (isize, isize)) -> Option<Cell> {
    let r = c.row as isize + d.0;
    let k = c.col as isize + d.1;
    (r >= 0 && k >= 0 && (r as usize) < grid_rows && (k as usize) < grid_cols).then(|| Cell::new(r as usize, k as usize))
}

struct Open<T> {
    f: T,
    order: u64,
    index: usize,
}

impl<T: Real> PartialEq for Open<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Real> Eq for Open<T> {}

impl<T: Real> PartialOrd for Open<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> Ord for Open<T> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .partial_cmp(&self.f)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.order.cmp(&self.order))
    }
}

fn check_cell<T: Real>(grid: &GridMap<T>, c: Cell) -> Result<(), PlanError> {
    if grid.contains(c) {
        Ok(())
    } else {
        Err(PlanError::OutOfGrid { row: c.row, col: c.col })
    }
}

/// Cost-optimal 8-connected cell path from `start` to `goal`.
///
/// The heuristic is the straight-line distance between cell centers. Ties
/// in `f` go to the earlier heap insertion.
pub fn astar_init<T: Real>(grid: &GridMap<T>, start: Cell, goal: Cell, slope_weight: T) -> Result<Vec<Cell>, PlanError> {
    check_cell(grid, start)?;
    check_cell(grid, goal)?;
    if let Some(i) = grid.nodata_mask().iter().position(|&m| m) {
        return Err(PlanError::NoData {
            row: i / grid.n_cols,
            col: i % grid.n_cols,
        });
    }
    if !(slope_weight >= T::zero()) {
        return Err(PlanError::BadConfig("slope weight must be nonnegative".into()));
    }
    let n = grid.n_rows * grid.n_cols;
    let heuristic = |c: Cell| {
        let dr = T::from_usize_lossy(c.row.abs_diff(goal.row));
        let dc = T::from_usize_lossy(c.col.abs_diff(goal.col));
        grid.cell_size * (dr * dr + dc * dc).sqrt()
    };
    let mut g = vec![T::infinity(); n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut order = 0u64;
    let s = grid.index(start);
    g[s] = T::zero();
    heap.push(Open {
        f: heuristic(start),
        order,
        index: s,
    });
    let goal_index = grid.index(goal);
    while let Some(Open { index, .. }) = heap.pop() {
        if closed[index] {
            continue;
        }
        closed[index] = true;
        if index == goal_index {
            let mut path = vec![goal];
            let mut cur = index;
            while parent[cur] != usize::MAX {
                cur = parent[cur];
                path.push(Cell::new(cur / grid.n_cols, cur % grid.n_cols));
            }
            path.reverse();
            return Ok(path);
        }
        let c = Cell::new(index / grid.n_cols, index % grid.n_cols);
        for d in NEIGHBORS {
            let Some(nb) = neighbor(grid.n_rows, grid.n_cols, c, d) else {
                continue;
            };
            let j = grid.index(nb);
            if closed[j] {
                continue;
            }
            let cand = g[index] + edge_cost(grid, c, nb, slope_weight);
            if cand < g[j] {
                g[j] = cand;
                parent[j] = index;
                order += 1;
                heap.push(Open {
                    f: cand + heuristic(nb),
                    order,
                    index: j,
                });
            }
        }
    }
    Err(PlanError::Unreachable)
}
