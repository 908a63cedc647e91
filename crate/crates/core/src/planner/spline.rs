//! Natural cubic spline through fixed endpoints and free interior
//! waypoints, with uniform knots on `[0, T]`.

use super::PlanError;
use crate::grid::{Cell, GridMap};
use crate::scalar::Real;

pub type Point2<T> = [T; 2];

/// Planar path `P: [0, T] → R²`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpline<T> {
    pub start: Point2<T>,
    pub goal: Point2<T>,
    /// Interior waypoints `σ₁..σ_N`.
    pub waypoints: Vec<Point2<T>>,
    pub horizon: T,
    /// Second derivatives at every knot (zero at both ends).
    second: Vec<Point2<T>>,
}

/// Position and its first two time derivatives at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample<T> {
    pub tau: T,
    pub p: Point2<T>,
    pub dp: Point2<T>,
    pub ddp: Point2<T>,
}

/// Solves the symmetric tridiagonal system with diagonal 4 and unit
/// off-diagonals in place (Thomas algorithm).
pub(crate) fn solve_knot_system<T: Real>(rhs: &mut [T]) {
    let n = rhs.len();
    if n == 0 {
        return;
    }
    let four = T::lit(4.0);
    let mut c = vec![T::zero(); n];
    let mut denom = four;
    c[0] = T::one() / denom;
    rhs[0] = rhs[0] / denom;
    for i in 1..n {
        denom = four - c[i - 1];
        c[i] = T::one() / denom;
        rhs[i] = (rhs[i] - rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] = rhs[i] - c[i] * rhs[i + 1];
    }
}

impl<T: Real> PathSpline<T> {
    pub fn new(start: Point2<T>, goal: Point2<T>, waypoints: Vec<Point2<T>>, horizon: T) -> Result<Self, PlanError> {
        if !(horizon > T::zero()) {
            return Err(PlanError::BadConfig("horizon must be positive".into()));
        }
        if waypoints.is_empty() {
            return Err(PlanError::TooFewPoints { got: 0, min: 1 });
        }
        let mut s = Self {
            start,
            goal,
            waypoints,
            horizon,
            second: Vec::new(),
        };
        s.refit();
        Ok(s)
    }

    pub fn n_knots(&self) -> usize {
        self.waypoints.len() + 2
    }

    pub fn knot_spacing(&self) -> T {
        self.horizon / T::from_usize_lossy(self.waypoints.len() + 1)
    }

    /// Knot `i`, with `0` the start and `N + 1` the goal.
    #[inline]
    pub fn knot(&self, i: usize) -> Point2<T> {
        if i == 0 {
            self.start
        } else if i == self.waypoints.len() + 1 {
            self.goal
        } else {
            self.waypoints[i - 1]
        }
    }

    pub fn second_derivatives(&self) -> &[Point2<T>] {
        &self.second
    }

    /// Replaces the interior waypoints and recomputes the coefficients.
    pub fn set_waypoints(&mut self, waypoints: Vec<Point2<T>>) {
        assert_eq!(waypoints.len(), self.waypoints.len());
        self.waypoints = waypoints;
        self.refit();
    }

    pub fn flat_waypoints(&self) -> Vec<T> {
        self.waypoints.iter().flat_map(|w| [w[0], w[1]]).collect()
    }

    fn refit(&mut self) {
        let n = self.n_knots();
        let h = self.knot_spacing();
        let k = T::lit(6.0) / (h * h);
        let mut second = vec![[T::zero(); 2]; n];
        for axis in 0..2 {
            let mut rhs: Vec<T> = (1..n - 1)
                .map(|i| k * (self.knot(i + 1)[axis] - T::lit(2.0) * self.knot(i)[axis] + self.knot(i - 1)[axis]))
                .collect();
            solve_knot_system(&mut rhs);
            for (i, m) in rhs.into_iter().enumerate() {
                second[i + 1][axis] = m;
            }
        }
        self.second = second;
    }

    /// Segment index and local offset for time `tau`.
    #[inline]
    pub(crate) fn locate(&self, tau: T) -> (usize, T) {
        let h = self.knot_spacing();
        let segs = self.n_knots() - 1;
        let tau = tau.max(T::zero()).min(self.horizon);
        let i = (tau / h).floor().to_usize().unwrap_or(0).min(segs - 1);
        (i, tau - T::from_usize_lossy(i) * h)
    }

    pub fn eval(&self, tau: T) -> PathSample<T> {
        let (i, t) = self.locate(tau);
        let h = self.knot_spacing();
        let c = SampleCoefs::new(h, t);
        let (y0, y1) = (self.knot(i), self.knot(i + 1));
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let mut s = PathSample {
            tau,
            p: [T::zero(); 2],
            dp: [T::zero(); 2],
            ddp: [T::zero(); 2],
        };
        for a in 0..2 {
            s.p[a] = c.p[0] * y0[a] + c.p[1] * y1[a] + c.p[2] * m0[a] + c.p[3] * m1[a];
            s.dp[a] = c.dp[0] * y0[a] + c.dp[1] * y1[a] + c.dp[2] * m0[a] + c.dp[3] * m1[a];
            s.ddp[a] = c.ddp[0] * m0[a] + c.ddp[1] * m1[a];
        }
        s
    }
}

/// Coefficients of `(y_i, y_{i+1}, M_i, M_{i+1})` in `p`, `ṗ` and of
/// `(M_i, M_{i+1})` in `p̈` at local offset `t` within a segment of length `h`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SampleCoefs<T> {
    pub p: [T; 4],
    pub dp: [T; 4],
    pub ddp: [T; 2],
}

impl<T: Real> SampleCoefs<T> {
    #[inline]
    pub fn new(h: T, t: T) -> Self {
        let u = h - t;
        let six = T::lit(6.0);
        let two = T::lit(2.0);
        Self {
            p: [
                u / h,
                t / h,
                u * u * u / (six * h) - h * u / six,
                t * t * t / (six * h) - h * t / six,
            ],
            dp: [
                -T::one() / h,
                T::one() / h,
                -u * u / (two * h) + h / six,
                t * t / (two * h) - h / six,
            ],
            ddp: [u / h, t / h],
        }
    }
}

/// Uniform samples on `[0, T]` including both ends.
pub fn sample_path<T: Real>(spline: &PathSpline<T>, total_samples: usize) -> Result<Vec<PathSample<T>>, PlanError> {
    if total_samples < 2 {
        return Err(PlanError::TooFewPoints {
            got: total_samples,
            min: 2,
        });
    }
    let d = spline.horizon / T::from_usize_lossy(total_samples - 1);
    Ok((0..total_samples)
        .map(|k| {
            let tau = if k == total_samples - 1 {
                spline.horizon
            } else {
                d * T::from_usize_lossy(k)
            };
            spline.eval(tau)
        })
        .collect())
}

/// Points at equal arc-length spacing along a polyline: `count` interior
/// points splitting it into `count + 1` pieces.
pub fn resample_polyline<T: Real>(points: &[Point2<T>], count: usize) -> Result<Vec<Point2<T>>, PlanError> {
    if points.len() < 2 {
        return Err(PlanError::TooFewPoints {
            got: points.len(),
            min: 2,
        });
    }
    let mut cum = Vec::with_capacity(points.len());
    cum.push(T::zero());
    for w in points.windows(2) {
        let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        cum.push(*cum.last().unwrap() + d);
    }
    let total = *cum.last().unwrap();
    if !(total > T::zero()) {
        return Err(PlanError::CoincidentEndpoints);
    }
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 1..=count {
        let target = total * T::from_usize_lossy(k) / T::from_usize_lossy(count + 1);
        while seg + 2 < cum.len() && cum[seg + 1] < target {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let f = if len > T::zero() { (target - cum[seg]) / len } else { T::zero() };
        let (a, b) = (points[seg], points[seg + 1]);
        out.push([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]);
    }
    Ok(out)
}

/// Spline through `n_waypoints` arc-length-uniform points of a polyline,
/// pinned to its first and last vertex.
pub fn spline_from_polyline<T: Real>(points: &[Point2<T>], n_waypoints: usize, horizon: T) -> Result<PathSpline<T>, PlanError> {
    if n_waypoints == 0 {
        return Err(PlanError::BadConfig("at least one waypoint is required".into()));
    }
    let interior = resample_polyline(points, n_waypoints)?;
    PathSpline::new(points[0], points[points.len() - 1], interior, horizon)
}

/// Cell centers of an A* path as scene points.
pub fn gridpath_points<T: Real>(cells: &[Cell], grid: &GridMap<T>) -> Vec<Point2<T>> {
    cells
        .iter()
        .map(|&c| {
            let (x, y) = grid.cell_center(c);
            [x, y]
        })
        .collect()
}

pub fn spline_from_gridpath<T: Real>(
    cells: &[Cell],
    grid: &GridMap<T>,
    n_waypoints: usize,
    horizon: T,
) -> Result<PathSpline<T>, PlanError> {
    if cells.len() < 2 {
        return Err(PlanError::TooFewPoints {
            got: cells.len(),
            min: 2,
        });
    }
    spline_from_polyline(&gridpath_points(cells, grid), n_waypoints, horizon)
}
