//! Path distance, average slope and jerk-based smoothness.

use thiserror::Error;

use crate::field::HeightSurface;
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least {min} points, got {got}")]
    TooFewPoints { got: usize, min: usize },
    #[error("every segment has zero length")]
    AllSegmentsDegenerate,
    #[error("positions and heights differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathMetrics<T> {
    pub distance_2d: T,
    pub average_slope: T,
    /// Mean jerk magnitude.
    pub smoothness: T,
}

impl<T: Real> PathMetrics<T> {
    pub const CSV_HEADER: &'static str = "distance_2d,avg_slope,smoothness";

    pub fn csv_row(&self) -> String {
        format!("{},{},{}", self.distance_2d, self.average_slope, self.smoothness)
    }
}

fn need<T>(points: &[T], min: usize) -> Result<(), MetricsError> {
    if points.len() < min {
        Err(MetricsError::TooFewPoints { got: points.len(), min })
    } else {
        Ok(())
    }
}

#[inline]
fn seg_len<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

/// `Σ ‖p_{k+1} − p_k‖`.
pub fn path_distance_2d<T: Real>(positions: &[[T; 2]]) -> Result<T, MetricsError> {
    need(positions, 2)?;
    Ok(positions.windows(2).map(|w| seg_len(w[0], w[1])).sum())
}

/// Mean of `|Δz|/‖Δp‖` over segments of nonzero length.
pub fn average_slope<T: Real>(positions: &[[T; 2]], heights: &[T]) -> Result<T, MetricsError> {
    need(positions, 2)?;
    if positions.len() != heights.len() {
        return Err(MetricsError::LengthMismatch(positions.len(), heights.len()));
    }
    let (mut sum, mut count) = (T::zero(), 0usize);
    for k in 0..positions.len() - 1 {
        let d = seg_len(positions[k], positions[k + 1]);
        if d > T::zero() {
            sum += (heights[k + 1] - heights[k]).abs() / d;
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricsError::AllSegmentsDegenerate);
    }
    Ok(sum / T::from_usize_lossy(count))
}

/// Mean norm of the third difference of positions divided by `dt³`.
pub fn smoothness_jerk<T: Real>(positions: &[[T; 2]], dt: T) -> Result<T, MetricsError> {
    need(positions, 4)?;
    if !(dt > T::zero()) {
        return Err(MetricsError::BadTimeStep(dt.as_f64()));
    }
    let three = T::lit(3.0);
    let dt3 = dt * dt * dt;
    let n = positions.len() - 3;
    let sum: T = positions
        .windows(4)
        .map(|w| {
            let j = |a: usize| w[3][a] - three * w[2][a] + three * w[1][a] - w[0][a];
            j(0).hypot(j(1)) / dt3
        })
        .sum();
    Ok(sum / T::from_usize_lossy(n))
}

/// All three metrics, with heights queried from `field`.
pub fn evaluate_path<T: Real, S: HeightSurface<T> + ?Sized>(
    positions: &[[T; 2]],
    field: &S,
    dt: T,
) -> Result<PathMetrics<T>, MetricsError> {
    need(positions, 4)?;
    let heights: Vec<T> = positions.iter().map(|p| field.height(p[0], p[1])).collect();
    Ok(PathMetrics {
        distance_2d: path_distance_2d(positions)?,
        average_slope: average_slope(positions, &heights)?,
        smoothness: smoothness_jerk(positions, dt)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{Bounds, TerrainSpec};
    use proptest::prelude::*;

    #[test]
    fn square_perimeter() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]];
        assert_eq!(path_distance_2d(&sq).unwrap(), 4.0);
        assert_eq!(path_distance_2d(&[[2.0, 3.0], [2.0, 3.0]]).unwrap(), 0.0);
        assert_eq!(
            path_distance_2d::<f64>(&[[0.0, 0.0]]),
            Err(MetricsError::TooFewPoints { got: 1, min: 2 })
        );
    }

    #[test]
    fn slope_examples() {
        let p = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]];
        assert_eq!(average_slope(&p, &[1.0; 4]).unwrap(), 0.0);
        assert_eq!(average_slope(&p, &[0.0, 0.5, 1.0, 1.5]).unwrap(), 0.5);
        let mixed = [[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]];
        assert!((average_slope::<f64>(&mixed, &[0.0, 0.2, 0.4]).unwrap() - 0.15).abs() < 1e-15);
        // a repeated point is skipped
        let rep = [[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]];
        assert_eq!(average_slope(&rep, &[0.0, 5.0, 5.5]).unwrap(), 0.5);
        assert_eq!(
            average_slope(&[[1.0, 1.0], [1.0, 1.0]], &[0.0, 1.0]),
            Err(MetricsError::AllSegmentsDegenerate)
        );
    }

    #[test]
    fn jerk_examples() {
        let line: Vec<[f64; 2]> = (0..10).map(|k| [k as f64 * 0.3, 1.0 - k as f64 * 0.1]).collect();
        assert!(smoothness_jerk(&line, 0.1).unwrap() < 1e-12);
        let quad: Vec<[f64; 2]> = (0..10).map(|k| [(k * k) as f64 * 0.01, 0.0]).collect();
        assert!(smoothness_jerk(&quad, 0.1).unwrap() < 1e-9);
        for dt in [0.5, 0.1, 0.01] {
            let cubic: Vec<[f64; 2]> = (0..8).map(|k| [(k as f64 * dt).powi(3), 0.0]).collect();
            let j = smoothness_jerk(&cubic, dt).unwrap();
            assert!((j - 6.0).abs() < 1e-6 * 6.0 / (dt * dt), "{dt}: {j}");
        }
        assert!(matches!(
            smoothness_jerk(&line[..3], 0.1),
            Err(MetricsError::TooFewPoints { got: 3, min: 4 })
        ));
    }

    #[test]
    fn evaluate_on_flat_ground() {
        let flat = TerrainSpec::flat(2.0, Bounds::centered_square(4.0));
        let pts: Vec<[f64; 2]> = (0..11).map(|k| [-1.0 + 0.2 * k as f64, 0.0]).collect();
        let m = evaluate_path(&pts, &flat, 0.1).unwrap();
        assert!((m.distance_2d - 2.0).abs() < 1e-12);
        assert_eq!(m.average_slope, 0.0);
        assert!(m.smoothness < 1e-9);
        assert!(evaluate_path(&pts[..3], &flat, 0.1).is_err());
        assert_eq!(PathMetrics::<f64>::CSV_HEADER, "distance_2d,avg_slope,smoothness");
    }

    fn pts() -> impl Strategy<Value = Vec<[f64; 2]>> {
        prop::collection::vec(prop::array::uniform2(-10.0f64..10.0), 4..30)
    }

    proptest! {
        #[test]
        fn rigid_motion_invariance(p in pts(), angle in 0.0f64..6.3, tx in -5.0f64..5.0, ty in -5.0f64..5.0) {
            let (s, c) = angle.sin_cos();
            let q: Vec<[f64; 2]> = p.iter().map(|v| [c * v[0] - s * v[1] + tx, s * v[0] + c * v[1] + ty]).collect();
            let (d0, d1) = (path_distance_2d(&p).unwrap(), path_distance_2d(&q).unwrap());
            prop_assert!((d0 - d1).abs() <= 1e-9 * d0.max(1.0));
            let (j0, j1) = (smoothness_jerk(&p, 0.1).unwrap(), smoothness_jerk(&q, 0.1).unwrap());
            prop_assert!((j0 - j1).abs() <= 1e-9 * j0.max(1.0));
        }

        #[test]
        fn jerk_scales_with_inverse_cube_of_dt(p in pts(), dt in 0.01f64..1.0) {
            let a = smoothness_jerk(&p, dt).unwrap();
            let b = smoothness_jerk(&p, 2.0 * dt).unwrap();
            prop_assert!((a / 8.0 - b).abs() <= 1e-12 * a.max(1e-300));
        }

        #[test]
        fn slope_ignores_height_offset(p in pts(), off in -100.0f64..100.0) {
            let h: Vec<f64> = p.iter().map(|v| (v[0] * 0.3).sin() + v[1]).collect();
            let h2: Vec<f64> = h.iter().map(|z| z + off).collect();
            let a = average_slope(&p, &h).unwrap();
            let b = average_slope(&p, &h2).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
    }
}
