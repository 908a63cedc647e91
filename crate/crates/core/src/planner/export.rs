//! Path CSV files: `tau,x,y,z,theta,v,omega`.

use super::cost::flatness_controls;
use super::spline::{sample_path, PathSpline, Point2};
use super::PlanError;
use crate::field::HeightSurface;
use crate::scalar::Real;

pub const PATH_HEADER: &str = "tau,x,y,z,theta,v,omega";

/// One row of a path CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathRow {
    pub tau: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
}

/// Nine significant digits.
fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

fn push_row(out: &mut String, r: &PathRow) {
    let cols = [r.tau, r.x, r.y, r.z, r.theta, r.v, r.omega].map(sig9);
    out.push_str(&cols.join(","));
    out.push('\n');
}

/// Dense samples of a spline with heights from `field` and unicycle controls.
pub fn spline_rows<T: Real, S: HeightSurface<T> + ?Sized>(
    spline: &PathSpline<T>,
    field: &S,
    total_samples: usize,
    v_min: T,
) -> Result<Vec<PathRow>, PlanError> {
    sample_path(spline, total_samples)?
        .into_iter()
        .map(|s| {
            let c = flatness_controls(s.dp, s.ddp, v_min).map_err(|e| e.at_tau(s.tau.as_f64()))?;
            Ok(PathRow {
                tau: s.tau.as_f64(),
                x: s.p[0].as_f64(),
                y: s.p[1].as_f64(),
                z: field.height(s.p[0], s.p[1]).as_f64(),
                theta: c.theta.as_f64(),
                v: c.v.as_f64(),
                omega: c.omega.as_f64(),
            })
        })
        .collect()
}

/// A polyline traversed over `[0, horizon]` at uniform time steps. Heading
/// and speed come from the outgoing segment (incoming for the last point)
/// and the turn rate from the wrapped heading change.
pub fn polyline_rows<T: Real, S: HeightSurface<T> + ?Sized>(
    points: &[Point2<T>],
    field: &S,
    horizon: T,
) -> Result<Vec<PathRow>, PlanError> {
    if points.len() < 2 {
        return Err(PlanError::TooFewPoints {
            got: points.len(),
            min: 2,
        });
    }
    let n = points.len();
    let dt = horizon.as_f64() / (n - 1) as f64;
    let seg = |k: usize| {
        let (a, b) = (points[k], points[k + 1]);
        let (dx, dy) = ((b[0] - a[0]).as_f64(), (b[1] - a[1]).as_f64());
        (dy.atan2(dx), dx.hypot(dy) / dt)
    };
    let headings: Vec<(f64, f64)> = (0..n).map(|k| seg(k.min(n - 2))).collect();
    let wrap = |a: f64| {
        let t = std::f64::consts::TAU;
        a - t * ((a + std::f64::consts::PI) / t).floor()
    };
    Ok((0..n)
        .map(|k| {
            let omega = if k == 0 || k == n - 1 {
                0.0
            } else {
                wrap(headings[k].0 - headings[k - 1].0) / dt
            };
            PathRow {
                tau: if k == n - 1 { horizon.as_f64() } else { dt * k as f64 },
                x: points[k][0].as_f64(),
                y: points[k][1].as_f64(),
                z: field.height(points[k][0], points[k][1]).as_f64(),
                theta: headings[k].0,
                v: headings[k].1,
                omega,
            }
        })
        .collect())
}

pub fn path_csv(rows: &[PathRow]) -> String {
    let mut s = String::from(PATH_HEADER);
    s.push('\n');
    for r in rows {
        push_row(&mut s, r);
    }
    s
}

#[derive(Debug, thiserror::Error)]
pub enum PathCsvError {
    #[error("path csv header must be `{PATH_HEADER}`, found `{0}`")]
    Header(String),
    #[error("path csv: {0}")]
    Csv(#[from] csv::Error),
}

pub fn read_path_csv(text: &str) -> Result<Vec<PathRow>, PathCsvError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != PATH_HEADER {
        return Err(PathCsvError::Header(header));
    }
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<(f64, f64, f64, f64, f64, f64, f64)>() {
        let (tau, x, y, z, theta, v, omega) = rec?;
        rows.push(PathRow {
            tau,
            x,
            y,
            z,
            theta,
            v,
            omega,
        });
    }
    Ok(rows)
}
