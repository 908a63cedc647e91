//! Analytic ground-truth terrain surfaces.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum TerrainError {
    #[error("degenerate bounds: x [{x_min}, {x_max}], y [{y_min}, {y_max}]")]
    DegenerateBounds {
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    },
    #[error("terrain component {index} has non-positive width {width}")]
    NonPositiveWidth { index: usize, width: f64 },
    #[error("composite terrain requires at least one component")]
    EmptyComposite,
    #[error("invalid terrain json: {0}")]
    Json(String),
}

/// Axis-aligned rectangle in scene units.
///
/// Serialized as `[x_min, x_max, y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[T; 4]", into = "[T; 4]")]
#[serde(bound = "T: Real")]
pub struct Bounds<T> {
    pub x_min: T,
    pub x_max: T,
    pub y_min: T,
    pub y_max: T,
}

impl<T: Real> From<[T; 4]> for Bounds<T> {
    fn from(a: [T; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

impl<T: Real> From<Bounds<T>> for [T; 4] {
    fn from(b: Bounds<T>) -> Self {
        [b.x_min, b.x_max, b.y_min, b.y_max]
    }
}

impl<T: Real> Bounds<T> {
    pub fn new(x_min: T, x_max: T, y_min: T, y_max: T) -> Self {
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    /// Square centered on the origin with the given side length.
    pub fn centered_square(side: T) -> Self {
        let h = side / T::lit(2.0);
        Self::new(-h, h, -h, h)
    }

    pub fn validate(&self) -> Result<(), TerrainError> {
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(TerrainError::DegenerateBounds {
                x_min: self.x_min.as_f64(),
                x_max: self.x_max.as_f64(),
                y_min: self.y_min.as_f64(),
                y_max: self.y_max.as_f64(),
            });
        }
        Ok(())
    }

    pub fn width(&self) -> T {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> T {
        self.y_max - self.y_min
    }

    /// Larger of the two side lengths.
    pub fn extent(&self) -> T {
        self.width().max(self.height())
    }

    pub fn contains(&self, x: T, y: T) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn clamp(&self, x: T, y: T) -> (T, T) {
        (
            x.max(self.x_min).min(self.x_max),
            y.max(self.y_min).min(self.y_max),
        )
    }

    pub fn center(&self) -> (T, T) {
        let two = T::lit(2.0);
        ((self.x_min + self.x_max) / two, (self.y_min + self.y_max) / two)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainKind {
    Flat,
    GaussianHills,
    Sinusoid,
    Composite,
}

/// One hill (or one sinusoid mode): center, amplitude and width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HillParams<T> {
    pub center: [T; 2],
    pub amplitude: T,
    pub width: T,
}

/// Analytic terrain description.
///
/// * `flat`: `base_height` everywhere.
/// * `gaussian_hills`: `base + Σ A·exp(−r²/(2w²))`.
/// * `sinusoid`: `base + Σ A·cos(2π(x−cx)/w)·cos(2π(y−cy)/w)`.
/// * `composite`: `base + Σ` heights of `components` (no clamping).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TerrainSpec<T> {
    pub kind: TerrainKind,
    #[serde(default)]
    pub parameters: Vec<HillParams<T>>,
    pub base_height: T,
    pub bounds: Bounds<T>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<TerrainSpec<T>>,
}

impl<T: Real> TerrainSpec<T> {
    pub fn flat(base_height: T, bounds: Bounds<T>) -> Self {
        Self {
            kind: TerrainKind::Flat,
            parameters: Vec::new(),
            base_height,
            bounds,
            components: Vec::new(),
        }
    }

    pub fn gaussian_hills(hills: Vec<HillParams<T>>, base_height: T, bounds: Bounds<T>) -> Self {
        Self {
            kind: TerrainKind::GaussianHills,
            parameters: hills,
            base_height,
            bounds,
            components: Vec::new(),
        }
    }

    /// Single gaussian hill centered in `bounds`.
    pub fn single_hill(amplitude: T, width: T, bounds: Bounds<T>) -> Self {
        let (cx, cy) = bounds.center();
        Self::gaussian_hills(
            vec![HillParams {
                center: [cx, cy],
                amplitude,
                width,
            }],
            T::zero(),
            bounds,
        )
    }

    pub fn validate(&self) -> Result<(), TerrainError> {
        self.bounds.validate()?;
        if matches!(self.kind, TerrainKind::GaussianHills | TerrainKind::Sinusoid) {
            for (index, p) in self.parameters.iter().enumerate() {
                if !(p.width > T::zero()) {
                    return Err(TerrainError::NonPositiveWidth {
                        index,
                        width: p.width.as_f64(),
                    });
                }
            }
        }
        if self.kind == TerrainKind::Composite {
            if self.components.is_empty() {
                return Err(TerrainError::EmptyComposite);
            }
            for c in &self.components {
                c.validate()?;
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, TerrainError> {
        let spec: Self = serde_json::from_str(text).map_err(|e| TerrainError::Json(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("terrain spec serializes")
    }

    /// Height and analytic gradient at `(x, y)`.
    pub fn height_and_gradient(&self, x: T, y: T) -> (T, [T; 2]) {
        let mut z = self.base_height;
        let mut g = [T::zero(); 2];
        match self.kind {
            TerrainKind::Flat => {}
            TerrainKind::GaussianHills => {
                for p in &self.parameters {
                    let dx = x - p.center[0];
                    let dy = y - p.center[1];
                    let w2 = p.width * p.width;
                    let v = p.amplitude * (-(dx * dx + dy * dy) / (T::lit(2.0) * w2)).exp();
                    z += v;
                    g[0] -= v * dx / w2;
                    g[1] -= v * dy / w2;
                }
            }
            TerrainKind::Sinusoid => {
                let tau = T::PI() + T::PI();
                for p in &self.parameters {
                    let k = tau / p.width;
                    let (sx, cx) = (k * (x - p.center[0])).sin_cos();
                    let (sy, cy) = (k * (y - p.center[1])).sin_cos();
                    z += p.amplitude * cx * cy;
                    g[0] -= p.amplitude * k * sx * cy;
                    g[1] -= p.amplitude * k * cx * sy;
                }
            }
            TerrainKind::Composite => {
                for c in &self.components {
                    let (cz, cg) = c.height_and_gradient(x, y);
                    z += cz;
                    g[0] += cg[0];
                    g[1] += cg[1];
                }
            }
        }
        (z, g)
    }

    /// Analytic matrix of second derivatives at `(x, y)`.
    pub fn hessian(&self, x: T, y: T) -> [[T; 2]; 2] {
        let mut h = [[T::zero(); 2]; 2];
        match self.kind {
            TerrainKind::Flat => {}
            TerrainKind::GaussianHills => {
                for p in &self.parameters {
                    let dx = x - p.center[0];
                    let dy = y - p.center[1];
                    let w2 = p.width * p.width;
                    let v = p.amplitude * (-(dx * dx + dy * dy) / (T::lit(2.0) * w2)).exp() / w2;
                    h[0][0] += v * (dx * dx / w2 - T::one());
                    h[0][1] += v * dx * dy / w2;
                    h[1][1] += v * (dy * dy / w2 - T::one());
                }
            }
            TerrainKind::Sinusoid => {
                let tau = T::PI() + T::PI();
                for p in &self.parameters {
                    let k = tau / p.width;
                    let (sx, cx) = (k * (x - p.center[0])).sin_cos();
                    let (sy, cy) = (k * (y - p.center[1])).sin_cos();
                    let a = p.amplitude * k * k;
                    h[0][0] -= a * cx * cy;
                    h[0][1] += a * sx * sy;
                    h[1][1] -= a * cx * cy;
                }
            }
            TerrainKind::Composite => {
                for c in &self.components {
                    let ch = c.hessian(x, y);
                    h[0][0] += ch[0][0];
                    h[0][1] += ch[0][1];
                    h[1][1] += ch[1][1];
                }
            }
        }
        h[1][0] = h[0][1];
        h
    }

    /// Upper bound on the gradient norm anywhere in the plane.
    pub fn lipschitz_bound(&self) -> T {
        match self.kind {
            TerrainKind::Flat => T::zero(),
            // max of A·r/w²·exp(−r²/2w²) is A/(w·√e)
            TerrainKind::GaussianHills => self
                .parameters
                .iter()
                .map(|p| p.amplitude.abs() / (p.width * T::lit(std::f64::consts::E.sqrt())))
                .sum(),
            TerrainKind::Sinusoid => self
                .parameters
                .iter()
                .map(|p| p.amplitude.abs() * (T::PI() + T::PI()) / p.width * T::lit(2.0).sqrt())
                .sum(),
            TerrainKind::Composite => self.components.iter().map(|c| c.lipschitz_bound()).sum(),
        }
    }

    /// Min and max height over a dense sampling of the bounds.
    pub fn height_range(&self) -> (T, T) {
        const N: usize = 129;
        let b = &self.bounds;
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        let n1 = T::from_usize_lossy(N - 1);
        for i in 0..N {
            let x = b.x_min + b.width() * T::from_usize_lossy(i) / n1;
            for j in 0..N {
                let y = b.y_min + b.height() * T::from_usize_lossy(j) / n1;
                let z = surface_height(self, x, y);
                lo = lo.min(z);
                hi = hi.max(z);
            }
        }
        (lo, hi)
    }
}

/// Ground-truth surface height `g(x, y)`. Defined on the whole plane.
pub fn surface_height<T: Real>(spec: &TerrainSpec<T>, x: T, y: T) -> T {
    spec.height_and_gradient(x, y).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hessian_matches_gradient_differences() {
        let hills = TerrainSpec::gaussian_hills(
            vec![
                HillParams { center: [0.3, -0.2], amplitude: 1.2, width: 0.6 },
                HillParams { center: [-1.0, 0.5], amplitude: -0.4, width: 0.3 },
            ],
            0.1,
            Bounds::centered_square(4.0),
        );
        let sines = TerrainSpec {
            kind: TerrainKind::Sinusoid,
            parameters: vec![HillParams { center: [0.1, 0.2], amplitude: 0.3, width: 1.7 }],
            base_height: 0.0,
            bounds: Bounds::centered_square(4.0),
            components: Vec::new(),
        };
        let mixed = TerrainSpec {
            kind: TerrainKind::Composite,
            parameters: Vec::new(),
            base_height: 0.5,
            bounds: Bounds::centered_square(4.0),
            components: vec![hills.clone(), sines.clone()],
        };
        let h = 1e-5f64;
        for spec in [hills, sines, mixed] {
            for &(x, y) in &[(0.2, 0.1), (-0.9, 0.7), (1.3, -1.1)] {
                let hm = spec.hessian(x, y);
                let gxp = spec.height_and_gradient(x + h, y).1;
                let gxm = spec.height_and_gradient(x - h, y).1;
                let gyp = spec.height_and_gradient(x, y + h).1;
                let gym = spec.height_and_gradient(x, y - h).1;
                assert!((hm[0][0] - (gxp[0] - gxm[0]) / (2.0 * h)).abs() < 1e-6);
                assert!((hm[1][0] - (gxp[1] - gxm[1]) / (2.0 * h)).abs() < 1e-6);
                assert!((hm[0][1] - (gyp[0] - gym[0]) / (2.0 * h)).abs() < 1e-6);
                assert!((hm[1][1] - (gyp[1] - gym[1]) / (2.0 * h)).abs() < 1e-6);
            }
        }
    }

    fn unit_hill() -> TerrainSpec<f64> {
        TerrainSpec::gaussian_hills(
            vec![HillParams {
                center: [0.0, 0.0],
                amplitude: 1.0,
                width: 0.5,
            }],
            0.0,
            Bounds::centered_square(4.0),
        )
    }

    #[test]
    fn flat_is_constant() {
        let s = TerrainSpec::flat(2.0, Bounds::centered_square(4.0));
        for &(x, y) in &[(0.0, 0.0), (-7.0, 3.0), (1e6, -1e6)] {
            assert_eq!(surface_height(&s, x, y), 2.0);
        }
    }

    #[test]
    fn hill_peak_and_tail() {
        let s = unit_hill();
        assert_eq!(surface_height(&s, 0.0, 0.0), 1.0);
        let v = surface_height(&s, 1.0, 0.0);
        assert!((v - 0.1353352832366127).abs() < 1e-15);
    }

    #[test]
    fn composite_sums_components() {
        let hill = unit_hill();
        let flat = TerrainSpec::flat(-0.5, hill.bounds);
        let comp = TerrainSpec {
            kind: TerrainKind::Composite,
            parameters: vec![],
            base_height: 0.25,
            bounds: hill.bounds,
            components: vec![hill.clone(), flat],
        };
        comp.validate().unwrap();
        let z = surface_height(&comp, 0.3, -0.2);
        assert!((z - (0.25 + surface_height(&hill, 0.3, -0.2) - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut s = unit_hill();
        s.parameters[0].width = 0.0;
        assert!(matches!(s.validate(), Err(TerrainError::NonPositiveWidth { .. })));
        let s = TerrainSpec::flat(0.0, Bounds::new(1.0, 1.0, 0.0, 1.0));
        assert!(matches!(s.validate(), Err(TerrainError::DegenerateBounds { .. })));
    }

    #[test]
    fn json_layout_and_round_trip() {
        let s = unit_hill();
        let text = s.to_json();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["kind"], "gaussian_hills");
        assert_eq!(v["bounds"], serde_json::json!([-2.0, 2.0, -2.0, 2.0]));
        assert_eq!(v["parameters"][0]["center"], serde_json::json!([0.0, 0.0]));
        assert_eq!(TerrainSpec::<f64>::from_json(&text).unwrap(), s);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = TerrainSpec {
            kind: TerrainKind::Sinusoid,
            parameters: vec![HillParams {
                center: [0.1, -0.3],
                amplitude: 0.4,
                width: 1.7,
            }],
            base_height: 0.0,
            bounds: Bounds::centered_square(4.0),
            components: vec![],
        };
        for spec in [unit_hill(), s] {
            let (x, y) = (0.37, -0.21);
            let h = 1e-6;
            let (_, g) = spec.height_and_gradient(x, y);
            let gx = (surface_height(&spec, x + h, y) - surface_height(&spec, x - h, y)) / (2.0 * h);
            let gy = (surface_height(&spec, x, y + h) - surface_height(&spec, x, y - h)) / (2.0 * h);
            assert!((g[0] - gx).abs() < 1e-8 && (g[1] - gy).abs() < 1e-8);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn surface_is_lipschitz(x in -3.0f64..3.0, y in -3.0f64..3.0,
                                    dx in -1e-6f64..1e-6, dy in -1e-6f64..1e-6) {
                let s = unit_hill();
                let k = s.lipschitz_bound();
                let d = (dx * dx + dy * dy).sqrt();
                let diff = (surface_height(&s, x + dx, y + dy) - surface_height(&s, x, y)).abs();
                prop_assert!(diff <= k * d + 1e-15);
            }
        }
    }
}
