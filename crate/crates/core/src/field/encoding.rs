//! Multi-resolution hashed feature grid with quintic smoothstep weights.

use crate::scalar::Real;

pub const HASH_PRIME_X: u32 = 1;
pub const HASH_PRIME_Y: u32 = 2_654_435_761;

/// Spatial hash of an integer vertex into a table of `table_size` entries.
#[inline]
pub fn hash_vertex(ix: u32, iy: u32, table_size: usize) -> usize {
    let h = ix.wrapping_mul(HASH_PRIME_X) ^ iy.wrapping_mul(HASH_PRIME_Y);
    (h as usize) & (table_size - 1)
}

/// `s(t) = 6t⁵ − 15t⁴ + 10t³` and its first two derivatives.
#[inline]
pub fn smoothstep<T: Real>(t: T) -> (T, T, T) {
    let t2 = t * t;
    let t3 = t2 * t;
    let s = t3 * (t * (t * T::lit(6.0) - T::lit(15.0)) + T::lit(10.0));
    let ds = T::lit(30.0) * t2 * (t * (t - T::lit(2.0)) + T::one());
    let d2s = T::lit(60.0) * t * (t * (T::lit(2.0) * t - T::lit(3.0)) + T::one());
    (s, ds, d2s)
}

/// Corner lookup for one level at one query point.
///
/// Corner order is `(i, j)`, `(i+1, j)`, `(i, j+1)`, `(i+1, j+1)`.
#[derive(Debug, Clone, Copy)]
pub struct LevelCorners<T> {
    /// Table entry of each corner.
    pub entries: [usize; 4],
    pub weights: [T; 4],
    /// Smoothstep values, first and second derivatives per axis, with
    /// respect to the in-cell coordinate.
    pub sx: (T, T, T),
    pub sy: (T, T, T),
}

/// Locates the cell at resolution `res` enclosing the normalized point
/// `(u, v) ∈ [0, 1]²` and returns hashed corners with their weights.
#[inline]
pub fn level_corners<T: Real>(u: T, v: T, res: usize, table_size: usize) -> LevelCorners<T> {
    let r = T::from_usize_lossy(res);
    let (ix, tx) = cell_coord(u * r, res);
    let (iy, ty) = cell_coord(v * r, res);
    let sx = smoothstep(tx);
    let sy = smoothstep(ty);
    let one = T::one();
    let weights = [
        (one - sx.0) * (one - sy.0),
        sx.0 * (one - sy.0),
        (one - sx.0) * sy.0,
        sx.0 * sy.0,
    ];
    let (ix, iy) = (ix as u32, iy as u32);
    let entries = [
        hash_vertex(ix, iy, table_size),
        hash_vertex(ix + 1, iy, table_size),
        hash_vertex(ix, iy + 1, table_size),
        hash_vertex(ix + 1, iy + 1, table_size),
    ];
    LevelCorners {
        entries,
        weights,
        sx,
        sy,
    }
}

#[inline]
fn cell_coord<T: Real>(pos: T, res: usize) -> (usize, T) {
    let f = pos.floor();
    let i = f.to_usize().unwrap_or(0).min(res - 1);
    (i, pos - T::from_usize_lossy(i))
}

impl<T: Real> LevelCorners<T> {
    /// Weight derivatives with respect to the in-cell coordinates `(tx, ty)`.
    #[inline]
    pub fn weight_grads(&self) -> ([T; 4], [T; 4]) {
        let one = T::one();
        let (sx, dsx) = (self.sx.0, self.sx.1);
        let (sy, dsy) = (self.sy.0, self.sy.1);
        (
            [-dsx * (one - sy), dsx * (one - sy), -dsx * sy, dsx * sy],
            [-(one - sx) * dsy, -sx * dsy, (one - sx) * dsy, sx * dsy],
        )
    }

    /// Second derivatives `(∂²/∂tx², ∂²/∂tx∂ty, ∂²/∂ty²)` of the weights.
    #[inline]
    pub fn weight_hessians(&self) -> ([T; 4], [T; 4], [T; 4]) {
        let one = T::one();
        let (sx, dsx, ddsx) = self.sx;
        let (sy, dsy, ddsy) = self.sy;
        let c = dsx * dsy;
        (
            [-ddsx * (one - sy), ddsx * (one - sy), -ddsx * sy, ddsx * sy],
            [c, -c, -c, c],
            [-(one - sx) * ddsy, -sx * ddsy, (one - sx) * ddsy, sx * ddsy],
        )
    }
}
