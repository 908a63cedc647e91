//! Regular height rasters and ESRI ASCII grid interchange.

use std::fmt::Write as _;

use thiserror::Error;

use crate::field::HeightSurface;
use crate::scalar::Real;
use crate::terrain::Bounds;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("grid has {got} heights, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("cell size must be positive, got {0}")]
    NonPositiveCellSize(f64),
    #[error("grid needs at least {min} columns and rows, got {n_cols}x{n_rows}")]
    TooSmall { n_cols: usize, n_rows: usize, min: usize },
    #[error(
        "non-square cells: column spacing {dx} vs row spacing {dy}; adjust n_cols/n_rows to match the bounds aspect ratio"
    )]
    NonSquareCells { dx: f64, dy: f64 },
}

/// Cell index, row 0 being the northernmost row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Raster of heights over a rectangle, stored row-major with the
/// northernmost row first.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap<T> {
    pub n_cols: usize,
    pub n_rows: usize,
    pub x_ll: T,
    pub y_ll: T,
    pub cell_size: T,
    pub nodata_value: T,
    pub heights: Vec<T>,
}

pub const DEFAULT_NODATA: f64 = -9999.0;

impl<T: Real> GridMap<T> {
    pub fn new(
        n_cols: usize,
        n_rows: usize,
        x_ll: T,
        y_ll: T,
        cell_size: T,
        heights: Vec<T>,
    ) -> Result<Self, GridError> {
        let g = Self {
            n_cols,
            n_rows,
            x_ll,
            y_ll,
            cell_size,
            nodata_value: T::lit(DEFAULT_NODATA),
            heights,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.n_cols == 0 || self.n_rows == 0 {
            return Err(GridError::TooSmall {
                n_cols: self.n_cols,
                n_rows: self.n_rows,
                min: 1,
            });
        }
        if !(self.cell_size > T::zero()) {
            return Err(GridError::NonPositiveCellSize(self.cell_size.as_f64()));
        }
        let expected = self.n_cols * self.n_rows;
        if self.heights.len() != expected {
            return Err(GridError::LengthMismatch {
                got: self.heights.len(),
                expected,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.n_cols + cell.col
    }

    #[inline]
    pub fn height(&self, cell: Cell) -> T {
        self.heights[self.index(cell)]
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.n_rows && cell.col < self.n_cols
    }

    pub fn is_nodata(&self, cell: Cell) -> bool {
        self.height(cell) == self.nodata_value
    }

    /// `true` for every cell holding the nodata sentinel.
    pub fn nodata_mask(&self) -> Vec<bool> {
        self.heights.iter().map(|&h| h == self.nodata_value).collect()
    }

    pub fn bounds(&self) -> Bounds<T> {
        Bounds::new(
            self.x_ll,
            self.x_ll + self.cell_size * T::from_usize_lossy(self.n_cols),
            self.y_ll,
            self.y_ll + self.cell_size * T::from_usize_lossy(self.n_rows),
        )
    }

    /// Scene coordinates of a cell center.
    pub fn cell_center(&self, cell: Cell) -> (T, T) {
        let half = T::lit(0.5);
        let x = self.x_ll + (T::from_usize_lossy(cell.col) + half) * self.cell_size;
        let y = self.y_ll + (T::from_usize_lossy(self.n_rows - 1 - cell.row) + half) * self.cell_size;
        (x, y)
    }

    /// Cell containing a scene point, if any.
    pub fn cell_at(&self, x: T, y: T) -> Option<Cell> {
        let c = ((x - self.x_ll) / self.cell_size).floor();
        let r_from_south = ((y - self.y_ll) / self.cell_size).floor();
        if c < T::zero() || r_from_south < T::zero() {
            return None;
        }
        let col = c.to_usize()?;
        let rs = r_from_south.to_usize()?;
        // points on the far edges belong to the last cell
        let col = if col == self.n_cols && x <= self.bounds().x_max { col - 1 } else { col };
        let rs = if rs == self.n_rows && y <= self.bounds().y_max { rs - 1 } else { rs };
        if col >= self.n_cols || rs >= self.n_rows {
            return None;
        }
        Some(Cell::new(self.n_rows - 1 - rs, col))
    }
}

const KEYS: [&str; 8] = [
    "ncols",
    "nrows",
    "xllcorner",
    "yllcorner",
    "xllcenter",
    "yllcenter",
    "cellsize",
    "nodata_value",
];

fn parse_err(line: usize, message: impl Into<String>) -> GridError {
    GridError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses an ESRI ASCII grid. Header keys are case-insensitive; the
/// `*center` variants of the lower-left origin are also accepted.
pub fn load_asc<T: Real>(text: &str) -> Result<GridMap<T>, GridError> {
    let mut ncols = None;
    let mut nrows = None;
    let mut xll: Option<(f64, bool)> = None;
    let mut yll: Option<(f64, bool)> = None;
    let mut cellsize = None;
    let mut nodata = None;

    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).peekable();
    let mut last_line = 0;
    while let Some(&(lineno, line)) = lines.peek() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            lines.next();
            continue;
        }
        let mut toks = trimmed.split_whitespace();
        let key = toks.next().unwrap_or_default();
        let lower = key.to_ascii_lowercase();
        if !KEYS.contains(&lower.as_str()) {
            if key.parse::<f64>().is_ok() {
                break;
            }
            return Err(parse_err(lineno, format!("unknown header key '{key}'")));
        }
        let value = toks
            .next()
            .ok_or_else(|| parse_err(lineno, format!("missing value for '{key}'")))?;
        if toks.next().is_some() {
            return Err(parse_err(lineno, format!("trailing tokens after '{key}'")));
        }
        let num: f64 = value
            .parse()
            .map_err(|_| parse_err(lineno, format!("non-numeric value '{value}' for '{key}'")))?;
        let as_count = |v: f64| -> Result<usize, GridError> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(parse_err(lineno, format!("'{key}' must be a positive integer, got '{value}'")))
            }
        };
        match lower.as_str() {
            "ncols" => ncols = Some(as_count(num)?),
            "nrows" => nrows = Some(as_count(num)?),
            "xllcorner" => xll = Some((num, false)),
            "yllcorner" => yll = Some((num, false)),
            "xllcenter" => xll = Some((num, true)),
            "yllcenter" => yll = Some((num, true)),
            "cellsize" => {
                if !(num > 0.0) {
                    return Err(parse_err(lineno, "cellsize must be positive"));
                }
                cellsize = Some(num)
            }
            _ => nodata = Some(num),
        }
        last_line = lineno;
        lines.next();
    }

    let missing = |k: &str| parse_err(last_line + 1, format!("missing header key '{k}'"));
    let ncols = ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = nrows.ok_or_else(|| missing("nrows"))?;
    let (xll, x_center) = xll.ok_or_else(|| missing("xllcorner"))?;
    let (yll, y_center) = yll.ok_or_else(|| missing("yllcorner"))?;
    let cellsize = cellsize.ok_or_else(|| missing("cellsize"))?;
    let half = 0.5 * cellsize;
    let x_ll = if x_center { xll - half } else { xll };
    let y_ll = if y_center { yll - half } else { yll };

    let mut heights = Vec::with_capacity(ncols * nrows);
    let mut rows_read = 0;
    for (lineno, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if rows_read == nrows {
            return Err(parse_err(lineno, format!("extra data row beyond nrows = {nrows}")));
        }
        let before = heights.len();
        for tok in trimmed.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(lineno, format!("non-numeric cell value '{tok}'")))?;
            heights.push(T::lit(v));
        }
        let count = heights.len() - before;
        if count != ncols {
            return Err(parse_err(lineno, format!("expected {ncols} values, found {count}")));
        }
        rows_read += 1;
        last_line = lineno;
    }
    if rows_read != nrows {
        return Err(parse_err(
            last_line + 1,
            format!("missing rows: expected {nrows}, found {rows_read}"),
        ));
    }

    Ok(GridMap {
        n_cols: ncols,
        n_rows: nrows,
        x_ll: T::lit(x_ll),
        y_ll: T::lit(y_ll),
        cell_size: T::lit(cellsize),
        nodata_value: T::lit(nodata.unwrap_or(DEFAULT_NODATA)),
        heights,
    })
}

/// Writes an ESRI ASCII grid using shortest round-trip float formatting.
pub fn save_asc<T: Real>(grid: &GridMap<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "ncols {}", grid.n_cols);
    let _ = writeln!(out, "nrows {}", grid.n_rows);
    let _ = writeln!(out, "xllcorner {}", grid.x_ll);
    let _ = writeln!(out, "yllcorner {}", grid.y_ll);
    let _ = writeln!(out, "cellsize {}", grid.cell_size);
    let _ = writeln!(out, "NODATA_value {}", grid.nodata_value);
    for row in grid.heights.chunks(grid.n_cols) {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

/// Samples a height surface at every cell center of a square-cell raster.
pub fn rasterize_field<T: Real, S: HeightSurface<T> + ?Sized>(
    field: &S,
    bounds: Bounds<T>,
    n_cols: usize,
    n_rows: usize,
) -> Result<GridMap<T>, GridError> {
    if n_cols < 2 || n_rows < 2 {
        return Err(GridError::TooSmall {
            n_cols,
            n_rows,
            min: 2,
        });
    }
    let dx = bounds.width() / T::from_usize_lossy(n_cols);
    let dy = bounds.height() / T::from_usize_lossy(n_rows);
    if ((dx - dy) / dx).abs() > T::lit(1e-6) {
        return Err(GridError::NonSquareCells {
            dx: dx.as_f64(),
            dy: dy.as_f64(),
        });
    }
    let mut grid = GridMap {
        n_cols,
        n_rows,
        x_ll: bounds.x_min,
        y_ll: bounds.y_min,
        cell_size: dx,
        nodata_value: T::lit(DEFAULT_NODATA),
        heights: vec![T::zero(); n_cols * n_rows],
    };
    for r in 0..n_rows {
        for c in 0..n_cols {
            let cell = Cell::new(r, c);
            let (x, y) = grid.cell_center(cell);
            let i = grid.index(cell);
            grid.heights[i] = field.height(x, y);
        }
    }
    Ok(grid)
}
