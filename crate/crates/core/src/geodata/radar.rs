//! Gridded radar rainfall and its JSON file format.
//!
//! File layout (one grid, or a JSON array of grids for a time series):
//!
//! ```json
//! {
//!   "origin": { "lat": 40.25, "lon": 115.75 },
//!   "cell_size_deg": { "lat": 0.01, "lon": 0.01 },
//!   "rows": 2,
//!   "cols": 3,
//!   "window_start": "2022-10-03T00:00:00Z",
//!   "values": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
//! }
//! ```
//!
//! `origin` is the south-west corner of cell (0, 0). Rows run northwards,
//! columns eastwards, `values` is row-major in mm per 30-minute window.

use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{BoundingBox, GeoPoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSize {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadarGrid {
    origin: GeoPoint,
    cell_size_deg: CellSize,
    rows: usize,
    cols: usize,
    window_start: DateTime<Utc>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    origin: GeoPoint,
    cell_size_deg: CellSize,
    rows: usize,
    cols: usize,
    window_start: DateTime<Utc>,
    values: Vec<f64>,
}

impl RadarGrid {
    pub fn new(
        origin: GeoPoint,
        cell_size_deg: CellSize,
        rows: usize,
        cols: usize,
        window_start: DateTime<Utc>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if !(cell_size_deg.lat > 0.0 && cell_size_deg.lon > 0.0) {
            return Err(Error::InvalidInput(format!("cell size must be positive, got {cell_size_deg:?}")));
        }
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!("grid must be non-empty, got {rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "radar grid values".into(),
                expected: rows * cols,
                found: values.len(),
            });
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::OutOfRange(format!("radar value #{i} = {v} must be finite and >= 0")));
        }
        let grid = RadarGrid {
            origin,
            cell_size_deg,
            rows,
            cols,
            window_start,
            values,
        };
        let b = grid.bounds();
        GeoPoint::new(b.max_lat, b.max_lon)?;
        Ok(grid)
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }
    pub fn cell_size(&self) -> CellSize {
        self.cell_size_deg
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn window_start(&self) -> DateTime<Utc> {
        self.window_start
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn cell_center(&self, row: usize, col: usize) -> GeoPoint {
        GeoPoint {
            lat: self.origin.lat + (row as f64 + 0.5) * self.cell_size_deg.lat,
            lon: self.origin.lon + (col as f64 + 0.5) * self.cell_size_deg.lon,
        }
    }

    pub fn bounds(&self) -> BoundingBox {
        BoundingBox {
            min_lat: self.origin.lat,
            min_lon: self.origin.lon,
            max_lat: self.origin.lat + self.rows as f64 * self.cell_size_deg.lat,
            max_lon: self.origin.lon + self.cols as f64 * self.cell_size_deg.lon,
        }
    }

    /// Bilinear interpolation between the four surrounding cell centers.
    ///
    /// Between the outermost cell centers and the grid edge the nearest
    /// center row/column is held constant.
    pub fn interpolate(&self, p: GeoPoint) -> Result<f64> {
        let b = self.bounds();
        if !b.contains(p) {
            return Err(Error::OutOfRange(format!(
                "point ({}, {}) outside radar grid [{}, {}]x[{}, {}]",
                p.lat, p.lon, b.min_lat, b.max_lat, b.min_lon, b.max_lon
            )));
        }
        let (r0, r1, ty) = axis(p.lat, self.origin.lat, self.cell_size_deg.lat, self.rows);
        let (c0, c1, tx) = axis(p.lon, self.origin.lon, self.cell_size_deg.lon, self.cols);
        let top = self.value(r0, c0) * (1.0 - tx) + self.value(r0, c1) * tx;
        let bottom = self.value(r1, c0) * (1.0 - tx) + self.value(r1, c1) * tx;
        Ok(top * (1.0 - ty) + bottom * ty)
    }
}

/// Lower index, upper index and fractional weight along one axis.
fn axis(coord: f64, origin: f64, step: f64, n: usize) -> (usize, usize, f64) {
    let f = ((coord - origin) / step - 0.5).clamp(0.0, (n - 1) as f64);
    if n == 1 {
        return (0, 0, 0.0);
    }
    let i0 = (f.floor() as usize).min(n - 2);
    (i0, i0 + 1, f - i0 as f64)
}

fn from_raw(raw: RawGrid) -> Result<RadarGrid> {
    RadarGrid::new(
        raw.origin,
        raw.cell_size_deg,
        raw.rows,
        raw.cols,
        raw.window_start,
        raw.values,
    )
}

/// Read a single grid or an array of grids.
pub fn read_radar_series(path: &Path) -> Result<Vec<RadarGrid>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |e: serde_json::Error| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        msg: e.to_string(),
    };
    let raws: Vec<RawGrid> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).map_err(parse_err)?
    } else {
        vec![serde_json::from_str(&text).map_err(parse_err)?]
    };
    for (g, raw) in raws.iter().enumerate() {
        if let Some(i) = raw.values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: value_line(&text, g, i).unwrap_or(0),
                msg: format!("grid #{g}: rainfall value #{i} = {} must be finite and >= 0", raw.values[i]),
            });
        }
    }
    raws.into_iter()
        .enumerate()
        .map(|(i, raw)| {
            from_raw(raw).map_err(|e| Error::Format(format!("{}: grid #{i}: {e}", path.display())))
        })
        .collect()
}

/// 1-based line of element `idx` in the `values` array of grid `grid`.
fn value_line(text: &str, grid: usize, idx: usize) -> Option<u64> {
    let key = text.match_indices("\"values\"").nth(grid)?.0;
    let open = key + text[key..].find('[')?;
    let mut start = open + 1;
    for _ in 0..idx {
        start += text[start..].find(',')? + 1;
    }
    let token = start + text[start..].find(|c: char| !c.is_whitespace())?;
    Some(1 + text[..token].matches('\n').count() as u64)
}

pub fn write_radar_series(path: &Path, grids: &[RadarGrid]) -> Result<()> {
    let text = serde_json::to_string_pretty(grids).expect("radar grids serialize");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
