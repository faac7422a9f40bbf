//! Raster and point-table data model.
//!
//! Grids are stored row-major with row 0 as the northernmost row, the same
//! layout as the ESRI ASCII format. Every coordinate computation goes through
//! [`Grid::centroid`] and [`Grid::cell_index`].

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{EngineError, Result};

/// Georeferencing of a raster: dimensions, lower-left corner and cell size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridHeader {
    pub ncols: usize,
    pub nrows: usize,
    pub xll: f64,
    pub yll: f64,
    pub cellsize: f64,
}

impl GridHeader {
    pub fn new(ncols: usize, nrows: usize, xll: f64, yll: f64, cellsize: f64) -> Result<Self> {
        let header = GridHeader {
            ncols,
            nrows,
            xll,
            yll,
            cellsize,
        };
        header.validate()?;
        Ok(header)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ncols == 0 || self.nrows == 0 {
            return Err(EngineError::usage("grid must have at least one row and column"));
        }
        if !(self.cellsize > 0.0 && self.cellsize.is_finite()) {
            return Err(EngineError::usage(format!(
                "cellsize must be positive, got {}",
                self.cellsize
            )));
        }
        if !self.xll.is_finite() || !self.yll.is_finite() {
            return Err(EngineError::usage("grid corner must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Centroid (lon, lat) of cell `(row, col)`.
    pub fn centroid(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.xll + (col as f64 + 0.5) * self.cellsize,
            self.yll + ((self.nrows - row) as f64 - 0.5) * self.cellsize,
        )
    }

    /// Cell containing `(lon, lat)`.
    ///
    /// Cells are half-open on their east and north edges: a cell owns
    /// `[x, x + cellsize) x [y, y + cellsize)`, so its lower-left corner maps
    /// to it. Points on the grid's east or north boundary are outside.
    pub fn cell_index(&self, lon: f64, lat: f64) -> Option<(usize, usize)> {
        if !lon.is_finite() || !lat.is_finite() {
            return None;
        }
        let fx = ((lon - self.xll) / self.cellsize).floor();
        let fy = ((lat - self.yll) / self.cellsize).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.ncols as f64 || fy >= self.nrows as f64 {
            return None;
        }
        let col = fx as usize;
        let row = self.nrows - 1 - fy as usize;
        Some((row, col))
    }

    /// Header of a grid refined by an integer factor over the same extent.
    pub fn refine(&self, factor: usize) -> Result<GridHeader> {
        if factor == 0 {
            return Err(EngineError::usage("refinement factor must be at least 1"));
        }
        GridHeader::new(
            self.ncols * factor,
            self.nrows * factor,
            self.xll,
            self.yll,
            self.cellsize / factor as f64,
        )
    }

    /// Longitude/latitude bounds `(xmin, ymin, xmax, ymax)`.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        (
            self.xll,
            self.yll,
            self.xll + self.ncols as f64 * self.cellsize,
            self.yll + self.nrows as f64 * self.cellsize,
        )
    }
}

/// A georeferenced raster with a no-data sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub header: GridHeader,
    pub nodata: f64,
    values: Vec<f64>,
}

pub const DEFAULT_NODATA: f64 = -9999.0;

impl Grid {
    pub fn new(header: GridHeader, nodata: f64, values: Vec<f64>) -> Result<Self> {
        header.validate()?;
        if values.len() != header.len() {
            return Err(EngineError::usage(format!(
                "grid has {} values, header requires {}",
                values.len(),
                header.len()
            )));
        }
        Ok(Grid {
            header,
            nodata,
            values,
        })
    }

    /// A grid with every cell set to no-data.
    pub fn empty(header: GridHeader, nodata: f64) -> Self {
        Grid {
            header,
            nodata,
            values: vec![nodata; header.len()],
        }
    }

    pub fn from_fn(
        header: GridHeader,
        nodata: f64,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(header.len());
        for r in 0..header.nrows {
            for c in 0..header.ncols {
                values.push(f(r, c));
            }
        }
        Grid {
            header,
            nodata,
            values,
        }
    }

    pub fn ncols(&self) -> usize {
        self.header.ncols
    }

    pub fn nrows(&self) -> usize {
        self.header.nrows
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.header.ncols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let ncols = self.header.ncols;
        self.values[row * ncols + col] = value;
    }

    pub fn is_nodata(&self, value: f64) -> bool {
        value.is_nan() || value == self.nodata
    }

    /// Cell value, or `None` for no-data.
    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.get(row, col);
        (!self.is_nodata(v)).then_some(v)
    }

    pub fn centroid(&self, row: usize, col: usize) -> (f64, f64) {
        self.header.centroid(row, col)
    }

    pub fn cell_index(&self, lon: f64, lat: f64) -> Option<(usize, usize)> {
        self.header.cell_index(lon, lat)
    }

    pub fn data_count(&self) -> usize {
        self.values.iter().filter(|v| !self.is_nodata(**v)).count()
    }

    /// Iterate `(row, col, value)` over cells holding data.
    pub fn data_cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let ncols = self.header.ncols;
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| !self.is_nodata(**v))
            .map(move |(i, v)| (i / ncols, i % ncols, *v))
    }

    /// Check the soil-moisture range constraint: data values lie in [0, 1].
    pub fn validate_moisture(&self) -> Result<()> {
        for (r, c, v) in self.data_cells() {
            if !(0.0..=1.0).contains(&v) {
                return Err(EngineError::usage(format!(
                    "moisture value {v} at cell ({r}, {c}) outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Arithmetic mean computed about the first element. Exact when all inputs
/// are equal, which keeps block averages of constant blocks bit-identical.
pub(crate) fn shifted_mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut iter = values.into_iter();
    let first = iter.next()?;
    let mut n = 1usize;
    let mut acc = 0.0;
    for v in iter {
        acc += v - first;
        n += 1;
    }
    Some(first + acc / n as f64)
}

// ---------------------------------------------------------------------------
// ESRI ASCII grid I/O

const HEADER_KEYS: [&str; 6] = [
    "ncols",
    "nrows",
    "xllcorner",
    "yllcorner",
    "cellsize",
    "nodata_value",
];

/// Read an ESRI ASCII grid.
pub fn read_ascii_grid(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| EngineError::io(path, e))?;
    parse_ascii_grid(&text, path)
}

pub(crate) fn parse_ascii_grid(text: &str, path: &Path) -> Result<Grid> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let mut fields = [f64::NAN; 6];
    let mut centered = [false; 2];
    for (slot, key) in HEADER_KEYS.iter().enumerate() {
        let (lineno, line) = lines
            .next()
            .ok_or_else(|| EngineError::parse(path, 0, format!("missing header line `{key}`")))?;
        let mut parts = line.split_whitespace();
        let name = parts.next().unwrap_or("").to_ascii_lowercase();
        let accepted = match slot {
            2 if name == "xllcenter" => {
                centered[0] = true;
                true
            }
            3 if name == "yllcenter" => {
                centered[1] = true;
                true
            }
            _ => name == *key,
        };
        if !accepted {
            return Err(EngineError::parse(
                path,
                lineno,
                format!("expected header key `{key}`, found `{name}`"),
            ));
        }
        let raw = parts
            .next()
            .ok_or_else(|| EngineError::parse(path, lineno, format!("missing value for `{key}`")))?;
        if parts.next().is_some() {
            return Err(EngineError::parse(path, lineno, "trailing tokens in header line"));
        }
        fields[slot] = raw
            .parse::<f64>()
            .map_err(|_| EngineError::parse(path, lineno, format!("non-numeric value `{raw}`")))?;
    }

    let as_count = |v: f64, key: &str| -> Result<usize> {
        if v.fract() != 0.0 || v < 1.0 {
            return Err(EngineError::parse(path, 0, format!("`{key}` must be a positive integer")));
        }
        Ok(v as usize)
    };
    let ncols = as_count(fields[0], "ncols")?;
    let nrows = as_count(fields[1], "nrows")?;
    let cellsize = fields[4];
    let mut xll = fields[2];
    let mut yll = fields[3];
    if centered[0] {
        xll -= cellsize / 2.0;
    }
    if centered[1] {
        yll -= cellsize / 2.0;
    }
    let header = GridHeader::new(ncols, nrows, xll, yll, cellsize)
        .map_err(|e| EngineError::parse(path, 5, e.to_string()))?;
    let nodata = fields[5];

    let mut values = Vec::with_capacity(header.len());
    let mut rows_seen = 0usize;
    for (lineno, line) in lines {
        if rows_seen == nrows {
            return Err(EngineError::parse(
                path,
                lineno,
                format!("more than {nrows} data rows"),
            ));
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            let v = tok.parse::<f64>().map_err(|_| {
                EngineError::parse(path, lineno, format!("non-numeric token `{tok}`"))
            })?;
            values.push(v);
        }
        let got = values.len() - before;
        if got != ncols {
            return Err(EngineError::parse(
                path,
                lineno,
                format!("expected {ncols} values, found {got}"),
            ));
        }
        rows_seen += 1;
    }
    if rows_seen != nrows {
        return Err(EngineError::parse(
            path,
            text.lines().count(),
            format!("expected {nrows} data rows, found {rows_seen}"),
        ));
    }
    Grid::new(header, nodata, values)
}

/// Render a grid as ESRI ASCII text. Values use the shortest representation
/// that parses back to the identical `f64`.
pub fn format_ascii_grid(grid: &Grid) -> String {
    let h = &grid.header;
    let mut out = String::with_capacity(h.len() * 12 + 128);
    let _ = writeln!(out, "ncols {}", h.ncols);
    let _ = writeln!(out, "nrows {}", h.nrows);
    let _ = writeln!(out, "xllcorner {}", h.xll);
    let _ = writeln!(out, "yllcorner {}", h.yll);
    let _ = writeln!(out, "cellsize {}", h.cellsize);
    let _ = writeln!(out, "NODATA_value {}", grid.nodata);
    for row in grid.values.chunks(h.ncols) {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let v = if grid.is_nodata(*v) { grid.nodata } else { *v };
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_ascii_grid(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_ascii_grid(grid)).map_err(|e| EngineError::io(path, e))
}

// ---------------------------------------------------------------------------
// Temporal aggregation

/// Per-cell mean of daily grids, skipping no-data. A cell with fewer than
/// `min_count` observations becomes no-data.
pub fn monthly_mean(days: &[Grid], min_count: usize) -> Result<Grid> {
    let first = days
        .first()
        .ok_or_else(|| EngineError::usage("monthly_mean needs at least one grid"))?;
    if let Some(bad) = days.iter().position(|g| g.header != first.header) {
        return Err(EngineError::usage(format!(
            "grid {bad} header differs from grid 0"
        )));
    }
    let min_count = min_count.max(1);
    let header = first.header;
    let nodata = first.nodata;
    let mut out = Grid::empty(header, nodata);
    let mut buf = Vec::with_capacity(days.len());
    for i in 0..header.len() {
        buf.clear();
        buf.extend(
            days.iter()
                .map(|g| g.values[i])
                .zip(days.iter())
                .filter(|(v, g)| !g.is_nodata(*v))
                .map(|(v, _)| v),
        );
        if buf.len() >= min_count {
            // sort so the result does not depend on input order
            buf.sort_by(f64::total_cmp);
            out.values[i] = buf.iter().sum::<f64>() / buf.len() as f64;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Point tables

/// One training or prediction vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub lon: f64,
    pub lat: f64,
    pub target: Option<f64>,
    pub covariates: Vec<f64>,
}

/// Records sharing a fixed covariate width.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointTable {
    pub covariate_names: Vec<String>,
    pub records: Vec<Record>,
}

impl PointTable {
    pub fn new(covariate_names: Vec<String>, records: Vec<Record>) -> Result<Self> {
        let table = PointTable {
            covariate_names,
            records,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.covariate_names.len();
        for (i, r) in self.records.iter().enumerate() {
            if r.covariates.len() != p {
                return Err(EngineError::usage(format!(
                    "record {i} has {} covariates, table declares {p}",
                    r.covariates.len()
                )));
            }
            if !r.lon.is_finite() || !r.lat.is_finite() {
                return Err(EngineError::usage(format!("record {i} has non-finite coordinates")));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn targets(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.target).collect()
    }

    /// Copy with targets replaced by `values`.
    pub fn with_targets(&self, values: &[f64]) -> Result<PointTable> {
        if values.len() != self.len() {
            return Err(EngineError::usage("target count does not match record count"));
        }
        let records = self
            .records
            .iter()
            .zip(values)
            .map(|(r, v)| Record {
                target: Some(*v),
                ..r.clone()
            })
            .collect();
        Ok(PointTable {
            covariate_names: self.covariate_names.clone(),
            records,
        })
    }
}

/// One record per data cell, located at the cell centroid.
pub fn grid_to_points(grid: &Grid) -> PointTable {
    let records = grid
        .data_cells()
        .map(|(r, c, v)| {
            let (lon, lat) = grid.centroid(r, c);
            Record {
                lon,
                lat,
                target: Some(v),
                covariates: Vec::new(),
            }
        })
        .collect();
    PointTable {
        covariate_names: Vec::new(),
        records,
    }
}

/// Target-less records at every cell centroid of `header`.
pub fn header_to_points(header: &GridHeader) -> PointTable {
    let mut records = Vec::with_capacity(header.len());
    for r in 0..header.nrows {
        for c in 0..header.ncols {
            let (lon, lat) = header.centroid(r, c);
            records.push(Record {
                lon,
                lat,
                target: None,
                covariates: Vec::new(),
            });
        }
    }
    PointTable {
        covariate_names: Vec::new(),
        records,
    }
}

/// Append one covariate per layer by nearest-cell lookup. Records outside the
/// layers or on a no-data cell in any layer are dropped; the drop count is
/// returned alongside the table.
pub fn sample_covariates(
    points: &PointTable,
    layers: &[Grid],
    layer_names: &[String],
) -> Result<(PointTable, usize)> {
    if layers.len() != layer_names.len() {
        return Err(EngineError::usage("one name is required per covariate layer"));
    }
    if let Some(first) = layers.first() {
        if let Some(bad) = layers.iter().position(|g| g.header != first.header) {
            return Err(EngineError::usage(format!(
                "covariate layer `{}` header differs from `{}`",
                layer_names[bad], layer_names[0]
            )));
        }
    }
    let mut names = points.covariate_names.clone();
    names.extend(layer_names.iter().cloned());
    let Some(first) = layers.first() else {
        return Ok((points.clone(), 0));
    };

    let mut dropped = 0usize;
    let mut records = Vec::with_capacity(points.len());
    'records: for rec in &points.records {
        let Some((row, col)) = first.cell_index(rec.lon, rec.lat) else {
            dropped += 1;
            continue;
        };
        let mut covariates = rec.covariates.clone();
        for layer in layers {
            match layer.value(row, col) {
                Some(v) => covariates.push(v),
                None => {
                    dropped += 1;
                    continue 'records;
                }
            }
        }
        records.push(Record {
            covariates,
            ..rec.clone()
        });
    }
    Ok((
        PointTable {
            covariate_names: names,
            records,
        },
        dropped,
    ))
}

// ---------------------------------------------------------------------------
// Point table CSV

/// Write `lon,lat[,target][,cov...]`. The target column is present when any
/// record has a target.
pub fn format_points_csv(table: &PointTable) -> String {
    let has_target = table.records.iter().any(|r| r.target.is_some());
    let mut out = String::from("lon,lat");
    if has_target {
        out.push_str(",target");
    }
    for name in &table.covariate_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for r in &table.records {
        let _ = write!(out, "{},{}", r.lon, r.lat);
        if has_target {
            out.push(',');
            if let Some(t) = r.target {
                let _ = write!(out, "{t}");
            }
        }
        for v in &r.covariates {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_points_csv(table: &PointTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_points_csv(table)).map_err(|e| EngineError::io(path, e))
}

pub fn read_points_csv(path: impl AsRef<Path>) -> Result<PointTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| EngineError::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| EngineError::parse(path, 1, "empty point table"))?;
    let cols: Vec<&str> = header.trim_start_matches('\u{feff}').split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "lon" || cols[1] != "lat" {
        return Err(EngineError::parse(path, 1, "header must start with `lon,lat`"));
    }
    let has_target = cols.get(2) == Some(&"target");
    let cov_start = if has_target { 3 } else { 2 };
    let names: Vec<String> = cols[cov_start..].iter().map(|s| s.to_string()).collect();

    let mut records = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(EngineError::parse(
                path,
                lineno,
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| EngineError::parse(path, lineno, format!("non-numeric field `{s}`")))
        };
        let lon = num(fields[0])?;
        let lat = num(fields[1])?;
        if !lon.is_finite() || !lat.is_finite() {
            return Err(EngineError::parse(path, lineno, "non-finite coordinate"));
        }
        let target = if has_target && !fields[2].is_empty() {
            Some(num(fields[2])?)
        } else {
            None
        };
        let covariates = fields[cov_start..]
            .iter()
            .map(|s| num(s))
            .collect::<Result<Vec<_>>>()?;
        records.push(Record {
            lon,
            lat,
            target,
            covariates,
        });
    }
    Ok(PointTable {
        covariate_names: names,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> Grid {
        let h = GridHeader::new(2, 2, -80.0, 35.0, 0.25).unwrap();
        Grid::new(h, -9999.0, vec![0.1, 0.2, 0.3, 0.4]).unwrap()
    }

    fn parse(text: &str) -> Result<Grid> {
        parse_ascii_grid(text, Path::new("test.asc"))
    }

    #[test]
    fn reads_two_by_two() {
        let g = parse(
            "ncols 2\nnrows 2\nxllcorner -80\nyllcorner 35\ncellsize 0.25\nNODATA_value -9999\n0.1 0.2\n0.3 0.4\n",
        )
        .unwrap();
        assert_eq!(g, small());
        assert_eq!(g.centroid(0, 0), (-80.0 + 0.125, 35.0 + 0.375));
    }

    #[test]
    fn header_keys_are_case_insensitive() {
        let g = parse("NCOLS 1\nNROWS 1\nXLLCORNER 0\nYLLCORNER 0\nCELLSIZE 1\nnodata_value -1\n-1\n")
            .unwrap();
        assert_eq!(g.value(0, 0), None);
    }

    #[test]
    fn nodata_cell_is_preserved() {
        let g = parse("ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n0.5 -9999\n")
            .unwrap();
        assert_eq!(g.value(0, 0), Some(0.5));
        assert_eq!(g.value(0, 1), None);
        assert_eq!(g.data_count(), 1);
    }

    #[test]
    fn short_row_names_line() {
        let err = parse("ncols 3\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2\n")
            .unwrap_err();
        match err {
            EngineError::Parse { line, .. } => assert_eq!(line, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_token_and_missing_rows() {
        assert!(parse("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\nabc\n").is_err());
        assert!(parse("ncols 1\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1\n").is_err());
        assert!(parse("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n1\n").is_err());
        assert!(parse("ncols 0\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n").is_err());
    }

    #[test]
    fn center_registration_is_converted() {
        let g = parse("ncols 1\nnrows 1\nxllcenter 0.5\nyllcenter 0.5\ncellsize 1\nNODATA_value -9999\n3\n").unwrap();
        assert_eq!((g.header.xll, g.header.yll), (0.0, 0.0));
    }

    #[test]
    fn single_cell_body() {
        let h = GridHeader::new(1, 1, 0.0, 0.0, 1.0).unwrap();
        let g = Grid::new(h, -9999.0, vec![0.5]).unwrap();
        let text = format_ascii_grid(&g);
        assert_eq!(text.lines().last(), Some("0.5"));
        assert_eq!(parse(&text).unwrap(), g);
    }

    #[test]
    fn all_nodata_round_trips() {
        let h = GridHeader::new(3, 2, 1.0, 2.0, 0.5).unwrap();
        let g = Grid::empty(h, -9999.0);
        let text = format_ascii_grid(&g);
        assert!(text.lines().skip(6).all(|l| l == "-9999 -9999 -9999"));
        assert_eq!(parse(&text).unwrap(), g);
    }

    #[test]
    fn cell_index_conventions() {
        let g = small();
        for r in 0..2 {
            for c in 0..2 {
                let (x, y) = g.centroid(r, c);
                assert_eq!(g.cell_index(x, y), Some((r, c)));
                // lower-left corner of the cell
                let x0 = g.header.xll + c as f64 * 0.25;
                let y0 = g.header.yll + (1 - r) as f64 * 0.25;
                assert_eq!(g.cell_index(x0, y0), Some((r, c)));
            }
        }
        assert_eq!(g.cell_index(-80.01, 35.1), None);
        assert_eq!(g.cell_index(-79.5, 35.1), None);
        assert_eq!(g.cell_index(-79.9, 35.5), None);
        assert_eq!(g.cell_index(-79.9, 34.99), None);
    }

    #[test]
    fn monthly_mean_rules() {
        let h = GridHeader::new(3, 1, 0.0, 0.0, 1.0).unwrap();
        let a = Grid::new(h, -9999.0, vec![0.2, 0.2, -9999.0]).unwrap();
        let b = Grid::new(h, -9999.0, vec![0.4, -9999.0, -9999.0]).unwrap();
        let m = monthly_mean(&[a.clone(), b.clone()], 1).unwrap();
        assert!((m.get(0, 0) - 0.3).abs() < 1e-15);
        assert_eq!(m.value(0, 1), Some(0.2));
        assert_eq!(m.value(0, 2), None);
        let strict = monthly_mean(&[a, b], 2).unwrap();
        assert_eq!(strict.value(0, 1), None);
    }

    #[test]
    fn monthly_mean_errors() {
        assert!(monthly_mean(&[], 1).is_err());
        let a = Grid::empty(GridHeader::new(1, 1, 0.0, 0.0, 1.0).unwrap(), -1.0);
        let b = Grid::empty(GridHeader::new(1, 1, 0.0, 0.0, 2.0).unwrap(), -1.0);
        assert!(monthly_mean(&[a, b], 1).is_err());
    }

    #[test]
    fn grid_to_points_counts() {
        let mut g = small();
        g.set(1, 0, -9999.0);
        let pts = grid_to_points(&g);
        assert_eq!(pts.len(), 3);
        for rec in &pts.records {
            let (r, c) = g.cell_index(rec.lon, rec.lat).unwrap();
            assert_eq!(g.centroid(r, c), (rec.lon, rec.lat));
            assert_eq!(rec.target, g.value(r, c));
        }
        assert!(grid_to_points(&Grid::empty(g.header, -9999.0)).is_empty());
    }

    #[test]
    fn sampling_covariates() {
        let h = GridHeader::new(2, 1, 0.0, 0.0, 1.0).unwrap();
        let layer = Grid::new(h, -9999.0, vec![7.5, -9999.0]).unwrap();
        let pts = PointTable::new(
            vec![],
            vec![
                Record { lon: 0.5, lat: 0.5, target: Some(0.1), covariates: vec![] },
                Record { lon: 1.5, lat: 0.5, target: Some(0.2), covariates: vec![] },
                Record { lon: 5.0, lat: 0.5, target: Some(0.3), covariates: vec![] },
            ],
        )
        .unwrap();
        let (out, dropped) = sample_covariates(&pts, &[layer], &["elev".into()]).unwrap();
        assert_eq!(dropped, 2);
        assert_eq!(out.records[0].covariates, vec![7.5]);
        assert_eq!(out.covariate_names, vec!["elev".to_string()]);
    }

    #[test]
    fn sampling_fifteen_layers() {
        let h = GridHeader::new(4, 4, 0.0, 0.0, 1.0).unwrap();
        let layers: Vec<Grid> = (0..15)
            .map(|k| Grid::from_fn(h, -9999.0, |r, c| (k * 100 + r * 4 + c) as f64))
            .collect();
        let names: Vec<String> = (0..15).map(|k| format!("t{k}")).collect();
        let pts = header_to_points(&h);
        let (out, dropped) = sample_covariates(&pts, &layers, &names).unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(out.width(), 15);
        let (again, _) = sample_covariates(&pts, &layers, &names).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn sampling_rejects_mismatched_layers() {
        let a = Grid::empty(GridHeader::new(1, 1, 0.0, 0.0, 1.0).unwrap(), -1.0);
        let b = Grid::empty(GridHeader::new(2, 1, 0.0, 0.0, 1.0).unwrap(), -1.0);
        let pts = header_to_points(&a.header);
        assert!(sample_covariates(&pts, &[a, b], &["a".into(), "b".into()]).is_err());
    }

    #[test]
    fn points_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.csv");
        let table = PointTable::new(
            vec!["slope".into()],
            vec![
                Record { lon: -80.125, lat: 35.5, target: Some(0.25), covariates: vec![1.5] },
                Record { lon: -80.0, lat: 35.25, target: None, covariates: vec![-2.0] },
            ],
        )
        .unwrap();
        write_points_csv(&table, &path).unwrap();
        assert!(fs::read_to_string(&path).unwrap().starts_with("lon,lat,target,slope\n"));
        assert_eq!(read_points_csv(&path).unwrap(), table);
    }

    #[test]
    fn shifted_mean_is_exact_for_constants() {
        let v = 0.1 + 0.2;
        assert_eq!(shifted_mean(std::iter::repeat_n(v, 729)), Some(v));
        assert_eq!(shifted_mean(std::iter::empty()), None);
    }

    fn arb_grid() -> impl Strategy<Value = Grid> {
        (1usize..12, 1usize..12, -180.0f64..170.0, -80.0f64..70.0, 1e-4f64..2.0)
            .prop_flat_map(|(nc, nr, x, y, cs)| {
                let h = GridHeader::new(nc, nr, x, y, cs).unwrap();
                prop::collection::vec(
                    prop_oneof![3 => -1e6f64..1e6, 1 => Just(-9999.0)],
                    nc * nr,
                )
                .prop_map(move |vals| Grid::new(h, -9999.0, vals).unwrap())
            })
    }

    proptest! {
        #[test]
        fn ascii_round_trip(g in arb_grid()) {
            prop_assert_eq!(parse(&format_ascii_grid(&g)).unwrap(), g);
        }

        #[test]
        fn centroid_maps_to_own_cell(g in arb_grid()) {
            for r in 0..g.nrows() {
                for c in 0..g.ncols() {
                    let (x, y) = g.centroid(r, c);
                    prop_assert_eq!(g.cell_index(x, y), Some((r, c)));
                }
            }
        }

        #[test]
        fn monthly_mean_is_order_invariant(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let h = GridHeader::new(3, 3, 0.0, 0.0, 1.0).unwrap();
            let days: Vec<Grid> = (0..5)
                .map(|_| Grid::from_fn(h, -9999.0, |_, _| {
                    if rng.random_bool(0.3) { -9999.0 } else { rng.random::<f64>() }
                }))
                .collect();
            let mut rev = days.clone();
            rev.reverse();
            prop_assert_eq!(monthly_mean(&days, 1).unwrap(), monthly_mean(&rev, 1).unwrap());
        }
    }
}
