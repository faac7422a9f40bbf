//! Harmonization of fine predictions to the coarse grid, residual maps and
//! agreement metrics.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{EngineError, Result};
use crate::grid::{shifted_mean, Grid, PointTable};

/// Squared Pearson correlation and RMSE between paired samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agreement {
    /// `None` with fewer than two pairs.
    pub r2: Option<f64>,
    /// `None` with no pairs.
    pub rmse: Option<f64>,
    pub n: usize,
    /// One side had zero variance; `r2` is reported as 0.
    pub degenerate: bool,
}

pub fn agreement(predicted: &[f64], observed: &[f64]) -> Agreement {
    let n = predicted.len().min(observed.len());
    let rmse = (n > 0).then(|| {
        let sse: f64 = predicted
            .iter()
            .zip(observed)
            .map(|(p, o)| (p - o) * (p - o))
            .sum();
        (sse / n as f64).sqrt()
    });
    if n < 2 {
        return Agreement {
            r2: None,
            rmse,
            n,
            degenerate: false,
        };
    }
    // exact for constant input, so zero variance is detected exactly
    let mp = shifted_mean(predicted[..n].iter().copied()).unwrap_or(0.0);
    let mo = shifted_mean(observed[..n].iter().copied()).unwrap_or(0.0);
    let (mut spp, mut soo, mut spo) = (0.0, 0.0, 0.0);
    for (p, o) in predicted.iter().zip(observed) {
        let (dp, dox) = (p - mp, o - mo);
        spp += dp * dp;
        soo += dox * dox;
        spo += dp * dox;
    }
    if spp == 0.0 || soo == 0.0 {
        return Agreement {
            r2: Some(0.0),
            rmse,
            n,
            degenerate: true,
        };
    }
    Agreement {
        r2: Some((spo * spo / (spp * soo)).min(1.0)),
        rmse,
        n,
        degenerate: false,
    }
}

/// Mean of the fine predictions (record targets) falling in each coarse
/// cell. Cells with no fine point are no-data; records without a target or
/// outside the grid are ignored.
pub fn aggregate_fine_to_coarse(fine: &PointTable, coarse: &Grid) -> Grid {
    let header = coarse.header;
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for rec in &fine.records {
        let Some(v) = rec.target else { continue };
        if let Some((r, c)) = header.cell_index(rec.lon, rec.lat) {
            buckets[r * header.ncols + c].push(v);
        }
    }
    Grid::from_fn(header, coarse.nodata, |r, c| {
        let cell = &mut buckets[r * header.ncols + c];
        // order-independent result
        cell.sort_by(f64::total_cmp);
        shifted_mean(cell.iter().copied()).unwrap_or(coarse.nodata)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub aggregated: Grid,
    pub observed: Grid,
    /// aggregated - observed
    pub residual: Grid,
    /// (aggregated - observed) / observed; no-data where observed is 0.
    pub relative_residual: Grid,
    pub r2: Option<f64>,
    pub rmse: Option<f64>,
    pub n_cells: usize,
    pub degenerate: bool,
}

impl ResidualReport {
    /// `r2=<v> rmse=<v> n=<v>`, with `NA` for undefined values.
    pub fn metrics_line(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        format!("r2={} rmse={} n={}", fmt(self.r2), fmt(self.rmse), self.n_cells)
    }
}

fn paired_cells<'a>(a: &'a Grid, b: &'a Grid) -> impl Iterator<Item = (usize, usize, f64, f64)> + 'a {
    let ncols = a.ncols();
    (0..a.header.len()).filter_map(move |i| {
        let (r, c) = (i / ncols, i % ncols);
        Some((r, c, a.value(r, c)?, b.value(r, c)?))
    })
}

fn check_headers(a: &Grid, b: &Grid) -> Result<()> {
    if a.header != b.header {
        return Err(EngineError::usage("aggregated and observed grids have different headers"));
    }
    Ok(())
}

pub fn residual_report(aggregated: &Grid, observed: &Grid) -> Result<ResidualReport> {
    check_headers(aggregated, observed)?;
    let nodata = observed.nodata;
    let mut residual = Grid::empty(observed.header, nodata);
    let mut relative = Grid::empty(observed.header, nodata);
    let mut pred = Vec::new();
    let mut obs = Vec::new();
    for (r, c, a, o) in paired_cells(aggregated, observed) {
        let d = a - o;
        residual.set(r, c, d);
        if o != 0.0 {
            relative.set(r, c, d / o);
        }
        pred.push(a);
        obs.push(o);
    }
    let m = agreement(&pred, &obs);
    Ok(ResidualReport {
        aggregated: aggregated.clone(),
        observed: observed.clone(),
        residual,
        relative_residual: relative,
        r2: m.r2,
        rmse: m.rmse,
        n_cells: m.n,
        degenerate: m.degenerate,
    })
}

pub fn format_scatter_csv(aggregated: &Grid, observed: &Grid) -> Result<String> {
    check_headers(aggregated, observed)?;
    let mut out = String::from("lon,lat,observed,predicted\n");
    for (r, c, a, o) in paired_cells(aggregated, observed) {
        let (lon, lat) = observed.centroid(r, c);
        let _ = writeln!(out, "{lon},{lat},{o},{a}");
    }
    Ok(out)
}

/// One row per paired data cell: `lon,lat,observed,predicted`.
pub fn scatter_export(aggregated: &Grid, observed: &Grid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = format_scatter_csv(aggregated, observed)?;
    fs::write(path, text).map_err(|e| EngineError::io(path, e))
}
