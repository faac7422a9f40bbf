//! Seeded synthetic scenarios with a known fine-scale truth, for testing the
//! whole workflow without real data.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::analysis::{aggregate_fine_to_coarse, agreement, residual_report, Agreement, ResidualReport};
use crate::error::{EngineError, Result};
use crate::grid::{shifted_mean, write_ascii_grid, Grid, GridHeader, PointTable, DEFAULT_NODATA};
use crate::pipeline::{FineSpec, Method, PipelineConfig};
use crate::region::{write_region, Region};

pub const COARSE_CELLSIZE: f64 = 0.25;
pub const ORIGIN: (f64, f64) = (-80.0, 35.0);
/// Truth values are scaled into this band.
pub const TRUTH_RANGE: (f64, f64) = (0.05, 0.45);

// independent random streams, so e.g. changing the gap fraction leaves the
// truth field untouched
const STREAM_TRUTH: u64 = 0;
const STREAM_COVARIATES: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_GAPS: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub seed: u64,
    /// Fine grid (rows, cols); both divisible by `coarse_factor`.
    pub fine_shape: (usize, usize),
    pub coarse_factor: usize,
    pub n_covariates: usize,
    /// Stdev of the noise added to coarse observations.
    pub noise_stdev: f64,
    /// Fraction of coarse cells masked as gaps, in [0, 1).
    pub gap_fraction: f64,
    /// Covariate noise as a fraction of each layer's own stdev.
    pub covariate_noise: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            seed: 0,
            fine_shape: (128, 128),
            coarse_factor: 8,
            n_covariates: 15,
            noise_stdev: 0.01,
            gap_fraction: 0.2,
            covariate_noise: 0.1,
        }
    }
}

impl ScenarioParams {
    fn validate(&self) -> Result<()> {
        let (rows, cols) = self.fine_shape;
        if self.coarse_factor < 2 {
            return Err(EngineError::usage("coarse_factor must be at least 2"));
        }
        if rows == 0 || cols == 0 || rows % self.coarse_factor != 0 || cols % self.coarse_factor != 0 {
            return Err(EngineError::usage(format!(
                "fine shape {rows}x{cols} is not a positive multiple of coarse_factor {}",
                self.coarse_factor
            )));
        }
        if !(self.noise_stdev >= 0.0 && self.noise_stdev.is_finite()) {
            return Err(EngineError::usage("noise_stdev must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.gap_fraction) {
            return Err(EngineError::usage("gap_fraction must lie in [0, 1)"));
        }
        if !(self.covariate_noise >= 0.0 && self.covariate_noise.is_finite()) {
            return Err(EngineError::usage("covariate_noise must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: ScenarioParams,
    pub truth: Grid,
    pub covariate_layers: Vec<Grid>,
    pub covariate_names: Vec<String>,
    pub observed: Grid,
    /// Central rectangle covering 30-70% of the extent on each axis.
    pub region: Region,
    pub seed: u64,
}

impl Scenario {
    pub fn fine_header(&self) -> GridHeader {
        self.truth.header
    }

    pub fn coarse_header(&self) -> GridHeader {
        self.observed.header
    }

    /// Rectangle over the full grid extent.
    pub fn super_region(&self) -> Region {
        let (xmin, ymin, xmax, ymax) = self.truth.header.extent();
        Region::rectangle("extent", xmin, ymin, xmax, ymax).expect("extent is a valid rectangle")
    }

    pub fn gap_count(&self) -> usize {
        self.observed.header.len() - self.observed.data_count()
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

struct Bump {
    center: (f64, f64),
    sigma: f64,
    amplitude: f64,
}

/// Gaussian bumps plus a linear trend over unit coordinates, scaled into
/// [`TRUTH_RANGE`].
fn truth_field(header: GridHeader, seed: u64) -> Grid {
    let mut r = rng(seed, STREAM_TRUTH);
    let bumps: Vec<Bump> = (0..r.random_range(6..=10))
        .map(|_| Bump {
            center: (r.random_range(0.0..1.0), r.random_range(0.0..1.0)),
            sigma: r.random_range(0.08..0.25),
            amplitude: r.random_range(0.5..1.5) * if r.random_bool(0.5) { 1.0 } else { -1.0 },
        })
        .collect();
    let trend = (r.random_range(-0.5..0.5), r.random_range(-0.5..0.5));
    let raw = Grid::from_fn(header, DEFAULT_NODATA, |row, col| {
        let u = (col as f64 + 0.5) / header.ncols as f64;
        let v = 1.0 - (row as f64 + 0.5) / header.nrows as f64;
        let bumps: f64 = bumps
            .iter()
            .map(|b| {
                let d2 = (u - b.center.0).powi(2) + (v - b.center.1).powi(2);
                b.amplitude * (-d2 / (2.0 * b.sigma * b.sigma)).exp()
            })
            .sum();
        bumps + trend.0 * u + trend.1 * v
    });
    let (lo, hi) = raw
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (a, b) = TRUTH_RANGE;
    Grid::from_fn(header, DEFAULT_NODATA, |row, col| {
        let v = raw.get(row, col);
        if hi > lo {
            (a + (b - a) * (v - lo) / (hi - lo)).clamp(a, b)
        } else {
            0.5 * (a + b)
        }
    })
}

/// Monotone transforms of the unit-scaled truth `t` in [0, 1].
fn transform(i: usize, t: f64) -> f64 {
    match i % 8 {
        0 => t,
        1 => t * t,
        2 => t.sqrt(),
        3 => (1.0 + 4.0 * t).ln(),
        4 => (2.0 * t).exp(),
        5 => -t * t * t,
        6 => 1.0 / (1.0 + t),
        _ => 100.0 * t + 250.0,
    }
}

fn stdev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn covariate_layers(truth: &Grid, params: &ScenarioParams) -> Vec<Grid> {
    let mut r = rng(params.seed, STREAM_COVARIATES);
    let (a, b) = TRUTH_RANGE;
    (0..params.n_covariates)
        .map(|i| {
            let clean: Vec<f64> = truth
                .values()
                .iter()
                .map(|&v| transform(i, ((v - a) / (b - a)).clamp(0.0, 1.0)))
                .collect();
            let sd = params.covariate_noise * stdev(&clean);
            let noise = Normal::new(0.0, sd.max(0.0)).expect("finite stdev");
            let values = clean
                .into_iter()
                .map(|v| if sd > 0.0 { v + noise.sample(&mut r) } else { v })
                .collect();
            Grid::new(truth.header, DEFAULT_NODATA, values).expect("same header")
        })
        .collect()
}

/// Exact count of gap cells grown as random-walk blobs.
fn gap_mask(rows: usize, cols: usize, fraction: f64, seed: u64) -> Vec<bool> {
    let n = rows * cols;
    let target = ((fraction * n as f64).round() as usize).min(n.saturating_sub(1));
    let mut mask = vec![false; n];
    let mut r = rng(seed, STREAM_GAPS);
    let blob_len = (target / 4).max(1);
    let mut count = 0;
    while count < target {
        let free: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
        let mut cell = free[r.random_range(0..free.len())];
        for _ in 0..blob_len * 4 {
            if !mask[cell] {
                mask[cell] = true;
                count += 1;
                if count == target || count % blob_len == 0 {
                    break;
                }
            }
            let (row, col) = (cell / cols, cell % cols);
            let (row, col) = match r.random_range(0..4) {
                0 => (row.saturating_sub(1), col),
                1 => ((row + 1).min(rows - 1), col),
                2 => (row, col.saturating_sub(1)),
                _ => (row, (col + 1).min(cols - 1)),
            };
            cell = row * cols + col;
        }
    }
    mask
}

/// Block mean of the fine cells under coarse cell `(row, col)`.
fn block_mean(truth: &Grid, factor: usize, row: usize, col: usize) -> f64 {
    let cells = (0..factor).flat_map(|dr| (0..factor).map(move |dc| (row * factor + dr, col * factor + dc)));
    shifted_mean(cells.map(|(r, c)| truth.get(r, c))).expect("non-empty block")
}

pub fn make_scenario(params: &ScenarioParams) -> Result<Scenario> {
    params.validate()?;
    let (rows, cols) = params.fine_shape;
    let f = params.coarse_factor;
    let coarse = GridHeader::new(cols / f, rows / f, ORIGIN.0, ORIGIN.1, COARSE_CELLSIZE)?;
    let fine = coarse.refine(f)?;

    let truth = truth_field(fine, params.seed);
    let covariate_layers = covariate_layers(&truth, params);
    let covariate_names = (1..=params.n_covariates).map(|i| format!("cov_{i:02}")).collect();

    let mask = gap_mask(coarse.nrows, coarse.ncols, params.gap_fraction, params.seed);
    let mut noise_rng = rng(params.seed, STREAM_NOISE);
    let noise = Normal::new(0.0, params.noise_stdev).expect("validated stdev");
    let observed = Grid::from_fn(coarse, DEFAULT_NODATA, |r, c| {
        let mean = block_mean(&truth, f, r, c);
        // draw for every cell so the noise field does not depend on the mask
        let eps = if params.noise_stdev > 0.0 { noise.sample(&mut noise_rng) } else { 0.0 };
        if mask[r * coarse.ncols + c] {
            DEFAULT_NODATA
        } else {
            (mean + eps).clamp(0.0, 1.0)
        }
    });

    let (xmin, ymin, xmax, ymax) = coarse.extent();
    let (w, h) = (xmax - xmin, ymax - ymin);
    let region = Region::rectangle(
        "central",
        xmin + 0.3 * w,
        ymin + 0.3 * h,
        xmin + 0.7 * w,
        ymin + 0.7 * h,
    )?;

    Ok(Scenario {
        params: params.clone(),
        truth,
        covariate_layers,
        covariate_names,
        observed,
        region,
        seed: params.seed,
    })
}

#[derive(Debug, Clone)]
pub struct HoldoutMetrics {
    /// Agreement of fine predictions with the truth grid.
    pub truth: Agreement,
    /// Aggregated predictions against the coarse observations.
    pub report: ResidualReport,
    /// Fraction of truth cells that received a prediction.
    pub coverage: f64,
}

/// Compare fine predictions (record targets) with the scenario truth and,
/// after aggregation, with the observed coarse grid.
pub fn holdout_eval(scenario: &Scenario, predictions: &PointTable) -> Result<HoldoutMetrics> {
    let truth = &scenario.truth;
    let mut seen = vec![false; truth.header.len()];
    let mut pred = Vec::new();
    let mut obs = Vec::new();
    for rec in &predictions.records {
        let Some(p) = rec.target else { continue };
        let Some((r, c)) = truth.cell_index(rec.lon, rec.lat) else { continue };
        let i = r * truth.ncols() + c;
        if seen[i] {
            continue;
        }
        if let Some(t) = truth.value(r, c) {
            seen[i] = true;
            pred.push(p);
            obs.push(t);
        }
    }
    let coverage = pred.len() as f64 / truth.data_count().max(1) as f64;
    if coverage < 0.99 {
        return Err(EngineError::usage(format!(
            "predictions cover {:.1}% of truth cells, at least 99% required",
            100.0 * coverage
        )));
    }
    let aggregated = aggregate_fine_to_coarse(predictions, &scenario.observed);
    Ok(HoldoutMetrics {
        truth: agreement(&pred, &obs),
        report: residual_report(&aggregated, &scenario.observed)?,
        coverage,
    })
}

/// Write the scenario as files: `truth.asc`, `observed.asc`, one
/// `cov_XX.asc` per layer, `region.geojson`, `super_region.geojson`, and a
/// runnable `config.json` that refines the coarse grid back to the fine one.
pub fn write_scenario(scenario: &Scenario, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| EngineError::io(dir, e))?;
    write_ascii_grid(&scenario.truth, dir.join("truth.asc"))?;
    write_ascii_grid(&scenario.observed, dir.join("observed.asc"))?;
    for (layer, name) in scenario.covariate_layers.iter().zip(&scenario.covariate_names) {
        write_ascii_grid(layer, dir.join(format!("{name}.asc")))?;
    }
    write_region(&scenario.region, dir.join("region.geojson"))?;
    write_region(&scenario.super_region(), dir.join("super_region.geojson"))?;

    let mut cfg = PipelineConfig::new("observed.asc", "out", Method::Knn);
    cfg.covariates = scenario
        .covariate_names
        .iter()
        .map(|n| format!("{n}.asc").into())
        .collect();
    cfg.region = Some("region.geojson".into());
    cfg.fine = FineSpec::Refine(scenario.params.coarse_factor);
    cfg.seed = scenario.seed;
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_json() + "\n").map_err(|e| EngineError::io(&path, e))
}
