//! Python bindings. Grids and regions are wrapped as classes; tables are
//! passed as plain lists and results come back as lists and dicts.

use std::path::PathBuf;

use moisture_core::analysis;
use moisture_core::covariates::{pca_fit_with, Retention};
use moisture_core::grid::{self, GridHeader, PointTable, Record};
use moisture_core::models::{
    fit_model, FeatureMode, HyppoConfig, KnnConfig, MethodConfig, Mtry, RfConfig, Weighting,
};
use moisture_core::pipeline;
use moisture_core::region;
use moisture_core::render::{render_heatmap, Palette};
use moisture_core::synth::{self, ScenarioParams};
use moisture_core::EngineError;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: EngineError) -> PyErr {
    match e {
        EngineError::Io { .. } => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

/// A georeferenced raster (ESRI ASCII grid conventions).
#[pyclass(name = "Grid", module = "moisture_engine", skip_from_py_object)]
#[derive(Clone)]
struct PyGrid {
    inner: grid::Grid,
}

#[pymethods]
impl PyGrid {
    /// Build from a row-major value list, north row first.
    #[new]
    #[pyo3(signature = (ncols, nrows, xllcorner, yllcorner, cellsize, values, nodata = grid::DEFAULT_NODATA))]
    fn new(
        ncols: usize,
        nrows: usize,
        xllcorner: f64,
        yllcorner: f64,
        cellsize: f64,
        values: Vec<f64>,
        nodata: f64,
    ) -> PyResult<Self> {
        let header = GridHeader::new(ncols, nrows, xllcorner, yllcorner, cellsize).map_err(py_err)?;
        let inner = grid::Grid::new(header, nodata, values).map_err(py_err)?;
        Ok(PyGrid { inner })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyGrid { inner: grid::read_ascii_grid(path).map_err(py_err)? })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        grid::write_ascii_grid(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn ncols(&self) -> usize {
        self.inner.ncols()
    }

    #[getter]
    fn nrows(&self) -> usize {
        self.inner.nrows()
    }

    #[getter]
    fn nodata(&self) -> f64 {
        self.inner.nodata
    }

    /// `(ncols, nrows, xllcorner, yllcorner, cellsize)`
    #[getter]
    fn header(&self) -> (usize, usize, f64, f64, f64) {
        let h = self.inner.header;
        (h.ncols, h.nrows, h.xll, h.yll, h.cellsize)
    }

    /// Row-major values, no-data cells included as the sentinel.
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    /// Cell value, or None for no-data.
    fn value(&self, row: usize, col: usize) -> PyResult<Option<f64>> {
        if row >= self.inner.nrows() || col >= self.inner.ncols() {
            return Err(PyValueError::new_err(format!("cell ({row}, {col}) is outside the grid")));
        }
        Ok(self.inner.value(row, col))
    }

    fn centroid(&self, row: usize, col: usize) -> (f64, f64) {
        self.inner.centroid(row, col)
    }

    fn cell_index(&self, lon: f64, lat: f64) -> Option<(usize, usize)> {
        self.inner.cell_index(lon, lat)
    }

    fn data_count(&self) -> usize {
        self.inner.data_count()
    }

    fn __eq__(&self, other: &PyGrid) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        let h = self.inner.header;
        format!(
            "Grid(ncols={}, nrows={}, xllcorner={}, yllcorner={}, cellsize={})",
            h.ncols, h.nrows, h.xll, h.yll, h.cellsize
        )
    }
}

/// A polygon with optional holes, lon/lat degrees.
#[pyclass(name = "Region", module = "moisture_engine", skip_from_py_object)]
#[derive(Clone)]
struct PyRegion {
    inner: region::Region,
}

#[pymethods]
impl PyRegion {
    #[new]
    fn new(name: String, rings: Vec<Vec<(f64, f64)>>) -> PyResult<Self> {
        Ok(PyRegion { inner: region::Region::new(name, rings).map_err(py_err)? })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyRegion { inner: region::read_region(path).map_err(py_err)? })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        region::write_region(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    fn rings(&self) -> Vec<Vec<(f64, f64)>> {
        self.inner.rings().to_vec()
    }

    fn contains(&self, lon: f64, lat: f64) -> bool {
        self.inner.contains(lon, lat)
    }

    /// Inside, or within `buffer_km` of the boundary.
    #[pyo3(signature = (lon, lat, buffer_km = 0.0))]
    fn within(&self, lon: f64, lat: f64, buffer_km: f64) -> PyResult<bool> {
        let buffer = region::BufferSpec::new(buffer_km).map_err(py_err)?;
        Ok(self.inner.within_buffer(lon, lat, buffer))
    }
}

fn coord_table(points: &[(f64, f64, f64)]) -> PointTable {
    PointTable {
        covariate_names: Vec::new(),
        records: points
            .iter()
            .map(|&(lon, lat, z)| Record { lon, lat, target: Some(z), covariates: Vec::new() })
            .collect(),
    }
}

fn covariate_table(rows: Vec<Vec<f64>>, targets: Option<&[f64]>) -> PyResult<PointTable> {
    let width = rows.first().map_or(0, Vec::len);
    let names = (1..=width).map(|i| format!("x{i}")).collect();
    let records = rows
        .into_iter()
        .enumerate()
        .map(|(i, covariates)| Record {
            lon: 0.0,
            lat: 0.0,
            target: targets.map(|t| t[i]),
            covariates,
        })
        .collect();
    PointTable::new(names, records).map_err(py_err)
}

fn predict_coords(method: MethodConfig, train: &[(f64, f64, f64)], queries: &[(f64, f64)]) -> PyResult<Vec<f64>> {
    let (model, _) = fit_model(&method, &coord_table(train), FeatureMode::Coords).map_err(py_err)?;
    let query = PointTable {
        covariate_names: Vec::new(),
        records: queries
            .iter()
            .map(|&(lon, lat)| Record { lon, lat, target: None, covariates: Vec::new() })
            .collect(),
    };
    model.predict_table(&query).map_err(py_err)
}

/// k-nearest-neighbour predictions from `(lon, lat, value)` training points
/// at `(lon, lat)` queries, in standardized coordinate space.
#[pyfunction]
#[pyo3(signature = (train, queries, k = 5, weighting = "uniform"))]
fn knn_predict(train: Vec<(f64, f64, f64)>, queries: Vec<(f64, f64)>, k: usize, weighting: &str) -> PyResult<Vec<f64>> {
    let weighting = match weighting {
        "uniform" => Weighting::Uniform,
        "inverse-distance" => Weighting::InverseDistance,
        other => return Err(PyValueError::new_err(format!("unknown weighting `{other}`"))),
    };
    predict_coords(MethodConfig::Knn(KnnConfig { k, weighting }), &train, &queries)
}

/// Local polynomial predictions with per-query degree selection.
#[pyfunction]
#[pyo3(signature = (train, queries, k = 10, max_degree = 3, clamp = None))]
fn hyppo_predict(
    train: Vec<(f64, f64, f64)>,
    queries: Vec<(f64, f64)>,
    k: usize,
    max_degree: usize,
    clamp: Option<(f64, f64)>,
) -> PyResult<Vec<f64>> {
    predict_coords(MethodConfig::Hyppo(HyppoConfig { k, max_degree, clamp }), &train, &queries)
}

/// Random forest on covariate rows. `mtry` is None (p/3), an int, or "tune".
/// Returns `{"predictions", "mtry", "oob_rmse"}`.
#[pyfunction]
#[pyo3(signature = (rows, targets, queries, ntree = 500, mtry = None, min_leaf = 5, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn rf_predict<'py>(
    py: Python<'py>,
    rows: Vec<Vec<f64>>,
    targets: Vec<f64>,
    queries: Vec<Vec<f64>>,
    ntree: usize,
    mtry: Option<Bound<'py, PyAny>>,
    min_leaf: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    if rows.len() != targets.len() {
        return Err(PyValueError::new_err("rows and targets differ in length"));
    }
    let mtry = match mtry {
        None => Mtry::Auto,
        Some(v) if v.extract::<String>().is_ok_and(|s| s == "tune") => Mtry::Tune,
        Some(v) => Mtry::Fixed(v.extract()?),
    };
    let cfg = RfConfig { ntree, mtry, min_leaf, seed, ..RfConfig::default() };
    let train = covariate_table(rows, Some(&targets))?;
    let query = covariate_table(queries, None)?;
    let (model, info) = fit_model(&MethodConfig::Rf(cfg), &train, FeatureMode::Covariates).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("predictions", model.predict_table(&query).map_err(py_err)?)?;
    out.set_item("mtry", info.mtry)?;
    out.set_item("oob_rmse", info.oob_rmse)?;
    Ok(out)
}

/// Correlation-matrix PCA. `retention` is "kaiser", "all" or an int.
#[pyfunction]
#[pyo3(signature = (rows, retention = None))]
fn pca<'py>(py: Python<'py>, rows: Vec<Vec<f64>>, retention: Option<Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyDict>> {
    let retention = match retention {
        None => Retention::Kaiser,
        Some(v) => match v.extract::<String>() {
            Ok(s) if s == "kaiser" => Retention::Kaiser,
            Ok(s) if s == "all" => Retention::All,
            Ok(s) => return Err(PyValueError::new_err(format!("unknown retention `{s}`"))),
            Err(_) => Retention::Fixed(v.extract()?),
        },
    };
    let model = pca_fit_with(&covariate_table(rows.clone(), None)?, retention).map_err(py_err)?;
    let scores: Vec<Vec<f64>> = rows.iter().map(|r| model.scores(r)).collect();
    let out = PyDict::new(py);
    out.set_item("eigenvalues", model.eigenvalues.clone())?;
    out.set_item("components", model.components.clone())?;
    out.set_item("retained", model.retained)?;
    out.set_item("scores", scores)?;
    Ok(out)
}

fn report_dict<'py>(py: Python<'py>, rep: analysis::ResidualReport) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("r2", rep.r2)?;
    out.set_item("rmse", rep.rmse)?;
    out.set_item("n", rep.n_cells)?;
    out.set_item("degenerate", rep.degenerate)?;
    out.set_item("metrics", rep.metrics_line())?;
    out.set_item("residual", PyGrid { inner: rep.residual })?;
    out.set_item("relative_residual", PyGrid { inner: rep.relative_residual })?;
    Ok(out)
}

/// Residual maps and agreement between two grids on the same header.
#[pyfunction]
fn residual_report<'py>(py: Python<'py>, aggregated: &PyGrid, observed: &PyGrid) -> PyResult<Bound<'py, PyDict>> {
    let rep = analysis::residual_report(&aggregated.inner, &observed.inner).map_err(py_err)?;
    report_dict(py, rep)
}

/// Synthetic scenario; written to `out` when given.
#[pyfunction]
#[pyo3(signature = (seed = 0, rows = 128, cols = 128, factor = 8, covariates = 15, noise = 0.01, gaps = 0.2, out = None))]
#[allow(clippy::too_many_arguments)]
fn make_scenario<'py>(
    py: Python<'py>,
    seed: u64,
    rows: usize,
    cols: usize,
    factor: usize,
    covariates: usize,
    noise: f64,
    gaps: f64,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let params = ScenarioParams {
        seed,
        fine_shape: (rows, cols),
        coarse_factor: factor,
        n_covariates: covariates,
        noise_stdev: noise,
        gap_fraction: gaps,
        ..ScenarioParams::default()
    };
    let scenario = synth::make_scenario(&params).map_err(py_err)?;
    if let Some(dir) = &out {
        synth::write_scenario(&scenario, dir).map_err(py_err)?;
    }
    let dict = PyDict::new(py);
    dict.set_item("gap_count", scenario.gap_count())?;
    dict.set_item("covariate_names", scenario.covariate_names.clone())?;
    dict.set_item("truth", PyGrid { inner: scenario.truth })?;
    dict.set_item("observed", PyGrid { inner: scenario.observed })?;
    dict.set_item("region", PyRegion { inner: scenario.region })?;
    Ok(dict)
}

/// Run a pipeline config file. Returns the report fields plus the
/// prediction grid and the manifest as JSON text.
#[pyfunction]
fn run_pipeline<'py>(py: Python<'py>, config: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let cfg = pipeline::load_config(&config).map_err(py_err)?;
    let run = pipeline::run_pipeline(&cfg).map_err(py_err)?;
    let out = report_dict(py, run.report)?;
    out.set_item("prediction", PyGrid { inner: run.prediction })?;
    out.set_item("training_size", run.training_size)?;
    out.set_item("manifest", run.manifest.to_string())?;
    Ok(out)
}

/// Write a PPM heatmap and its legend sidecar.
#[pyfunction]
#[pyo3(signature = (grid, path, palette = "sequential"))]
fn render(grid: &PyGrid, path: PathBuf, palette: &str) -> PyResult<()> {
    let palette: Palette = palette.parse().map_err(py_err)?;
    render_heatmap(&grid.inner, palette, path).map_err(py_err)
}

#[pymodule]
fn moisture_engine(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyRegion>()?;
    m.add_function(wrap_pyfunction!(knn_predict, m)?)?;
    m.add_function(wrap_pyfunction!(hyppo_predict, m)?)?;
    m.add_function(wrap_pyfunction!(rf_predict, m)?)?;
    m.add_function(wrap_pyfunction!(pca, m)?)?;
    m.add_function(wrap_pyfunction!(residual_report, m)?)?;
    m.add_function(wrap_pyfunction!(make_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    Ok(())
}
