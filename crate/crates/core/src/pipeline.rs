//! Config-driven end-to-end run: data processing, prediction, analysis and
//! output writing, with a manifest recording every derived choice.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{aggregate_fine_to_coarse, format_scatter_csv, residual_report, ResidualReport};
use crate::covariates::{format_pca_csv, pca_fit_with, pca_transform, PcaModel, Retention};
use crate::error::{EngineError, Result, StageExt};
use crate::grid::{
    format_ascii_grid, grid_to_points, header_to_points, monthly_mean, read_ascii_grid,
    sample_covariates, Grid, GridHeader, PointTable,
};
use crate::models::{
    fit_model, format_forest, FeatureMode, HyppoConfig, KnnConfig, MethodConfig, Mtry, RfConfig,
    Weighting,
};
use crate::region::{read_region, BufferSpec, Region};
use crate::render::{render_heatmap, Palette};

/// Fine grid cells per coarse cell side when no fine grid is configured.
pub const DEFAULT_REFINE: usize = 27;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Knn,
    Hyppo,
    Rf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MtryKeyword {
    Auto,
    Tune,
}

/// `mtry` as a number, `"auto"` or `"tune"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MtrySetting {
    Fixed(usize),
    Keyword(MtryKeyword),
}

impl Default for MtrySetting {
    fn default() -> Self {
        MtrySetting::Keyword(MtryKeyword::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetentionRule {
    Kaiser,
    All,
}

/// PCA retention as a component count, `"kaiser"` or `"all"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RetentionSetting {
    Count(usize),
    Rule(RetentionRule),
}

impl Default for RetentionSetting {
    fn default() -> Self {
        RetentionSetting::Rule(RetentionRule::Kaiser)
    }
}

impl From<RetentionSetting> for Retention {
    fn from(r: RetentionSetting) -> Self {
        match r {
            RetentionSetting::Count(q) => Retention::Fixed(q),
            RetentionSetting::Rule(RetentionRule::Kaiser) => Retention::Kaiser,
            RetentionSetting::Rule(RetentionRule::All) => Retention::All,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeaderSpec {
    pub ncols: usize,
    pub nrows: usize,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
}

/// The fine prediction grid: a refinement of the coarse grid or an explicit
/// header.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FineSpec {
    Refine(usize),
    Header(HeaderSpec),
}

impl Default for FineSpec {
    fn default() -> Self {
        FineSpec::Refine(DEFAULT_REFINE)
    }
}

fn default_min_count() -> usize {
    1
}
fn default_max_degree() -> usize {
    3
}
fn default_ntree() -> usize {
    500
}
fn default_min_leaf() -> usize {
    5
}
fn default_folds() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Coarse observation grid. Exactly one of `observed` and `daily_dir`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed: Option<PathBuf>,
    /// Directory of daily `.asc` grids averaged into the observation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub daily_dir: Option<PathBuf>,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
    /// Fine covariate layers; names come from the file stems.
    #[serde(default)]
    pub covariates: Vec<PathBuf>,
    /// Training region.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<PathBuf>,
    #[serde(default)]
    pub buffer_km: f64,
    /// Region predictions are reported on; defaults to `region`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_region: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub pca: bool,
    #[serde(default)]
    pub pca_retention: RetentionSetting,
    pub method: Method,
    /// Neighbours; 5 for knn and 10 for hyppo when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default)]
    pub weighting: Weighting,
    #[serde(default = "default_max_degree")]
    pub max_degree: usize,
    #[serde(default = "default_ntree")]
    pub ntree: usize,
    #[serde(default)]
    pub mtry: MtrySetting,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tune_grid: Vec<usize>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_space: Option<FeatureMode>,
    #[serde(default)]
    pub fine: FineSpec,
    /// Also write `.ppm` heatmaps of the output grids.
    #[serde(default)]
    pub render: bool,
}

impl PipelineConfig {
    /// A config with every optional field at its default.
    pub fn new(observed: impl Into<PathBuf>, output_dir: impl Into<PathBuf>, method: Method) -> Self {
        PipelineConfig {
            observed: Some(observed.into()),
            daily_dir: None,
            min_count: default_min_count(),
            covariates: Vec::new(),
            region: None,
            buffer_km: 0.0,
            report_region: None,
            output_dir: output_dir.into(),
            pca: false,
            pca_retention: RetentionSetting::default(),
            method,
            k: None,
            weighting: Weighting::Uniform,
            max_degree: default_max_degree(),
            ntree: default_ntree(),
            mtry: MtrySetting::default(),
            tune_grid: Vec::new(),
            folds: default_folds(),
            min_leaf: default_min_leaf(),
            seed: 0,
            feature_space: None,
            fine: FineSpec::default(),
            render: false,
        }
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| EngineError::parse(path, e.line(), e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Resolve relative paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.observed.as_mut().map(fix);
        self.daily_dir.as_mut().map(fix);
        self.region.as_mut().map(fix);
        self.report_region.as_mut().map(fix);
        self.covariates.iter_mut().for_each(fix);
        fix(&mut self.output_dir);
    }

    pub fn method_config(&self) -> Result<MethodConfig> {
        Ok(match self.method {
            Method::Knn => MethodConfig::Knn(KnnConfig {
                k: self.k.unwrap_or(5),
                weighting: self.weighting,
            }),
            Method::Hyppo => MethodConfig::Hyppo(HyppoConfig {
                k: self.k.unwrap_or(10),
                max_degree: self.max_degree,
                clamp: Some((0.0, 1.0)),
            }),
            Method::Rf => MethodConfig::Rf(RfConfig {
                ntree: self.ntree,
                mtry: match self.mtry {
                    MtrySetting::Fixed(m) => Mtry::Fixed(m),
                    MtrySetting::Keyword(MtryKeyword::Auto) => Mtry::Auto,
                    MtrySetting::Keyword(MtryKeyword::Tune) => Mtry::Tune,
                },
                min_leaf: self.min_leaf,
                seed: self.seed,
                tune_grid: self.tune_grid.clone(),
                folds: self.folds,
            }),
        })
    }

    pub fn feature_mode(&self) -> Result<FeatureMode> {
        Ok(self
            .feature_space
            .unwrap_or_else(|| self.method_config().map_or(FeatureMode::Coords, |m| m.default_mode())))
    }

    /// Structural checks and existence of every input path.
    pub fn validate(&self) -> Result<()> {
        match (&self.observed, &self.daily_dir) {
            (Some(_), Some(_)) => {
                return Err(EngineError::usage("set only one of `observed` and `daily_dir`"))
            }
            (None, None) => return Err(EngineError::usage("one of `observed` or `daily_dir` is required")),
            _ => {}
        }
        BufferSpec::new(self.buffer_km)?;
        if let FineSpec::Refine(0) = self.fine {
            return Err(EngineError::usage("fine refine factor must be at least 1"));
        }
        if let RetentionSetting::Count(0) = self.pca_retention {
            return Err(EngineError::usage("pca_retention must keep at least one component"));
        }
        let inputs = self
            .observed
            .iter()
            .chain(&self.daily_dir)
            .chain(&self.region)
            .chain(&self.report_region)
            .chain(&self.covariates);
        for p in inputs {
            if !p.exists() {
                return Err(EngineError::usage(format!("input {} does not exist", p.display())));
            }
        }
        let mode = self.feature_mode()?;
        if mode != FeatureMode::Coords && self.covariates.is_empty() {
            return Err(EngineError::usage(format!(
                "feature space `{}` needs covariate layers",
                mode.as_str()
            )));
        }
        if self.pca && self.covariates.is_empty() {
            return Err(EngineError::usage("pca needs covariate layers"));
        }
        Ok(())
    }
}

/// Read a config file; relative paths are taken relative to its directory.
pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| EngineError::io(path, e))?;
    let mut cfg = PipelineConfig::from_json(&text, path)?;
    let base = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let base = fs::canonicalize(&base).unwrap_or(base);
    cfg.resolve_paths(&base);
    Ok(cfg)
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub prediction: Grid,
    /// Prediction points with targets set to the predictions.
    pub predicted_points: PointTable,
    pub report: ResidualReport,
    pub manifest: Value,
    pub files: Vec<PathBuf>,
    pub training_size: usize,
}

impl RunOutput {
    pub fn metrics_line(&self) -> String {
        self.report.metrics_line()
    }
}

/// Prepared tables handed to a predictor.
pub struct Prepared<'a> {
    pub training: &'a PointTable,
    pub prediction: &'a PointTable,
    pub observed: &'a Grid,
}

/// Run the configured method.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutput> {
    run(cfg, None)
}

type CustomPredictor<'f> = &'f dyn Fn(&Prepared) -> Result<Vec<f64>>;

/// Run with `predict` in place of the configured method. It receives the
/// clipped (and PCA-transformed) tables and returns one value per
/// prediction record.
pub fn run_pipeline_with(
    cfg: &PipelineConfig,
    predict: &dyn Fn(&Prepared) -> Result<Vec<f64>>,
) -> Result<RunOutput> {
    run(cfg, Some(predict))
}

/// Files written so far; removed again unless the run completes.
struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
    done: bool,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).map_err(|e| EngineError::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            created_dir,
            written: Vec::new(),
            done: false,
        })
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        fs::write(&path, bytes).map_err(|e| EngineError::io(&path, e))?;
        Ok(path)
    }

    fn render(&mut self, name: &str, grid: &Grid, palette: Palette) -> Result<()> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        self.written.push(crate::render::legend_path(&path));
        render_heatmap(grid, palette, &path)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.done {
            return;
        }
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn load_observed(cfg: &PipelineConfig) -> Result<Grid> {
    let grid = if let Some(p) = &cfg.observed {
        read_ascii_grid(p)?
    } else {
        let dir = cfg.daily_dir.as_ref().expect("validated");
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| EngineError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("asc")))
            .collect();
        paths.sort();
        let days = paths.iter().map(read_ascii_grid).collect::<Result<Vec<_>>>()?;
        monthly_mean(&days, cfg.min_count)?
    };
    grid.validate_moisture()?;
    Ok(grid)
}

fn fine_header(cfg: &PipelineConfig, coarse: &GridHeader) -> Result<GridHeader> {
    match cfg.fine {
        FineSpec::Refine(f) => coarse.refine(f),
        FineSpec::Header(h) => GridHeader::new(h.ncols, h.nrows, h.xllcorner, h.yllcorner, h.cellsize),
    }
}

fn clip(table: PointTable, region: Option<&Region>, buffer: BufferSpec) -> PointTable {
    match region {
        Some(r) => r.clip_points(&table, buffer),
        None => table,
    }
}

fn finite_or_null(v: Option<f64>) -> Value {
    match v {
        Some(x) if x.is_finite() => json!(x),
        _ => Value::Null,
    }
}

fn pca_summary(model: &PcaModel) -> Value {
    json!({
        "retained": model.retained,
        "eigenvalues": model.eigenvalues,
        "components": model.component_names(),
        "constant_columns": model.stats.constant_columns,
    })
}

fn run(cfg: &PipelineConfig, custom: Option<CustomPredictor>) -> Result<RunOutput> {
    cfg.validate().stage("config")?;
    let method = cfg.method_config().stage("config")?;
    let mode = cfg.feature_mode().stage("config")?;

    let observed = load_observed(cfg).stage("observed")?;
    let names: Vec<String> = cfg.covariates.iter().map(|p| file_stem(p)).collect();
    let layers = cfg
        .covariates
        .iter()
        .map(read_ascii_grid)
        .collect::<Result<Vec<_>>>()
        .stage("covariates")?;
    let region = cfg.region.as_ref().map(read_region).transpose().stage("region")?;
    let report_region = cfg
        .report_region
        .as_ref()
        .map(read_region)
        .transpose()
        .stage("region")?
        .or_else(|| region.clone());
    let buffer = BufferSpec::new(cfg.buffer_km).stage("config")?;

    // training vectors at coarse centroids
    let coarse_points = grid_to_points(&observed);
    let (training, training_dropped) =
        sample_covariates(&coarse_points, &layers, &names).stage("training")?;
    let training_sampled = training.len();
    let training = clip(training, region.as_ref(), buffer);
    if training.is_empty() {
        return Err(EngineError::usage("no training records left after clipping")).stage("training");
    }

    // prediction vectors at fine centroids
    let fine = fine_header(cfg, &observed.header).stage("prediction-grid")?;
    let (prediction, prediction_dropped) =
        sample_covariates(&header_to_points(&fine), &layers, &names).stage("prediction-grid")?;
    let prediction_sampled = prediction.len();
    let prediction = clip(prediction, region.as_ref(), buffer);
    let prediction = clip(prediction, report_region.as_ref(), BufferSpec::none());
    if prediction.is_empty() {
        return Err(EngineError::usage("no prediction points inside the reporting region"))
            .stage("prediction-grid");
    }
    info!(
        "training records {}, prediction points {}",
        training.len(),
        prediction.len()
    );

    let (training, prediction, pca) = if cfg.pca {
        let model = pca_fit_with(&training, cfg.pca_retention.into()).stage("pca")?;
        let t = pca_transform(&model, &training).stage("pca")?;
        let p = pca_transform(&model, &prediction).stage("pca")?;
        info!("pca retained {} of {} components", model.retained, model.width());
        (t, p, Some(model))
    } else {
        (training, prediction, None)
    };

    let (values, fit_info, forest) = match custom {
        Some(f) => {
            let prepared = Prepared {
                training: &training,
                prediction: &prediction,
                observed: &observed,
            };
            (f(&prepared).stage("predict")?, None, None)
        }
        None => {
            let (model, info) = fit_model(&method, &training, mode).stage("fit")?;
            let values = model.predict_table(&prediction).stage("predict")?;
            (values, Some(info), model.forest)
        }
    };
    let predicted = prediction.with_targets(&values).stage("predict")?;

    let mut prediction_grid = Grid::empty(fine, observed.nodata);
    for rec in &predicted.records {
        if let (Some((r, c)), Some(v)) = (fine.cell_index(rec.lon, rec.lat), rec.target) {
            prediction_grid.set(r, c, v);
        }
    }
    let aggregated = aggregate_fine_to_coarse(&predicted, &observed);
    let report = residual_report(&aggregated, &observed).stage("analysis")?;
    let scatter = format_scatter_csv(&aggregated, &observed).stage("analysis")?;
    let metrics = report.metrics_line();

    let manifest = json!({
        "config": cfg,
        "method": match custom { Some(_) => "custom", None => method.name() },
        "feature_space": mode.as_str(),
        "covariate_names": names,
        "model_features": training.covariate_names,
        "fine_grid": {
            "ncols": fine.ncols, "nrows": fine.nrows,
            "xllcorner": fine.xll, "yllcorner": fine.yll, "cellsize": fine.cellsize,
        },
        "counts": {
            "observed_cells": observed.data_count(),
            "training_dropped": training_dropped,
            "training_sampled": training_sampled,
            "training_records": training.len(),
            "prediction_cells": fine.len(),
            "prediction_dropped": prediction_dropped,
            "prediction_sampled": prediction_sampled,
            "prediction_records": predicted.len(),
        },
        "pca": pca.as_ref().map(pca_summary),
        "rf": fit_info.as_ref().filter(|_| forest.is_some()).map(|i| json!({
            "mtry": i.mtry,
            "mtry_scores": i.mtry_scores.iter().map(|&(m, s)| json!([m, s])).collect::<Vec<_>>(),
            "oob_rmse": finite_or_null(i.oob_rmse),
        })),
        "metrics": {
            "r2": finite_or_null(report.r2),
            "rmse": finite_or_null(report.rmse),
            "n_cells": report.n_cells,
            "degenerate": report.degenerate,
        },
    });

    let stage = "output";
    let mut out = Outputs::create(&cfg.output_dir).stage(stage)?;
    out.write("prediction.asc", format_ascii_grid(&prediction_grid)).stage(stage)?;
    out.write("aggregated.asc", format_ascii_grid(&aggregated)).stage(stage)?;
    out.write("residual.asc", format_ascii_grid(&report.residual)).stage(stage)?;
    out.write("relative_residual.asc", format_ascii_grid(&report.relative_residual))
        .stage(stage)?;
    out.write("scatter.csv", scatter).stage(stage)?;
    out.write("metrics.txt", format!("{metrics}\n")).stage(stage)?;
    if let Some(model) = &pca {
        out.write("pca.csv", format_pca_csv(model)).stage(stage)?;
    }
    if let Some(f) = &forest {
        out.write("forest.txt", format_forest(f)).stage(stage)?;
    }
    if cfg.render {
        out.render("prediction.ppm", &prediction_grid, Palette::Sequential).stage(stage)?;
        out.render("aggregated.ppm", &aggregated, Palette::Sequential).stage(stage)?;
        out.render("residual.ppm", &report.residual, Palette::Diverging).stage(stage)?;
        out.render("relative_residual.ppm", &report.relative_residual, Palette::Diverging)
            .stage(stage)?;
    }
    let mut manifest = manifest;
    let mut files: Vec<String> = out
        .written
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    files.push("manifest.json".into());
    manifest["outputs"] = json!(files);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    out.write("manifest.json", format!("{text}\n")).stage(stage)?;
    out.done = true;

    Ok(RunOutput {
        prediction: prediction_grid,
        predicted_points: predicted,
        report,
        manifest,
        files: out.written.clone(),
        training_size: training.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let p = Path::new("c.json");
        let cfg = PipelineConfig::from_json(
            r#"{"observed": "o.asc", "output_dir": "out", "method": "rf", "mtry": "tune",
                "fine": {"refine": 4}, "pca": true, "pca_retention": "all"}"#,
            p,
        )
        .unwrap();
        assert_eq!(cfg.mtry, MtrySetting::Keyword(MtryKeyword::Tune));
        assert_eq!(cfg.fine, FineSpec::Refine(4));
        assert_eq!(cfg.ntree, 500);
        assert_eq!(cfg.folds, 10);
        assert_eq!(cfg.feature_mode().unwrap(), FeatureMode::Covariates);
        assert_eq!(Retention::from(cfg.pca_retention), Retention::All);
        let back = PipelineConfig::from_json(&cfg.to_json(), p).unwrap();
        assert_eq!(back, cfg);

        let fixed = PipelineConfig::from_json(
            r#"{"observed": "o.asc", "output_dir": "o", "method": "knn", "mtry": 3,
                "fine": {"header": {"ncols": 2, "nrows": 2, "xllcorner": 0, "yllcorner": 0, "cellsize": 0.5}}}"#,
            p,
        )
        .unwrap();
        assert_eq!(fixed.mtry, MtrySetting::Fixed(3));
        assert!(matches!(fixed.fine, FineSpec::Header(h) if h.ncols == 2));
        assert_eq!(fixed.feature_mode().unwrap(), FeatureMode::Coords);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = PipelineConfig::from_json(
            r#"{"observed": "o.asc", "output_dir": "o", "method": "knn", "ntrees": 5}"#,
            Path::new("c.json"),
        )
        .unwrap_err();
        assert!(err.to_string().contains("ntrees"), "{err}");
        assert!(PipelineConfig::from_json(
            r#"{"observed": "o.asc", "output_dir": "o", "method": "svm"}"#,
            Path::new("c.json")
        )
        .is_err());
    }

    #[test]
    fn validation() {
        let dir = tempfile::tempdir().unwrap();
        let missing = PipelineConfig::new(dir.path().join("nope.asc"), dir.path().join("o"), Method::Knn);
        assert!(missing.validate().is_err());
        let obs = dir.path().join("o.asc");
        fs::write(&obs, "").unwrap();
        let mut cfg = PipelineConfig::new(&obs, dir.path().join("o"), Method::Knn);
        cfg.validate().unwrap();
        cfg.method = Method::Rf;
        assert!(cfg.validate().is_err(), "rf without covariates");
        cfg.method = Method::Knn;
        cfg.buffer_km = -1.0;
        assert!(cfg.validate().is_err());
        cfg.buffer_km = 0.0;
        cfg.daily_dir = Some(dir.path().to_path_buf());
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn relative_paths_resolved() {
        let mut cfg = PipelineConfig::new("o.asc", "out", Method::Knn);
        cfg.covariates = vec!["a.asc".into(), "/abs/b.asc".into()];
        cfg.resolve_paths(Path::new("/data"));
        assert_eq!(cfg.observed.unwrap(), Path::new("/data/o.asc"));
        assert_eq!(cfg.covariates[1], Path::new("/abs/b.asc"));
        assert_eq!(cfg.output_dir, Path::new("/data/out"));
    }

    #[test]
    fn failed_run_leaves_no_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let obs = dir.path().join("o.asc");
        fs::write(&obs, "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n0.1 0.2\n")
            .unwrap();
        let out = dir.path().join("out");
        let mut cfg = PipelineConfig::new(&obs, &out, Method::Knn);
        cfg.k = Some(5);
        cfg.fine = FineSpec::Refine(2);
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(err.to_string().starts_with("[fit]"), "{err}");
        assert!(!out.exists());

        cfg.k = Some(1);
        let run = run_pipeline(&cfg).unwrap();
        assert_eq!(run.prediction.values(), &[0.1, 0.1, 0.2, 0.2, 0.1, 0.1, 0.2, 0.2]);
        assert_eq!(fs::read_to_string(out.join("metrics.txt")).unwrap(), "r2=1 rmse=0 n=2\n");
        assert!(out.join("manifest.json").exists());
    }
}
