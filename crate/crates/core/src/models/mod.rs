//! The three interchangeable regressors behind one predictor contract.

mod forest;
mod hyppo;
mod knn;
mod poly;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariates::StandardizationStats;
use crate::error::{EngineError, Result};
use crate::grid::{PointTable, Record};

pub use forest::{
    default_mtry_grid, format_forest, parse_forest, rf_fit, rf_predict, tune_mtry, Forest, Mtry,
    Node, RfConfig, Tree, TuneResult,
};
pub use hyppo::{hyppo_predict, hyppo_select_degree, DegreeChoice, HyppoConfig, HyppoModel};
pub use knn::{knn_predict, KnnConfig, KnnModel, NeighborIndex, Weighting};
pub use poly::{eval_polynomial, fit_polynomial, monomial_count, monomial_exponents, PolyFit};

/// Which record fields enter the feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureMode {
    #[serde(rename = "coords")]
    Coords,
    #[serde(rename = "covariates")]
    Covariates,
    #[serde(rename = "coords+covariates")]
    CoordsAndCovariates,
}

impl FeatureMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureMode::Coords => "coords",
            FeatureMode::Covariates => "covariates",
            FeatureMode::CoordsAndCovariates => "coords+covariates",
        }
    }

    /// Raw (unscaled) feature vector of a record.
    pub fn extract(&self, rec: &Record) -> Vec<f64> {
        match self {
            FeatureMode::Coords => vec![rec.lon, rec.lat],
            FeatureMode::Covariates => rec.covariates.clone(),
            FeatureMode::CoordsAndCovariates => {
                let mut v = Vec::with_capacity(rec.covariates.len() + 2);
                v.push(rec.lon);
                v.push(rec.lat);
                v.extend_from_slice(&rec.covariates);
                v
            }
        }
    }

    pub fn names(&self, table: &PointTable) -> Vec<String> {
        let coords = ["lon".to_string(), "lat".to_string()];
        match self {
            FeatureMode::Coords => coords.to_vec(),
            FeatureMode::Covariates => table.covariate_names.clone(),
            FeatureMode::CoordsAndCovariates => {
                coords.iter().cloned().chain(table.covariate_names.iter().cloned()).collect()
            }
        }
    }
}

/// Selected features plus the standardization applied before distances.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    pub mode: FeatureMode,
    pub scaling: StandardizationStats,
}

impl FeatureSpace {
    /// Fit scaling statistics on the training table.
    pub fn fit(mode: FeatureMode, train: &PointTable) -> Result<Self> {
        if train.is_empty() {
            return Err(EngineError::usage("cannot fit a feature space on an empty table"));
        }
        if mode != FeatureMode::Coords && train.width() == 0 {
            return Err(EngineError::usage(format!(
                "feature mode `{}` needs covariates",
                mode.as_str()
            )));
        }
        let rows: Vec<Vec<f64>> = train.records.iter().map(|r| mode.extract(r)).collect();
        let width = rows[0].len();
        Ok(FeatureSpace {
            mode,
            scaling: StandardizationStats::fit_rows(&rows, width),
        })
    }

    /// Identity scaling over `width` features.
    pub fn unscaled(mode: FeatureMode, width: usize) -> Self {
        FeatureSpace {
            mode,
            scaling: StandardizationStats {
                means: vec![0.0; width],
                stdevs: vec![1.0; width],
                constant_columns: Vec::new(),
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.scaling.width()
    }

    pub fn raw(&self, rec: &Record) -> Vec<f64> {
        self.mode.extract(rec)
    }

    pub fn scale(&self, raw: &[f64]) -> Vec<f64> {
        self.scaling.apply(raw)
    }

    pub(crate) fn check_width(&self, raw: &[f64]) -> Result<()> {
        if raw.len() != self.dim() {
            return Err(EngineError::usage(format!(
                "query has {} features, feature space has {}",
                raw.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// A fitted regressor evaluated on raw feature vectors.
pub trait Predictor: Send + Sync {
    fn predict(&self, features: &[f64]) -> Result<f64>;
}

/// Method and hyperparameters for one run.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodConfig {
    Knn(KnnConfig),
    Hyppo(HyppoConfig),
    Rf(RfConfig),
}

impl MethodConfig {
    pub fn name(&self) -> &'static str {
        match self {
            MethodConfig::Knn(_) => "knn",
            MethodConfig::Hyppo(_) => "hyppo",
            MethodConfig::Rf(_) => "rf",
        }
    }

    /// Coordinates for the neighbourhood methods, covariates for RF.
    pub fn default_mode(&self) -> FeatureMode {
        match self {
            MethodConfig::Rf(_) => FeatureMode::Covariates,
            _ => FeatureMode::Coords,
        }
    }
}

/// Choices made while fitting that a run should record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitInfo {
    pub mtry: Option<usize>,
    pub mtry_scores: Vec<(usize, f64)>,
    pub oob_rmse: Option<f64>,
}

/// A predictor bound to the feature space it was trained in.
pub struct FittedModel {
    pub space: FeatureSpace,
    predictor: Box<dyn Predictor>,
    pub forest: Option<Forest>,
}

impl FittedModel {
    pub fn predict_record(&self, rec: &Record) -> Result<f64> {
        self.predictor.predict(&self.space.raw(rec))
    }

    /// Predict every record in parallel; output order follows the table.
    pub fn predict_table(&self, table: &PointTable) -> Result<Vec<f64>> {
        table
            .records
            .par_iter()
            .map(|r| self.predict_record(r))
            .collect()
    }
}

/// Fit `method` on `train` in the given feature mode.
pub fn fit_model(
    method: &MethodConfig,
    train: &PointTable,
    mode: FeatureMode,
) -> Result<(FittedModel, FitInfo)> {
    let space = FeatureSpace::fit(mode, train)?;
    match method {
        MethodConfig::Knn(cfg) => {
            let model = KnnModel::fit(train, *cfg, space.clone())?;
            Ok((
                FittedModel {
                    space,
                    predictor: Box::new(model),
                    forest: None,
                },
                FitInfo::default(),
            ))
        }
        MethodConfig::Hyppo(cfg) => {
            let model = HyppoModel::fit(train, *cfg, space.clone())?;
            Ok((
                FittedModel {
                    space,
                    predictor: Box::new(model),
                    forest: None,
                },
                FitInfo::default(),
            ))
        }
        MethodConfig::Rf(cfg) => {
            let features = feature_table(train, mode);
            let forest = rf_fit(&features, cfg)?;
            let info = FitInfo {
                mtry: Some(forest.mtry),
                mtry_scores: forest.mtry_scores.clone(),
                oob_rmse: forest.oob_rmse,
            };
            Ok((
                FittedModel {
                    space,
                    predictor: Box::new(forest.clone()),
                    forest: Some(forest),
                },
                info,
            ))
        }
    }
}

/// Copy of `table` whose covariates are the raw features of `mode`.
pub fn feature_table(table: &PointTable, mode: FeatureMode) -> PointTable {
    PointTable {
        covariate_names: mode.names(table),
        records: table
            .records
            .iter()
            .map(|r| Record {
                covariates: mode.extract(r),
                ..r.clone()
            })
            .collect(),
    }
}

pub(crate) fn training_targets(train: &PointTable) -> Result<Vec<f64>> {
    train
        .targets()
        .ok_or_else(|| EngineError::usage("every training record needs a target"))
}
