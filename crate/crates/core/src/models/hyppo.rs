//! Hybrid piecewise polynomial regression: a local least-squares polynomial
//! over the k nearest neighbours, with its degree picked by leave-one-out
//! cross-validation over those same neighbours.

use super::knn::{combine, NeighborIndex, Weighting};
use super::poly::{fit_polynomial, monomial_count};
use super::{FeatureSpace, Predictor};
use crate::error::{EngineError, Result};
use crate::grid::{shifted_mean, PointTable};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyppoConfig {
    pub k: usize,
    pub max_degree: usize,
    /// Output clamp, e.g. `(0, 1)` for moisture ratios.
    pub clamp: Option<(f64, f64)>,
}

impl Default for HyppoConfig {
    fn default() -> Self {
        HyppoConfig {
            k: 10,
            max_degree: 3,
            clamp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeChoice {
    pub degree: usize,
    /// Summed squared leave-one-out error per candidate degree, from 0.
    pub loo_errors: Vec<f64>,
}

/// Highest degree whose monomial basis fits in `k - 1` points.
fn max_admissible_degree(dim: usize, k: usize, max_degree: usize) -> usize {
    let mut d = 0;
    while d < max_degree && monomial_count(dim, d + 1) < k {
        d += 1;
    }
    d
}

/// Pick the polynomial degree by leave-one-out over the given neighbours.
///
/// Candidates run from 0 up to `max_degree`, stopping before any degree
/// whose monomial count exceeds `k - 1`. Errors within a relative 1e-12 of
/// the smallest are treated as ties and resolved toward the lower degree.
pub fn hyppo_select_degree(points: &[Vec<f64>], targets: &[f64], max_degree: usize) -> DegreeChoice {
    let k = points.len();
    let dim = points.first().map_or(0, Vec::len);
    if k < 2 {
        return DegreeChoice {
            degree: 0,
            loo_errors: vec![0.0],
        };
    }
    let top = max_admissible_degree(dim, k, max_degree);
    let mut held_pts: Vec<Vec<f64>> = Vec::with_capacity(k - 1);
    let mut held_z: Vec<f64> = Vec::with_capacity(k - 1);
    let loo_errors: Vec<f64> = (0..=top)
        .map(|d| {
            (0..k)
                .map(|out| {
                    held_pts.clear();
                    held_z.clear();
                    for i in (0..k).filter(|&i| i != out) {
                        held_pts.push(points[i].clone());
                        held_z.push(targets[i]);
                    }
                    let pred = if d == 0 {
                        shifted_mean(held_z.iter().copied()).unwrap_or(0.0)
                    } else {
                        fit_polynomial(&held_pts, &held_z, d).eval(&points[out])
                    };
                    (pred - targets[out]).powi(2)
                })
                .sum()
        })
        .collect();

    let best = loo_errors.iter().copied().fold(f64::INFINITY, f64::min);
    let scale: f64 = targets.iter().map(|z| z * z).sum();
    let tol = 1e-12 * scale;
    let degree = loo_errors
        .iter()
        .position(|&e| e <= best + tol)
        .unwrap_or(0);
    DegreeChoice { degree, loo_errors }
}

/// Local polynomial prediction at the query from its neighbours.
///
/// Neighbour coordinates are shifted to the query and divided by the largest
/// neighbour distance before fitting; the polynomial space is invariant under
/// that map, only the conditioning changes.
pub(crate) fn local_prediction(
    index: &NeighborIndex,
    query: &[f64],
    neighbors: &[(usize, f64)],
    max_degree: usize,
) -> (f64, usize) {
    let radius = neighbors
        .iter()
        .map(|&(_, d2)| d2.sqrt())
        .fold(0.0, f64::max);
    let radius = if radius > 0.0 { radius } else { 1.0 };
    let local: Vec<Vec<f64>> = neighbors
        .iter()
        .map(|&(i, _)| {
            index
                .point(i)
                .iter()
                .zip(query)
                .map(|(p, q)| (p - q) / radius)
                .collect()
        })
        .collect();
    let z: Vec<f64> = neighbors.iter().map(|&(i, _)| index.target(i)).collect();
    let choice = hyppo_select_degree(&local, &z, max_degree);
    let value = if choice.degree == 0 {
        combine(index, neighbors, Weighting::Uniform)
    } else {
        let origin = vec![0.0; query.len()];
        fit_polynomial(&local, &z, choice.degree).eval(&origin)
    };
    (value, choice.degree)
}

#[derive(Debug, Clone)]
pub struct HyppoModel {
    pub cfg: HyppoConfig,
    pub space: FeatureSpace,
    index: NeighborIndex,
}

impl HyppoModel {
    pub fn fit(train: &PointTable, cfg: HyppoConfig, space: FeatureSpace) -> Result<Self> {
        if cfg.k < 2 {
            return Err(EngineError::usage("HYPPO needs k >= 2"));
        }
        if cfg.k > train.len() {
            return Err(EngineError::usage(format!(
                "k = {} exceeds the {} training records",
                cfg.k,
                train.len()
            )));
        }
        let index = NeighborIndex::from_table(train, &space)?;
        Ok(HyppoModel { cfg, space, index })
    }

    /// Prediction and the selected degree.
    pub fn predict_with_degree(&self, features: &[f64]) -> Result<(f64, usize)> {
        self.space.check_width(features)?;
        let q = self.space.scale(features);
        let nn = self.index.nearest(&q, self.cfg.k);
        let (mut value, degree) = local_prediction(&self.index, &q, &nn, self.cfg.max_degree);
        if let Some((lo, hi)) = self.cfg.clamp {
            value = value.clamp(lo, hi);
        }
        Ok((value, degree))
    }
}

impl Predictor for HyppoModel {
    fn predict(&self, features: &[f64]) -> Result<f64> {
        self.predict_with_degree(features).map(|(v, _)| v)
    }
}

pub fn hyppo_predict(
    train: &PointTable,
    query: &[f64],
    cfg: HyppoConfig,
    space: &FeatureSpace,
) -> Result<f64> {
    HyppoModel::fit(train, cfg, space.clone())?.predict(query)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Record;
    use crate::models::{knn::KnnModel, FeatureMode, KnnConfig};
    use rand::{Rng, SeedableRng};

    fn table(points: &[(f64, f64, f64)]) -> PointTable {
        PointTable {
            covariate_names: vec![],
            records: points
                .iter()
                .map(|&(lon, lat, z)| Record { lon, lat, target: Some(z), covariates: vec![] })
                .collect(),
        }
    }

    #[test]
    fn constant_neighbors_select_degree_zero() {
        let pts: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, (i * i % 5) as f64]).collect();
        let choice = hyppo_select_degree(&pts, &[0.3; 8], 3);
        assert_eq!(choice.degree, 0);
    }

    #[test]
    fn exact_plane_selects_degree_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for k in [7, 10, 15] {
            let pts: Vec<Vec<f64>> = (0..k).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
            let z: Vec<f64> = pts.iter().map(|p| 2.0 * p[0] + 3.0 * p[1]).collect();
            let choice = hyppo_select_degree(&pts, &z, 3);
            assert_eq!(choice.degree, 1, "k={k} errors {:?}", choice.loo_errors);
            assert!(choice.loo_errors[0] > 0.0);
        }
    }

    #[test]
    fn candidate_degrees_respect_monomial_guard() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * 3 % 4) as f64]).collect();
        let z = vec![0.1; 6];
        // m(1) = 3 <= 5, m(2) = 6 > 5
        assert_eq!(hyppo_select_degree(&pts, &z, 3).loo_errors.len(), 2);
        assert_eq!(hyppo_select_degree(&pts[..2], &z[..2], 3).loo_errors.len(), 1);
        assert_eq!(max_admissible_degree(2, 10, 3), 2);
        assert_eq!(max_admissible_degree(2, 11, 3), 3);
        assert_eq!(max_admissible_degree(2, 11, 1), 1);
    }

    #[test]
    fn reproduces_plane_and_constant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let pts: Vec<(f64, f64, f64)> = (0..300)
            .map(|_| {
                let (x, y) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
                (x, y, 2.0 * x + 3.0 * y)
            })
            .collect();
        let t = table(&pts);
        let space = FeatureSpace::unscaled(FeatureMode::Coords, 2);
        let m = HyppoModel::fit(&t, HyppoConfig { k: 10, max_degree: 3, clamp: None }, space.clone()).unwrap();
        for _ in 0..50 {
            let (x, y) = (rng.random_range(0.2..0.8), rng.random_range(0.2..0.8));
            let (v, d) = m.predict_with_degree(&[x, y]).unwrap();
            assert_eq!(d, 1);
            assert!((v - (2.0 * x + 3.0 * y)).abs() < 1e-9);
        }

        let c: Vec<(f64, f64, f64)> = pts.iter().map(|&(x, y, _)| (x, y, 0.27)).collect();
        let m = HyppoModel::fit(&table(&c), HyppoConfig::default(), space).unwrap();
        assert_eq!(m.predict(&[0.5, 0.5]).unwrap(), 0.27);
    }

    #[test]
    fn degree_zero_equals_knn() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<(f64, f64, f64)> = (0..100)
            .map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
            .collect();
        let t = table(&pts);
        let space = FeatureSpace::fit(FeatureMode::Coords, &t).unwrap();
        let h = HyppoModel::fit(&t, HyppoConfig { k: 6, max_degree: 0, clamp: Some((0.0, 1.0)) }, space.clone()).unwrap();
        let k = KnnModel::fit(&t, KnnConfig { k: 6, weighting: Weighting::Uniform }, space).unwrap();
        for _ in 0..100 {
            let q = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            assert_eq!(h.predict(&q).unwrap().to_bits(), k.predict(&q).unwrap().to_bits());
        }
    }

    #[test]
    fn clamp_bounds_output() {
        let pts: Vec<(f64, f64, f64)> = (0..50).map(|i| (i as f64 / 50.0, 0.0, i as f64 / 25.0)).collect();
        let t = table(&pts);
        let space = FeatureSpace::unscaled(FeatureMode::Coords, 2);
        let cfg = HyppoConfig { k: 5, max_degree: 2, clamp: Some((0.0, 1.0)) };
        let v = hyppo_predict(&t, &[2.0, 0.0], cfg, &space).unwrap();
        assert_eq!(v, 1.0);
        assert!(hyppo_predict(&t, &[0.0, 0.0], HyppoConfig { k: 1, ..cfg }, &space).is_err());
    }
}
