use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{training_targets, FeatureSpace, Predictor};
use crate::error::{EngineError, Result};
use crate::grid::{shifted_mean, PointTable};

const IDW_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    #[default]
    Uniform,
    InverseDistance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnConfig {
    pub k: usize,
    pub weighting: Weighting,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            k: 5,
            weighting: Weighting::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact nearest-neighbour search over scaled training features.
///
/// Ties in distance go to the lower record index, so the returned set is the
/// prefix of the stable (distance, index) ordering.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl NeighborIndex {
    pub fn new(points: Vec<Vec<f64>>, targets: Vec<f64>) -> Self {
        debug_assert_eq!(points.len(), targets.len());
        NeighborIndex { points, targets }
    }

    pub fn from_table(train: &PointTable, space: &FeatureSpace) -> Result<Self> {
        let targets = training_targets(train)?;
        let points = train
            .records
            .iter()
            .map(|r| space.scale(&space.raw(r)))
            .collect();
        Ok(NeighborIndex { points, targets })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    /// The `k` nearest records as `(index, squared distance)`, nearest first.
    pub fn nearest(&self, query: &[f64], k: usize) -> Vec<(usize, f64)> {
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        for (index, p) in self.points.iter().enumerate() {
            let dist2: f64 = p.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            let cand = Candidate { dist2, index };
            if heap.len() < k {
                heap.push(cand);
            } else if let Some(top) = heap.peek() {
                if cand < *top {
                    heap.pop();
                    heap.push(cand);
                }
            }
        }
        heap.into_sorted_vec()
            .into_iter()
            .map(|c| (c.index, c.dist2))
            .collect()
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 {
        return Err(EngineError::usage("k must be at least 1"));
    }
    if k > n {
        return Err(EngineError::usage(format!(
            "k = {k} exceeds the {n} training records"
        )));
    }
    Ok(())
}

/// Combine neighbour targets under the configured weighting.
pub(crate) fn combine(index: &NeighborIndex, neighbors: &[(usize, f64)], weighting: Weighting) -> f64 {
    match weighting {
        Weighting::Uniform => {
            shifted_mean(neighbors.iter().map(|&(i, _)| index.target(i))).unwrap_or(f64::NAN)
        }
        Weighting::InverseDistance => {
            let (num, den) = neighbors.iter().fold((0.0, 0.0), |(num, den), &(i, d2)| {
                let w = 1.0 / d2.sqrt().max(IDW_EPSILON);
                (num + w * index.target(i), den + w)
            });
            num / den
        }
    }
}

/// k-nearest-neighbour regressor.
#[derive(Debug, Clone)]
pub struct KnnModel {
    pub cfg: KnnConfig,
    pub space: FeatureSpace,
    index: NeighborIndex,
}

impl KnnModel {
    pub fn fit(train: &PointTable, cfg: KnnConfig, space: FeatureSpace) -> Result<Self> {
        check_k(cfg.k, train.len())?;
        let index = NeighborIndex::from_table(train, &space)?;
        Ok(KnnModel { cfg, space, index })
    }
}

impl Predictor for KnnModel {
    fn predict(&self, features: &[f64]) -> Result<f64> {
        self.space.check_width(features)?;
        let q = self.space.scale(features);
        let nn = self.index.nearest(&q, self.cfg.k);
        Ok(combine(&self.index, &nn, self.cfg.weighting))
    }
}

/// Predict one query (raw features in `space` order).
pub fn knn_predict(
    train: &PointTable,
    query: &[f64],
    cfg: KnnConfig,
    space: &FeatureSpace,
) -> Result<f64> {
    KnnModel::fit(train, cfg, space.clone())?.predict(query)
}
