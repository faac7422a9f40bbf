//! Random forest regression: CART trees on bootstrap samples with per-node
//! feature subsampling, out-of-bag error, and cross-validated `mtry` tuning.

use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{training_targets, Predictor};
use crate::error::{EngineError, Result};
use crate::grid::{shifted_mean, PointTable};

/// Features tried at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mtry {
    /// `max(1, p / 3)`.
    #[default]
    Auto,
    Fixed(usize),
    /// k-fold cross-validation over [`default_mtry_grid`].
    Tune,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfConfig {
    pub ntree: usize,
    pub mtry: Mtry,
    pub min_leaf: usize,
    pub seed: u64,
    /// Candidate grid for `Mtry::Tune`; empty means the default grid.
    pub tune_grid: Vec<usize>,
    pub folds: usize,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            ntree: 500,
            mtry: Mtry::Auto,
            min_leaf: 5,
            seed: 0,
            tune_grid: Vec::new(),
            folds: 10,
        }
    }
}

/// `2..=p-1` (one less than the number of covariates), or `1..=p` when that
/// range is empty.
pub fn default_mtry_grid(p: usize) -> Vec<usize> {
    if p >= 3 {
        (2..p).collect()
    } else {
        (1..=p).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        count: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { value, count } => Some((value, count)),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub mtry: usize,
    pub min_leaf: usize,
    pub oob_rmse: Option<f64>,
    /// Out-of-bag record indices per tree.
    pub oob_indices: Vec<Vec<u32>>,
    /// Cross-validation scores when `mtry` was tuned.
    pub mtry_scores: Vec<(usize, f64)>,
}

struct Data<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
}

struct Grower<'a> {
    data: Data<'a>,
    mtry: usize,
    min_leaf: usize,
}

impl Grower<'_> {
    fn grow(&self, sample: Vec<usize>, rng: &mut ChaCha8Rng) -> Tree {
        let mut nodes = Vec::new();
        // (node id, sample indices)
        let mut stack = vec![(0usize, sample)];
        nodes.push(Node::Leaf { value: 0.0, count: 0 });
        while let Some((id, idx)) = stack.pop() {
            match self.best_split(&idx, rng) {
                Some((feature, threshold)) => {
                    let (l, r): (Vec<usize>, Vec<usize>) = idx
                        .iter()
                        .partition(|&&i| self.data.x[i][feature] <= threshold);
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0, count: 0 });
                    let right = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0, count: 0 });
                    nodes[id] = Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    };
                    // right pushed first so the left subtree is grown first
                    stack.push((right, r));
                    stack.push((left, l));
                }
                None => {
                    nodes[id] = Node::Leaf {
                        value: shifted_mean(idx.iter().map(|&i| self.data.y[i])).unwrap_or(0.0),
                        count: idx.len(),
                    };
                }
            }
        }
        Tree { nodes }
    }

    /// Best (feature, threshold) by variance reduction among `mtry` randomly
    /// drawn features, or `None` when the node must be a leaf.
    fn best_split(&self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<(usize, f64)> {
        let n = idx.len();
        if n < 2 * self.min_leaf || n < 2 {
            return None;
        }
        let y0 = self.data.y[idx[0]];
        if idx.iter().all(|&i| self.data.y[i] == y0) {
            return None;
        }
        let p = self.data.x[idx[0]].len();
        let mean = idx.iter().map(|&i| self.data.y[i]).sum::<f64>() / n as f64;
        let total: f64 = idx.iter().map(|&i| self.data.y[i] - mean).sum();
        let parent_score = total * total / n as f64;
        let node_sse: f64 = idx.iter().map(|&i| (self.data.y[i] - mean).powi(2)).sum();

        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for feature in index::sample(rng, p, self.mtry.min(p)).into_iter() {
            let x = |i: usize| self.data.x[i][feature];
            order.sort_by(|&a, &b| x(a).total_cmp(&x(b)));
            let mut left_sum = 0.0;
            for pos in 0..n - 1 {
                left_sum += self.data.y[order[pos]] - mean;
                let nl = pos + 1;
                let nr = n - nl;
                let (lo, hi) = (x(order[pos]), x(order[pos + 1]));
                if nl < self.min_leaf || nr < self.min_leaf || lo >= hi {
                    continue;
                }
                let threshold = lo + (hi - lo) / 2.0;
                if !(threshold > lo && threshold < hi) {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64;
                let gain = score - parent_score;
                if gain > 1e-12 * node_sse
                    && best.is_none_or(|(g, _, _)| gain > g)
                {
                    best = Some((gain, feature, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

fn resolve_mtry(cfg: &RfConfig, p: usize) -> Result<usize> {
    match cfg.mtry {
        Mtry::Auto => Ok((p / 3).max(1)),
        Mtry::Fixed(m) if m >= 1 && m <= p => Ok(m),
        Mtry::Fixed(m) => Err(EngineError::usage(format!(
            "mtry = {m} outside [1, {p}]"
        ))),
        Mtry::Tune => unreachable!("tuning resolved by caller"),
    }
}

fn check_inputs(train: &PointTable, cfg: &RfConfig) -> Result<Vec<f64>> {
    if train.width() == 0 {
        return Err(EngineError::usage("random forest needs at least one covariate"));
    }
    if train.is_empty() {
        return Err(EngineError::usage("random forest needs training records"));
    }
    if cfg.ntree == 0 {
        return Err(EngineError::usage("ntree must be at least 1"));
    }
    if cfg.min_leaf == 0 {
        return Err(EngineError::usage("min_leaf must be at least 1"));
    }
    training_targets(train)
}

/// Grow a forest. With `Mtry::Tune`, `mtry` is first chosen by
/// [`tune_mtry`] and the scores kept on the forest.
pub fn rf_fit(train: &PointTable, cfg: &RfConfig) -> Result<Forest> {
    let y = check_inputs(train, cfg)?;
    let p = train.width();
    let (mtry, mtry_scores) = if cfg.mtry == Mtry::Tune {
        let grid = if cfg.tune_grid.is_empty() {
            default_mtry_grid(p)
        } else {
            cfg.tune_grid.clone()
        };
        let tuned = tune_mtry(train, cfg, &grid, cfg.folds)?;
        (tuned.best, tuned.scores)
    } else {
        (resolve_mtry(cfg, p)?, Vec::new())
    };

    let x: Vec<Vec<f64>> = train.records.iter().map(|r| r.covariates.clone()).collect();
    let n = x.len();
    let grower = Grower {
        data: Data { x: &x, y: &y },
        mtry,
        min_leaf: cfg.min_leaf,
    };
    let built: Vec<(Tree, Vec<u32>)> = (0..cfg.ntree)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(cfg.seed, t);
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut in_bag = vec![false; n];
            for &i in &sample {
                in_bag[i] = true;
            }
            let oob = (0..n).filter(|&i| !in_bag[i]).map(|i| i as u32).collect();
            (grower.grow(sample, &mut rng), oob)
        })
        .collect();
    let (trees, oob_indices): (Vec<Tree>, Vec<Vec<u32>>) = built.into_iter().unzip();

    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for (tree, oob) in trees.iter().zip(&oob_indices) {
        for &i in oob {
            sums[i as usize] += tree.predict(&x[i as usize]);
            counts[i as usize] += 1;
        }
    }
    let (sse, m) = (0..n)
        .filter(|&i| counts[i] > 0)
        .fold((0.0, 0usize), |(s, m), i| {
            let e = sums[i] / counts[i] as f64 - y[i];
            (s + e * e, m + 1)
        });
    let oob_rmse = (m > 0).then(|| (sse / m as f64).sqrt());

    Ok(Forest {
        trees,
        n_features: p,
        mtry,
        min_leaf: cfg.min_leaf,
        oob_rmse,
        oob_indices,
        mtry_scores,
    })
}

impl Forest {
    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(EngineError::usage(format!(
                "query has {} features, forest was trained on {}",
                x.len(),
                self.n_features
            )));
        }
        Ok(shifted_mean(self.trees.iter().map(|t| t.predict(x))).unwrap_or(f64::NAN))
    }
}

impl Predictor for Forest {
    fn predict(&self, features: &[f64]) -> Result<f64> {
        self.predict_one(features)
    }
}

pub fn rf_predict(forest: &Forest, query: &[f64]) -> Result<f64> {
    forest.predict_one(query)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best: usize,
    /// Mean held-out RMSE per candidate, in candidate order.
    pub scores: Vec<(usize, f64)>,
}

/// Choose `mtry` by k-fold cross-validated RMSE. Ties go to the smaller
/// value.
pub fn tune_mtry(
    train: &PointTable,
    cfg: &RfConfig,
    candidates: &[usize],
    folds: usize,
) -> Result<TuneResult> {
    let y = check_inputs(train, cfg)?;
    let p = train.width();
    if candidates.is_empty() {
        return Err(EngineError::usage("mtry candidate list is empty"));
    }
    if let Some(bad) = candidates.iter().find(|&&c| c == 0 || c > p) {
        return Err(EngineError::usage(format!("mtry candidate {bad} outside [1, {p}]")));
    }
    if candidates.len() == 1 {
        return Ok(TuneResult {
            best: candidates[0],
            scores: Vec::new(),
        });
    }
    if folds < 2 {
        return Err(EngineError::usage("cross-validation needs at least 2 folds"));
    }
    let n = train.len();
    if n < folds {
        return Err(EngineError::usage(format!(
            "{n} records cannot be split into {folds} folds"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);
    order.shuffle(&mut rng);
    let bounds: Vec<(usize, usize)> = (0..folds)
        .map(|f| (f * n / folds, (f + 1) * n / folds))
        .collect();

    let mut scores = Vec::with_capacity(candidates.len());
    for &m in candidates {
        let fold_cfg = RfConfig {
            mtry: Mtry::Fixed(m),
            ..cfg.clone()
        };
        let mut total = 0.0;
        for &(lo, hi) in &bounds {
            let held = &order[lo..hi];
            let fit_part = PointTable {
                covariate_names: train.covariate_names.clone(),
                records: order[..lo]
                    .iter()
                    .chain(&order[hi..])
                    .map(|&i| train.records[i].clone())
                    .collect(),
            };
            let forest = rf_fit(&fit_part, &fold_cfg)?;
            let sse: f64 = held
                .iter()
                .map(|&i| {
                    let e = forest.predict_one(&train.records[i].covariates)? - y[i];
                    Ok(e * e)
                })
                .sum::<Result<f64>>()?;
            total += (sse / held.len() as f64).sqrt();
        }
        scores.push((m, total / folds as f64));
    }
    let best = scores
        .iter()
        .fold(None::<(usize, f64)>, |acc, &(m, s)| match acc {
            Some((bm, bs)) if bs < s || (bs == s && bm <= m) => Some((bm, bs)),
            _ => Some((m, s)),
        })
        .map(|(m, _)| m)
        .expect("non-empty candidates");
    Ok(TuneResult { best, scores })
}

// ---------------------------------------------------------------------------
// Flat text serialization

/// One header line, then per tree a `tree <i> <node count>` line followed by
/// one line per node: `<id> split <feature> <threshold> <left> <right>` or
/// `<id> leaf <mean> <count>`.
pub fn format_forest(forest: &Forest) -> String {
    let mut out = String::new();
    let oob = forest
        .oob_rmse
        .map_or_else(|| "NA".to_string(), |v| v.to_string());
    let _ = writeln!(
        out,
        "forest n_features={} ntree={} mtry={} min_leaf={} oob_rmse={}",
        forest.n_features,
        forest.trees.len(),
        forest.mtry,
        forest.min_leaf,
        oob
    );
    for (t, tree) in forest.trees.iter().enumerate() {
        let _ = writeln!(out, "tree {t} {}", tree.nodes.len());
        for (id, node) in tree.nodes.iter().enumerate() {
            let _ = match *node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => writeln!(out, "{id} split {feature} {threshold} {left} {right}"),
                Node::Leaf { value, count } => writeln!(out, "{id} leaf {value} {count}"),
            };
        }
    }
    out
}

pub fn parse_forest(text: &str) -> Result<Forest> {
    let path = std::path::Path::new("<forest>");
    let bad = |line: usize, msg: &str| EngineError::parse(path, line, msg.to_string());
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (ln, header) = lines.next().ok_or_else(|| bad(1, "empty forest"))?;
    let mut fields = std::collections::HashMap::new();
    let mut parts = header.split_whitespace();
    if parts.next() != Some("forest") {
        return Err(bad(ln, "expected `forest` header"));
    }
    for kv in parts {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad(ln, "malformed header field"))?;
        fields.insert(k, v);
    }
    let get = |k: &str| -> Result<usize> {
        fields
            .get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(ln, &format!("missing or bad `{k}`")))
    };
    let n_features = get("n_features")?;
    let ntree = get("ntree")?;
    let mtry = get("mtry")?;
    let min_leaf = get("min_leaf")?;
    let oob_rmse = match fields.get("oob_rmse") {
        Some(&"NA") | None => None,
        Some(v) => Some(v.parse().map_err(|_| bad(ln, "bad oob_rmse"))?),
    };

    let mut trees = Vec::with_capacity(ntree);
    for t in 0..ntree {
        let (ln, line) = lines.next().ok_or_else(|| bad(0, "missing tree"))?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "tree" || parts[1] != t.to_string() {
            return Err(bad(ln, "expected `tree <index> <nodes>`"));
        }
        let count: usize = parts[2].parse().map_err(|_| bad(ln, "bad node count"))?;
        let mut nodes = Vec::with_capacity(count);
        for id in 0..count {
            let (ln, line) = lines.next().ok_or_else(|| bad(0, "missing node"))?;
            let p: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad(ln, "bad integer"));
            let real = |s: &str| s.parse::<f64>().map_err(|_| bad(ln, "bad number"));
            if p.first().map(|s| num(s)).transpose()? != Some(id) {
                return Err(bad(ln, "node ids must be sequential"));
            }
            let node = match (p.get(1).copied(), p.len()) {
                (Some("split"), 6) => {
                    let (left, right) = (num(p[4])?, num(p[5])?);
                    if left >= count || right >= count {
                        return Err(bad(ln, "child id out of range"));
                    }
                    Node::Split {
                        feature: num(p[2])?,
                        threshold: real(p[3])?,
                        left,
                        right,
                    }
                }
                (Some("leaf"), 4) => Node::Leaf {
                    value: real(p[2])?,
                    count: num(p[3])?,
                },
                _ => return Err(bad(ln, "malformed node line")),
            };
            nodes.push(node);
        }
        trees.push(Tree { nodes });
    }
    Ok(Forest {
        trees,
        n_features,
        mtry,
        min_leaf,
        oob_rmse,
        oob_indices: Vec::new(),
        mtry_scores: Vec::new(),
    })
}
