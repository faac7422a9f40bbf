//! Covariate standardization and correlation-matrix PCA with Kaiser
//! component selection.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;

use crate::error::{EngineError, Result};
use crate::grid::{PointTable, Record};
use crate::linalg::symmetric_eigen;

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationStats {
    pub means: Vec<f64>,
    pub stdevs: Vec<f64>,
    /// Columns whose standard deviation was zero and replaced by 1.
    pub constant_columns: Vec<usize>,
}

impl StandardizationStats {
    /// Fit over the rows of a dense matrix.
    pub fn fit_rows(rows: &[Vec<f64>], width: usize) -> Self {
        let n = rows.len() as f64;
        let mut means = vec![0.0; width];
        for row in rows {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut stdevs = vec![0.0; width];
        for row in rows {
            for ((s, v), m) in stdevs.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let mut constant_columns = Vec::new();
        for (j, s) in stdevs.iter_mut().enumerate() {
            *s = (*s / n).sqrt();
            if !(*s > 0.0) {
                *s = 1.0;
                constant_columns.push(j);
            }
        }
        StandardizationStats {
            means,
            stdevs,
            constant_columns,
        }
    }

    pub fn width(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.means.iter().zip(&self.stdevs))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

pub fn standardize_fit(table: &PointTable) -> Result<StandardizationStats> {
    let p = table.width();
    if p == 0 {
        return Err(EngineError::usage("standardization needs at least one covariate"));
    }
    if table.len() < 2 {
        return Err(EngineError::usage("standardization needs at least two records"));
    }
    let rows: Vec<Vec<f64>> = table.records.iter().map(|r| r.covariates.clone()).collect();
    let stats = StandardizationStats::fit_rows(&rows, p);
    for &j in &stats.constant_columns {
        warn!(
            "covariate `{}` is constant; its standardized value is 0",
            table.covariate_names[j]
        );
    }
    Ok(stats)
}

/// A fitted PCA. `components` holds the retained eigenvectors as rows,
/// `eigenvalues` holds all `p` eigenvalues in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub stats: StandardizationStats,
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub retained: usize,
    pub input_names: Vec<String>,
}

/// Kaiser criterion: count of eigenvalues >= 1, floored at 1.
pub fn kaiser_count(eigenvalues: &[f64]) -> usize {
    eigenvalues.iter().filter(|&&l| l >= 1.0).count().max(1)
}

/// How many components a fit keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Retention {
    /// Eigenvalues >= 1, at least one.
    #[default]
    Kaiser,
    All,
    Fixed(usize),
}

/// Correlation-matrix PCA with Kaiser selection.
pub fn pca_fit(table: &PointTable) -> Result<PcaModel> {
    pca_fit_with(table, Retention::Kaiser)
}

/// Correlation-matrix PCA. Constant columns standardize to zero, so they
/// contribute zero eigenvalues and the eigenvalue sum drops below `p` by
/// their count.
pub fn pca_fit_with(table: &PointTable, retention: Retention) -> Result<PcaModel> {
    let p = table.width();
    if p == 0 {
        return Err(EngineError::usage("PCA needs at least one covariate"));
    }
    if table.len() < p + 1 {
        return Err(EngineError::usage(format!(
            "PCA over {p} covariates needs at least {} records, got {}",
            p + 1,
            table.len()
        )));
    }
    let stats = standardize_fit(table)?;
    let z: Vec<Vec<f64>> = table
        .records
        .iter()
        .map(|r| stats.apply(&r.covariates))
        .collect();
    let n = z.len() as f64;
    let mut corr = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in i..p {
            let c = z.iter().map(|row| row[i] * row[j]).sum::<f64>() / n;
            corr[i][j] = c;
            corr[j][i] = c;
        }
    }
    let eig = symmetric_eigen(&corr);
    let retained = match retention {
        Retention::Kaiser => kaiser_count(&eig.values),
        Retention::All => p,
        Retention::Fixed(q) if (1..=p).contains(&q) => q,
        Retention::Fixed(q) => {
            return Err(EngineError::usage(format!("cannot retain {q} of {p} components")))
        }
    };
    Ok(PcaModel {
        stats,
        components: eig.vectors.into_iter().take(retained).collect(),
        eigenvalues: eig.values,
        retained,
        input_names: table.covariate_names.clone(),
    })
}

impl PcaModel {
    pub fn width(&self) -> usize {
        self.stats.width()
    }

    pub fn component_names(&self) -> Vec<String> {
        (1..=self.retained).map(|i| format!("PC{i}")).collect()
    }

    /// Scores of one covariate vector.
    pub fn scores(&self, covariates: &[f64]) -> Vec<f64> {
        let z = self.stats.apply(covariates);
        self.components
            .iter()
            .map(|comp| comp.iter().zip(&z).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Replace covariates by the retained component scores.
pub fn pca_transform(model: &PcaModel, table: &PointTable) -> Result<PointTable> {
    if table.width() != model.width() {
        return Err(EngineError::usage(format!(
            "table has {} covariates, PCA model expects {}",
            table.width(),
            model.width()
        )));
    }
    let records = table
        .records
        .iter()
        .map(|r| Record {
            covariates: model.scores(&r.covariates),
            ..r.clone()
        })
        .collect();
    Ok(PointTable {
        covariate_names: model.component_names(),
        records,
    })
}

fn csv_row(out: &mut String, label: &str, values: &[f64]) {
    out.push_str(label);
    for v in values {
        let _ = write!(out, ",{v}");
    }
    out.push('\n');
}

/// Sidecar text: labeled rows `names`, `means`, `stdevs`, `eigenvalues`,
/// `retained`, then one `component_<i>` row per retained component.
pub fn format_pca_csv(model: &PcaModel) -> String {
    let mut out = String::from("names");
    for n in &model.input_names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    csv_row(&mut out, "means", &model.stats.means);
    csv_row(&mut out, "stdevs", &model.stats.stdevs);
    csv_row(&mut out, "eigenvalues", &model.eigenvalues);
    let _ = writeln!(out, "retained,{}", model.retained);
    for (i, comp) in model.components.iter().enumerate() {
        csv_row(&mut out, &format!("component_{}", i + 1), comp);
    }
    out
}

pub fn write_pca_csv(model: &PcaModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_pca_csv(model)).map_err(|e| EngineError::io(path, e))
}

pub fn read_pca_csv(path: impl AsRef<Path>) -> Result<PcaModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| EngineError::io(path, e))?;
    let mut rows = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut take = |label: &str| -> Result<(usize, Vec<String>)> {
        let (i, line) = rows
            .next()
            .ok_or_else(|| EngineError::parse(path, 0, format!("missing `{label}` row")))?;
        let mut fields = line.split(',').map(|s| s.trim().to_string());
        let head = fields.next().unwrap_or_default();
        if !head.starts_with(label) {
            return Err(EngineError::parse(path, i + 1, format!("expected `{label}` row, found `{head}`")));
        }
        Ok((i + 1, fields.collect()))
    };
    let nums = |line: usize, fields: Vec<String>| -> Result<Vec<f64>> {
        fields
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| EngineError::parse(path, line, format!("bad number `{f}`"))))
            .collect()
    };
    let (_, names) = take("names")?;
    let (l, f) = take("means")?;
    let means = nums(l, f)?;
    let (l, f) = take("stdevs")?;
    let stdevs = nums(l, f)?;
    let (l, f) = take("eigenvalues")?;
    let eigenvalues = nums(l, f)?;
    let (l, f) = take("retained")?;
    let retained = f
        .first()
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| EngineError::parse(path, l, "bad retained count"))?;
    let p = means.len();
    if stdevs.len() != p || eigenvalues.len() != p || names.len() != p {
        return Err(EngineError::parse(path, 0, "inconsistent vector widths"));
    }
    let mut components = Vec::with_capacity(retained);
    for _ in 0..retained {
        let (l, f) = take("component_")?;
        let c = nums(l, f)?;
        if c.len() != p {
            return Err(EngineError::parse(path, l, "component width mismatch"));
        }
        components.push(c);
    }
    let constant_columns = Vec::new();
    Ok(PcaModel {
        stats: StandardizationStats {
            means,
            stdevs,
            constant_columns,
        },
        components,
        eigenvalues,
        retained,
        input_names: names,
    })
}
