//! Small dense linear algebra: symmetric eigendecomposition and SVD-based
//! least squares. Matrices are row-major `Vec<Vec<f64>>`; the problems here
//! are at most a few dozen columns wide.

/// Eigenpairs of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Descending.
    pub values: Vec<f64>,
    /// `vectors[i]` is the unit eigenvector of `values[i]`.
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

const JACOBI_OFFDIAG_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi rotations until every off-diagonal entry is below 1e-12.
///
/// Each eigenvector's largest-magnitude entry is made positive.
pub fn symmetric_eigen(matrix: &[Vec<f64>]) -> SymmetricEigen {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut sweeps = 0;
    while sweeps < JACOBI_MAX_SWEEPS {
        let off = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j].abs())
            .fold(0.0, f64::max);
        if off < JACOBI_OFFDIAG_TOL {
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut col: Vec<f64> = v.iter().map(|row| row[i]).collect();
            let lead = col
                .iter()
                .copied()
                .enumerate()
                .fold((0, 0.0f64), |best, (k, x)| if x.abs() > best.1.abs() { (k, x) } else { best });
            if lead.1 < 0.0 {
                col.iter_mut().for_each(|x| *x = -*x);
            }
            col
        })
        .collect();
    SymmetricEigen {
        values,
        vectors,
        sweeps,
    }
}

/// Thin SVD `m = u * diag(s) * v^T` of a tall matrix (rows >= cols) by
/// one-sided Jacobi. `u` is rows x cols, `v` is cols x cols.
struct Svd {
    u: Vec<Vec<f64>>,
    s: Vec<f64>,
    v: Vec<Vec<f64>>,
}

fn svd_tall(m: &[Vec<f64>]) -> Svd {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    // work on columns
    let mut w: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| m[i][j]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|i| (0..cols).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _ in 0..60 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = w[p].iter().map(|x| x * x).sum();
                let beta: f64 = w[q].iter().map(|x| x * x).sum();
                let gamma: f64 = w[p].iter().zip(&w[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = w.split_at_mut(q);
                let (wp, wq) = (&mut lo[p], &mut hi[0]);
                for (x, y) in wp.iter_mut().zip(wq.iter_mut()) {
                    let (a, b) = (*x, *y);
                    *x = c * a - s * b;
                    *y = s * a + c * b;
                }
                for row in v.iter_mut() {
                    let (a, b) = (row[p], row[q]);
                    row[p] = c * a - s * b;
                    row[q] = s * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let s: Vec<f64> = w.iter().map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let u = (0..rows)
        .map(|i| {
            (0..cols)
                .map(|j| if s[j] > 0.0 { w[j][i] / s[j] } else { 0.0 })
                .collect()
        })
        .collect();
    Svd { u, s, v }
}

/// Minimum-norm least-squares solution of `a x = b` via the SVD
/// pseudo-inverse. Singular values below `1e-10 * max` are treated as zero.
/// Returns the solution and the numerical rank.
pub fn lstsq_pinv(a: &[Vec<f64>], b: &[f64]) -> (Vec<f64>, usize) {
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return (vec![0.0; cols], 0);
    }
    if rows >= cols {
        let Svd { u, s, v } = svd_tall(a);
        let smax = s.iter().copied().fold(0.0, f64::max);
        let cutoff = 1e-10 * smax;
        let mut x = vec![0.0; cols];
        let mut rank = 0;
        for j in 0..cols {
            if s[j] <= cutoff || s[j] == 0.0 {
                continue;
            }
            rank += 1;
            let coef = (0..rows).map(|i| u[i][j] * b[i]).sum::<f64>() / s[j];
            for (k, xk) in x.iter_mut().enumerate() {
                *xk += v[k][j] * coef;
            }
        }
        (x, rank)
    } else {
        // a^T = U S V^T  =>  a = V S U^T,  pinv(a) = U S^+ V^T
        let at: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| a[i][j]).collect()).collect();
        let Svd { u, s, v } = svd_tall(&at);
        let smax = s.iter().copied().fold(0.0, f64::max);
        let cutoff = 1e-10 * smax;
        let mut x = vec![0.0; cols];
        let mut rank = 0;
        for j in 0..rows {
            if s[j] <= cutoff || s[j] == 0.0 {
                continue;
            }
            rank += 1;
            let coef = (0..rows).map(|i| v[i][j] * b[i]).sum::<f64>() / s[j];
            for (k, xk) in x.iter_mut().enumerate() {
                *xk += u[k][j] * coef;
            }
        }
        (x, rank)
    }
}
