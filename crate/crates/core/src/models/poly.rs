//! Least-squares polynomials over the full monomial basis of bounded total
//! degree.

use crate::grid::shifted_mean;
use crate::linalg::lstsq_pinv;

/// Number of monomials of total degree <= `degree` in `dim` variables,
/// i.e. C(dim + degree, degree).
pub fn monomial_count(dim: usize, degree: usize) -> usize {
    let mut c: u128 = 1;
    for i in 1..=degree as u128 {
        c = c * (dim as u128 + i) / i;
    }
    c.min(usize::MAX as u128) as usize
}

/// Exponent vectors ordered by total degree, then lexicographically
/// descending within a degree. The first entry is the constant term.
pub fn monomial_exponents(dim: usize, degree: usize) -> Vec<Vec<u32>> {
    fn fill(dim: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() + 1 == dim {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=left).rev() {
            prefix.push(e);
            fill(dim, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::with_capacity(monomial_count(dim, degree));
    if dim == 0 {
        out.push(Vec::new());
        return out;
    }
    for total in 0..=degree as u32 {
        fill(dim, total, &mut Vec::with_capacity(dim), &mut out);
    }
    out
}

fn monomials(x: &[f64], exponents: &[Vec<u32>]) -> Vec<f64> {
    exponents
        .iter()
        .map(|e| x.iter().zip(e).map(|(v, &p)| v.powi(p as i32)).product())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyFit {
    pub exponents: Vec<Vec<u32>>,
    pub coefficients: Vec<f64>,
    pub rank: usize,
    pub rank_deficient: bool,
}

impl PolyFit {
    pub fn degree(&self) -> usize {
        self.exponents.last().map_or(0, |e| e.iter().sum::<u32>() as usize)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        eval_polynomial(&self.exponents, &self.coefficients, x)
    }
}

pub fn eval_polynomial(exponents: &[Vec<u32>], coefficients: &[f64], x: &[f64]) -> f64 {
    monomials(x, exponents)
        .iter()
        .zip(coefficients)
        .map(|(m, c)| m * c)
        .sum()
}

/// Least-squares polynomial of total degree <= `degree` through the points.
///
/// Degree 0 returns the mean of the targets. Rank-deficient systems get the
/// minimum-norm pseudo-inverse solution and are flagged.
pub fn fit_polynomial(points: &[Vec<f64>], targets: &[f64], degree: usize) -> PolyFit {
    let dim = points.first().map_or(0, Vec::len);
    let exponents = monomial_exponents(dim, degree);
    if degree == 0 || dim == 0 {
        let mean = shifted_mean(targets.iter().copied()).unwrap_or(0.0);
        return PolyFit {
            exponents: monomial_exponents(dim, 0),
            coefficients: vec![mean],
            rank: usize::from(!targets.is_empty()),
            rank_deficient: targets.is_empty(),
        };
    }
    let design: Vec<Vec<f64>> = points.iter().map(|p| monomials(p, &exponents)).collect();
    let (coefficients, rank) = lstsq_pinv(&design, targets);
    PolyFit {
        rank_deficient: rank < exponents.len(),
        exponents,
        coefficients,
        rank,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Normal equations solved by Gaussian elimination with partial pivoting.
    fn normal_equations(points: &[Vec<f64>], targets: &[f64], degree: usize) -> Vec<f64> {
        let exps = monomial_exponents(points[0].len(), degree);
        let m = exps.len();
        let rows: Vec<Vec<f64>> = points.iter().map(|p| monomials(p, &exps)).collect();
        let mut a = vec![vec![0.0; m + 1]; m];
        for (row, z) in rows.iter().zip(targets) {
            for i in 0..m {
                for j in 0..m {
                    a[i][j] += row[i] * row[j];
                }
                a[i][m] += row[i] * z;
            }
        }
        for col in 0..m {
            let piv = (col..m).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()).unwrap();
            a.swap(col, piv);
            for r in 0..m {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=m {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        (0..m).map(|i| a[i][m] / a[i][i]).collect()
    }

    fn rss(points: &[Vec<f64>], targets: &[f64], exps: &[Vec<u32>], coef: &[f64]) -> f64 {
        points.iter().zip(targets).map(|(p, z)| (eval_polynomial(exps, coef, p) - z).powi(2)).sum()
    }

    #[test]
    fn monomial_counts() {
        assert_eq!(monomial_count(2, 0), 1);
        assert_eq!(monomial_count(2, 1), 3);
        assert_eq!(monomial_count(2, 2), 6);
        assert_eq!(monomial_count(2, 3), 10);
        assert_eq!(monomial_count(5, 2), 21);
        for dim in 1..5 {
            for d in 0..5 {
                assert_eq!(monomial_exponents(dim, d).len(), monomial_count(dim, d));
            }
        }
        assert_eq!(monomial_exponents(2, 1), vec![vec![0, 0], vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn degree_zero_is_mean() {
        let pts = vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![5.0, 1.0]];
        let fit = fit_polynomial(&pts, &[0.1, 0.2, 0.6], 0);
        assert_eq!(fit.coefficients.len(), 1);
        assert!((fit.coefficients[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn degree_one_interpolates_three_points() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let z = [0.5, 1.5, -0.25];
        let fit = fit_polynomial(&pts, &z, 1);
        assert!(!fit.rank_deficient);
        for (p, zi) in pts.iter().zip(&z) {
            assert!((fit.eval(p) - zi).abs() < 1e-13);
        }
    }

    #[test]
    fn underdetermined_is_flagged() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let fit = fit_polynomial(&pts, &[1.0, 2.0, 3.0], 2);
        assert!(fit.rank_deficient);
        for (p, z) in pts.iter().zip([1.0, 2.0, 3.0]) {
            assert!((fit.eval(p) - z).abs() < 1e-12);
        }
    }

    #[test]
    fn least_squares_optimality_against_normal_equations() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let pts: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
            let z: Vec<f64> = pts
                .iter()
                .map(|p| 0.3 + p[0] - 2.0 * p[1] * p[1] + 0.5 * p[0] * p[1] + rng.random_range(-0.05..0.05))
                .collect();
            let fit = fit_polynomial(&pts, &z, 2);
            let oracle = normal_equations(&pts, &z, 2);
            let ours = rss(&pts, &z, &fit.exponents, &fit.coefficients);
            let theirs = rss(&pts, &z, &fit.exponents, &oracle);
            assert!(ours <= theirs + 1e-8);
            for (a, b) in fit.coefficients.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-8);
            }
            // any perturbed competitor does no better
            let mut other = fit.coefficients.clone();
            let j = rng.random_range(0..other.len());
            other[j] += 0.01;
            assert!(ours <= rss(&pts, &z, &fit.exponents, &other));
        }
    }
}
