//! Lowest eigenpair of a real symmetric operator given only its action.
//!
//! Plain Lanczos with full reorthogonalization against the whole Krylov
//! basis. When the basis reaches its size limit without convergence the
//! iteration restarts from the current Ritz vector. The tridiagonal
//! projection is diagonalized with `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LanczosConfig {
    /// Required residual `||A x - θ x||` of the returned pair.
    pub tol: f64,
    pub max_matvecs: usize,
    pub krylov_dim: usize,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_matvecs: 2000, krylov_dim: 200 }
    }
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub matvecs: usize,
    /// Second-lowest minus lowest Ritz value of the final projection
    /// (`f64::INFINITY` when only one Ritz value was available).
    pub ritz_gap: f64,
}

/// How often (in Krylov steps) the projected problem is re-solved.
const CHECK_EVERY: usize = 10;
const BREAKDOWN: f64 = 1e-12;

pub fn lowest_eigenpair(
    dim: usize,
    apply: impl Fn(&[f64], &mut [f64]),
    start: Vec<f64>,
    cfg: &LanczosConfig,
) -> Result<Eigenpair> {
    if start.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: start.len() });
    }
    if cfg.krylov_dim < 2 || !(cfg.tol > 0.0) {
        return Err(Error::InvalidArgument("Lanczos needs krylov_dim >= 2 and tol > 0".into()));
    }
    let mut v0 = start;
    if normalize(&mut v0) == 0.0 {
        return Err(Error::Numerical("Lanczos start vector is zero".into()));
    }
    let kmax = cfg.krylov_dim.min(dim);
    let mut matvecs = 0usize;
    let mut best_residual = f64::INFINITY;
    let mut w = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];

    loop {
        let mut basis: Vec<Vec<f64>> = vec![v0.clone()];
        let mut alphas: Vec<f64> = Vec::with_capacity(kmax);
        let mut betas: Vec<f64> = Vec::with_capacity(kmax);
        let mut ritz_vector = v0.clone();

        for j in 0..kmax {
            if matvecs >= cfg.max_matvecs {
                return Err(Error::NotConverged { iterations: matvecs, residual: best_residual });
            }
            apply(&basis[j], &mut w);
            matvecs += 1;
            alphas.push(dot(&basis[j], &w));
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(v, &w);
                    axpy(-c, v, &mut w);
                }
            }
            let beta = norm(&w);
            let exhausted = beta < BREAKDOWN || j + 1 == kmax;
            if (j + 1) % CHECK_EVERY == 0 || exhausted {
                let (theta, y, gap) = lowest_ritz(&alphas, &betas);
                let estimate = beta * y[j].abs();
                if estimate <= cfg.tol || exhausted {
                    ritz_vector = combine(&basis, &y);
                    normalize(&mut ritz_vector);
                    apply(&ritz_vector, &mut scratch);
                    matvecs += 1;
                    axpy(-theta, &ritz_vector, &mut scratch);
                    let residual = norm(&scratch);
                    best_residual = best_residual.min(residual);
                    if residual <= cfg.tol {
                        return Ok(Eigenpair { value: theta, vector: ritz_vector, residual, matvecs, ritz_gap: gap });
                    }
                    if exhausted {
                        break;
                    }
                }
            }
            betas.push(beta);
            basis.push(w.iter().map(|x| x / beta).collect());
        }
        v0 = ritz_vector;
    }
}

/// Lowest eigenvalue, its eigenvector in the Krylov basis, and the gap to
/// the next Ritz value.
fn lowest_ritz(alphas: &[f64], betas: &[f64]) -> (f64, Vec<f64>, f64) {
    let k = alphas.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lo = order[0];
    let gap = if k > 1 { eig.eigenvalues[order[1]] - eig.eigenvalues[lo] } else { f64::INFINITY };
    (eig.eigenvalues[lo], eig.eigenvectors.column(lo).iter().copied().collect(), gap)
}

fn combine(basis: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; basis[0].len()];
    for (v, &c) in basis.iter().zip(y) {
        axpy(c, v, &mut out);
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: &mut [f64]) -> f64 {
    let n = norm(a);
    if n > 0.0 {
        a.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn axpy(c: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_operator() {
        let diag: Vec<f64> = (0..300).map(|i| (i as f64 * 0.37).sin() + i as f64 * 0.01).collect();
        let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
        let start: Vec<f64> = (0..300).map(|i| 1.0 + (i as f64).cos() * 0.1).collect();
        let pair = lowest_eigenpair(
            300,
            |x, y| {
                for i in 0..300 {
                    y[i] = diag[i] * x[i];
                }
            },
            start,
            &LanczosConfig::default(),
        )
        .unwrap();
        assert!((pair.value - min).abs() < 1e-8);
        assert!(pair.residual <= 1e-8);
    }

    #[test]
    fn tiny_budget_reports_non_convergence() {
        let n = 500;
        let cfg = LanczosConfig { tol: 1e-14, max_matvecs: 5, krylov_dim: 4 };
        let result = lowest_eigenpair(
            n,
            |x, y| {
                // 1-D Laplacian
                for i in 0..n {
                    y[i] = 2.0 * x[i] - if i > 0 { x[i - 1] } else { 0.0 } - if i + 1 < n { x[i + 1] } else { 0.0 };
                }
            },
            vec![1.0; n],
            &cfg,
        );
        assert!(matches!(result, Err(Error::NotConverged { .. })));
    }
}
