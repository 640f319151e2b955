//! Reference SVD for small matrices, kept independent of the production
//! path: it diagonalizes the Gram matrix with two-sided cyclic Jacobi
//! rotations instead of orthogonalizing columns.

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, Matrix};

const MAX_DIM: usize = 64;
const MAX_SWEEPS: usize = 200;

/// Thin SVD `E = U diag(σ) Vᵀ` with `r = min(rows, cols)` components.
#[derive(Debug, Clone)]
pub struct OracleSvd {
    /// `rows × r`, orthonormal columns.
    pub u: Matrix,
    pub sigma: Vec<f64>,
    /// `cols × r`, orthonormal columns.
    pub v: Matrix,
    /// Columns of `U diag(σ)` computed directly from `E`, for accurate
    /// low-rank products.
    us: Matrix,
}

impl OracleSvd {
    /// Best rank-`k` approximation `Σ_{j<k} σ_j u_j v_jᵀ`.
    pub fn best_rank_k(&self, k: usize) -> Matrix {
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut out = Matrix::zeros(m, n);
        for j in 0..k.min(self.sigma.len()) {
            let vj = self.v.column(j);
            for i in 0..m {
                axpy(self.us[(i, j)], &vj, out.row_mut(i));
            }
        }
        out
    }

    pub fn reconstruct(&self) -> Matrix {
        self.best_rank_k(self.sigma.len())
    }
}

pub fn oracle_svd_small(e: &Matrix) -> Result<OracleSvd> {
    let (m, n) = e.shape();
    if m > MAX_DIM || n > MAX_DIM {
        return Err(Error::OracleTooLarge { rows: m, dim: n });
    }
    if m >= n {
        let (v, sigma, us) = from_right_vectors(e)?;
        let u = normalize_columns(&us, &sigma);
        Ok(OracleSvd { u, sigma, v, us })
    } else {
        // Eᵀ = V Σ Uᵀ: swap roles.
        let et = e.transpose();
        let (u, sigma, vs) = from_right_vectors(&et)?;
        let v = normalize_columns(&vs, &sigma);
        let mut us = u.clone();
        for j in 0..sigma.len() {
            for i in 0..m {
                us[(i, j)] *= sigma[j];
            }
        }
        Ok(OracleSvd { u, sigma, v, us })
    }
}

/// For tall `a` (`rows ≥ cols`): eigenvectors `V` of `aᵀa`, singular values
/// `‖a v_j‖`, and the products `a v_j`.
fn from_right_vectors(a: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let n = a.cols();
    let gram = a.t_matmul(a)?;
    let (evals, evecs) = symmetric_jacobi(gram)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| evals[y].total_cmp(&evals[x]));

    let mut v = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            v[(i, dst)] = evecs[(i, src)];
        }
    }
    let av = a.matmul(&v)?;
    let sigma: Vec<f64> = (0..n).map(|j| norm(&av.column(j))).collect();
    Ok((v, sigma, av))
}

/// Cyclic two-sided Jacobi: `A ← JᵀAJ` until the off-diagonal mass is at
/// rounding level. Returns eigenvalues and eigenvectors (as columns).
fn symmetric_jacobi(mut a: Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = a.rows();
    let mut v = Matrix::identity(n);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                // Entries below rounding relative to the diagonal are zeroed.
                if apq.abs() <= 0.5 * f64::EPSILON * (a[(p, p)] * a[(q, q)]).abs().sqrt()
                    || apq.abs() < f64::MIN_POSITIVE
                {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            return Ok(((0..n).map(|i| a[(i, i)]).collect(), v));
        }
    }
    Err(Error::NoConvergence {
        sweeps: MAX_SWEEPS,
        residual: f64::NAN,
    })
}

/// Divides column `j` by `sigma[j]`; columns with negligible σ are replaced
/// by unit vectors orthogonal to the others.
fn normalize_columns(scaled: &Matrix, sigma: &[f64]) -> Matrix {
    let (m, r) = scaled.shape();
    let smax = sigma.iter().cloned().fold(0.0, f64::max);
    let tiny = smax * 1e-13;
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(r);
    let mut pending = Vec::new();
    for j in 0..r {
        if sigma[j] > tiny && sigma[j] > 0.0 {
            cols.push(scaled.column(j).iter().map(|x| x / sigma[j]).collect());
        } else {
            cols.push(vec![0.0; m]);
            pending.push(j);
        }
    }
    let mut e = 0usize;
    for j in pending {
        loop {
            let mut cand = vec![0.0; m];
            cand[e] = 1.0;
            e += 1;
            for _ in 0..2 {
                for (k, c) in cols.iter().enumerate() {
                    if k != j {
                        let p = dot(&cand, c);
                        axpy(-p, c, &mut cand);
                    }
                }
            }
            let nc = norm(&cand);
            if nc > 1e-6 {
                cols[j] = cand.iter().map(|x| x / nc).collect();
                break;
            }
        }
    }
    let mut out = Matrix::zeros(m, r);
    for (j, c) in cols.iter().enumerate() {
        for i in 0..m {
            out[(i, j)] = c[i];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn diagonal() {
        let s = oracle_svd_small(&Matrix::diag(&[2.0, 1.0])).unwrap();
        assert!((s.sigma[0] - 2.0).abs() < 1e-14 && (s.sigma[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn permutation_has_unit_singular_values() {
        let s = oracle_svd_small(&Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]])).unwrap();
        assert!((s.sigma[0] - 1.0).abs() < 1e-14 && (s.sigma[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_reconstruction_tall_and_wide() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for (m, n) in [(6, 4), (4, 6)] {
            let data = (0..m * n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let e = Matrix::from_vec(m, n, data).unwrap();
            let s = oracle_svd_small(&e).unwrap();
            let err = e.sub(&s.reconstruct()).unwrap().frobenius_norm();
            assert!(err < 1e-10, "{m}x{n}: {err}");
            let utu = s.u.t_matmul(&s.u).unwrap();
            assert!(utu.sub(&Matrix::identity(4)).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn size_cap() {
        assert!(matches!(
            oracle_svd_small(&Matrix::zeros(65, 2)),
            Err(Error::OracleTooLarge { .. })
        ));
    }
}
