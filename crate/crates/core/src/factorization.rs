//! Truncated SVD factorization `E ≈ F·P` of a source embedding matrix.
//!
//! `F = U_k Σ_k` holds token-specific coordinates and `P = V_kᵀ` is the
//! shared primitive basis with orthonormal rows. Small inputs use a
//! one-sided (Hestenes) Jacobi SVD; large inputs use seeded randomized
//! subspace iteration followed by the same Jacobi routine on the projected
//! matrix.

pub mod oracle;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    /// `|V| × D′` coordinates, `U_k Σ_k`.
    pub coords: Matrix,
    /// `D′ × D` primitive embeddings, `V_kᵀ`.
    pub primitive: Matrix,
    /// Singular values, descending.
    pub sigma: Vec<f64>,
}

impl Factorization {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvdConfig {
    pub seed: u64,
    pub oversample: usize,
    pub power_iters: usize,
    pub max_sweeps: usize,
}

impl Default for SvdConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            oversample: 8,
            power_iters: 4,
            max_sweeps: 100,
        }
    }
}

/// Matrices with at most this many entries are decomposed exactly.
const EXACT_LIMIT: usize = 64 * 64;

pub fn truncated_svd(e: &Matrix, rank: usize, cfg: &SvdConfig) -> Result<Factorization> {
    let (m, n) = e.shape();
    if rank == 0 || rank > m.min(n) {
        return Err(Error::RankOutOfRange {
            rank,
            rows: m,
            dim: n,
        });
    }
    if !e.is_finite() {
        return Err(Error::NonFiniteMatrix);
    }

    let sketch = rank + cfg.oversample;
    let (mut coords, sigma, mut primitive) = if m * n <= EXACT_LIMIT || sketch >= m.min(n) {
        let (f, s, p) = jacobi_svd(e, cfg.max_sweeps)?;
        (truncate_cols(&f, rank), s[..rank].to_vec(), truncate_rows(&p, rank))
    } else {
        randomized_svd(e, rank, sketch, cfg)?
    };
    canonicalize_signs(&mut coords, &mut primitive);
    Ok(Factorization {
        coords,
        primitive,
        sigma,
    })
}

pub fn reconstruct(f: &Factorization) -> Result<Matrix> {
    f.coords.matmul(&f.primitive)
}

fn randomized_svd(
    e: &Matrix,
    rank: usize,
    sketch: usize,
    cfg: &SvdConfig,
) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let n = e.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let omega_data: Vec<f64> = (0..n * sketch)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let omega = Matrix::from_vec(n, sketch, omega_data)?;

    let mut q = orthonormal_columns(&e.matmul(&omega)?);
    for _ in 0..cfg.power_iters {
        let z = orthonormal_columns(&e.t_matmul(&q)?);
        q = orthonormal_columns(&e.matmul(&z)?);
    }
    // B = Qᵀ E is sketch × n and small enough for the exact routine.
    let b = q.t_matmul(e)?;
    let (fb, s, p) = jacobi_svd(&b, cfg.max_sweeps)?;
    let coords = q.matmul(&truncate_cols(&fb, rank))?;
    Ok((coords, s[..rank].to_vec(), truncate_rows(&p, rank)))
}

/// Thin SVD `A = F·P` with `F = UΣ` (`m × r`), `P = Vᵀ` (`r × n`) and
/// `r = min(m, n)`, singular values sorted descending.
pub(crate) fn jacobi_svd(a: &Matrix, max_sweeps: usize) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let (m, n) = a.shape();
    if m >= n {
        // Orthogonalize the columns of A; V accumulates the rotations.
        let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
        let mut v: Vec<Vec<f64>> = (0..n)
            .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        hestenes(&mut cols, &mut v, max_sweeps)?;
        let sigma: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
        let order = descending(&sigma);
        let mut f = Matrix::zeros(m, n);
        let mut p = Matrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            for i in 0..m {
                f[(i, dst)] = cols[src][i];
            }
            p.row_mut(dst).copy_from_slice(&v[src]);
        }
        Ok((f, order.iter().map(|&j| sigma[j]).collect(), p))
    } else {
        // Work on Aᵀ: Aᵀ W = U'Σ, so A = W Σ U'ᵀ.
        let mut cols: Vec<Vec<f64>> = (0..m).map(|i| a.row(i).to_vec()).collect();
        let mut w: Vec<Vec<f64>> = (0..m)
            .map(|j| (0..m).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        hestenes(&mut cols, &mut w, max_sweeps)?;
        let sigma: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
        let order = descending(&sigma);
        let smax = order.first().map_or(0.0, |&j| sigma[j]);
        let tiny = smax * f64::EPSILON * (n as f64);

        let mut f = Matrix::zeros(m, m);
        let mut p = Matrix::zeros(m, n);
        let mut deficient = Vec::new();
        for (dst, &src) in order.iter().enumerate() {
            let s = sigma[src];
            for i in 0..m {
                f[(i, dst)] = w[src][i] * s;
            }
            if s > tiny && s > 0.0 {
                let inv = 1.0 / s;
                for (pv, cv) in p.row_mut(dst).iter_mut().zip(&cols[src]) {
                    *pv = cv * inv;
                }
            } else {
                deficient.push(dst);
            }
        }
        complete_orthonormal_rows(&mut p, &deficient);
        Ok((f, order.iter().map(|&j| sigma[j]).collect(), p))
    }
}

/// One-sided Jacobi: rotates column pairs of `cols` until they are mutually
/// orthogonal, applying the same rotations to `acc`.
fn hestenes(cols: &mut [Vec<f64>], acc: &mut [Vec<f64>], max_sweeps: usize) -> Result<()> {
    let k = cols.len();
    let tol = f64::EPSILON;
    let mut norms: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();
    let mut residual = 0.0;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        residual = 0.0f64;
        for p in 0..k {
            for q in p + 1..k {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(&cols[p], &cols[q]);
                let off = gamma.abs() / (alpha * beta).sqrt();
                residual = residual.max(off);
                if off <= tol {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(cols, p, q, c, s);
                rotate(acc, p, q, c, s);
                norms[p] = dot(&cols[p], &cols[p]);
                norms[q] = dot(&cols[q], &cols[q]);
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(Error::NoConvergence {
        sweeps: max_sweeps,
        residual,
    })
}

fn rotate(v: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = v.split_at_mut(q);
    let (vp, vq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

fn descending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// Fills the listed rows of `p` with unit vectors orthogonal to every other
/// row, drawing candidates from the standard basis.
fn complete_orthonormal_rows(p: &mut Matrix, rows: &[usize]) {
    let n = p.cols();
    let mut settled: Vec<usize> = (0..p.rows()).filter(|r| !rows.contains(r)).collect();
    let mut candidate = 0usize;
    for &r in rows {
        loop {
            assert!(candidate < n, "cannot complete an orthonormal basis");
            let mut v = vec![0.0; n];
            v[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &other in &settled {
                    let proj = dot(&v, p.row(other));
                    axpy(-proj, p.row(other), &mut v);
                }
            }
            let nv = norm(&v);
            if nv > 1e-6 {
                v.iter_mut().for_each(|x| *x /= nv);
                p.row_mut(r).copy_from_slice(&v);
                settled.push(r);
                break;
            }
        }
    }
}

/// Modified Gram-Schmidt, applied twice for stability. Columns that collapse
/// to zero are dropped from the span and left as zero vectors.
fn orthonormal_columns(a: &Matrix) -> Matrix {
    let (m, k) = a.shape();
    let mut cols: Vec<Vec<f64>> = (0..k).map(|j| a.column(j)).collect();
    for _pass in 0..2 {
        for j in 0..k {
            for i in 0..j {
                let proj = dot(&cols[i], &cols[j]);
                let (lo, hi) = cols.split_at_mut(j);
                axpy(-proj, &lo[i], &mut hi[0]);
            }
            let nj = norm(&cols[j]);
            if nj > 1e-300 {
                cols[j].iter_mut().for_each(|x| *x /= nj);
            } else {
                cols[j].iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }
    let mut q = Matrix::zeros(m, k);
    for (j, c) in cols.iter().enumerate() {
        for i in 0..m {
            q[(i, j)] = c[i];
        }
    }
    q
}

fn truncate_cols(m: &Matrix, k: usize) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), k);
    for i in 0..m.rows() {
        out.row_mut(i).copy_from_slice(&m.row(i)[..k]);
    }
    out
}

fn truncate_rows(m: &Matrix, k: usize) -> Matrix {
    Matrix::from_vec(k, m.cols(), m.as_slice()[..k * m.cols()].to_vec()).expect("prefix rows")
}

/// Flips each (F column, P row) pair so the largest-magnitude entry of the P
/// row is non-negative. Ties go to the lowest index.
fn canonicalize_signs(coords: &mut Matrix, primitive: &mut Matrix) {
    for r in 0..primitive.rows() {
        let row = primitive.row(r);
        let mut best = 0;
        for (j, v) in row.iter().enumerate() {
            if v.abs() > row[best].abs() {
                best = j;
            }
        }
        if row[best] < 0.0 {
            primitive.row_mut(r).iter_mut().for_each(|x| *x = -*x);
            for i in 0..coords.rows() {
                coords[(i, r)] = -coords[(i, r)];
            }
        }
    }
}

/// `max |P Pᵀ − I|`
pub fn orthonormality_error(p: &Matrix) -> f64 {
    let gram = p.matmul(&p.transpose()).expect("square gram");
    gram.sub(&Matrix::identity(p.rows())).expect("same shape").max_abs()
}
