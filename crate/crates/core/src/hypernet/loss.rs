//! Training objective: in-batch contrastive loss over cosine similarities
//! plus a per-dimension L1 term, mixed by `λ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, NORM_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the contrastive term.
    pub lambda: f64,
    /// Softmax temperature `τ`.
    pub temperature: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            temperature: 0.5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} not in [0, 1]", self.lambda)));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        Ok(())
    }
}

fn check_shapes(targets: &[Vec<f64>], preds: &[Vec<f64>]) -> Result<()> {
    if targets.len() != preds.len() || targets.is_empty() {
        return Err(Error::Shape(format!(
            "{} targets vs {} predictions",
            targets.len(),
            preds.len()
        )));
    }
    let d = targets[0].len();
    if targets.iter().chain(preds).any(|v| v.len() != d) {
        return Err(Error::Shape("ragged batch".into()));
    }
    Ok(())
}

pub fn contrastive_loss(targets: &[Vec<f64>], preds: &[Vec<f64>], tau: f64) -> Result<f64> {
    contrastive_with_grad(targets, preds, tau, false).map(|(l, _)| l)
}

pub fn l1_loss(targets: &[Vec<f64>], preds: &[Vec<f64>]) -> Result<f64> {
    l1_with_grad(targets, preds, false).map(|(l, _)| l)
}

/// `λ·contrastive + (1 − λ)·l1`. Terms with zero weight are skipped, so
/// `λ = 0` also accepts a batch of one.
pub fn combined_loss(targets: &[Vec<f64>], preds: &[Vec<f64>], cfg: &LossConfig) -> Result<f64> {
    combined_with_grad(targets, preds, cfg, false).map(|(l, _)| l)
}

pub fn mix(contrastive: f64, l1: f64, lambda: f64) -> f64 {
    lambda * contrastive + (1.0 - lambda) * l1
}

/// Loss value and, when `want_grad`, its gradient with respect to each
/// prediction.
pub fn combined_with_grad(
    targets: &[Vec<f64>],
    preds: &[Vec<f64>],
    cfg: &LossConfig,
    want_grad: bool,
) -> Result<(f64, Vec<Vec<f64>>)> {
    cfg.validate()?;
    check_shapes(targets, preds)?;
    let d = targets[0].len();
    let mut grad = vec![vec![0.0; d]; preds.len()];
    let mut loss = 0.0;
    if cfg.lambda > 0.0 {
        let (lc, gc) = contrastive_with_grad(targets, preds, cfg.temperature, want_grad)?;
        loss += cfg.lambda * lc;
        for (g, gi) in grad.iter_mut().zip(&gc) {
            crate::linalg::axpy(cfg.lambda, gi, g);
        }
    }
    if cfg.lambda < 1.0 {
        let (l1, g1) = l1_with_grad(targets, preds, want_grad)?;
        loss += (1.0 - cfg.lambda) * l1;
        for (g, gi) in grad.iter_mut().zip(&g1) {
            crate::linalg::axpy(1.0 - cfg.lambda, gi, g);
        }
    }
    Ok((loss, grad))
}

pub(crate) fn contrastive_with_grad(
    targets: &[Vec<f64>],
    preds: &[Vec<f64>],
    tau: f64,
    want_grad: bool,
) -> Result<(f64, Vec<Vec<f64>>)> {
    check_shapes(targets, preds)?;
    let b = targets.len();
    if b < 2 {
        return Err(Error::Shape("contrastive loss needs a batch of at least 2".into()));
    }
    let d = targets[0].len();
    let t_norm: Vec<f64> = targets.iter().map(|t| norm(t)).collect();
    let p_norm: Vec<f64> = preds.iter().map(|p| norm(p)).collect();
    let degenerate = t_norm.iter().chain(&p_norm).filter(|&&n| n <= NORM_EPS).count();
    if degenerate > 0 {
        log::warn!("{degenerate} zero-norm vectors in contrastive batch; cosine clamped");
    }

    let mut loss = 0.0;
    let mut grad = vec![vec![0.0; d]; if want_grad { b } else { 0 }];
    let mut logits = vec![0.0; b];
    let mut cos = vec![0.0; b];
    for i in 0..b {
        let np = p_norm[i].max(NORM_EPS);
        for k in 0..b {
            let nt = t_norm[k].max(NORM_EPS);
            cos[k] = dot(&targets[k], &preds[i]) / (nt * np);
            logits[k] = cos[k] / tau;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - logits[i];

        if want_grad {
            // d/dF̂_i of cos(F_k, F̂_i), with the clamped norm held fixed
            // when it is below NORM_EPS.
            let g = &mut grad[i];
            for k in 0..b {
                let p_ik = (logits[k] - lse).exp();
                let coeff = (p_ik - if k == i { 1.0 } else { 0.0 }) / (tau * b as f64);
                let nt = t_norm[k].max(NORM_EPS);
                for (gj, (tj, pj)) in g.iter_mut().zip(targets[k].iter().zip(&preds[i])) {
                    let mut dcos = tj / (nt * np);
                    if p_norm[i] > NORM_EPS {
                        dcos -= cos[k] * pj / (np * np);
                    }
                    *gj += coeff * dcos;
                }
            }
        }
    }
    Ok((loss / b as f64, grad))
}

pub(crate) fn l1_with_grad(
    targets: &[Vec<f64>],
    preds: &[Vec<f64>],
    want_grad: bool,
) -> Result<(f64, Vec<Vec<f64>>)> {
    check_shapes(targets, preds)?;
    let b = targets.len() as f64;
    let d = targets[0].len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::new();
    for (t, p) in targets.iter().zip(preds) {
        loss += t.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() / d;
        if want_grad {
            // Subgradient with sign(0) = 0.
            grad.push(
                t.iter()
                    .zip(p)
                    .map(|(ti, pi)| {
                        let diff = pi - ti;
                        if diff > 0.0 {
                            1.0 / (b * d)
                        } else if diff < 0.0 {
                            -1.0 / (b * d)
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            );
        }
    }
    Ok((loss / b, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e2() -> Vec<Vec<f64>> {
        vec![vec![1.0, 0.0], vec![0.0, 1.0]]
    }

    #[test]
    fn contrastive_orthonormal_golden_values() {
        let f = e2();
        let good = contrastive_loss(&f, &f, 0.5).unwrap();
        assert!((good - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-12);
        assert!((good - 0.126928).abs() < 1e-6);

        let swapped = vec![f[1].clone(), f[0].clone()];
        let bad = contrastive_loss(&f, &swapped, 0.5).unwrap();
        assert!((bad - (1.0 + 2.0f64.exp()).ln()).abs() < 1e-12);
        assert!((bad - 2.126928).abs() < 1e-6);
    }

    #[test]
    fn uniform_similarity_gives_log_batch() {
        let u = vec![0.6, 0.8];
        for b in [2usize, 3, 7] {
            let batch = vec![u.clone(); b];
            for tau in [0.1, 0.5, 2.0] {
                let l = contrastive_loss(&batch, &batch, tau).unwrap();
                assert!((l - (b as f64).ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn contrastive_decreases_with_temperature() {
        let f = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let mut prev = f64::INFINITY;
        for tau in [2.0, 1.0, 0.5, 0.25, 0.1] {
            let l = contrastive_loss(&f, &f, tau).unwrap();
            assert!(l < prev && l > 0.0);
            prev = l;
        }
    }

    #[test]
    fn contrastive_rejects_singleton_batch() {
        assert!(contrastive_loss(&[vec![1.0]], &[vec![1.0]], 0.5).is_err());
    }

    #[test]
    fn zero_norm_prediction_is_guarded() {
        let f = e2();
        let p = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
        let (l, g) = contrastive_with_grad(&f, &p, 0.5, true).unwrap();
        assert!(l.is_finite());
        assert!(g.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn l1_values() {
        let f = e2();
        assert_eq!(l1_loss(&f, &f).unwrap(), 0.0);
        assert_eq!(l1_loss(&[vec![1.0, 0.0]], &[vec![0.0, 0.0]]).unwrap(), 0.5);
        let t = vec![vec![1.0, -2.0, 0.5]];
        let p = vec![vec![0.0, 1.0, 0.25]];
        let base = l1_loss(&t, &p).unwrap();
        let scale = |v: &Vec<Vec<f64>>, c: f64| -> Vec<Vec<f64>> {
            v.iter().map(|r| r.iter().map(|x| x * c).collect()).collect()
        };
        let scaled = l1_loss(&scale(&t, -3.0), &scale(&p, -3.0)).unwrap();
        assert!((scaled - 3.0 * base).abs() < 1e-12);
    }

    #[test]
    fn combined_endpoints_and_mix() {
        let f = e2();
        let p = vec![vec![0.9, 0.2], vec![-0.1, 0.7]];
        let lc = contrastive_loss(&f, &p, 0.5).unwrap();
        let l1 = l1_loss(&f, &p).unwrap();
        let at = |lambda| {
            combined_loss(&f, &p, &LossConfig { lambda, temperature: 0.5 }).unwrap()
        };
        assert_eq!(at(1.0), lc);
        assert_eq!(at(0.0), l1);
        assert!((at(0.1) - mix(lc, l1, 0.1)).abs() < 1e-15);
        assert!((mix(0.126928, 0.5, 0.1) - 0.462693).abs() < 1e-6);
    }

    #[test]
    fn l1_gradient_is_zero_at_optimum() {
        let f = e2();
        let (_, g) = l1_with_grad(&f, &f, true).unwrap();
        assert!(g.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let t = vec![vec![0.3, -1.2, 0.8], vec![1.1, 0.4, -0.2], vec![-0.5, 0.9, 0.6]];
        let p = vec![vec![0.2, -0.7, 1.3], vec![0.6, 0.1, -0.9], vec![-0.4, 1.4, 0.05]];
        for lambda in [0.0, 0.1, 1.0] {
            let cfg = LossConfig { lambda, temperature: 0.25 };
            let (_, g) = combined_with_grad(&t, &p, &cfg, true).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let h = 1e-6;
                    let mut up = p.clone();
                    up[i][j] += h;
                    let mut dn = p.clone();
                    dn[i][j] -= h;
                    let fd = (combined_loss(&t, &up, &cfg).unwrap()
                        - combined_loss(&t, &dn, &cfg).unwrap())
                        / (2.0 * h);
                    assert!((fd - g[i][j]).abs() < 1e-7, "λ={lambda} [{i}][{j}] {fd} vs {}", g[i][j]);
                }
            }
        }
    }
}
