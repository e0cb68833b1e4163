//! Excess kurtosis of the idiosyncratic error from two-way within-transformed
//! residuals.
//!
//! The fourth moment of `J ε` mixes `μ₄` and `σ⁴` through the entries of `J`:
//! `E Σ (J ε)_r⁴ = (μ₄ - 3σ⁴) π₂ + 3σ⁴ π₁` with `π₁ = Σ_r J_rr²` and
//! `π₂ = Σ_rs J_rs⁴`. Dividing by `π₂` and removing `3σ̂⁴ π₁/π₂` leaves an
//! estimate of `μ₄ - 3σ⁴`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KurtosisEstimate {
    /// `μ̂₄ - 3σ̂⁴ π₁/π₂`.
    pub kappa_hat: f64,
    pub mu4_hat: f64,
    pub sigma2_hat: f64,
    pub pi1: f64,
    pub pi2: f64,
}

/// Closed forms of `π₁` and `π₂` for an `n x T` panel.
pub fn pi_constants(n: usize, t: usize) -> Result<(f64, f64)> {
    if n < 2 || t < 2 {
        return Err(Error::InvalidArgument(format!(
            "n and T must both be at least 2, got n = {n}, T = {t}"
        )));
    }
    let big_n = (n * t) as f64;
    let n_star = ((n - 1) * (t - 1)) as f64;
    let a = (n - 1) as f64;
    let b = (t - 1) as f64;
    let pi1 = n_star * n_star / big_n;
    let pi2 = n_star * (n_star.powi(3) + a.powi(3) + b.powi(3) + 1.0) / big_n.powi(3);
    Ok((pi1, pi2))
}

/// Estimates the excess kurtosis from residuals `ε̂*` stacked like the panel.
pub fn excess_kurtosis(residuals_star: &[f64], n: usize, t: usize) -> Result<KurtosisEstimate> {
    let (pi1, pi2) = pi_constants(n, t)?;
    if residuals_star.len() != n * t {
        return Err(Error::DimensionMismatch {
            what: "residual length",
            expected: n * t,
            found: residuals_star.len(),
        });
    }
    let n_star = ((n - 1) * (t - 1)) as f64;
    let (s2, s4) = residuals_star.iter().fold((0.0, 0.0), |(s2, s4), e| {
        let e2 = e * e;
        (s2 + e2, s4 + e2 * e2)
    });
    let mu4_hat = s4 / pi2;
    let sigma2_hat = s2 / n_star;
    let kappa_hat = mu4_hat - 3.0 * sigma2_hat * sigma2_hat * (pi1 / pi2);
    Ok(KurtosisEstimate {
        kappa_hat,
        mu4_hat,
        sigma2_hat,
        pi1,
        pi2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{build_j, double_demean};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn brute_force(n: usize, t: usize) -> (f64, f64) {
        let j = build_j(n, t).unwrap();
        let pi1 = j.diagonal().iter().map(|v| v * v).sum();
        let pi2 = j.iter().map(|v| v.powi(4)).sum();
        (pi1, pi2)
    }

    #[test]
    fn smallest_panel() {
        let (pi1, pi2) = pi_constants(2, 2).unwrap();
        assert!((pi1 - 0.25).abs() < 1e-15);
        assert!((pi2 - 1.0 / 16.0).abs() < 1e-15);
        let (b1, b2) = brute_force(2, 2);
        assert!((b1 - 0.25).abs() < 1e-15);
        assert!((b2 - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn closed_forms_match_dense_sums() {
        let (pi1, pi2) = pi_constants(3, 5).unwrap();
        let (b1, b2) = brute_force(3, 5);
        assert!((pi1 - b1).abs() <= 1e-12 * b1);
        assert!((pi2 - b2).abs() <= 1e-12 * b2);
        assert!(pi_constants(1, 5).is_err());
        assert!(pi_constants(3, 1).is_err());
    }

    #[test]
    fn zero_residuals() {
        let k = excess_kurtosis(&[0.0; 12], 3, 4).unwrap();
        assert_eq!(k.kappa_hat, 0.0);
        assert!(excess_kurtosis(&[0.0; 11], 3, 4).is_err());
    }

    #[test]
    fn sign_and_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, t) = (6, 9);
        let raw: Vec<f64> = (0..n * t).map(|_| StandardNormal.sample(&mut rng)).collect();
        let e = double_demean(&raw, n, t);
        let base = excess_kurtosis(&e, n, t).unwrap();
        let flipped: Vec<f64> = e.iter().map(|v| -v).collect();
        assert_eq!(excess_kurtosis(&flipped, n, t).unwrap(), base);
        // powers of two keep the scaling exact
        let c = 2.0f64;
        let scaled: Vec<f64> = e.iter().map(|v| c * v).collect();
        let s = excess_kurtosis(&scaled, n, t).unwrap();
        assert_eq!(s.mu4_hat, base.mu4_hat * c.powi(4));
        assert_eq!(s.sigma2_hat * s.sigma2_hat, base.sigma2_hat * base.sigma2_hat * c.powi(4));
        assert_eq!(s.kappa_hat, base.kappa_hat * c.powi(4));
    }

    #[test]
    fn normal_errors_are_mesokurtic() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (n, t) = (20, 60);
        let reps = 100;
        let mean: f64 = (0..reps)
            .map(|_| {
                let raw: Vec<f64> = (0..n * t).map(|_| StandardNormal.sample(&mut rng)).collect();
                excess_kurtosis(&double_demean(&raw, n, t), n, t).unwrap().kappa_hat
            })
            .sum::<f64>()
            / reps as f64;
        assert!(mean.abs() < 0.15, "mean kappa {mean}");
    }
}
