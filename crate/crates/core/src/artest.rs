//! Anderson-Rubin statistics for `H0: α_ij = 0` for all potential dyads.
//!
//! Without fixed effects the statistic is the jackknife form
//! `ũ'(P - D)ũ / (√K √Φ̃)` with a heteroskedasticity-robust `Φ̃`. With
//! individual and time effects the residuals come from the within-transformed
//! regression and the quadratic form is re-centered by its null mean:
//! `ε̂*'(P* - (K*/N*) I) ε̂* / (√K* √Φ̂*)`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::instruments::{assemble_q, build_z, IvSpec, PeerStructure, RANK_TOL};
use crate::kurtosis::{excess_kurtosis, KurtosisEstimate};
use crate::panel::{double_demean_in_place, within_transform, Panel, TransformedPanel};
use crate::projection::{
    dot, kronecker_fe_basis, orthonormalize, quad_form_p, quad_form_p_minus_d, trace_phi_crudu,
    GreedyBasis, ProjectionBundle,
};

/// Residual norms at or below this fraction of the outcome norm are treated
/// as exactly zero: the statistic is then reported as 0.
const ZERO_RESIDUAL_TOL: f64 = 1e-10;

/// A transformed regressor whose norm falls below this fraction of its raw
/// norm was absorbed by the fixed effects.
const ABSORBED_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Jackknife statistic without fixed effects.
    JackknifeNoFe,
    /// Fixed effects, kurtosis-corrected variance.
    FeJl,
    /// Fixed effects, `Φ = 2σ⁴`.
    FeDin,
    /// Fixed effects, `Φ = 2σ⁴(1 - λ)`.
    FeAg,
}

impl Variant {
    pub const FE: [Variant; 3] = [Variant::FeDin, Variant::FeAg, Variant::FeJl];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::JackknifeNoFe => "jackknife",
            Variant::FeJl => "T_JL",
            Variant::FeDin => "T_DIN",
            Variant::FeAg => "T_AG",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArOptions {
    /// Relative tolerance for dropping dependent instrument columns.
    pub rank_tol: f64,
    /// Test size used for the reported decisions.
    pub level: f64,
    /// Use greedy column selection even when the Kronecker shortcut applies.
    pub force_generic: bool,
}

impl Default for ArOptions {
    fn default() -> Self {
        Self {
            rank_tol: RANK_TOL,
            level: 0.05,
            force_generic: false,
        }
    }
}

/// Chi-square rule: reject iff `√(2K*) AR + K* ≥ q_{K*-L}(1 - τ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChisqDecision {
    pub transformed: f64,
    pub critical: f64,
    pub df: usize,
    pub p_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub variant: Variant,
    /// Standardized AR value.
    pub statistic: f64,
    /// Centered quadratic form before standardization.
    pub quad_form: f64,
    pub k: usize,
    pub l: usize,
    pub n_obs: usize,
    /// `(n-1)(T-1)` on the fixed-effects path, `N` otherwise.
    pub n_star: usize,
    pub phi_hat: f64,
    pub sigma2_hat: f64,
    pub kurtosis_hat: Option<f64>,
    /// `K / N`.
    pub lambda: f64,
    /// Upper-tail normal p-value.
    pub p_normal: f64,
    pub p_chisq: Option<f64>,
    pub chisq: Option<ChisqDecision>,
    pub level: f64,
    pub reject_normal: bool,
    pub max_leverage: f64,
    pub leverage_warning: bool,
    pub warnings: Vec<String>,
}

impl TestResult {
    /// Reported decision: the chi-square rule when available, else the
    /// normal rule.
    pub fn reject(&self) -> bool {
        self.chisq.map_or(self.reject_normal, |c| c.reject)
    }
}

/// OLS residuals of `yv` on the columns of `xm`.
pub fn residualize(yv: &[f64], xm: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    if yv.len() != xm.nrows() {
        return Err(Error::DimensionMismatch {
            what: "outcome length",
            expected: xm.nrows(),
            found: yv.len(),
        });
    }
    let l = xm.ncols();
    if l == 0 {
        return Ok((yv.to_vec(), Vec::new()));
    }
    if l > xm.nrows() {
        return Err(Error::RankDeficient { column: xm.nrows() + 1 });
    }
    let qr = xm.clone().qr();
    let r = qr.r();
    for c in 0..l {
        let norm = xm.column(c).norm();
        if !(r[(c, c)].abs() > 1e-10 * norm) {
            return Err(Error::RankDeficient { column: c + 1 });
        }
    }
    let y = DVector::from_column_slice(yv);
    let qty = qr.q().tr_mul(&y);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient { column: l })?;
    let fitted = xm * &beta;
    let resid = (y - fitted).as_slice().to_vec();
    Ok((resid, beta.as_slice().to_vec()))
}

/// Homoskedastic OLS fit of the within-transformed regression.
#[derive(Debug, Clone, PartialEq)]
pub struct WithinOls {
    pub beta: Vec<f64>,
    /// Conventional standard errors with `N* - L` degrees of freedom.
    pub std_errors: Vec<f64>,
    pub residuals: Vec<f64>,
}

pub fn within_ols(tp: &TransformedPanel) -> Result<WithinOls> {
    let (residuals, beta) = residualize(&tp.y_star, &tp.x_star)?;
    let l = beta.len();
    let df = tp.n_star.saturating_sub(l).max(1) as f64;
    let s2 = dot(&residuals, &residuals) / df;
    let gram_inv = (tp.x_star.transpose() * &tp.x_star)
        .try_inverse()
        .ok_or(Error::RankDeficient { column: l })?;
    let std_errors = (0..l).map(|c| (s2 * gram_inv[(c, c)]).sqrt()).collect();
    Ok(WithinOls {
        beta,
        std_errors,
        residuals,
    })
}

fn upper_normal(z: f64) -> f64 {
    Normal::standard().sf(z)
}

/// Chi-square decision for a standardized fixed-effects statistic.
pub fn decide_chisq(statistic: f64, k_star: usize, l: usize, tau: f64) -> Result<ChisqDecision> {
    if k_star <= l {
        return Err(Error::InvalidArgument(format!(
            "chi-square rule needs K* > L, got K* = {k_star}, L = {l}"
        )));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("level {tau} outside (0, 1)")));
    }
    let df = k_star - l;
    let dist = ChiSquared::new(df as f64)
        .map_err(|e| Error::InvalidArgument(format!("chi-square with {df} df: {e}")))?;
    let transformed = (2.0 * k_star as f64).sqrt() * statistic + k_star as f64;
    let critical = dist.inverse_cdf(1.0 - tau);
    Ok(ChisqDecision {
        transformed,
        critical,
        df,
        p_value: dist.sf(transformed),
        reject: transformed >= critical,
    })
}

fn residuals_vanish(resid: &[f64], y: &[f64]) -> bool {
    let rn = dot(resid, resid).sqrt();
    let yn = dot(y, y).sqrt();
    rn <= ZERO_RESIDUAL_TOL * yn
}

/// Jackknife AR test on the untransformed panel.
pub fn ar_no_fe(p: &Panel, peers: &PeerStructure, spec: &IvSpec) -> Result<TestResult> {
    ar_no_fe_with(p, peers, spec, &ArOptions::default())
}

pub fn ar_no_fe_with(
    p: &Panel,
    peers: &PeerStructure,
    spec: &IvSpec,
    opts: &ArOptions,
) -> Result<TestResult> {
    p.validate()?;
    let z = build_z(p, peers, spec)?;
    let q = assemble_q(&p.x, &z, opts.rank_tol)?;
    let bundle = orthonormalize(&q)?;
    let (resid, _) = residualize(&p.y, &p.x)?;
    no_fe_from_parts(p, &bundle, &resid, opts.level)
}

fn no_fe_from_parts(
    p: &Panel,
    bundle: &ProjectionBundle,
    resid: &[f64],
    level: f64,
) -> Result<TestResult> {
    let n_obs = p.n_obs();
    let l = p.n_regressors();
    let k = bundle.k();
    let mut warnings = Vec::new();
    let sigma2_hat = dot(resid, resid) / (n_obs - l).max(1) as f64;

    let (statistic, quad_form, phi_hat) = if residuals_vanish(resid, &p.y) {
        warnings.push("residuals are numerically zero; statistic set to 0".to_string());
        (0.0, 0.0, 0.0)
    } else {
        let quad = quad_form_p_minus_d(bundle, resid)?;
        let omega: Vec<f64> = resid.iter().map(|u| u * u).collect();
        let phi = trace_phi_crudu(bundle, &omega)?;
        if !(phi > 0.0) {
            return Err(Error::NonPositivePhi(phi));
        }
        (quad / ((k as f64).sqrt() * phi.sqrt()), quad, phi)
    };
    let leverage_warning = bundle.leverage_warning();
    if leverage_warning {
        warnings.push(format!(
            "maximum leverage {:.6} exceeds 0.999",
            bundle.max_leverage()
        ));
    }
    let p_normal = upper_normal(statistic);
    Ok(TestResult {
        variant: Variant::JackknifeNoFe,
        statistic,
        quad_form,
        k,
        l,
        n_obs,
        n_star: n_obs,
        phi_hat,
        sigma2_hat,
        kurtosis_hat: None,
        lambda: k as f64 / n_obs as f64,
        p_normal,
        p_chisq: None,
        chisq: None,
        level,
        reject_normal: p_normal <= level,
        max_leverage: bundle.max_leverage(),
        leverage_warning,
        warnings,
    })
}

/// Fixed-effects AR test for one variance variant.
pub fn ar_fe(
    p: &Panel,
    peers: &PeerStructure,
    spec: &IvSpec,
    variant: Variant,
) -> Result<TestResult> {
    FeStatistics::compute(p, peers, spec, &ArOptions::default())?.result(variant)
}

/// Everything the fixed-effects variants share: the transformed regression,
/// the instrument projection and the kurtosis estimate. Computed once, any
/// variant can then be evaluated cheaply.
#[derive(Debug, Clone, PartialEq)]
pub struct FeStatistics {
    pub n: usize,
    pub t: usize,
    pub n_obs: usize,
    pub n_star: usize,
    pub l: usize,
    pub k: usize,
    /// `ε̂*'P*ε̂* - (K*/N*) ε̂*'ε̂*`.
    pub quad_form: f64,
    /// `ε̂*'ε̂* / N*`.
    pub sigma2_hat: f64,
    pub kurtosis: KurtosisEstimate,
    /// `(1/K*) Σ (p*_ii)²`.
    pub leverage_sq_mean: f64,
    pub max_leverage: f64,
    /// `(X*'X*)^{-1} X*'y*`.
    pub beta_hat: Vec<f64>,
    pub residuals: Vec<f64>,
    pub degenerate: bool,
    pub level: f64,
}

impl FeStatistics {
    pub fn compute(
        p: &Panel,
        peers: &PeerStructure,
        spec: &IvSpec,
        opts: &ArOptions,
    ) -> Result<Self> {
        let tp = within_transform(p)?;
        if peers.n() != p.n {
            return Err(Error::DimensionMismatch {
                what: "peer structure size",
                expected: p.n,
                found: peers.n(),
            });
        }
        for l in 0..p.n_regressors() {
            let raw = p.x.column(l).norm();
            if !(tp.x_star.column(l).norm() > ABSORBED_TOL * raw) {
                return Err(Error::DegenerateX { column: l + 1 });
            }
        }
        let (residuals, beta_hat) = residualize(&tp.y_star, &tp.x_star)?;
        let bundle = fe_bundle(p, &tp, peers, spec, opts)?;
        Self::from_parts(p, &tp, &bundle, residuals, beta_hat, opts.level)
    }

    fn from_parts(
        p: &Panel,
        tp: &TransformedPanel,
        bundle: &ProjectionBundle,
        residuals: Vec<f64>,
        beta_hat: Vec<f64>,
        level: f64,
    ) -> Result<Self> {
        let k = bundle.k();
        let n_star = tp.n_star;
        if k >= n_star {
            return Err(Error::TooManyInstruments { k, n: n_star });
        }
        let ee = dot(&residuals, &residuals);
        let quad_form = quad_form_p(bundle, &residuals)? - k as f64 / n_star as f64 * ee;
        let kurtosis = excess_kurtosis(&residuals, p.n, p.t)?;
        Ok(Self {
            n: p.n,
            t: p.t,
            n_obs: p.n_obs(),
            n_star,
            l: p.n_regressors(),
            k,
            quad_form,
            sigma2_hat: ee / n_star as f64,
            kurtosis,
            leverage_sq_mean: bundle.leverage_sq_sum() / k as f64,
            max_leverage: bundle.max_leverage(),
            degenerate: residuals_vanish(&residuals, &p.y),
            beta_hat,
            residuals,
            level,
        })
    }

    /// `K* / N`.
    pub fn lambda(&self) -> f64 {
        self.k as f64 / self.n_obs as f64
    }

    /// Variance estimate of the centered quadratic form per `K*`.
    pub fn phi_hat(&self, variant: Variant) -> f64 {
        self.phi_with_kappa(variant, self.kurtosis.kappa_hat)
    }

    /// `Φ̂*` with an externally supplied excess kurtosis.
    pub fn phi_with_kappa(&self, variant: Variant, kappa: f64) -> f64 {
        let s4 = self.sigma2_hat * self.sigma2_hat;
        let lambda = self.lambda();
        match variant {
            Variant::FeJl => {
                kappa * (self.leverage_sq_mean - lambda) + 2.0 * s4 * (1.0 - lambda)
            }
            Variant::FeDin => 2.0 * s4,
            Variant::FeAg | Variant::JackknifeNoFe => 2.0 * s4 * (1.0 - lambda),
        }
    }

    pub fn result(&self, variant: Variant) -> Result<TestResult> {
        self.result_with_kappa(variant, self.kurtosis.kappa_hat)
    }

    pub fn result_with_kappa(&self, variant: Variant, kappa: f64) -> Result<TestResult> {
        if variant == Variant::JackknifeNoFe {
            return Err(Error::InvalidArgument(
                "the jackknife statistic has no fixed-effects form".into(),
            ));
        }
        let mut warnings = Vec::new();
        let (statistic, phi_hat) = if self.degenerate {
            warnings.push("residuals are numerically zero; statistic set to 0".to_string());
            (0.0, 0.0)
        } else {
            let phi = self.phi_with_kappa(variant, kappa);
            if !(phi > 0.0) {
                return Err(Error::NonPositivePhi(phi));
            }
            (
                self.quad_form / ((self.k as f64).sqrt() * phi.sqrt()),
                phi,
            )
        };
        let leverage_warning = self.max_leverage > crate::projection::LEVERAGE_WARNING;
        if leverage_warning {
            warnings.push(format!(
                "maximum leverage {:.6} exceeds 0.999",
                self.max_leverage
            ));
        }
        let chisq = decide_chisq(statistic, self.k, self.l, self.level)?;
        let p_normal = upper_normal(statistic);
        Ok(TestResult {
            variant,
            statistic,
            quad_form: if self.degenerate { 0.0 } else { self.quad_form },
            k: self.k,
            l: self.l,
            n_obs: self.n_obs,
            n_star: self.n_star,
            phi_hat,
            sigma2_hat: self.sigma2_hat,
            kurtosis_hat: Some(kappa),
            lambda: self.lambda(),
            p_normal,
            p_chisq: Some(chisq.p_value),
            chisq: Some(chisq),
            level: self.level,
            reject_normal: p_normal <= self.level,
            max_leverage: self.max_leverage,
            leverage_warning,
            warnings,
        })
    }
}

/// Projection onto `span([X*, J Z])`.
pub fn fe_bundle(
    p: &Panel,
    tp: &TransformedPanel,
    peers: &PeerStructure,
    spec: &IvSpec,
    opts: &ArOptions,
) -> Result<ProjectionBundle> {
    if peers.is_complete() && !opts.force_generic {
        let g = &p.x * spec.combination(p.n_regressors())?;
        let basis = kronecker_fe_basis(&g, &tp.x_star, p.n, p.t, opts.rank_tol)?;
        Ok(ProjectionBundle::from_orthonormal(basis))
    } else {
        let z = build_z(p, peers, spec)?;
        let q = assemble_q(&tp.x_star, &z.transformed(), opts.rank_tol)?;
        orthonormalize(&q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TslsResult {
    pub rho_hat: f64,
    pub se_rho: f64,
    pub t_stat: f64,
    /// Two-sided normal p-value.
    pub p_value: f64,
    pub beta_hat: Vec<f64>,
}

/// `(I_T ⊗ W) v` for a stacked vector.
fn spatial_lag(w: &DMatrix<f64>, v: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    for period in v.chunks_exact(n) {
        let lagged = w * DVector::from_column_slice(period);
        out.extend_from_slice(lagged.as_slice());
    }
    out
}

/// t-test of `H0: ρ = 0` in `y = ρ (I_T ⊗ W) y + Xβ + FE + ε` by TSLS on the
/// within-transformed model, instrumenting `J(I_T ⊗ W)y` with
/// `J(I_T ⊗ W)X`. Homoskedastic variance.
pub fn tsls_peer_test(p: &Panel, w: &DMatrix<f64>) -> Result<TslsResult> {
    p.validate()?;
    let (n, t) = (p.n, p.t);
    if w.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            what: "adjacency matrix size",
            expected: n,
            found: w.nrows(),
        });
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("adjacency matrix has non-finite entries".into()));
    }
    if let Some(i) = (0..n).find(|&i| w[(i, i)] != 0.0) {
        return Err(Error::InvalidArgument(format!(
            "adjacency diagonal must be zero (row {})",
            i + 1
        )));
    }
    let n_obs = n * t;
    let l = p.n_regressors();
    let demeaned = |mut v: Vec<f64>| {
        double_demean_in_place(&mut v, n, t);
        v
    };
    let y_star = demeaned(p.y.clone());
    let wy_star = demeaned(spatial_lag(w, &p.y, n));
    let x_star: Vec<Vec<f64>> = p
        .x
        .column_iter()
        .map(|c| demeaned(c.iter().copied().collect()))
        .collect();
    let wx_star: Vec<Vec<f64>> = p
        .x
        .column_iter()
        .map(|c| demeaned(spatial_lag(w, c.as_slice(), n)))
        .collect();

    let mut instruments = GreedyBasis::new(n_obs);
    for (c, col) in x_star.iter().enumerate() {
        if !instruments.try_push(col, RANK_TOL) {
            return Err(Error::DegenerateX { column: c + 1 });
        }
    }
    let excluded = wx_star
        .iter()
        .filter(|col| instruments.try_push(col, RANK_TOL))
        .count();
    if excluded == 0 {
        return Err(Error::WeakOrCollinearIv(
            "J(I_T ⊗ W)X is collinear with JX, so the peer effect is not identified after \
             the two-way within transformation (the linear-in-means case)"
                .into(),
        ));
    }
    let qz = instruments.into_matrix();

    let mut r = DMatrix::zeros(n_obs, 1 + l);
    r.set_column(0, &DVector::from_column_slice(&wy_star));
    for (c, col) in x_star.iter().enumerate() {
        r.set_column(1 + c, &DVector::from_column_slice(col));
    }
    let r_hat = &qz * qz.tr_mul(&r);
    let gram = r_hat.tr_mul(&r_hat);
    let gram_inv = gram.clone().cholesky().map(|c| c.inverse()).ok_or_else(|| {
        Error::WeakOrCollinearIv("projected regressors are collinear".into())
    })?;
    let y = DVector::from_column_slice(&y_star);
    let theta = &gram_inv * r_hat.tr_mul(&y);
    let resid = &y - &r * &theta;
    let df = (p.n_star()).saturating_sub(1 + l).max(1) as f64;
    let s2 = resid.norm_squared() / df;
    let se_rho = (s2 * gram_inv[(0, 0)]).sqrt();
    let t_stat = theta[0] / se_rho;
    Ok(TslsResult {
        rho_hat: theta[0],
        se_rho,
        t_stat,
        p_value: 2.0 * upper_normal(t_stat.abs()),
        beta_hat: theta.iter().skip(1).copied().collect(),
    })
}
