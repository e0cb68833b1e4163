//! Projection onto the instrument span through an orthonormal basis.
//!
//! `P = Q (Q'Q)^{-1} Q'` is never formed. With `Q_orth` an orthonormal basis of
//! the span, `u'Pu = |Q_orth' u|²`, the leverage `p_ii` is the squared `i`-th
//! row norm of `Q_orth`, and
//!
//! ```text
//! tr[(P - D) Ω (P - D) Ω] = |Q_orth' Ω Q_orth|_F² - Σ p_ii² ω_i²
//! ```
//!
//! for diagonal `Ω`, since `tr(DΩPΩ) = tr(DΩDΩ) = Σ p_ii² ω_i²`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::instruments::InstrumentMatrix;

/// Relative threshold on the Householder diagonal below which a column is
/// considered dependent on its predecessors.
pub const COLLAPSE_TOL: f64 = 1e-12;

/// Leverage above which a [`crate::TestResult`] carries a warning.
pub const LEVERAGE_WARNING: f64 = 0.999;

/// Orthonormal basis of an instrument span with its leverage values.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBundle {
    /// `N x K` with orthonormal columns.
    pub q_orth: DMatrix<f64>,
    /// Diagonal of `P`.
    pub leverage: Vec<f64>,
}

impl ProjectionBundle {
    /// Wraps a matrix whose columns are already orthonormal.
    pub fn from_orthonormal(q_orth: DMatrix<f64>) -> Self {
        let (rows, k) = q_orth.shape();
        let mut leverage = vec![0.0; rows];
        let data = q_orth.as_slice();
        for c in 0..k {
            for (p, v) in leverage.iter_mut().zip(&data[c * rows..(c + 1) * rows]) {
                *p += v * v;
            }
        }
        Self { q_orth, leverage }
    }

    pub fn k(&self) -> usize {
        self.q_orth.ncols()
    }

    pub fn n_obs(&self) -> usize {
        self.q_orth.nrows()
    }

    pub fn max_leverage(&self) -> f64 {
        self.leverage.iter().copied().fold(0.0, f64::max)
    }

    pub fn leverage_warning(&self) -> bool {
        self.max_leverage() > LEVERAGE_WARNING
    }

    /// `Σ p_ii²`.
    pub fn leverage_sq_sum(&self) -> f64 {
        self.leverage.iter().map(|p| p * p).sum()
    }

    fn coefficients(&self, u: &[f64]) -> Result<DVector<f64>> {
        if u.len() != self.n_obs() {
            return Err(Error::DimensionMismatch {
                what: "vector length",
                expected: self.n_obs(),
                found: u.len(),
            });
        }
        Ok(self.q_orth.tr_mul(&DVector::from_column_slice(u)))
    }
}

/// Householder orthonormalization of `q` with the column order preserved.
pub fn orthonormalize(q: &InstrumentMatrix) -> Result<ProjectionBundle> {
    householder_basis(&q.q, COLLAPSE_TOL).map(ProjectionBundle::from_orthonormal)
}

/// `u'Pu`.
pub fn quad_form_p(b: &ProjectionBundle, u: &[f64]) -> Result<f64> {
    Ok(b.coefficients(u)?.norm_squared())
}

/// `u'(P - D)u`.
pub fn quad_form_p_minus_d(b: &ProjectionBundle, u: &[f64]) -> Result<f64> {
    let pu = quad_form_p(b, u)?;
    let du: f64 = b.leverage.iter().zip(u).map(|(p, v)| p * v * v).sum();
    Ok(pu - du)
}

/// `(2/K) tr[(P - D) Ω (P - D) Ω]` with `Ω = diag(omega)`.
pub fn trace_phi_crudu(b: &ProjectionBundle, omega: &[f64]) -> Result<f64> {
    let rows = b.n_obs();
    if omega.len() != rows {
        return Err(Error::DimensionMismatch {
            what: "omega length",
            expected: rows,
            found: omega.len(),
        });
    }
    if let Some(i) = omega.iter().position(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "omega[{i}] = {} is negative",
            omega[i]
        )));
    }
    // S = diag(sqrt(ω)) Q_orth, so Q_orth' Ω Q_orth = S'S
    let mut s = b.q_orth.clone();
    for mut col in s.column_iter_mut() {
        for (v, w) in col.iter_mut().zip(omega) {
            *v *= w.sqrt();
        }
    }
    let m = s.tr_mul(&s);
    let diag: f64 = b
        .leverage
        .iter()
        .zip(omega)
        .map(|(p, w)| (p * w) * (p * w))
        .sum();
    Ok(2.0 / b.k() as f64 * (m.norm_squared() - diag))
}

/// Orthonormal basis of the span of `a`'s columns by Householder reflections.
/// Fails with [`Error::RankCollapse`] when a column is dependent on its
/// predecessors to relative tolerance `tol`.
pub fn householder_basis(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let (m, k) = a.shape();
    if k > m {
        return Err(Error::RankCollapse { column: m + 1 });
    }
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let mut r = a.as_slice().to_vec();
    let mut reflectors: Vec<(Vec<f64>, f64)> = Vec::with_capacity(k);

    for j in 0..k {
        let (head, tail) = r.split_at_mut((j + 1) * m);
        let x = &head[j * m + j..(j + 1) * m];
        let sigma = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(sigma > tol * norms[j]) || norms[j] == 0.0 {
            return Err(Error::RankCollapse { column: j + 1 });
        }
        let alpha = if x[0] >= 0.0 { -sigma } else { sigma };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let beta = 2.0 / v.iter().map(|e| e * e).sum::<f64>();
        for col in tail.chunks_exact_mut(m) {
            apply_reflector(&v, beta, &mut col[j..]);
        }
        reflectors.push((v, beta));
    }

    let mut q = vec![0.0; m * k];
    for c in 0..k {
        q[c * m + c] = 1.0;
    }
    for (j, (v, beta)) in reflectors.iter().enumerate().rev() {
        for col in q.chunks_exact_mut(m).skip(j) {
            apply_reflector(v, *beta, &mut col[j..]);
        }
    }
    Ok(DMatrix::from_vec(m, k, q))
}

#[inline]
fn apply_reflector(v: &[f64], beta: f64, x: &mut [f64]) {
    let s = beta * dot(v, x);
    if s != 0.0 {
        axpy(-s, v, x);
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Incrementally grown orthonormal basis used for greedy column selection.
///
/// Candidates are orthogonalized with two passes of classical Gram-Schmidt.
#[derive(Debug, Clone)]
pub(crate) struct GreedyBasis {
    rows: usize,
    data: Vec<f64>,
}

impl GreedyBasis {
    pub fn new(rows: usize) -> Self {
        Self {
            rows,
            data: Vec::new(),
        }
    }

    /// Starts from columns known to be orthonormal.
    pub fn from_orthonormal(rows: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len() % rows.max(1), 0);
        Self { rows, data }
    }

    pub fn dim(&self) -> usize {
        if self.rows == 0 {
            0
        } else {
            self.data.len() / self.rows
        }
    }

    /// Residual of `v` after projecting out the current basis.
    pub fn residual(&self, v: &[f64]) -> Vec<f64> {
        let mut w = v.to_vec();
        let k = self.dim();
        let mut coef = vec![0.0; k];
        for _ in 0..2 {
            for (c, q) in coef.iter_mut().zip(self.data.chunks_exact(self.rows)) {
                *c = dot(q, &w);
            }
            for (c, q) in coef.iter().zip(self.data.chunks_exact(self.rows)) {
                axpy(-c, q, &mut w);
            }
        }
        w
    }

    /// Appends `v` iff its residual norm exceeds `tol * |v|`.
    pub fn try_push(&mut self, v: &[f64], tol: f64) -> bool {
        let norm0 = dot(v, v).sqrt();
        if !(norm0 > 0.0) || !norm0.is_finite() || self.dim() >= self.rows {
            return false;
        }
        let mut w = self.residual(v);
        let r = dot(&w, &w).sqrt();
        if !(r > tol * norm0) {
            return false;
        }
        w.iter_mut().for_each(|e| *e /= r);
        self.data.extend_from_slice(&w);
        true
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        let k = self.dim();
        DMatrix::from_vec(self.rows, k, self.data)
    }
}

/// Orthonormal basis of `1⊥` in `R^n` (Helmert contrasts), `n x (n - 1)`.
pub fn helmert_basis(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n.saturating_sub(1), |i, b| {
        let b1 = (b + 1) as f64;
        let scale = 1.0 / (b1 * (b1 + 1.0)).sqrt();
        match i.cmp(&(b + 1)) {
            std::cmp::Ordering::Less => scale,
            std::cmp::Ordering::Equal => -b1 * scale,
            std::cmp::Ordering::Greater => 0.0,
        }
    })
}

/// Orthonormal basis of `span([X*, J Z])` when every individual treats all
/// others as potential peers.
///
/// Column `(i, j, c)` of `Z` is `g_jc ⊗ e_i`, with `g_jc` the time series of
/// `(X_jt B)_c`, and `J = J_T ⊗ J_n`. For fixed `j` the vectors `J_n e_i`,
/// `i ≠ j`, span all of `1⊥`, hence
/// `span(J Z) = span{J_T g_jc} ⊗ 1⊥`. The basis is the Kronecker product
/// of an orthonormal basis of the demeaned series with Helmert contrasts,
/// followed by whatever part of `X*` lies outside that span.
///
/// `g` is `X B` stacked like the panel; `x_star` is `J X`.
pub fn kronecker_fe_basis(
    g: &DMatrix<f64>,
    x_star: &DMatrix<f64>,
    n: usize,
    t: usize,
    tol: f64,
) -> Result<DMatrix<f64>> {
    let rows = n * t;
    if g.nrows() != rows || x_star.nrows() != rows {
        return Err(Error::DimensionMismatch {
            what: "instrument rows",
            expected: rows,
            found: g.nrows().min(x_star.nrows()),
        });
    }
    let mut time_basis = GreedyBasis::new(t);
    let mut series = vec![0.0; t];
    for j in 0..n {
        for c in 0..g.ncols() {
            for (s, v) in series.iter_mut().enumerate() {
                *v = g[(s * n + j, c)];
            }
            let mean = series.iter().sum::<f64>() / t as f64;
            series.iter_mut().for_each(|v| *v -= mean);
            time_basis.try_push(&series, tol);
        }
    }
    let u = time_basis.into_matrix();
    let v = helmert_basis(n);
    let r = u.ncols();

    let mut data = Vec::with_capacity(rows * (r * (n - 1) + x_star.ncols()));
    for a in 0..r {
        for b in 0..n - 1 {
            for s in 0..t {
                let us = u[(s, a)];
                data.extend(v.column(b).iter().map(|vi| us * vi));
            }
        }
    }
    let mut basis = GreedyBasis::from_orthonormal(rows, data);
    for l in 0..x_star.ncols() {
        basis.try_push(x_star.column(l).as_slice(), tol);
    }
    Ok(basis.into_matrix())
}
