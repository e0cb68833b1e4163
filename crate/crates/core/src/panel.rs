//! Balanced panel container and the two-way within transformation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default cap on `n * T` for [`build_j`].
pub const DENSE_J_CAP: usize = 10_000;

/// A balanced `n x T` panel stacked period by period.
///
/// Row `t * n + i` (0-based) holds individual `i` in period `t`, so the
/// outcome vector is `(y_1', ..., y_T')'` with `y_t = (y_1t, ..., y_nt)'`.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub n: usize,
    pub t: usize,
    pub y: Vec<f64>,
    /// `N x L` exogenous regressors.
    pub x: DMatrix<f64>,
    pub unit_labels: Option<Vec<String>>,
    pub time_labels: Option<Vec<String>>,
}

impl Panel {
    /// Builds and validates a panel without labels.
    pub fn new(n: usize, t: usize, y: Vec<f64>, x: DMatrix<f64>) -> Result<Self> {
        validate_panel(Panel {
            n,
            t,
            y,
            x,
            unit_labels: None,
            time_labels: None,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.n * self.t
    }

    pub fn n_regressors(&self) -> usize {
        self.x.ncols()
    }

    /// Effective sample size after the two-way within transformation.
    pub fn n_star(&self) -> usize {
        (self.n - 1) * (self.t - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!(
                "a panel needs at least 2 individuals, got {}",
                self.n
            )));
        }
        if self.t < 2 {
            return Err(Error::InvalidArgument(format!(
                "a panel needs at least 2 periods, got {}",
                self.t
            )));
        }
        let n_obs = self.n * self.t;
        if self.y.len() != n_obs {
            return Err(Error::DimensionMismatch {
                what: "outcome length",
                expected: n_obs,
                found: self.y.len(),
            });
        }
        if self.x.nrows() != n_obs {
            return Err(Error::DimensionMismatch {
                what: "regressor rows",
                expected: n_obs,
                found: self.x.nrows(),
            });
        }
        if let Some(row) = self.y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { what: "outcome", row });
        }
        for column in self.x.column_iter() {
            if let Some(row) = column.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue {
                    what: "regressors",
                    row,
                });
            }
        }
        if let Some(labels) = &self.unit_labels {
            if labels.len() != self.n {
                return Err(Error::UnbalancedPanel(format!(
                    "{} unit labels for {} individuals",
                    labels.len(),
                    self.n
                )));
            }
        }
        if let Some(labels) = &self.time_labels {
            if labels.len() != self.t {
                return Err(Error::UnbalancedPanel(format!(
                    "{} time labels for {} periods",
                    labels.len(),
                    self.t
                )));
            }
        }
        Ok(())
    }

    /// Restricts the panel to periods `start..start + len` (0-based).
    pub fn periods(&self, start: usize, len: usize) -> Result<Panel> {
        if len < 2 || start + len > self.t {
            return Err(Error::IndexOutOfRange(format!(
                "periods {}..{} of a {}-period panel",
                start,
                start + len,
                self.t
            )));
        }
        let lo = start * self.n;
        let hi = (start + len) * self.n;
        Ok(Panel {
            n: self.n,
            t: len,
            y: self.y[lo..hi].to_vec(),
            x: self.x.rows(lo, hi - lo).into_owned(),
            unit_labels: self.unit_labels.clone(),
            time_labels: self
                .time_labels
                .as_ref()
                .map(|l| l[start..start + len].to_vec()),
        })
    }
}

/// Within-transformed panel: `y* = J y`, `X* = J X`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedPanel {
    pub n: usize,
    pub t: usize,
    pub y_star: Vec<f64>,
    pub x_star: DMatrix<f64>,
    /// `(n - 1)(T - 1)`.
    pub n_star: usize,
}

/// Row of observation `(i, t)` under the stacking convention, all 1-based.
pub fn stack_index(i: usize, t: usize, n: usize) -> Result<usize> {
    if i == 0 || i > n || t == 0 {
        return Err(Error::IndexOutOfRange(format!(
            "(i = {i}, t = {t}) with n = {n}"
        )));
    }
    Ok((t - 1) * n + i)
}

pub fn validate_panel(p: Panel) -> Result<Panel> {
    p.validate()?;
    Ok(p)
}

/// Two-way within transformation by double demeaning.
pub fn within_transform(p: &Panel) -> Result<TransformedPanel> {
    p.validate()?;
    let (n, t) = (p.n, p.t);
    let y_star = double_demean(&p.y, n, t);
    let mut x_star = DMatrix::zeros(p.x.nrows(), p.x.ncols());
    for (l, column) in p.x.column_iter().enumerate() {
        let col: Vec<f64> = column.iter().copied().collect();
        x_star.set_column(l, &DVector::from_vec(double_demean(&col, n, t)));
    }
    Ok(TransformedPanel {
        n,
        t,
        y_star,
        x_star,
        n_star: (n - 1) * (t - 1),
    })
}

/// `v_it - mean_i. - mean_.t + mean_..` for a stacked vector of length `n * t`.
pub fn double_demean(v: &[f64], n: usize, t: usize) -> Vec<f64> {
    let mut out = v.to_vec();
    double_demean_in_place(&mut out, n, t);
    out
}

pub(crate) fn double_demean_in_place(v: &mut [f64], n: usize, t: usize) {
    debug_assert_eq!(v.len(), n * t);
    // time means first, then unit means of the time-demeaned data; the
    // second pass leaves the time means at zero
    for period in v.chunks_exact_mut(n) {
        let mean = period.iter().sum::<f64>() / n as f64;
        period.iter_mut().for_each(|e| *e -= mean);
    }
    let mut unit_mean = vec![0.0; n];
    for period in v.chunks_exact(n) {
        for (m, e) in unit_mean.iter_mut().zip(period) {
            *m += e;
        }
    }
    unit_mean.iter_mut().for_each(|m| *m /= t as f64);
    for period in v.chunks_exact_mut(n) {
        for (e, m) in period.iter_mut().zip(&unit_mean) {
            *e -= m;
        }
    }
}

/// Dense `J = (I_T - ι ι'/T) ⊗ (I_n - ι ι'/n)`. Only meant for checking
/// the transform on small instances.
pub fn build_j(n: usize, t: usize) -> Result<DMatrix<f64>> {
    build_j_with_cap(n, t, DENSE_J_CAP)
}

pub fn build_j_with_cap(n: usize, t: usize, cap: usize) -> Result<DMatrix<f64>> {
    if n == 0 || t == 0 {
        return Err(Error::InvalidArgument(format!("n = {n}, T = {t}")));
    }
    let size = n * t;
    if size > cap {
        return Err(Error::InstanceTooLarge { size, cap });
    }
    let jt = DMatrix::from_fn(t, t, |a, b| {
        (if a == b { 1.0 } else { 0.0 }) - 1.0 / t as f64
    });
    let jn = DMatrix::from_fn(n, n, |a, b| {
        (if a == b { 1.0 } else { 0.0 }) - 1.0 / n as f64
    });
    Ok(jt.kronecker(&jn))
}
