//! Data-generating processes, network generators and the Monte Carlo runner.
//!
//! Outcomes follow `y_t = A y_t + β x_t + ξ + η_t ι + ε_t` for each period,
//! solved directly as `(I - A) y_t = β x_t + u_t`. Every replication owns a
//! `ChaCha8` stream indexed by the replication number, so results do not
//! depend on how replications are scheduled across threads.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::distr::Open01;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::artest::{tsls_peer_test, within_ols, ArOptions, FeStatistics, Variant};
use crate::error::{Error, Result};
use crate::instruments::{default_peer_structure, IvSpec};
use crate::panel::{within_transform, Panel};

/// Attempts per replication before it is counted as a failure.
pub const MAX_REDRAWS: usize = 100;

/// `(I - A)` is treated as singular when its smallest singular value falls
/// below this fraction of the largest.
const SINGULAR_TOL: f64 = 1e-10;

/// Dyad coefficients `α_ij` with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMatrix {
    a: DMatrix<f64>,
}

impl AlphaMatrix {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                what: "alpha matrix columns",
                expected: a.nrows(),
                found: a.ncols(),
            });
        }
        if let Some(i) = (0..a.nrows()).find(|&i| a[(i, i)] != 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha matrix has a nonzero diagonal entry in row {}",
                i + 1
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("alpha matrix has non-finite entries".into()));
        }
        Ok(Self { a })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            a: DMatrix::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn nonzero_count(&self) -> usize {
        self.a.iter().filter(|v| **v != 0.0).count()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.a
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Indicator of `α_ij > 0`, row-normalized. Rows without links stay zero.
    pub fn row_normalized_indicator(&self) -> DMatrix<f64> {
        let mut w = self.a.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        for mut row in w.row_iter_mut() {
            let s = row.sum();
            if s > 0.0 {
                row /= s;
            }
        }
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkWeight {
    Fixed(f64),
    Uniform,
}

/// Selects `round(ND · n(n-1))` ordered dyads uniformly without replacement.
pub fn gen_random_graph_alpha<R: Rng + ?Sized>(
    n: usize,
    nd: f64,
    weight: LinkWeight,
    rng: &mut R,
) -> Result<AlphaMatrix> {
    if !(0.0..=1.0).contains(&nd) {
        return Err(Error::InvalidArgument(format!("network density {nd} outside [0, 1]")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need n >= 2, got {n}")));
    }
    let dyads = n * (n - 1);
    let count = (nd * dyads as f64).round() as usize;
    let mut a = DMatrix::zeros(n, n);
    for k in sample(rng, dyads, count).into_vec() {
        let i = k / (n - 1);
        let jj = k % (n - 1);
        let j = if jj >= i { jj + 1 } else { jj };
        a[(i, j)] = match weight {
            LinkWeight::Fixed(rho) => rho,
            LinkWeight::Uniform => rng.sample(Open01),
        };
    }
    Ok(AlphaMatrix { a })
}

/// `value` at the two ring positions `i ± m`.
pub fn gen_circular_alpha(n: usize, value: f64, m: usize) -> Result<AlphaMatrix> {
    if m == 0 || 2 * m >= n {
        return Err(Error::InvalidArgument(format!(
            "ring offset m = {m} must satisfy 1 <= m < n/2 with n = {n}"
        )));
    }
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, (i + m) % n)] = value;
        a[(i, (i + n - m) % n)] = value;
    }
    Ok(AlphaMatrix { a })
}

/// Misspecified comparator with weight 0.5 on the two `m`-th ring neighbours.
pub fn circle_comparator(n: usize, m: usize) -> Result<DMatrix<f64>> {
    Ok(gen_circular_alpha(n, 0.5, m)?.a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dgp {
    Normal,
    /// `(exp(ζ) - e^{1/2}) / (e² - e)^{1/2}` with `ζ ~ N(0, 1)`.
    LogNormal,
}

impl Dgp {
    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        match self {
            Dgp::Normal => z,
            Dgp::LogNormal => {
                let e = std::f64::consts::E;
                (z.exp() - e.sqrt()) / (e * e - e).sqrt()
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dgp::Normal => "normal",
            Dgp::LogNormal => "lognormal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Network {
    RandomGraphFixedRho,
    RandomGraphUniformRho,
    /// `ρ` on the two ring neighbours at offset `m_true`.
    Circular { m_true: usize },
    None,
}

impl fmt::Display for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Network::RandomGraphFixedRho => f.write_str("random_fixed"),
            Network::RandomGraphUniformRho => f.write_str("random_uniform"),
            Network::Circular { m_true } => write!(f, "circular_m{m_true}"),
            Network::None => f.write_str("none"),
        }
    }
}

/// Adjacency handed to the TSLS comparator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    RowNormalizedIndicator,
    CircleNeighbor { m: usize },
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Comparator::RowNormalizedIndicator => f.write_str("row_normalized"),
            Comparator::CircleNeighbor { m } => write!(f, "circle_m{m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub n: usize,
    pub t: usize,
    pub reps: usize,
    pub rho: f64,
    pub beta: f64,
    pub nd: f64,
    pub dgp: Dgp,
    pub network: Network,
    pub misspec: Option<Comparator>,
    pub level: f64,
    pub seed: u64,
    /// Keep one record per replication.
    pub keep_log: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n: 30,
            t: 50,
            reps: 5000,
            rho: 0.0,
            beta: 1.0,
            nd: 0.3,
            dgp: Dgp::Normal,
            network: Network::RandomGraphFixedRho,
            misspec: None,
            level: 0.05,
            seed: 1,
            keep_log: false,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n < 2 || self.t < 2 {
            return bad(format!("need n, T >= 2, got n = {}, T = {}", self.n, self.t));
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.nd) {
            return bad(format!("network density {} outside [0, 1]", self.nd));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level {} outside (0, 1)", self.level));
        }
        if !self.rho.is_finite() || !self.beta.is_finite() {
            return bad("rho and beta must be finite".into());
        }
        if let Network::Circular { m_true } = self.network {
            gen_circular_alpha(self.n, 1.0, m_true)?;
        }
        if let Some(Comparator::CircleNeighbor { m }) = self.misspec {
            gen_circular_alpha(self.n, 1.0, m)?;
        }
        Ok(())
    }

    fn draw_alpha<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<AlphaMatrix> {
        match self.network {
            Network::RandomGraphFixedRho => {
                gen_random_graph_alpha(self.n, self.nd, LinkWeight::Fixed(self.rho), rng)
            }
            Network::RandomGraphUniformRho => {
                gen_random_graph_alpha(self.n, self.nd, LinkWeight::Uniform, rng)
            }
            Network::Circular { m_true } => gen_circular_alpha(self.n, self.rho, m_true),
            Network::None => Ok(AlphaMatrix::zeros(self.n)),
        }
    }

    fn comparator(&self, alpha: &AlphaMatrix) -> Result<Option<DMatrix<f64>>> {
        match self.misspec {
            None => Ok(None),
            Some(Comparator::RowNormalizedIndicator) => Ok(Some(alpha.row_normalized_indicator())),
            Some(Comparator::CircleNeighbor { m }) => circle_comparator(self.n, m).map(Some),
        }
    }
}

/// One panel from the configured DGP with a single regressor. Draw order:
/// `x` (stacked), `ξ`, `η`, then `ε` (stacked).
pub fn gen_panel<R: Rng + ?Sized>(cfg: &McConfig, alpha: &AlphaMatrix, rng: &mut R) -> Result<Panel> {
    let (n, t) = (cfg.n, cfg.t);
    if alpha.n() != n {
        return Err(Error::DimensionMismatch {
            what: "alpha matrix size",
            expected: n,
            found: alpha.n(),
        });
    }
    let x: Vec<f64> = (0..n * t).map(|_| StandardNormal.sample(rng)).collect();
    let xi: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let eta: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
    let rhs: Vec<f64> = (0..n * t)
        .map(|r| cfg.beta * x[r] + xi[r % n] + eta[r / n] + cfg.dgp.draw(rng))
        .collect();

    let y = if alpha.nonzero_count() == 0 {
        rhs
    } else {
        let system = DMatrix::identity(n, n) - alpha.matrix();
        let sv = system.clone().singular_values();
        let (lo, hi) = (sv.min(), sv.max());
        if !(lo > SINGULAR_TOL * hi) {
            return Err(Error::SingularSystem(format!(
                "I - A has condition number {:.3e}",
                hi / lo
            )));
        }
        let lu = system.lu();
        let mut y = Vec::with_capacity(n * t);
        for period in rhs.chunks_exact(n) {
            let sol = lu
                .solve(&DVector::from_column_slice(period))
                .ok_or_else(|| Error::SingularSystem("LU solve failed".into()))?;
            y.extend_from_slice(sol.as_slice());
        }
        y
    };
    Panel::new(n, t, y, DMatrix::from_vec(n * t, 1, x))
}

fn rep_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

/// Per-replication summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub rep: usize,
    /// Statistics in the order of [`Variant::FE`]; `None` when `Φ̂ ≤ 0`.
    pub statistics: [Option<f64>; 3],
    pub rejects: [Option<bool>; 3],
    pub beta_hat: f64,
    pub ci_covers: bool,
    pub tsls: Option<TslsOutcome>,
    pub redraws: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TslsOutcome {
    Estimated { rho_hat: f64, reject: bool },
    NotIdentified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TslsSummary {
    /// Among replications where the comparator was identified.
    pub rejection_rate: f64,
    pub rho_mean: f64,
    pub not_identified: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McResult {
    pub completed: usize,
    /// Replications abandoned after [`MAX_REDRAWS`] attempts.
    pub failures: usize,
    /// `(variant, rejection rate, replications with a usable variance)`.
    pub rejection: Vec<(Variant, f64, usize)>,
    /// Mean of `(β̂ - β)/β`; NaN when `β = 0`.
    pub beta_bias_rel: f64,
    pub ci95_coverage: f64,
    pub tsls: Option<TslsSummary>,
    pub log: Option<Vec<RepRecord>>,
}

impl McResult {
    pub fn rate(&self, v: Variant) -> Option<f64> {
        self.rejection.iter().find(|r| r.0 == v).map(|r| r.1)
    }

    pub fn csv_header() -> Vec<&'static str> {
        vec![
            "n", "T", "reps", "rho", "beta", "nd", "dgp", "network", "misspec", "level", "seed",
            "variant", "rejection_rate", "bias_rel", "ci_coverage", "failures",
        ]
    }

    /// One row per test variant, TSLS last when present.
    pub fn csv_rows(&self, cfg: &McConfig) -> Vec<Vec<String>> {
        let base = vec![
            cfg.n.to_string(),
            cfg.t.to_string(),
            cfg.reps.to_string(),
            cfg.rho.to_string(),
            cfg.beta.to_string(),
            cfg.nd.to_string(),
            cfg.dgp.as_str().to_string(),
            cfg.network.to_string(),
            cfg.misspec.map_or_else(|| "none".to_string(), |c| c.to_string()),
            cfg.level.to_string(),
            cfg.seed.to_string(),
        ];
        let mut rows: Vec<Vec<String>> = self
            .rejection
            .iter()
            .map(|(v, rate, _)| (v.as_str(), *rate))
            .chain(self.tsls.as_ref().map(|s| ("t_TSLS", s.rejection_rate)))
            .map(|(name, rate)| {
                let mut row = base.clone();
                row.extend([
                    name.to_string(),
                    rate.to_string(),
                    self.beta_bias_rel.to_string(),
                    self.ci95_coverage.to_string(),
                    self.failures.to_string(),
                ]);
                row
            })
            .collect();
        rows.shrink_to_fit();
        rows
    }
}

fn one_replication(cfg: &McConfig, rep: usize) -> Result<RepRecord> {
    let mut rng = rep_rng(cfg.seed, rep);
    let mut redraws = 0;
    let (alpha, panel) = loop {
        let alpha = cfg.draw_alpha(&mut rng)?;
        match gen_panel(cfg, &alpha, &mut rng) {
            Ok(p) => break (alpha, p),
            Err(Error::SingularSystem(_)) if redraws + 1 < MAX_REDRAWS => redraws += 1,
            Err(Error::SingularSystem(_)) => {
                return Err(Error::RegenerateOrFail {
                    attempts: MAX_REDRAWS,
                })
            }
            Err(e) => return Err(e),
        }
    };

    let peers = default_peer_structure(cfg.n)?;
    let opts = ArOptions {
        level: cfg.level,
        ..ArOptions::default()
    };
    let fe = FeStatistics::compute(&panel, &peers, &IvSpec::Full, &opts)?;
    let mut statistics = [None; 3];
    let mut rejects = [None; 3];
    for (slot, v) in Variant::FE.into_iter().enumerate() {
        match fe.result(v) {
            Ok(r) => {
                statistics[slot] = Some(r.statistic);
                rejects[slot] = Some(r.reject());
            }
            Err(Error::NonPositivePhi(_)) => {}
            Err(e) => return Err(e),
        }
    }

    let ols = within_ols(&within_transform(&panel)?)?;
    let (b, se) = (ols.beta[0], ols.std_errors[0]);
    let ci_covers = (b - cfg.beta).abs() <= 1.96 * se;

    let tsls = match cfg.comparator(&alpha)? {
        None => None,
        Some(w) => Some(match tsls_peer_test(&panel, &w) {
            Ok(r) => TslsOutcome::Estimated {
                rho_hat: r.rho_hat,
                reject: r.p_value <= cfg.level,
            },
            Err(Error::WeakOrCollinearIv(_)) => TslsOutcome::NotIdentified,
            Err(e) => return Err(e),
        }),
    };

    Ok(RepRecord {
        rep,
        statistics,
        rejects,
        beta_hat: b,
        ci_covers,
        tsls,
        redraws,
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if c == 0 {
        f64::NAN
    } else {
        s / c as f64
    }
}

fn share(v: impl Iterator<Item = bool>) -> (f64, usize) {
    let (hits, c) = v.fold((0usize, 0usize), |(h, c), x| (h + x as usize, c + 1));
    (if c == 0 { f64::NAN } else { hits as f64 / c as f64 }, c)
}

/// Runs the experiment. Replications run in parallel; aggregation happens
/// in replication order afterwards.
pub fn run_mc(cfg: &McConfig) -> Result<McResult> {
    cfg.validate()?;
    let outcomes: Vec<Result<RepRecord>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| one_replication(cfg, rep))
        .collect();

    let mut records = Vec::with_capacity(cfg.reps);
    let mut failures = 0;
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(Error::RegenerateOrFail { .. }) => failures += 1,
            Err(e) => return Err(e),
        }
    }
    if records.is_empty() {
        return Err(Error::RegenerateOrFail {
            attempts: MAX_REDRAWS,
        });
    }

    let rejection = Variant::FE
        .into_iter()
        .enumerate()
        .map(|(slot, v)| {
            let (rate, used) = share(records.iter().filter_map(|r| r.rejects[slot]));
            (v, rate, used)
        })
        .collect();
    let beta_bias_rel = if cfg.beta == 0.0 {
        f64::NAN
    } else {
        mean(records.iter().map(|r| (r.beta_hat - cfg.beta) / cfg.beta))
    };
    let (ci95_coverage, _) = share(records.iter().map(|r| r.ci_covers));
    let tsls = cfg.misspec.map(|_| {
        let estimated: Vec<(f64, bool)> = records
            .iter()
            .filter_map(|r| match r.tsls {
                Some(TslsOutcome::Estimated { rho_hat, reject }) => Some((rho_hat, reject)),
                _ => None,
            })
            .collect();
        TslsSummary {
            rejection_rate: share(estimated.iter().map(|e| e.1)).0,
            rho_mean: mean(estimated.iter().map(|e| e.0)),
            not_identified: records.len() - estimated.len(),
        }
    });
    Ok(McResult {
        completed: records.len(),
        failures,
        rejection,
        beta_bias_rel,
        ci95_coverage,
        tsls,
        log: cfg.keep_log.then_some(records),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> McConfig {
        McConfig {
            n: 5,
            t: 12,
            reps: 16,
            rho: 0.3,
            nd: 0.3,
            seed: 42,
            keep_log: true,
            ..McConfig::default()
        }
    }

    #[test]
    fn random_graph_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = gen_random_graph_alpha(30, 0.0, LinkWeight::Fixed(0.3), &mut rng).unwrap();
        assert_eq!(a.nonzero_count(), 0);
        let a = gen_random_graph_alpha(30, 0.02, LinkWeight::Fixed(0.3), &mut rng).unwrap();
        assert_eq!(a.nonzero_count(), 17);
        assert!(a.matrix().iter().all(|v| *v == 0.0 || *v == 0.3));
        let a = gen_random_graph_alpha(30, 1.0, LinkWeight::Uniform, &mut rng).unwrap();
        assert_eq!(a.nonzero_count(), 870);
        for i in 0..30 {
            for j in 0..30 {
                let v = a.matrix()[(i, j)];
                if i == j {
                    assert_eq!(v, 0.0);
                } else {
                    assert!(v > 0.0 && v < 1.0);
                }
            }
        }
        assert!(gen_random_graph_alpha(30, 1.5, LinkWeight::Uniform, &mut rng).is_err());
    }

    #[test]
    fn circular_networks() {
        let a = gen_circular_alpha(4, 0.3, 1).unwrap();
        for i in 0..4 {
            let row: Vec<usize> = (0..4).filter(|&j| a.matrix()[(i, j)] == 0.3).collect();
            assert_eq!(row.len(), 2);
            assert!(row.contains(&((i + 1) % 4)) && row.contains(&((i + 3) % 4)));
        }
        for m in 1..15 {
            let w = circle_comparator(30, m).unwrap();
            for row in w.row_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-15);
            }
        }
        let truth = gen_circular_alpha(30, 0.3, 1).unwrap();
        let w = circle_comparator(30, 1).unwrap();
        assert_eq!(truth.matrix().map(|v| v != 0.0), w.map(|v| v != 0.0));
        assert!(gen_circular_alpha(4, 0.3, 2).is_err());
        assert!(gen_circular_alpha(4, 0.3, 0).is_err());
    }

    #[test]
    fn row_normalized_indicator() {
        let mut a = DMatrix::zeros(3, 3);
        a[(0, 1)] = 0.2;
        a[(0, 2)] = 0.9;
        a[(1, 0)] = 0.5;
        let w = AlphaMatrix::new(a).unwrap().row_normalized_indicator();
        assert_eq!(w[(0, 1)], 0.5);
        assert_eq!(w[(0, 2)], 0.5);
        assert_eq!(w[(1, 0)], 1.0);
        assert_eq!(w.row(2).sum(), 0.0);
    }

    #[test]
    fn zero_alpha_gives_reduced_form() {
        let cfg = McConfig {
            n: 3,
            t: 4,
            beta: 2.0,
            ..McConfig::default()
        };
        let p = gen_panel(&cfg, &AlphaMatrix::zeros(3), &mut rep_rng(5, 0)).unwrap();
        // replay the same draws by hand
        let mut rng = rep_rng(5, 0);
        let x: Vec<f64> = (0..12).map(|_| StandardNormal.sample(&mut rng)).collect();
        let xi: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eta: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        for r in 0..12 {
            let e: f64 = StandardNormal.sample(&mut rng);
            assert_eq!(p.y[r], 2.0 * x[r] + xi[r % 3] + eta[r / 3] + e);
        }
    }

    #[test]
    fn two_by_two_solve() {
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 1)] = 0.5;
        a[(1, 0)] = 0.5;
        let alpha = AlphaMatrix::new(a).unwrap();
        let cfg = McConfig {
            n: 2,
            t: 3,
            ..McConfig::default()
        };
        let with = gen_panel(&cfg, &alpha, &mut rep_rng(9, 3)).unwrap();
        let without = gen_panel(&cfg, &AlphaMatrix::zeros(2), &mut rep_rng(9, 3)).unwrap();
        // (I - A)^{-1} = (4/3) [[1, 0.5], [0.5, 1]]
        for s in 0..3 {
            let (r0, r1) = (without.y[2 * s], without.y[2 * s + 1]);
            let y0 = 4.0 / 3.0 * (r0 + 0.5 * r1);
            let y1 = 4.0 / 3.0 * (0.5 * r0 + r1);
            assert!((with.y[2 * s] - y0).abs() < 1e-12);
            assert!((with.y[2 * s + 1] - y1).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_system_is_reported() {
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 1)] = 1.0;
        a[(1, 0)] = 1.0;
        let alpha = AlphaMatrix::new(a).unwrap();
        assert!((alpha.spectral_radius() - 1.0).abs() < 1e-12);
        let cfg = McConfig {
            n: 2,
            t: 3,
            ..McConfig::default()
        };
        assert!(matches!(
            gen_panel(&cfg, &alpha, &mut rep_rng(1, 0)),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn lognormal_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        // Var(ε²) ≈ 114, so 10⁷ draws put ±0.01 on the variance at about
        // three standard errors
        let draws = 10_000_000;
        let (s1, s2) = (0..draws).fold((0.0, 0.0), |(s1, s2), _| {
            let e = Dgp::LogNormal.draw(&mut rng);
            (s1 + e, s2 + e * e)
        });
        let m = s1 / draws as f64;
        let v = s2 / draws as f64 - m * m;
        assert!(m.abs() < 0.01, "mean {m}");
        assert!((v - 1.0).abs() < 0.01, "variance {v}");
    }

    #[test]
    fn config_validation() {
        assert!(McConfig::default().validate().is_ok());
        let bad = [
            McConfig { reps: 0, ..McConfig::default() },
            McConfig { nd: 1.2, ..McConfig::default() },
            McConfig { level: 1.0, ..McConfig::default() },
            McConfig { network: Network::Circular { m_true: 15 }, ..McConfig::default() },
            McConfig {
                misspec: Some(Comparator::CircleNeighbor { m: 0 }),
                ..McConfig::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let cfg = McConfig {
            misspec: Some(Comparator::RowNormalizedIndicator),
            ..small_cfg()
        };
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_mc(&cfg).unwrap());
        let three = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| run_mc(&cfg).unwrap());
        assert_eq!(one, three);
        assert_eq!(one, run_mc(&cfg).unwrap());
        assert_eq!(one.completed, 16);
        for (_, rate, _) in &one.rejection {
            assert!((0.0..=1.0).contains(rate));
        }
        assert!((0.0..=1.0).contains(&one.ci95_coverage));
    }

    #[test]
    fn csv_rows_have_header_width() {
        let cfg = McConfig {
            misspec: Some(Comparator::CircleNeighbor { m: 2 }),
            network: Network::Circular { m_true: 1 },
            ..small_cfg()
        };
        let res = run_mc(&cfg).unwrap();
        let rows = res.csv_rows(&cfg);
        assert_eq!(rows.len(), 4);
        for row in &rows {
            assert_eq!(row.len(), McResult::csv_header().len());
        }
        assert_eq!(rows[3][11], "t_TSLS");
        assert!(res.tsls.unwrap().not_identified == 0);
    }

    #[test]
    fn linear_in_means_comparator_is_flagged() {
        let cfg = McConfig {
            nd: 1.0,
            network: Network::RandomGraphUniformRho,
            misspec: Some(Comparator::RowNormalizedIndicator),
            reps: 4,
            ..small_cfg()
        };
        let res = run_mc(&cfg).unwrap();
        let tsls = res.tsls.unwrap();
        assert_eq!(tsls.not_identified, res.completed);
        assert!(tsls.rejection_rate.is_nan());
    }
}
