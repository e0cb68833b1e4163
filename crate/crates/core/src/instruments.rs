//! Potential-peer sets, the peer-characteristic instrument block `Z`, and the
//! selection of linearly independent instrument columns.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::panel::{double_demean_in_place, Panel};
use crate::projection::GreedyBasis;

/// Default relative tolerance for dropping a candidate instrument column.
pub const RANK_TOL: f64 = 1e-8;

/// Potential peers of every individual, stored 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerStructure {
    neighbors: Vec<Vec<usize>>,
}

impl PeerStructure {
    pub fn new(neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let n = neighbors.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "peer structure needs at least 2 individuals, got {n}"
            )));
        }
        for (i, set) in neighbors.iter().enumerate() {
            let mut seen = vec![false; n];
            for &j in set {
                if j >= n {
                    return Err(Error::IndexOutOfRange(format!(
                        "peer {} of individual {} (n = {n})",
                        j + 1,
                        i + 1
                    )));
                }
                if j == i {
                    return Err(Error::InvalidArgument(format!(
                        "individual {} listed as its own peer",
                        i + 1
                    )));
                }
                if seen[j] {
                    return Err(Error::InvalidArgument(format!(
                        "peer {} repeated for individual {}",
                        j + 1,
                        i + 1
                    )));
                }
                seen[j] = true;
            }
        }
        Ok(Self { neighbors })
    }

    /// Builds the structure from directed 0-based pairs `(i, j)` meaning `j ∈ N_i`.
    /// Peers keep the order in which they first appear.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in pairs {
            if i >= n {
                return Err(Error::IndexOutOfRange(format!(
                    "individual {} (n = {n})",
                    i + 1
                )));
            }
            if !neighbors[i].contains(&j) {
                neighbors[i].push(j);
            }
        }
        Self::new(neighbors)
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn peers(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Total number of potential dyads, `Σ n_i`.
    pub fn n_dyads(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    /// Every individual treats all others as potential peers.
    pub fn is_complete(&self) -> bool {
        let n = self.n();
        self.neighbors.iter().all(|s| s.len() == n - 1)
    }
}

/// `N_i = {1..n} \ {i}` for every `i`.
pub fn default_peer_structure(n: usize) -> Result<PeerStructure> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "peer structure needs at least 2 individuals, got {n}"
        )));
    }
    PeerStructure::new(
        (0..n)
            .map(|i| (0..n).filter(|&j| j != i).collect())
            .collect(),
    )
}

/// How each potential peer's regressors enter the instrument block: the
/// peer contributes `X_jt B` with `B` an `L x q` matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum IvSpec {
    /// `B = I_L`.
    Full,
    /// `B = ι_L`: one column per peer, the sum of its regressors.
    Summed,
    Custom(DMatrix<f64>),
}

impl IvSpec {
    /// The combination matrix `B` for `l` regressors.
    pub fn combination(&self, l: usize) -> Result<DMatrix<f64>> {
        if l == 0 {
            return Err(Error::InvalidArgument("no regressors".into()));
        }
        match self {
            IvSpec::Full => Ok(DMatrix::identity(l, l)),
            IvSpec::Summed => Ok(DMatrix::from_element(l, 1, 1.0)),
            IvSpec::Custom(b) => {
                if b.nrows() != l {
                    return Err(Error::DimensionMismatch {
                        what: "combination matrix rows",
                        expected: l,
                        found: b.nrows(),
                    });
                }
                if b.ncols() == 0 || b.ncols() > l {
                    return Err(Error::InvalidArgument(format!(
                        "combination matrix needs 1..={l} columns, got {}",
                        b.ncols()
                    )));
                }
                let mut basis = GreedyBasis::new(l);
                for c in 0..b.ncols() {
                    let col: Vec<f64> = b.column(c).iter().copied().collect();
                    if !basis.try_push(&col, RANK_TOL) {
                        return Err(Error::InvalidArgument(format!(
                            "combination matrix is not of full column rank (column {})",
                            c + 1
                        )));
                    }
                }
                Ok(b.clone())
            }
        }
    }
}

/// Where a column of `Q` came from. Indices are 0-based; `Display` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnOrigin {
    Regressor(usize),
    Peer { unit: usize, peer: usize, comb: usize },
    /// Column of an arbitrary dense candidate block.
    Column(usize),
}

impl fmt::Display for ColumnOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ColumnOrigin::Regressor(l) => write!(f, "X[{}]", l + 1),
            ColumnOrigin::Peer { unit, peer, comb } => {
                write!(f, "Z[unit {}, peer {}, comb {}]", unit + 1, peer + 1, comb + 1)
            }
            ColumnOrigin::Column(k) => write!(f, "Z[{}]", k + 1),
        }
    }
}

/// A block of candidate instrument columns that can be materialized one
/// column at a time.
pub trait ColumnSource {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// Writes column `k` into `out` (length `nrows`).
    fn fill_column(&self, k: usize, out: &mut [f64]);
    fn origin(&self, k: usize) -> ColumnOrigin;
}

impl ColumnSource for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.shape().0
    }
    fn ncols(&self) -> usize {
        self.shape().1
    }
    fn fill_column(&self, k: usize, out: &mut [f64]) {
        out.copy_from_slice(self.column(k).as_slice());
    }
    fn origin(&self, k: usize) -> ColumnOrigin {
        ColumnOrigin::Column(k)
    }
}

/// The sparse peer-characteristic block `Z`.
///
/// Column `(i, j, c)` is nonzero only on the rows of individual `i`, where
/// it holds `(X_jt B)_c` for each period `t`. Only `G = X B` and the column
/// list are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct PeerInstruments {
    n: usize,
    t: usize,
    g: DMatrix<f64>,
    columns: Vec<(usize, usize, usize)>,
}

impl PeerInstruments {
    /// Builds `Z` from raw stacked regressors. Unlike [`build_z`] this does
    /// not require a validated panel, so single-period layouts are allowed.
    pub fn from_regressors(
        n: usize,
        t: usize,
        x: &DMatrix<f64>,
        peers: &PeerStructure,
        spec: &IvSpec,
    ) -> Result<Self> {
        if x.nrows() != n * t {
            return Err(Error::DimensionMismatch {
                what: "regressor rows",
                expected: n * t,
                found: x.nrows(),
            });
        }
        if peers.n() != n {
            return Err(Error::DimensionMismatch {
                what: "peer structure size",
                expected: n,
                found: peers.n(),
            });
        }
        let b = spec.combination(x.ncols())?;
        let g = x * &b;
        let q = b.ncols();
        let mut columns = Vec::with_capacity(peers.n_dyads() * q);
        for i in 0..n {
            for &j in peers.peers(i) {
                for c in 0..q {
                    columns.push((i, j, c));
                }
            }
        }
        Ok(Self { n, t, g, columns })
    }

    /// Number of combinations per peer.
    pub fn q(&self) -> usize {
        self.g.ncols()
    }

    /// `X B`, one row per observation.
    pub fn combinations(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.n * self.t, self.columns.len());
        for k in 0..self.columns.len() {
            self.fill_column(k, z.column_mut(k).as_mut_slice());
        }
        z
    }

    /// The same block after the two-way within transformation.
    pub fn transformed(&self) -> WithinTransformed<'_> {
        WithinTransformed(self)
    }
}

impl ColumnSource for PeerInstruments {
    fn nrows(&self) -> usize {
        self.n * self.t
    }
    fn ncols(&self) -> usize {
        self.columns.len()
    }
    fn fill_column(&self, k: usize, out: &mut [f64]) {
        let (i, j, c) = self.columns[k];
        out.iter_mut().for_each(|v| *v = 0.0);
        for s in 0..self.t {
            out[s * self.n + i] = self.g[(s * self.n + j, c)];
        }
    }
    fn origin(&self, k: usize) -> ColumnOrigin {
        let (unit, peer, comb) = self.columns[k];
        ColumnOrigin::Peer { unit, peer, comb }
    }
}

/// `J Z`, materialized column by column.
#[derive(Debug, Clone, Copy)]
pub struct WithinTransformed<'a>(&'a PeerInstruments);

impl ColumnSource for WithinTransformed<'_> {
    fn nrows(&self) -> usize {
        self.0.nrows()
    }
    fn ncols(&self) -> usize {
        self.0.ncols()
    }
    fn fill_column(&self, k: usize, out: &mut [f64]) {
        self.0.fill_column(k, out);
        double_demean_in_place(out, self.0.n, self.0.t);
    }
    fn origin(&self, k: usize) -> ColumnOrigin {
        self.0.origin(k)
    }
}

/// The peer-characteristic block for a validated panel.
pub fn build_z(p: &Panel, peers: &PeerStructure, spec: &IvSpec) -> Result<PeerInstruments> {
    p.validate()?;
    PeerInstruments::from_regressors(p.n, p.t, &p.x, peers, spec)
}

/// Linearly independent columns of `[X, Z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentMatrix {
    /// `N x K`, the selected columns as they were supplied.
    pub q: DMatrix<f64>,
    pub selected: Vec<ColumnOrigin>,
    pub excluded: Vec<ColumnOrigin>,
}

impl InstrumentMatrix {
    pub fn k(&self) -> usize {
        self.q.ncols()
    }
}

/// Greedy selection over `[X, Z]` in column order.
///
/// A column enters iff its residual after projecting on the columns already
/// selected is larger than `tol` times its own norm. Regressor columns are
/// scanned first; an exactly zero regressor column is an error.
pub fn assemble_q<S: ColumnSource + ?Sized>(
    x: &DMatrix<f64>,
    z: &S,
    tol: f64,
) -> Result<InstrumentMatrix> {
    let n_obs = x.nrows();
    if z.nrows() != n_obs {
        return Err(Error::DimensionMismatch {
            what: "instrument rows",
            expected: n_obs,
            found: z.nrows(),
        });
    }
    let mut basis = GreedyBasis::new(n_obs);
    let mut data = Vec::new();
    let mut selected = Vec::new();
    let mut excluded = Vec::new();

    for l in 0..x.ncols() {
        let col = x.column(l);
        if col.iter().all(|v| *v == 0.0) {
            return Err(Error::DegenerateX { column: l + 1 });
        }
        if basis.try_push(col.as_slice(), tol) {
            data.extend_from_slice(col.as_slice());
            selected.push(ColumnOrigin::Regressor(l));
        } else {
            excluded.push(ColumnOrigin::Regressor(l));
        }
    }

    let mut buf = vec![0.0; n_obs];
    for k in 0..z.ncols() {
        if basis.dim() >= n_obs {
            return Err(Error::TooManyInstruments {
                k: basis.dim(),
                n: n_obs,
            });
        }
        z.fill_column(k, &mut buf);
        if basis.try_push(&buf, tol) {
            data.extend_from_slice(&buf);
            selected.push(z.origin(k));
        } else {
            excluded.push(z.origin(k));
        }
    }

    let k = selected.len();
    if k >= n_obs {
        return Err(Error::TooManyInstruments { k, n: n_obs });
    }
    Ok(InstrumentMatrix {
        q: DMatrix::from_vec(n_obs, k, data),
        selected,
        excluded,
    })
}
