//! Communication graphs and stochastic mixing matrices.
//!
//! Edges are 0-based ordered pairs `(i, j)` meaning agent `i` sends to agent
//! `j`. Self-loops are implicit and never stored. Mixing matrices follow the
//! compliance rule `W_ij > 0` only if `(j, i)` is an edge or `i = j`.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{rng, stream};

/// Absolute per-row/column stochasticity tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Above this size Perron vectors are computed by power iteration.
pub const DENSE_PERRON_MAX_N: usize = 64;
const POWER_ITER_CAP: usize = 100_000;
const DEGENERATE_RHO: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub n: usize,
    pub directed: bool,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    Ring,
    Path,
    Complete,
    RandomStronglyConnected,
    Custom(Vec<(usize, usize)>),
}

impl Topology {
    /// Validates and normalizes an edge list. Undirected edges are stored once
    /// as `(min, max)`; duplicates are dropped.
    pub fn new(n: usize, edges: Vec<(usize, usize)>, directed: bool) -> Result<Self> {
        if n < 2 {
            return Err(Error::Size(format!("need at least 2 agents, got {n}")));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidTopology(format!("edge ({i},{j}) out of range for n={n}")));
            }
            if i == j {
                return Err(Error::InvalidTopology(format!("self-loop ({i},{i}) is implicit")));
            }
            set.insert(if directed { (i, j) } else { (i.min(j), i.max(j)) });
        }
        let topo = Topology { n, directed, edges: set.into_iter().collect() };
        if !topo.is_connected() {
            return Err(Error::Connectivity(if directed { "strongly connected" } else { "connected" }));
        }
        Ok(topo)
    }

    fn adjacency(&self) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let mut out = vec![Vec::new(); self.n];
        let mut inc = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            out[i].push(j);
            inc[j].push(i);
            if !self.directed {
                out[j].push(i);
                inc[i].push(j);
            }
        }
        (out, inc)
    }

    /// `N_i^in`, including `i` itself, sorted.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        let (_, inc) = self.adjacency();
        let mut v = inc[i].clone();
        v.push(i);
        v.sort_unstable();
        v.dedup();
        v
    }

    /// `N_i^out`, including `i` itself, sorted.
    pub fn out_neighbors(&self, i: usize) -> Vec<usize> {
        let (out, _) = self.adjacency();
        let mut v = out[i].clone();
        v.push(i);
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Degree excluding the self-loop (undirected graphs).
    pub fn degree(&self, i: usize) -> usize {
        self.in_neighbors(i).len() - 1
    }

    /// Whether `(i, j)` is an edge (either orientation when undirected).
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        if self.directed {
            self.edges.binary_search(&(i, j)).is_ok()
        } else {
            self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
        }
    }

    /// Undirected connectivity or directed strong connectivity.
    pub fn is_connected(&self) -> bool {
        let (out, inc) = self.adjacency();
        reaches_all(&out, self.n) && reaches_all(&inc, self.n)
    }
}

fn reaches_all(adj: &[Vec<usize>], n: usize) -> bool {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Builds a topology of the given family.
pub fn build_topology(kind: &TopologyKind, n: usize, directed: bool, seed: u64) -> Result<Topology> {
    if n < 2 {
        return Err(Error::Size(format!("need at least 2 agents, got {n}")));
    }
    let edges: Vec<(usize, usize)> = match kind {
        TopologyKind::Ring => {
            let mut e: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
            if n == 2 && !directed {
                e.truncate(1);
            }
            e
        }
        TopologyKind::Path => (0..n - 1).map(|i| (i, i + 1)).collect(),
        TopologyKind::Complete => {
            let mut e = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if i != j && (directed || i < j) {
                        e.push((i, j));
                    }
                }
            }
            e
        }
        TopologyKind::RandomStronglyConnected => random_edges(n, directed, seed),
        TopologyKind::Custom(e) => e.clone(),
    };
    Topology::new(n, edges, directed)
}

// A random Hamiltonian cycle (digraph) or random spanning tree (undirected)
// guarantees connectivity; extra edges are then added independently.
fn random_edges(n: usize, directed: bool, seed: u64) -> Vec<(usize, usize)> {
    let mut g = rng(seed, stream::TOPOLOGY);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut g);
    let mut edges = Vec::new();
    if directed {
        for k in 0..n {
            edges.push((perm[k], perm[(k + 1) % n]));
        }
    } else {
        for k in 1..n {
            let parent = perm[g.random_range(0..k)];
            edges.push((parent, perm[k]));
        }
    }
    let p_extra = if directed { 0.2 } else { 0.3 };
    for i in 0..n {
        for j in 0..n {
            if i != j && (directed || i < j) && g.random::<f64>() < p_extra {
                edges.push((i, j));
            }
        }
    }
    edges
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StochasticKind {
    RowStochastic,
    ColumnStochastic,
    DoublyStochastic,
}

/// A validated nonnegative stochastic matrix with its Perron data.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    pub entries: DMatrix<f64>,
    pub kind: StochasticKind,
    /// Left Perron vector `r` (row and doubly kinds).
    pub perron_left: Option<DVector<f64>>,
    /// Right Perron vector `c` (column and doubly kinds).
    pub perron_right: Option<DVector<f64>>,
}

#[derive(Serialize, Deserialize)]
struct MixingMatrixJson {
    kind: StochasticKind,
    entries: Vec<Vec<f64>>,
}

impl MixingMatrix {
    /// Validates nonnegativity and stochasticity, then computes Perron vectors.
    pub fn new(entries: DMatrix<f64>, kind: StochasticKind) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::Shape(format!("mixing matrix must be square, got {:?}", entries.shape())));
        }
        if entries.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Kind("entries must be finite and nonnegative".into()));
        }
        let (row_res, col_res) = stochastic_residuals(&entries);
        let need_row = matches!(kind, StochasticKind::RowStochastic | StochasticKind::DoublyStochastic);
        let need_col = matches!(kind, StochasticKind::ColumnStochastic | StochasticKind::DoublyStochastic);
        if need_row && row_res > STOCHASTIC_TOL {
            return Err(Error::Kind(format!("row sums deviate from 1 by {row_res:e}")));
        }
        if need_col && col_res > STOCHASTIC_TOL {
            return Err(Error::Kind(format!("column sums deviate from 1 by {col_res:e}")));
        }
        let n = entries.nrows();
        let (perron_left, perron_right) = match kind {
            StochasticKind::DoublyStochastic => {
                let u = DVector::from_element(n, 1.0 / n as f64);
                (Some(u.clone()), Some(u))
            }
            StochasticKind::RowStochastic => (Some(perron_left(&entries)?), None),
            StochasticKind::ColumnStochastic => (None, Some(perron_right(&entries)?)),
        };
        Ok(MixingMatrix { entries, kind, perron_left, perron_right })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Perron vector matching the kind: `r` for row/doubly, `c` for column.
    pub fn perron(&self) -> &DVector<f64> {
        self.perron_left.as_ref().or(self.perron_right.as_ref()).expect("constructor sets one Perron vector")
    }

    /// Left Perron vector; for a column-stochastic matrix it is computed on demand.
    pub fn left(&self) -> Result<DVector<f64>> {
        match &self.perron_left {
            Some(r) => Ok(r.clone()),
            None => perron_left(&self.entries),
        }
    }

    /// Right Perron vector; for a row-stochastic matrix it is computed on demand.
    pub fn right(&self) -> Result<DVector<f64>> {
        match &self.perron_right {
            Some(c) => Ok(c.clone()),
            None => perron_right(&self.entries),
        }
    }

    /// Max row-sum and column-sum deviation from 1.
    pub fn stochasticity_residuals(&self) -> (f64, f64) {
        stochastic_residuals(&self.entries)
    }

    /// Residual of the Perron identity for the kind's vector(s).
    pub fn perron_residual(&self) -> f64 {
        let mut res: f64 = 0.0;
        if let Some(r) = &self.perron_left {
            res = res.max((r.transpose() * &self.entries - r.transpose()).amax());
        }
        if let Some(c) = &self.perron_right {
            res = res.max((&self.entries * c - c).amax());
        }
        res
    }

    /// Sparsity compliance with `topo`: `(i,j)` nonzero only for `(j,i) ∈ E` or `i = j`.
    pub fn is_compliant(&self, topo: &Topology) -> bool {
        let n = self.n();
        if topo.n != n {
            return false;
        }
        (0..n).all(|i| (0..n).all(|j| i == j || self.entries[(i, j)] == 0.0 || topo.has_edge(j, i)))
    }

    pub fn has_positive_diagonal(&self) -> bool {
        self.entries.diagonal().iter().all(|&v| v > 0.0)
    }

    pub fn is_symmetric(&self) -> bool {
        (&self.entries - self.entries.transpose()).amax() <= 1e-15
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows = (0..self.n()).map(|i| self.entries.row(i).iter().copied().collect()).collect();
        serde_json::to_value(MixingMatrixJson { kind: self.kind, entries: rows }).expect("plain data")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let j: MixingMatrixJson = serde_json::from_value(v.clone())?;
        let n = j.entries.len();
        if j.entries.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("entries must be an n×n row-major array".into()));
        }
        let flat: Vec<f64> = j.entries.into_iter().flatten().collect();
        MixingMatrix::new(DMatrix::from_row_slice(n, n, &flat), j.kind)
    }
}

fn stochastic_residuals(a: &DMatrix<f64>) -> (f64, f64) {
    let row = a.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max);
    let col = a.column_iter().map(|c| (c.sum() - 1.0).abs()).fold(0.0, f64::max);
    (row, col)
}

/// Metropolis weights `D_ij = 1/(1+max(deg_i,deg_j))` on an undirected graph.
pub fn metropolis_weights(topo: &Topology) -> Result<MixingMatrix> {
    if topo.directed {
        return Err(Error::Kind("Metropolis weights need an undirected topology".into()));
    }
    let n = topo.n;
    let deg: Vec<usize> = (0..n).map(|i| topo.degree(i)).collect();
    let mut d = DMatrix::zeros(n, n);
    for &(i, j) in &topo.edges {
        let w = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
        d[(i, j)] = w;
        d[(j, i)] = w;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = 1.0 - off;
    }
    MixingMatrix::new(d, StochasticKind::DoublyStochastic)
}

/// `R_ij = 1/|N_i^in|` over the in-neighborhood of `i`.
pub fn row_stochastic_weights(topo: &Topology) -> Result<MixingMatrix> {
    let n = topo.n;
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        let nb = topo.in_neighbors(i);
        let w = 1.0 / nb.len() as f64;
        for j in nb {
            r[(i, j)] = w;
        }
    }
    MixingMatrix::new(r, StochasticKind::RowStochastic)
}

/// `C_ij = 1/|N_j^out|` down column `j` over the out-neighborhood of `j`.
pub fn col_stochastic_weights(topo: &Topology) -> Result<MixingMatrix> {
    let n = topo.n;
    let mut c = DMatrix::zeros(n, n);
    for j in 0..n {
        let nb = topo.out_neighbors(j);
        let w = 1.0 / nb.len() as f64;
        for i in nb {
            c[(i, j)] = w;
        }
    }
    MixingMatrix::new(c, StochasticKind::ColumnStochastic)
}

/// `(M + (t−1)I)/t`.
pub fn lazy_transform(m: &MixingMatrix, t: f64) -> Result<MixingMatrix> {
    if !(t >= 1.0) || !t.is_finite() {
        return Err(Error::Parameter(format!("lazy parameter t must be ≥ 1, got {t}")));
    }
    let n = m.n();
    let entries = (&m.entries + DMatrix::<f64>::identity(n, n) * (t - 1.0)) / t;
    let mut out = MixingMatrix::new(entries, m.kind)?;
    // The Perron vectors are unchanged by the transform.
    out.perron_left = m.perron_left.clone();
    out.perron_right = m.perron_right.clone();
    Ok(out)
}

/// Stochastic left Perron vector `r` with `rᵀM = rᵀ`.
pub fn perron_left(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    perron_right(&m.transpose())
}

/// Stochastic right Perron vector `c` with `Mc = c`.
pub fn perron_right(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = m.nrows();
    if n == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    let a = if n <= DENSE_PERRON_MAX_N {
        let (v, _) = linalg::null_vector(&(m - DMatrix::<f64>::identity(n, n)));
        let s = v.sum();
        if s.abs() < 1e-300 {
            return Err(Error::Numerical("Perron eigenvector has zero sum".into()));
        }
        v / s
    } else {
        power_iteration(m)?
    };
    let a = a.map(|v| if v.abs() < 1e-300 { 0.0 } else { v });
    if a.iter().any(|&v| v < -1e-12) {
        return Err(Error::Numerical("Perron vector has negative entries (is 1 a simple eigenvalue?)".into()));
    }
    let a = a.map(|v| v.max(0.0));
    let s = a.sum();
    Ok(a / s)
}

// Iterates the lazy matrix (M+I)/2, which shares the Perron vector and is
// aperiodic even when M has a zero diagonal.
fn power_iteration(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = m.nrows();
    let lazy = (m + DMatrix::<f64>::identity(n, n)) * 0.5;
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..POWER_ITER_CAP {
        let next = &lazy * &v;
        let next = &next / next.sum();
        if (m * &next - &next).amax() < 1e-12 {
            return Ok(next);
        }
        v = next;
    }
    Err(Error::Numerical(format!("power iteration did not converge in {POWER_ITER_CAP} iterations")))
}

/// The six norm-equivalence constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormConstants {
    pub k_r2: f64,
    pub k_2r: f64,
    pub k_c2: f64,
    pub k_2c: f64,
    pub k_rc: f64,
    pub k_cr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralConstants {
    pub n: usize,
    pub rho_r: f64,
    pub rho_c: f64,
    /// Second-largest singular value, when `R` is doubly stochastic.
    pub sigma2: Option<f64>,
    pub r_min: f64,
    pub r_max: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub zeta: f64,
    pub k: NormConstants,
}

impl SpectralConstants {
    pub fn rho_r_degenerate(&self) -> bool {
        self.rho_r < DEGENERATE_RHO
    }

    pub fn rho_c_degenerate(&self) -> bool {
        self.rho_c < DEGENERATE_RHO
    }
}

/// `ρ_R = ‖R − 1rᵀ‖_R`, `ρ_C = ‖C − c1ᵀ‖_C`, Perron extrema, `ζ = rᵀc` and
/// the norm-equivalence table.
pub fn contraction_factors(
    r_mat: &DMatrix<f64>,
    r: &DVector<f64>,
    c_mat: &DMatrix<f64>,
    c: &DVector<f64>,
) -> Result<SpectralConstants> {
    let n = r_mat.nrows();
    if r.len() != n || c.len() != n || c_mat.nrows() != n {
        return Err(Error::Shape("R, r, C, c sizes disagree".into()));
    }
    if r.iter().chain(c.iter()).any(|&v| v <= 0.0) {
        return Err(Error::Degenerate("Perron vector has a zero entry".into()));
    }
    let ones = DVector::from_element(n, 1.0);
    let rho_r = induced_norm_r(&(r_mat - &ones * r.transpose()), r);
    let rho_c = induced_norm_c(&(c_mat - c * ones.transpose()), c);
    let (row_res, col_res) = stochastic_residuals(r_mat);
    let sigma2 = if row_res <= STOCHASTIC_TOL && col_res <= STOCHASTIC_TOL {
        Some(sigma2(r_mat))
    } else {
        None
    };
    let (r_min, r_max) = (r.min(), r.max());
    let (c_min, c_max) = (c.min(), c.max());
    Ok(SpectralConstants {
        n,
        rho_r,
        rho_c,
        sigma2,
        r_min,
        r_max,
        c_min,
        c_max,
        zeta: r.dot(c),
        k: NormConstants {
            k_r2: r_max.sqrt(),
            k_2r: 1.0 / r_min.sqrt(),
            k_c2: 1.0 / c_min.sqrt(),
            k_2c: c_max.sqrt(),
            k_rc: (r_max * c_max).sqrt(),
            k_cr: 1.0 / (c_min * r_min).sqrt(),
        },
    })
}

/// Convenience wrapper over [`contraction_factors`] reading the Perron vectors.
pub fn spectral_constants(r_mat: &MixingMatrix, c_mat: &MixingMatrix) -> Result<SpectralConstants> {
    let r = r_mat.left()?;
    let c = c_mat.right()?;
    contraction_factors(&r_mat.entries, &r, &c_mat.entries, &c)
}

/// Second-largest singular value (`0` for `n = 1`).
pub fn sigma2(d: &DMatrix<f64>) -> f64 {
    linalg::singular_values_desc(d).get(1).copied().unwrap_or(0.0)
}

/// `‖x‖_R = ‖(diag(√r) ⊗ I_m) x‖`.
pub fn norm_r(x: &DVector<f64>, r: &DVector<f64>, m: usize) -> f64 {
    (0..r.len()).map(|i| r[i] * linalg::block(x, i, m).norm_squared()).sum::<f64>().sqrt()
}

/// `‖y‖_C = ‖(diag(√c)⁻¹ ⊗ I_m) y‖`.
pub fn norm_c(y: &DVector<f64>, c: &DVector<f64>, m: usize) -> f64 {
    (0..c.len()).map(|i| linalg::block(y, i, m).norm_squared() / c[i]).sum::<f64>().sqrt()
}

/// Matrix norm induced by `‖·‖_R`.
pub fn induced_norm_r(a: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
    let s = r.map(f64::sqrt);
    let scaled = DMatrix::from_diagonal(&s) * a * DMatrix::from_diagonal(&s.map(|v| 1.0 / v));
    linalg::spectral_norm(&scaled)
}

/// Matrix norm induced by `‖·‖_C`.
pub fn induced_norm_c(a: &DMatrix<f64>, c: &DVector<f64>) -> f64 {
    let s = c.map(f64::sqrt);
    let scaled = DMatrix::from_diagonal(&s.map(|v| 1.0 / v)) * a * DMatrix::from_diagonal(&s);
    linalg::spectral_norm(&scaled)
}
