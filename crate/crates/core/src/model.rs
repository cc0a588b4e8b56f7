//! Core value types shared by every module: datasets, covariates, graphs,
//! hyperparameters, and metric selection.
//!
//! All types are immutable value objects after construction and are safe to
//! share across worker threads.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVectorView};

use crate::error::{Error, Result};
use crate::linalg;

/// An n×p matrix of observations: rows are samples, columns are variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: DMatrix<f64>,
    names: Vec<String>,
}

impl Dataset {
    /// Validates finiteness, shape, and name uniqueness.
    pub fn new(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidParam(
                "dataset needs at least one sample and one variable".into(),
            ));
        }
        if names.len() != values.ncols() {
            return Err(Error::Dimension(format!(
                "{} variable names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidParam(format!(
                    "duplicate variable name {name:?}"
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset entries".into()));
        }
        Ok(Self { values, names })
    }

    /// Builds a dataset with generated names x1..xp.
    pub fn with_default_names(values: DMatrix<f64>) -> Result<Self> {
        let names = (1..=values.ncols()).map(|i| format!("x{i}")).collect();
        Self::new(values, names)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, i: usize) -> DVectorView<'_, f64> {
        self.values.column(i)
    }

    /// New dataset restricted to the given columns, order preserved.
    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        for &i in indices {
            if i >= self.p() {
                return Err(Error::NodeOutOfRange {
                    index: i,
                    p: self.p(),
                });
            }
        }
        let values = DMatrix::from_fn(self.n(), indices.len(), |r, c| {
            self.values[(r, indices[c])]
        });
        let names = indices.iter().map(|&i| self.names[i].clone()).collect();
        Self::new(values, names)
    }
}

/// The n×m matrix of exogenous-covariate values, required to have full
/// column rank and fewer columns than rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMatrix {
    values: DMatrix<f64>,
}

impl CovariateMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (n, m) = values.shape();
        if m == 0 {
            return Err(Error::InvalidParam(
                "covariate matrix needs at least one column".into(),
            ));
        }
        if m >= n {
            return Err(Error::InvalidParam(format!(
                "covariate count m={m} must be smaller than sample count n={n}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariate entries".into()));
        }
        let rank = linalg::rank(&values);
        if rank != m {
            return Err(Error::RankDeficient { rank, m });
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// True iff the all-ones vector lies in the column space, so the matrix
    /// absorbs per-sample means under either covariate-adjusted metric.
    pub fn spans_intercept(&self) -> bool {
        let n = self.n();
        let ones = nalgebra::DVector::from_element(n, 1.0);
        let qtq = self.values.transpose() * &self.values;
        let Ok(chol) = linalg::cholesky(qtq, "QᵀQ") else {
            return false;
        };
        let w = chol.solve(&(self.values.transpose() * &ones));
        let resid = &self.values * w - ones;
        resid.norm() < 1e-8 * (n as f64).sqrt()
    }
}

/// Prior precision τ, prior degrees of freedom δ, and covariate-effect
/// precision υ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub tau: f64,
    pub delta: f64,
    pub upsilon: f64,
}

impl Hyperparams {
    pub fn new(tau: f64, delta: f64, upsilon: f64) -> Result<Self> {
        for (name, v) in [("tau", tau), ("delta", delta), ("upsilon", upsilon)] {
            if !v.is_finite() {
                return Err(Error::NonFinite(name.into()));
            }
            if v <= 0.0 {
                return Err(Error::InvalidParam(format!("{name} must be positive")));
            }
        }
        Ok(Self {
            tau,
            delta,
            upsilon,
        })
    }

    pub(crate) fn validate(&self) -> Result<()> {
        Self::new(self.tau, self.delta, self.upsilon).map(|_| ())
    }
}

impl Default for Hyperparams {
    /// τ = 1, δ = 2, υ = 1.
    fn default() -> Self {
        Self {
            tau: 1.0,
            delta: 2.0,
            upsilon: 1.0,
        }
    }
}

/// True iff the edge set admits a topological order on p nodes.
///
/// Out-of-range endpoints and self-loops yield `false`.
pub fn is_acyclic(edges: &[(usize, usize)], p: usize) -> bool {
    let mut indegree = vec![0usize; p];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); p];
    for &(u, v) in edges {
        if u >= p || v >= p || u == v {
            return false;
        }
        indegree[v] += 1;
        children[u].push(v);
    }
    let mut queue: Vec<usize> = (0..p).filter(|&v| indegree[v] == 0).collect();
    let mut visited = 0usize;
    while let Some(u) = queue.pop() {
        visited += 1;
        for &v in &children[u] {
            indegree[v] -= 1;
            if indegree[v] == 0 {
                queue.push(v);
            }
        }
    }
    visited == p
}

/// A directed acyclic graph on p nodes, stored as an ordered edge set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    p: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Dag {
    /// Rejects out-of-range endpoints, self-loops, and directed cycles.
    /// Duplicate input edges collapse to one.
    pub fn new(p: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= p {
                return Err(Error::NodeOutOfRange { index: u, p });
            }
            if v >= p {
                return Err(Error::NodeOutOfRange { index: v, p });
            }
            if u == v {
                return Err(Error::Cyclic);
            }
            set.insert((u, v));
        }
        let list: Vec<_> = set.iter().copied().collect();
        if !is_acyclic(&list, p) {
            return Err(Error::Cyclic);
        }
        Ok(Self { p, edges: set })
    }

    pub fn empty(p: usize) -> Self {
        Self {
            p,
            edges: BTreeSet::new(),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in ascending (source, target) order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u, v))
    }

    /// Sorted parent list of v.
    pub fn parents(&self, v: usize) -> Result<Vec<usize>> {
        if v >= self.p {
            return Err(Error::NodeOutOfRange { index: v, p: self.p });
        }
        Ok(self
            .edges
            .iter()
            .filter(|&&(_, t)| t == v)
            .map(|&(s, _)| s)
            .collect())
    }

    /// Sorted child list of u.
    pub fn children(&self, u: usize) -> Result<Vec<usize>> {
        if u >= self.p {
            return Err(Error::NodeOutOfRange { index: u, p: self.p });
        }
        Ok(self
            .edges
            .range((u, 0)..(u + 1, 0))
            .map(|&(_, t)| t)
            .collect())
    }

    /// All parent lists at once, each sorted; O(p + |E|).
    pub fn parent_sets(&self) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); self.p];
        for &(u, v) in &self.edges {
            sets[v].push(u);
        }
        for s in &mut sets {
            s.sort_unstable();
        }
        sets
    }

    /// One topological order (guaranteed to exist by construction).
    pub fn topological_order(&self) -> Vec<usize> {
        let mut indegree = vec![0usize; self.p];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); self.p];
        for &(u, v) in &self.edges {
            indegree[v] += 1;
            children[u].push(v);
        }
        let mut ready: Vec<usize> = (0..self.p).filter(|&v| indegree[v] == 0).collect();
        ready.reverse();
        let mut order = Vec::with_capacity(self.p);
        while let Some(u) = ready.pop() {
            order.push(u);
            for &v in &children[u] {
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    ready.push(v);
                }
            }
        }
        debug_assert_eq!(order.len(), self.p);
        order
    }
}

/// Prior over graph structures entering the total score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphPrior {
    /// Log-prior 0 for every graph; comparisons depend only on the data.
    Uniform,
    /// Each edge multiplies the prior by kappa ∈ (0, 1].
    EdgePenalty { kappa: f64 },
}

impl GraphPrior {
    pub fn edge_penalty(kappa: f64) -> Result<Self> {
        if !kappa.is_finite() || kappa <= 0.0 || kappa > 1.0 {
            return Err(Error::InvalidParam(
                "edge-penalty kappa must lie in (0, 1]".into(),
            ));
        }
        Ok(Self::EdgePenalty { kappa })
    }

    pub fn log_prior(&self, edge_count: usize) -> f64 {
        match self {
            Self::Uniform => 0.0,
            Self::EdgePenalty { kappa } => edge_count as f64 * kappa.ln(),
        }
    }
}

/// Which score metric to use, with its covariates where required.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Bge,
    Bgecm,
    Residual,
}

impl MetricKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Bge => "bge",
            Self::Bgecm => "bgecm",
            Self::Residual => "residual",
        }
    }
}

/// Metric selection. BGe forbids covariates; BGeCM and the residual metric
/// require them.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpec {
    kind: MetricKind,
    covariates: Option<CovariateMatrix>,
    center: bool,
}

impl MetricSpec {
    /// BGe on column-centered data (the default).
    pub fn bge() -> Self {
        Self {
            kind: MetricKind::Bge,
            covariates: None,
            center: true,
        }
    }

    /// BGe without the column-centering step.
    pub fn bge_uncentered() -> Self {
        Self {
            kind: MetricKind::Bge,
            covariates: None,
            center: false,
        }
    }

    pub fn bgecm(covariates: CovariateMatrix) -> Self {
        Self {
            kind: MetricKind::Bgecm,
            covariates: Some(covariates),
            center: false,
        }
    }

    pub fn residual(covariates: CovariateMatrix) -> Self {
        Self {
            kind: MetricKind::Residual,
            covariates: Some(covariates),
            center: false,
        }
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn covariates(&self) -> Option<&CovariateMatrix> {
        self.covariates.as_ref()
    }

    pub fn center(&self) -> bool {
        self.center
    }

    pub(crate) fn validate_for(&self, data: &Dataset) -> Result<()> {
        match (self.kind, &self.covariates) {
            (MetricKind::Bge, Some(_)) => Err(Error::InvalidParam(
                "the bge metric takes no covariates".into(),
            )),
            (MetricKind::Bge, None) => Ok(()),
            (MetricKind::Bgecm | MetricKind::Residual, None) => Err(Error::InvalidParam(format!(
                "the {} metric requires covariates",
                self.kind.as_str()
            ))),
            (MetricKind::Bgecm | MetricKind::Residual, Some(q)) => {
                if q.n() != data.n() {
                    return Err(Error::Dimension(format!(
                        "covariates have {} rows but the dataset has {} samples",
                        q.n(),
                        data.n()
                    )));
                }
                Ok(())
            }
        }
    }
}
