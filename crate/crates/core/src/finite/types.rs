use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance on row sums and total mass of stored distributions and kernels.
pub const STOCHASTIC_TOL: f64 = 1e-12;

fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

fn check_labels(labels: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(labels.len());
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}

/// On-disk form shared by distributions and kernels: `{labels, probs?, rows?}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateDoc {
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<f64>>>,
}

/// A probability vector over labelled states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateDoc", into = "StateDoc")]
pub struct FiniteDist {
    labels: Vec<String>,
    probs: Vec<f64>,
}

impl FiniteDist {
    pub fn new(labels: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        if labels.len() != probs.len() {
            return Err(Error::Dimension(format!(
                "{} labels for {} probabilities",
                labels.len(),
                probs.len()
            )));
        }
        check_labels(&labels)?;
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "entry {p} is not a probability"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL * (probs.len().max(1) as f64) {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {total}"
            )));
        }
        Ok(Self { labels, probs })
    }

    /// Distribution with labels `0..n`.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        Self::new(default_labels(probs.len()), probs)
    }

    /// Normalises nonnegative masses into a distribution.
    pub fn from_masses(labels: Vec<String>, masses: &[f64]) -> Result<Self> {
        if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidDistribution(
                "masses must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            return Err(Error::EmptySupport);
        }
        Self::new(labels, masses.iter().map(|m| m / total).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            labels: default_labels(n),
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// Indices of states carrying positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.probs[i] > 0.0).collect()
    }

    pub fn expect(&self, g: &[f64]) -> f64 {
        self.probs.iter().zip(g).map(|(p, x)| p * x).sum()
    }

    pub fn variance(&self, g: &[f64]) -> f64 {
        let m = self.expect(g);
        self.probs
            .iter()
            .zip(g)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, x)| p * (x - m) * (x - m))
            .sum()
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.probs
            .iter()
            .zip(f.iter().zip(g))
            .map(|(p, (a, b))| p * a * b)
            .sum()
    }

    /// `g - self(g)`.
    pub fn center(&self, g: &[f64]) -> Vec<f64> {
        let m = self.expect(g);
        g.iter().map(|x| x - m).collect()
    }

    /// Total variation distance `½ Σ |p_i − q_i|`.
    pub fn total_variation(&self, other: &[f64]) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

impl TryFrom<StateDoc> for FiniteDist {
    type Error = Error;

    fn try_from(doc: StateDoc) -> Result<Self> {
        let probs = doc
            .probs
            .ok_or_else(|| Error::InvalidDistribution("document has no `probs`".into()))?;
        Self::new(doc.labels, probs)
    }
}

impl From<FiniteDist> for StateDoc {
    fn from(d: FiniteDist) -> Self {
        StateDoc {
            labels: d.labels,
            probs: Some(d.probs),
            rows: None,
        }
    }
}

/// A dense row-stochastic transition matrix on labelled states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateDoc", into = "StateDoc")]
pub struct FiniteKernel {
    labels: Vec<String>,
    rows: DMatrix<f64>,
}

impl FiniteKernel {
    pub fn new(labels: Vec<String>, rows: DMatrix<f64>) -> Result<Self> {
        let n = rows.nrows();
        if rows.ncols() != n || labels.len() != n {
            return Err(Error::Dimension(format!(
                "kernel is {}x{} with {} labels",
                n,
                rows.ncols(),
                labels.len()
            )));
        }
        check_labels(&labels)?;
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let x = rows[(i, j)];
                if !x.is_finite() || x < 0.0 {
                    return Err(Error::NotStochastic { row: i, sum: x });
                }
                sum += x;
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL * (n.max(1) as f64) {
                return Err(Error::NotStochastic { row: i, sum });
            }
        }
        Ok(Self { labels, rows })
    }

    pub fn from_matrix(rows: DMatrix<f64>) -> Result<Self> {
        Self::new(default_labels(rows.nrows()), rows)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("kernel rows must be square".into()));
        }
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Builds a kernel from its off-diagonal part; each diagonal entry absorbs
    /// the remaining mass of its row.
    pub fn from_off_diagonal(labels: Vec<String>, mut off: DMatrix<f64>) -> Result<Self> {
        let n = off.nrows();
        for i in 0..n {
            off[(i, i)] = 0.0;
            let s: f64 = off.row(i).iter().sum();
            // Rounding can leave the remainder a few ulps below zero.
            off[(i, i)] = (1.0 - s).max(0.0);
        }
        Self::new(labels, off)
    }

    /// Every row equal to `mu`.
    pub fn independence(mu: &FiniteDist) -> Self {
        let n = mu.len();
        Self {
            labels: mu.labels().to_vec(),
            rows: DMatrix::from_fn(n, n, |_, j| mu.prob(j)),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            labels: default_labels(n),
            rows: DMatrix::identity(n, n),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[(i, j)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.rows.row(i).iter().copied().collect()
    }

    /// Probability of leaving state `i`.
    pub fn escape(&self, i: usize) -> f64 {
        (0..self.len())
            .filter(|&j| j != i)
            .map(|j| self.rows[(i, j)])
            .sum()
    }

    /// `(K g)(i) = Σ_j K_ij g_j`.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.rows[(i, j)] * g[j]).sum())
            .collect()
    }

    /// `Kⁿ g`.
    pub fn apply_power(&self, g: &[f64], n: usize) -> Vec<f64> {
        let mut out = g.to_vec();
        for _ in 0..n {
            out = self.apply(&out);
        }
        out
    }

    /// `(p K)(j) = Σ_i p_i K_ij`.
    pub fn push_forward(&self, p: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|j| (0..n).map(|i| p[i] * self.rows[(i, j)]).sum())
            .collect()
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::Dimension("label count".into()));
        }
        check_labels(&labels)?;
        self.labels = labels;
        Ok(self)
    }

    /// Largest entrywise difference over the given rows.
    pub fn max_abs_diff_on_rows(&self, other: &FiniteKernel, rows: &[usize]) -> f64 {
        let n = self.len();
        rows.iter()
            .flat_map(|&i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (self.rows[(i, j)] - other.rows[(i, j)]).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &FiniteKernel) -> f64 {
        let rows: Vec<usize> = (0..self.len()).collect();
        self.max_abs_diff_on_rows(other, &rows)
    }
}

impl TryFrom<StateDoc> for FiniteKernel {
    type Error = Error;

    fn try_from(doc: StateDoc) -> Result<Self> {
        let rows = doc
            .rows
            .ok_or_else(|| Error::Dimension("document has no `rows`".into()))?;
        Self::from_rows(&rows)?.with_labels(doc.labels)
    }
}

impl From<FiniteKernel> for StateDoc {
    fn from(k: FiniteKernel) -> Self {
        let n = k.len();
        StateDoc {
            labels: k.labels,
            probs: None,
            rows: Some(
                (0..n)
                    .map(|i| k.rows.row(i).iter().copied().collect())
                    .collect(),
            ),
        }
    }
}

/// A real-valued function on the states, stored as its value vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RealFunction(Vec<f64>);

impl RealFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidFunction(format!(
                "entry {i} is {}",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self(vec![c; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Pointwise product.
    pub fn times(&self, other: &RealFunction) -> RealFunction {
        RealFunction(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect())
    }
}

impl std::ops::Index<usize> for RealFunction {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for RealFunction {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RealFunction> for Vec<f64> {
    fn from(f: RealFunction) -> Self {
        f.0
    }
}

/// Row-stochastic table from `T` (rows) to an auxiliary space `Y` (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct RefreshTable {
    y_labels: Vec<String>,
    rows: DMatrix<f64>,
}

impl RefreshTable {
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        let y = rows.ncols();
        Self::with_labels(default_labels(y), rows)
    }

    pub fn with_labels(y_labels: Vec<String>, rows: DMatrix<f64>) -> Result<Self> {
        if y_labels.len() != rows.ncols() {
            return Err(Error::Dimension("refresh table labels".into()));
        }
        check_labels(&y_labels)?;
        for i in 0..rows.nrows() {
            let mut s = 0.0;
            for j in 0..rows.ncols() {
                let x = rows[(i, j)];
                if !x.is_finite() || x < 0.0 {
                    return Err(Error::NotStochastic { row: i, sum: x });
                }
                s += x;
            }
            if (s - 1.0).abs() > STOCHASTIC_TOL * (rows.ncols().max(1) as f64) {
                return Err(Error::NotStochastic { row: i, sum: s });
            }
        }
        Ok(Self { y_labels, rows })
    }

    pub fn t_len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn y_len(&self) -> usize {
        self.rows.ncols()
    }

    pub fn y_labels(&self) -> &[String] {
        &self.y_labels
    }

    pub fn get(&self, t: usize, y: usize) -> f64 {
        self.rows[(t, y)]
    }

    /// `(Q g)(t) = Σ_y Q_t(y) g(t, y)` for `g` laid out as `t * |Y| + y`.
    pub fn integrate(&self, g: &[f64]) -> Vec<f64> {
        let ny = self.y_len();
        (0..self.t_len())
            .map(|t| (0..ny).map(|y| self.rows[(t, y)] * g[t * ny + y]).sum())
            .collect()
    }
}
