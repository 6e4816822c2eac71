use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::finite::{FiniteKernel, STOCHASTIC_TOL};
use crate::{Error, Result};

/// One draw of the auxiliary variable: `m` latent points with nonnegative
/// weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VRecord {
    pub z: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl VRecord {
    pub fn new(z: Vec<f64>, zeta: Vec<f64>) -> Result<Self> {
        if z.len() != zeta.len() || z.is_empty() {
            return Err(Error::Dimension(format!(
                "record with {} points and {} weights",
                z.len(),
                zeta.len()
            )));
        }
        if zeta.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidFunction(
                "zeta weights must be finite and >= 0".into(),
            ));
        }
        Ok(Self { z, zeta })
    }

    pub fn m(&self) -> usize {
        self.z.len()
    }

    /// `ζ(1) = Σ ζ^(i)`.
    pub fn zeta1(&self) -> f64 {
        self.zeta.iter().sum()
    }

    /// `ζ(f) = Σ ζ^(i) f(θ, z^(i))`.
    pub fn zeta_f(&self, f: TestFn, theta: f64) -> f64 {
        self.z
            .iter()
            .zip(&self.zeta)
            .map(|(z, w)| w * f.eval(theta, *z))
            .sum()
    }

    /// `ζ̂(f) = ζ(f)/ζ(1)`, zero when `ζ(1) = 0`.
    pub fn zeta_hat(&self, f: TestFn, theta: f64) -> f64 {
        let z1 = self.zeta1();
        if z1 > 0.0 {
            self.zeta_f(f, theta) / z1
        } else {
            0.0
        }
    }
}

/// Named test functions `f(θ, z)` on parameter values and latent points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestFn {
    One,
    Theta,
    Z,
    ThetaPlusZ,
    ThetaTimesZ,
}

impl TestFn {
    pub const ALL: [TestFn; 5] = [
        TestFn::One,
        TestFn::Theta,
        TestFn::Z,
        TestFn::ThetaPlusZ,
        TestFn::ThetaTimesZ,
    ];

    pub fn eval(self, theta: f64, z: f64) -> f64 {
        match self {
            TestFn::One => 1.0,
            TestFn::Theta => theta,
            TestFn::Z => z,
            TestFn::ThetaPlusZ => theta + z,
            TestFn::ThetaTimesZ => theta * z,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TestFn::One => "one",
            TestFn::Theta => "theta",
            TestFn::Z => "z",
            TestFn::ThetaPlusZ => "theta-plus-z",
            TestFn::ThetaTimesZ => "theta-times-z",
        }
    }

    /// True when `f(θ, ·)` is constant in `z`.
    pub fn marginal(self) -> bool {
        matches!(self, TestFn::One | TestFn::Theta)
    }
}

impl fmt::Display for TestFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestFn::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown function `{s}` (expected one of: {})",
                    TestFn::ALL.map(TestFn::name).join(", ")
                ))
            })
    }
}

/// Auxiliary-variable model on a finite parameter grid.
///
/// `prior` is the density of the reference measure on the grid, `q_u` and
/// `eta` define the approximate level, and `sample_v` draws the estimator
/// `V ~ Q^(V)_{θu}`.
pub trait LatentModel: Send + Sync {
    fn id(&self) -> &str;
    fn theta_values(&self) -> &[f64];
    fn prior(&self) -> &[f64];
    fn u_count(&self) -> usize;
    fn q_u(&self, theta: usize, u: usize) -> f64;
    fn eta(&self, theta: usize, u: usize) -> f64;
    fn sample_v(&self, theta: usize, u: usize, rng: &mut dyn RngCore) -> VRecord;
    /// Default parameter proposal of the base chain.
    fn proposal(&self) -> &FiniteKernel;

    fn as_enumerable(&self) -> Option<&dyn EnumerableModel> {
        None
    }

    fn theta_count(&self) -> usize {
        self.theta_values().len()
    }

    fn sample_u(&self, theta: usize, rng: &mut dyn RngCore) -> usize {
        let x: f64 = rng.random();
        let mut acc = 0.0;
        for u in 0..self.u_count() {
            acc += self.q_u(theta, u);
            if x < acc {
                return u;
            }
        }
        self.u_count() - 1
    }
}

/// Models whose `Q^(V)` has finitely many atoms, shared across `(θ, u)`.
pub trait EnumerableModel {
    fn atoms(&self) -> &[VRecord];
    fn q_v(&self, theta: usize, u: usize, atom: usize) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvDoc {
    pub m: usize,
    pub z_support: Vec<f64>,
    pub zeta_table: Vec<f64>,
    /// `probs[θ][u][z][k]`: probability that one component lands on latent
    /// point `z_support[z]` with weight `zeta_table[k]`.
    pub probs: Vec<Vec<Vec<Vec<f64>>>>,
}

/// JSON layout of a table model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    #[serde(default)]
    pub id: Option<String>,
    pub theta: Vec<f64>,
    pub prior: Vec<f64>,
    #[serde(rename = "qU")]
    pub q_u: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    #[serde(rename = "qV")]
    pub q_v: QvDoc,
    /// Parameter proposal; uniform over the grid when absent.
    #[serde(default)]
    pub proposal: Option<Vec<Vec<f64>>>,
}

/// Finite model whose `V` consists of `m` iid components, each a pair
/// `(z, ζ)` from a per-`(θ,u)` table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ModelDoc", into = "ModelDoc")]
pub struct TableModel {
    doc: ModelDoc,
    id: String,
    proposal: FiniteKernel,
    /// Per `(θ,u)`, cumulative cell probabilities for sampling.
    cumulative: Vec<Vec<f64>>,
    atoms: Vec<VRecord>,
    /// Cell index of every component of every atom.
    atom_cells: Vec<Vec<usize>>,
}

fn check_prob_row(what: &str, row: &[f64]) -> Result<()> {
    if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::Config(format!(
            "{what}: negative or non-finite entry"
        )));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL * row.len().max(1) as f64 {
        return Err(Error::Config(format!("{what}: sums to {s}")));
    }
    Ok(())
}

impl TryFrom<ModelDoc> for TableModel {
    type Error = Error;

    fn try_from(doc: ModelDoc) -> Result<Self> {
        let nt = doc.theta.len();
        if nt == 0 {
            return Err(Error::Config("empty theta grid".into()));
        }
        if doc.prior.len() != nt || doc.q_u.len() != nt || doc.eta.len() != nt {
            return Err(Error::Config(
                "prior, qU and eta need one row per theta".into(),
            ));
        }
        if doc.prior.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Config("prior must be finite and >= 0".into()));
        }
        let nu = doc.q_u[0].len();
        if nu == 0 {
            return Err(Error::Config("empty U space".into()));
        }
        for t in 0..nt {
            if doc.q_u[t].len() != nu || doc.eta[t].len() != nu {
                return Err(Error::Config(format!(
                    "row {t}: qU/eta width differs from {nu}"
                )));
            }
            check_prob_row(&format!("qU[{t}]"), &doc.q_u[t])?;
            if doc.eta[t].iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
                return Err(Error::Config(format!("eta[{t}] must be finite and >= 0")));
            }
        }
        let qv = &doc.q_v;
        if qv.m == 0 || qv.z_support.is_empty() || qv.zeta_table.is_empty() {
            return Err(Error::Config("qV needs m >= 1 and nonempty tables".into()));
        }
        if qv.zeta_table.iter().any(|z| !(*z >= 0.0) || !z.is_finite()) {
            return Err(Error::Config("zeta_table must be finite and >= 0".into()));
        }
        let (nz, nk) = (qv.z_support.len(), qv.zeta_table.len());
        let cells = nz * nk;
        if qv.probs.len() != nt {
            return Err(Error::Config("qV.probs needs one entry per theta".into()));
        }
        let mut cumulative = Vec::with_capacity(nt * nu);
        for t in 0..nt {
            if qv.probs[t].len() != nu {
                return Err(Error::Config(format!("qV.probs[{t}] needs {nu} entries")));
            }
            for u in 0..nu {
                let cell = &qv.probs[t][u];
                if cell.len() != nz || cell.iter().any(|r| r.len() != nk) {
                    return Err(Error::Config(format!(
                        "qV.probs[{t}][{u}] must be {nz}x{nk}"
                    )));
                }
                let flat: Vec<f64> = cell.iter().flatten().copied().collect();
                check_prob_row(&format!("qV.probs[{t}][{u}]"), &flat)?;
                let mut acc = 0.0;
                cumulative.push(
                    flat.iter()
                        .map(|p| {
                            acc += p;
                            acc
                        })
                        .collect(),
                );
            }
        }
        let n_atoms = cells
            .checked_pow(qv.m as u32)
            .filter(|n| *n <= 1 << 20)
            .ok_or_else(|| Error::Config("qV has too many atoms to enumerate".into()))?;
        let mut atoms = Vec::with_capacity(n_atoms);
        let mut atom_cells = Vec::with_capacity(n_atoms);
        for a in 0..n_atoms {
            let mut rest = a;
            let mut idx = vec![0; qv.m];
            for slot in idx.iter_mut().rev() {
                *slot = rest % cells;
                rest /= cells;
            }
            atoms.push(VRecord {
                z: idx.iter().map(|c| qv.z_support[c / nk]).collect(),
                zeta: idx.iter().map(|c| qv.zeta_table[c % nk]).collect(),
            });
            atom_cells.push(idx);
        }
        let proposal = match &doc.proposal {
            Some(rows) => FiniteKernel::from_rows(rows)?,
            None => FiniteKernel::independence(&crate::finite::FiniteDist::uniform(nt)),
        };
        if proposal.len() != nt {
            return Err(Error::Config(
                "proposal must be square over the theta grid".into(),
            ));
        }
        let proposal = proposal.with_labels(doc.theta.iter().map(|t| t.to_string()).collect())?;
        Ok(Self {
            id: doc.id.clone().unwrap_or_else(|| "table".into()),
            doc,
            proposal,
            cumulative,
            atoms,
            atom_cells,
        })
    }
}

impl From<TableModel> for ModelDoc {
    fn from(m: TableModel) -> Self {
        m.doc
    }
}

impl TableModel {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn doc(&self) -> &ModelDoc {
        &self.doc
    }

    fn cells(&self) -> usize {
        self.doc.q_v.z_support.len() * self.doc.q_v.zeta_table.len()
    }

    fn cell_prob(&self, theta: usize, u: usize, cell: usize) -> f64 {
        let nk = self.doc.q_v.zeta_table.len();
        self.doc.q_v.probs[theta][u][cell / nk][cell % nk]
    }

    /// The same model with `η ↦ η + ε` everywhere, which enforces the
    /// support condition for any `ε > 0` while leaving `π` unchanged.
    pub fn inflated(&self, eps: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::OutOfRange(format!("inflation {eps}")));
        }
        let mut doc = self.doc.clone();
        for row in &mut doc.eta {
            for e in row.iter_mut() {
                *e += eps;
            }
        }
        doc.id = Some(format!("{}+{eps}", self.id));
        Self::try_from(doc)
    }

    /// A copy whose `η(θ,u)` equals the conditional mean of `ζ(1)`, so the
    /// approximate and exact levels coincide in expectation.
    pub fn with_exact_eta(&self) -> Result<Self> {
        let mut doc = self.doc.clone();
        for t in 0..self.theta_count() {
            for u in 0..self.u_count() {
                doc.eta[t][u] = (0..self.atoms.len())
                    .map(|a| self.q_v(t, u, a) * self.atoms[a].zeta1())
                    .sum();
            }
        }
        doc.id = Some(format!("{}-exact-eta", self.id));
        Self::try_from(doc)
    }
}

impl LatentModel for TableModel {
    fn id(&self) -> &str {
        &self.id
    }

    fn theta_values(&self) -> &[f64] {
        &self.doc.theta
    }

    fn prior(&self) -> &[f64] {
        &self.doc.prior
    }

    fn u_count(&self) -> usize {
        self.doc.q_u[0].len()
    }

    fn q_u(&self, theta: usize, u: usize) -> f64 {
        self.doc.q_u[theta][u]
    }

    fn eta(&self, theta: usize, u: usize) -> f64 {
        self.doc.eta[theta][u]
    }

    fn sample_v(&self, theta: usize, u: usize, rng: &mut dyn RngCore) -> VRecord {
        let cum = &self.cumulative[theta * self.u_count() + u];
        let nk = self.doc.q_v.zeta_table.len();
        let m = self.doc.q_v.m;
        let mut z = Vec::with_capacity(m);
        let mut zeta = Vec::with_capacity(m);
        for _ in 0..m {
            let x: f64 = rng.random::<f64>() * cum[cum.len() - 1];
            let c = cum.partition_point(|p| *p <= x).min(cum.len() - 1);
            z.push(self.doc.q_v.z_support[c / nk]);
            zeta.push(self.doc.q_v.zeta_table[c % nk]);
        }
        VRecord { z, zeta }
    }

    fn proposal(&self) -> &FiniteKernel {
        &self.proposal
    }

    fn as_enumerable(&self) -> Option<&dyn EnumerableModel> {
        Some(self)
    }
}

impl EnumerableModel for TableModel {
    fn atoms(&self) -> &[VRecord] {
        &self.atoms
    }

    fn q_v(&self, theta: usize, u: usize, atom: usize) -> f64 {
        debug_assert!(self.cells() > 0);
        self.atom_cells[atom]
            .iter()
            .map(|&c| self.cell_prob(theta, u, c))
            .product()
    }
}

/// Generative variant of a table model: every `ζ^(i)` is multiplied by an
/// independent mean-one lognormal factor, so `Q^(V)` is continuous but all
/// conditional means (and hence `π̇`, `ν`) are those of the inner model.
#[derive(Debug, Clone)]
pub struct NoisyModel {
    inner: TableModel,
    noise: LogNormal<f64>,
    sigma: f64,
    id: String,
}

impl NoisyModel {
    pub fn new(inner: TableModel, sigma: f64) -> Result<Self> {
        let noise = LogNormal::new(-0.5 * sigma * sigma, sigma)
            .map_err(|e| Error::OutOfRange(format!("sigma {sigma}: {e}")))?;
        Ok(Self {
            id: format!("{}~lognormal({sigma})", inner.id()),
            inner,
            noise,
            sigma,
        })
    }

    pub fn inner(&self) -> &TableModel {
        &self.inner
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn inflated(&self, eps: f64) -> Result<Self> {
        Self::new(self.inner.inflated(eps)?, self.sigma)
    }
}

impl LatentModel for NoisyModel {
    fn id(&self) -> &str {
        &self.id
    }

    fn theta_values(&self) -> &[f64] {
        self.inner.theta_values()
    }

    fn prior(&self) -> &[f64] {
        self.inner.prior()
    }

    fn u_count(&self) -> usize {
        self.inner.u_count()
    }

    fn q_u(&self, theta: usize, u: usize) -> f64 {
        self.inner.q_u(theta, u)
    }

    fn eta(&self, theta: usize, u: usize) -> f64 {
        self.inner.eta(theta, u)
    }

    fn sample_v(&self, theta: usize, u: usize, rng: &mut dyn RngCore) -> VRecord {
        let mut v = self.inner.sample_v(theta, u, rng);
        for w in &mut v.zeta {
            *w *= self.noise.sample(rng);
        }
        v
    }

    fn proposal(&self) -> &FiniteKernel {
        self.inner.proposal()
    }
}

/// The built-in fully enumerable model: three parameter values, a binary
/// `U`, and two components per `V`, each landing on `z ∈ {0,1}` with weight
/// 0.2 or 0.6.
pub fn two_coin() -> TableModel {
    let cells = |p: [f64; 4]| vec![vec![p[0], p[1]], vec![p[2], p[3]]];
    let doc = ModelDoc {
        id: Some("two-coin".into()),
        theta: vec![0.0, 1.0, 2.0],
        prior: vec![0.3, 0.45, 0.25],
        q_u: vec![vec![0.5, 0.5], vec![0.7, 0.3], vec![0.4, 0.6]],
        eta: vec![vec![1.0, 0.6], vec![0.8, 1.4], vec![0.5, 0.9]],
        q_v: QvDoc {
            m: 2,
            z_support: vec![0.0, 1.0],
            zeta_table: vec![0.2, 0.6],
            probs: vec![
                vec![cells([0.4, 0.1, 0.3, 0.2]), cells([0.25, 0.25, 0.25, 0.25])],
                vec![cells([0.1, 0.3, 0.2, 0.4]), cells([0.3, 0.2, 0.1, 0.4])],
                vec![cells([0.2, 0.2, 0.4, 0.2]), cells([0.1, 0.4, 0.4, 0.1])],
            ],
        },
        proposal: None,
    };
    TableModel::try_from(doc).expect("preset is valid")
}

/// Look up a named preset.
pub fn preset(name: &str) -> Result<TableModel> {
    match name {
        "two-coin" => Ok(two_coin()),
        other => Err(Error::Config(format!("unknown preset `{other}`"))),
    }
}
