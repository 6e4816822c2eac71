use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::kernel::require_reversible;
use super::types::{FiniteDist, FiniteKernel};
use crate::{Error, Result};

/// Largest tolerated asymmetry of `D^{1/2} K D^{-1/2}` before decomposing.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalues at least this negative make a kernel non-positive.
pub const POSITIVITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralInfo {
    /// Eigenvalues on the support of the measure, sorted descending.
    pub eigenvalues: Vec<f64>,
    /// `1 − N`, where `N = −inf ⟨g, Kg⟩_μ` over centred unit-norm `g`.
    pub left_gap: f64,
    pub positive: bool,
    pub aperiodic: bool,
    /// 0 for a positive kernel, 1 otherwise.
    pub negativity_indicator: u8,
}

/// Eigen-decomposition of a reversible kernel restricted to the support of
/// its invariant measure.
#[derive(Debug, Clone)]
pub(crate) struct Eigenbasis {
    pub support: Vec<usize>,
    pub sqrt_mu: Vec<f64>,
    /// Descending eigenvalues.
    pub values: Vec<f64>,
    /// Columns are Euclidean-orthonormal eigenvectors of the symmetrized
    /// operator, in the order of `values`.
    pub vectors: DMatrix<f64>,
}

impl Eigenbasis {
    pub fn new(k: &FiniteKernel, mu: &FiniteDist) -> Result<Self> {
        require_reversible(k, mu)?;
        let support = mu.support();
        if support.is_empty() {
            return Err(Error::EmptySupport);
        }
        let m = support.len();
        let sqrt_mu: Vec<f64> = support.iter().map(|&i| mu.prob(i).sqrt()).collect();
        let s = DMatrix::from_fn(m, m, |a, b| {
            sqrt_mu[a] * k.get(support[a], support[b]) / sqrt_mu[b]
        });
        let mut residual: f64 = 0.0;
        for a in 0..m {
            for b in (a + 1)..m {
                residual = residual.max((s[(a, b)] - s[(b, a)]).abs());
            }
        }
        if residual > SYMMETRY_TOL {
            return Err(Error::NotReversible { gap: residual });
        }
        let sym = (&s + s.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(Self {
            support,
            sqrt_mu,
            values,
            vectors,
        })
    }

    /// Coefficients `⟨g, e_i⟩_μ` against the μ-orthonormal eigenfunctions.
    pub fn coefficients(&self, g: &[f64]) -> Vec<f64> {
        let m = self.support.len();
        (0..m)
            .map(|c| {
                (0..m)
                    .map(|r| self.sqrt_mu[r] * g[self.support[r]] * self.vectors[(r, c)])
                    .sum()
            })
            .collect()
    }

    /// Reassemble a function on the full state space from eigen-coefficients;
    /// zero off the support.
    pub fn synthesize(&self, coef: &[f64], n: usize) -> Vec<f64> {
        let mut g = vec![0.0; n];
        for (r, &i) in self.support.iter().enumerate() {
            let v: f64 = coef
                .iter()
                .enumerate()
                .map(|(c, b)| b * self.vectors[(r, c)])
                .sum();
            g[i] = v / self.sqrt_mu[r];
        }
        g
    }
}

pub fn spectral_info(k: &FiniteKernel, mu: &FiniteDist) -> Result<SpectralInfo> {
    let basis = Eigenbasis::new(k, mu)?;
    Ok(info_from_values(basis.values))
}

pub(crate) fn info_from_values(eigenvalues: Vec<f64>) -> SpectralInfo {
    let smallest = *eigenvalues.last().expect("nonempty spectrum");
    let n_k = if eigenvalues.len() > 1 {
        -smallest
    } else {
        0.0
    };
    let positive = smallest >= -POSITIVITY_TOL;
    SpectralInfo {
        left_gap: 1.0 - n_k,
        positive,
        aperiodic: smallest > -1.0 + POSITIVITY_TOL,
        negativity_indicator: u8::from(!positive),
        eigenvalues,
    }
}
