//! Exact transition kernels of the base, IS, DA, PM-parent and PM chains of
//! an enumerable model.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::measures::{tu_labels, ModelMeasures};
use super::model::{LatentModel, TestFn};
use crate::finite::{augment_with, build_da, build_mh, FiniteDist, FiniteKernel, RealFunction};
use crate::{Error, Result};

fn check_proposal(model: &dyn LatentModel, q: &FiniteKernel) -> Result<()> {
    if q.len() != model.theta_count() {
        return Err(Error::Dimension(format!(
            "proposal on {} states, grid has {}",
            q.len(),
            model.theta_count()
        )));
    }
    Ok(())
}

/// The approximate PM kernel on `T × U` targeting `μ ∝ prior·Q^(U)·η`, with
/// its invariant measure.
pub fn base_kernel(
    model: &dyn LatentModel,
    q: &FiniteKernel,
) -> Result<(FiniteKernel, FiniteDist)> {
    check_proposal(model, q)?;
    let (nt, nu) = (model.theta_count(), model.u_count());
    let n = nt * nu;
    let masses: Vec<f64> = (0..n)
        .map(|s| model.prior()[s / nu] * model.q_u(s / nu, s % nu) * model.eta(s / nu, s % nu))
        .collect();
    let labels = tu_labels(model);
    let mu = FiniteDist::from_masses(labels.clone(), &masses)?;
    let proposal = DMatrix::from_fn(n, n, |a, b| {
        q.get(a / nu, b / nu) * model.q_u(b / nu, b % nu)
    });
    let k = build_mh(&FiniteKernel::new(labels, proposal)?, &mu)?;
    Ok((k, mu))
}

/// `K̄ = K ⊗ Q^(V)`: the IS0 chain on `T × U × V`, invariant for `μ̄`.
pub fn is_kernel(k: &FiniteKernel, ms: &ModelMeasures) -> Result<FiniteKernel> {
    Ok(augment_with(k, &ms.mu, &ms.refresh)?.0)
}

/// Which of the two delayed-acceptance kernels to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DaVariant {
    /// DA correction of `K̄`: a base-chain hold still refreshes `v` and
    /// submits it to the second stage.
    Kernel,
    /// The two-stage sampler: a base-chain hold is a rejection and no `v`
    /// is drawn.
    Algorithm,
}

/// Delayed-acceptance correction by `w` on `T × U × V`, invariant for `π`.
pub fn da_kernel(k: &FiniteKernel, ms: &ModelMeasures, variant: DaVariant) -> Result<FiniteKernel> {
    let kbar = is_kernel(k, ms)?;
    let stage_one = match variant {
        DaVariant::Kernel => kbar,
        DaVariant::Algorithm => {
            let na = ms.atom_len;
            let n = kbar.len();
            let off = DMatrix::from_fn(n, n, |x, y| {
                if x / na == y / na {
                    0.0
                } else {
                    kbar.get(x, y)
                }
            });
            FiniteKernel::from_off_diagonal(kbar.labels().to_vec(), off)?
        }
    };
    build_da(&stage_one, &RealFunction::new(ms.w.clone())?)
}

/// The PM parent on `T × U × V`: proposes `(θ', u', v')` jointly from
/// `q ⊗ Q^(U) ⊗ Q^(V)` and targets `π`.
pub fn pm_parent_kernel(
    model: &dyn LatentModel,
    q: &FiniteKernel,
    ms: &ModelMeasures,
) -> Result<FiniteKernel> {
    check_proposal(model, q)?;
    let (nu, na) = (ms.u_len, ms.atom_len);
    let n = ms.pi.len();
    let proposal = DMatrix::from_fn(n, n, |x, y| {
        let (s2, a2) = (y / na, y % na);
        let t2 = s2 / nu;
        q.get(x / na / nu, t2) * model.q_u(t2, s2 % nu) * ms.refresh.get(s2, a2)
    });
    build_mh(
        &FiniteKernel::new(ms.pi.labels().to_vec(), proposal)?,
        &ms.pi,
    )
}

/// The PM kernel `M` on `T × V` with refresh `Q̂ = Σ_u Q^(U) Q^(V)`.
#[derive(Debug, Clone)]
pub struct PmKernel {
    pub kernel: FiniteKernel,
    /// `π` marginalised over `U`.
    pub pi: FiniteDist,
    /// `ζ̂(f)` on `T × V`.
    pub zeta_hat_f: Vec<f64>,
}

pub fn pm_kernel(
    model: &dyn LatentModel,
    q: &FiniteKernel,
    ms: &ModelMeasures,
) -> Result<PmKernel> {
    check_proposal(model, q)?;
    let (nt, nu, na) = (ms.t_len, ms.u_len, ms.atom_len);
    let n = nt * na;
    let q_hat = |t: usize, a: usize| -> f64 {
        (0..nu)
            .map(|u| model.q_u(t, u) * ms.refresh.get(t * nu + u, a))
            .sum()
    };
    let mut mass = vec![0.0; n];
    let mut zeta_hat_f = vec![0.0; n];
    for t in 0..nt {
        for a in 0..na {
            for u in 0..nu {
                mass[t * na + a] += ms.pi.prob(ms.tuv(t, u, a));
            }
            // ζ̂(f) does not depend on u.
            zeta_hat_f[t * na + a] = ms.zeta_hat_f[ms.tuv(t, 0, a)];
        }
    }
    let labels: Vec<String> = (0..n)
        .map(|i| format!("({},v{})", model.theta_values()[i / na], i % na))
        .collect();
    let pi = FiniteDist::from_masses(labels.clone(), &mass)?;
    let proposal = DMatrix::from_fn(n, n, |x, y| q.get(x / na, y / na) * q_hat(y / na, y % na));
    let kernel = build_mh(&FiniteKernel::new(labels, proposal)?, &pi)?;
    Ok(PmKernel {
        kernel,
        pi,
        zeta_hat_f,
    })
}

/// `ζ̂(f)` lifted to `T × U × V` for any test function.
pub fn zeta_hat_table(model: &dyn LatentModel, ms: &ModelMeasures, f: TestFn) -> Result<Vec<f64>> {
    let en = model.as_enumerable().ok_or(Error::NotEnumerable)?;
    let mut out = vec![0.0; ms.pi.len()];
    for t in 0..ms.t_len {
        for u in 0..ms.u_len {
            for (a, v) in en.atoms().iter().enumerate() {
                out[ms.tuv(t, u, a)] = v.zeta_hat(f, model.theta_values()[t]);
            }
        }
    }
    Ok(out)
}
