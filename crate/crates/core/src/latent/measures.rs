use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{LatentModel, TestFn, VRecord};
use crate::finite::{FiniteDist, RefreshTable};
use crate::{Error, Result};

/// The three weight functionals of one `(θ, u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub zeta1: f64,
    pub zeta_f: f64,
    pub zeta_hat_f: f64,
    pub xi1: f64,
    pub xi_f: f64,
}

/// `ζ(f)`, `ζ̂(f)` and `ξ(f) = ζ(f)/η(1)` at `(θ, u, v)`.
pub fn eval_weights(
    model: &dyn LatentModel,
    theta: usize,
    u: usize,
    v: &VRecord,
    f: TestFn,
) -> Result<Weights> {
    weights_with_eta(
        model.eta(theta, u),
        model.theta_values()[theta],
        theta,
        u,
        v,
        f,
    )
}

pub(crate) fn weights_with_eta(
    eta: f64,
    theta_value: f64,
    theta: usize,
    u: usize,
    v: &VRecord,
    f: TestFn,
) -> Result<Weights> {
    let zeta1 = v.zeta1();
    let zeta_f = v.zeta_f(f, theta_value);
    if eta == 0.0 && zeta1 > 0.0 {
        return Err(Error::SupportViolation { theta, u, zeta1 });
    }
    let (xi1, xi_f) = if eta > 0.0 {
        (zeta1 / eta, zeta_f / eta)
    } else {
        (0.0, 0.0)
    };
    Ok(Weights {
        zeta1,
        zeta_f,
        zeta_hat_f: if zeta1 > 0.0 { zeta_f / zeta1 } else { 0.0 },
        xi1,
        xi_f,
    })
}

pub(crate) fn tu_labels(model: &dyn LatentModel) -> Vec<String> {
    let mut out = Vec::new();
    for th in model.theta_values() {
        for u in 0..model.u_count() {
            out.push(format!("({th},{u})"));
        }
    }
    out
}

/// Exact measures, constants and conditional moments of an enumerable model.
///
/// States of `T × U` are indexed `θ·|U| + u`; states of `T × U × V` are
/// indexed `(θ·|U| + u)·|V| + a` with `a` the atom index.
#[derive(Debug, Clone)]
pub struct ModelMeasures {
    pub f: TestFn,
    pub t_len: usize,
    pub u_len: usize,
    pub atom_len: usize,
    pub c_eta: f64,
    pub c_zeta: f64,
    pub c_xi: f64,
    /// Exact `ν(f)`.
    pub nu_f: f64,
    /// `μ` on `T × U`.
    pub mu: FiniteDist,
    /// `μ ⊗ Q^(V)` on `T × U × V`.
    pub mu_bar: FiniteDist,
    pub pi: FiniteDist,
    /// `Q^(V)` as a table from `T × U` to atoms.
    pub refresh: RefreshTable,
    /// `w = ξ(1)/c_ξ` on `T × U × V`.
    pub w: Vec<f64>,
    /// `ζ̂(f)` on `T × U × V`.
    pub zeta_hat_f: Vec<f64>,
    /// `ξ(f)` on `T × U × V`.
    pub xi_f: Vec<f64>,
    pub xi1: Vec<f64>,
    /// `w* = m_1/c_ξ` on `T × U`.
    pub w_star: Vec<f64>,
    pub m_1: Vec<f64>,
    pub m_f: Vec<f64>,
    /// Conditional variance of `ξ(f̄)` under `Q^(V)`, on `T × U`.
    pub v_fbar: Vec<f64>,
    /// θ-marginals of `μ` and `π` (the latter is also that of `ν`).
    pub mu_theta: Vec<f64>,
    pub pi_theta: Vec<f64>,
}

impl ModelMeasures {
    pub fn tu(&self, theta: usize, u: usize) -> usize {
        theta * self.u_len + u
    }

    pub fn tuv(&self, theta: usize, u: usize, atom: usize) -> usize {
        self.tu(theta, u) * self.atom_len + atom
    }

    /// `m_f̄ = m_f − ν(f)·m_1`.
    pub fn m_fbar(&self) -> Vec<f64> {
        self.m_f
            .iter()
            .zip(&self.m_1)
            .map(|(a, b)| a - self.nu_f * b)
            .collect()
    }

    /// `ξ(f̄) = ξ(f) − ν(f)·ξ(1)` on `T × U × V`.
    pub fn xi_fbar(&self) -> Vec<f64> {
        self.xi_f
            .iter()
            .zip(&self.xi1)
            .map(|(a, b)| a - self.nu_f * b)
            .collect()
    }
}

/// Enumerate every `(θ, u, v)` atom of `model` and compute the exact
/// measures for the test function `f`.
pub fn enumerate_measures(model: &dyn LatentModel, f: TestFn) -> Result<ModelMeasures> {
    let en = model.as_enumerable().ok_or(Error::NotEnumerable)?;
    let atoms = en.atoms();
    let (nt, nu, na) = (model.theta_count(), model.u_count(), atoms.len());
    let prior = model.prior();
    let thetas = model.theta_values();

    let mut mu_mass = vec![0.0; nt * nu];
    let mut pi_mass = vec![0.0; nt * nu * na];
    let mut refresh = DMatrix::zeros(nt * nu, na);
    let mut xi1 = vec![0.0; nt * nu * na];
    let mut xi_f = vec![0.0; nt * nu * na];
    let mut zeta_hat_f = vec![0.0; nt * nu * na];
    let mut nu_num = 0.0;
    for t in 0..nt {
        for u in 0..nu {
            let s = t * nu + u;
            let base = prior[t] * model.q_u(t, u);
            let eta = model.eta(t, u);
            mu_mass[s] = base * eta;
            for (a, v) in atoms.iter().enumerate() {
                let q = en.q_v(t, u, a);
                refresh[(s, a)] = q;
                let wts = weights_with_eta(eta, thetas[t], t, u, v, f);
                let wts = match wts {
                    Ok(w) => w,
                    Err(e) if q > 0.0 => return Err(e),
                    // Atoms outside the support of Q^(V) never occur.
                    Err(_) => Weights {
                        zeta1: 0.0,
                        zeta_f: 0.0,
                        zeta_hat_f: 0.0,
                        xi1: 0.0,
                        xi_f: 0.0,
                    },
                };
                let i = s * na + a;
                pi_mass[i] = base * q * wts.zeta1;
                nu_num += base * q * wts.zeta_f;
                xi1[i] = wts.xi1;
                xi_f[i] = wts.xi_f;
                zeta_hat_f[i] = wts.zeta_hat_f;
            }
        }
    }
    let c_eta: f64 = mu_mass.iter().sum();
    let c_zeta: f64 = pi_mass.iter().sum();
    if !(c_eta > 0.0) || !c_eta.is_finite() {
        return Err(Error::ZeroNormalizer(c_eta));
    }
    if !(c_zeta > 0.0) || !c_zeta.is_finite() {
        return Err(Error::ZeroNormalizer(c_zeta));
    }
    let c_xi = c_zeta / c_eta;
    let nu_f = nu_num / c_zeta;

    let tu = tu_labels(model);
    let tuv: Vec<String> = tu
        .iter()
        .flat_map(|l| (0..na).map(move |a| format!("{l}:v{a}")))
        .collect();
    let mu = FiniteDist::from_masses(tu.clone(), &mu_mass)?;
    let pi = FiniteDist::from_masses(tuv.clone(), &pi_mass)?;
    let mu_bar_mass: Vec<f64> = (0..nt * nu * na)
        .map(|i| mu.prob(i / na) * refresh[(i / na, i % na)])
        .collect();
    let mu_bar = FiniteDist::from_masses(tuv, &mu_bar_mass)?;
    let refresh = RefreshTable::with_labels((0..na).map(|a| format!("v{a}")).collect(), refresh)?;

    let mut m_1 = vec![0.0; nt * nu];
    let mut m_f = vec![0.0; nt * nu];
    let mut v_fbar = vec![0.0; nt * nu];
    for s in 0..nt * nu {
        let (mut e1, mut ef, mut e2) = (0.0, 0.0, 0.0);
        for a in 0..na {
            let q = refresh.get(s, a);
            let i = s * na + a;
            let xb = xi_f[i] - nu_f * xi1[i];
            e1 += q * xi1[i];
            ef += q * xi_f[i];
            e2 += q * xb * xb;
        }
        m_1[s] = e1;
        m_f[s] = ef;
        let mean = ef - nu_f * e1;
        v_fbar[s] = (e2 - mean * mean).max(0.0);
    }
    let w: Vec<f64> = xi1.iter().map(|x| x / c_xi).collect();
    let w_star: Vec<f64> = m_1.iter().map(|x| x / c_xi).collect();

    let mut mu_theta = vec![0.0; nt];
    let mut pi_theta = vec![0.0; nt];
    for s in 0..nt * nu {
        mu_theta[s / nu] += mu.prob(s);
        for a in 0..na {
            pi_theta[s / nu] += pi.prob(s * na + a);
        }
    }

    Ok(ModelMeasures {
        f,
        t_len: nt,
        u_len: nu,
        atom_len: na,
        c_eta,
        c_zeta,
        c_xi,
        nu_f,
        mu,
        mu_bar,
        pi,
        refresh,
        w,
        zeta_hat_f,
        xi_f,
        xi1,
        w_star,
        m_1,
        m_f,
        v_fbar,
        mu_theta,
        pi_theta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportWitness {
    pub theta: usize,
    pub u: usize,
    pub zeta1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    pub holds: bool,
    pub exhaustive: bool,
    pub checked: usize,
    pub witness: Option<SupportWitness>,
}

/// Check `η(1) = 0 ⇒ ζ(1) = 0`: exhaustively for enumerable models, on
/// `sample_budget` draws from the prior otherwise.
pub fn support_check(model: &dyn LatentModel, sample_budget: usize, seed: u64) -> SupportReport {
    let (nt, nu) = (model.theta_count(), model.u_count());
    if let Some(en) = model.as_enumerable() {
        let mut checked = 0;
        for t in 0..nt {
            for u in 0..nu {
                if model.eta(t, u) > 0.0 {
                    checked += en.atoms().len();
                    continue;
                }
                for (a, v) in en.atoms().iter().enumerate() {
                    checked += 1;
                    if en.q_v(t, u, a) > 0.0 && v.zeta1() > 0.0 {
                        return SupportReport {
                            holds: false,
                            exhaustive: true,
                            checked,
                            witness: Some(SupportWitness {
                                theta: t,
                                u,
                                zeta1: v.zeta1(),
                            }),
                        };
                    }
                }
            }
        }
        return SupportReport {
            holds: true,
            exhaustive: true,
            checked,
            witness: None,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: f64 = model.prior().iter().sum();
    for i in 0..sample_budget {
        let x: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut t = nt - 1;
        for (j, p) in model.prior().iter().enumerate() {
            acc += p;
            if x < acc {
                t = j;
                break;
            }
        }
        let u = model.sample_u(t, &mut rng);
        if model.eta(t, u) > 0.0 {
            continue;
        }
        let v = model.sample_v(t, u, &mut rng);
        if v.zeta1() > 0.0 {
            return SupportReport {
                holds: false,
                exhaustive: false,
                checked: i + 1,
                witness: Some(SupportWitness {
                    theta: t,
                    u,
                    zeta1: v.zeta1(),
                }),
            };
        }
    }
    SupportReport {
        holds: true,
        exhaustive: false,
        checked: sample_budget,
        witness: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::model::{two_coin, NoisyModel, TableModel};

    #[test]
    fn eval_weights_hand_example() {
        let v = VRecord::new(vec![0.0, 1.0], vec![0.3, 0.7]).unwrap();
        // f-values (2, 4) at z = 0, 1 via f = θ + z... use θ = 2 and z ∈ {0, 2}.
        let v2 = VRecord::new(vec![0.0, 2.0], v.zeta.clone()).unwrap();
        let w = weights_with_eta(0.5, 2.0, 0, 0, &v2, TestFn::ThetaPlusZ).unwrap();
        assert!((w.zeta_f - 3.4).abs() < 1e-12);
        assert!((w.zeta_hat_f - 3.4).abs() < 1e-12);
        assert!((w.xi_f - 6.8).abs() < 1e-12);
        let one = weights_with_eta(0.5, 2.0, 0, 0, &v, TestFn::One).unwrap();
        assert_eq!(one.zeta_hat_f, 1.0);
        assert!((one.xi1 - 2.0).abs() < 1e-12);
        assert!(matches!(
            weights_with_eta(0.0, 2.0, 1, 1, &v, TestFn::One),
            Err(Error::SupportViolation { theta: 1, u: 1, .. })
        ));
    }

    #[test]
    fn zeta_hat_is_scale_invariant() {
        let v = VRecord::new(vec![0.0, 1.0, 1.0], vec![0.1, 0.5, 0.2]).unwrap();
        let s = VRecord::new(v.z.clone(), v.zeta.iter().map(|x| 3.0 * x).collect()).unwrap();
        assert!((v.zeta_hat(TestFn::Z, 1.0) - s.zeta_hat(TestFn::Z, 1.0)).abs() < 1e-15);
        assert!((3.0 * v.zeta_f(TestFn::Z, 1.0) - s.zeta_f(TestFn::Z, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn two_coin_measures_are_normalized() {
        let m = two_coin();
        for f in TestFn::ALL {
            let ms = enumerate_measures(&m, f).unwrap();
            assert!((ms.mu.expect(&ms.w_star) - 1.0).abs() < 1e-10);
            assert!((ms.mu_bar.expect(&ms.w) - 1.0).abs() < 1e-10);
            assert!((ms.mu.expect(&ms.m_f) - ms.c_xi * ms.nu_f).abs() < 1e-10);
            // w* is the Q^(V)-average of w.
            for s in 0..ms.t_len * ms.u_len {
                let avg: f64 = (0..ms.atom_len)
                    .map(|a| ms.refresh.get(s, a) * ms.w[s * ms.atom_len + a])
                    .sum();
                assert!((avg - ms.w_star[s]).abs() < 1e-12);
            }
            // π is μ̄ reweighted by w.
            for i in 0..ms.pi.len() {
                assert!((ms.pi.prob(i) - ms.mu_bar.prob(i) * ms.w[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn marginal_f_factors_out_of_m_f() {
        let m = two_coin();
        let ms = enumerate_measures(&m, TestFn::Theta).unwrap();
        for t in 0..3 {
            for u in 0..2 {
                let s = ms.tu(t, u);
                assert!((ms.m_f[s] - ms.m_1[s] * t as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_eta_gives_unit_weights() {
        let m = two_coin().with_exact_eta().unwrap();
        let ms = enumerate_measures(&m, TestFn::Z).unwrap();
        assert!((ms.c_xi - 1.0).abs() < 1e-12);
        assert!(ms.w_star.iter().all(|x| (x - 1.0).abs() < 1e-12));
        for t in 0..3 {
            assert!((ms.mu_theta[t] - ms.pi_theta[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn support_check_finds_and_repairs_violation() {
        let mut doc = two_coin().doc().clone();
        doc.eta[1][0] = 0.0;
        let bad = TableModel::try_from(doc).unwrap();
        let r = support_check(&bad, 0, 0);
        assert!(!r.holds && r.exhaustive);
        let wit = r.witness.unwrap();
        assert_eq!((wit.theta, wit.u), (1, 0));
        assert!(matches!(
            enumerate_measures(&bad, TestFn::One),
            Err(Error::SupportViolation { .. })
        ));
        let fixed = bad.inflated(0.05).unwrap();
        assert!(support_check(&fixed, 0, 0).holds);
        assert!(support_check(&two_coin(), 0, 0).holds);

        let noisy = NoisyModel::new(bad, 0.3).unwrap();
        let r = support_check(&noisy, 10_000, 1);
        assert!(!r.holds && !r.exhaustive);
        assert!(support_check(&noisy.inflated(0.05).unwrap(), 10_000, 1).holds);
    }

    #[test]
    fn non_enumerable_model_is_rejected() {
        let noisy = NoisyModel::new(two_coin(), 0.3).unwrap();
        assert!(matches!(
            enumerate_measures(&noisy, TestFn::One),
            Err(Error::NotEnumerable)
        ));
    }
}
