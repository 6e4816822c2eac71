//! Peskun-type comparison of an importance-sampling corrected chain with a
//! chain targeting the corrected measure directly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::asvar::exact_asvar;
use super::kernel::{dirichlet_flux, radon_nikodym, require_reversible};
use super::spectral::spectral_info;
use super::types::{FiniteDist, FiniteKernel};
use crate::{Error, Result};

/// Relative tolerance of every verdict.
pub const VERDICT_TOL: f64 = 1e-9;

/// `a ≤ b` up to [`VERDICT_TOL`], treating `b = +∞` as always satisfied.
pub fn holds_leq(a: f64, b: f64) -> bool {
    if b == f64::INFINITY {
        return true;
    }
    a <= b + VERDICT_TOL * (1.0 + b.abs())
}

/// `c·x` with `0·∞ = 0`.
fn scale(c: f64, x: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * x
    }
}

/// State layout `t * y + j` of a product space `T × Y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarginalSplit {
    pub t: usize,
    pub y: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeskunOptions {
    pub c_lower: Option<f64>,
    pub c_upper: Option<f64>,
    pub marginal: Option<MarginalSplit>,
    pub dirichlet_trials: usize,
    pub seed: u64,
}

impl Default for PeskunOptions {
    fn default() -> Self {
        Self {
            c_lower: None,
            c_upper: None,
            marginal: None,
            dirichlet_trials: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c_lower: f64,
    pub c_upper: f64,
    pub w_sup: f64,
    pub w_star_sup: Option<f64>,
    pub negativity_indicator: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub upper: bool,
    pub lower: bool,
    pub augmented: Option<bool>,
    pub dirichlet_upper: bool,
    pub dirichlet_lower: bool,
}

impl Verdicts {
    pub fn all(&self) -> bool {
        self.upper
            && self.lower
            && self.augmented.unwrap_or(true)
            && self.dirichlet_upper
            && self.dirichlet_lower
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    /// `var(K, wφ̄)`.
    pub var_k_wphi: f64,
    /// `var_μ(wφ̄)`.
    pub var_mu_wphi: f64,
    pub var_l_phi: f64,
    pub var_nu_phi: f64,
    pub lhs_upper: f64,
    pub rhs_upper: f64,
    pub lhs_lower: f64,
    pub rhs_lower: f64,
    pub lhs_augmented: Option<f64>,
    pub augmented_rhs: Option<f64>,
    pub constants: Constants,
    /// Extremes of `E_L(g) / E_K(g)` over the random test functions.
    pub dirichlet_max_ratio: f64,
    pub dirichlet_min_ratio: f64,
    pub verdicts: Verdicts,
}

/// Marginal Radon-Nikodým derivative on `T` and the μ-marginal.
fn marginal_weight(
    mu: &FiniteDist,
    nu: &FiniteDist,
    split: MarginalSplit,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if split.t * split.y != mu.len() {
        return Err(Error::Dimension(format!(
            "split {}x{} vs {} states",
            split.t,
            split.y,
            mu.len()
        )));
    }
    let mut mu_t = vec![0.0; split.t];
    let mut nu_t = vec![0.0; split.t];
    for i in 0..mu.len() {
        mu_t[i / split.y] += mu.prob(i);
        nu_t[i / split.y] += nu.prob(i);
    }
    let w_star = mu_t
        .iter()
        .zip(&nu_t)
        .map(|(m, n)| if *m > 0.0 { n / m } else { 0.0 })
        .collect();
    Ok((w_star, mu_t))
}

fn extremes(values: &[f64], weights: &[f64]) -> (f64, f64) {
    values
        .iter()
        .zip(weights)
        .filter(|(_, m)| **m > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| {
            (lo.min(*v), hi.max(*v))
        })
}

/// Evaluate both sides of the upper, lower and augmented orderings between
/// the μ-reversible `k` and the ν-reversible `l` for the test function `phi`.
pub fn peskun_check(
    k: &FiniteKernel,
    l: &FiniteKernel,
    mu: &FiniteDist,
    nu: &FiniteDist,
    phi: &[f64],
    opts: &PeskunOptions,
) -> Result<OrderingReport> {
    let w = radon_nikodym(nu, mu)?;
    if k.len() != l.len() || phi.len() != k.len() {
        return Err(Error::Dimension(
            "kernels and test function must share states".into(),
        ));
    }
    require_reversible(k, mu)?;
    require_reversible(l, nu)?;

    let (w_lo, w_hi) = extremes(w.values(), mu.probs());
    let marginal = opts
        .marginal
        .map(|s| marginal_weight(mu, nu, s).map(|(ws, mt)| (s, ws, mt)))
        .transpose()?;
    let (default_lo, default_hi, w_star_sup) = match &marginal {
        Some((_, ws, mt)) => {
            let (lo, hi) = extremes(ws, mt);
            (lo, hi, Some(hi))
        }
        None => (w_lo, w_hi, None),
    };
    let c_lower = opts.c_lower.unwrap_or(default_lo);
    let c_upper = opts.c_upper.unwrap_or(default_hi);

    let phi_bar = nu.center(phi);
    let wphi: Vec<f64> = w
        .values()
        .iter()
        .zip(&phi_bar)
        .map(|(a, b)| a * b)
        .collect();
    let var_k_wphi = exact_asvar(k, mu, &wphi, 1.0)?;
    let var_mu_wphi = mu.variance(&wphi);
    let var_l_phi = exact_asvar(l, nu, phi, 1.0)?;
    let var_nu_phi = nu.variance(phi);
    let lhs = var_k_wphi + var_mu_wphi;
    let bracket = var_l_phi + var_nu_phi;
    let rhs_upper = scale(c_upper, bracket);
    let rhs_lower = scale(c_lower, bracket);

    let n_k = spectral_info(k, mu)?.negativity_indicator;
    let (lhs_augmented, augmented_rhs) = if marginal.is_some() {
        let rhs = rhs_upper + (1.0 + 2.0 * f64::from(n_k)) * var_mu_wphi;
        (Some(var_k_wphi), Some(rhs))
    } else {
        (None, None)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut max_ratio = f64::NEG_INFINITY;
    let mut min_ratio = f64::INFINITY;
    let mut d_upper = true;
    let mut d_lower = true;
    for _ in 0..opts.dirichlet_trials {
        let g: Vec<f64> = match &marginal {
            Some((s, _, _)) => {
                let h: Vec<f64> = (0..s.t).map(|_| rng.random_range(-1.0..1.0)).collect();
                (0..k.len()).map(|i| h[i / s.y]).collect()
            }
            None => (0..k.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let e_k = dirichlet_flux(k, mu, &g);
        let e_l = dirichlet_flux(l, nu, &g);
        d_upper &= holds_leq(e_l, scale(c_upper, e_k));
        d_lower &= holds_leq(scale(c_lower, e_k), e_l);
        if e_k > 0.0 {
            max_ratio = max_ratio.max(e_l / e_k);
            min_ratio = min_ratio.min(e_l / e_k);
        }
    }

    Ok(OrderingReport {
        var_k_wphi,
        var_mu_wphi,
        var_l_phi,
        var_nu_phi,
        lhs_upper: lhs,
        rhs_upper,
        lhs_lower: lhs,
        rhs_lower,
        lhs_augmented,
        augmented_rhs,
        constants: Constants {
            c_lower,
            c_upper,
            w_sup: w_hi,
            w_star_sup,
            negativity_indicator: n_k,
        },
        dirichlet_max_ratio: max_ratio,
        dirichlet_min_ratio: min_ratio,
        verdicts: Verdicts {
            upper: holds_leq(lhs, rhs_upper),
            lower: holds_leq(rhs_lower, lhs),
            augmented: lhs_augmented
                .zip(augmented_rhs)
                .map(|(a, b)| holds_leq(a, b)),
            dirichlet_upper: d_upper,
            dirichlet_lower: d_lower,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite::kernel::{build_da, build_mh};
    use crate::finite::types::RealFunction;

    #[test]
    fn identical_chains_give_equality() {
        let mu = FiniteDist::from_probs(vec![0.2, 0.3, 0.5]).unwrap();
        let q = FiniteKernel::from_rows(&[
            vec![0.2, 0.5, 0.3],
            vec![0.5, 0.1, 0.4],
            vec![0.3, 0.4, 0.3],
        ])
        .unwrap();
        let k = build_mh(&q, &mu).unwrap();
        let phi = [1.0, 3.0, -2.0];
        let opts = PeskunOptions {
            c_lower: Some(1.0),
            c_upper: Some(1.0),
            ..Default::default()
        };
        let r = peskun_check(&k, &k, &mu, &mu, &phi, &opts).unwrap();
        assert!((r.lhs_upper - r.rhs_upper).abs() < 1e-10);
        assert!((r.lhs_lower - r.rhs_lower).abs() < 1e-10);
        assert!(r.verdicts.all());
    }

    #[test]
    fn da_correction_satisfies_both_bounds() {
        let mu = FiniteDist::from_probs(vec![0.1, 0.4, 0.2, 0.3]).unwrap();
        let k = build_mh(&FiniteKernel::independence(&FiniteDist::uniform(4)), &mu).unwrap();
        let w_raw = [2.0, 0.5, 1.0, 1.5];
        let masses: Vec<f64> = (0..4).map(|i| w_raw[i] * mu.prob(i)).collect();
        let nu = FiniteDist::from_masses(mu.labels().to_vec(), &masses).unwrap();
        let l = build_da(&k, &RealFunction::new(w_raw.to_vec()).unwrap()).unwrap();
        let r = peskun_check(
            &k,
            &l,
            &mu,
            &nu,
            &[0.3, -1.0, 2.0, 0.0],
            &PeskunOptions::default(),
        )
        .unwrap();
        assert!(r.verdicts.all(), "{r:?}");
        assert!(r.dirichlet_max_ratio <= r.constants.c_upper + 1e-12);
    }

    #[test]
    fn rejects_singular_target() {
        let mu = FiniteDist::from_probs(vec![0.5, 0.5, 0.0]).unwrap();
        let nu = FiniteDist::uniform(3);
        let k = FiniteKernel::identity(3);
        assert!(matches!(
            peskun_check(&k, &k, &mu, &nu, &[0.0; 3], &PeskunOptions::default()),
            Err(Error::NotAbsolutelyContinuous(_))
        ));
    }

    #[test]
    fn infinite_right_side_always_holds() {
        assert!(holds_leq(5.0, f64::INFINITY));
        assert!(!holds_leq(f64::INFINITY, 5.0));
        assert!(holds_leq(1.0 + 1e-12, 1.0));
    }
}
