use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::finite::{
    exact_asvar, holds_leq, peskun_check, spectral_info, FiniteKernel, MarginalSplit,
    OrderingReport, PeskunOptions,
};
use crate::latent::{
    base_kernel, da_kernel, enumerate_measures, is_kernel, pm_kernel, pm_parent_kernel,
    support_check, DaVariant, LatentModel, ModelMeasures, TestFn,
};
use crate::samplers::{
    estimate, run, snis, Algorithm, ChainPath, EstimatorKind, EstimatorResult, IsMode,
};
use crate::variance::{batch_means_asvar, default_batch_count, is_asvar_exact, is_asvar_plugin};
use crate::{Error, Result};

/// The exact-level chain an IS scheme is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Competitor {
    DaKernel,
    DaAlgorithm,
    PmParent,
    PmKernel,
}

impl Competitor {
    pub const ALL: [Competitor; 4] = [
        Competitor::DaKernel,
        Competitor::DaAlgorithm,
        Competitor::PmParent,
        Competitor::PmKernel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Competitor::DaKernel => "da-kernel",
            Competitor::DaAlgorithm => "da-algorithm",
            Competitor::PmParent => "pm-parent",
            Competitor::PmKernel => "pm-kernel",
        }
    }
}

impl fmt::Display for Competitor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Both sides of the IS-versus-`L` bounds for one IS mode and one `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub mode: Algorithm,
    pub competitor: Competitor,
    /// Exact IS variance of the mode (per jump-chain step for ISJ).
    pub v_is: f64,
    pub mu_a: f64,
    pub d_tilde: f64,
    pub var_l: f64,
    pub var_pi: f64,
    /// `var_μ̄(w ζ̂(f̄))`.
    pub var_mubar_w: f64,
    pub w_sup: f64,
    pub w_inf: f64,
    pub w_star_sup: f64,
    pub negativity_indicator: u8,
    /// `μ(a)‖w‖∞{var(L) + var_π} − μ(a)var_μ̄ + D`.
    pub upper_i: f64,
    /// Same with `ess inf w`.
    pub lower_i: f64,
    /// `μ(a)‖w*‖∞{var(L) + var_π} + (1 + 2N_K)μ(a)var_μ̄ + D`.
    pub upper_ii: f64,
    pub holds_upper_i: bool,
    pub holds_lower_i: bool,
    pub holds_upper_ii: bool,
}

/// Ordering checks on the product space `T × U × V` between `K̄` and `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductCheck {
    pub competitor: Competitor,
    pub report: OrderingReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub f: TestFn,
    pub nu_f: f64,
    pub rows: Vec<BoundRow>,
    pub product_checks: Vec<ProductCheck>,
    pub var_pm_kernel: f64,
    pub var_pm_parent: f64,
    /// `|var(M, ζ̂(f)) − var(P, ζ̂(f))|`.
    pub pm_parent_gap: f64,
    /// Every upper bound holds and `var(M) = var(P)` within `1e-9`.
    pub passed: bool,
}

fn support_extremes(values: &[f64], probs: &[f64]) -> (f64, f64) {
    values
        .iter()
        .zip(probs)
        .filter(|(_, p)| **p > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| {
            (lo.min(*v), hi.max(*v))
        })
}

fn competitor_kernel(
    model: &dyn LatentModel,
    q: &FiniteKernel,
    k: &FiniteKernel,
    ms: &ModelMeasures,
    c: Competitor,
) -> Result<FiniteKernel> {
    match c {
        Competitor::DaKernel => da_kernel(k, ms, DaVariant::Kernel),
        Competitor::DaAlgorithm => da_kernel(k, ms, DaVariant::Algorithm),
        Competitor::PmParent | Competitor::PmKernel => pm_parent_kernel(model, q, ms),
    }
}

/// Exact IS-versus-DA/PM comparison bounds for an enumerable model with
/// proposal `q`, for every IS mode and every competitor.
pub fn comparison_bounds(
    model: &dyn LatentModel,
    q: &FiniteKernel,
    f: TestFn,
) -> Result<ComparisonReport> {
    let ms = enumerate_measures(model, f)?;
    let (k, _) = base_kernel(model, q)?;
    let n_k = spectral_info(&k, &ms.mu)?.negativity_indicator;
    let (w_inf, w_sup) = support_extremes(&ms.w, ms.mu_bar.probs());
    let (_, w_star_sup) = support_extremes(&ms.w_star, ms.mu.probs());
    let wz: Vec<f64> =
        ms.w.iter()
            .zip(&ms.zeta_hat_f)
            .map(|(w, z)| w * (z - ms.nu_f))
            .collect();
    let var_mubar_w = ms.mu_bar.variance(&wz);
    let var_pi = ms.pi.variance(&ms.zeta_hat_f);

    let pm = pm_kernel(model, q, &ms)?;
    let var_pm_kernel = exact_asvar(&pm.kernel, &pm.pi, &pm.zeta_hat_f, 1.0)?;
    let mut var_l = Vec::new();
    let mut product_checks = Vec::new();
    let kbar = is_kernel(&k, &ms)?;
    for c in Competitor::ALL {
        if c == Competitor::PmKernel {
            var_l.push((c, var_pm_kernel, pm.pi.variance(&pm.zeta_hat_f)));
            continue;
        }
        let l = competitor_kernel(model, q, &k, &ms, c)?;
        var_l.push((c, exact_asvar(&l, &ms.pi, &ms.zeta_hat_f, 1.0)?, var_pi));
        let opts = PeskunOptions {
            c_lower: Some(w_inf),
            marginal: Some(MarginalSplit {
                t: ms.t_len * ms.u_len,
                y: ms.atom_len,
            }),
            ..Default::default()
        };
        product_checks.push(ProductCheck {
            competitor: c,
            report: peskun_check(&kbar, &l, &ms.mu_bar, &ms.pi, &ms.zeta_hat_f, &opts)?,
        });
    }
    let var_pm_parent = var_l
        .iter()
        .find(|(c, _, _)| *c == Competitor::PmParent)
        .map(|x| x.1)
        .expect("computed");

    let mut rows = Vec::new();
    for mode in [IsMode::Is0, IsMode::IsjSingle, IsMode::IsjAvg] {
        let e = is_asvar_exact(model, &k, f, mode)?;
        let comp = e.components.expect("exact components");
        let (mu_a, d) = (comp.mu_a, comp.d_tilde);
        for &(c, vl, vp) in &var_l {
            let bracket = vl + vp;
            let upper_i = mu_a * w_sup * bracket - mu_a * var_mubar_w + d;
            let lower_i = mu_a * w_inf * bracket - mu_a * var_mubar_w + d;
            let upper_ii =
                mu_a * w_star_sup * bracket + (1.0 + 2.0 * f64::from(n_k)) * mu_a * var_mubar_w + d;
            rows.push(BoundRow {
                mode: mode.algorithm(),
                competitor: c,
                v_is: e.value,
                mu_a,
                d_tilde: d,
                var_l: vl,
                var_pi: vp,
                var_mubar_w,
                w_sup,
                w_inf,
                w_star_sup,
                negativity_indicator: n_k,
                upper_i,
                lower_i,
                upper_ii,
                holds_upper_i: holds_leq(e.value, upper_i),
                holds_lower_i: holds_leq(lower_i, e.value),
                holds_upper_ii: holds_leq(e.value, upper_ii),
            });
        }
    }
    let pm_parent_gap = (var_pm_kernel - var_pm_parent).abs();
    let passed = rows.iter().all(|r| r.holds_upper_i && r.holds_upper_ii)
        && product_checks
            .iter()
            .all(|p| p.report.verdicts.upper && p.report.verdicts.augmented.unwrap_or(true))
        && pm_parent_gap <= 1e-9 * (1.0 + var_pm_parent);
    Ok(ComparisonReport {
        f,
        nu_f: ms.nu_f,
        rows,
        product_checks,
        var_pm_kernel,
        var_pm_parent,
        pm_parent_gap,
        passed,
    })
}

/// Exact asymptotic variances per base-chain iteration of every estimator,
/// for an enumerable model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactTruths {
    pub nu_f: f64,
    pub pm_parent: f64,
    /// The two-stage DA sampler.
    pub da: f64,
    pub is0: f64,
    pub isj_single: f64,
    pub isj_avg: f64,
    /// SNIS along the base chain with weights `m_1` and `φ = m_f/m_1`.
    pub snis: f64,
}

impl ExactTruths {
    pub fn for_algorithm(&self, a: Algorithm) -> Option<f64> {
        match a {
            Algorithm::Base => None,
            Algorithm::PmParent => Some(self.pm_parent),
            Algorithm::Da => Some(self.da),
            Algorithm::Is0 => Some(self.is0),
            Algorithm::IsjSingle => Some(self.isj_single),
            Algorithm::IsjAvg => Some(self.isj_avg),
        }
    }
}

pub fn exact_truths(model: &dyn LatentModel, q: &FiniteKernel, f: TestFn) -> Result<ExactTruths> {
    let ms = enumerate_measures(model, f)?;
    let (k, _) = base_kernel(model, q)?;
    let p = pm_parent_kernel(model, q, &ms)?;
    let da = da_kernel(&k, &ms, DaVariant::Algorithm)?;
    let per_base = |mode| -> Result<f64> {
        Ok(is_asvar_exact(model, &k, f, mode)?
            .per_base_step
            .expect("exact estimate has a per-step value"))
    };
    let snis = exact_asvar(&k, &ms.mu, &ms.m_fbar(), 1.0)? / (ms.c_xi * ms.c_xi);
    Ok(ExactTruths {
        nu_f: ms.nu_f,
        pm_parent: exact_asvar(&p, &ms.pi, &ms.zeta_hat_f, 1.0)?,
        da: exact_asvar(&da, &ms.pi, &ms.zeta_hat_f, 1.0)?,
        is0: per_base(IsMode::Is0)?,
        isj_single: per_base(IsMode::IsjSingle)?,
        isj_avg: per_base(IsMode::IsjAvg)?,
        snis,
    })
}

/// SNIS along a base or IS0 path with the conditional-mean weights `m_1`
/// and `φ = m_f/m_1` of an enumerable model.
pub fn snis_on_base(path: &ChainPath, ms: &ModelMeasures) -> Result<EstimatorResult> {
    let mut w = Vec::with_capacity(path.len());
    let mut phi = Vec::with_capacity(path.len());
    for s in &path.steps {
        let i = ms.tu(s.theta, s.u);
        for _ in 0..s.n {
            w.push(ms.m_1[i]);
            phi.push(if ms.m_1[i] > 0.0 {
                ms.m_f[i] / ms.m_1[i]
            } else {
                0.0
            });
        }
    }
    snis(&w, &phi)
}

/// One algorithm's results over the replicate seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoSummary {
    pub algorithm: Algorithm,
    pub replicates: usize,
    pub mean_estimate: f64,
    pub sd_estimate: f64,
    /// Standard error of `mean_estimate`.
    pub se: f64,
    /// Mean batch-means variance per base-chain iteration.
    pub mean_asvar: f64,
    pub exact_asvar: Option<f64>,
    pub within_3se: Option<bool>,
    pub mean_v_draws: f64,
    pub mean_eta_evals: f64,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub model_id: String,
    pub f: TestFn,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub nu_f: Option<f64>,
    /// `w ≡ 1`: IS and PM estimates coincide in law.
    pub trivial_weights: Option<bool>,
    pub algorithms: Vec<AlgoSummary>,
    pub bounds: Option<ComparisonReport>,
    pub passed: bool,
}

/// Point estimate and per-iteration variance estimate from one path.
pub fn path_estimate(
    path: &ChainPath,
    model: &dyn LatentModel,
    f: TestFn,
) -> Result<(EstimatorResult, f64)> {
    let a = path.meta.algorithm;
    if a.is_pseudomarginal() {
        let e = estimate(path, model, EstimatorKind::Pm, f)?;
        let tv = model.theta_values();
        let y: Vec<f64> = path
            .steps
            .iter()
            .map(|s| s.zeta_hat(f, tv[s.theta]).unwrap_or(0.0))
            .collect();
        let v = batch_means_asvar(&y, default_batch_count(y.len()))?.value;
        return Ok((e, v));
    }
    if a.is_importance() {
        let e = estimate(path, model, EstimatorKind::Is, f)?;
        let v = is_asvar_plugin(path, model, f, None)?
            .per_base_step
            .unwrap_or(f64::NAN);
        return Ok((e, v));
    }
    Err(Error::Config(
        "the base chain does not estimate ν(f)".into(),
    ))
}

/// Run every algorithm over the seeds and assemble estimates, variance
/// estimates, costs and (for enumerable models) exact values and bounds.
pub fn compare_run(
    model: &dyn LatentModel,
    q: &FiniteKernel,
    algorithms: &[Algorithm],
    n: usize,
    seeds: &[u64],
    f: TestFn,
) -> Result<CompareReport> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let support = support_check(model, 10_000, seeds[0]);
    if !support.holds {
        let w = support.witness.expect("violation has a witness");
        return Err(Error::SupportViolation {
            theta: w.theta,
            u: w.u,
            zeta1: w.zeta1,
        });
    }
    let enumerable = model.as_enumerable().is_some();
    let (truths, trivial, bounds) = if enumerable {
        let ms = enumerate_measures(model, f)?;
        let trivial =
            ms.w.iter()
                .zip(ms.mu_bar.probs())
                .all(|(w, p)| *p == 0.0 || (w - 1.0).abs() < 1e-12);
        (
            Some(exact_truths(model, q, f)?),
            Some(trivial),
            Some(comparison_bounds(model, q, f)?),
        )
    } else {
        (None, None, None)
    };

    let mut algos = Vec::new();
    for &a in algorithms {
        let results: Vec<(EstimatorResult, f64, ChainPath)> = seeds
            .par_iter()
            .map(|&s| {
                let p = run(model, q, a, n, s)?;
                let (e, v) = path_estimate(&p, model, f)?;
                Ok((e, v, p))
            })
            .collect::<Result<_>>()?;
        let r = results.len() as f64;
        let mean = results.iter().map(|x| x.0.value).sum::<f64>() / r;
        let sd = if results.len() > 1 {
            (results
                .iter()
                .map(|x| (x.0.value - mean).powi(2))
                .sum::<f64>()
                / (r - 1.0))
                .sqrt()
        } else {
            0.0
        };
        let mean_asvar = results.iter().map(|x| x.1).sum::<f64>() / r;
        let se = if results.len() > 1 {
            sd / r.sqrt()
        } else {
            (mean_asvar / n as f64).sqrt()
        };
        let avg = |g: &dyn Fn(&ChainPath) -> f64| results.iter().map(|x| g(&x.2)).sum::<f64>() / r;
        algos.push(AlgoSummary {
            algorithm: a,
            replicates: results.len(),
            mean_estimate: mean,
            sd_estimate: sd,
            se,
            mean_asvar,
            exact_asvar: truths.and_then(|t| t.for_algorithm(a)),
            within_3se: truths.map(|t| (mean - t.nu_f).abs() <= 3.0 * se),
            mean_v_draws: avg(&|p| p.meta.v_draws as f64),
            mean_eta_evals: avg(&|p| p.meta.eta_evals as f64),
            acceptance_rate: avg(&|p| p.acceptance_rate()),
        });
    }
    let passed = algos.iter().all(|s| s.within_3se.unwrap_or(true))
        && bounds.as_ref().is_none_or(|b| b.passed);
    Ok(CompareReport {
        model_id: model.id().to_string(),
        f,
        n,
        seeds: seeds.to_vec(),
        nu_f: truths.map(|t| t.nu_f),
        trivial_weights: trivial,
        algorithms: algos,
        bounds,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::two_coin;

    #[test]
    fn two_coin_bounds_hold() {
        let m = two_coin();
        for f in TestFn::ALL {
            let r = comparison_bounds(&m, m.proposal(), f).unwrap();
            assert!(
                r.passed,
                "{f}: {:#?}",
                r.rows
                    .iter()
                    .filter(|x| !(x.holds_upper_i && x.holds_upper_ii))
                    .collect::<Vec<_>>()
            );
            assert_eq!(r.rows.len(), 12);
        }
    }

    #[test]
    fn is0_rows_reduce_to_product_space_ordering() {
        let m = two_coin();
        let r = comparison_bounds(&m, m.proposal(), TestFn::ThetaPlusZ).unwrap();
        for p in &r.product_checks {
            let row = r
                .rows
                .iter()
                .find(|x| x.mode == Algorithm::Is0 && x.competitor == p.competitor)
                .unwrap();
            let rep = &p.report;
            assert!((row.v_is - rep.var_k_wphi).abs() < 1e-9 * (1.0 + row.v_is));
            let bracket = row.w_star_sup * (row.var_l + row.var_pi);
            assert!((bracket - rep.rhs_upper).abs() < 1e-9 * (1.0 + bracket));
            let ui = row.w_sup * (row.var_l + row.var_pi) - rep.var_mu_wphi;
            assert!((row.upper_i - ui).abs() < 1e-9 * (1.0 + row.upper_i));
            assert!(
                (row.upper_ii - rep.augmented_rhs.unwrap()).abs() < 1e-9 * (1.0 + row.upper_ii)
            );
        }
    }

    #[test]
    fn snis_truth_uses_conditional_means() {
        let m = two_coin();
        let t = exact_truths(&m, m.proposal(), TestFn::Z).unwrap();
        assert!(t.snis <= t.is0 + 1e-12);
        assert!((t.isj_avg - t.is0).abs() < 1e-12 * (1.0 + t.is0));
        assert!(t.isj_single >= t.is0);
    }

    #[test]
    fn compare_run_reports_costs() {
        let m = two_coin();
        let r = compare_run(
            &m,
            m.proposal(),
            &[Algorithm::PmParent, Algorithm::Da, Algorithm::Is0],
            20_000,
            &[1, 2, 3, 4],
            TestFn::Z,
        )
        .unwrap();
        let get = |a| r.algorithms.iter().find(|s| s.algorithm == a).unwrap();
        assert!(get(Algorithm::Da).mean_v_draws < get(Algorithm::PmParent).mean_v_draws);
        assert_eq!(r.trivial_weights, Some(false));
        assert!(r.bounds.as_ref().unwrap().passed);
        assert!(compare_run(&m, m.proposal(), &[Algorithm::Base], 100, &[0], TestFn::Z).is_err());
    }
}
