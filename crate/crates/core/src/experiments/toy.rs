use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::finite::{
    build_da, build_mh, exact_asvar, peskun_check, radon_nikodym, FiniteDist, FiniteKernel,
    OrderingReport, PeskunOptions, RealFunction,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToyCase {
    DaBetter,
    IsBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToyProposal {
    /// Reflected random walk: 0 → 1, 1 → {0, 2}, 2 → 1.
    Rw,
    /// Uniform on all three states, self included.
    Uniform,
}

impl ToyCase {
    pub const ALL: [ToyCase; 2] = [ToyCase::DaBetter, ToyCase::IsBetter];

    pub fn name(self) -> &'static str {
        match self {
            ToyCase::DaBetter => "da-better",
            ToyCase::IsBetter => "is-better",
        }
    }
}

impl ToyProposal {
    pub const ALL: [ToyProposal; 2] = [ToyProposal::Rw, ToyProposal::Uniform];

    pub fn name(self) -> &'static str {
        match self {
            ToyProposal::Rw => "rw",
            ToyProposal::Uniform => "uniform",
        }
    }

    pub fn kernel(self) -> FiniteKernel {
        let rows = match self {
            ToyProposal::Rw => vec![
                vec![0.0, 1.0, 0.0],
                vec![0.5, 0.0, 0.5],
                vec![0.0, 1.0, 0.0],
            ],
            ToyProposal::Uniform => vec![vec![1.0 / 3.0; 3]; 3],
        };
        FiniteKernel::from_rows(&rows).expect("valid proposal")
    }
}

impl fmt::Display for ToyCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for ToyProposal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ToyCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ToyCase::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown toy case `{s}`")))
    }
}

impl FromStr for ToyProposal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ToyProposal::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown proposal `{s}`")))
    }
}

/// One three-state example: `K = MH(q → μ)` and `L = MH(q → ν)`, with the
/// DA correction of `K` kept alongside for comparison.
#[derive(Debug, Clone)]
pub struct ToyInstance {
    pub case: ToyCase,
    pub a: f64,
    pub proposal: ToyProposal,
    pub mu: FiniteDist,
    pub nu: FiniteDist,
    pub f: RealFunction,
    pub w: RealFunction,
    pub k: FiniteKernel,
    pub l: FiniteKernel,
    pub l_da: FiniteKernel,
}

impl ToyInstance {
    /// Largest entrywise gap between `L` and the DA correction of `K` over
    /// rows in the support of `ν`.
    pub fn mh_da_gap(&self) -> f64 {
        self.l.max_abs_diff_on_rows(&self.l_da, &self.nu.support())
    }

    /// `max(w)` over the support of `μ`.
    pub fn w_max(&self) -> f64 {
        self.mu
            .support()
            .into_iter()
            .map(|i| self.w[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max(w)·var(L, f) + ν(f²[max(w) − w])`.
    pub fn upper_bound(&self, var_l_f: f64) -> f64 {
        let m = self.w_max();
        let tail: Vec<f64> = (0..3)
            .map(|i| self.f[i].powi(2) * (m - self.w[i]))
            .collect();
        m * var_l_f + self.nu.expect(&tail)
    }

    pub fn wf(&self) -> Vec<f64> {
        (0..3).map(|i| self.w[i] * self.f[i]).collect()
    }
}

pub fn toy_instance(case: ToyCase, a: f64, proposal: ToyProposal) -> Result<ToyInstance> {
    if !(0.5..1.0).contains(&a) {
        return Err(Error::OutOfRange(format!("a = {a} is outside [0.5, 1)")));
    }
    let (mu, nu, f) = match case {
        ToyCase::DaBetter => (
            vec![(1.0 - a) / 2.0, (1.0 - a) / 2.0, a],
            vec![0.5, 0.5, 0.0],
            vec![1.0, -1.0, 0.0],
        ),
        ToyCase::IsBetter => {
            let s = 2f64.sqrt() / (a + a * a).sqrt();
            (
                vec![1.0 / 3.0; 3],
                vec![a / 2.0, (1.0 - a) / 2.0, 0.5],
                vec![s, 0.0, -a * s],
            )
        }
    };
    let mu = FiniteDist::from_probs(mu)?;
    let nu = FiniteDist::from_probs(nu)?;
    let f = RealFunction::new(f)?;
    let w = radon_nikodym(&nu, &mu)?;
    let q = proposal.kernel();
    let k = build_mh(&q, &mu)?;
    let l = build_mh(&q, &nu)?;
    let l_da = build_da(&k, &w)?;
    Ok(ToyInstance {
        case,
        a,
        proposal,
        mu,
        nu,
        f,
        w,
        k,
        l,
        l_da,
    })
}

/// Reference closed forms `(var(L, f), var(K, wf))` for each toy cell.
pub fn reference_closed_form(case: ToyCase, proposal: ToyProposal, a: f64) -> (f64, f64) {
    match (case, proposal) {
        (ToyCase::DaBetter, ToyProposal::Rw) => (1.0, 1.0 / (1.0 - a)),
        (ToyCase::DaBetter, ToyProposal::Uniform) => (2.0, 1.0 / (1.0 - a)),
        (ToyCase::IsBetter, ToyProposal::Rw) => (
            (-1.0 + 8.0 * a + a * a) / (a * a - 1.0),
            9.0 * a / (1.0 + a),
        ),
        (ToyCase::IsBetter, ToyProposal::Uniform) => (
            (-1.0 + 10.0 * a - a * a) / (1.0 + a).powi(2),
            15.0 * a / (4.0 * (1.0 + a)),
        ),
    }
}

/// The `var(L, f)` entry of the `is-better`/`rw` cell with its denominator
/// `a² − 1` replaced by `1 − a²`.
pub fn flipped_rw_form(a: f64) -> f64 {
    (-1.0 + 8.0 * a + a * a) / (1.0 - a * a)
}

/// `0.50, 0.55, …, 0.95`.
pub fn default_grid() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: f64,
    pub var_l_f: f64,
    pub var_k_wf: f64,
    #[serde(rename = "UB_a")]
    pub ub_a: f64,
    pub closed_form_l: f64,
    pub closed_form_k: f64,
    /// `max(|var_l_f − closed_form_l|, |var_k_wf − closed_form_k|)`.
    pub max_abs_dev: f64,
    /// Sign-flipped `var(L, f)` form; only for `is-better`/`rw`.
    pub closed_form_l_flipped: Option<f64>,
    pub mh_da_gap: f64,
    pub ub_holds: bool,
    /// `var(K, wf) + var_μ(wf̄) ≤ max(w)[var(L, f) + var_ν(f)]`.
    pub ordering_holds: bool,
}

pub fn sweep_row(inst: &ToyInstance) -> Result<SweepRow> {
    let var_l_f = exact_asvar(&inst.l, &inst.nu, inst.f.values(), 1.0)?;
    let var_k_wf = exact_asvar(&inst.k, &inst.mu, &inst.wf(), 1.0)?;
    let ub_a = inst.upper_bound(var_l_f);
    let (cl, ck) = reference_closed_form(inst.case, inst.proposal, inst.a);
    let report = ordering_report(inst)?;
    Ok(SweepRow {
        a: inst.a,
        var_l_f,
        var_k_wf,
        ub_a,
        closed_form_l: cl,
        closed_form_k: ck,
        max_abs_dev: (var_l_f - cl).abs().max((var_k_wf - ck).abs()),
        closed_form_l_flipped: (inst.case == ToyCase::IsBetter && inst.proposal == ToyProposal::Rw)
            .then(|| flipped_rw_form(inst.a)),
        mh_da_gap: inst.mh_da_gap(),
        ub_holds: var_k_wf <= ub_a + 1e-9,
        ordering_holds: report.verdicts.upper,
    })
}

/// Upper comparison with `c̄ = max(w)` between `K` and `L`.
pub fn ordering_report(inst: &ToyInstance) -> Result<OrderingReport> {
    peskun_check(
        &inst.k,
        &inst.l,
        &inst.mu,
        &inst.nu,
        inst.f.values(),
        &PeskunOptions::default(),
    )
}

pub fn toy_sweep(case: ToyCase, proposal: ToyProposal, grid: &[f64]) -> Result<Vec<SweepRow>> {
    grid.iter()
        .map(|&a| sweep_row(&toy_instance(case, a, proposal)?))
        .collect()
}

/// Which form of the `is-better`/`rw` `var(L, f)` entry the exact values
/// follow over a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignResolution {
    pub reference_matches: bool,
    pub flipped_matches: bool,
    pub max_dev_reference: f64,
    pub max_dev_flipped: f64,
}

pub fn resolve_sign(rows: &[SweepRow], tol: f64) -> SignResolution {
    let dev = |g: &dyn Fn(&SweepRow) -> f64| {
        rows.iter()
            .map(|r| (r.var_l_f - g(r)).abs())
            .fold(0.0, f64::max)
    };
    let max_dev_reference = dev(&|r| r.closed_form_l);
    let max_dev_flipped = dev(&|r| flipped_rw_form(r.a));
    SignResolution {
        reference_matches: max_dev_reference <= tol,
        flipped_matches: max_dev_flipped <= tol,
        max_dev_reference,
        max_dev_flipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_masses() {
        let t = toy_instance(ToyCase::DaBetter, 0.5, ToyProposal::Rw).unwrap();
        assert_eq!(t.mu.probs(), &[0.25, 0.25, 0.5]);
        assert_eq!(t.nu.probs(), &[0.5, 0.5, 0.0]);
        assert_eq!(t.f.values(), &[1.0, -1.0, 0.0]);
        for a in default_grid() {
            for case in ToyCase::ALL {
                let t = toy_instance(case, a, ToyProposal::Uniform).unwrap();
                assert!(t.nu.expect(t.f.values()).abs() < 1e-12);
                let f2: Vec<f64> = t.f.values().iter().map(|x| x * x).collect();
                assert!((t.nu.expect(&f2) - 1.0).abs() < 1e-12);
            }
        }
        assert!(toy_instance(ToyCase::IsBetter, 1.0, ToyProposal::Rw).is_err());
        assert!(toy_instance(ToyCase::IsBetter, 0.49, ToyProposal::Rw).is_err());
    }

    #[test]
    fn mh_stationary_matches_mu() {
        let t = toy_instance(ToyCase::DaBetter, 0.5, ToyProposal::Rw).unwrap();
        let st = crate::finite::stationary_dist(&t.k).unwrap();
        assert!(st.total_variation(&[0.25, 0.25, 0.5]) < 1e-12);
    }

    #[test]
    fn da_better_rw_bound_is_tight() {
        for r in toy_sweep(ToyCase::DaBetter, ToyProposal::Rw, &default_grid()).unwrap() {
            let a = r.a;
            assert!((r.var_l_f - 1.0).abs() < 1e-9);
            assert!((r.var_k_wf - 1.0 / (1.0 - a)).abs() < 1e-9);
            assert!((r.ub_a - r.var_k_wf).abs() < 1e-9);
            assert!(r.mh_da_gap < 1e-12);
        }
    }

    #[test]
    fn is_better_uniform_is_an_independence_sampler() {
        // μ and q uniform make K the independence kernel: var(K, wf) = var_μ(wf).
        for r in toy_sweep(ToyCase::IsBetter, ToyProposal::Uniform, &default_grid()).unwrap() {
            let a = r.a;
            assert!((r.var_k_wf - 3.0 * a / (1.0 + a)).abs() < 1e-9, "{a}");
            assert!((r.var_l_f - r.closed_form_l).abs() < 1e-9, "{a}");
            assert!(r.var_l_f >= r.var_k_wf);
        }
    }

    #[test]
    fn is_better_rw_follows_flipped_sign() {
        let rows = toy_sweep(ToyCase::IsBetter, ToyProposal::Rw, &default_grid()).unwrap();
        let s = resolve_sign(&rows, 1e-9);
        assert!(s.flipped_matches && !s.reference_matches, "{s:?}");
        for r in &rows {
            assert!((r.var_k_wf - 9.0 * r.a / (1.0 + r.a)).abs() < 1e-9);
        }
    }

    #[test]
    fn ordering_holds_on_all_cells() {
        for case in ToyCase::ALL {
            for p in ToyProposal::ALL {
                for r in toy_sweep(case, p, &default_grid()).unwrap() {
                    assert!(r.ordering_holds && r.ub_holds, "{case}/{p} a={}", r.a);
                    assert!(r.mh_da_gap < 1e-12, "{case}/{p} a={}", r.a);
                }
            }
        }
    }
}
