use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::finite::{
    augment_with, build_da, build_mh, check_reversible, dirichlet_form, exact_asvar, flux_gap,
    jump_transform, peskun_check, poisson_asvar, spectral_info, FiniteDist, FiniteKernel,
    MarginalSplit, OrderingReport, PeskunOptions, RealFunction, RefreshTable,
};
use crate::samplers::stream_rng;
use crate::Result;

/// Most states of a generated instance.
pub const MAX_STATES: usize = 8;

/// A random reversible pair together with everything the checks need.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub mu: FiniteDist,
    pub nu: FiniteDist,
    pub w: RealFunction,
    pub q: FiniteKernel,
    pub k: FiniteKernel,
    pub phi: Vec<f64>,
}

fn random_simplex(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = x.iter().sum();
    x.into_iter().map(|v| v / s).collect()
}

/// Symmetric proposal: a random symmetric nonnegative matrix scaled so the
/// largest row sum is below one, with the remainder on the diagonal.
pub fn random_symmetric_proposal(n: usize, rng: &mut ChaCha8Rng) -> FiniteKernel {
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = if rng.random_bool(0.8) {
                rng.random_range(0.0..1.0)
            } else {
                0.0
            };
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    // Keep the proposal irreducible through a path 0 - 1 - … - n-1.
    for i in 0..n.saturating_sub(1) {
        if s[(i, i + 1)] == 0.0 {
            s[(i, i + 1)] = 0.5;
            s[(i + 1, i)] = 0.5;
        }
    }
    let max_row = (0..n)
        .map(|i| s.row(i).iter().sum::<f64>())
        .fold(0.0, f64::max)
        .max(1e-12);
    let scale = rng.random_range(0.5..1.0) / max_row;
    FiniteKernel::from_off_diagonal(default_labels(n), s * scale).expect("substochastic")
}

fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

/// `μ` from normalised uniforms, `w` bounded positive, `ν ∝ wμ`, `q` random
/// symmetric, `K = MH(q → μ)`.
pub fn random_instance(n: usize, rng: &mut ChaCha8Rng) -> Result<RandomInstance> {
    let mu = FiniteDist::from_probs(random_simplex(n, rng))?;
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
    let masses: Vec<f64> = (0..n).map(|i| raw[i] * mu.prob(i)).collect();
    let nu = FiniteDist::from_masses(mu.labels().to_vec(), &masses)?;
    let z: f64 = masses.iter().sum();
    let w = RealFunction::new(raw.iter().map(|x| x / z).collect())?;
    let q = random_symmetric_proposal(n, rng);
    let k = build_mh(&q, &mu)?;
    let phi = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    Ok(RandomInstance {
        mu,
        nu,
        w,
        q,
        k,
        phi,
    })
}

/// Outcome of one inequality or identity on one instance. `margin` is
/// `lhs − rhs` scaled by `1 + |rhs|`; positive beyond tolerance is a failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub instance: usize,
    pub check: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub passed: bool,
}

fn ineq(instance: usize, check: &str, lhs: f64, rhs: f64, tol: f64) -> CheckResult {
    let margin = if rhs == f64::INFINITY {
        f64::NEG_INFINITY
    } else {
        (lhs - rhs) / (1.0 + rhs.abs())
    };
    CheckResult {
        instance,
        check: check.to_string(),
        lhs,
        rhs,
        margin,
        passed: margin <= tol,
    }
}

fn ident(instance: usize, check: &str, gap: f64, tol: f64) -> CheckResult {
    CheckResult {
        instance,
        check: check.to_string(),
        lhs: gap,
        rhs: 0.0,
        margin: gap,
        passed: gap <= tol,
    }
}

fn ordering_checks(out: &mut Vec<CheckResult>, i: usize, tag: &str, r: &OrderingReport) {
    out.push(ineq(
        i,
        &format!("{tag}/upper"),
        r.lhs_upper,
        r.rhs_upper,
        1e-9,
    ));
    out.push(ineq(
        i,
        &format!("{tag}/lower"),
        r.rhs_lower,
        r.lhs_lower,
        1e-9,
    ));
    if let (Some(l), Some(rhs)) = (r.lhs_augmented, r.augmented_rhs) {
        out.push(ineq(i, &format!("{tag}/augmented"), l, rhs, 1e-9));
    }
    let c = &r.constants;
    if r.dirichlet_max_ratio.is_finite() {
        out.push(ineq(
            i,
            &format!("{tag}/dirichlet-upper"),
            r.dirichlet_max_ratio,
            c.c_upper,
            1e-9,
        ));
        out.push(ineq(
            i,
            &format!("{tag}/dirichlet-lower"),
            c.c_lower,
            r.dirichlet_min_ratio,
            1e-9,
        ));
    }
}

/// Every check of one instance index.
pub fn check_instance(seed: u64, index: usize) -> Result<Vec<CheckResult>> {
    let mut rng = stream_rng(seed, index as u64);
    let n = rng.random_range(2..=MAX_STATES);
    let inst = random_instance(n, &mut rng)?;
    let mut out = Vec::new();
    let i = index;
    let opts = PeskunOptions {
        seed: seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        ..Default::default()
    };

    // Kernel sanity: detailed balance and two exact routes.
    out.push(ident(
        i,
        "mh/detailed-balance",
        flux_gap(&inst.k, &inst.mu)?,
        1e-12,
    ));
    let l_da = build_da(&inst.k, &inst.w)?;
    out.push(ident(
        i,
        "da/detailed-balance",
        flux_gap(&l_da, &inst.nu)?,
        1e-12,
    ));
    let spec = exact_asvar(&inst.k, &inst.mu, &inst.phi, 1.0)?;
    let pois = poisson_asvar(&inst.k, &inst.mu, &inst.phi)?;
    out.push(ident(
        i,
        "asvar/spectral-vs-poisson",
        (spec - pois).abs() / (1.0 + spec.abs()),
        1e-9,
    ));

    // Ordering pairs on X.
    let l_mh = build_mh(&inst.q, &inst.nu)?;
    ordering_checks(
        &mut out,
        i,
        "mh",
        &peskun_check(&inst.k, &l_mh, &inst.mu, &inst.nu, &inst.phi, &opts)?,
    );
    ordering_checks(
        &mut out,
        i,
        "da",
        &peskun_check(&inst.k, &l_da, &inst.mu, &inst.nu, &inst.phi, &opts)?,
    );

    // Jump chain invariance.
    let (kt, mut_, _) = jump_transform(&inst.k, &inst.mu)?;
    let pushed = kt.push_forward(mut_.probs());
    let gap = pushed
        .iter()
        .zip(mut_.probs())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    out.push(ident(i, "jump/invariance", gap, 1e-12));

    // Augmentation on T × Y with |T|·|Y| ≤ MAX_STATES.
    let t = rng.random_range(2..=4usize);
    let y = rng.random_range(2..=(MAX_STATES / t).max(2));
    let mu_t = FiniteDist::from_probs(random_simplex(t, &mut rng))?;
    let kdot = build_mh(&random_symmetric_proposal(t, &mut rng), &mu_t)?;
    let mut q_rows = DMatrix::zeros(t, y);
    for r in 0..t {
        for (c, v) in random_simplex(y, &mut rng).into_iter().enumerate() {
            q_rows[(r, c)] = v;
        }
    }
    let qt = RefreshTable::new(q_rows)?;
    let (kbar, mubar) = augment_with(&kdot, &mu_t, &qt)?;
    let g: Vec<f64> = (0..t * y).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut lhs = g.clone();
    let mut rhs = qt.integrate(&g);
    for step in 1..=5 {
        lhs = kbar.apply(&lhs);
        rhs = kdot.apply(&rhs);
        let gap = (0..t * y)
            .map(|s| (lhs[s] - rhs[s / y]).abs())
            .fold(0.0, f64::max);
        out.push(ident(i, &format!("augmented/power-{step}"), gap, 1e-12));
    }
    let pos_bar = spectral_info(&kbar, &mubar)?.positive;
    let pos_dot = spectral_info(&kdot, &mu_t)?.positive;
    out.push(ident(
        i,
        "augmented/positivity",
        if pos_bar == pos_dot { 0.0 } else { 1.0 },
        0.0,
    ));

    let raw: Vec<f64> = (0..t * y).map(|_| rng.random_range(0.1..3.0)).collect();
    let masses: Vec<f64> = (0..t * y).map(|s| raw[s] * mubar.prob(s)).collect();
    let nu_bar = FiniteDist::from_masses(mubar.labels().to_vec(), &masses)?;
    let w_bar = RealFunction::new(raw)?;
    let l_bar = build_da(&kbar, &w_bar)?;
    let phi: Vec<f64> = (0..t * y).map(|_| rng.random_range(-2.0..2.0)).collect();
    let w_lo = (0..t * y)
        .map(|s| masses[s] / mubar.prob(s) / masses.iter().sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let split_opts = PeskunOptions {
        marginal: Some(MarginalSplit { t, y }),
        c_lower: Some(w_lo),
        ..opts.clone()
    };
    let r = peskun_check(&kbar, &l_bar, &mubar, &nu_bar, &phi, &split_opts)?;
    ordering_checks(&mut out, i, "augmented", &r);
    // Full-space bound with ‖w‖∞ on random g of (t, y).
    let w_norm: Vec<f64> = {
        let z: f64 = masses.iter().sum();
        (0..t * y).map(|s| masses[s] / mubar.prob(s) / z).collect()
    };
    let w_sup = w_norm.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let g_full = RealFunction::new((0..t * y).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let e_l = dirichlet_form(&l_bar, &nu_bar, &g_full)?;
    let e_k = dirichlet_form(&kbar, &mubar, &g_full)?;
    out.push(ineq(i, "augmented/dirichlet-sup-w", e_l, w_sup * e_k, 1e-9));
    out.push(ident(
        i,
        "augmented/reversible",
        if check_reversible(&l_bar, &nu_bar, 1e-12)? {
            0.0
        } else {
            1.0
        },
        0.0,
    ));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub check: String,
    pub evaluated: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub worst_instance: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub instances: usize,
    pub checks: Vec<CheckSummary>,
    /// Up to 50 failing entries.
    pub failures: Vec<CheckResult>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn summary(&self, check: &str) -> Option<&CheckSummary> {
        self.checks.iter().find(|c| c.check == check)
    }
}

/// Generate `instance_count` random instances from `seed` and evaluate every
/// ordering inequality and structural identity on each.
pub fn verify_suite(seed: u64, instance_count: usize) -> Result<VerifyReport> {
    let per: Vec<Vec<CheckResult>> = (0..instance_count)
        .into_par_iter()
        .map(|i| check_instance(seed, i))
        .collect::<Result<_>>()?;
    let mut checks: Vec<CheckSummary> = Vec::new();
    let mut failures = Vec::new();
    for r in per.into_iter().flatten() {
        let idx = match checks.iter().position(|c| c.check == r.check) {
            Some(k) => k,
            None => {
                checks.push(CheckSummary {
                    check: r.check.clone(),
                    evaluated: 0,
                    violations: 0,
                    worst_margin: f64::NEG_INFINITY,
                    worst_instance: r.instance,
                });
                checks.len() - 1
            }
        };
        let c = &mut checks[idx];
        c.evaluated += 1;
        if r.margin > c.worst_margin {
            c.worst_margin = r.margin;
            c.worst_instance = r.instance;
        }
        if !r.passed {
            c.violations += 1;
            if failures.len() < 50 {
                failures.push(r);
            }
        }
    }
    let passed = checks.iter().all(|c| c.violations == 0);
    Ok(VerifyReport {
        seed,
        instances: instance_count,
        checks,
        failures,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_instances_are_valid() {
        let mut rng = stream_rng(1, 0);
        for _ in 0..50 {
            let n = rng.random_range(2..=MAX_STATES);
            let inst = random_instance(n, &mut rng).unwrap();
            assert!(check_reversible(&inst.k, &inst.mu, 1e-12).unwrap());
            assert!((inst.mu.expect(inst.w.values()) - 1.0).abs() < 1e-12);
            for i in 0..n {
                for j in 0..n {
                    assert!((inst.q.get(i, j) - inst.q.get(j, i)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn small_suite_passes_and_is_deterministic() {
        let a = verify_suite(9, 40).unwrap();
        assert!(a.passed, "{:?}", a.failures);
        let b = verify_suite(9, 40).unwrap();
        assert_eq!(a, b);
        for name in [
            "mh/upper",
            "da/lower",
            "augmented/augmented",
            "augmented/power-5",
            "jump/invariance",
        ] {
            assert_eq!(a.summary(name).unwrap().evaluated, 40, "{name}");
        }
    }
}
