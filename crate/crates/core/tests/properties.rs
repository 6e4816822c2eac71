use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use asvar_core::experiments::{random_instance, RandomInstance};
use asvar_core::finite::{
    augment_with, build_da, check_reversible, dirichlet_form, exact_asvar, flux_gap,
    jump_transform, poisson_asvar, variational_asvar, FiniteDist, RealFunction, RefreshTable,
};
use asvar_core::latent::{base_kernel, enumerate_measures, two_coin, LatentModel, TestFn};
use asvar_core::samplers::{run, run_da, run_is, run_pm_parent, Algorithm, IsMode};

fn instance(seed: u64, n: usize) -> (RandomInstance, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = random_instance(n, &mut rng).unwrap();
    (inst, rng)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mh_and_da_are_reversible(seed in any::<u64>(), n in 2usize..=8) {
        let (inst, _) = instance(seed, n);
        prop_assert!(flux_gap(&inst.k, &inst.mu).unwrap() <= 1e-12);
        let da = build_da(&inst.k, &inst.w).unwrap();
        prop_assert!(flux_gap(&da, &inst.nu).unwrap() <= 1e-12);
    }

    #[test]
    fn spectral_and_poisson_routes_agree(seed in any::<u64>(), n in 2usize..=8) {
        let (inst, _) = instance(seed, n);
        let s = exact_asvar(&inst.k, &inst.mu, &inst.phi, 1.0).unwrap();
        let p = poisson_asvar(&inst.k, &inst.mu, &inst.phi).unwrap();
        prop_assert!(rel(s, p) <= 1e-9, "{} vs {}", s, p);
    }

    #[test]
    fn resolvent_variance_is_continuous_at_one(seed in any::<u64>(), n in 2usize..=8) {
        let (inst, _) = instance(seed, n);
        let v1 = exact_asvar(&inst.k, &inst.mu, &inst.phi, 1.0).unwrap();
        let near = exact_asvar(&inst.k, &inst.mu, &inst.phi, 1.0 - 1e-7).unwrap();
        prop_assert!(rel(v1, near) <= 1e-3, "{} vs {}", v1, near);
    }

    #[test]
    fn variational_form_matches_resolvent(seed in any::<u64>(), n in 2usize..=8, lambda in 0.05f64..0.99) {
        let (inst, _) = instance(seed, n);
        let direct = exact_asvar(&inst.k, &inst.mu, &inst.phi, lambda).unwrap();
        let var = variational_asvar(&inst.k, &inst.mu, &inst.phi, lambda).unwrap();
        prop_assert!(rel(direct, var) <= 1e-9, "{} vs {}", direct, var);
    }

    #[test]
    fn jump_chain_is_invariant_and_reversible(seed in any::<u64>(), n in 2usize..=8) {
        let (inst, _) = instance(seed, n);
        let (kt, mt, alpha) = jump_transform(&inst.k, &inst.mu).unwrap();
        let pushed = kt.push_forward(mt.probs());
        for (a, b) in pushed.iter().zip(mt.probs()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert!(check_reversible(&kt, &mt, 1e-10).unwrap());
        for i in 0..n {
            prop_assert!(kt.get(i, i).abs() <= 1e-15 || alpha[i] == 0.0);
        }
    }

    #[test]
    fn augmented_powers_factor_through_refresh(seed in any::<u64>(), t in 2usize..=4, y in 2usize..=4) {
        let (inst, mut rng) = instance(seed, t);
        let q = DMatrix::from_fn(t, y, |_, _| rng.random_range(0.05..1.0));
        let q = DMatrix::from_fn(t, y, |r, c| q[(r, c)] / q.row(r).sum());
        let table = RefreshTable::new(q.clone()).unwrap();
        let (kbar, mubar) = augment_with(&inst.k, &inst.mu, &table).unwrap();
        prop_assert!(flux_gap(&kbar, &mubar).unwrap() <= 1e-12);
        let g: Vec<f64> = (0..t * y).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut rhs: Vec<f64> = (0..t).map(|r| (0..y).map(|c| q[(r, c)] * g[r * y + c]).sum()).collect();
        let mut lhs = g;
        for _ in 0..5 {
            lhs = kbar.apply(&lhs);
            rhs = inst.k.apply(&rhs);
            for s in 0..t * y {
                prop_assert!((lhs[s] - rhs[s / y]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn dirichlet_forms_are_sandwiched(seed in any::<u64>(), n in 2usize..=8) {
        let (inst, mut rng) = instance(seed, n);
        let l = build_da(&inst.k, &inst.w).unwrap();
        let supp = inst.mu.support();
        let w_max = supp.iter().map(|&i| inst.w[i]).fold(f64::NEG_INFINITY, f64::max);
        let w_min = supp.iter().map(|&i| inst.w[i]).fold(f64::INFINITY, f64::min);
        for _ in 0..10 {
            let g = RealFunction::new((0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
            let el = dirichlet_form(&l, &inst.nu, &g).unwrap();
            let ek = dirichlet_form(&inst.k, &inst.mu, &g).unwrap();
            prop_assert!(el <= w_max * ek + 1e-9 * (1.0 + ek));
            prop_assert!(w_min * ek <= el + 1e-9 * (1.0 + ek));
        }
    }

    #[test]
    fn conditional_mean_integrates_to_scaled_target(eps in 0.0f64..1.0, fi in 0usize..5) {
        let m = two_coin().inflated(eps).unwrap();
        let f = TestFn::ALL[fi];
        let ms = enumerate_measures(&m, f).unwrap();
        let lhs = ms.mu.expect(&ms.m_f);
        prop_assert!((lhs - ms.c_xi * ms.nu_f).abs() <= 1e-10, "{} vs {}", lhs, ms.c_xi * ms.nu_f);
        prop_assert!((ms.mu.expect(&ms.m_1) - ms.c_xi).abs() <= 1e-10);
    }

    #[test]
    fn same_seed_reproduces_the_path(seed in any::<u64>(), ai in 0usize..6) {
        let m = two_coin();
        let a = Algorithm::ALL[ai];
        let p = run(&m, m.proposal(), a, 300, seed).unwrap();
        let q = run(&m, m.proposal(), a, 300, seed).unwrap();
        prop_assert_eq!(p, q);
    }

    #[test]
    fn da_draws_fewer_latents_after_a_rejection(seed in any::<u64>()) {
        let m = two_coin();
        let n = 200;
        let p = run_da(&m, m.proposal(), n, seed).unwrap();
        let base = run(&m, m.proposal(), Algorithm::Base, n, seed).unwrap();
        prop_assert!(p.meta.v_draws <= n as u64);
        if base.steps.iter().any(|s| !s.accepted) {
            prop_assert!(p.meta.v_draws < n as u64);
        }
    }
}

#[test]
fn da_accepts_no_more_often_than_pm_parent() {
    let m = two_coin();
    let n = 200_000;
    let da = run_da(&m, m.proposal(), n, 4).unwrap();
    let pm = run_pm_parent(&m, m.proposal(), n, 4).unwrap();
    let (a, b) = (da.acceptance_rate(), pm.acceptance_rate());
    let se = (a * (1.0 - a) / n as f64 + b * (1.0 - b) / n as f64).sqrt();
    assert!(a <= b + 3.0 * se, "DA {a} vs PM parent {b}");
}

#[test]
fn holding_times_are_geometric() {
    let m = two_coin();
    let (k, _) = base_kernel(&m, m.proposal()).unwrap();
    let p = run_is(&m, m.proposal(), 400_000, 6, IsMode::IsjSingle).unwrap();
    let nu = m.u_count();
    let mut sums = vec![(0.0f64, 0usize); k.len()];
    // The last holding time is censored by the end of the run.
    for s in &p.steps[..p.len() - 1] {
        let e = &mut sums[s.theta * nu + s.u];
        e.0 += s.n as f64;
        e.1 += 1;
    }
    for (i, (total, count)) in sums.into_iter().enumerate() {
        if count < 100 {
            continue;
        }
        let alpha = k.escape(i);
        let mean = total / count as f64;
        let se = ((1.0 - alpha) / (alpha * alpha) / count as f64).sqrt();
        assert!(
            (mean - 1.0 / alpha).abs() <= 3.0 * se,
            "state {i}: {mean} vs {}",
            1.0 / alpha
        );
    }
}

#[test]
fn base_invariant_matches_stationary_mass() {
    let m = two_coin();
    let (k, mu) = base_kernel(&m, m.proposal()).unwrap();
    let pushed = FiniteDist::from_probs(k.push_forward(mu.probs())).unwrap();
    assert!(mu.total_variation(pushed.probs()) < 1e-14);
}
