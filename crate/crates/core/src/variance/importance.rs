use std::collections::HashMap;

use super::empirical::{batch_means_asvar, default_batch_count};
use super::{AsvarEstimate, AsvarMethod, IsComponents};
use crate::finite::{exact_asvar, FiniteKernel};
use crate::latent::{enumerate_measures, eval_weights, is_kernel, LatentModel, TestFn};
use crate::samplers::{stream_rng, streams, weighted_terms, IsMode};
use crate::{Error, Result};

fn finite_or_inf(x: f64) -> f64 {
    if x.is_nan() {
        f64::INFINITY
    } else {
        x
    }
}

/// Exact IS variance of `mode` for an enumerable model run on the base
/// kernel `k` (a μ-reversible kernel on `T × U`).
///
/// For jump modes `value` is per jump-chain step; `per_base_step` divides
/// by `μ(a)`. `cross_check` is `var(K̄, ξ(f̄))/c_ξ²` computed on `T × U × V`,
/// which equals the IS0 value.
pub fn is_asvar_exact(
    model: &dyn LatentModel,
    k: &FiniteKernel,
    f: TestFn,
    mode: IsMode,
) -> Result<AsvarEstimate> {
    let ms = enumerate_measures(model, f)?;
    if k.len() != ms.mu.len() {
        return Err(Error::Dimension(format!(
            "kernel on {} states, model has {}",
            k.len(),
            ms.mu.len()
        )));
    }
    let var_k_mf = exact_asvar(k, &ms.mu, &ms.m_fbar(), 1.0)?;
    let v = &ms.v_fbar;
    let mu_v = ms.mu.expect(v);
    let alpha: Vec<f64> = (0..k.len()).map(|i| k.escape(i)).collect();
    if mode != IsMode::Is0 {
        for i in ms.mu.support() {
            if alpha[i] <= 0.0 {
                return Err(Error::Absorbing(k.labels()[i].clone()));
            }
        }
    }
    let (mu_a, mu_a_vfbar) = match mode {
        IsMode::Is0 => (1.0, mu_v),
        IsMode::IsjAvg => (ms.mu.expect(&alpha), mu_v),
        IsMode::IsjSingle => {
            let av: Vec<f64> = v
                .iter()
                .zip(&alpha)
                .map(|(v, a)| if *a > 0.0 { v * (2.0 - a) / a } else { 0.0 })
                .collect();
            (ms.mu.expect(&alpha), ms.mu.expect(&av))
        }
    };
    let c2 = ms.c_xi * ms.c_xi;
    let kbar = is_kernel(k, &ms)?;
    let cross = exact_asvar(&kbar, &ms.mu_bar, &ms.xi_fbar(), 1.0)? / c2;
    let components = IsComponents {
        var_k_mf,
        mu_a,
        mu_a_vfbar,
        c_xi: ms.c_xi,
        d_tilde: mu_a * (mu_a_vfbar - mu_v) / c2,
    };
    let value = finite_or_inf(components.recombine());
    Ok(AsvarEstimate {
        value,
        method: AsvarMethod::IsExact,
        standard_error: None,
        components: Some(components),
        per_base_step: Some(value / mu_a),
        cross_check: Some(cross),
    })
}

/// Simulation estimate of the IS variance from a path of `run_is`.
///
/// With `replicates = Some(r)`, every distinct visited `(θ, u)` gets `r`
/// fresh `V` draws from the refresh stream; their mean and variance of
/// `ξ(f̄)` give `m_f̄` and `v_f̄`, and `var(K, m_f̄)` is the batch-means
/// variance of `m_f̄` along the base path. With `None` the weighted output
/// is linearised around the estimate and its batch-means variance returned.
pub fn is_asvar_plugin(
    path: &crate::samplers::ChainPath,
    model: &dyn LatentModel,
    f: TestFn,
    replicates: Option<usize>,
) -> Result<AsvarEstimate> {
    let mode = IsMode::try_from(path.meta.algorithm).map_err(|_| {
        Error::IncompatiblePath(format!("`{}` is not an IS path", path.meta.algorithm))
    })?;
    let terms = weighted_terms(path, model, f)?;
    let n = path.total_count() as f64;
    let jumps = path.len() as f64;
    let s1: f64 = terms.iter().map(|t| t.0).sum();
    if !(s1 > 0.0) {
        return Err(Error::ZeroNormalizer(s1));
    }
    let c = s1 / n;
    let c2 = c * c;
    let nu = terms.iter().map(|t| t.1).sum::<f64>() / s1;
    let mu_a = match mode {
        IsMode::Is0 => 1.0,
        _ => jumps / n,
    };

    let Some(r) = replicates else {
        let y: Vec<f64> = terms.iter().map(|t| t.1 - nu * t.0).collect();
        let bm = batch_means_asvar(&y, default_batch_count(y.len()))?;
        let scale = mu_a * mu_a / c2;
        let value = bm.value * scale;
        return Ok(AsvarEstimate {
            value,
            method: AsvarMethod::IsLinearized,
            standard_error: bm.standard_error.map(|s| s * scale),
            components: None,
            per_base_step: Some(value / mu_a),
            cross_check: None,
        });
    };
    if r < 2 {
        return Err(Error::TooShort(format!(
            "{r} refresh replicate(s); at least 2 are needed for a variance"
        )));
    }

    let mut rng = stream_rng(path.meta.seed, streams::REFRESH);
    // Per visited state: (m̂, v̂, Var(v̂), weight of v̂ in μ(aṽ)).
    let mut cache: HashMap<(usize, usize), [f64; 4]> = HashMap::new();
    let mut expanded = Vec::with_capacity(n as usize);
    let (mut mu_v, mut mu_av) = (0.0, 0.0);
    for s in &path.steps {
        let entry = match cache.get_mut(&(s.theta, s.u)) {
            Some(x) => x,
            None => {
                let mut g = Vec::with_capacity(r);
                for _ in 0..r {
                    let rec = model.sample_v(s.theta, s.u, &mut rng);
                    let w = eval_weights(model, s.theta, s.u, &rec, f)?;
                    g.push(w.xi_f - nu * w.xi1);
                }
                let rf = r as f64;
                let m = g.iter().sum::<f64>() / rf;
                let ss = g.iter().map(|x| (x - m).powi(2)).sum::<f64>();
                let m4 = g.iter().map(|x| (x - m).powi(4)).sum::<f64>() / rf;
                let v = ss / (rf - 1.0);
                let var_v = ((m4 - (ss / rf).powi(2)) / rf).max(0.0);
                cache.entry((s.theta, s.u)).or_insert([m, v, var_v, 0.0])
            }
        };
        let count = s.n as f64;
        let wt = count * count / s.vs.len().max(1) as f64 / n;
        entry[3] += wt;
        expanded.extend(std::iter::repeat_n(entry[0], s.n as usize));
        mu_v += count * entry[1];
        mu_av += wt * entry[1];
    }
    mu_v /= n;
    let bm = batch_means_asvar(&expanded, default_batch_count(expanded.len()))?;
    let components = IsComponents {
        var_k_mf: bm.value,
        mu_a,
        mu_a_vfbar: mu_av,
        c_xi: c,
        d_tilde: mu_a * (mu_av - mu_v) / c2,
    };
    let value = components.recombine();
    let var_mu_av: f64 = cache.values().map(|e| e[3] * e[3] * e[2]).sum();
    let se_mf = bm.standard_error.unwrap_or(0.0);
    Ok(AsvarEstimate {
        value,
        method: AsvarMethod::IsPlugin,
        standard_error: Some(mu_a / c2 * (se_mf * se_mf + var_mu_av).sqrt()),
        components: Some(components),
        per_base_step: Some(value / mu_a),
        cross_check: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite::jump_transform;
    use crate::latent::{base_kernel, two_coin};
    use crate::samplers::run_is;

    #[test]
    fn is0_component_and_product_routes_agree() {
        let m = two_coin();
        let (k, _) = base_kernel(&m, m.proposal()).unwrap();
        for f in TestFn::ALL {
            let e = is_asvar_exact(&m, &k, f, IsMode::Is0).unwrap();
            let cross = e.cross_check.unwrap();
            assert!((e.value - cross).abs() <= 1e-9 * (1.0 + cross), "{f}");
            assert_eq!(e.components.unwrap().d_tilde, 0.0);
        }
    }

    #[test]
    fn jump_modes_match_the_jump_chain_oracle() {
        let m = two_coin();
        let (k, _) = base_kernel(&m, m.proposal()).unwrap();
        let f = TestFn::ThetaPlusZ;
        let ms = enumerate_measures(&m, f).unwrap();
        let (kt, mut_, alpha) = jump_transform(&k, &ms.mu).unwrap();
        let mf = ms.m_fbar();
        let mu_alpha = ms.mu.expect(alpha.values());
        let h: Vec<f64> = (0..mf.len()).map(|i| mf[i] / alpha[i]).collect();
        let var_jump = exact_asvar(&kt, &mut_, &h, 1.0).unwrap();
        let c2 = ms.c_xi * ms.c_xi;
        for (mode, draws_per) in [(IsMode::IsjSingle, false), (IsMode::IsjAvg, true)] {
            // Var(N·ξ̄ | x) = E[N² Var(ξ̄|N)] + m² Var(N), N ~ Geometric(α).
            let cond: Vec<f64> = (0..mf.len())
                .map(|i| {
                    let (a, v) = (alpha[i], ms.v_fbar[i]);
                    let noise = if draws_per {
                        v / a
                    } else {
                        v * (2.0 - a) / (a * a)
                    };
                    noise + mf[i] * mf[i] * (1.0 - a) / (a * a)
                })
                .collect();
            let oracle = mu_alpha * mu_alpha * (var_jump + mut_.expect(&cond)) / c2;
            let e = is_asvar_exact(&m, &k, f, mode).unwrap();
            assert!(
                (e.value - oracle).abs() < 1e-9 * (1.0 + oracle),
                "{mode:?}: {} vs {oracle}",
                e.value
            );
        }
        let is0 = is_asvar_exact(&m, &k, f, IsMode::Is0).unwrap();
        let avg = is_asvar_exact(&m, &k, f, IsMode::IsjAvg).unwrap();
        let single = is_asvar_exact(&m, &k, f, IsMode::IsjSingle).unwrap();
        assert!((avg.per_base_step.unwrap() - is0.value).abs() < 1e-12 * (1.0 + is0.value));
        let d = single.components.unwrap().d_tilde;
        assert!(d >= 0.0);
        let oracle_d: f64 = 2.0 * mu_alpha / c2
            * ms.mu.expect(
                &(0..mf.len())
                    .map(|i| ms.v_fbar[i] * (1.0 - alpha[i]) / alpha[i])
                    .collect::<Vec<_>>(),
            );
        assert!((d - oracle_d).abs() < 1e-12 * (1.0 + d));
        assert!((single.value - (mu_alpha * is0.value + d)).abs() < 1e-12 * (1.0 + single.value));
    }

    #[test]
    fn plugin_tracks_the_exact_value() {
        let m = two_coin();
        let (k, _) = base_kernel(&m, m.proposal()).unwrap();
        let f = TestFn::Z;
        for mode in [IsMode::Is0, IsMode::IsjSingle, IsMode::IsjAvg] {
            let exact = is_asvar_exact(&m, &k, f, mode).unwrap();
            let p = run_is(&m, m.proposal(), 400_000, 21, mode).unwrap();
            let e = is_asvar_plugin(&p, &m, f, Some(50)).unwrap();
            let se = e.standard_error.unwrap();
            assert!(
                (e.value - exact.value).abs() < 3.0 * se,
                "{mode:?}: {} vs {} (se {se})",
                e.value,
                exact.value
            );
            let lin = is_asvar_plugin(&p, &m, f, None).unwrap();
            // Sampling SD of batch means evaluated at the true value.
            let b = default_batch_count(p.len()) as f64;
            let se = exact.value * (2.0 / (b - 1.0)).sqrt();
            assert!(
                (lin.value - exact.value).abs() < 3.0 * se,
                "{mode:?} linearised: {} vs {}",
                lin.value,
                exact.value
            );
            let ce = e.components.unwrap();
            assert!((ce.recombine() - e.value).abs() < 1e-10 * (1.0 + e.value));
        }
    }

    #[test]
    fn plugin_rejects_single_replicate_and_non_is_paths() {
        let m = two_coin();
        let p = run_is(&m, m.proposal(), 100, 0, IsMode::Is0).unwrap();
        assert!(matches!(
            is_asvar_plugin(&p, &m, TestFn::Z, Some(1)),
            Err(Error::TooShort(_))
        ));
        let b = crate::samplers::run_base_chain(&m, m.proposal(), 100, 0).unwrap();
        assert!(is_asvar_plugin(&b, &m, TestFn::Z, None).is_err());
    }
}
