use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use super::path::{stream_rng, streams, Algorithm, ChainPath, ChainStep, PathMeta};
use crate::finite::{da_acceptance, FiniteKernel};
use crate::latent::{LatentModel, VRecord};
use crate::{Error, Result};

const INIT_RETRIES: usize = 1000;

fn categorical(probs: impl Iterator<Item = f64>, rng: &mut dyn RngCore) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        last = i;
        if x < acc && p > 0.0 {
            return i;
        }
    }
    last
}

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

/// Current state of the approximate chain on `T × U`.
#[derive(Debug, Clone, Copy)]
struct BaseState {
    theta: usize,
    u: usize,
    eta: f64,
}

/// Draw `θ₀` from the prior and `u₀ ~ Q^(U)`, retrying until `accept` holds.
fn init_state(
    model: &dyn LatentModel,
    rng: &mut ChaCha8Rng,
    what: &str,
    mut accept: impl FnMut(&BaseState, &mut ChaCha8Rng) -> bool,
) -> Result<BaseState> {
    let total: f64 = model.prior().iter().sum();
    if !(total > 0.0) {
        return Err(Error::Initialisation("prior has no mass".into()));
    }
    for _ in 0..INIT_RETRIES {
        let theta = categorical(model.prior().iter().map(|p| p / total), rng);
        let u = model.sample_u(theta, rng);
        let s = BaseState {
            theta,
            u,
            eta: model.eta(theta, u),
        };
        if accept(&s, rng) {
            return Ok(s);
        }
    }
    Err(Error::Initialisation(format!(
        "no initial state with {what} after {INIT_RETRIES} draws"
    )))
}

/// Proposal `(θ', u')` from `q ⊗ Q^(U)` and the log-free ratio factor
/// `prior(θ') q(θ', θ) / (prior(θ) q(θ, θ'))`.
fn propose(
    model: &dyn LatentModel,
    q: &FiniteKernel,
    s: &BaseState,
    rng: &mut ChaCha8Rng,
) -> (usize, usize, f64) {
    let t2 = categorical((0..q.len()).map(|j| q.get(s.theta, j)), rng);
    let u2 = model.sample_u(t2, rng);
    let prior = model.prior();
    let num = prior[t2] * q.get(t2, s.theta);
    let den = prior[s.theta] * q.get(s.theta, t2);
    let factor = if den > 0.0 { num / den } else { 0.0 };
    (t2, u2, factor)
}

fn mh_accept(ratio: f64, rng: &mut ChaCha8Rng) -> bool {
    let x: f64 = rng.random();
    x < ratio.min(1.0)
}

/// One step of the approximate PM chain; the acceptance uniform is always
/// drawn so that paths with the same seed stay coupled.
fn base_step(
    model: &dyn LatentModel,
    q: &FiniteKernel,
    s: &mut BaseState,
    rng: &mut ChaCha8Rng,
) -> bool {
    let (t2, u2, factor) = propose(model, q, s, rng);
    let eta2 = model.eta(t2, u2);
    let ratio = if s.eta > 0.0 {
        factor * eta2 / s.eta
    } else {
        1.0
    };
    let accepted = mh_accept(ratio, rng);
    if accepted {
        *s = BaseState {
            theta: t2,
            u: u2,
            eta: eta2,
        };
    }
    accepted
}

fn base_states(
    model: &dyn LatentModel,
    q: &FiniteKernel,
    n: usize,
    seed: u64,
) -> Result<Vec<(BaseState, bool)>> {
    check_proposal(model, q)?;
    let mut init = stream_rng(seed, streams::INIT);
    let mut rng = stream_rng(seed, streams::BASE);
    let mut s = init_state(model, &mut init, "eta > 0", |s, _| s.eta > 0.0)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let acc = base_step(model, q, &mut s, &mut rng);
        out.push((s, acc));
    }
    Ok(out)
}

fn meta(model: &dyn LatentModel, algorithm: Algorithm, n: usize, seed: u64) -> PathMeta {
    PathMeta {
        algorithm,
        seed,
        n: n as u64,
        model_id: model.id().to_string(),
        v_draws: 0,
        eta_evals: 0,
    }
}

/// The μ-reversible approximate PM chain on `T × U`.
pub fn run_base_chain(
    model: &dyn LatentModel,
    q: &FiniteKernel,
    n: usize,
    seed: u64,
) -> Result<ChainPath> {
    let states = base_states(model, q, n, seed)?;
    let mut m = meta(model, Algorithm::Base, n, seed);
    m.eta_evals = n as u64;
    Ok(ChainPath {
        meta: m,
        steps: states
            .into_iter()
            .map(|(s, accepted)| ChainStep {
                theta: s.theta,
                u: s.u,
                n: 1,
                accepted,
                eta: s.eta,
                vs: Vec::new(),
            })
            .collect(),
    })
}

/// How `V` is attached to the base path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsMode {
    Is0,
    IsjSingle,
    IsjAvg,
}

impl IsMode {
    pub fn algorithm(self) -> Algorithm {
        match self {
            IsMode::Is0 => Algorithm::Is0,
            IsMode::IsjSingle => Algorithm::IsjSingle,
            IsMode::IsjAvg => Algorithm::IsjAvg,
        }
    }
}

impl TryFrom<Algorithm> for IsMode {
    type Error = Error;

    fn try_from(a: Algorithm) -> Result<Self> {
        match a {
            Algorithm::Is0 => Ok(IsMode::Is0),
            Algorithm::IsjSingle => Ok(IsMode::IsjSingle),
            Algorithm::IsjAvg => Ok(IsMode::IsjAvg),
            other => Err(Error::Config(format!("`{other}` is not an IS mode"))),
        }
    }
}

/// The IS scheme: a base path of `n` iterations with `V` drawn at every
/// step (IS0), or compressed to its jump chain with holding counts and one
/// (ISJ-single) or `N_k` averaged (ISJ-avg) draws per jump state.
pub fn run_is(
    model: &dyn LatentModel,
    q: &FiniteKernel,
    n: usize,
    seed: u64,
    mode: IsMode,
) -> Result<ChainPath> {
    let states = base_states(model, q, n, seed)?;
    let mut latent = stream_rng(seed, streams::LATENT);
    let mut m = meta(model, mode.algorithm(), n, seed);
    m.eta_evals = n as u64;
    let mut steps: Vec<ChainStep> = Vec::new();
    match mode {
        IsMode::Is0 => {
            steps.reserve(n);
            for (s, accepted) in states {
                let v = model.sample_v(s.theta, s.u, &mut latent);
                steps.push(ChainStep {
                    theta: s.theta,
                    u: s.u,
                    n: 1,
                    accepted,
                    eta: s.eta,
                    vs: vec![v],
                });
            }
        }
        IsMode::IsjSingle | IsMode::IsjAvg => {
            let mut k = 0;
            while k < states.len() {
                let (s, accepted) = states[k];
                let mut j = k + 1;
                while j < states.len() && states[j].0.theta == s.theta && states[j].0.u == s.u {
                    j += 1;
                }
                let count = (j - k) as u64;
                let draws = if mode == IsMode::IsjAvg { count } else { 1 };
                let vs: Vec<VRecord> = (0..draws)
                    .map(|_| model.sample_v(s.theta, s.u, &mut latent))
                    .collect();
                steps.push(ChainStep {
                    theta: s.theta,
                    u: s.u,
                    n: count,
                    accepted,
                    eta: s.eta,
                    vs,
                });
                k = j;
            }
        }
    }
    m.v_draws = steps.iter().map(|s| s.vs.len() as u64).sum();
    Ok(ChainPath { meta: m, steps })
}

#[derive(Debug, Clone)]
struct FullState {
    base: BaseState,
    v: VRecord,
    zeta1: f64,
}

fn init_full(
    model: &dyn LatentModel,
    seed: u64,
    require_eta: bool,
) -> Result<(FullState, ChaCha8Rng, ChaCha8Rng)> {
    let mut init = stream_rng(seed, streams::INIT);
    let mut v0 = None;
    let base = init_state(model, &mut init, "zeta(1) > 0", |s, rng| {
        if require_eta && s.eta <= 0.0 {
            return false;
        }
        let v = model.sample_v(s.theta, s.u, rng);
        let ok = v.zeta1() > 0.0;
        v0 = Some(v);
        ok
    })?;
    let v = v0.expect("initialised");
    Ok((
        FullState {
            base,
            zeta1: v.zeta1(),
            v,
        },
        stream_rng(seed, streams::BASE),
        stream_rng(seed, streams::LATENT),
    ))
}

/// The PM parent: `(θ', u', v')` proposed jointly, accepted with the
/// `ζ(1)`-ratio.
pub fn run_pm_parent(
    model: &dyn LatentModel,
    q: &FiniteKernel,
    n: usize,
    seed: u64,
) -> Result<ChainPath> {
    check_proposal(model, q)?;
    let (mut x, mut rng, mut latent) = init_full(model, seed, false)?;
    let mut m = meta(model, Algorithm::PmParent, n, seed);
    let mut steps = Vec::with_capacity(n);
    for _ in 0..n {
        let (t2, u2, factor) = propose(model, q, &x.base, &mut rng);
        let v2 = model.sample_v(t2, u2, &mut latent);
        m.v_draws += 1;
        m.eta_evals += 1;
        let z2 = v2.zeta1();
        let ratio = factor * z2 / x.zeta1;
        let accepted = mh_accept(ratio, &mut rng);
        if accepted {
            x = FullState {
                base: BaseState {
                    theta: t2,
                    u: u2,
                    eta: model.eta(t2, u2),
                },
                v: v2,
                zeta1: z2,
            };
        }
        steps.push(ChainStep {
            theta: x.base.theta,
            u: x.base.u,
            n: 1,
            accepted,
            eta: x.base.eta,
            vs: vec![x.v.clone()],
        });
    }
    Ok(ChainPath { meta: m, steps })
}

/// Delayed acceptance: a base-chain step screens the move; only if it leaves
/// the current `(θ, u)` is `V` drawn and the `ξ(1)`-ratio applied.
pub fn run_da(model: &dyn LatentModel, q: &FiniteKernel, n: usize, seed: u64) -> Result<ChainPath> {
    check_proposal(model, q)?;
    let (mut x, mut rng, mut latent) = init_full(model, seed, true)?;
    let mut m = meta(model, Algorithm::Da, n, seed);
    let mut steps = Vec::with_capacity(n);
    for _ in 0..n {
        let mut cand = x.base;
        base_step(model, q, &mut cand, &mut rng);
        m.eta_evals += 1;
        let mut accepted = false;
        if cand.theta != x.base.theta || cand.u != x.base.u {
            let v2 = model.sample_v(cand.theta, cand.u, &mut latent);
            m.v_draws += 1;
            let xi = x.zeta1 / x.base.eta;
            let xi2 = v2.zeta1() / cand.eta;
            let x2: f64 = latent.random();
            if x2 < da_acceptance(xi, xi2) {
                accepted = true;
                x = FullState {
                    base: cand,
                    zeta1: v2.zeta1(),
                    v: v2,
                };
            }
        }
        steps.push(ChainStep {
            theta: x.base.theta,
            u: x.base.u,
            n: 1,
            accepted,
            eta: x.base.eta,
            vs: vec![x.v.clone()],
        });
    }
    Ok(ChainPath { meta: m, steps })
}

/// Dispatch on the algorithm tag.
pub fn run(
    model: &dyn LatentModel,
    q: &FiniteKernel,
    algorithm: Algorithm,
    n: usize,
    seed: u64,
) -> Result<ChainPath> {
    match algorithm {
        Algorithm::Base => run_base_chain(model, q, n, seed),
        Algorithm::PmParent => run_pm_parent(model, q, n, seed),
        Algorithm::Da => run_da(model, q, n, seed),
        a => run_is(model, q, n, seed, IsMode::try_from(a)?),
    }
}
