use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::latent::{LatentModel, TestFn, VRecord};
use crate::{Error, Result};

/// Fixed stream numbers under one root seed. Every runner draws its initial
/// state from `INIT`, the base-chain proposal and acceptance uniforms from
/// `BASE`, and `V` records from `LATENT`; plug-in variance estimation redraws
/// from `REFRESH`. IS0 and both ISJ modes with the same seed therefore share
/// one base path.
pub mod streams {
    pub const INIT: u64 = 0;
    pub const BASE: u64 = 1;
    pub const LATENT: u64 = 2;
    pub const REFRESH: u64 = 3;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Base,
    PmParent,
    Da,
    Is0,
    IsjSingle,
    IsjAvg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Base,
        Algorithm::PmParent,
        Algorithm::Da,
        Algorithm::Is0,
        Algorithm::IsjSingle,
        Algorithm::IsjAvg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Base => "base",
            Algorithm::PmParent => "pm-parent",
            Algorithm::Da => "da",
            Algorithm::Is0 => "is0",
            Algorithm::IsjSingle => "isj-single",
            Algorithm::IsjAvg => "isj-avg",
        }
    }

    pub fn is_importance(self) -> bool {
        matches!(
            self,
            Algorithm::Is0 | Algorithm::IsjSingle | Algorithm::IsjAvg
        )
    }

    pub fn is_pseudomarginal(self) -> bool {
        matches!(self, Algorithm::PmParent | Algorithm::Da)
    }

    pub fn is_jump(self) -> bool {
        matches!(self, Algorithm::IsjSingle | Algorithm::IsjAvg)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

/// One entry of a path. For jump paths `n` is the holding count; otherwise 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStep {
    pub theta: usize,
    pub u: usize,
    pub n: u64,
    pub accepted: bool,
    pub eta: f64,
    /// `V` records attached to this entry: one for IS0, ISJ-single and the
    /// PM chains, `n` for ISJ-avg, none for the bare base chain.
    pub vs: Vec<VRecord>,
}

impl ChainStep {
    /// `(ξ(1), ξ(f))`, averaged over the attached records.
    pub fn xi(&self, f: TestFn, theta_value: f64) -> Option<(f64, f64)> {
        if self.vs.is_empty() {
            return None;
        }
        if self.eta <= 0.0 {
            return Some((0.0, 0.0));
        }
        let k = self.vs.len() as f64;
        let (s1, sf) = self.vs.iter().fold((0.0, 0.0), |(a, b), v| {
            (a + v.zeta1(), b + v.zeta_f(f, theta_value))
        });
        Some((s1 / (k * self.eta), sf / (k * self.eta)))
    }

    /// `ζ̂(f)` of the first attached record.
    pub fn zeta_hat(&self, f: TestFn, theta_value: f64) -> Option<f64> {
        self.vs.first().map(|v| v.zeta_hat(f, theta_value))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMeta {
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Number of base-chain iterations simulated.
    pub n: u64,
    pub model_id: String,
    /// Number of `Q^(V)` draws.
    pub v_draws: u64,
    /// Number of `η` evaluations.
    pub eta_evals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainPath {
    pub meta: PathMeta,
    pub steps: Vec<ChainStep>,
}

impl ChainPath {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `Σ N_k`.
    pub fn total_count(&self) -> u64 {
        self.steps.iter().map(|s| s.n).sum()
    }

    pub fn acceptance_rate(&self) -> f64 {
        let acc = self.steps.iter().filter(|s| s.accepted).count();
        acc as f64 / self.steps.len().max(1) as f64
    }

    /// Drop the first `burn_in` entries.
    pub fn burn(mut self, burn_in: usize) -> Self {
        let k = burn_in.min(self.steps.len());
        self.steps.drain(..k);
        self
    }
}

/// One CSV row of a path for a given test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub k: usize,
    pub theta: f64,
    pub u: usize,
    #[serde(rename = "N")]
    pub n: u64,
    pub accepted: bool,
    pub xi1: Option<f64>,
    pub xif: Option<f64>,
    pub zetahat_f: Option<f64>,
}

pub fn path_rows(path: &ChainPath, model: &dyn LatentModel, f: TestFn) -> Vec<PathRow> {
    path.steps
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let tv = model.theta_values()[s.theta];
            let xi = s.xi(f, tv);
            PathRow {
                k,
                theta: tv,
                u: s.u,
                n: s.n,
                accepted: s.accepted,
                xi1: xi.map(|x| x.0),
                xif: xi.map(|x| x.1),
                zetahat_f: s.zeta_hat(f, tv),
            }
        })
        .collect()
}
