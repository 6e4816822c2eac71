use serde::{Deserialize, Serialize};

use super::path::ChainPath;
use crate::latent::{weights_with_eta, LatentModel, TestFn};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Ergodic average of `ζ̂(f)` along a PM or DA path.
    Pm,
    /// `Σ N ξ(f) / Σ N ξ(1)` along an IS path.
    Is,
    /// Self-normalised form with weights `ξ(1)` and `φ = ξ(f)/ξ(1)`.
    Snis,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub value: f64,
    /// Kish effective sample size of the weights (the path length for `Pm`).
    pub n_effective: f64,
    /// `Σ N ξ(1) / Σ N`, an estimate of `c_ξ` (1 for `Pm`).
    pub normalizer: f64,
}

/// Self-normalised average `Σ w φ / Σ w`.
pub fn snis(weights: &[f64], phi: &[f64]) -> Result<EstimatorResult> {
    if weights.len() != phi.len() {
        return Err(Error::Dimension(format!(
            "{} weights, {} values",
            weights.len(),
            phi.len()
        )));
    }
    if weights.is_empty() {
        return Err(Error::TooShort("empty path".into()));
    }
    let s: f64 = weights.iter().sum();
    if !(s > 0.0) {
        return Err(Error::ZeroWeights);
    }
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    let num: f64 = weights.iter().zip(phi).map(|(w, p)| w * p).sum();
    Ok(EstimatorResult {
        value: num / s,
        n_effective: s * s / s2,
        normalizer: s / weights.len() as f64,
    })
}

/// `Σ N_k ξ_k(f) / Σ N_k ξ_k(1)`.
pub fn is_ratio(counts: &[u64], xi_f: &[f64], xi_1: &[f64]) -> Result<EstimatorResult> {
    if counts.len() != xi_f.len() || counts.len() != xi_1.len() {
        return Err(Error::Dimension(
            "counts and weights differ in length".into(),
        ));
    }
    let terms: Vec<(f64, f64)> = counts
        .iter()
        .zip(xi_f.iter().zip(xi_1))
        .map(|(&n, (f, w))| (n as f64 * w, n as f64 * f))
        .collect();
    ratio_of_terms(&terms, counts.iter().sum::<u64>() as f64)
}

fn ratio_of_terms(terms: &[(f64, f64)], total: f64) -> Result<EstimatorResult> {
    if terms.is_empty() {
        return Err(Error::TooShort("empty path".into()));
    }
    let s1: f64 = terms.iter().map(|t| t.0).sum();
    if !(s1 > 0.0) {
        return Err(Error::ZeroNormalizer(s1));
    }
    let sf: f64 = terms.iter().map(|t| t.1).sum();
    let s2: f64 = terms.iter().map(|t| t.0 * t.0).sum();
    Ok(EstimatorResult {
        value: sf / s1,
        n_effective: s1 * s1 / s2,
        normalizer: s1 / total,
    })
}

/// Per-entry `(N ξ(1), N ξ(f))` with `ξ` averaged over attached records;
/// support violations are reported.
pub fn weighted_terms(
    path: &ChainPath,
    model: &dyn LatentModel,
    f: TestFn,
) -> Result<Vec<(f64, f64)>> {
    let tv = model.theta_values();
    path.steps
        .iter()
        .map(|s| {
            if s.vs.is_empty() {
                return Err(Error::IncompatiblePath(
                    "path carries no latent records".into(),
                ));
            }
            let (mut a, mut b) = (0.0, 0.0);
            for v in &s.vs {
                let w = weights_with_eta(s.eta, tv[s.theta], s.theta, s.u, v, f)?;
                a += w.xi1;
                b += w.xi_f;
            }
            let k = s.vs.len() as f64;
            let n = s.n as f64;
            Ok((n * a / k, n * b / k))
        })
        .collect()
}

pub fn estimate(
    path: &ChainPath,
    model: &dyn LatentModel,
    kind: EstimatorKind,
    f: TestFn,
) -> Result<EstimatorResult> {
    if path.is_empty() {
        return Err(Error::TooShort("empty path".into()));
    }
    let tv = model.theta_values();
    match kind {
        EstimatorKind::Pm => {
            if !path.meta.algorithm.is_pseudomarginal() {
                return Err(Error::IncompatiblePath(format!(
                    "PM estimator on a `{}` path",
                    path.meta.algorithm
                )));
            }
            let mut sum = 0.0;
            for s in &path.steps {
                sum += s
                    .zeta_hat(f, tv[s.theta])
                    .ok_or_else(|| Error::IncompatiblePath("missing record".into()))?;
            }
            let n = path.len() as f64;
            Ok(EstimatorResult {
                value: sum / n,
                n_effective: n,
                normalizer: 1.0,
            })
        }
        EstimatorKind::Is | EstimatorKind::Snis => {
            if !path.meta.algorithm.is_importance() {
                return Err(Error::IncompatiblePath(format!(
                    "IS estimator on a `{}` path",
                    path.meta.algorithm
                )));
            }
            let terms = weighted_terms(path, model, f)?;
            let total = path.total_count() as f64;
            if kind == EstimatorKind::Is {
                return ratio_of_terms(&terms, total);
            }
            let s1: f64 = terms.iter().map(|t| t.0).sum();
            let w: Vec<f64> = terms.iter().map(|t| t.0).collect();
            let phi: Vec<f64> = terms
                .iter()
                .map(|t| if t.0 > 0.0 { t.1 / t.0 } else { 0.0 })
                .collect();
            let mut r = snis(&w, &phi)?;
            r.normalizer = s1 / total;
            Ok(r)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_ratio() {
        let r = is_ratio(&[1, 2], &[2.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!((r.value - 4.0 / 3.0).abs() < 1e-15);
        assert!((r.normalizer - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unit_function_gives_one_and_zero_mass_errors() {
        let r = is_ratio(&[3, 1, 2], &[0.2, 1.5, 0.7], &[0.2, 1.5, 0.7]).unwrap();
        assert_eq!(r.value, 1.0);
        assert!(matches!(
            is_ratio(&[1], &[1.0], &[0.0]),
            Err(Error::ZeroNormalizer(_))
        ));
    }

    #[test]
    fn constant_weights_give_plain_mean() {
        let r = snis(&[0.7; 4], &[1.0, 2.0, 3.0, 6.0]).unwrap();
        assert!((r.value - 3.0).abs() < 1e-15);
        assert!((r.n_effective - 4.0).abs() < 1e-12);
    }
}
