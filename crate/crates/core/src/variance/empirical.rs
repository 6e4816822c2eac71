use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{AsvarEstimate, AsvarMethod};
use crate::{Error, Result};

/// `floor(n^{1/3})`, at least 2.
pub fn default_batch_count(n: usize) -> usize {
    ((n as f64).cbrt().floor() as usize).max(2)
}

/// Non-overlapping batch means with `batch_count` batches of size
/// `floor(n / batch_count)`; trailing values are dropped.
pub fn batch_means_asvar(values: &[f64], batch_count: usize) -> Result<AsvarEstimate> {
    if batch_count < 2 {
        return Err(Error::OutOfRange(format!(
            "batch count {batch_count}, need at least 2"
        )));
    }
    if values.len() < 2 * batch_count {
        return Err(Error::TooShort(format!(
            "{} values for {batch_count} batches",
            values.len()
        )));
    }
    let m = values.len() / batch_count;
    let means: Vec<f64> = values
        .chunks_exact(m)
        .take(batch_count)
        .map(|c| c.iter().sum::<f64>() / m as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batch_count as f64;
    let ss: f64 = means.iter().map(|x| (x - grand).powi(2)).sum();
    let b = (batch_count - 1) as f64;
    let value = m as f64 * ss / b;
    Ok(AsvarEstimate {
        value,
        method: AsvarMethod::BatchMeans,
        standard_error: Some(value * (2.0 / b).sqrt()),
        components: None,
        per_base_step: None,
        cross_check: None,
    })
}

/// Empirical autocovariances `γ(0..n)` with divisor `n`.
pub fn autocovariance(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = values
        .iter()
        .map(|x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf.iter()
        .take(n)
        .map(|z| z.re / (len as f64 * n as f64))
        .collect()
}

/// Initial positive sequence estimator: `−γ(0) + 2 Σ_m Γ_m` with
/// `Γ_m = γ(2m) + γ(2m+1)` summed up to the first non-positive pair.
pub fn initial_sequence_asvar(values: &[f64]) -> Result<AsvarEstimate> {
    let gamma = autocovariance(values);
    let mut sum = 0.0;
    let mut m = 0;
    while 2 * m + 1 < gamma.len() {
        let pair = gamma[2 * m] + gamma[2 * m + 1];
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        m += 1;
    }
    let value = if gamma.is_empty() {
        0.0
    } else {
        (2.0 * sum - gamma[0]).max(0.0)
    };
    Ok(AsvarEstimate {
        value,
        method: AsvarMethod::InitialSequence,
        standard_error: None,
        components: None,
        per_base_step: None,
        cross_check: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite::{exact_asvar, FiniteDist, FiniteKernel};
    use crate::samplers::stream_rng;
    use rand::Rng;

    fn iid_signs(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 0);
        (0..n)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect()
    }

    fn two_state_path(p: f64, q: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 0);
        let mut x = 0usize;
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                x = match x {
                    0 if u < p => 1,
                    1 if u < q => 0,
                    s => s,
                };
                x as f64
            })
            .collect()
    }

    #[test]
    fn iid_signs_have_unit_asvar() {
        let v = iid_signs(100_000, 1);
        let b = batch_means_asvar(&v, default_batch_count(v.len())).unwrap();
        let s = initial_sequence_asvar(&v).unwrap();
        assert!(
            (b.value - 1.0).abs() < 3.0 * b.standard_error.unwrap(),
            "{}",
            b.value
        );
        assert!((s.value - 1.0).abs() < 0.1, "{}", s.value);
    }

    #[test]
    fn constant_sequence_is_zero() {
        let v = vec![2.5; 1000];
        assert_eq!(batch_means_asvar(&v, 10).unwrap().value, 0.0);
        assert!(initial_sequence_asvar(&v).unwrap().value.abs() < 1e-20);
    }

    #[test]
    fn too_short_is_rejected() {
        assert!(batch_means_asvar(&[1.0, 2.0, 3.0], 2).is_err());
        assert!(batch_means_asvar(&[1.0; 10], 1).is_err());
    }

    #[test]
    fn autocovariance_matches_direct_sum() {
        let v = two_state_path(0.3, 0.2, 257, 4);
        let g = autocovariance(&v);
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        for lag in [0, 1, 5, 100, 256] {
            let direct: f64 = (0..n - lag)
                .map(|i| (v[i] - mean) * (v[i + lag] - mean))
                .sum::<f64>()
                / n as f64;
            assert!((g[lag] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn two_state_chain_matches_exact_value() {
        let (p, q) = (0.3, 0.2);
        let k = FiniteKernel::from_rows(&[vec![1.0 - p, p], vec![q, 1.0 - q]]).unwrap();
        let mu = FiniteDist::from_probs(vec![q / (p + q), p / (p + q)]).unwrap();
        let exact = exact_asvar(&k, &mu, &[0.0, 1.0], 1.0).unwrap();
        let reps = 100;
        let (mut bm, mut is) = (0.0, 0.0);
        let mut bm_sq = 0.0;
        for r in 0..reps {
            let v = two_state_path(p, q, 20_000, 100 + r);
            let b = batch_means_asvar(&v, default_batch_count(v.len()))
                .unwrap()
                .value;
            bm += b;
            bm_sq += b * b;
            is += initial_sequence_asvar(&v).unwrap().value;
        }
        let r = reps as f64;
        let (bm, is) = (bm / r, is / r);
        let se = ((bm_sq / r - bm * bm) / r).sqrt();
        assert!((bm - exact).abs() < 3.0 * se, "{bm} vs {exact}");
        assert!((is - exact).abs() < 3.0 * se, "{is} vs {exact}");
    }
}
