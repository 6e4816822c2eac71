//! Exact asymptotic variances of finite reversible chains.

use nalgebra::{DMatrix, DVector};

use super::kernel::{dirichlet_flux, require_reversible};
use super::spectral::Eigenbasis;
use super::types::{FiniteDist, FiniteKernel};
use crate::{Error, Result};

/// Eigenvalues within this distance of 1 count as unit eigenvalues.
const UNIT_TOL: f64 = 1e-10;

fn check_function(k: &FiniteKernel, f: &[f64]) -> Result<()> {
    if f.len() != k.len() {
        return Err(Error::Dimension(format!(
            "function has {} values, kernel {} states",
            f.len(),
            k.len()
        )));
    }
    if f.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidFunction("non-finite value".into()));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::OutOfRange(format!(
            "lambda = {lambda} not in (0, 1]"
        )));
    }
    Ok(())
}

/// Asymptotic variance `var(λK, f)` of a μ-reversible kernel.
///
/// For `λ = 1` the spectral sum `Σ (1+λ_i)/(1−λ_i) ⟨f̄, e_i⟩²_μ` is used and
/// `+∞` is returned when `f̄` charges a non-constant unit eigenfunction. For
/// `λ < 1` the resolvent form `2⟨f̄, (1−λK)^{-1} f̄⟩_μ − μ(f̄²)` is solved
/// directly. Everything is computed on the support of `mu`.
pub fn exact_asvar(k: &FiniteKernel, mu: &FiniteDist, f: &[f64], lambda: f64) -> Result<f64> {
    check_function(k, f)?;
    check_lambda(lambda)?;
    if lambda < 1.0 {
        return resolvent_asvar(k, mu, f, lambda);
    }
    let basis = Eigenbasis::new(k, mu)?;
    let fbar = mu.center(f);
    let coef = basis.coefficients(&fbar);
    let scale = 1.0 + mu.expect(&fbar.iter().map(|x| x * x).collect::<Vec<_>>());
    let mut total = 0.0;
    for (l, a) in basis.values.iter().zip(&coef) {
        if *l > 1.0 - UNIT_TOL {
            if a * a > 1e-20 * scale {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        total += (1.0 + l) / (1.0 - l) * a * a;
    }
    Ok(total.max(0.0))
}

fn support_system(
    k: &FiniteKernel,
    mu: &FiniteDist,
    f: &[f64],
) -> Result<(Vec<usize>, DMatrix<f64>, Vec<f64>)> {
    require_reversible(k, mu)?;
    let support = mu.support();
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    let m = support.len();
    let ks = DMatrix::from_fn(m, m, |a, b| k.get(support[a], support[b]));
    let fbar = mu.center(f);
    Ok((support, ks, fbar))
}

fn resolvent_asvar(k: &FiniteKernel, mu: &FiniteDist, f: &[f64], lambda: f64) -> Result<f64> {
    let (support, ks, fbar) = support_system(k, mu, f)?;
    let m = support.len();
    let a = DMatrix::<f64>::identity(m, m) - ks * lambda;
    let rhs = DVector::from_iterator(m, support.iter().map(|&i| fbar[i]));
    let x = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("1 − λK on the support".into()))?;
    let mut two_inner = 0.0;
    let mut second = 0.0;
    for (r, &i) in support.iter().enumerate() {
        two_inner += 2.0 * mu.prob(i) * fbar[i] * x[r];
        second += mu.prob(i) * fbar[i] * fbar[i];
    }
    Ok((two_inner - second).max(0.0))
}

/// Asymptotic variance through the Poisson equation
/// `(I − K + 1μᵀ) g = f̄`, as `2⟨f̄, g⟩_μ − μ(f̄²)`.
///
/// Fails with [`Error::Singular`] when the kernel is reducible on the support.
pub fn poisson_asvar(k: &FiniteKernel, mu: &FiniteDist, f: &[f64]) -> Result<f64> {
    check_function(k, f)?;
    let (support, ks, fbar) = support_system(k, mu, f)?;
    let m = support.len();
    let a = DMatrix::from_fn(m, m, |r, c| {
        let id = if r == c { 1.0 } else { 0.0 };
        id - ks[(r, c)] + mu.prob(support[c])
    });
    let rhs = DVector::from_iterator(m, support.iter().map(|&i| fbar[i]));
    let lu = a.lu();
    if lu.u().diagonal().iter().any(|d| d.abs() < 1e-13) {
        return Err(Error::Singular("Poisson system".into()));
    }
    let g = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Poisson system".into()))?;
    let mut value = 0.0;
    for (r, &i) in support.iter().enumerate() {
        value += mu.prob(i) * fbar[i] * (2.0 * g[r] - fbar[i]);
    }
    Ok(value.max(0.0))
}

/// The functional `2⟨f̄, g⟩_μ − E_{λK}(g)` whose supremum over `g` gives
/// `(var(λK, f) + μ(f̄²)) / 2`.
pub fn variational_objective(
    k: &FiniteKernel,
    mu: &FiniteDist,
    f: &[f64],
    g: &[f64],
    lambda: f64,
) -> f64 {
    let fbar = mu.center(f);
    let g2: Vec<f64> = g.iter().map(|x| x * x).collect();
    let e_lambda = (1.0 - lambda) * mu.expect(&g2) + lambda * dirichlet_flux(k, mu, g);
    2.0 * mu.inner(&fbar, g) - e_lambda
}

/// `var(λK, f)` from the variational characterisation: the objective is
/// maximised over the eigenfunction span and evaluated in state space.
pub fn variational_asvar(k: &FiniteKernel, mu: &FiniteDist, f: &[f64], lambda: f64) -> Result<f64> {
    check_function(k, f)?;
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::OutOfRange(format!(
            "lambda = {lambda} not in (0, 1)"
        )));
    }
    let basis = Eigenbasis::new(k, mu)?;
    let fbar = mu.center(f);
    let coef: Vec<f64> = basis
        .coefficients(&fbar)
        .iter()
        .zip(&basis.values)
        .map(|(a, l)| a / (1.0 - lambda * l))
        .collect();
    let g = basis.synthesize(&coef, k.len());
    let sup = variational_objective(k, mu, f, &g, lambda);
    let f2: Vec<f64> = fbar.iter().map(|x| x * x).collect();
    Ok(2.0 * sup - mu.expect(&f2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite::kernel::build_mh;

    fn two_state() -> (FiniteKernel, FiniteDist) {
        (
            FiniteKernel::from_rows(&[vec![0.6, 0.4], vec![0.2, 0.8]]).unwrap(),
            FiniteDist::from_probs(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap(),
        )
    }

    #[test]
    fn constant_function_has_zero_variance() {
        let (k, mu) = two_state();
        assert_eq!(exact_asvar(&k, &mu, &[2.0, 2.0], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn independence_kernel_gives_marginal_variance() {
        let mu = FiniteDist::from_probs(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let k = FiniteKernel::independence(&mu);
        let f = [1.0, -1.0, 2.5, 0.0];
        let v = exact_asvar(&k, &mu, &f, 1.0).unwrap();
        assert!((v - mu.variance(&f)).abs() < 1e-12);
    }

    #[test]
    fn two_state_closed_form() {
        // f = indicator of state 1: σ² = π0 π1 (1+λ2)/(1−λ2) with λ2 = 0.4.
        let (k, mu) = two_state();
        let v = exact_asvar(&k, &mu, &[0.0, 1.0], 1.0).unwrap();
        let expect = (1.0 / 3.0) * (2.0 / 3.0) * 1.4 / 0.6;
        assert!((v - expect).abs() < 1e-12);
        assert!((poisson_asvar(&k, &mu, &[0.0, 1.0]).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn disconnected_support_gives_infinite_variance() {
        let k = FiniteKernel::identity(2);
        let mu = FiniteDist::uniform(2);
        assert_eq!(
            exact_asvar(&k, &mu, &[0.0, 1.0], 1.0).unwrap(),
            f64::INFINITY
        );
        assert!(matches!(
            poisson_asvar(&k, &mu, &[0.0, 1.0]),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn subprobability_route_agrees_with_spectral_sum() {
        let (k, mu) = two_state();
        let lambda = 0.7;
        let l2 = 0.4;
        let expect = (1.0 / 3.0) * (2.0 / 3.0) * (1.0 + lambda * l2) / (1.0 - lambda * l2);
        let v = exact_asvar(&k, &mu, &[0.0, 1.0], lambda).unwrap();
        assert!((v - expect).abs() < 1e-12);
        let w = variational_asvar(&k, &mu, &[0.0, 1.0], lambda).unwrap();
        assert!((w - expect).abs() < 1e-12);
    }

    #[test]
    fn restricted_to_support() {
        // The third state is null under ν; MH never enters it from the support.
        let q = FiniteKernel::from_rows(&[
            vec![0.0, 0.5, 0.5],
            vec![0.5, 0.0, 0.5],
            vec![0.5, 0.5, 0.0],
        ])
        .unwrap();
        let nu = FiniteDist::from_probs(vec![0.5, 0.5, 0.0]).unwrap();
        let l = build_mh(&q, &nu).unwrap();
        let v = exact_asvar(&l, &nu, &[1.0, -1.0, 0.0], 1.0).unwrap();
        let p = poisson_asvar(&l, &nu, &[1.0, -1.0, 0.0]).unwrap();
        assert!((v - p).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_lambda() {
        let (k, mu) = two_state();
        assert!(matches!(
            exact_asvar(&k, &mu, &[0.0, 1.0], 0.0),
            Err(Error::OutOfRange(_))
        ));
        assert!(matches!(
            exact_asvar(&k, &mu, &[0.0, 1.0], 1.5),
            Err(Error::OutOfRange(_))
        ));
    }
}
