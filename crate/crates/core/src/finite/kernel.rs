//! Kernel construction and elementary kernel algebra.

use nalgebra::DMatrix;

use super::types::{FiniteDist, FiniteKernel, RealFunction, RefreshTable};
use crate::{Error, Result};

/// Flux tolerance used when an operation requires a reversible pair.
pub const REVERSIBILITY_TOL: f64 = 1e-10;

fn same_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

/// Communicating classes that are closed (recurrent), in order of their
/// smallest member.
pub fn recurrent_classes(k: &FiniteKernel) -> Vec<Vec<usize>> {
    let n = k.len();
    let mut reach = vec![vec![false; n]; n];
    for (s, row) in reach.iter_mut().enumerate() {
        let mut stack = vec![s];
        row[s] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if k.get(i, j) > 0.0 && !row[j] {
                    row[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    let mut assigned = vec![false; n];
    let mut classes = Vec::new();
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let class: Vec<usize> = (0..n).filter(|&j| reach[i][j] && reach[j][i]).collect();
        for &j in &class {
            assigned[j] = true;
        }
        let closed = (0..n).all(|j| !reach[i][j] || class.contains(&j));
        if closed {
            classes.push(class);
        }
    }
    classes
}

/// Grassmann-Taksar-Heyman elimination for the stationary vector of an
/// irreducible stochastic matrix. Subtraction-free, so accurate to rounding.
fn gth(mut a: DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    for k in (1..n).rev() {
        let s: f64 = (0..k).map(|j| a[(k, j)]).sum();
        for i in 0..k {
            a[(i, k)] /= s;
        }
        for i in 0..k {
            let aik = a[(i, k)];
            if aik == 0.0 {
                continue;
            }
            for j in 0..k {
                a[(i, j)] += aik * a[(k, j)];
            }
        }
    }
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for j in 1..n {
        pi[j] = (0..j).map(|i| pi[i] * a[(i, j)]).sum();
    }
    let total: f64 = pi.iter().sum();
    pi.iter().map(|p| p / total).collect()
}

/// The unique stationary distribution of `k`, zero on transient states.
pub fn stationary_dist(k: &FiniteKernel) -> Result<FiniteDist> {
    let classes = recurrent_classes(k);
    if classes.len() != 1 {
        return Err(Error::Reducible {
            classes: classes
                .iter()
                .map(|c| c.iter().map(|&i| k.labels()[i].clone()).collect())
                .collect(),
        });
    }
    let class = &classes[0];
    let sub = DMatrix::from_fn(class.len(), class.len(), |i, j| k.get(class[i], class[j]));
    let local = gth(sub);
    let mut probs = vec![0.0; k.len()];
    for (&i, p) in class.iter().zip(local) {
        probs[i] = p;
    }
    FiniteDist::new(k.labels().to_vec(), probs)
}

/// Largest detailed-balance violation `max |μ_i K_ij − μ_j K_ji|`.
pub fn flux_gap(k: &FiniteKernel, mu: &FiniteDist) -> Result<f64> {
    same_len("kernel vs measure", k.len(), mu.len())?;
    let n = k.len();
    let mut gap: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            gap = gap.max((mu.prob(i) * k.get(i, j) - mu.prob(j) * k.get(j, i)).abs());
        }
    }
    Ok(gap)
}

pub fn check_reversible(k: &FiniteKernel, mu: &FiniteDist, tol: f64) -> Result<bool> {
    Ok(flux_gap(k, mu)? <= tol)
}

pub(crate) fn require_reversible(k: &FiniteKernel, mu: &FiniteDist) -> Result<()> {
    let gap = flux_gap(k, mu)?;
    if gap > REVERSIBILITY_TOL {
        return Err(Error::NotReversible { gap });
    }
    Ok(())
}

/// `E_K(g) = ½ Σ_ij μ_i K_ij (g_i − g_j)²` for a reversible pair.
pub fn dirichlet_form(k: &FiniteKernel, mu: &FiniteDist, g: &RealFunction) -> Result<f64> {
    require_reversible(k, mu)?;
    same_len("function", g.len(), k.len())?;
    Ok(dirichlet_flux(k, mu, g.values()))
}

pub(crate) fn dirichlet_flux(k: &FiniteKernel, mu: &FiniteDist, g: &[f64]) -> f64 {
    let n = k.len();
    let mut total = 0.0;
    for i in 0..n {
        let mi = mu.prob(i);
        if mi == 0.0 {
            continue;
        }
        for j in 0..n {
            let d = g[i] - g[j];
            total += mi * k.get(i, j) * d * d;
        }
    }
    0.5 * total
}

/// `⟨g, (1 − K) g⟩_μ`, the operator form of the Dirichlet form.
pub fn dirichlet_inner(k: &FiniteKernel, mu: &FiniteDist, g: &[f64]) -> f64 {
    let kg = k.apply(g);
    let diff: Vec<f64> = g.iter().zip(&kg).map(|(a, b)| a - b).collect();
    mu.inner(g, &diff)
}

/// Metropolis-Hastings kernel with proposal `q` and target `nu`.
///
/// The ratio `ν(x')q(x',x) / ν(x)q(x,x')` is taken as zero when its
/// denominator vanishes.
pub fn build_mh(q: &FiniteKernel, nu: &FiniteDist) -> Result<FiniteKernel> {
    same_len("proposal vs target", q.len(), nu.len())?;
    let n = q.len();
    let off = DMatrix::from_fn(n, n, |x, y| {
        if x == y {
            return 0.0;
        }
        let qxy = q.get(x, y);
        let den = nu.prob(x) * qxy;
        let ratio = if den > 0.0 {
            nu.prob(y) * q.get(y, x) / den
        } else {
            0.0
        };
        qxy * ratio.min(1.0)
    });
    FiniteKernel::from_off_diagonal(q.labels().to_vec(), off)
}

/// Acceptance `min{1, w(x')/w(x)}` of the correction stage, with a zero
/// current weight accepting every move.
pub(crate) fn da_acceptance(w_from: f64, w_to: f64) -> f64 {
    if w_from > 0.0 {
        (w_to / w_from).min(1.0)
    } else {
        1.0
    }
}

/// Delayed-acceptance correction of `k` by the weight `w`.
pub fn build_da(k: &FiniteKernel, w: &RealFunction) -> Result<FiniteKernel> {
    same_len("kernel vs weight", k.len(), w.len())?;
    if w.values().iter().any(|x| *x < 0.0) {
        return Err(Error::InvalidFunction("weights must be nonnegative".into()));
    }
    if w.values().iter().all(|x| *x == 0.0) {
        return Err(Error::ZeroWeights);
    }
    let n = k.len();
    let off = DMatrix::from_fn(n, n, |x, y| {
        if x == y {
            0.0
        } else {
            k.get(x, y) * da_acceptance(w[x], w[y])
        }
    });
    FiniteKernel::from_off_diagonal(k.labels().to_vec(), off)
}

/// The `Q`-augmentation of `kdot` with respect to the invariant `mu_dot`:
/// `K((t,y),(t',y')) = K̇(t,t') Q(t',y')` and `μ = μ̇ ⊗ Q`. States are laid
/// out as `t * |Y| + y`.
pub fn augment_with(
    kdot: &FiniteKernel,
    mu_dot: &FiniteDist,
    q: &RefreshTable,
) -> Result<(FiniteKernel, FiniteDist)> {
    same_len("kernel vs invariant", kdot.len(), mu_dot.len())?;
    same_len("kernel vs refresh table", kdot.len(), q.t_len())?;
    let (nt, ny) = (kdot.len(), q.y_len());
    let n = nt * ny;
    let rows = DMatrix::from_fn(n, n, |a, b| {
        let (t2, y2) = (b / ny, b % ny);
        kdot.get(a / ny, t2) * q.get(t2, y2)
    });
    let labels: Vec<String> = (0..n)
        .map(|a| format!("({},{})", kdot.labels()[a / ny], q.y_labels()[a % ny]))
        .collect();
    let probs: Vec<f64> = (0..n)
        .map(|a| mu_dot.prob(a / ny) * q.get(a / ny, a % ny))
        .collect();
    let mu = FiniteDist::from_masses(labels.clone(), &probs)?;
    Ok((FiniteKernel::new(labels, rows)?, mu))
}

/// [`augment_with`] using the stationary distribution of `kdot`.
pub fn augment(kdot: &FiniteKernel, q: &RefreshTable) -> Result<(FiniteKernel, FiniteDist)> {
    let mu_dot = stationary_dist(kdot)?;
    augment_with(kdot, &mu_dot, q)
}

/// Jump chain of `(k, mu)`: transitions conditioned on moving, the invariant
/// `μ̃ ∝ α μ`, and the escape probabilities `α`.
pub fn jump_transform(
    k: &FiniteKernel,
    mu: &FiniteDist,
) -> Result<(FiniteKernel, FiniteDist, RealFunction)> {
    same_len("kernel vs measure", k.len(), mu.len())?;
    let n = k.len();
    let alpha: Vec<f64> = (0..n).map(|i| k.escape(i)).collect();
    for i in mu.support() {
        if alpha[i] <= 0.0 {
            return Err(Error::Absorbing(k.labels()[i].clone()));
        }
    }
    let rows = DMatrix::from_fn(n, n, |i, j| {
        if alpha[i] <= 0.0 {
            // Off-support absorbing states keep their self-loop.
            return if i == j { 1.0 } else { 0.0 };
        }
        if i == j {
            0.0
        } else {
            k.get(i, j) / alpha[i]
        }
    });
    // Renormalise rows so rounding in α cannot break stochasticity.
    let rows = DMatrix::from_fn(n, n, |i, j| {
        let s: f64 = rows.row(i).iter().sum();
        rows[(i, j)] / s
    });
    let masses: Vec<f64> = (0..n).map(|i| alpha[i] * mu.prob(i)).collect();
    let mu_jump = FiniteDist::from_masses(k.labels().to_vec(), &masses)?;
    Ok((
        FiniteKernel::new(k.labels().to_vec(), rows)?,
        mu_jump,
        RealFunction::new(alpha)?,
    ))
}

/// Product weight `w = dν/dμ` on the support of `mu`; zero elsewhere.
pub fn radon_nikodym(nu: &FiniteDist, mu: &FiniteDist) -> Result<RealFunction> {
    same_len("measures", nu.len(), mu.len())?;
    let mut w = Vec::with_capacity(nu.len());
    for i in 0..nu.len() {
        if mu.prob(i) > 0.0 {
            w.push(nu.prob(i) / mu.prob(i));
        } else if nu.prob(i) > 0.0 {
            return Err(Error::NotAbsolutelyContinuous(nu.labels()[i].clone()));
        } else {
            w.push(0.0);
        }
    }
    RealFunction::new(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> FiniteKernel {
        FiniteKernel::from_rows(&[vec![0.6, 0.4], vec![0.2, 0.8]]).unwrap()
    }

    #[test]
    fn stationary_of_two_state_chain() {
        let pi = stationary_dist(&two_state()).unwrap();
        assert!((pi.prob(0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((pi.prob(1) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn stationary_of_independence_kernel() {
        let mu = FiniteDist::from_probs(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let pi = stationary_dist(&FiniteKernel::independence(&mu)).unwrap();
        for i in 0..4 {
            assert!((pi.prob(i) - mu.prob(i)).abs() < 1e-15);
        }
    }

    #[test]
    fn stationary_ignores_transient_states() {
        let k = FiniteKernel::from_rows(&[
            vec![0.5, 0.5, 0.0],
            vec![0.0, 0.3, 0.7],
            vec![0.0, 0.6, 0.4],
        ])
        .unwrap();
        let pi = stationary_dist(&k).unwrap();
        assert_eq!(pi.prob(0), 0.0);
        let back = k.push_forward(pi.probs());
        for i in 0..3 {
            assert!((back[i] - pi.prob(i)).abs() < 1e-15);
        }
    }

    #[test]
    fn stationary_names_recurrent_classes() {
        let k = FiniteKernel::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.3, 0.4, 0.3],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        match stationary_dist(&k) {
            Err(Error::Reducible { classes }) => {
                assert_eq!(classes, vec![vec!["0".to_string()], vec!["2".to_string()]]);
            }
            other => panic!("expected reducible error, got {other:?}"),
        }
    }

    #[test]
    fn reversibility_examples() {
        let mu = FiniteDist::from_probs(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert!(check_reversible(&two_state(), &mu, 1e-15).unwrap());
        let ind = FiniteDist::from_probs(vec![0.2, 0.5, 0.3]).unwrap();
        assert!(check_reversible(&FiniteKernel::independence(&ind), &ind, 1e-15).unwrap());
        let cycle = FiniteKernel::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        assert!(!check_reversible(&cycle, &FiniteDist::uniform(3), 1e-12).unwrap());
        assert!(matches!(
            check_reversible(&cycle, &mu, 1e-12),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn dirichlet_form_examples() {
        let mu = FiniteDist::from_probs(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let g = RealFunction::new(vec![0.0, 1.0]).unwrap();
        let e = dirichlet_form(&two_state(), &mu, &g).unwrap();
        assert!((e - 2.0 / 15.0).abs() < 1e-15);
        assert!((dirichlet_inner(&two_state(), &mu, g.values()) - e).abs() < 1e-12);

        let c = RealFunction::constant(2, 3.5);
        assert_eq!(dirichlet_form(&two_state(), &mu, &c).unwrap(), 0.0);

        let ind = FiniteDist::from_probs(vec![0.2, 0.5, 0.3]).unwrap();
        let g = RealFunction::new(vec![1.0, -2.0, 4.0]).unwrap();
        let e = dirichlet_form(&FiniteKernel::independence(&ind), &ind, &g).unwrap();
        assert!((e - ind.variance(g.values())).abs() < 1e-12);

        let cycle = FiniteKernel::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        assert!(matches!(
            dirichlet_form(&cycle, &FiniteDist::uniform(3), &g),
            Err(Error::NotReversible { .. })
        ));
    }

    #[test]
    fn mh_with_symmetric_proposal_and_uniform_target_is_the_proposal() {
        let q = FiniteKernel::from_rows(&[
            vec![0.2, 0.5, 0.3],
            vec![0.5, 0.1, 0.4],
            vec![0.3, 0.4, 0.3],
        ])
        .unwrap();
        let p = build_mh(&q, &FiniteDist::uniform(3)).unwrap();
        assert!(p.max_abs_diff(&q) < 1e-15);
    }

    #[test]
    fn da_with_constant_weight_is_identity_map() {
        let mu = FiniteDist::from_probs(vec![0.2, 0.3, 0.5]).unwrap();
        let k = build_mh(&FiniteKernel::independence(&FiniteDist::uniform(3)), &mu).unwrap();
        let da = build_da(&k, &RealFunction::constant(3, 2.0)).unwrap();
        assert!(da.max_abs_diff(&k) < 1e-15);
        assert!(matches!(
            build_da(&k, &RealFunction::constant(3, 0.0)),
            Err(Error::ZeroWeights)
        ));
    }

    #[test]
    fn jump_transform_two_state() {
        let mu = FiniteDist::from_probs(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let (kt, mut_, alpha) = jump_transform(&two_state(), &mu).unwrap();
        assert_eq!(kt.row(0), vec![0.0, 1.0]);
        assert_eq!(kt.row(1), vec![1.0, 0.0]);
        assert!((alpha[0] - 0.4).abs() < 1e-15 && (alpha[1] - 0.2).abs() < 1e-15);
        assert!((mut_.prob(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn jump_transform_of_zero_diagonal_kernel_is_identity_map() {
        let k = FiniteKernel::from_rows(&[
            vec![0.0, 0.5, 0.5],
            vec![0.5, 0.0, 0.5],
            vec![0.5, 0.5, 0.0],
        ])
        .unwrap();
        let mu = FiniteDist::uniform(3);
        let (kt, mut_, alpha) = jump_transform(&k, &mu).unwrap();
        assert!(kt.max_abs_diff(&k) < 1e-15);
        assert!(mut_.total_variation(mu.probs()) < 1e-15);
        assert!(alpha.values().iter().all(|a| (a - 1.0).abs() < 1e-15));
    }

    #[test]
    fn jump_transform_rejects_absorbing_state() {
        let k = FiniteKernel::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let mu = FiniteDist::from_probs(vec![1.0, 0.0]).unwrap();
        assert!(matches!(jump_transform(&k, &mu), Err(Error::Absorbing(_))));
    }

    #[test]
    fn augment_with_point_mass_tags_deterministically() {
        let kdot = two_state();
        // y = t under Q.
        let q = RefreshTable::new(DMatrix::identity(2, 2)).unwrap();
        let (k, mu) = augment(&kdot, &q).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let (t2, y2) = (b / 2, b % 2);
                let expect = if y2 == t2 { kdot.get(a / 2, t2) } else { 0.0 };
                assert_eq!(k.get(a, b), expect);
            }
        }
        assert_eq!(mu.prob(1), 0.0);
        assert_eq!(mu.prob(2), 0.0);
    }

    #[test]
    fn radon_nikodym_requires_absolute_continuity() {
        let mu = FiniteDist::from_probs(vec![0.5, 0.5, 0.0]).unwrap();
        let nu = FiniteDist::from_probs(vec![0.2, 0.3, 0.5]).unwrap();
        assert!(matches!(
            radon_nikodym(&nu, &mu),
            Err(Error::NotAbsolutelyContinuous(_))
        ));
    }
}
