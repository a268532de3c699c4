//! Quadrature building blocks: Golub-Welsch node construction for
//! Gauss-Hermite and Gauss-Legendre rules, an adaptive Gauss integrator,
//! and the Gaussian tail function.
//!
//! Nodes and weights are computed from the symmetric Jacobi matrix of the
//! orthogonal-polynomial recurrence (eigenvalues are the nodes, weights come
//! from the first eigenvector components), so no tabulated constants are
//! needed at any order.

use nalgebra::DMatrix;

/// Nodes/weights for ∫ e^{-x²} f(x) dx over (-∞, ∞).
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = jac.symmetric_eigen();
    let total = std::f64::consts::PI.sqrt();
    let mut nw: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], total * v0 * v0)
        })
        .collect();
    nw.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    nw
}

/// Nodes/weights for ∫ f(x) dx over [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = jac.symmetric_eigen();
    let mut nw: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], 2.0 * v0 * v0)
        })
        .collect();
    nw.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    nw
}

/// Fixed Gauss-Legendre pass over [a, b].
pub fn integrate_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, nw: &[(f64, f64)]) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nw.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Adaptive Gauss-Legendre integration: a panel is accepted when one pass and
/// the sum of two half-panel passes agree to `tol` absolute or to 1e-14 of
/// the panel value (the roundoff floor — an absolute request below it would
/// otherwise recurse forever), otherwise it is bisected.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let nw = gauss_legendre(15);
    let whole = integrate_panel(f, a, b, &nw);
    adaptive_rec(f, a, b, whole, tol, &nw, 0)
}

fn adaptive_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    nw: &[(f64, f64)],
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let left = integrate_panel(f, a, m, nw);
    let right = integrate_panel(f, m, b, nw);
    let two = left + right;
    if depth >= 40 || (two - whole).abs() <= tol.max(1e-14 * two.abs()) {
        return two;
    }
    adaptive_rec(f, a, m, left, 0.5 * tol, nw, depth + 1)
        + adaptive_rec(f, m, b, right, 0.5 * tol, nw, depth + 1)
}

/// Gaussian tail probability Q(x) = P(N(0,1) > x).
pub fn qfunc(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn npdf(x: f64) -> f64 {
    (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_integrates_polynomials() {
        let nw = gauss_hermite(10);
        let total: f64 = nw.iter().map(|&(_, w)| w).sum();
        assert!((total - std::f64::consts::PI.sqrt()).abs() < 1e-13);
        // ∫ x² e^{-x²} = √π / 2
        let m2: f64 = nw.iter().map(|&(x, w)| w * x * x).sum();
        assert!((m2 - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn legendre_exact_on_low_degree() {
        let nw = gauss_legendre(8);
        let val = integrate_panel(&|x: f64| x.powi(6) - 3.0 * x.powi(2) + 1.0, -1.0, 1.0, &nw);
        let exact = 2.0 / 7.0 - 2.0 + 2.0;
        assert!((val - exact).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_sharp_kernel() {
        // integrand with a narrow bump
        let f = |x: f64| (-(x * x) * 400.0).exp();
        let got = integrate_adaptive(&f, -10.0, 10.0, 1e-13);
        let exact = (std::f64::consts::PI / 400.0).sqrt();
        assert!((got - exact).abs() / exact < 1e-11, "got {got}, exact {exact}");
    }

    #[test]
    fn q_values() {
        assert!((qfunc(0.0) - 0.5).abs() < 1e-15);
        let q1 = qfunc(1.0);
        let want = 0.158_655_253_931_457_07;
        assert!(
            (q1 - want).abs() < 1e-9,
            "Q(1) = {q1:.17}, want {want:.17}, err {:.3e}",
            (q1 - want).abs()
        );
        assert!(qfunc(37.0) > 0.0 && qfunc(37.0) < 1e-290);
    }
}
