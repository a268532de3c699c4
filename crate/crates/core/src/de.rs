//! Scalar density evolution for the uncoupled detector.
//!
//! The per-iteration interference-plus-noise variance x obeys
//!
//!   x_{i} = load · g(((M-1)/M) / x_{i-1}) + noise_var
//!
//! with load = K/N in the large-system limit (an exact finite-size factor
//! (KM-1)/(NM) is available for lockstep use by the demodulator). Starting
//! from x₀ = load + noise_var ("no prior knowledge") the sequence is monotone
//! non-increasing and converges to the largest fixed point, which is the one
//! the iterative detector reaches. This module iterates the map, enumerates
//! and classifies all fixed points, and derives the detector-level summary
//! quantities: the single-solution load boundary, the critical noise level
//! below which multiple solutions can appear, the spinodal load, and
//! Q(γ)-based bit error rate curves with their AWGN reference.

use crate::error::{Error, Result};
use crate::gkernel::{GEval, GKernel};
use crate::quad::qfunc;
use serde::Serialize;

/// Partition degree M; the detector analysis mostly uses the M → ∞ limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PartitionDegree {
    Finite(u32),
    Infinite,
}

impl PartitionDegree {
    /// The (M-1)/M factor multiplying the SIR inside the kernel.
    pub fn sir_factor(&self) -> f64 {
        match *self {
            PartitionDegree::Finite(m) => {
                assert!(m >= 1);
                (m as f64 - 1.0) / m as f64
            }
            PartitionDegree::Infinite => 1.0,
        }
    }
}

/// One point of the variance iteration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScalarState {
    pub x: f64,
    pub gamma_sq: f64,
    pub iteration: usize,
}

/// A classified fixed point of the variance map.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FixedPoint {
    pub x: f64,
    /// |dF/dx| < 1 at the root (the map is monotone increasing, so this is
    /// F'(x) < 1).
    pub stable: bool,
}

/// All solutions of x = load·g(c/x) + noise_var.
#[derive(Debug, Clone, Serialize)]
pub struct FixedPointReport {
    pub solutions: Vec<FixedPoint>,
    /// The solution reached from x₀ = load + noise_var: the largest one.
    pub relevant: f64,
    pub multiplicity: usize,
}

/// Noise floor used in place of an exact zero noise variance, which would
/// make x = 0 a degenerate fixed point of the scan.
pub const SIGMA2_FLOOR: f64 = 1e-9;

fn clamp_noise(noise_var: f64) -> f64 {
    noise_var.max(SIGMA2_FLOOR)
}

/// One application of the variance map.
pub fn de_step(x: f64, load: f64, noise_var: f64, m: PartitionDegree, g: &dyn GEval) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("variance must be positive, got {x}")));
    }
    Ok(load * g.eval(m.sir_factor() / x) + noise_var)
}

/// Finite-size variant with the exact (KM-1)/(NM) interference count.
pub fn de_step_finite_size(
    x: f64,
    users: u32,
    chips: u32,
    m: u32,
    noise_var: f64,
    g: &dyn GEval,
) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("variance must be positive, got {x}")));
    }
    let km = users as f64 * m as f64;
    let load = (km - 1.0) / (chips as f64 * m as f64);
    Ok(load * g.eval(PartitionDegree::Finite(m).sir_factor() / x) + noise_var)
}

/// Result of iterating the map from x₀ = load + noise_var.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub states: Vec<ScalarState>,
    pub fixed_point: f64,
    pub converged: bool,
}

/// Iterate from x₀ = load + noise_var until the relative step drops below
/// `tol`. The sequence is monotone non-increasing (asserted in tests), so the
/// limit is the largest fixed point.
pub fn de_trajectory(
    load: f64,
    noise_var: f64,
    m: PartitionDegree,
    tol: f64,
    max_iter: usize,
) -> Result<Trajectory> {
    if !(tol > 0.0) {
        return Err(Error::Domain("tol must be positive".into()));
    }
    let g = GKernel::shared();
    let mut x = load + noise_var.max(f64::MIN_POSITIVE);
    let mut states = vec![ScalarState { x, gamma_sq: 1.0 / x, iteration: 0 }];
    for i in 1..=max_iter {
        let next = de_step(x, load, noise_var, m, g)?;
        states.push(ScalarState { x: next, gamma_sq: 1.0 / next, iteration: i });
        if (x - next).abs() < tol * x {
            return Ok(Trajectory { states, fixed_point: next, converged: true });
        }
        x = next;
    }
    Ok(Trajectory { states, fixed_point: x, converged: false })
}

/// Smallest fixed point, reached by iterating upward from the noise floor.
/// This is the residual variance of a fully converged (successful) detector
/// and serves as the self-consistent success floor for the coupled chains.
pub fn small_fixed_point(load: f64, noise_var: f64, m: PartitionDegree, g: &dyn GEval) -> f64 {
    let mut x = noise_var.max(1e-300);
    for _ in 0..200_000 {
        let next = load * g.eval(m.sir_factor() / x) + noise_var;
        if (next - x).abs() <= 1e-14 * x.max(1e-300) {
            return next;
        }
        x = next;
    }
    x
}

/// Signal-to-interference ratio of the optimal symbol-wise detector: the
/// reciprocal of the detector-relevant fixed point of the M → ∞ map.
pub fn optimal_symbol_sir(load: f64, noise_var: f64) -> Result<f64> {
    if load < 0.0 {
        return Err(Error::Domain("load must be >= 0".into()));
    }
    let nv = clamp_noise(noise_var);
    if load == 0.0 {
        return Ok(1.0 / nv);
    }
    let traj = de_trajectory(load, nv, PartitionDegree::Infinite, 1e-13, 500_000)?;
    Ok(1.0 / traj.fixed_point)
}

/// Enumerate fixed points by scanning h(x) = x - load·g(c/x) - noise_var for
/// sign changes on a log grid and refining each bracket by bisection.
pub fn count_fixed_points(load: f64, noise_var: f64, m: PartitionDegree) -> Result<FixedPointReport> {
    count_fixed_points_grid(load, noise_var, m, 2000)
}

/// Grid-resolution-parameterized variant (the default 2000-point scan is
/// cross-checked against 10⁴ points in the test suite).
pub fn count_fixed_points_grid(
    load: f64,
    noise_var: f64,
    m: PartitionDegree,
    grid: usize,
) -> Result<FixedPointReport> {
    if !(load > 0.0) {
        return Err(Error::Domain("load must be positive".into()));
    }
    let nv = clamp_noise(noise_var);
    let g = GKernel::shared();
    let c = m.sir_factor();
    let h = |x: f64| x - load * g.eval(c / x) - nv;

    let lo = nv * (1.0 - 1e-6);
    let hi = load + nv;
    let llo = lo.ln();
    let lhi = hi.ln();
    let step = (lhi - llo) / (grid - 1) as f64;

    let mut roots: Vec<f64> = Vec::new();
    let mut prev_x = lo;
    let mut prev_h = h(lo);
    for i in 1..grid {
        let x = (llo + i as f64 * step).exp();
        let hx = h(x);
        if prev_h == 0.0 {
            roots.push(prev_x);
        } else if prev_h * hx < 0.0 {
            roots.push(bisect_root(&h, prev_x, x));
        }
        prev_x = x;
        prev_h = hx;
    }
    if roots.is_empty() {
        // h(lo) < 0 and h(hi) > 0 always; a root exists but sat on a node
        roots.push(bisect_root(&h, lo, hi));
    }

    let solutions: Vec<FixedPoint> = roots
        .iter()
        .map(|&x| {
            let dx = x * 1e-6;
            let f = |z: f64| load * g.eval(c / z) + nv;
            let slope = (f(x + dx) - f(x - dx)) / (2.0 * dx);
            FixedPoint { x, stable: slope < 1.0 }
        })
        .collect();
    let relevant = solutions.iter().map(|s| s.x).fold(f64::MIN, f64::max);
    let multiplicity = solutions.len();
    Ok(FixedPointReport { solutions, relevant, multiplicity })
}

fn bisect_root<F: Fn(f64) -> f64>(h: &F, mut a: f64, mut b: f64) -> f64 {
    let mut ha = h(a);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if (b - a) < 1e-12 * mid {
            return mid;
        }
        let hm = h(mid);
        if ha * hm <= 0.0 {
            b = mid;
        } else {
            a = mid;
            ha = hm;
        }
    }
    0.5 * (a + b)
}

/// Shape of load-vs-fixed-point: α(x) = (x - σ²)/g(c/x). A fold (local
/// minimum) in this curve is where the solution count changes.
fn load_curve_valley(noise_var: f64, m: PartitionDegree) -> Option<(f64, f64)> {
    let g = GKernel::shared();
    let c = m.sir_factor();
    let lo = (noise_var * 1.01).max(1e-3);
    let hi = 5.0f64;
    let n = 4000;
    let llo = lo.ln();
    let step = (hi.ln() - llo) / (n - 1) as f64;
    let alpha_of = |x: f64| (x - noise_var) / g.eval(c / x);
    let vals: Vec<f64> = (0..n).map(|i| alpha_of((llo + i as f64 * step).exp())).collect();

    // deepest local minimum plus its left-wall local maximum
    let mut best: Option<(usize, f64)> = None;
    for i in 1..n - 1 {
        if vals[i] < vals[i - 1] && vals[i] <= vals[i + 1] && best.map_or(true, |(_, v)| vals[i] < v) {
            best = Some((i, vals[i]));
        }
    }
    let (idx, mut vmin) = best?;
    // golden-section refinement inside the bracketing grid cells
    let (mut a, mut b) = (llo + (idx - 1) as f64 * step, llo + (idx + 1) as f64 * step);
    let phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut c1 = b - phi * (b - a);
    let mut c2 = a + phi * (b - a);
    let (mut f1, mut f2) = (alpha_of(c1.exp()), alpha_of(c2.exp()));
    for _ in 0..80 {
        if f1 < f2 {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - phi * (b - a);
            f1 = alpha_of(c1.exp());
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + phi * (b - a);
            f2 = alpha_of(c2.exp());
        }
    }
    vmin = f1.min(f2).min(vmin);
    // left wall: maximum of the curve left of the valley
    let wall = vals[..idx].iter().cloned().fold(f64::MIN, f64::max);
    Some((vmin, wall))
}

/// Largest load for which the variance map has a single solution at this
/// noise level: bisection of the multiplicity predicate, bracketed by the
/// fold of the load curve. Errors when no multi-solution region exists
/// (noise above the critical level).
pub fn max_single_solution_load(noise_var: f64, m: PartitionDegree) -> Result<f64> {
    let nv = clamp_noise(noise_var);
    let (valley, wall) = load_curve_valley(nv, m)
        .ok_or_else(|| Error::NumericFailure(format!("no multi-solution region at noise_var {nv}")))?;
    if !(wall > valley) {
        return Err(Error::NumericFailure(format!("no multi-solution region at noise_var {nv}")));
    }
    let probe = valley + (wall - valley).min(2e-3) * 0.5;
    if count_fixed_points(probe, nv, m)?.multiplicity < 2 {
        return Err(Error::NumericFailure(format!("fold not confirmed at noise_var {nv}")));
    }
    let mut lo = valley - 0.02;
    let mut hi = probe;
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if count_fixed_points(mid, nv, m)?.multiplicity == 1 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Noise level above which the variance map has a single solution for every
/// load (bisection on the existence of a fold).
pub fn critical_noise_var(m: PartitionDegree) -> f64 {
    let exists = |nv: f64| max_single_solution_load(nv, m).is_ok();
    let (mut lo, mut hi) = (0.10, 0.20);
    debug_assert!(exists(lo) && !exists(hi));
    while hi - lo > 1e-5 {
        let mid = 0.5 * (lo + hi);
        if exists(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Smallest load admitting multiple solutions for any noise level: the fold
/// evaluated just inside the critical noise boundary.
pub fn spinodal_load(m: PartitionDegree) -> f64 {
    let crit = critical_noise_var(m);
    for delta in [1e-4, 5e-4, 2e-3] {
        if let Ok(v) = max_single_solution_load(crit - delta, m) {
            return v;
        }
    }
    f64::NAN
}

/// One point of a bit error rate sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BerPoint {
    pub snr_db: f64,
    pub sigma2: f64,
    pub gamma_sq: f64,
    pub pb: f64,
    /// Antipodal signaling on the plain AWGN channel, Q(1/σ).
    pub pb_awgn: f64,
    pub multiplicity: usize,
}

/// P_b = Q(γ_∞) over an SNR grid, with the AWGN reference and the solution
/// count at each point. SNR is in dB with unit signal power: σ² = 10^(-SNR/10).
pub fn ber_curve(load: f64, snr_grid_db: &[f64], m: PartitionDegree) -> Result<Vec<BerPoint>> {
    snr_grid_db
        .iter()
        .map(|&snr| {
            let sigma2 = 10f64.powf(-snr / 10.0);
            let gamma_sq = if load == 0.0 { 1.0 / sigma2 } else { detector_sir(load, sigma2, m)? };
            let multiplicity = if load == 0.0 {
                1
            } else {
                count_fixed_points(load, sigma2, m)?.multiplicity
            };
            let pb_awgn = qfunc(1.0 / sigma2.sqrt());
            // zero load is the AWGN reference itself, bit for bit
            let pb = if load == 0.0 { pb_awgn } else { qfunc(gamma_sq.sqrt()) };
            Ok(BerPoint { snr_db: snr, sigma2, gamma_sq, pb, pb_awgn, multiplicity })
        })
        .collect()
}

fn detector_sir(load: f64, noise_var: f64, m: PartitionDegree) -> Result<f64> {
    let traj = de_trajectory(load, clamp_noise(noise_var), m, 1e-13, 500_000)?;
    Ok(1.0 / traj.fixed_point)
}

/// SNR (dB) at which the BER curve crosses `target_pb`, by bisection.
pub fn snr_at_pb(load: f64, target_pb: f64, m: PartitionDegree) -> Result<f64> {
    let pb = |snr: f64| -> Result<f64> { Ok(ber_curve(load, &[snr], m)?[0].pb) };
    let (mut lo, mut hi) = (-10.0, 60.0);
    if pb(lo)? < target_pb || pb(hi)? > target_pb {
        return Err(Error::NumericFailure("target BER not bracketed on [-10, 60] dB".into()));
    }
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if pb(mid)? > target_pb {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gkernel::oracle::g_adaptive;

    const M_INF: PartitionDegree = PartitionDegree::Infinite;

    #[test]
    fn step_with_zero_load_returns_noise() {
        let g = GKernel::shared();
        for x in [0.1, 1.0, 17.0] {
            assert_eq!(de_step(x, 0.0, 0.25, M_INF, g).unwrap(), 0.25);
        }
    }

    #[test]
    fn step_from_no_knowledge_is_load_plus_noise() {
        let g = GKernel::shared();
        let v = de_step(1e12, 1.3, 0.2, M_INF, g).unwrap();
        assert!((v - 1.5).abs() < 1e-9);
    }

    #[test]
    fn step_rejects_nonpositive_variance() {
        let g = GKernel::shared();
        assert!(de_step(0.0, 1.0, 0.1, M_INF, g).is_err());
        assert!(de_step(-1.0, 1.0, 0.1, M_INF, g).is_err());
    }

    #[test]
    fn step_matches_adaptive_oracle() {
        // independent route: adaptive quadrature composed with the formula
        let g = GKernel::shared();
        let x = 1.1;
        let got = de_step(x, 1.0, 0.1, M_INF, g).unwrap();
        let want = 1.0 * g_adaptive(1.0 / x) + 0.1;
        assert!((got - want).abs() < 1e-11);
    }

    #[test]
    fn trajectory_monotone_and_convergent() {
        let t = de_trajectory(0.5, 0.5, M_INF, 1e-12, 100_000).unwrap();
        assert!(t.converged);
        for w in t.states.windows(2) {
            assert!(w[1].x <= w[0].x + 1e-14, "trajectory not monotone");
        }
    }

    #[test]
    fn trajectory_fixed_point_solves_implicit_equation() {
        let t = de_trajectory(1.0, 0.1, M_INF, 1e-13, 500_000).unwrap();
        let gamma_sq = optimal_symbol_sir(1.0, 0.1).unwrap();
        assert!((1.0 / t.fixed_point - gamma_sq).abs() <= 1e-8 * gamma_sq);
    }

    #[test]
    fn overloaded_system_stalls_high() {
        let t = de_trajectory(2.5, 1e-9, M_INF, 1e-12, 200_000).unwrap();
        assert!(t.fixed_point > 0.5, "expected failure fixed point, got {}", t.fixed_point);
    }

    #[test]
    fn optimal_symbol_sir_reduces_to_matched_filter() {
        assert!((optimal_symbol_sir(0.0, 0.04).unwrap() - 25.0).abs() < 1e-9);
    }

    #[test]
    fn multiplicity_classification() {
        // high noise: single solution regardless of load
        for load in [0.5, 1.5, 2.5, 5.0] {
            assert_eq!(count_fixed_points(load, 0.2, M_INF).unwrap().multiplicity, 1, "load {load}");
        }
        // deep multi-solution point: three solutions, two stable
        let r = count_fixed_points(2.5, 0.01, M_INF).unwrap();
        assert_eq!(r.multiplicity, 3);
        let stable = r.solutions.iter().filter(|s| s.stable).count();
        assert_eq!(stable, 2);
        assert!((r.relevant - r.solutions.iter().map(|s| s.x).fold(f64::MIN, f64::max)).abs() == 0.0);
        // light load
        assert_eq!(count_fixed_points(0.1, 0.001, M_INF).unwrap().multiplicity, 1);
    }

    #[test]
    fn multiplicity_stable_under_grid_refinement() {
        for (load, nv) in [(2.5, 0.01), (1.0, 0.1), (2.2, 1e-9), (1.6, 0.14)] {
            let coarse = count_fixed_points_grid(load, nv, M_INF, 2000).unwrap().multiplicity;
            let fine = count_fixed_points_grid(load, nv, M_INF, 10_000).unwrap().multiplicity;
            assert_eq!(coarse, fine, "grid sensitivity at ({load}, {nv})");
        }
    }

    #[test]
    fn single_solution_boundary_matches_fold_oracle() {
        // the bisection answer must sit on the fold of the load curve
        let nv = 0.05;
        let m = max_single_solution_load(nv, M_INF).unwrap();
        let (valley, _) = load_curve_valley(nv, M_INF).unwrap();
        assert!((m - valley).abs() < 2e-3, "bisection {m} vs fold {valley}");
    }

    #[test]
    fn boundary_regression_values() {
        // frozen from this implementation's exact kernel
        let a_max = max_single_solution_load(1e-9, M_INF).unwrap();
        assert!((a_max - 2.0854).abs() < 2e-3, "got {a_max}");
        let crit = critical_noise_var(M_INF);
        assert!(crit > 0.146 && crit < 0.152, "got {crit}");
        let spin = spinodal_load(M_INF);
        assert!(spin > 1.46 && spin < 1.50, "got {spin}");
    }

    #[test]
    fn no_fold_above_critical_noise() {
        assert!(max_single_solution_load(0.2, M_INF).is_err());
    }

    #[test]
    fn finite_m_fixed_points_approach_limit() {
        let limit = de_trajectory(1.0, 0.1, M_INF, 1e-13, 500_000).unwrap().fixed_point;
        let mut prev_gap = f64::MAX;
        for m in [2u32, 4, 8, 16, 32, 64, 128, 256, 512, 1024] {
            let fp = de_trajectory(1.0, 0.1, PartitionDegree::Finite(m), 1e-13, 500_000)
                .unwrap()
                .fixed_point;
            let gap = (fp - limit).abs();
            assert!(gap <= prev_gap + 1e-12, "gap not shrinking at M={m}");
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-3);
    }

    #[test]
    fn ber_curve_limits() {
        // very noisy: useless channel
        let p = ber_curve(1.0, &[-40.0], M_INF).unwrap();
        assert!(p[0].pb > 0.49);
        // zero load reproduces the AWGN reference exactly
        let p = ber_curve(0.0, &[0.0, 3.0, 6.0, 9.0], M_INF).unwrap();
        for pt in p {
            assert!((pt.pb - pt.pb_awgn).abs() < 1e-14);
        }
        // over the maximum load at high SNR: error floor well above AWGN
        let p = ber_curve(2.5, &[40.0], M_INF).unwrap();
        assert_eq!(p[0].multiplicity, 3);
        assert!(p[0].pb > 1e-3, "expected error floor, got {}", p[0].pb);
    }

    #[test]
    fn de_step_monotone_in_x() {
        let g = GKernel::shared();
        let mut prev = 0.0;
        for i in 1..=1000 {
            let x = 1e-4 * (i as f64) * (i as f64);
            let v = de_step(x, 1.3, 0.05, M_INF, g).unwrap();
            assert!(v >= prev - 1e-13);
            prev = v;
        }
    }
}
