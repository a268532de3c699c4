//! The scalar kernel g(s) = E[(1 - tanh(s + √s ξ))²], ξ ~ N(0,1).
//!
//! g(s) is the mean-square error of the soft symbol estimate tanh(Λ/2) when
//! the bit LLR Λ is Gaussian-consistent with signal-to-interference ratio s
//! (Λ/2 ~ N(s, s) given d = +1). Every variance recursion in this crate is
//! built from this one function, so it is evaluated carefully:
//!
//! * small s: Gauss-Hermite quadrature in ξ (the integrand is analytic in a
//!   wide strip, so convergence is spectral);
//! * larger s: the substitution u = s + √s ξ concentrates the integrand near
//!   u = 0 regardless of s. Factoring the Gaussian as
//!   e^{-(u-s)²/(2s)} = e^{-s/2} e^{u - u²/(2s)} gives
//!   g(s) = e^{-s/2}/√(2πs) · ∫ e^{u - u²/(2s)} (1 - tanh u)² du,
//!   an O(1)-scaled integrand handled by composite Gauss-Legendre panels.
//!   The moving peak that defeats a fixed Hermite rule disappears in u.
//!
//! g(0) = 1, g is strictly decreasing, and the proof-grade upper bounds
//! g(s) ≤ π Q(√s) and g(s) ≤ e^{-s/2} hold for all s ≥ 0 (the second is what
//! [`log_g_upper`] exposes for arguments far beyond direct evaluation).

use crate::error::{Error, Result};
use crate::quad::{gauss_hermite, gauss_legendre};
use std::sync::OnceLock;

/// Arguments above this return 0 (the value underflows f64 well before).
pub const G_UNDERFLOW_CUT: f64 = 700.0;

/// Crossover between the Hermite rule and the u-substitution panels.
const S_SWITCH: f64 = 1.0;

/// Half-width of the u-integration range; tails beyond are < 1e-19 of the
/// integral.
const U_RANGE: f64 = 45.0;
const U_PANELS: usize = 30;
const U_NODES: usize = 24;

/// (1 - tanh u)², computed without overflow for any u.
#[inline]
fn one_minus_tanh_sq(u: f64) -> f64 {
    // 1 - tanh u = 2 / (e^{2u} + 1)
    let t = if u >= 0.0 {
        let e = (-2.0 * u).exp();
        2.0 * e / (1.0 + e)
    } else {
        2.0 / ((2.0 * u).exp() + 1.0)
    };
    t * t
}

/// Evaluator interface shared by the direct kernel and its memoized form.
pub trait GEval: Sync {
    /// g(s) for s in [0, +∞]; +∞ maps to 0 (perfect knowledge).
    fn eval(&self, s: f64) -> f64;
}

/// Direct quadrature evaluator.
#[derive(Debug, Clone)]
pub struct GKernel {
    hermite: Vec<(f64, f64)>,
    legendre: Vec<(f64, f64)>,
}

impl GKernel {
    /// Build with `hermite_nodes` abscissae (101 by default, validated against
    /// an adaptive oracle in the test suite).
    pub fn with_nodes(hermite_nodes: usize) -> Self {
        Self {
            hermite: gauss_hermite(hermite_nodes),
            legendre: gauss_legendre(U_NODES),
        }
    }

    pub fn new() -> Self {
        Self::with_nodes(101)
    }

    /// Process-wide instance.
    pub fn shared() -> &'static GKernel {
        static INSTANCE: OnceLock<GKernel> = OnceLock::new();
        INSTANCE.get_or_init(GKernel::new)
    }

    /// g(s). Errors on negative or non-finite arguments; s > 700 returns 0
    /// (callers needing log scale use [`log_g_upper`]).
    pub fn g(&self, s: f64) -> Result<f64> {
        if !s.is_finite() || s < 0.0 {
            return Err(Error::Domain(format!("g argument must be finite and >= 0, got {s}")));
        }
        Ok(self.eval_unchecked(s))
    }

    fn eval_unchecked(&self, s: f64) -> f64 {
        if s == 0.0 {
            return 1.0;
        }
        if s > G_UNDERFLOW_CUT {
            return 0.0;
        }
        if s < S_SWITCH {
            self.eval_hermite(s)
        } else {
            self.eval_u_panels(s)
        }
    }

    fn eval_hermite(&self, s: f64) -> f64 {
        let rs = s.sqrt();
        let sum: f64 = self
            .hermite
            .iter()
            .map(|&(t, w)| w * one_minus_tanh_sq(s + rs * std::f64::consts::SQRT_2 * t))
            .sum();
        sum / std::f64::consts::PI.sqrt()
    }

    fn eval_u_panels(&self, s: f64) -> f64 {
        // integrand e^{u - u²/(2s)} (1 - tanh u)², written per sign of u so
        // every exponent is negative
        let w = |u: f64| {
            let quad = u * u / (2.0 * s);
            if u >= 0.0 {
                // (1 - tanh u)² e^{u} = 4 e^{-3u} / (1 + e^{-2u})²
                let e = (-2.0 * u).exp();
                4.0 * (-3.0 * u - quad).exp() / ((1.0 + e) * (1.0 + e))
            } else {
                (u - quad).exp() * one_minus_tanh_sq(u)
            }
        };
        let width = 2.0 * U_RANGE / U_PANELS as f64;
        let mut total = 0.0;
        for p in 0..U_PANELS {
            let a = -U_RANGE + p as f64 * width;
            let b = a + width;
            let half = 0.5 * width;
            let mid = 0.5 * (a + b);
            total += half * self.legendre.iter().map(|&(x, wt)| wt * w(mid + half * x)).sum::<f64>();
        }
        (-s / 2.0).exp() / (2.0 * std::f64::consts::PI * s).sqrt() * total
    }
}

impl Default for GKernel {
    fn default() -> Self {
        Self::new()
    }
}

impl GEval for GKernel {
    fn eval(&self, s: f64) -> f64 {
        if s.is_infinite() && s > 0.0 {
            return 0.0;
        }
        self.eval_unchecked(s)
    }
}

/// log of the analytic upper bound g(s) ≤ e^{-s/2} (the tighter of the two
/// proof bounds; π Q(√s) ≤ π e^{-s/2} is exposed by [`log_pi_q_upper`]).
pub fn log_g_upper(s: f64) -> f64 {
    -s / 2.0
}

/// log of π e^{-s/2}, the bound used where the π prefactor matters.
pub fn log_pi_q_upper(s: f64) -> f64 {
    std::f64::consts::PI.ln() - s / 2.0
}

/// [`log_g_upper`] with the argument supplied as ln s, for s far beyond f64
/// range. Errors when e^{ln_s} itself exceeds f64 range (never silently ∞).
pub fn log_g_upper_from_ln(ln_s: f64) -> Result<f64> {
    if ln_s > 709.0 {
        return Err(Error::Range(format!("ln s = {ln_s} exceeds evaluable range")));
    }
    Ok(-ln_s.exp() / 2.0)
}

/// Memoized kernel for the spatially coupled sweeps: ln g interpolated on a
/// log-spaced grid by a monotone (Fritsch-Carlson) cubic, which keeps the
/// interpolant strictly decreasing like g itself. Accuracy against direct
/// evaluation is enforced at 1e-8 relative by the test suite.
pub struct MemoGKernel {
    kernel: GKernel,
    ln_s: Vec<f64>,
    ln_g: Vec<f64>,
    slope: Vec<f64>,
    step: f64,
}

const MEMO_POINTS: usize = 10_000;
const MEMO_S_MIN: f64 = 1e-12;

impl MemoGKernel {
    pub fn new(kernel: GKernel) -> Self {
        let lo = MEMO_S_MIN.ln();
        let hi = G_UNDERFLOW_CUT.ln();
        let step = (hi - lo) / (MEMO_POINTS - 1) as f64;
        let ln_s: Vec<f64> = (0..MEMO_POINTS).map(|i| lo + i as f64 * step).collect();
        let ln_g: Vec<f64> = ln_s.iter().map(|&l| kernel.eval_unchecked(l.exp()).ln()).collect();
        let slope = pchip_slopes(&ln_g, step);
        Self { kernel, ln_s, ln_g, slope, step }
    }

    pub fn shared() -> &'static MemoGKernel {
        static INSTANCE: OnceLock<MemoGKernel> = OnceLock::new();
        INSTANCE.get_or_init(|| MemoGKernel::new(GKernel::new()))
    }
}

/// Monotone cubic slopes on a uniform grid: fourth-order centered slope
/// estimates, clamped to the Fritsch-Carlson region (same sign as the
/// adjacent secants, magnitude at most 3× the smaller one), which guarantees
/// a monotone interpolant on monotone data without giving up accuracy where
/// the data is smooth.
fn pchip_slopes(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h).collect();
    let clamp = |d: f64, left: f64, right: f64| -> f64 {
        let m = 3.0 * left.abs().min(right.abs());
        if left * right <= 0.0 {
            0.0
        } else {
            d.clamp(-m, m).clamp(
                if left > 0.0 { 0.0 } else { -m },
                if left > 0.0 { m } else { 0.0 },
            )
        }
    };
    let mut d = vec![0.0; n];
    d[0] = delta[0];
    d[n - 1] = delta[n - 2];
    d[1] = clamp(0.5 * (delta[0] + delta[1]), delta[0], delta[1]);
    d[n - 2] = clamp(0.5 * (delta[n - 3] + delta[n - 2]), delta[n - 3], delta[n - 2]);
    for i in 2..n - 2 {
        let est = (y[i - 2] - 8.0 * y[i - 1] + 8.0 * y[i + 1] - y[i + 2]) / (12.0 * h);
        d[i] = clamp(est, delta[i - 1], delta[i]);
    }
    d
}

impl GEval for MemoGKernel {
    fn eval(&self, s: f64) -> f64 {
        if s.is_infinite() && s > 0.0 {
            return 0.0;
        }
        if s > G_UNDERFLOW_CUT {
            return 0.0;
        }
        if s < MEMO_S_MIN {
            return self.kernel.eval(s);
        }
        let ls = s.ln();
        let pos = (ls - self.ln_s[0]) / self.step;
        let i = (pos.floor() as usize).min(self.ln_s.len() - 2);
        let t = (ls - self.ln_s[i]) / self.step;
        let (y0, y1) = (self.ln_g[i], self.ln_g[i + 1]);
        let (d0, d1) = (self.slope[i] * self.step, self.slope[i + 1] * self.step);
        let t2 = t * t;
        let t3 = t2 * t;
        let val = y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + d0 * (t3 - 2.0 * t2 + t)
            + y1 * (-2.0 * t3 + 3.0 * t2)
            + d1 * (t3 - t2);
        val.exp()
    }
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Test-side reference: adaptive integration in the original ξ variable,
    //! independent of both production quadrature paths.
    use crate::quad::{integrate_adaptive, npdf};

    pub fn g_adaptive(s: f64) -> f64 {
        if s == 0.0 {
            return 1.0;
        }
        let rs = s.sqrt();
        let f = |xi: f64| npdf(xi) * super::one_minus_tanh_sq(s + rs * xi);
        // the transition sits at ξ = -√s; seed the splitting there
        let scale = super::one_minus_tanh_sq(0.0) * npdf(rs.min(16.0));
        integrate_adaptive(&f, -16.0, -rs.clamp(0.0, 15.0), (scale * 1e-14).max(1e-320))
            + integrate_adaptive(&f, -rs.clamp(0.0, 15.0), 16.0, (scale * 1e-14).max(1e-320))
    }
}
