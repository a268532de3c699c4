//! Exhaustive optimal detectors for desk-scale cross-validation.
//!
//! Both detectors walk the 2^K hypothesis cube in Gray-code order, so moving
//! between neighbors costs O(N): flipping bit j shifts the residual by
//! ±2·a_j and the squared distance follows incrementally. The enumeration is
//! capped at K = 24; the point of these oracles is transparency, not speed.

use crate::error::{Error, Result};
use crate::signals::{dot, Waveform};
use serde::Serialize;

/// A small explicit instance: y = Σ d_k a_k + σ n.
#[derive(Debug, Clone)]
pub struct SmallInstance {
    pub received: Vec<f64>,
    pub waveforms: Vec<Waveform>,
    pub noise_var: f64,
}

pub const MAX_ORACLE_USERS: usize = 24;

impl SmallInstance {
    pub fn validate(&self) -> Result<()> {
        let k = self.waveforms.len();
        if k == 0 || k > MAX_ORACLE_USERS {
            return Err(Error::CostGuard(format!("oracle supports 1..={MAX_ORACLE_USERS} users, got {k}")));
        }
        let n = self.received.len();
        if self.waveforms.iter().any(|w| w.dim() != n) {
            return Err(Error::InvalidDimension("waveform/observation dimension mismatch".into()));
        }
        Ok(())
    }
}

/// Exact maximum-likelihood sequence decision:
/// argmin over all 2^K hypotheses of ‖y − Σ d_k a_k‖².
///
/// Ties break to the hypothesis whose sign pattern, read as a bit mask with
/// bit k set when d_k = −1, is numerically smallest (so all-+1 wins against
/// any tie).
pub fn ml_sequence(inst: &SmallInstance) -> Result<Vec<i8>> {
    inst.validate()?;
    let k = inst.waveforms.len();
    let n = inst.received.len();

    // start at all +1
    let mut residual: Vec<f64> = inst.received.clone();
    for w in &inst.waveforms {
        for (r, a) in residual.iter_mut().zip(w.coefficients()) {
            *r -= a;
        }
    }
    let mut energy: f64 = residual.iter().map(|v| v * v).sum();
    let mut signs = vec![1i8; k];
    let mut mask = 0u32;

    let mut best_energy = energy;
    let mut best_mask = mask;

    for h in 1u32..(1u32 << k) {
        let j = h.trailing_zeros() as usize;
        let s = signs[j] as f64;
        // d_j: s -> -s moves the residual by +2 s a_j
        let a = inst.waveforms[j].coefficients();
        let r_dot_a = dot(&residual, a);
        energy += 4.0 * s * r_dot_a + 4.0;
        for i in 0..n {
            residual[i] += 2.0 * s * a[i];
        }
        signs[j] = -signs[j];
        mask ^= 1 << j;
        if energy < best_energy || (energy == best_energy && mask < best_mask) {
            best_energy = energy;
            best_mask = mask;
        }
    }
    Ok((0..k).map(|j| if best_mask & (1 << j) != 0 { -1 } else { 1 }).collect())
}

/// Exact symbol-wise posterior log-likelihood ratios:
/// LLR_k = log Σ_{d: d_k=+1} e^{−‖y−Ad‖²/(2σ²)} − log Σ_{d: d_k=−1} (same),
/// accumulated with per-user two-bucket log-sum-exp for stability at small σ².
pub fn mpm_posteriors(inst: &SmallInstance) -> Result<Vec<f64>> {
    inst.validate()?;
    if !(inst.noise_var > 0.0) {
        return Err(Error::DegeneratePosterior);
    }
    let k = inst.waveforms.len();
    let n = inst.received.len();
    let inv_two_sigma2 = 1.0 / (2.0 * inst.noise_var);

    let mut residual: Vec<f64> = inst.received.clone();
    for w in &inst.waveforms {
        for (r, a) in residual.iter_mut().zip(w.coefficients()) {
            *r -= a;
        }
    }
    let mut energy: f64 = residual.iter().map(|v| v * v).sum();
    let mut signs = vec![1i8; k];

    // streaming log-sum-exp accumulators per (user, sign)
    #[derive(Clone, Copy)]
    struct Lse {
        max: f64,
        sum: f64,
    }
    impl Lse {
        fn new() -> Self {
            Self { max: f64::NEG_INFINITY, sum: 0.0 }
        }
        fn push(&mut self, v: f64) {
            if v > self.max {
                self.sum = self.sum * (self.max - v).exp() + 1.0;
                self.max = v;
            } else {
                self.sum += (v - self.max).exp();
            }
        }
        fn value(&self) -> f64 {
            self.max + self.sum.ln()
        }
    }

    let mut plus = vec![Lse::new(); k];
    let mut minus = vec![Lse::new(); k];
    let mut weight = -energy * inv_two_sigma2;
    for j in 0..k {
        plus[j].push(weight);
    }

    for h in 1u32..(1u32 << k) {
        let j = h.trailing_zeros() as usize;
        let s = signs[j] as f64;
        let a = inst.waveforms[j].coefficients();
        let r_dot_a = dot(&residual, a);
        energy += 4.0 * s * r_dot_a + 4.0;
        for i in 0..n {
            residual[i] += 2.0 * s * a[i];
        }
        signs[j] = -signs[j];
        weight = -energy * inv_two_sigma2;
        for (jj, &sg) in signs.iter().enumerate() {
            if sg > 0 {
                plus[jj].push(weight);
            } else {
                minus[jj].push(weight);
            }
        }
    }
    Ok((0..k).map(|j| plus[j].value() - minus[j].value()).collect())
}

/// Per-user matched filter LLRs 2 aᵀy / σ², the K = 1 closed form and the
/// no-feedback baseline the single-iteration canceller reduces to.
pub fn matched_filter_llrs(inst: &SmallInstance) -> Result<Vec<f64>> {
    inst.validate()?;
    if !(inst.noise_var > 0.0) {
        return Err(Error::DegeneratePosterior);
    }
    Ok(inst
        .waveforms
        .iter()
        .map(|a| 2.0 * dot(a.coefficients(), &inst.received) / inst.noise_var)
        .collect())
}

/// Summary of an LLR population against the Gaussian-consistent model
/// Λ | d=+1 ~ N(2γ², 4γ²).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LlrPopulationFit {
    pub mean: f64,
    pub variance: f64,
    /// mean²/variance, the population SIR estimate (γ² for a consistent
    /// Gaussian population).
    pub sir: f64,
    /// variance / (2·mean): 1 for a consistent population.
    pub consistency: f64,
}

/// Fit the sign-corrected population d_k·Λ_k.
pub fn fit_llr_population(signed_llrs: &[f64]) -> LlrPopulationFit {
    let n = signed_llrs.len() as f64;
    let mean = signed_llrs.iter().sum::<f64>() / n;
    let variance = signed_llrs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    LlrPopulationFit {
        mean,
        variance,
        sir: mean * mean / variance,
        consistency: variance / (2.0 * mean),
    }
}
