//! The iterative cancellation detector.
//!
//! Messages live on fragment edges. One iteration is a flooding schedule:
//!
//! * cancellation (MAC) pass — every block forms one shared residual
//!   y − Σ tanh(λ/2)·a/√M, and each edge reads its matched filter against the
//!   residual with its own term added back:
//!   z = aᵀr + tanh(λ/2)/√M, λ_out = 2z/(√M σ_i²). This is O(N) per edge,
//!   which is what keeps the whole detector linear in the user count.
//! * equality pass — each bit returns leave-one-out sums of its fragment
//!   LLRs.
//!
//! The shared per-iteration variance σ_i² comes from the lockstep scalar
//! recursion (analytic mode, the default) or from the sample variance of the
//! residual statistics around the true symbols (empirical mode, simulation
//! instrumentation only: it peeks at the transmitted bits).

use crate::de::de_step_finite_size;
use crate::error::{Error, Result};
use crate::gkernel::GKernel;
use crate::graph::{EdgeWaveforms, LiftedTopology, ReceivedFrame};
use crate::signals::dot;
use serde::Serialize;

/// LLR saturation: tanh(40/2) is 1 within double precision, so larger
/// magnitudes only risk overflow. Anchored pilots carry the cap.
pub const LLR_CAP: f64 = 40.0;

/// How σ_i² is obtained each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarianceMode {
    /// Lockstep density-evolution recursion with the exact finite-size
    /// interference count. Fully deterministic given the frame.
    Analytic,
    /// Sample variance of √M·z around the true symbols. Diagnostics only.
    Empirical,
}

/// Per-edge message state.
#[derive(Debug, Clone)]
pub struct MessageState {
    /// Equality-to-MAC messages (a priori LLR of each fragment).
    pub edge_llrs: Vec<f64>,
    /// Current interference-plus-noise variance estimate.
    pub iter_variance: f64,
    pub iteration: usize,
}

impl MessageState {
    /// All-zero prior state; anchored bits start saturated.
    pub fn init(topo: &LiftedTopology) -> Self {
        let mut edge_llrs = vec![0.0; topo.edges.len()];
        for (bit, edges) in topo.bit_edges.iter().enumerate() {
            if topo.anchored[bit] {
                for &e in edges {
                    edge_llrs[e as usize] = LLR_CAP;
                }
            }
        }
        Self { edge_llrs, iter_variance: f64::INFINITY, iteration: 0 }
    }
}

/// Detector output for one frame.
#[derive(Debug, Clone, Serialize)]
pub struct DemodReport {
    pub final_llrs: Vec<f64>,
    pub decisions: Vec<i8>,
    /// Errors counted over data (non-anchored) bits.
    pub bit_error_count: usize,
    pub data_bits: usize,
    /// Empirical 1/σ̂² per iteration, measured from the residual statistics.
    pub per_iteration_sir: Vec<f64>,
    pub iterations: usize,
    pub variance_mode: VarianceMode,
}

/// Cancellation pass. Returns per-edge z statistics and the updated MAC
/// output LLRs; `state.iter_variance` must already hold σ_i² for this
/// iteration (see [`demodulate`] for the lockstep wiring).
pub fn mac_update(
    state: &MessageState,
    frame: &ReceivedFrame,
    topo: &LiftedTopology,
    waveforms: &EdgeWaveforms,
) -> (Vec<f64>, Vec<f64>) {
    let cfg = &topo.cfg;
    let inv_sqrt_m = 1.0 / (cfg.partitions as f64).sqrt();
    let n = cfg.chips;
    let mut z = vec![0.0; topo.edges.len()];
    let mut out = vec![0.0; topo.edges.len()];
    let sigma_i2 = state.iter_variance;

    let mut residual = vec![0.0; n];
    for (block, edges) in topo.block_edges.iter().enumerate() {
        residual.copy_from_slice(&frame.blocks[block]);
        for &e in edges {
            let soft = (state.edge_llrs[e as usize] / 2.0).tanh() * inv_sqrt_m;
            let a = waveforms.per_edge[e as usize].coefficients();
            for (r, ai) in residual.iter_mut().zip(a) {
                *r -= soft * ai;
            }
        }
        for &e in edges {
            let a = waveforms.per_edge[e as usize].coefficients();
            let own = (state.edge_llrs[e as usize] / 2.0).tanh() * inv_sqrt_m;
            z[e as usize] = dot(a, &residual) + own;
        }
    }
    // λ = 2 z / (√M σ²); a degenerate zero variance saturates instead of
    // dividing by zero
    if sigma_i2 > 0.0 && sigma_i2.is_finite() {
        let scale = 2.0 * inv_sqrt_m / sigma_i2;
        for (o, &ze) in out.iter_mut().zip(&z) {
            *o = (scale * ze).clamp(-LLR_CAP, LLR_CAP);
        }
    } else {
        for (o, &ze) in out.iter_mut().zip(&z) {
            *o = ze.signum() * LLR_CAP;
        }
    }
    (z, out)
}

/// Equality pass: leave-one-out sums of the MAC output LLRs per bit.
/// Anchored bits always emit the saturation cap.
pub fn equality_update(topo: &LiftedTopology, mac_llrs: &[f64], out: &mut [f64]) {
    for (bit, edges) in topo.bit_edges.iter().enumerate() {
        if topo.anchored[bit] {
            for &e in edges {
                out[e as usize] = LLR_CAP;
            }
            continue;
        }
        let total: f64 = edges.iter().map(|&e| mac_llrs[e as usize]).sum();
        for &e in edges {
            out[e as usize] = (total - mac_llrs[e as usize]).clamp(-LLR_CAP, LLR_CAP);
        }
    }
}

/// Run `iterations` rounds of cancellation + equality passes, then decide
/// each bit from the full sum of its fragment LLRs (ties to +1).
pub fn demodulate(
    frame: &ReceivedFrame,
    topo: &LiftedTopology,
    waveforms: &EdgeWaveforms,
    iterations: usize,
    mode: VarianceMode,
) -> Result<DemodReport> {
    if iterations == 0 {
        return Err(Error::InvalidConfig("need at least one iteration".into()));
    }
    let cfg = &topo.cfg;
    let g = GKernel::shared();
    let mut state = MessageState::init(topo);
    let inv_sqrt_m = 1.0 / (cfg.partitions as f64).sqrt();

    // lockstep variance recursion state (x = ∞ encodes "no prior knowledge")
    let mut de_x = f64::INFINITY;
    let mut per_iteration_sir = Vec::with_capacity(iterations);
    let mut mac_llrs = vec![0.0; topo.edges.len()];

    for iter in 1..=iterations {
        let analytic_x = if de_x.is_infinite() {
            let km = (cfg.users * cfg.partitions) as f64;
            (km - 1.0) / (cfg.chips as f64 * cfg.partitions as f64) + cfg.noise_var
        } else {
            de_step_finite_size(de_x, cfg.users as u32, cfg.chips as u32, cfg.partitions as u32, cfg.noise_var, g)?
        };

        // σ_i² for this pass
        state.iter_variance = match mode {
            VarianceMode::Analytic => analytic_x,
            VarianceMode::Empirical => {
                if state.iteration == 0 {
                    analytic_x
                } else {
                    state.iter_variance
                }
            }
        };

        let (z, new_mac) = mac_update(&state, frame, topo, waveforms);
        mac_llrs.copy_from_slice(&new_mac);

        // empirical residual variance around the true symbols (instrumentation)
        let mut acc = 0.0;
        for (e, &ze) in z.iter().enumerate() {
            let d = frame.true_bits[topo.edges[e].bit as usize] as f64;
            let dev = ze / inv_sqrt_m - d;
            acc += dev * dev;
        }
        let empirical_x = acc / (z.len() as f64 * cfg.partitions as f64);
        per_iteration_sir.push(1.0 / empirical_x.max(1e-300));
        if mode == VarianceMode::Empirical {
            state.iter_variance = empirical_x.max(1e-300);
        }

        equality_update(topo, &mac_llrs, &mut state.edge_llrs);
        state.iteration = iter;
        de_x = analytic_x;
    }

    // posterior LLR per bit: full sum over its M fragments
    let mut final_llrs = vec![0.0; topo.bit_edges.len()];
    for (bit, edges) in topo.bit_edges.iter().enumerate() {
        final_llrs[bit] = edges.iter().map(|&e| mac_llrs[e as usize]).sum();
        if topo.anchored[bit] {
            final_llrs[bit] = LLR_CAP * cfg.partitions as f64;
        }
    }
    let decisions: Vec<i8> = final_llrs.iter().map(|&l| if l < 0.0 { -1 } else { 1 }).collect();
    let mut bit_error_count = 0;
    let mut data_bits = 0;
    for bit in 0..decisions.len() {
        if topo.anchored[bit] {
            continue;
        }
        data_bits += 1;
        if decisions[bit] != frame.true_bits[bit] {
            bit_error_count += 1;
        }
    }
    Ok(DemodReport {
        final_llrs,
        decisions,
        bit_error_count,
        data_bits,
        per_iteration_sir,
        iterations,
        variance_mode: mode,
    })
}
