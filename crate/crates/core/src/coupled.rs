//! Density evolution along a spatially coupled chain of lifted graphs.
//!
//! A chain position t = 1..T carries a block variance x^t and a soft-bit
//! variance y^t. Coupling spreads each bit's fragments over nearby positions,
//! so one update is a two-stage sweep:
//!
//!   y^t = g( mean over the bit's positions of 1/x )      (bit stage)
//!   x^t = load · mean over hosted bits of y  + noise_var (block stage)
//!
//! Positions t ≤ 0 are anchored pilots: their bits are known (y = 0) and
//! their blocks resolved (x = 0, i.e. infinite SIR inside any window that
//! reaches them). That local relief launches a decoding wave which, for loads
//! below the scheme's threshold, traverses the whole chain.
//!
//! The concrete spreading patterns are interchangeable strategies behind the
//! [`CouplingScheme`] trait, selected by name at runtime (see [`registry`]):
//! `none`, the one-neighbor `simple` chain, and the uniform `window` family.

use crate::de::{small_fixed_point, PartitionDegree};
use crate::error::{Error, Result};
use crate::gkernel::GEval;
use rand::Rng;
use serde::Serialize;
use std::sync::Arc;

/// Which coupling family a system uses, plus chain geometry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingSpec {
    pub kind: CouplingKind,
    /// Number of chain positions T.
    pub chain_len: usize,
    /// Leading positions whose symbols are known pilots.
    pub anchored_prefix: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CouplingKind {
    None,
    /// Each bit keeps fraction `a` of its fragments at its own position and
    /// sends the rest one position ahead.
    Simple { a: f64 },
    /// Fragments spread uniformly over the 2w+1 positions centred on the bit.
    Window { w: usize },
}

impl CouplingSpec {
    pub fn uncoupled() -> Self {
        Self { kind: CouplingKind::None, chain_len: 1, anchored_prefix: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            CouplingKind::Simple { a } => {
                if !(0.0..=1.0).contains(&a) {
                    return Err(Error::InvalidConfig(format!("simple coupling fraction {a} outside [0,1]")));
                }
            }
            CouplingKind::Window { .. } | CouplingKind::None => {}
        }
        if self.chain_len == 0 {
            return Err(Error::InvalidConfig("chain_len must be >= 1".into()));
        }
        Ok(())
    }
}

/// Chain state: x[t-1] and y[t-1] hold position t. Anchored positions t <= 0
/// are implicit (x = 0, y = 0 forever).
#[derive(Debug, Clone, Serialize)]
pub struct DensityProfile {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub iteration: usize,
}

/// Treatment of positions beyond the right end of the stored chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RightEdge {
    /// Semi-infinite worst case: undecoded bits (y = 1) and fully loaded
    /// blocks beyond T. Conservative for threshold searches; the last
    /// `right_skirt()` positions then never reach the floor and are excluded
    /// from the success test.
    WorstCase,
    /// Closed chain: values beyond T replicate position T. Every position can
    /// converge, which is what the trajectory diagnostics want.
    Replicate,
}

#[inline]
fn inv(x: f64) -> f64 {
    1.0 / x.max(1e-300)
}

/// A spatial coupling strategy: profile initialization, one density-evolution
/// sweep, and the fragment placement rule the graph builder uses.
pub trait CouplingScheme: Send + Sync {
    fn name(&self) -> String;

    /// Ramped initial profile (anchored pilots make the first blocks lighter).
    fn init_profile(&self, chain_len: usize, load: f64, noise_var: f64) -> Result<DensityProfile>;

    /// One two-stage sweep, reading `prof` and writing `out`.
    fn step_into(
        &self,
        prof: &DensityProfile,
        load: f64,
        noise_var: f64,
        edge: RightEdge,
        g: &dyn GEval,
        out: &mut DensityProfile,
    );

    /// Positions at the right end that a worst-case edge keeps pinned high.
    fn right_skirt(&self) -> usize;

    /// Minimum chain length for a meaningful threshold search.
    fn min_chain_len(&self) -> usize;

    /// Chain position receiving one fragment of a bit at position `t`
    /// (1-based; the result is clamped to [1, chain_len]).
    fn sample_position(&self, t: usize, chain_len: usize, rng: &mut dyn rand::RngCore) -> usize;

    /// Convenience allocating wrapper around [`CouplingScheme::step_into`].
    fn step(&self, prof: &DensityProfile, load: f64, noise_var: f64, edge: RightEdge, g: &dyn GEval) -> DensityProfile {
        let mut out = DensityProfile {
            x: vec![0.0; prof.x.len()],
            y: vec![0.0; prof.y.len()],
            iteration: prof.iteration + 1,
        };
        self.step_into(prof, load, noise_var, edge, g, &mut out);
        out
    }
}

/// Uniform spreading over the 2w+1 positions around each bit. `w = 0` is the
/// uncoupled chain (every position evolves independently).
#[derive(Debug, Clone, Copy)]
pub struct WindowScheme {
    pub w: usize,
}

impl WindowScheme {
    pub fn new(w: usize) -> Self {
        Self { w }
    }
}

impl CouplingScheme for WindowScheme {
    fn name(&self) -> String {
        format!("window:{}", self.w)
    }

    fn init_profile(&self, chain_len: usize, load: f64, noise_var: f64) -> Result<DensityProfile> {
        let width = 2 * self.w + 1;
        if chain_len <= width {
            return Err(Error::InvalidConfig(format!(
                "chain_len {chain_len} must exceed coupling width {width}"
            )));
        }
        let x = (1..=chain_len)
            .map(|t| if t <= width { load * t as f64 / width as f64 + noise_var } else { load + noise_var })
            .collect();
        let y = (1..=chain_len).map(|t| if t <= self.w { 0.0 } else { 1.0 }).collect();
        Ok(DensityProfile { x, y, iteration: 0 })
    }

    fn step_into(
        &self,
        prof: &DensityProfile,
        load: f64,
        noise_var: f64,
        edge: RightEdge,
        g: &dyn GEval,
        out: &mut DensityProfile,
    ) {
        let t_max = prof.x.len();
        let w = self.w as isize;
        let width = (2 * self.w + 1) as f64;
        let beyond_x = match edge {
            RightEdge::WorstCase => load + noise_var,
            RightEdge::Replicate => prof.x[t_max - 1],
        };
        // bit stage: anchored blocks (p <= 0) contribute essentially infinite
        // SIR, so windows touching them decode outright
        for t in 1..=t_max as isize {
            let mut sum = 0.0;
            for l in -w..=w {
                let p = t + l;
                let xv = if p < 1 {
                    0.0
                } else if p as usize > t_max {
                    beyond_x
                } else {
                    prof.x[p as usize - 1]
                };
                sum += inv(xv);
            }
            out.y[t as usize - 1] = g.eval(sum / width);
        }
        let beyond_y = match edge {
            RightEdge::WorstCase => 1.0,
            RightEdge::Replicate => out.y[t_max - 1],
        };
        // block stage
        for t in 1..=t_max as isize {
            let mut sum = 0.0;
            for j in -w..=w {
                let p = t + j;
                sum += if p < 1 {
                    0.0
                } else if p as usize > t_max {
                    beyond_y
                } else {
                    out.y[p as usize - 1]
                };
            }
            out.x[t as usize - 1] = load * sum / width + noise_var;
        }
        out.iteration = prof.iteration + 1;
    }

    fn right_skirt(&self) -> usize {
        2 * self.w
    }

    fn min_chain_len(&self) -> usize {
        20 * (2 * self.w + 1)
    }

    fn sample_position(&self, t: usize, chain_len: usize, rng: &mut dyn rand::RngCore) -> usize {
        if self.w == 0 {
            return t;
        }
        let w = self.w as i64;
        loop {
            let off = rng.gen_range(-w..=w);
            let p = t as i64 + off;
            if p >= 1 && p <= chain_len as i64 {
                return p as usize;
            }
        }
    }
}

/// How to weight the two neighbor terms of the one-neighbor chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimpleReading {
    /// Load-conserving weights (load·a and load·(1-a)); the anchor enters
    /// through the known bits at position 0. This reading reproduces the
    /// reference threshold 2.81 at a = 0.5.
    SymmetricLoad,
    /// Literal two-term form with weights load and load·(1-a); kept for
    /// comparison, its per-block load over-counts and the wave cannot launch.
    Printed,
}

/// One-neighbor coupling: a bit at position t keeps fraction `a` of its
/// fragments and sends fraction 1-a to position t+1, so block t hosts load
/// a·load from its own bits plus (1-a)·load from position t-1 (pilots when
/// t = 1).
#[derive(Debug, Clone, Copy)]
pub struct SimpleScheme {
    pub a: f64,
    pub reading: SimpleReading,
}

impl SimpleScheme {
    pub fn new(a: f64) -> Self {
        Self { a, reading: SimpleReading::SymmetricLoad }
    }

    pub fn printed(a: f64) -> Self {
        Self { a, reading: SimpleReading::Printed }
    }
}

impl CouplingScheme for SimpleScheme {
    fn name(&self) -> String {
        match self.reading {
            SimpleReading::SymmetricLoad => format!("simple:{}", self.a),
            SimpleReading::Printed => format!("simple-printed:{}", self.a),
        }
    }

    fn init_profile(&self, chain_len: usize, load: f64, noise_var: f64) -> Result<DensityProfile> {
        if chain_len < 4 {
            return Err(Error::InvalidConfig("chain_len must be >= 4 for the simple chain".into()));
        }
        let mut x = vec![load + noise_var; chain_len];
        x[0] = self.a * load + noise_var;
        Ok(DensityProfile { x, y: vec![1.0; chain_len], iteration: 0 })
    }

    fn step_into(
        &self,
        prof: &DensityProfile,
        load: f64,
        noise_var: f64,
        edge: RightEdge,
        g: &dyn GEval,
        out: &mut DensityProfile,
    ) {
        let t_max = prof.x.len();
        let a = self.a;
        let beyond_x = match edge {
            RightEdge::WorstCase => load + noise_var,
            RightEdge::Replicate => prof.x[t_max - 1],
        };
        for t in 0..t_max {
            let own = inv(prof.x[t]);
            let next = if t + 1 < t_max { inv(prof.x[t + 1]) } else { inv(beyond_x) };
            out.y[t] = g.eval(a * own + (1.0 - a) * next);
        }
        for t in 0..t_max {
            let y_prev = if t == 0 { 0.0 } else { out.y[t - 1] }; // pilots at position 0
            out.x[t] = match self.reading {
                SimpleReading::SymmetricLoad => load * a * out.y[t] + load * (1.0 - a) * y_prev + noise_var,
                SimpleReading::Printed => load * out.y[t] + load * (1.0 - a) * y_prev + noise_var,
            };
        }
        out.iteration = prof.iteration + 1;
    }

    fn right_skirt(&self) -> usize {
        2
    }

    fn min_chain_len(&self) -> usize {
        60
    }

    fn sample_position(&self, t: usize, chain_len: usize, rng: &mut dyn rand::RngCore) -> usize {
        if rng.gen::<f64>() < self.a {
            t
        } else {
            (t + 1).min(chain_len)
        }
    }
}

/// Build the scheme a [`CouplingSpec`] asks for.
pub fn scheme_from_spec(spec: &CouplingSpec) -> Arc<dyn CouplingScheme> {
    match spec.kind {
        CouplingKind::None => Arc::new(WindowScheme::new(0)),
        CouplingKind::Window { w } => Arc::new(WindowScheme::new(w)),
        CouplingKind::Simple { a } => Arc::new(SimpleScheme::new(a)),
    }
}

/// A named entry in the runtime strategy registry.
pub struct SchemeEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub build: fn(&str) -> Result<Arc<dyn CouplingScheme>>,
}

/// The selectable coupling strategies. Specs look like `none`, `window:5`,
/// `simple:0.5`, `simple-printed:0.5`.
pub fn registry() -> &'static [SchemeEntry] {
    &[
        SchemeEntry {
            name: "none",
            summary: "uncoupled chain (window of width 1)",
            build: |_| Ok(Arc::new(WindowScheme::new(0))),
        },
        SchemeEntry {
            name: "window",
            summary: "uniform spreading over 2w+1 positions; param: w",
            build: |p| Ok(Arc::new(WindowScheme::new(parse_param(p)?))),
        },
        SchemeEntry {
            name: "simple",
            summary: "one-neighbor chain, load-conserving weights; param: a",
            build: |p| {
                let a: f64 = parse_param(p)?;
                let s = SimpleScheme::new(a);
                CouplingSpec { kind: CouplingKind::Simple { a }, chain_len: 4, anchored_prefix: 1 }.validate()?;
                Ok(Arc::new(s))
            },
        },
        SchemeEntry {
            name: "simple-printed",
            summary: "one-neighbor chain with the over-counting two-term weights; param: a",
            build: |p| Ok(Arc::new(SimpleScheme::printed(parse_param(p)?))),
        },
    ]
}

fn parse_param<T: std::str::FromStr>(p: &str) -> Result<T> {
    p.parse::<T>()
        .map_err(|_| Error::InvalidConfig(format!("bad coupling parameter {p:?}")))
}

/// Look a scheme up by `name` or `name:param`.
pub fn scheme_from_name(spec: &str) -> Result<Arc<dyn CouplingScheme>> {
    let (name, param) = match spec.split_once(':') {
        Some((n, p)) => (n, p),
        None => (spec, ""),
    };
    for entry in registry() {
        if entry.name == name {
            return (entry.build)(param);
        }
    }
    Err(Error::InvalidConfig(format!(
        "unknown coupling scheme {name:?}; known: {}",
        registry().iter().map(|e| e.name).collect::<Vec<_>>().join(", ")
    )))
}

/// How much of the per-iteration history a trajectory keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryPolicy {
    None,
    /// Every iteration up to `after`, then every `stride`-th.
    Decimated { stride: usize, after: usize },
    Full,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct History {
    pub iterations: Vec<usize>,
    pub profiles: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryOutcome {
    pub converged: bool,
    pub iterations: usize,
    /// Success level actually used: the self-consistent scalar floor + tol.
    pub success_level: f64,
    /// Per-position trajectories stayed non-increasing (checked when the run
    /// converged).
    pub monotone: bool,
    /// x non-decreasing in t through the bulk at every iteration.
    pub spatially_monotone: bool,
    /// Hit max_iter without either succeeding or reaching a stationary stall.
    pub censored: bool,
    pub final_profile: DensityProfile,
    #[serde(skip)]
    pub history: History,
}

/// Iterate `scheme` until every measured position sits on the decoding floor
/// (success) or the profile goes stationary (stall). Under a worst-case right
/// edge the last `right_skirt()` positions are excluded from the success
/// test; a replicating edge measures all of them.
#[allow(clippy::too_many_arguments)]
pub fn coupled_trajectory(
    scheme: &dyn CouplingScheme,
    load: f64,
    noise_var: f64,
    chain_len: usize,
    max_iter: usize,
    tol: f64,
    edge: RightEdge,
    history: HistoryPolicy,
    g: &dyn GEval,
) -> Result<TrajectoryOutcome> {
    let mut cur = scheme.init_profile(chain_len, load, noise_var)?;
    let mut next = cur.clone();
    let skirt = match edge {
        RightEdge::WorstCase => scheme.right_skirt().min(chain_len.saturating_sub(1)),
        RightEdge::Replicate => 0,
    };
    let measured = chain_len - skirt;
    let success_level = small_fixed_point(load, noise_var, PartitionDegree::Infinite, g) + tol;
    let stall_tol = 1e-13 * load.max(1.0);

    let mut hist = History::default();
    let mut record = |i: usize, p: &DensityProfile| match history {
        HistoryPolicy::None => {}
        HistoryPolicy::Full => {
            hist.iterations.push(i);
            hist.profiles.push(p.x.clone());
        }
        HistoryPolicy::Decimated { stride, after } => {
            if i <= after || i % stride == 0 {
                hist.iterations.push(i);
                hist.profiles.push(p.x.clone());
            }
        }
    };
    record(0, &cur);

    let mut monotone = true;
    let mut spatially_monotone = true;
    for i in 1..=max_iter {
        scheme.step_into(&cur, load, noise_var, edge, g, &mut next);
        let mut delta_max = 0.0f64;
        for t in 0..chain_len {
            let d = next.x[t] - cur.x[t];
            if d > 1e-12 * load.max(1.0) {
                monotone = false;
            }
            delta_max = delta_max.max(d.abs());
        }
        for t in skirt_free_bulk(chain_len, skirt) {
            if next.x[t] > next.x[t + 1] + 1e-10 * load.max(1.0) {
                spatially_monotone = false;
            }
        }
        std::mem::swap(&mut cur, &mut next);
        record(i, &cur);
        let worst = cur.x[..measured].iter().cloned().fold(0.0f64, f64::max);
        if worst <= success_level {
            return Ok(TrajectoryOutcome {
                converged: true,
                iterations: i,
                success_level,
                monotone,
                spatially_monotone,
                censored: false,
                final_profile: cur,
                history: hist,
            });
        }
        if delta_max < stall_tol {
            return Ok(TrajectoryOutcome {
                converged: false,
                iterations: i,
                success_level,
                monotone,
                spatially_monotone,
                censored: false,
                final_profile: cur,
                history: hist,
            });
        }
    }
    Ok(TrajectoryOutcome {
        converged: false,
        iterations: max_iter,
        success_level,
        monotone,
        spatially_monotone,
        censored: true,
        final_profile: cur,
        history: hist,
    })
}

fn skirt_free_bulk(chain_len: usize, skirt: usize) -> std::ops::Range<usize> {
    // interior run used for the spatial monotonicity check
    let hi = chain_len.saturating_sub(skirt + 1);
    1.min(hi)..hi
}

/// Result of a threshold search for one scheme.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdResult {
    pub scheme: String,
    pub alpha_threshold: f64,
    pub iterations_used: usize,
    pub chain_len: usize,
    /// Set when the chain or iteration budget could not certify the verdict.
    pub censored: bool,
}

/// Largest load at which the coupled wave still traverses the chain:
/// bisection of trajectory success to `alpha_tol`, conservative worst-case
/// right edge.
pub fn coupling_threshold(
    scheme: &dyn CouplingScheme,
    noise_var: f64,
    chain_len: usize,
    max_iter: usize,
    alpha_tol: f64,
    g: &dyn GEval,
) -> Result<ThresholdResult> {
    let mut censored = chain_len < scheme.min_chain_len();
    let mut iterations_used = 0usize;
    let mut probe = |alpha: f64, censored: &mut bool| -> Result<bool> {
        let out = coupled_trajectory(
            scheme,
            alpha,
            noise_var,
            chain_len,
            max_iter,
            1e-6,
            RightEdge::WorstCase,
            HistoryPolicy::None,
            g,
        )?;
        iterations_used += out.iterations;
        if out.censored {
            *censored = true;
        }
        Ok(out.converged)
    };

    let mut lo = 0.5;
    if !probe(lo, &mut censored)? {
        return Err(Error::NumericFailure(format!(
            "load {lo} did not converge; noise level too high for a threshold search"
        )));
    }
    let mut hi = lo + 1.0;
    while probe(hi, &mut censored)? {
        lo = hi;
        hi += 1.0;
        if hi > 16.0 {
            censored = true;
            break;
        }
    }
    while hi - lo > alpha_tol {
        let mid = 0.5 * (lo + hi);
        if probe(mid, &mut censored)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ThresholdResult {
        scheme: scheme.name(),
        alpha_threshold: 0.5 * (lo + hi),
        iterations_used,
        chain_len,
        censored,
    })
}

/// Wave diagnostics extracted from a converged history.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WaveSpeed {
    /// Positions per iteration; infinite when all positions move together.
    pub speed: f64,
    /// Best-integer-shift mismatch between consecutive positions' transits,
    /// relative to the profile scale (initial level minus floor), over bulk
    /// positions. An exact traveling wave gives 0 up to the sub-iteration
    /// part of the true delay.
    pub homogeneity_residual: f64,
    /// The integer iteration delay per position used for the residual.
    pub shift: usize,
}

/// Estimate wave speed and shift-homogeneity from a converged trajectory
/// recorded with a stride-1 history.
pub fn wave_speed(outcome: &TrajectoryOutcome, load: f64, noise_var: f64) -> Result<WaveSpeed> {
    if !outcome.converged {
        return Err(Error::NoWave("trajectory did not converge".into()));
    }
    let hist = &outcome.history;
    if hist.profiles.len() < 2 {
        return Err(Error::NoWave("history too short; record with HistoryPolicy::Full".into()));
    }
    let t_max = hist.profiles[0].len();
    if t_max < 24 {
        return Err(Error::NoWave("chain too short for bulk diagnostics".into()));
    }
    // the wave carries positions from the stalled bulk level (the largest
    // scalar fixed point) down to the floor; the preceding uniform relaxation
    // from the initial load level is not part of the traveling profile
    let g = crate::gkernel::GKernel::shared();
    let mut bulk_level = load + noise_var;
    for _ in 0..200_000 {
        let next = load * g.eval(1.0 / bulk_level) + noise_var;
        if (bulk_level - next).abs() <= 1e-13 * bulk_level {
            break;
        }
        bulk_level = next;
    }
    if bulk_level < outcome.success_level + 0.05 * (load + noise_var) {
        // no failure fixed point: the whole chain relaxes together and the
        // initial level plays the bulk role
        bulk_level = load + noise_var;
    }
    let level = 0.5 * (outcome.success_level + bulk_level);
    let bulk = 10..t_max - 10;

    // first iteration at which each bulk position drops below the level
    let mut transit: Vec<Option<usize>> = vec![None; t_max];
    for (k, prof) in hist.profiles.iter().enumerate() {
        for t in 0..t_max {
            if transit[t].is_none() && prof[t] < level {
                transit[t] = Some(hist.iterations[k]);
            }
        }
    }
    let times: Vec<f64> = bulk
        .clone()
        .map(|t| transit[t].map(|v| v as f64).ok_or_else(|| Error::NoWave(format!("position {t} never crossed the level"))))
        .collect::<Result<_>>()?;
    let deltas: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let mean_delta = deltas.iter().sum::<f64>() / deltas.len() as f64;
    if mean_delta <= 0.0 {
        return Ok(WaveSpeed { speed: f64::INFINITY, homogeneity_residual: 0.0, shift: 0 });
    }

    // residual of x(i, t) vs x(i + shift, t + 1) over the transit band,
    // minimized over integer shifts near the mean delay and normalized to
    // the wave amplitude
    let floor = outcome.success_level;
    let scale = (bulk_level - floor).max(1e-300);
    let band_lo = floor + 0.02 * scale;
    let band_hi = floor + 0.95 * scale;
    let center = mean_delta.round() as i64;
    let mut best = (f64::INFINITY, 0usize);
    for shift in (center - 3).max(1)..=center + 3 {
        let mut worst = 0.0f64;
        let mut used = false;
        for (k, prof) in hist.profiles.iter().enumerate() {
            let i = hist.iterations[k];
            let j = i as i64 + shift;
            // stride-1 history ⇒ iteration j lives at index k + shift
            let kj = k + shift as usize;
            if kj >= hist.profiles.len() || hist.iterations[kj] as i64 != j {
                continue;
            }
            for t in bulk.clone() {
                let a = prof[t];
                if a < band_lo || a > band_hi {
                    continue;
                }
                let b = hist.profiles[kj][t + 1];
                worst = worst.max((a - b).abs() / scale);
                used = true;
            }
        }
        if used && worst < best.0 {
            best = (worst, shift as usize);
        }
    }
    if best.0.is_infinite() {
        return Err(Error::NoWave("no comparable profile pairs in the transition band".into()));
    }
    Ok(WaveSpeed { speed: 1.0 / mean_delta, homogeneity_residual: best.0, shift: best.1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::de::de_step;
    use crate::gkernel::{GKernel, MemoGKernel};

    fn memo() -> &'static MemoGKernel {
        MemoGKernel::shared()
    }

    #[test]
    fn window_zero_reduces_to_uncoupled_step() {
        let g = GKernel::shared();
        let scheme = WindowScheme::new(0);
        let (load, nv) = (1.7, 0.05);
        let mut prof = scheme.init_profile(8, load, nv).unwrap();
        // puncture the profile so positions differ
        for (t, v) in prof.x.iter_mut().enumerate() {
            *v = 0.3 + 0.2 * t as f64;
        }
        let stepped = scheme.step(&prof, load, nv, RightEdge::WorstCase, g);
        for t in 0..8 {
            let want = de_step(prof.x[t], load, nv, PartitionDegree::Infinite, g).unwrap();
            assert_eq!(stepped.x[t], want, "position {t}");
        }
    }

    #[test]
    fn window_init_ramp() {
        let s = WindowScheme::new(2);
        let p = s.init_profile(12, 3.0, 0.0).unwrap();
        let want = [0.6, 1.2, 1.8, 2.4, 3.0, 3.0];
        for (t, w) in want.iter().enumerate() {
            assert!((p.x[t] - w).abs() < 1e-15, "t={}", t + 1);
        }
        assert_eq!(p.y[..2], [0.0, 0.0]);
        assert_eq!(p.y[2], 1.0);

        let s0 = WindowScheme::new(0);
        let p0 = s0.init_profile(4, 2.5, 0.1).unwrap();
        assert!((p0.x[0] - 2.6).abs() < 1e-15);
    }

    #[test]
    fn window_init_needs_room() {
        assert!(WindowScheme::new(3).init_profile(7, 1.0, 0.0).is_err());
    }

    #[test]
    fn window_converges_below_and_stalls_above() {
        let s = WindowScheme::new(5);
        let ok = coupled_trajectory(&s, 3.0, 0.0, 240, 60_000, 1e-6, RightEdge::WorstCase, HistoryPolicy::None, memo()).unwrap();
        assert!(ok.converged, "load 3.0 should converge for w=5");
        assert!(ok.monotone && ok.spatially_monotone);

        let stall = coupled_trajectory(&s, 6.0, 0.0, 240, 60_000, 1e-6, RightEdge::WorstCase, HistoryPolicy::None, memo()).unwrap();
        assert!(!stall.converged && !stall.censored);
        // bulk sits at the failure fixed point of the load-6 map
        let far = stall.final_profile.x[180];
        assert!(far > 4.5, "stalled bulk at {far}");
    }

    #[test]
    fn simple_a_zero_decouples() {
        let g = GKernel::shared();
        let s = SimpleScheme::new(0.0);
        let mut prof = s.init_profile(6, 1.4, 0.2).unwrap();
        for (t, v) in prof.x.iter_mut().enumerate() {
            *v = 0.5 + 0.1 * t as f64;
        }
        let stepped = s.step(&prof, 1.4, 0.2, RightEdge::WorstCase, g);
        // a = 0: block t hosts only the bits of position t-1, whose SIR reads
        // block t alone, so each interior position maps through the uncoupled
        // step; the first block hosts pilots only and drops to the noise floor
        assert!((stepped.x[0] - 0.2).abs() < 1e-15);
        for t in 1..6 {
            let want = de_step(prof.x[t], 1.4, 0.2, PartitionDegree::Infinite, g).unwrap();
            assert!((stepped.x[t] - want).abs() < 1e-15, "position {t}");
        }
    }

    #[test]
    fn simple_reference_load_converges() {
        let s = SimpleScheme::new(0.5);
        let out = coupled_trajectory(&s, 2.8, 0.0, 200, 60_000, 1e-6, RightEdge::WorstCase, HistoryPolicy::None, memo()).unwrap();
        assert!(out.converged, "2.8 below the simple-coupling threshold");
        let bad = coupled_trajectory(&s, 2.9, 0.0, 60_000.min(60_000), 60_000, 1e-6, RightEdge::WorstCase, HistoryPolicy::None, memo()).unwrap();
        assert!(!bad.converged, "2.9 above the simple-coupling threshold");
    }

    #[test]
    fn printed_reading_cannot_launch() {
        let s = SimpleScheme::printed(0.5);
        let out = coupled_trajectory(&s, 2.3, 0.0, 120, 40_000, 1e-6, RightEdge::WorstCase, HistoryPolicy::None, memo()).unwrap();
        assert!(!out.converged, "over-counting weights should stall well below 2.8");
    }

    #[test]
    fn bulk_update_commutes_with_translation() {
        let g = GKernel::shared();
        let s = WindowScheme::new(2);
        let t_max = 40;
        let mut prof = s.init_profile(t_max, 2.0, 0.01).unwrap();
        for (t, v) in prof.x.iter_mut().enumerate() {
            *v = 0.05 + 2.0 / (1.0 + (-0.4 * (t as f64 - 12.0)).exp());
        }
        let stepped = s.step(&prof, 2.0, 0.01, RightEdge::WorstCase, g);
        let mut shifted = prof.clone();
        shifted.x.rotate_right(1);
        shifted.x[0] = prof.x[0];
        let stepped_shifted = s.step(&shifted, 2.0, 0.01, RightEdge::WorstCase, g);
        // interior positions: stepping the shifted profile = shifting the step
        for t in (2 * 2 + 2)..(t_max - 2 * 2 - 1) {
            assert!(
                (stepped_shifted.x[t] - stepped.x[t - 1]).abs() < 1e-12,
                "translation mismatch at {t}"
            );
        }
    }

    #[test]
    fn threshold_w0_matches_uncoupled_boundary() {
        let th = coupling_threshold(&WindowScheme::new(0), 1e-9, 200, 30_000, 0.01, memo()).unwrap();
        assert!((th.alpha_threshold - 2.085).abs() < 0.02, "got {}", th.alpha_threshold);
        assert!(!th.censored);
    }

    #[test]
    fn registry_lookup() {
        assert_eq!(scheme_from_name("window:3").unwrap().name(), "window:3");
        assert_eq!(scheme_from_name("simple:0.5").unwrap().name(), "simple:0.5");
        assert_eq!(scheme_from_name("none").unwrap().name(), "window:0");
        assert!(scheme_from_name("zigzag:2").is_err());
        assert!(scheme_from_name("window:x").is_err());
    }

    #[test]
    fn uncoupled_wave_is_instant() {
        let s = WindowScheme::new(0);
        let out = coupled_trajectory(&s, 1.0, 0.0, 64, 20_000, 1e-6, RightEdge::WorstCase, HistoryPolicy::Full, memo()).unwrap();
        assert!(out.converged);
        let ws = wave_speed(&out, 1.0, 0.0).unwrap();
        assert!(ws.speed.is_infinite(), "speed {:?}", ws.speed);
        assert!(ws.homogeneity_residual == 0.0);
    }

    #[test]
    fn wave_speed_requires_convergence() {
        let s = WindowScheme::new(1);
        let out = coupled_trajectory(&s, 9.0, 0.0, 80, 4_000, 1e-6, RightEdge::WorstCase, HistoryPolicy::Full, memo()).unwrap();
        assert!(!out.converged);
        assert!(wave_speed(&out, 9.0, 0.0).is_err());
    }

    #[test]
    fn speed_decreases_toward_threshold() {
        let s = SimpleScheme::new(0.5);
        let mut speeds = Vec::new();
        for load in [2.0, 2.5, 2.75] {
            let out = coupled_trajectory(&s, load, 0.0, 120, 120_000, 1e-6, RightEdge::Replicate, HistoryPolicy::Full, memo()).unwrap();
            assert!(out.converged, "load {load}");
            speeds.push(wave_speed(&out, load, 0.0).unwrap().speed);
        }
        assert!(speeds[0] > speeds[1] && speeds[1] > speeds[2], "speeds {speeds:?}");
    }
}
