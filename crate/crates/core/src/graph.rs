//! The lifted, edge-permuted signal graph.
//!
//! A system of K users over N chips is lifted L-fold: each chain position
//! holds L receive blocks, each user sends L bits per position, and every bit
//! is split into M fragments of amplitude 1/√M. The fragments of each
//! (position, user) pair are assigned to blocks by an independent uniform
//! permutation (uncoupled), or land in nearby positions according to the
//! coupling scheme. Randomizing the assignment grows the girth with L, which
//! is what makes the cancellation detector's scalar analysis exact.

use crate::coupled::{scheme_from_spec, CouplingKind, CouplingSpec};
use crate::error::{Error, Result};
use crate::rng::{domain, RngStream};
use crate::signals::{sample_orthogonal_basis_with, sample_unit_vector_with, Waveform};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

/// Dimensions and channel parameters of one system instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemConfig {
    /// Users per chain position and graph copy.
    pub users: usize,
    /// Signal dimension (chips) per receive block.
    pub chips: usize,
    /// Fragments per bit.
    pub partitions: usize,
    /// Graph copies (receive blocks) per chain position.
    pub liftings: usize,
    /// Noise variance per dimension (signal power is 1).
    pub noise_var: f64,
    pub coupling: CouplingSpec,
}

impl SystemConfig {
    pub fn uncoupled(users: usize, chips: usize, partitions: usize, liftings: usize, noise_var: f64) -> Self {
        Self { users, chips, partitions, liftings, noise_var, coupling: CouplingSpec::uncoupled() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.chips == 0 || self.partitions == 0 || self.liftings == 0 {
            return Err(Error::InvalidConfig("K, N, M, L must all be >= 1".into()));
        }
        if !(self.noise_var >= 0.0) {
            return Err(Error::InvalidConfig("noise_var must be >= 0".into()));
        }
        self.coupling.validate()
    }

    /// System load α = K/N.
    pub fn load(&self) -> f64 {
        self.users as f64 / self.chips as f64
    }

    pub fn chain_len(&self) -> usize {
        self.coupling.chain_len
    }

    /// Bits per chain position.
    pub fn bits_per_position(&self) -> usize {
        self.users * self.liftings
    }

    pub fn total_bits(&self) -> usize {
        self.bits_per_position() * self.chain_len()
    }

    pub fn total_blocks(&self) -> usize {
        self.liftings * self.chain_len()
    }
}

/// One fragment: an edge between a bit and a receive block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub bit: u32,
    pub block: u32,
}

/// The edge-permuted bipartite structure.
#[derive(Debug, Clone)]
pub struct LiftedTopology {
    pub cfg: SystemConfig,
    pub edges: Vec<Edge>,
    /// Edge ids of each bit's M fragments.
    pub bit_edges: Vec<Vec<u32>>,
    /// Edge ids hosted by each block.
    pub block_edges: Vec<Vec<u32>>,
    /// Known pilot bits (the anchored prefix of the chain).
    pub anchored: Vec<bool>,
    pub seed: u64,
}

impl LiftedTopology {
    /// Bit index for (position t [1-based], user k, copy l).
    pub fn bit_index(&self, t: usize, user: usize, copy: usize) -> usize {
        ((t - 1) * self.cfg.users + user) * self.cfg.liftings + copy
    }

    /// Block index for (position t [1-based], copy l).
    pub fn block_index(&self, t: usize, copy: usize) -> usize {
        (t - 1) * self.cfg.liftings + copy
    }

    /// User owning a bit.
    pub fn bit_user(&self, bit: usize) -> usize {
        (bit / self.cfg.liftings) % self.cfg.users
    }
}

/// Assign every fragment to a block.
///
/// Uncoupled (and window w = 0): for each (position, user) the L·M fragments
/// are a uniform random permutation of the L·M block slots of that position.
/// Coupled: each fragment first draws a chain position from the scheme, then
/// a block uniformly inside it.
pub fn build_topology(cfg: &SystemConfig, stream: RngStream) -> Result<LiftedTopology> {
    cfg.validate()?;
    let t_max = cfg.chain_len();
    let (k_max, l_max, m_max) = (cfg.users, cfg.liftings, cfg.partitions);
    let n_bits = cfg.total_bits();
    let n_blocks = cfg.total_blocks();

    let mut edges: Vec<Edge> = Vec::with_capacity(n_bits * m_max);
    let mut bit_edges: Vec<Vec<u32>> = vec![Vec::with_capacity(m_max); n_bits];
    let mut block_edges: Vec<Vec<u32>> = vec![Vec::new(); n_blocks];

    let local = matches!(cfg.coupling.kind, CouplingKind::None | CouplingKind::Window { w: 0 });
    let scheme = scheme_from_spec(&cfg.coupling);

    for t in 1..=t_max {
        for k in 0..k_max {
            let sub = stream.child(domain::TOPOLOGY, ((t - 1) * k_max + k) as u64);
            let mut rng = sub.rng();
            if local {
                // permutation of the L·M slots of this position
                let mut slots: Vec<usize> = (0..l_max * m_max).collect();
                slots.shuffle(&mut rng);
                for (frag, &slot) in slots.iter().enumerate() {
                    let copy = frag / m_max; // bit copy index l'
                    let block_copy = slot / m_max;
                    let bit = ((t - 1) * k_max + k) * l_max + copy;
                    let block = (t - 1) * l_max + block_copy;
                    push_edge(&mut edges, &mut bit_edges, &mut block_edges, bit, block);
                }
            } else {
                for copy in 0..l_max {
                    let bit = ((t - 1) * k_max + k) * l_max + copy;
                    for _ in 0..m_max {
                        let pos = scheme.sample_position(t, t_max, &mut rng);
                        let block_copy = rng.gen_range(0..l_max);
                        let block = (pos - 1) * l_max + block_copy;
                        push_edge(&mut edges, &mut bit_edges, &mut block_edges, bit, block);
                    }
                }
            }
        }
    }

    let anchored = (0..n_bits)
        .map(|b| {
            let t = b / cfg.bits_per_position() + 1;
            t <= cfg.coupling.anchored_prefix
        })
        .collect();

    Ok(LiftedTopology { cfg: cfg.clone(), edges, bit_edges, block_edges, anchored, seed: stream.seed })
}

fn push_edge(
    edges: &mut Vec<Edge>,
    bit_edges: &mut [Vec<u32>],
    block_edges: &mut [Vec<u32>],
    bit: usize,
    block: usize,
) {
    let id = edges.len() as u32;
    edges.push(Edge { bit: bit as u32, block: block as u32 });
    bit_edges[bit].push(id);
    block_edges[block].push(id);
}

/// Exact count of simple cycles of length ≤ `max_len` in the bit/block
/// bipartite multigraph. Parallel edges form length-2 cycles. `max_len` is
/// capped at 8: the enumeration cost grows with degree^length.
pub fn count_short_cycles(topo: &LiftedTopology, max_len: usize) -> Result<u64> {
    if max_len > 8 {
        return Err(Error::CostGuard(format!("max_len {max_len} > 8 would enumerate too many paths")));
    }
    if max_len < 2 {
        return Ok(0);
    }
    let n_bits = topo.bit_edges.len();
    let n_blocks = topo.block_edges.len();

    // vertex ids: bits first, then blocks
    let mut count = 0u64;

    // length-2 cycles: pairs of parallel edges
    let mut pair_counts: std::collections::HashMap<(u32, u32), u64> = std::collections::HashMap::new();
    for e in &topo.edges {
        *pair_counts.entry((e.bit, e.block)).or_insert(0) += 1;
    }
    for &c in pair_counts.values() {
        count += c * (c - 1) / 2;
    }

    // longer cycles: DFS over edge sequences from each root vertex, counting
    // closed walks with distinct vertices; each cycle is seen once per
    // direction from its smallest vertex, so divide by 2
    let adj: Vec<Vec<(usize, u32)>> = {
        let mut adj = vec![Vec::new(); n_bits + n_blocks];
        for (id, e) in topo.edges.iter().enumerate() {
            adj[e.bit as usize].push((n_bits + e.block as usize, id as u32));
            adj[n_bits + e.block as usize].push((e.bit as usize, id as u32));
        }
        adj
    };

    let mut long_count = 0u64;
    let mut stack_visited = vec![false; n_bits + n_blocks];
    for root in 0..n_bits + n_blocks {
        let mut path = vec![(root, u32::MAX)];
        stack_visited[root] = true;
        dfs_cycles(&adj, root, root, max_len, &mut path, &mut stack_visited, &mut long_count);
        stack_visited[root] = false;
    }
    count += long_count / 2;
    Ok(count)
}

fn dfs_cycles(
    adj: &[Vec<(usize, u32)>],
    root: usize,
    at: usize,
    max_len: usize,
    path: &mut Vec<(usize, u32)>,
    visited: &mut [bool],
    count: &mut u64,
) {
    for &(next, edge_id) in &adj[at] {
        if path.len() >= 2 && path.last().unwrap().1 == edge_id {
            continue; // no immediate edge backtracking
        }
        if next == root {
            // closed: length = path.len() edges so far + 1; only simple
            // cycles of length >= 4 here (length 2 handled separately)
            if path.len() >= 3 {
                *count += 1;
            }
            continue;
        }
        if visited[next] || next < root {
            continue; // canonical root: smallest vertex on the cycle
        }
        if path.len() >= max_len {
            continue; // closing from p vertices makes a length-p cycle
        }
        visited[next] = true;
        path.push((next, edge_id));
        dfs_cycles(adj, root, next, max_len, path, visited, count);
        path.pop();
        visited[next] = false;
    }
}

/// Received signal: one N-dimensional sample vector per block, plus the
/// transmitted symbols retained for scoring (simulation instrumentation only;
/// a real receiver has no access to them).
#[derive(Debug, Clone)]
pub struct ReceivedFrame {
    pub blocks: Vec<Vec<f64>>,
    pub true_bits: Vec<i8>,
    pub cfg: SystemConfig,
    pub seed: u64,
}

/// Per-edge waveforms for one frame.
#[derive(Debug, Clone)]
pub struct EdgeWaveforms {
    pub per_edge: Vec<Waveform>,
}

/// Draw the per-fragment waveforms. Each fragment gets its own independent
/// unit vector; with `orthogonal_fragments` the fragments a user places in
/// the same block share a random orthonormal basis instead, which removes
/// intra-user interference inside a block.
pub fn draw_waveforms(topo: &LiftedTopology, stream: RngStream, orthogonal_fragments: bool) -> EdgeWaveforms {
    let n = topo.cfg.chips;
    let mut per_edge: Vec<Option<Waveform>> = vec![None; topo.edges.len()];
    if orthogonal_fragments {
        // group edges by (block, user)
        use std::collections::HashMap;
        let mut groups: HashMap<(u32, usize), Vec<u32>> = HashMap::new();
        for (id, e) in topo.edges.iter().enumerate() {
            let user = topo.bit_user(e.bit as usize);
            groups.entry((e.block, user)).or_default().push(id as u32);
        }
        let mut keys: Vec<_> = groups.keys().cloned().collect();
        keys.sort();
        for (gi, key) in keys.iter().enumerate() {
            let ids = &groups[key];
            let mut rng = stream.child(domain::WAVEFORM, gi as u64).rng();
            let basis = sample_orthogonal_basis_with(n, ids.len().min(n), &mut rng)
                .expect("basis size bounded by dimension");
            for (j, &id) in ids.iter().enumerate() {
                // more fragments than dimensions would make orthogonality
                // impossible; fall back to independent draws past n
                let w = if j < basis.len() {
                    basis[j].clone()
                } else {
                    sample_unit_vector_with(n, &mut rng).unwrap()
                };
                per_edge[id as usize] = Some(w);
            }
        }
    } else {
        for id in 0..topo.edges.len() {
            let mut rng = stream.child(domain::WAVEFORM, id as u64).rng();
            per_edge[id] = Some(sample_unit_vector_with(n, &mut rng).unwrap());
        }
    }
    EdgeWaveforms { per_edge: per_edge.into_iter().map(Option::unwrap).collect() }
}

/// Synthesize the received blocks for the given symbols. Anchored bits are
/// pilots forced to +1; `bits` must cover every bit (the anchored entries are
/// overwritten).
pub fn modulate(
    topo: &LiftedTopology,
    waveforms: &EdgeWaveforms,
    bits: &[i8],
    noise_stream: RngStream,
) -> Result<ReceivedFrame> {
    let cfg = &topo.cfg;
    if bits.len() != topo.bit_edges.len() {
        return Err(Error::IncompleteInput(format!(
            "need {} bits, got {}",
            topo.bit_edges.len(),
            bits.len()
        )));
    }
    if bits.iter().any(|&b| b != 1 && b != -1) {
        return Err(Error::IncompleteInput("bits must be ±1".into()));
    }
    let mut true_bits = bits.to_vec();
    for (b, anchored) in true_bits.iter_mut().zip(&topo.anchored) {
        if *anchored {
            *b = 1;
        }
    }
    let amp = 1.0 / (cfg.partitions as f64).sqrt();
    let sigma = cfg.noise_var.sqrt();
    let mut blocks: Vec<Vec<f64>> = vec![vec![0.0; cfg.chips]; topo.block_edges.len()];
    for (id, e) in topo.edges.iter().enumerate() {
        let d = true_bits[e.bit as usize] as f64;
        let w = waveforms.per_edge[id].coefficients();
        let y = &mut blocks[e.block as usize];
        for (yi, wi) in y.iter_mut().zip(w) {
            *yi += d * amp * wi;
        }
    }
    if sigma > 0.0 {
        for (bi, y) in blocks.iter_mut().enumerate() {
            let mut rng = noise_stream.child(domain::NOISE, bi as u64).rng();
            for yi in y.iter_mut() {
                let n: f64 = rng.sample(StandardNormal);
                *yi += sigma * n;
            }
        }
    }
    Ok(ReceivedFrame { blocks, true_bits, cfg: cfg.clone(), seed: noise_stream.seed })
}

/// Draw random data bits for every non-anchored position.
pub fn draw_bits(topo: &LiftedTopology, stream: RngStream) -> Vec<i8> {
    let mut rng = stream.rng();
    (0..topo.bit_edges.len())
        .map(|b| {
            if topo.anchored[b] {
                1
            } else if rng.gen::<bool>() {
                1
            } else {
                -1
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::domain;

    fn cfg(k: usize, n: usize, m: usize, l: usize, nv: f64) -> SystemConfig {
        SystemConfig::uncoupled(k, n, m, l, nv)
    }

    #[test]
    fn identity_topology_without_lifting() {
        let c = cfg(3, 4, 1, 1, 0.0);
        let topo = build_topology(&c, RngStream::new(1, 0)).unwrap();
        assert_eq!(topo.edges.len(), 3);
        for e in &topo.edges {
            assert_eq!(e.block, 0);
        }
    }

    #[test]
    fn degree_invariants() {
        let c = cfg(2, 8, 4, 8, 0.0);
        let topo = build_topology(&c, RngStream::new(5, 0)).unwrap();
        for be in &topo.bit_edges {
            assert_eq!(be.len(), 4, "every bit has M fragments");
        }
        for bl in &topo.block_edges {
            assert_eq!(bl.len(), 2 * 4, "every block hosts K·M fragments");
        }
        // per-user per-block count is exactly M
        for block in 0..topo.block_edges.len() {
            let mut per_user = vec![0usize; c.users];
            for &eid in &topo.block_edges[block] {
                per_user[topo.bit_user(topo.edges[eid as usize].bit as usize)] += 1;
            }
            assert!(per_user.iter().all(|&x| x == 4));
        }
    }

    #[test]
    fn permutations_equidistributed() {
        // L=4, M=1: the single user's 4 fragments realize one of 4! patterns
        let c = cfg(1, 4, 1, 4, 0.0);
        let mut counts = std::collections::HashMap::new();
        let trials = 10_000;
        for s in 0..trials {
            let topo = build_topology(&c, RngStream::new(s, 0)).unwrap();
            let pattern: Vec<u32> = topo.bit_edges.iter().map(|es| topo.edges[es[0] as usize].block).collect();
            *counts.entry(pattern).or_insert(0u64) += 1;
        }
        assert_eq!(counts.len(), 24);
        let expected = trials as f64 / 24.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // χ²(23) 99% quantile
        assert!(chi2 < 41.64, "chi2 {chi2}");
    }

    #[test]
    fn single_block_graph_has_short_cycles() {
        let c = cfg(2, 4, 2, 1, 0.0);
        let topo = build_topology(&c, RngStream::new(3, 0)).unwrap();
        assert!(count_short_cycles(&topo, 4).unwrap() > 0);
    }

    #[test]
    fn tree_topology_has_no_cycles() {
        // hand-built star: three bits, one fragment each, distinct blocks
        let c = cfg(3, 4, 1, 1, 0.0);
        let mut topo = build_topology(&c, RngStream::new(1, 0)).unwrap();
        topo.block_edges = vec![vec![0], vec![1], vec![2]];
        topo.edges = vec![
            Edge { bit: 0, block: 0 },
            Edge { bit: 1, block: 1 },
            Edge { bit: 2, block: 2 },
        ];
        assert_eq!(count_short_cycles(&topo, 8).unwrap(), 0);
    }

    #[test]
    fn known_small_graphs() {
        // complete bipartite 2x2: a single 4-cycle
        let c = cfg(2, 4, 2, 1, 0.0);
        let mut topo = build_topology(&c, RngStream::new(1, 0)).unwrap();
        topo.edges = vec![
            Edge { bit: 0, block: 0 },
            Edge { bit: 0, block: 1 },
            Edge { bit: 1, block: 0 },
            Edge { bit: 1, block: 1 },
        ];
        topo.bit_edges = vec![vec![0, 1], vec![2, 3]];
        topo.block_edges = vec![vec![0, 2], vec![1, 3]];
        assert_eq!(count_short_cycles(&topo, 4).unwrap(), 1);
        // K_{3,3}: 9 four-cycles and 6 six-cycles
        let c = cfg(3, 4, 3, 1, 0.0);
        let mut topo = build_topology(&c, RngStream::new(1, 0)).unwrap();
        let mut edges = Vec::new();
        let mut bit_edges = vec![Vec::new(); 3];
        let mut block_edges = vec![Vec::new(); 3];
        for b in 0..3u32 {
            for l in 0..3u32 {
                let id = edges.len() as u32;
                edges.push(Edge { bit: b, block: l });
                bit_edges[b as usize].push(id);
                block_edges[l as usize].push(id);
            }
        }
        topo.edges = edges;
        topo.bit_edges = bit_edges;
        topo.block_edges = block_edges;
        assert_eq!(count_short_cycles(&topo, 4).unwrap(), 9);
        assert_eq!(count_short_cycles(&topo, 6).unwrap(), 15);
    }

    #[test]
    fn cost_guard_trips() {
        let c = cfg(2, 4, 2, 2, 0.0);
        let topo = build_topology(&c, RngStream::new(1, 0)).unwrap();
        assert!(count_short_cycles(&topo, 9).is_err());
    }

    #[test]
    fn per_bit_cycle_incidence_shrinks_with_lifting() {
        // cycles per bit scales like 1/L: doubling L should halve it
        let mut means = Vec::new();
        for &l in &[32usize, 64] {
            let c = cfg(4, 8, 4, l, 0.0);
            let mut total = 0.0;
            let seeds = 100;
            for s in 0..seeds {
                let topo = build_topology(&c, RngStream::new(1000 + s, 0)).unwrap();
                total += count_short_cycles(&topo, 4).unwrap() as f64 / topo.bit_edges.len() as f64;
            }
            means.push(total / seeds as f64);
        }
        let ratio = means[1] / means[0];
        assert!((ratio - 0.5).abs() < 0.25, "ratio {ratio}, means {means:?}");
    }

    #[test]
    fn noiseless_single_user_is_exact() {
        let c = cfg(1, 6, 1, 1, 0.0);
        let topo = build_topology(&c, RngStream::new(2, 0)).unwrap();
        let wf = draw_waveforms(&topo, RngStream::new(2, 1), false);
        let frame = modulate(&topo, &wf, &[-1], RngStream::new(2, 2)).unwrap();
        for (y, a) in frame.blocks[0].iter().zip(wf.per_edge[0].coefficients()) {
            assert!((y + a).abs() < 1e-15);
        }
    }

    #[test]
    fn block_energy_approaches_load() {
        let c = cfg(16, 16, 4, 8, 0.0);
        let mut acc = 0.0;
        let mut count = 0usize;
        for s in 0..20 {
            let topo = build_topology(&c, RngStream::new(s, 0)).unwrap();
            let wf = draw_waveforms(&topo, RngStream::new(s, 1), false);
            let bits = draw_bits(&topo, RngStream::new(s, 2));
            let frame = modulate(&topo, &wf, &bits, RngStream::new(s, 3)).unwrap();
            for y in &frame.blocks {
                acc += y.iter().map(|v| v * v).sum::<f64>() / c.chips as f64;
                count += 1;
            }
        }
        let mean = acc / count as f64;
        let alpha = c.load();
        assert!((mean - alpha).abs() < 0.05 * alpha, "mean energy {mean}, load {alpha}");
    }

    #[test]
    fn orthogonal_fragments_have_zero_intra_user_overlap() {
        let c = cfg(2, 16, 4, 4, 0.0);
        let topo = build_topology(&c, RngStream::new(9, 0)).unwrap();
        let wf = draw_waveforms(&topo, RngStream::new(9, 1), true);
        for block in 0..topo.block_edges.len() {
            for (i, &e1) in topo.block_edges[block].iter().enumerate() {
                for &e2 in topo.block_edges[block][i + 1..].iter() {
                    let u1 = topo.bit_user(topo.edges[e1 as usize].bit as usize);
                    let u2 = topo.bit_user(topo.edges[e2 as usize].bit as usize);
                    if u1 == u2 {
                        let d = wf.per_edge[e1 as usize].dot(&wf.per_edge[e2 as usize]);
                        assert!(d.abs() < 1e-10, "block {block}: overlap {d}");
                    }
                }
            }
        }
    }

    #[test]
    fn modulate_validates_bits() {
        let c = cfg(2, 4, 2, 2, 0.0);
        let topo = build_topology(&c, RngStream::new(1, 0)).unwrap();
        let wf = draw_waveforms(&topo, RngStream::new(1, 1), false);
        assert!(modulate(&topo, &wf, &[1, -1], RngStream::new(1, 2)).is_err());
        assert!(modulate(&topo, &wf, &[1, -1, 0, 1], RngStream::new(1, 2)).is_err());
    }

    #[test]
    fn energy_per_bit_is_unit() {
        // M fragments at amplitude 1/√M on unit waveforms: exactly 1 per bit
        for m in [1usize, 2, 8] {
            let c = cfg(2, 16, m, 4, 0.0);
            let topo = build_topology(&c, RngStream::new(4, 0)).unwrap();
            let wf = draw_waveforms(&topo, RngStream::new(4, 1), false);
            let amp2 = 1.0 / m as f64;
            for edges in &topo.bit_edges {
                let e: f64 = edges
                    .iter()
                    .map(|&id| {
                        amp2 * wf.per_edge[id as usize].coefficients().iter().map(|v| v * v).sum::<f64>()
                    })
                    .sum();
                assert!((e - 1.0).abs() < 1e-12, "M={m}: energy {e}");
            }
        }
    }

    #[test]
    fn coupled_topology_respects_window() {
        let mut c = cfg(2, 8, 4, 4, 0.0);
        c.coupling = CouplingSpec { kind: CouplingKind::Window { w: 1 }, chain_len: 6, anchored_prefix: 1 };
        let topo = build_topology(&c, RngStream::new(8, 0)).unwrap();
        for e in &topo.edges {
            let bit_pos = e.bit as usize / c.bits_per_position() + 1;
            let block_pos = e.block as usize / c.liftings + 1;
            let diff = bit_pos as i64 - block_pos as i64;
            assert!(diff.abs() <= 1, "fragment strayed outside the window");
        }
        // anchored flags on the first position only
        for b in 0..topo.bit_edges.len() {
            let pos = b / c.bits_per_position() + 1;
            assert_eq!(topo.anchored[b], pos == 1);
        }
    }
}
