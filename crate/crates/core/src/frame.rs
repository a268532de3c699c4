//! Frame generation and binary replay format.
//!
//! All randomness in a frame derives from one seed through fixed stream
//! domains, so a stored frame can be replayed bit-exactly: the file carries
//! the configuration, the seed and the received sample blocks; topology,
//! waveforms and the transmitted symbols are regenerated from the seed.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic   4 bytes  "LMFR"
//! version u32      1
//! K, N, M, L, T    u32 each
//! coupling kind    u32 (0 none, 1 simple, 2 window)
//! coupling param   f64 (a for simple, w for window, 0 otherwise)
//! anchored_prefix  u32
//! noise_var        f64
//! seed             u64
//! payload          T·L blocks × N f64 samples
//! ```

use crate::coupled::{CouplingKind, CouplingSpec};
use crate::error::{Error, Result};
use crate::graph::{build_topology, draw_bits, draw_waveforms, modulate, EdgeWaveforms, LiftedTopology, ReceivedFrame, SystemConfig};
use crate::rng::{domain, RngStream};
use std::io::{Read, Write};

const MAGIC: &[u8; 4] = b"LMFR";
const VERSION: u32 = 1;

/// Deterministically generate topology, waveforms, symbols and the received
/// frame from one seed.
pub fn generate(
    cfg: &SystemConfig,
    seed: u64,
    orthogonal_fragments: bool,
) -> Result<(LiftedTopology, EdgeWaveforms, ReceivedFrame)> {
    let topo = build_topology(cfg, RngStream::scoped(seed, domain::TOPOLOGY, 0))?;
    let wf = draw_waveforms(&topo, RngStream::scoped(seed, domain::WAVEFORM, 0), orthogonal_fragments);
    let bits = draw_bits(&topo, RngStream::scoped(seed, domain::BITS, 0));
    let frame = modulate(&topo, &wf, &bits, RngStream::scoped(seed, domain::NOISE, 0))?;
    Ok((topo, wf, frame))
}

/// Rebuild the deterministic parts (topology, waveforms, symbols) for a
/// stored frame.
pub fn rebuild(cfg: &SystemConfig, seed: u64, orthogonal_fragments: bool) -> Result<(LiftedTopology, EdgeWaveforms, Vec<i8>)> {
    let topo = build_topology(cfg, RngStream::scoped(seed, domain::TOPOLOGY, 0))?;
    let wf = draw_waveforms(&topo, RngStream::scoped(seed, domain::WAVEFORM, 0), orthogonal_fragments);
    let bits = draw_bits(&topo, RngStream::scoped(seed, domain::BITS, 0));
    Ok((topo, wf, bits))
}

pub fn write_frame<W: Write>(frame: &ReceivedFrame, mut w: W) -> Result<()> {
    let cfg = &frame.cfg;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [cfg.users, cfg.chips, cfg.partitions, cfg.liftings, cfg.coupling.chain_len] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    let (kind, param) = match cfg.coupling.kind {
        CouplingKind::None => (0u32, 0.0),
        CouplingKind::Simple { a } => (1, a),
        CouplingKind::Window { w } => (2, w as f64),
    };
    w.write_all(&kind.to_le_bytes())?;
    w.write_all(&param.to_le_bytes())?;
    w.write_all(&(cfg.coupling.anchored_prefix as u32).to_le_bytes())?;
    w.write_all(&cfg.noise_var.to_le_bytes())?;
    w.write_all(&frame.seed.to_le_bytes())?;
    for block in &frame.blocks {
        for &s in block {
            w.write_all(&s.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_frame<R: Read>(mut r: R) -> Result<ReceivedFrame> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::MalformedFrame("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::MalformedFrame(format!("unsupported version {version}")));
    }
    let users = read_u32(&mut r)? as usize;
    let chips = read_u32(&mut r)? as usize;
    let partitions = read_u32(&mut r)? as usize;
    let liftings = read_u32(&mut r)? as usize;
    let chain_len = read_u32(&mut r)? as usize;
    let kind_tag = read_u32(&mut r)?;
    let param = read_f64(&mut r)?;
    let anchored_prefix = read_u32(&mut r)? as usize;
    let noise_var = read_f64(&mut r)?;
    let seed = read_u64(&mut r)?;
    let kind = match kind_tag {
        0 => CouplingKind::None,
        1 => CouplingKind::Simple { a: param },
        2 => CouplingKind::Window { w: param as usize },
        t => return Err(Error::MalformedFrame(format!("unknown coupling kind {t}"))),
    };
    let cfg = SystemConfig {
        users,
        chips,
        partitions,
        liftings,
        noise_var,
        coupling: CouplingSpec { kind, chain_len, anchored_prefix },
    };
    cfg.validate().map_err(|e| Error::MalformedFrame(e.to_string()))?;

    let n_blocks = cfg.total_blocks();
    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let mut block = Vec::with_capacity(chips);
        for _ in 0..chips {
            block.push(read_f64(&mut r)?);
        }
        blocks.push(block);
    }

    // symbols are deterministic in the seed
    let topo = build_topology(&cfg, RngStream::scoped(seed, domain::TOPOLOGY, 0))?;
    let true_bits = draw_bits(&topo, RngStream::scoped(seed, domain::BITS, 0));
    Ok(ReceivedFrame { blocks, true_bits, cfg, seed })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
