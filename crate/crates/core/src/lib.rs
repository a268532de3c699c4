//! Iterative cancellation demodulation on lifted random-access signal graphs.
//!
//! A block of K binary symbols rides on random unit-energy waveforms in N
//! dimensions; optimal joint detection is exponential in K. Lifting the
//! factor graph L-fold, splitting each bit into M fragments and permuting the
//! fragment-to-block assignment turns the problem into one a linear-time
//! cancellation message passer solves with the same per-bit statistics the
//! optimal symbol-wise detector would deliver. The library implements:
//!
//! * the detector itself ([`demod`]) with its lifted-graph construction
//!   ([`graph`]) and random-waveform machinery ([`signals`]);
//! * the scalar density evolution describing it ([`de`]) and the single
//!   nonlinear kernel everything is built from ([`gkernel`]);
//! * spatially coupled chains ([`coupled`]) with wave-propagation diagnostics
//!   and threshold searches over runtime-selectable coupling strategies;
//! * log-domain verification of the coupled system's convergence bound chain
//!   at astronomically large windows ([`bounds`]);
//! * exhaustive ML and marginal-posterior oracles for desk-scale
//!   cross-validation ([`oracle`]).

pub mod bounds;
pub mod coupled;
pub mod de;
pub mod demod;
pub mod error;
pub mod frame;
pub mod gkernel;
pub mod graph;
pub mod oracle;
pub mod quad;
pub mod rng;
pub mod signals;

pub use error::{Error, Result};
