//! Passive localization of an underwater acoustic source under the three-ray
//! shallow-water model.
//!
//! A source at unknown position `p` emits an unknown waveform that reaches each
//! of `L` single-hydrophone receivers along three straight rays: the direct
//! path, a surface reflection, and a bottom reflection. Working on the
//! normalized-DFT baseband measurements, this crate provides
//!
//! - the forward model: ray geometry, steering matrices, physical and random
//!   channel coefficients, waveform and noise synthesis ([`geometry`],
//!   [`waveform`], [`channel`]);
//! - the semi-blind localization (SBL) estimator, which treats both the
//!   waveform and the per-ray attenuation coefficients as unknown and scores a
//!   candidate position by the largest eigenvalue of a reduced `3L x 3L`
//!   data matrix ([`sbl`]);
//! - two baselines: three-ray matched field processing (MFP3), which assumes
//!   the channel is fully predictable from the candidate position, and
//!   steered-response GCC-PHAT, which uses direct-path delays only
//!   ([`baselines`]);
//! - the Fisher information matrix and position Cramér-Rao bound for the
//!   spectrally flat case, with analytic mean derivatives validated against
//!   finite differences ([`crlb`]).
//!
//! All operations are pure functions over immutable inputs; randomness enters
//! only through explicit seeds, so every result is reproducible.

pub mod baselines;
pub mod channel;
pub mod crlb;
pub mod geometry;
mod linalg;
pub mod sbl;
pub mod seeds;
pub mod waveform;

pub use geometry::{Position, RayGeometry, Scenario, SteeringMatrix};

/// Complex sample type used throughout.
pub type C64 = num_complex::Complex<f64>;
