//! Minimum relay transmit power for a two-way relaying channel with lattice
//! compute-and-forward and power-splitting energy harvesting at the users.
//!
//! The relay beamformer, receive combiner and per-user splitting ratios are
//! optimized by alternating two semidefinite relaxations, each solved by the
//! small interior-point solver in [`sdp`].
//!
//! Module map:
//!
//! - [`numerics`]: Hermitian eigendecomposition, trace products, real embedding.
//! - [`lattice`]: nested lattice codes and the compute-and-forward round trip.
//! - [`sdp`]: dense primal-dual SDP solver and level bisection.
//! - [`design`]: the two sub-problems, rank-one extraction, splitting ratios, rates.
//! - [`optimizer`]: the alternating loop and the baseline schemes.
//! - [`scenario`]: channels, unit conventions, configuration files.
//! - [`harness`]: Monte Carlo sweeps, CSV output, grid oracle, lattice demo.

// `!(x > 0.0)` is used on purpose so that NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod numerics;
pub mod optimizer;
pub mod scenario;
pub mod sdp;

pub use design::{RateReport, SystemParams, TransceiverDesign};
pub use error::{Error, Result};
pub use numerics::{ComplexVector, HermitianMatrix};
pub use optimizer::{AlternateOptions, AlternationTrace, SchemeId};
pub use scenario::{ChannelRealization, ScenarioConfig};
pub use sdp::{SdpInstance, SdpSolution, SdpStatus, Tolerances};
