//! Performance model for polarization-encoding measurement-device-independent
//! quantum key distribution (MDI-QKD).
//!
//! The crate is organised bottom-up:
//!
//! * [`params`]: physical/numerical parameters, channel geometry, intensity settings.
//! * [`engine`]: numeric Bell-state-measurement simulation of two weak coherent
//!   pulses (misalignment unitaries, beam splitter, PBS, threshold detectors).
//! * [`analytic`]: closed-form gains, error rates and the background-free
//!   estimated key rate for asymmetric channels.
//! * [`decoy`]: the measured gain table and two-decoy-state bounds.
//! * [`keyrate`]: asymptotic and two-decoy key rates.
//! * [`optimize`]: multi-start pattern search over intensity settings and the
//!   asymmetric-channel comparisons built on it.
//! * [`scenario`]: distance/error sweeps reproducing the tolerance curves and
//!   asymmetric-channel tables.
//! * [`selftest`]: engine versus closed-form equivalence on a sample grid.
//! * [`config`] / [`output`]: flat key/value configuration and CSV emission
//!   used by the `mdiqkd` binary.

// `!(x > 0.0)` is used deliberately so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod config;
pub mod decoy;
pub mod engine;
pub mod error;
pub mod keyrate;
pub mod numeric;
pub mod optimize;
pub mod output;
pub mod params;
pub mod scenario;
pub mod selftest;

pub use error::{Error, Result};
pub use params::{
    channel_ratio, transmittance_from_distance, validate_intensities, ChannelGeometry, E11Model, IntensitySettings,
    MisalignmentMode, MisalignmentSplit, Party, SystemParams,
};
