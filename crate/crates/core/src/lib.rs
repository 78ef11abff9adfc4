//! Link-level simulator for sensing-assisted 5G NR V2I beam management.
//!
//! The library models a roadside gNB with a uniform planar array that serves a
//! vehicle over an OFDM downlink while simultaneously processing the echoes of
//! its own transmission as a monostatic radar. The radar measurements feed an
//! extended Kalman filter whose predictions steer the transmit and receive
//! beams, replacing most of the pilot and reference signals that a
//! communication-only NR deployment needs for beam management.
//!
//! Module map:
//! - [`array`] — UPA steering vectors, array gains, conjugate beamforming.
//! - [`ofdm`] — OFDM grids, QAM payloads, radar echo synthesis, channel
//!   extraction, communication SNR/BER and RSRP measurement.
//! - [`radar`] — delay-Doppler mapping, presence detection, coarse 2D-DFT
//!   estimation, MUSIC refinement with golden-section search, 2D DOA.
//! - [`tracker`] — the kinematic EKF over `[azimuth, range, speed, refl]`.
//! - [`nr`] — NR numerology, per-scheme frame plans, overhead accounting and
//!   the throughput formula.
//! - [`protocols`] — the three beam-management case studies (initial access,
//!   connected mode, beam failure & recovery), each in a communication-only
//!   and an ISAC variant.
//! - [`sim`] — scenario generation, experiment orchestration and metrics.

pub mod array;
pub mod error;
pub mod nr;
pub mod ofdm;
pub mod protocols;
pub mod radar;
pub mod sim;
pub mod tracker;

pub use error::SimError;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, SimError>;
