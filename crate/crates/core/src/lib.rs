//! Simulation and optimization library for IRS-aided non-line-of-sight target
//! localization when the BS-IRS channel is unknown.
//!
//! The pipeline has two stages:
//!
//! 1. **Channel estimation.** The BS runs in full-duplex mode, transmits pilots
//!    on a subset of antennas and listens on the rest while the IRS cycles
//!    through phase patterns ([`pilot`]). Least-squares estimates of the
//!    per-element antenna-pair products are refined into a channel matrix by
//!    element-wise coordinate descent ([`chanest`]). Each IRS row of the
//!    estimate carries an unresolved `±1` sign.
//! 2. **Localization.** Per cycle, the BS illuminates the target through the
//!    IRS, fits every angular hypothesis by joint ML over the gain and the row
//!    signs ([`localize`], backed by the exact binary fractional solver in
//!    [`bqp`]), updates Bayesian beliefs, and designs the next waveform and IRS
//!    phases to separate the hypotheses ([`waveopt`]).
//!
//! [`harness`] runs Monte Carlo campaigns over these stages.
//!
//! IRS elements are enumerated x-major: element `ix * ny + iy`, consistent with
//! the Kronecker ordering `a_x ⊗ a_y` of [`scene::steering_vector`].

pub mod bqp;
pub mod chanest;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod localize;
pub mod pilot;
pub mod rng;
pub mod scene;
pub mod waveopt;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec};
