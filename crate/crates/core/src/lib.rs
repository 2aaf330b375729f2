//! Analysis and design toolkit for superconducting microwave devices.
//!
//! The crate covers complex-S21 fitting of notch (hanger) resonators with the
//! diameter correction method, intracavity photon-number calibration, transmon
//! parameter extraction, T1 / Ramsey time-domain fits, and lumped-element
//! resonator design relations. Every fit can be exercised against the seeded
//! generators in [`synth`].

pub mod error;
pub mod ler;
pub mod lsq;
pub mod quantities;
pub mod resonator;
pub mod synth;
pub mod timedomain;
pub mod transmon;

pub use error::{Error, Result};
pub use quantities::{AngularFrequency, DecayTrace, Frequency, Power, S21Trace};
