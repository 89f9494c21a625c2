//! Spectrally resolved Hong-Ou-Mandel interference of photons from
//! spontaneous parametric down-conversion.
//!
//! * [`spdc_model`] builds joint spectral amplitudes and reduced kernels.
//! * [`schmidt`] decomposes them into Schmidt modes.
//! * [`interference`] computes dip curves and correlated spectral intensity maps.
//! * [`multipair`] models multi-pair emission and loss with Gaussian states.
//! * [`spectrometer`] simulates the dispersive-fiber time-of-flight spectrometer.

pub mod error;
pub mod interference;
pub mod multipair;
pub mod schmidt;
pub mod spdc_model;
pub mod spectrometer;

pub use error::{Error, Result};
pub use interference::{CsiMap, DelayScan, DipCurve, DipMode};
pub use multipair::{MultipairConfig, MultipairReport};
pub use schmidt::SchmidtDecomposition;
pub use spdc_model::{CrystalSpec, FrequencyGrid, JointSpectralAmplitude, Photon, PumpSpec};
pub use spectrometer::{DispersionSpec, EventPair, EventRecord, Histogram2D};
