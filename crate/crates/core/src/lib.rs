//! Simulation and analysis of a charge-integration photon-number-resolving
//! detector.
//!
//! * [`noise_model`]: analytic CDS noise budget and charge-to-voltage chain.
//! * [`signal_sim`]: seeded synthesis of staircase output traces.
//! * [`readout`]: CDS estimation, quantization and step extraction.
//! * [`statistics`]: histograms, Poisson fits, QE and dark-rate estimates.
//! * [`pipeline`], [`config`], [`io`]: orchestration and file formats.

pub mod config;
pub mod error;
pub mod io;
pub mod noise_model;
pub mod pipeline;
pub mod quadrature;
pub mod readout;
pub mod signal_sim;
pub mod statistics;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use noise_model::{CdsConfig, DetectorParams, NoiseSpectrum};
pub use readout::{CdsWindow, ReadoutResult, Step};
pub use signal_sim::{PulseSchedule, RtsParams, Trace};
pub use statistics::{Histogram, PoissonFit};
