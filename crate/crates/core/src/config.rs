//! Run configuration: one JSON document whose sections mirror the model
//! types. Every physical quantity carries its SI unit in the key name.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, positive, Error, Result};
use crate::noise_model::{CdsConfig, DetectorParams, NoiseSpectrum};
use crate::signal_sim::{PulseSchedule, RtsParams, TraceSetup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub detector: DetectorParams,
    pub spectrum: NoiseSpectrum,
    pub cds: CdsConfig,
    pub schedule: PulseSchedule,
    pub rts: RtsParams,
    #[serde(rename = "sample_rate_hertz")]
    pub sample_rate: f64,
    /// `None` disables mechanical resets.
    #[serde(rename = "reset_period_seconds")]
    pub reset_period: Option<f64>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            detector: DetectorParams::default(),
            spectrum: NoiseSpectrum::default(),
            cds: CdsConfig::default(),
            schedule: PulseSchedule::default(),
            rts: RtsParams::default(),
            sample_rate: 1000.0,
            reset_period: None,
            seed: None,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks every section; the seed is checked separately by
    /// [`RunConfig::require_seed`].
    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.spectrum.validate()?;
        self.cds.validate()?;
        self.schedule.validate()?;
        self.rts.validate()?;
        positive("sample_rate_hertz", self.sample_rate)?;
        self.setup(0).validate()
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| invalid("seed", "an explicit seed is required (config `seed` or --seed)"))
    }

    pub fn setup(&self, seed: u64) -> TraceSetup<'_> {
        TraceSetup {
            detector: &self.detector,
            schedule: &self.schedule,
            spectrum: &self.spectrum,
            rts: &self.rts,
            sample_rate: self.sample_rate,
            reset_period: self.reset_period,
            seed,
        }
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config always serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Sets one whitelisted scalar, by short name or by its JSON path.
    pub fn set_scalar(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match name {
            "amplitude_1hz" | "spectrum.amplitude_1hz_volts_per_rthz" => &mut self.spectrum.amplitude_1hz,
            "flicker_exponent" | "spectrum.flicker_exponent" => &mut self.spectrum.flicker_exponent,
            "white_floor" | "spectrum.white_floor_volts_per_rthz" => &mut self.spectrum.white_floor,
            "t_integration" | "cds.t_integration_seconds" => &mut self.cds.t_integration,
            "pulse_width" | "cds.pulse_width_seconds" => &mut self.cds.pulse_width,
            "f_cutoff" | "cds.f_cutoff_hertz" => &mut self.cds.f_cutoff,
            "gm" | "detector.gm" => &mut self.detector.gm,
            "c_input" | "detector.c_input_farads" => &mut self.detector.c_input,
            "t_average" | "cds.t_average_seconds" => {
                self.cds.t_average = Some(value);
                return Ok(());
            }
            other => {
                return Err(Error::InvalidParameter {
                    name: "sweep parameter",
                    reason: format!("unknown parameter `{other}`; expected one of {}", SWEEP_PARAMETERS.join(", ")),
                })
            }
        };
        *slot = value;
        Ok(())
    }
}

/// Scalar fields accepted by [`RunConfig::set_scalar`].
pub const SWEEP_PARAMETERS: &[&str] = &[
    "amplitude_1hz",
    "flicker_exponent",
    "white_floor",
    "t_integration",
    "pulse_width",
    "f_cutoff",
    "t_average",
    "gm",
    "c_input",
];
