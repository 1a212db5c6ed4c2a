//! Analytic noise budget of the correlated-double-sampling readout.
//!
//! The readout difference of two `T0`-long averages separated by `T` acts on
//! the amplifier noise as the product of a comb filter `2|sin(pi f T)|`, a
//! normalized box averager `|sinc(pi f T0)|` and the single-pole low-pass of
//! the amplifier chain. Integrating the noise density through that response
//! gives the rms voltage uncertainty of one CDS sample.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{finite, invalid, non_negative, positive, probability, Result};
use crate::quadrature::{integrate, QuadratureOptions};

/// Elementary charge in coulombs.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Upper integration limit as a multiple of the low-pass cutoff.
pub const CUTOFF_MULTIPLE: f64 = 1e3;

const MAX_INITIAL_PANELS: usize = 50_000;

/// Charge-to-voltage chain of the integrating front end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorParams {
    /// Source-follower voltage gain.
    pub gm: f64,
    /// Total capacitance of the integrating node.
    #[serde(rename = "c_input_farads")]
    pub c_input: f64,
    pub quantum_efficiency: f64,
    #[serde(rename = "dark_rate_per_second")]
    pub dark_rate: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            gm: 0.85,
            c_input: 6.7e-14,
            quantum_efficiency: 0.80,
            dark_rate: 500.0 / 3600.0,
        }
    }
}

impl DetectorParams {
    pub fn elementary_charge(&self) -> f64 {
        ELEMENTARY_CHARGE
    }

    pub fn validate(&self) -> Result<()> {
        positive("detector.gm", self.gm)?;
        if self.gm > 1.0 {
            return Err(invalid("detector.gm", format!("must lie in (0, 1], got {}", self.gm)));
        }
        positive("detector.c_input_farads", self.c_input)?;
        probability("detector.quantum_efficiency", self.quantum_efficiency)?;
        non_negative("detector.dark_rate_per_second", self.dark_rate)?;
        Ok(())
    }
}

/// One-sided voltage noise density `A^2 (1 Hz / f)^alpha + W^2`, in V^2/Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpectrum {
    #[serde(rename = "amplitude_1hz_volts_per_rthz")]
    pub amplitude_1hz: f64,
    pub flicker_exponent: f64,
    #[serde(rename = "white_floor_volts_per_rthz")]
    pub white_floor: f64,
}

impl Default for NoiseSpectrum {
    fn default() -> Self {
        Self {
            amplitude_1hz: 470e-9,
            flicker_exponent: 1.0,
            white_floor: 0.0,
        }
    }
}

impl NoiseSpectrum {
    pub fn silent() -> Self {
        Self {
            amplitude_1hz: 0.0,
            flicker_exponent: 1.0,
            white_floor: 0.0,
        }
    }

    pub fn is_silent(&self) -> bool {
        self.amplitude_1hz == 0.0 && self.white_floor == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        non_negative("spectrum.amplitude_1hz_volts_per_rthz", self.amplitude_1hz)?;
        non_negative("spectrum.white_floor_volts_per_rthz", self.white_floor)?;
        finite("spectrum.flicker_exponent", self.flicker_exponent)?;
        if !(0.0..2.0).contains(&self.flicker_exponent) {
            return Err(invalid(
                "spectrum.flicker_exponent",
                format!("must lie in [0, 2), got {}", self.flicker_exponent),
            ));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn density_unchecked(&self, f: f64) -> f64 {
        let flicker = if self.amplitude_1hz == 0.0 {
            0.0
        } else {
            self.amplitude_1hz * self.amplitude_1hz * f.powf(-self.flicker_exponent)
        };
        flicker + self.white_floor * self.white_floor
    }
}

/// CDS timing and filtering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CdsConfig {
    /// Separation `T` of the two samples being differenced.
    #[serde(rename = "t_integration_seconds")]
    pub t_integration: f64,
    /// Illumination time `Delta` inside each integration period.
    #[serde(rename = "pulse_width_seconds")]
    pub pulse_width: f64,
    #[serde(rename = "f_cutoff_hertz")]
    pub f_cutoff: f64,
    /// Averaging time `T0`; `None` means `T - Delta`.
    #[serde(rename = "t_average_seconds")]
    pub t_average: Option<f64>,
}

impl Default for CdsConfig {
    fn default() -> Self {
        Self {
            t_integration: 1.0,
            pulse_width: 0.010,
            f_cutoff: 20.0,
            t_average: None,
        }
    }
}

impl CdsConfig {
    pub fn t_average(&self) -> f64 {
        self.t_average
            .unwrap_or(self.t_integration - self.pulse_width)
    }

    pub fn validate(&self) -> Result<()> {
        positive("cds.t_integration_seconds", self.t_integration)?;
        positive("cds.pulse_width_seconds", self.pulse_width)?;
        if self.pulse_width >= self.t_integration {
            return Err(invalid(
                "cds.pulse_width_seconds",
                format!(
                    "must be shorter than t_integration ({} >= {})",
                    self.pulse_width, self.t_integration
                ),
            ));
        }
        positive("cds.f_cutoff_hertz", self.f_cutoff)?;
        let t0 = positive("cds.t_average_seconds", self.t_average())?;
        let limit = self.t_integration - self.pulse_width;
        // Allow a few ulps so the derived default always validates.
        if t0 > limit * (1.0 + 4.0 * f64::EPSILON) {
            return Err(invalid(
                "cds.t_average_seconds",
                format!("must not exceed t_integration - pulse_width = {limit}, got {t0}"),
            ));
        }
        Ok(())
    }
}

fn check_frequency(f: f64) -> Result<f64> {
    non_negative("frequency", f)
}

/// `2 |sin(pi f T)|`.
pub fn comb_gain(f: f64, t_integration: f64) -> Result<f64> {
    check_frequency(f)?;
    positive("t_integration", t_integration)?;
    Ok(comb(f, t_integration))
}

/// `|sin(pi f T0) / (pi f T0)|`, equal to one at DC.
pub fn box_gain(f: f64, t_average: f64) -> Result<f64> {
    check_frequency(f)?;
    positive("t_average", t_average)?;
    Ok(boxcar(f, t_average))
}

/// `1 / (1 + (f / fc)^2)`.
pub fn lowpass_gain_sq(f: f64, f_cutoff: f64) -> Result<f64> {
    check_frequency(f)?;
    positive("f_cutoff", f_cutoff)?;
    Ok(lowpass_sq(f, f_cutoff))
}

/// Noise density in V^2/Hz at `f > 0`.
pub fn spectral_density(spec: &NoiseSpectrum, f: f64) -> Result<f64> {
    spec.validate()?;
    positive("frequency", f)?;
    Ok(spec.density_unchecked(f))
}

#[inline]
fn comb(f: f64, t: f64) -> f64 {
    2.0 * (PI * f * t).sin().abs()
}

#[inline]
fn boxcar(f: f64, t0: f64) -> f64 {
    let x = PI * f * t0;
    if x == 0.0 {
        1.0
    } else {
        (x.sin() / x).abs()
    }
}

#[inline]
fn lowpass_sq(f: f64, fc: f64) -> f64 {
    let r = f / fc;
    1.0 / (1.0 + r * r)
}

/// Integrand of the CDS noise variance; zero at DC, where the comb's `f^2`
/// zero dominates any flicker exponent below 2.
pub fn cds_integrand(spec: &NoiseSpectrum, cds: &CdsConfig, f: f64) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    let c = comb(f, cds.t_integration);
    let b = boxcar(f, cds.t_average());
    spec.density_unchecked(f) * c * c * b * b * lowpass_sq(f, cds.f_cutoff)
}

/// Outcome of the CDS noise integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseIntegral {
    /// rms noise voltage, the square root of `variance`.
    pub rms_volts: f64,
    /// Integral over `(0, upper_limit]` in V^2.
    pub variance: f64,
    pub error_estimate: f64,
    pub upper_limit_hz: f64,
    /// Closed-form bound on the discarded integral above `upper_limit_hz`.
    pub tail_bound: f64,
    pub intervals: usize,
}

/// rms noise voltage of one CDS sample at the default relative tolerance.
pub fn cds_noise_voltage(spec: &NoiseSpectrum, cds: &CdsConfig) -> Result<f64> {
    cds_noise_integral(spec, cds, &QuadratureOptions::default()).map(|r| r.rms_volts)
}

pub fn cds_noise_integral(
    spec: &NoiseSpectrum,
    cds: &CdsConfig,
    options: &QuadratureOptions,
) -> Result<NoiseIntegral> {
    spec.validate()?;
    cds.validate()?;

    let upper = CUTOFF_MULTIPLE * cds.f_cutoff;
    // Panel edges on the comb zeros k/T.
    let width = (1.0 / cds.t_integration).max(upper / MAX_INITIAL_PANELS as f64);
    let n_panels = (upper / width).ceil() as usize;
    let mut breakpoints: Vec<f64> = (0..n_panels).map(|k| k as f64 * width).collect();
    breakpoints.push(upper);

    let result = integrate(|f| cds_integrand(spec, cds, f), &breakpoints, options)?;
    let variance = result.value.max(0.0);
    Ok(NoiseIntegral {
        rms_volts: variance.sqrt(),
        variance,
        error_estimate: result.error_estimate,
        upper_limit_hz: upper,
        tail_bound: tail_bound(spec, cds, upper),
        intervals: result.intervals,
    })
}

/// Above `f`, comb^2 <= 4, box^2 <= (pi T0 f)^-2 and lowpass <= (fc/f)^2.
fn tail_bound(spec: &NoiseSpectrum, cds: &CdsConfig, f: f64) -> f64 {
    let t0 = cds.t_average();
    let scale = 4.0 * cds.f_cutoff * cds.f_cutoff / (PI * PI * t0 * t0);
    let a2 = spec.amplitude_1hz * spec.amplitude_1hz;
    let w2 = spec.white_floor * spec.white_floor;
    let k = spec.flicker_exponent + 3.0;
    scale * (a2 * f.powf(-k) / k + w2 * f.powi(-3) / 3.0)
}

/// Output voltage step produced by one carrier on the integrating node.
pub fn signal_per_carrier(det: &DetectorParams) -> Result<f64> {
    det.validate()?;
    Ok(det.gm * ELEMENTARY_CHARGE / det.c_input)
}

/// rms CDS noise expressed in carriers.
pub fn resolution_electrons(det: &DetectorParams, spec: &NoiseSpectrum, cds: &CdsConfig) -> Result<f64> {
    Ok(cds_noise_voltage(spec, cds)? / signal_per_carrier(det)?)
}

/// Full noise budget at a given quadrature tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseBudget {
    pub cds_noise_volts: f64,
    pub signal_per_carrier_volts: f64,
    pub resolution_electrons: f64,
    pub integral: NoiseIntegral,
}

pub fn noise_budget(
    det: &DetectorParams,
    spec: &NoiseSpectrum,
    cds: &CdsConfig,
    options: &QuadratureOptions,
) -> Result<NoiseBudget> {
    let integral = cds_noise_integral(spec, cds, options)?;
    let spc = signal_per_carrier(det)?;
    Ok(NoiseBudget {
        cds_noise_volts: integral.rms_volts,
        signal_per_carrier_volts: spc,
        resolution_electrons: integral.rms_volts / spc,
        integral,
    })
}
