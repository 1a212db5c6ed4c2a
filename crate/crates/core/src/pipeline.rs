//! End-to-end orchestration shared by the command-line tool and the tests.

use std::borrow::Cow;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Result;
use crate::readout::{extract_staircase, readout, ReadoutResult, Step};
use crate::signal_sim::{reset_indices, synthesize_trace, Synthesis, Trace};
use crate::statistics::{estimate_dark_rate, estimate_qe, fit_poisson, Histogram, PoissonFit, QeEstimate, RateEstimate};

/// Synthesizes one trace from a validated config and an explicit seed.
pub fn simulate(config: &RunConfig, seed: u64) -> Result<Synthesis> {
    config.validate()?;
    synthesize_trace(&config.setup(seed))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    /// One readout per input trace.
    pub readouts: Vec<ReadoutResult>,
    pub histogram: Histogram,
    pub fit: PoissonFit,
    /// Present when the schedule is illuminated.
    pub qe: Option<QeEstimate>,
    /// Present for dark runs (zero mean photon number).
    pub dark_rate: Option<RateEstimate>,
    /// Effective charge-collection time of one CDS read, averaged over windows.
    pub mean_exposure_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AnalyzeOptions {
    /// Run the staircase fit with this step threshold and flag windows that
    /// contain off-schedule steps.
    pub min_step: Option<f64>,
}

/// Bare sample files (CSV) carry no timing; take schedule and resets from the config.
fn with_config_timing<'a>(trace: &'a Trace, config: &RunConfig) -> Cow<'a, Trace> {
    if trace.schedule.is_some() {
        return Cow::Borrowed(trace);
    }
    let mut t = trace.clone();
    t.schedule = Some(config.schedule);
    if t.reset_indices.is_empty() {
        t.reset_indices = reset_indices(config.reset_period, t.sample_rate, t.len());
    }
    Cow::Owned(t)
}

/// Readout, histogram, Poisson fit, and QE or dark-rate back-calculation.
///
/// The dark rate is the total signed charge read across all windows divided
/// by the summed exposure, which avoids the clipping bias of per-window
/// counts at sub-electron rates. QE subtracts the expected dark charge per
/// window from the fitted mean before dividing by the incident mean.
pub fn analyze(traces: &[Trace], config: &RunConfig, options: &AnalyzeOptions) -> Result<Analysis> {
    config.validate()?;
    let mut readouts = Vec::with_capacity(traces.len());
    let mut steps_per_trace: Vec<Vec<Step>> = Vec::new();
    let traces: Vec<Cow<'_, Trace>> = traces.iter().map(|t| with_config_timing(t, config)).collect();
    for trace in &traces {
        let mut r = readout(trace, &config.detector, &config.cds)?;
        if let Some(min_step) = options.min_step {
            let steps = extract_staircase(trace, &config.detector, min_step)?;
            r.flag_off_schedule(&steps);
            steps_per_trace.push(steps);
        }
        readouts.push(r);
    }

    let counts: Vec<u64> = readouts.iter().flat_map(|r| r.valid_counts()).collect();
    let histogram = Histogram::from_counts(&counts);
    let fit = fit_poisson(&histogram)?;

    let mut exposure = 0.0;
    let mut charge = 0.0;
    let mut n_windows = 0usize;
    for (trace, r) in traces.iter().zip(&readouts) {
        for (w, &raw) in r.windows.iter().zip(&r.raw_electrons) {
            if !raw.is_finite() {
                continue;
            }
            let span = 0.5 * (w.baseline_span + w.signal_span) as f64 + w.pulse_span as f64;
            exposure += span / trace.sample_rate;
            charge += raw;
            n_windows += 1;
        }
    }
    let mean_exposure = if n_windows > 0 { exposure / n_windows as f64 } else { 0.0 };

    let (qe, dark_rate) = if config.schedule.mean_photons > 0.0 {
        let measured = (fit.lambda_hat - config.detector.dark_rate * mean_exposure).max(0.0);
        let qe = estimate_qe(measured, fit.std_error, config.schedule.mean_photons)?;
        (Some(qe), None)
    } else if exposure > 0.0 {
        let total = charge.round().max(0.0) as u64;
        (None, Some(estimate_dark_rate(&[total], exposure)?))
    } else {
        (None, None)
    };

    Ok(Analysis {
        readouts,
        histogram,
        fit,
        qe,
        dark_rate,
        mean_exposure_seconds: mean_exposure,
    })
}
