//! WebAssembly bindings for the browser demo. Every export takes plain
//! numbers and returns a JSON string for the page to plot.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use cipd::noise_model::{cds_integrand, noise_budget, CUTOFF_MULTIPLE};
use cipd::pipeline::{analyze, simulate, AnalyzeOptions};
use cipd::quadrature::QuadratureOptions;
use cipd::readout::extract_staircase;
use cipd::statistics::{poisson_pmf, poisson_upper_tail};
use cipd::{PulseSchedule, RtsParams, RunConfig};

/// The demo samples at 200 Hz: two samples per 10 ms pulse is enough for
/// windowing and keeps an 800-pulse record at 160k points.
const DEMO_SAMPLE_RATE: f64 = 200.0;
const CURVE_POINTS: usize = 600;

fn to_json(value: &impl Serialize) -> String {
    serde_json::to_string(value).expect("demo payloads always serialize")
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Serialize)]
struct BudgetView {
    cds_noise_volts: f64,
    signal_per_carrier_volts: f64,
    resolution_electrons: f64,
    frequency_hz: Vec<f64>,
    integrand: Vec<f64>,
}

/// Noise budget plus the CDS integrand on a log grid, for plotting.
pub fn budget_view(
    amplitude_nv: f64,
    exponent: f64,
    t_integration: f64,
    pulse_width_ms: f64,
    f_cutoff: f64,
) -> Result<String, String> {
    let mut c = RunConfig::default();
    c.spectrum.amplitude_1hz = amplitude_nv * 1e-9;
    c.spectrum.flicker_exponent = exponent;
    c.cds.t_integration = t_integration;
    c.cds.pulse_width = pulse_width_ms * 1e-3;
    c.cds.f_cutoff = f_cutoff;
    let b = noise_budget(&c.detector, &c.spectrum, &c.cds, &QuadratureOptions::default()).map_err(err)?;

    let (lo, hi) = ((1e-3 / t_integration).log10(), (CUTOFF_MULTIPLE * f_cutoff).log10());
    let frequency_hz: Vec<f64> = (0..CURVE_POINTS)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (CURVE_POINTS - 1) as f64))
        .collect();
    let integrand = frequency_hz
        .iter()
        .map(|&f| cds_integrand(&c.spectrum, &c.cds, f))
        .collect();
    Ok(to_json(&BudgetView {
        cds_noise_volts: b.cds_noise_volts,
        signal_per_carrier_volts: b.signal_per_carrier_volts,
        resolution_electrons: b.resolution_electrons,
        frequency_hz,
        integrand,
    }))
}

#[derive(Serialize)]
struct StepView {
    index: usize,
    height_electrons: f64,
    off_schedule: bool,
}

#[derive(Serialize)]
struct StaircaseView {
    sample_rate_hertz: f64,
    volts: Vec<f64>,
    reset_indices: Vec<usize>,
    pulse_starts: Vec<usize>,
    carriers: Vec<u64>,
    dark_carriers: usize,
    counts: Vec<u64>,
    raw_electrons: Vec<f64>,
    steps: Vec<StepView>,
}

/// A short simulated record with its readout and fitted staircase.
pub fn staircase_view(
    mean_photons: f64,
    n_pulses: usize,
    amplitude_nv: f64,
    telegraph: bool,
    min_step: f64,
    seed: u64,
) -> Result<String, String> {
    let mut c = RunConfig {
        sample_rate: DEMO_SAMPLE_RATE,
        schedule: PulseSchedule::centered(mean_photons, 1.0, 0.01, n_pulses),
        reset_period: Some(20.0),
        // Faster than the library default so a short record shows a few flips.
        rts: RtsParams {
            enabled: telegraph,
            rate_up: 0.1,
            rate_down: 0.1,
            ..RtsParams::default()
        },
        ..RunConfig::default()
    };
    c.spectrum.amplitude_1hz = amplitude_nv * 1e-9;
    let s = simulate(&c, seed).map_err(err)?;
    let steps = extract_staircase(&s.trace, &c.detector, min_step).map_err(err)?;
    let a = analyze(std::slice::from_ref(&s.trace), &c, &AnalyzeOptions { min_step: Some(min_step) }).map_err(err)?;
    let r = &a.readouts[0];
    Ok(to_json(&StaircaseView {
        sample_rate_hertz: s.trace.sample_rate,
        pulse_starts: s.trace.pulse_ranges().map_err(err)?.iter().map(|p| p.start).collect(),
        reset_indices: s.trace.reset_indices.clone(),
        carriers: s.carriers,
        dark_carriers: s.dark_times.len(),
        counts: r.counts.clone(),
        raw_electrons: r.raw_electrons.clone(),
        steps: steps
            .iter()
            .map(|st| StepView {
                index: st.index,
                height_electrons: st.height_electrons,
                off_schedule: st.off_schedule,
            })
            .collect(),
        volts: s.trace.samples,
    }))
}

#[derive(Serialize)]
struct HistogramView {
    k: Vec<u64>,
    observed: Vec<u64>,
    expected: Vec<f64>,
    lambda_hat: f64,
    std_error: f64,
    chi_square: Option<f64>,
    dof: Option<usize>,
    p_value: Option<f64>,
    quantum_efficiency: Option<f64>,
}

/// Photon-number histogram of `n_pulses` reads at mean `mean_carriers`
/// (photo plus dark), with its Poisson fit.
pub fn histogram_view(mean_carriers: f64, n_pulses: usize, amplitude_nv: f64, seed: u64) -> Result<String, String> {
    let mut c = RunConfig {
        sample_rate: DEMO_SAMPLE_RATE,
        schedule: PulseSchedule::centered(0.0, 1.0, 0.01, n_pulses),
        ..RunConfig::default()
    };
    c.spectrum.amplitude_1hz = amplitude_nv * 1e-9;
    let dark_per_read = c.detector.dark_rate * c.schedule.pulse_period;
    c.schedule.mean_photons = ((mean_carriers - dark_per_read) / c.detector.quantum_efficiency).max(0.0);
    let s = simulate(&c, seed).map_err(err)?;
    let a = analyze(&[s.trace], &c, &AnalyzeOptions::default()).map_err(err)?;

    let k_max = a.histogram.max_k().unwrap_or(0);
    let n = a.histogram.n_samples as f64;
    let lambda = a.fit.lambda_hat;
    let k: Vec<u64> = (0..=k_max).collect();
    Ok(to_json(&HistogramView {
        observed: k.iter().map(|&k| a.histogram.occurrences(k)).collect(),
        expected: k
            .iter()
            .map(|&k| {
                n * if k == k_max {
                    poisson_upper_tail(lambda, k)
                } else {
                    poisson_pmf(lambda, k)
                }
            })
            .collect(),
        k,
        lambda_hat: lambda,
        std_error: a.fit.std_error,
        chi_square: a.fit.chi_square,
        dof: a.fit.dof,
        p_value: a.fit.p_value,
        quantum_efficiency: a.qe.map(|q| q.qe),
    }))
}

#[wasm_bindgen(js_name = noiseBudget)]
pub fn noise_budget_js(
    amplitude_nv: f64,
    exponent: f64,
    t_integration: f64,
    pulse_width_ms: f64,
    f_cutoff: f64,
) -> Result<String, JsError> {
    budget_view(amplitude_nv, exponent, t_integration, pulse_width_ms, f_cutoff).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = simulateStaircase)]
pub fn staircase_js(
    mean_photons: f64,
    n_pulses: usize,
    amplitude_nv: f64,
    telegraph: bool,
    min_step: f64,
    seed: u32,
) -> Result<String, JsError> {
    staircase_view(mean_photons, n_pulses, amplitude_nv, telegraph, min_step, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = photonHistogram)]
pub fn histogram_js(mean_carriers: f64, n_pulses: usize, amplitude_nv: f64, seed: u32) -> Result<String, JsError> {
    histogram_view(mean_carriers, n_pulses, amplitude_nv, seed.into()).map_err(|e| JsError::new(&e))
}
