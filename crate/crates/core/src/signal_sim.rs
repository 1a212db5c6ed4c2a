//! Stochastic synthesis of integrating-amplifier output traces.
//!
//! A trace is the source-follower output sampled on a uniform grid: the
//! accumulated carrier count times the per-carrier voltage step, plus
//! flicker/white amplifier noise and an optional random telegraph signal.
//! Charge is zeroed at each mechanical reset.
//!
//! Sample `i` holds the charge collected by the end of the interval
//! `[i / fs, (i + 1) / fs)`. Photo-carriers of a pulse arrive uniformly over
//! the pulse, so the pulse's charge ramps linearly across its samples and is
//! complete on the last one.

use std::cell::RefCell;
use std::ops::Range;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp, Poisson, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, non_negative, positive, probability, Error, Result};
use crate::noise_model::{signal_per_carrier, DetectorParams, NoiseSpectrum};

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Stream {
    Photons = 1,
    Thinning = 2,
    Dark = 3,
    Flicker = 4,
    Telegraph = 5,
}

thread_local! {
    // Plans are cached per length; repeated runs reuse them.
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "ScheduleFile")]
pub struct PulseSchedule {
    /// Mean incident photons per pulse.
    pub mean_photons: f64,
    #[serde(rename = "pulse_period_seconds")]
    pub pulse_period: f64,
    #[serde(rename = "pulse_width_seconds")]
    pub pulse_width: f64,
    pub n_pulses: usize,
    /// Start of each pulse relative to the start of its period.
    #[serde(rename = "pulse_start_offset_seconds")]
    pub pulse_start_offset: f64,
}

impl Default for PulseSchedule {
    fn default() -> Self {
        Self::centered(10.0, 1.0, 0.010, 800)
    }
}

/// On-disk form: an omitted offset centres the pulse in whatever period is given.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleFile {
    #[serde(default = "default_mean_photons")]
    mean_photons: f64,
    #[serde(rename = "pulse_period_seconds", default = "default_period")]
    pulse_period: f64,
    #[serde(rename = "pulse_width_seconds", default = "default_width")]
    pulse_width: f64,
    #[serde(default = "default_n_pulses")]
    n_pulses: usize,
    #[serde(rename = "pulse_start_offset_seconds")]
    pulse_start_offset: Option<f64>,
}

fn default_mean_photons() -> f64 {
    PulseSchedule::default().mean_photons
}
fn default_period() -> f64 {
    PulseSchedule::default().pulse_period
}
fn default_width() -> f64 {
    PulseSchedule::default().pulse_width
}
fn default_n_pulses() -> usize {
    PulseSchedule::default().n_pulses
}

impl From<ScheduleFile> for PulseSchedule {
    fn from(f: ScheduleFile) -> Self {
        let centred = Self::centered(f.mean_photons, f.pulse_period, f.pulse_width, f.n_pulses);
        Self {
            pulse_start_offset: f.pulse_start_offset.unwrap_or(centred.pulse_start_offset),
            ..centred
        }
    }
}

impl PulseSchedule {
    /// Pulses centred in each period.
    pub fn centered(mean_photons: f64, pulse_period: f64, pulse_width: f64, n_pulses: usize) -> Self {
        Self {
            mean_photons,
            pulse_period,
            pulse_width,
            n_pulses,
            pulse_start_offset: 0.5 * (pulse_period - pulse_width),
        }
    }

    pub fn validate(&self) -> Result<()> {
        non_negative("schedule.mean_photons", self.mean_photons)?;
        positive("schedule.pulse_period_seconds", self.pulse_period)?;
        positive("schedule.pulse_width_seconds", self.pulse_width)?;
        if self.pulse_width >= self.pulse_period {
            return Err(invalid(
                "schedule.pulse_width_seconds",
                "must be shorter than pulse_period_seconds",
            ));
        }
        non_negative("schedule.pulse_start_offset_seconds", self.pulse_start_offset)?;
        if self.pulse_start_offset + self.pulse_width > self.pulse_period {
            return Err(invalid(
                "schedule.pulse_start_offset_seconds",
                "pulse must end within its period",
            ));
        }
        Ok(())
    }

    /// Record length: whole periods, at least one so a dark-only run still
    /// produces samples.
    pub fn duration(&self) -> f64 {
        self.n_pulses.max(1) as f64 * self.pulse_period
    }
}

/// Two-level random telegraph signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RtsParams {
    #[serde(rename = "amplitude_volts")]
    pub amplitude: f64,
    /// Low-to-high transition rate.
    #[serde(rename = "rate_up_per_second")]
    pub rate_up: f64,
    /// High-to-low transition rate.
    #[serde(rename = "rate_down_per_second")]
    pub rate_down: f64,
    pub enabled: bool,
}

impl Default for RtsParams {
    fn default() -> Self {
        Self {
            amplitude: 4e-6,
            rate_up: 0.01,
            rate_down: 0.05,
            enabled: false,
        }
    }
}

impl RtsParams {
    pub fn validate(&self) -> Result<()> {
        non_negative("rts.amplitude_volts", self.amplitude)?;
        non_negative("rts.rate_up_per_second", self.rate_up)?;
        non_negative("rts.rate_down_per_second", self.rate_down)?;
        Ok(())
    }
}

/// A uniformly sampled output record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trace {
    #[serde(rename = "sample_rate_hertz")]
    pub sample_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<PulseSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub reset_indices: Vec<usize>,
    pub samples: Vec<f64>,
}

impl Trace {
    pub fn new(sample_rate: f64, samples: Vec<f64>) -> Self {
        Self {
            sample_rate,
            schedule: None,
            seed: None,
            reset_indices: Vec::new(),
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 / self.sample_rate
    }

    pub fn validate(&self) -> Result<()> {
        positive("trace.sample_rate_hertz", self.sample_rate)?;
        if self
            .reset_indices
            .windows(2)
            .any(|w| w[0] >= w[1])
        {
            return Err(invalid("trace.reset_indices", "must be strictly increasing"));
        }
        if let Some(&last) = self.reset_indices.last() {
            if last >= self.samples.len() {
                return Err(invalid(
                    "trace.reset_indices",
                    format!("index {last} out of bounds for {} samples", self.samples.len()),
                ));
            }
        }
        if let Some(s) = &self.schedule {
            s.validate()?;
        }
        Ok(())
    }

    /// Pulse positions on this trace's grid, if it carries a schedule.
    pub fn pulse_ranges(&self) -> Result<Vec<Range<usize>>> {
        match &self.schedule {
            Some(s) => Ok(pulse_ranges(s, self.sample_rate, self.samples.len())?),
            None => Err(Error::Schema("trace has no pulse schedule".into())),
        }
    }
}

fn to_index(t: f64, sample_rate: f64) -> usize {
    (t * sample_rate).round() as usize
}

/// Sample ranges `[start, end)` occupied by each pulse.
pub fn pulse_ranges(schedule: &PulseSchedule, sample_rate: f64, n_samples: usize) -> Result<Vec<Range<usize>>> {
    let width = to_index(schedule.pulse_width, sample_rate);
    if width == 0 {
        return Err(Error::Timing(format!(
            "pulse width {} s is shorter than one sample at {} Hz",
            schedule.pulse_width, sample_rate
        )));
    }
    let mut ranges = Vec::with_capacity(schedule.n_pulses);
    for k in 0..schedule.n_pulses {
        let start = to_index(
            schedule.pulse_start_offset + k as f64 * schedule.pulse_period,
            sample_rate,
        );
        let range = start..start + width;
        if start == 0 || range.end >= n_samples {
            return Err(Error::Timing(format!(
                "pulse {k} at samples {range:?} leaves no room for CDS spans in a {n_samples}-sample record"
            )));
        }
        if let Some(prev) = ranges.last() {
            let prev: &Range<usize> = prev;
            if prev.end >= start {
                return Err(Error::Timing(format!("pulses {} and {k} touch on the sample grid", k - 1)));
            }
        }
        ranges.push(range);
    }
    Ok(ranges)
}

/// Reset sample indices at multiples of `reset_period`, excluding time zero.
pub fn reset_indices(reset_period: Option<f64>, sample_rate: f64, n_samples: usize) -> Vec<usize> {
    let Some(period) = reset_period else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut j = 1usize;
    loop {
        let idx = to_index(j as f64 * period, sample_rate);
        if idx >= n_samples {
            break;
        }
        if out.last() != Some(&idx) {
            out.push(idx);
        }
        j += 1;
    }
    out
}

/// `n_pulses` independent Poisson(`mean_photons`) draws.
pub fn generate_photon_counts(mean_photons: f64, n_pulses: usize, seed: u64) -> Result<Vec<u64>> {
    non_negative("mean_photons", mean_photons)?;
    let mut rng = rng_for(seed, Stream::Photons);
    poisson_draws(mean_photons, n_pulses, &mut rng)
}

fn poisson_draws<R: Rng>(mean: f64, n: usize, rng: &mut R) -> Result<Vec<u64>> {
    if mean == 0.0 {
        return Ok(vec![0; n]);
    }
    let dist = Poisson::new(mean).map_err(|e| invalid("mean_photons", e.to_string()))?;
    Ok((0..n).map(|_| dist.sample(rng) as u64).collect())
}

/// Binomial thinning of a photon count by the quantum efficiency.
pub fn thin_to_carriers(photons: u64, qe: f64, seed: u64) -> Result<u64> {
    let mut rng = rng_for(seed, Stream::Thinning);
    thin_with(photons, qe, &mut rng)
}

fn thin_with<R: Rng>(photons: u64, qe: f64, rng: &mut R) -> Result<u64> {
    probability("quantum_efficiency", qe)?;
    let dist = Binomial::new(photons, qe).map_err(|e| invalid("quantum_efficiency", e.to_string()))?;
    Ok(dist.sample(rng))
}

/// Arrival times of a homogeneous Poisson process on `[0, duration)`.
pub fn generate_dark_carriers(rate: f64, duration: f64, seed: u64) -> Result<Vec<f64>> {
    non_negative("dark_rate", rate)?;
    non_negative("duration", duration)?;
    let mut rng = rng_for(seed, Stream::Dark);
    Ok(poisson_process(rate, duration, &mut rng))
}

fn poisson_process<R: Rng>(rate: f64, duration: f64, rng: &mut R) -> Vec<f64> {
    if rate == 0.0 || duration == 0.0 {
        return Vec::new();
    }
    let gap = Exp::new(rate).expect("rate checked positive");
    let mut times = Vec::with_capacity((rate * duration * 1.2) as usize + 4);
    let mut t: f64 = gap.sample(rng);
    while t < duration {
        times.push(t);
        t += gap.sample(rng);
    }
    times
}

/// Gaussian noise with the given one-sided density, shaped in the frequency
/// domain. The DC bin is zero, so every realization has zero mean.
pub fn synthesize_flicker_noise(
    spec: &NoiseSpectrum,
    sample_rate: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    spec.validate()?;
    positive("sample_rate", sample_rate)?;
    if n_samples < 2 {
        return Err(invalid("n_samples", format!("need at least 2 samples, got {n_samples}")));
    }
    if spec.is_silent() {
        return Ok(vec![0.0; n_samples]);
    }

    let mut rng = rng_for(seed, Stream::Flicker);
    let n = n_samples;
    let df = sample_rate / n as f64;
    // E|X_k|^2 = S(f_k) * fs * n / 2 for the unnormalized DFT.
    let bin_scale = sample_rate * n as f64 / 2.0;
    let mut spectrum = vec![Complex::new(0.0, 0.0); n];
    for k in 1..=n / 2 {
        let sigma = (spec.density_unchecked(k as f64 * df) * bin_scale).sqrt();
        if 2 * k == n {
            let re: f64 = rng.sample(StandardNormal);
            spectrum[k] = Complex::new(sigma * re, 0.0);
        } else {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let z = Complex::new(re, im) * (sigma * std::f64::consts::FRAC_1_SQRT_2);
            spectrum[k] = z;
            spectrum[n - k] = z.conj();
        }
    }

    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n));
    fft.process(&mut spectrum);
    let norm = 1.0 / n as f64;
    Ok(spectrum.into_iter().map(|z| z.re * norm).collect())
}

/// Two-level continuous-time Markov chain sampled on the grid. The initial
/// level is drawn from the stationary distribution.
pub fn synthesize_rts(params: &RtsParams, sample_rate: f64, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    positive("sample_rate", sample_rate)?;
    if !params.enabled || params.amplitude == 0.0 {
        return Ok(vec![0.0; n_samples]);
    }
    let mut rng = rng_for(seed, Stream::Telegraph);
    let total = params.rate_up + params.rate_down;
    let mut high = total > 0.0 && rng.random::<f64>() < params.rate_up / total;

    let mut out = Vec::with_capacity(n_samples);
    let mut t = 0.0;
    let mut next_switch = dwell(&mut rng, if high { params.rate_down } else { params.rate_up });
    for i in 0..n_samples {
        let ti = i as f64 / sample_rate;
        while t + next_switch <= ti {
            t += next_switch;
            high = !high;
            next_switch = dwell(&mut rng, if high { params.rate_down } else { params.rate_up });
        }
        out.push(if high { params.amplitude } else { 0.0 });
    }
    Ok(out)
}

fn dwell<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    if rate == 0.0 {
        f64::INFINITY
    } else {
        Exp::new(rate).expect("rate checked positive").sample(rng)
    }
}

/// Everything `synthesize_trace` needs besides the carrier realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSetup<'a> {
    pub detector: &'a DetectorParams,
    pub schedule: &'a PulseSchedule,
    pub spectrum: &'a NoiseSpectrum,
    pub rts: &'a RtsParams,
    pub sample_rate: f64,
    /// `None` disables mechanical resets.
    pub reset_period: Option<f64>,
    pub seed: u64,
}

impl TraceSetup<'_> {
    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.schedule.validate()?;
        self.spectrum.validate()?;
        self.rts.validate()?;
        positive("sample_rate_hertz", self.sample_rate)?;
        if self.sample_rate * self.schedule.pulse_width < 2.0 * (1.0 - 1e-9) {
            return Err(Error::Timing(format!(
                "sample rate {} Hz cannot resolve {} s pulses (need at least 2 / pulse_width)",
                self.sample_rate, self.schedule.pulse_width
            )));
        }
        if let Some(r) = self.reset_period {
            positive("reset_period_seconds", r)?;
            if r < self.schedule.pulse_period {
                return Err(Error::Timing(format!(
                    "reset period {r} s is shorter than the pulse period {} s",
                    self.schedule.pulse_period
                )));
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        to_index(self.schedule.duration(), self.sample_rate)
    }
}

/// A synthesized trace together with the hidden realization behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub trace: Trace,
    /// Incident photons per pulse.
    pub photons: Vec<u64>,
    /// Photo-carriers per pulse.
    pub carriers: Vec<u64>,
    pub dark_times: Vec<f64>,
}

impl Synthesis {
    pub fn total_carriers(&self) -> u64 {
        self.carriers.iter().sum::<u64>() + self.dark_times.len() as u64
    }
}

/// Draws photons, thins them, adds dark carriers and noise.
pub fn synthesize_trace(setup: &TraceSetup<'_>) -> Result<Synthesis> {
    setup.validate()?;
    let n = setup.schedule.n_pulses;
    let photons = generate_photon_counts(setup.schedule.mean_photons, n, setup.seed)?;
    let mut rng = rng_for(setup.seed, Stream::Thinning);
    let carriers = photons
        .iter()
        .map(|&p| thin_with(p, setup.detector.quantum_efficiency, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let dark_times = generate_dark_carriers(setup.detector.dark_rate, setup.schedule.duration(), setup.seed)?;
    let trace = synthesize_with_carriers(setup, &carriers, &dark_times)?;
    Ok(Synthesis {
        trace,
        photons,
        carriers,
        dark_times,
    })
}

/// Builds a trace from explicit per-pulse carrier counts and dark arrival
/// times; noise is still drawn from `setup.seed`.
pub fn synthesize_with_carriers(setup: &TraceSetup<'_>, carriers: &[u64], dark_times: &[f64]) -> Result<Trace> {
    setup.validate()?;
    if carriers.len() != setup.schedule.n_pulses {
        return Err(invalid(
            "carriers",
            format!("expected {} per-pulse counts, got {}", setup.schedule.n_pulses, carriers.len()),
        ));
    }
    let n_samples = setup.n_samples();
    let pulses = pulse_ranges(setup.schedule, setup.sample_rate, n_samples)?;
    let resets = reset_indices(setup.reset_period, setup.sample_rate, n_samples);
    for &r in &resets {
        if let Some(p) = pulses.iter().find(|p| p.start < r && r < p.end) {
            return Err(Error::Timing(format!("reset at sample {r} falls inside pulse {p:?}")));
        }
    }

    let spc = signal_per_carrier(setup.detector)?;

    // Whole carriers landing on each sample; a pulse lands on its last sample.
    let mut landed = vec![0u64; n_samples];
    for (range, &c) in pulses.iter().zip(carriers) {
        landed[range.end - 1] += c;
    }
    for &t in dark_times {
        let idx = ((t * setup.sample_rate).floor() as usize).min(n_samples - 1);
        landed[idx] += 1;
    }

    let mut level = vec![0.0; n_samples];
    let mut next_reset = resets.iter().peekable();
    let mut acc = 0u64;
    for (i, (lvl, &add)) in level.iter_mut().zip(&landed).enumerate() {
        if next_reset.peek() == Some(&&i) {
            next_reset.next();
            acc = 0;
        }
        acc += add;
        *lvl = acc as f64;
    }
    // Partial charge on the ramp samples before each pulse completes.
    for (range, &c) in pulses.iter().zip(carriers) {
        let width = range.len() as f64;
        for (j, i) in range.clone().enumerate().take(range.len() - 1) {
            level[i] += c as f64 * (j + 1) as f64 / width;
        }
    }

    let noise = synthesize_flicker_noise(setup.spectrum, setup.sample_rate, n_samples, setup.seed)?;
    let rts = synthesize_rts(setup.rts, setup.sample_rate, n_samples, setup.seed)?;
    let samples = level
        .iter()
        .zip(noise.iter().zip(&rts))
        .map(|(&q, (&v, &r))| q * spc + v + r)
        .collect();

    Ok(Trace {
        sample_rate: setup.sample_rate,
        schedule: Some(*setup.schedule),
        seed: Some(setup.seed),
        reset_indices: resets,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quiet_detector() -> DetectorParams {
        DetectorParams {
            quantum_efficiency: 1.0,
            dark_rate: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn schedule_offset_defaults_to_centre_of_given_period() {
        let s: PulseSchedule = serde_json::from_str(r#"{"pulse_period_seconds": 2.0}"#).unwrap();
        assert_relative_eq!(s.pulse_start_offset, 0.995);
        let s: PulseSchedule = serde_json::from_str(r#"{"pulse_start_offset_seconds": 0.1}"#).unwrap();
        assert_eq!(s.pulse_start_offset, 0.1);
        assert_eq!(s.n_pulses, 800);
        assert!(serde_json::from_str::<PulseSchedule>(r#"{"period": 2.0}"#).is_err());
        let round: PulseSchedule = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(round, s);
    }

    #[test]
    fn photon_counts_basic() {
        assert!(generate_photon_counts(0.0, 100, 3).unwrap().iter().all(|&c| c == 0));
        assert_eq!(
            generate_photon_counts(2.6, 50, 9).unwrap(),
            generate_photon_counts(2.6, 50, 9).unwrap()
        );
        assert_ne!(
            generate_photon_counts(2.6, 50, 9).unwrap(),
            generate_photon_counts(2.6, 50, 10).unwrap()
        );
        assert!(generate_photon_counts(-1.0, 5, 0).is_err());
    }

    #[test]
    fn photon_count_mean_for_fig4a() {
        let counts = generate_photon_counts(2.60, 744, 17).unwrap();
        let mean = counts.iter().sum::<u64>() as f64 / 744.0;
        assert!((mean - 2.60).abs() < 3.0 * (2.60f64 / 744.0).sqrt(), "mean {mean}");
    }

    #[test]
    fn thinning_limits() {
        for n in [0u64, 1, 7, 1000] {
            assert_eq!(thin_to_carriers(n, 1.0, 5).unwrap(), n);
            assert_eq!(thin_to_carriers(n, 0.0, 5).unwrap(), 0);
            assert!(thin_to_carriers(n, 0.3, 5).unwrap() <= n);
        }
        assert!(thin_to_carriers(3, 1.5, 0).is_err());
        assert!(thin_to_carriers(3, f64::NAN, 0).is_err());
    }

    #[test]
    fn thinning_binomial_mean() {
        let n = 100_000u64;
        let total: u64 = (0..n).map(|s| thin_to_carriers(10, 0.8, s).unwrap()).sum();
        let mean = total as f64 / n as f64;
        let tol = 3.0 * (10.0 * 0.8 * 0.2 / n as f64).sqrt();
        assert!((mean - 8.0).abs() < tol, "mean {mean}");
    }

    #[test]
    fn dark_arrivals() {
        assert!(generate_dark_carriers(5.0, 0.0, 1).unwrap().is_empty());
        let a = generate_dark_carriers(500.0 / 3600.0, 3600.0, 8).unwrap();
        assert_eq!(a, generate_dark_carriers(500.0 / 3600.0, 3600.0, 8).unwrap());
        assert!((a.len() as f64 - 500.0).abs() < 3.0 * 500f64.sqrt());
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        assert!(a.iter().all(|&t| (0.0..3600.0).contains(&t)));
    }

    #[test]
    fn silent_noise_is_zero() {
        let v = synthesize_flicker_noise(&NoiseSpectrum::silent(), 1000.0, 64, 1).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
        assert!(synthesize_flicker_noise(&NoiseSpectrum::default(), 1000.0, 1, 1).is_err());
    }

    #[test]
    fn white_noise_variance() {
        let w = 1e-8;
        let spec = NoiseSpectrum {
            amplitude_1hz: 0.0,
            white_floor: w,
            flicker_exponent: 1.0,
        };
        let fs = 1000.0;
        let mut total = 0.0;
        let reps = 100;
        for seed in 0..reps {
            let x = synthesize_flicker_noise(&spec, fs, 4096, seed).unwrap();
            total += x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        }
        let var = total / reps as f64;
        let expected = w * w * fs / 2.0;
        assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
    }

    #[test]
    fn rts_off_or_flat() {
        let p = RtsParams::default();
        assert!(synthesize_rts(&p, 1000.0, 100, 0).unwrap().iter().all(|&x| x == 0.0));
        let p = RtsParams {
            enabled: true,
            amplitude: 0.0,
            ..Default::default()
        };
        assert!(synthesize_rts(&p, 1000.0, 100, 0).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rts_symmetric_rates_spend_half_time_high() {
        let p = RtsParams {
            enabled: true,
            amplitude: 1.0,
            rate_up: 2.0,
            rate_down: 2.0,
        };
        let fs = 100.0;
        let x = synthesize_rts(&p, fs, 200_000, 4).unwrap();
        let frac = x.iter().sum::<f64>() / x.len() as f64;
        // Correlation time 1/(up + down) = 0.25 s over a 2000 s record.
        let sd = (2.0 * 0.25 * 0.25 / 2000.0f64).sqrt();
        assert!((frac - 0.5).abs() < 4.0 * sd, "fraction {frac}");
    }

    #[test]
    fn rts_dwell_means_match_rates() {
        let p = RtsParams {
            enabled: true,
            amplitude: 1.0,
            rate_up: 1.0,
            rate_down: 4.0,
        };
        let fs = 2000.0;
        let x = synthesize_rts(&p, fs, 4_000_000, 12).unwrap();
        let mut runs: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut start = 0;
        for i in 1..x.len() {
            if x[i] != x[i - 1] {
                if start > 0 {
                    runs[(x[i - 1] > 0.0) as usize].push((i - start) as f64 / fs);
                }
                start = i;
            }
        }
        for (level, rate) in [(0usize, p.rate_up), (1, p.rate_down)] {
            let r = &runs[level];
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let se = (r.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt();
            assert!((mean - 1.0 / rate).abs() < 3.0 * se, "level {level}: {mean} vs {}", 1.0 / rate);
        }
    }

    #[test]
    fn noiseless_single_pulse() {
        let det = quiet_detector();
        let schedule = PulseSchedule::centered(0.0, 1.0, 0.01, 1);
        let setup = TraceSetup {
            detector: &det,
            schedule: &schedule,
            spectrum: &NoiseSpectrum::silent(),
            rts: &RtsParams::default(),
            sample_rate: 1000.0,
            reset_period: None,
            seed: 0,
        };
        let spc = signal_per_carrier(&det).unwrap();
        let trace = synthesize_with_carriers(&setup, &[7], &[]).unwrap();
        assert_eq!(trace.samples.len(), 1000);
        assert_eq!(trace.samples[999] - trace.samples[0], 7.0 * spc);
        assert!(trace.samples.windows(2).all(|w| w[1] >= w[0]));
        // Ramp occupies exactly the pulse samples.
        let pulse = &trace.pulse_ranges().unwrap()[0];
        assert_eq!(trace.samples[pulse.start - 1], 0.0);
        assert!(trace.samples[pulse.start] > 0.0);
        assert_eq!(trace.samples[pulse.end - 1], 7.0 * spc);
    }

    #[test]
    fn reset_every_period_returns_to_baseline() {
        let det = quiet_detector();
        let schedule = PulseSchedule::centered(0.0, 1.0, 0.01, 5);
        let setup = TraceSetup {
            detector: &det,
            schedule: &schedule,
            spectrum: &NoiseSpectrum::silent(),
            rts: &RtsParams::default(),
            sample_rate: 1000.0,
            reset_period: Some(1.0),
            seed: 0,
        };
        let trace = synthesize_with_carriers(&setup, &[3, 1, 4, 1, 5], &[]).unwrap();
        assert_eq!(trace.reset_indices, vec![1000, 2000, 3000, 4000]);
        for &r in &trace.reset_indices {
            assert_eq!(trace.samples[r], 0.0);
            assert!(trace.samples[r - 1] > 0.0);
        }
    }

    #[test]
    fn timing_checks() {
        let det = quiet_detector();
        let schedule = PulseSchedule::centered(1.0, 1.0, 0.01, 3);
        let silent = NoiseSpectrum::silent();
        let rts = RtsParams::default();
        let base = TraceSetup {
            detector: &det,
            schedule: &schedule,
            spectrum: &silent,
            rts: &rts,
            sample_rate: 1000.0,
            reset_period: None,
            seed: 0,
        };
        assert!(TraceSetup { sample_rate: 150.0, ..base }.validate().is_err());
        assert!(TraceSetup { reset_period: Some(0.5), ..base }.validate().is_err());
        // A reset inside a pulse.
        let late = PulseSchedule {
            pulse_start_offset: 0.995,
            pulse_width: 0.004,
            ..schedule
        };
        let bad = TraceSetup {
            schedule: &late,
            reset_period: Some(1.997),
            ..base
        };
        assert!(synthesize_with_carriers(&bad, &[1, 1, 1], &[]).is_err());
        assert!(synthesize_with_carriers(&base, &[1, 1], &[]).is_err());
    }

    #[test]
    fn synthesis_is_reproducible_and_conserves_carriers() {
        let det = DetectorParams::default();
        let schedule = PulseSchedule::centered(8.0, 1.0, 0.01, 20);
        let rts = RtsParams {
            enabled: true,
            ..Default::default()
        };
        let setup = TraceSetup {
            detector: &det,
            schedule: &schedule,
            spectrum: &NoiseSpectrum::default(),
            rts: &rts,
            sample_rate: 1000.0,
            reset_period: Some(7.0),
            seed: 99,
        };
        let a = synthesize_trace(&setup).unwrap();
        let b = synthesize_trace(&setup).unwrap();
        assert_eq!(a, b);
        assert!(a.carriers.iter().zip(&a.photons).all(|(c, p)| c <= p));

        // Without noise or resets the final level is the total charge.
        let quiet = TraceSetup {
            spectrum: &NoiseSpectrum::silent(),
            rts: &RtsParams::default(),
            reset_period: None,
            ..setup
        };
        let s = synthesize_trace(&quiet).unwrap();
        let spc = signal_per_carrier(&det).unwrap();
        let last = *s.trace.samples.last().unwrap();
        assert_relative_eq!(last / spc, s.total_carriers() as f64, max_relative = 1e-12);
        assert!(s.trace.samples.windows(2).all(|w| w[1] >= w[0]));
    }
}
