//! File formats: traces (CSV and JSON), readouts, histograms and fit reports.
//!
//! Floats are written in shortest round-trip form, so traces survive a
//! write/read cycle bit for bit in either format.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::readout::{ReadoutResult, WindowFlag};
use crate::signal_sim::Trace;
use crate::statistics::{poisson_pmf, poisson_upper_tail, Histogram, MergedBin, PoissonFit, QeEstimate, RateEstimate};

pub const TRACE_COLUMNS: [&str; 2] = ["time_s", "volts"];
pub const READOUT_COLUMNS: [&str; 4] = ["window_index", "raw_electrons", "count", "flag"];
pub const HISTOGRAM_COLUMNS: [&str; 3] = ["k", "occurrences", "expected"];

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Io(std::io::Error::other(format!("{} has no file name", path.display()))))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_trace_csv<W: Write>(trace: &Trace, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_COLUMNS).map_err(csv_error)?;
    for (i, v) in trace.samples.iter().enumerate() {
        w.write_record([trace.time(i).to_string(), v.to_string()])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `time_s,volts` table. Without `sample_rate` the rate is inferred
/// from the first time step.
pub fn read_trace_csv<R: Read>(reader: R, sample_rate: Option<f64>) -> Result<Trace> {
    let mut r = csv::Reader::from_reader(reader);
    check_header(r.headers().map_err(csv_error)?, &TRACE_COLUMNS)?;
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(csv_error)?;
        times.push(parse_field(&record, 0, "time_s", line)?);
        samples.push(parse_field(&record, 1, "volts", line)?);
    }
    let rate = match sample_rate {
        Some(r) => r,
        None if times.len() >= 2 => 1.0 / (times[1] - times[0]),
        None => return Err(Error::Schema("cannot infer the sample rate from fewer than two rows".into())),
    };
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::Schema(format!("time_s column implies invalid sample rate {rate}")));
    }
    for (i, &t) in times.iter().enumerate() {
        let expected = i as f64 / rate;
        if (t - expected).abs() > 1e-6 / rate + 1e-12 * expected.abs() {
            return Err(Error::Schema(format!(
                "time_s row {i} is {t}, expected {expected} for a uniform {rate} Hz grid"
            )));
        }
    }
    Ok(Trace::new(rate, samples))
}

fn check_header(headers: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Schema(format!(
            "expected columns [{}], found [{}]",
            expected.join(", "),
            got.join(", ")
        )));
    }
    Ok(())
}

fn parse_field(record: &csv::StringRecord, col: usize, name: &str, line: usize) -> Result<f64> {
    let raw = record
        .get(col)
        .ok_or_else(|| Error::Schema(format!("row {line}: missing column `{name}`")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::Schema(format!("row {line}: column `{name}` holds non-numeric `{raw}`")))
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Schema(format!("{other:?}")),
    }
}

pub fn write_trace_json<W: Write>(trace: &Trace, writer: W) -> Result<()> {
    serde_json::to_writer(writer, trace)?;
    Ok(())
}

pub fn read_trace_json<R: Read>(reader: R) -> Result<Trace> {
    let trace: Trace = serde_json::from_reader(reader)?;
    trace.validate()?;
    Ok(trace)
}

/// Loads a trace, choosing the format from the file extension.
pub fn load_trace(path: &Path, sample_rate: Option<f64>) -> Result<Trace> {
    let file = fs::File::open(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_trace_json(std::io::BufReader::new(file)),
        Some("csv") => read_trace_csv(std::io::BufReader::new(file), sample_rate),
        _ => Err(Error::Schema(format!(
            "{}: expected a .csv or .json trace",
            path.display()
        ))),
    }
}

fn flag_name(flag: WindowFlag) -> &'static str {
    match flag {
        WindowFlag::Ok => "ok",
        WindowFlag::NonFinite => "non_finite",
        WindowFlag::OffScheduleStep => "off_schedule_step",
    }
}

pub fn write_readout_csv<W: Write>(result: &ReadoutResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(READOUT_COLUMNS).map_err(csv_error)?;
    for (i, ((raw, count), flag)) in result
        .raw_electrons
        .iter()
        .zip(&result.counts)
        .zip(&result.flags)
        .enumerate()
    {
        w.write_record([i.to_string(), raw.to_string(), count.to_string(), flag_name(*flag).into()])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv<W: Write>(hist: &Histogram, lambda: f64, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HISTOGRAM_COLUMNS).map_err(csv_error)?;
    let n = hist.n_samples as f64;
    let k_max = hist.max_k().unwrap_or(0);
    for k in 0..=k_max {
        let expected = if k == k_max {
            n * poisson_upper_tail(lambda, k)
        } else {
            n * poisson_pmf(lambda, k)
        };
        w.write_record([k.to_string(), hist.occurrences(k).to_string(), expected.to_string()])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Serialized Poisson fit with its histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub lambda_hat: f64,
    pub std_error: f64,
    pub chi_square: Option<f64>,
    pub dof: Option<usize>,
    pub p_value: Option<f64>,
    pub n_samples: u64,
    pub histogram: BTreeMap<u64, u64>,
    pub merged_bins: Vec<MergedBin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantum_efficiency: Option<QeEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dark_rate: Option<RateEstimate>,
}

impl FitReport {
    pub fn new(fit: &PoissonFit, hist: &Histogram) -> Self {
        Self {
            lambda_hat: fit.lambda_hat,
            std_error: fit.std_error,
            chi_square: fit.chi_square,
            dof: fit.dof,
            p_value: fit.p_value,
            n_samples: fit.n_samples,
            histogram: hist.counts_by_k.clone(),
            merged_bins: fit.bins.clone(),
            quantum_efficiency: None,
            dark_rate: None,
        }
    }
}
