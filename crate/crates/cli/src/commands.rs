use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use cipd::io::{
    load_trace, write_atomic, write_histogram_csv, write_readout_csv, write_trace_csv, write_trace_json, FitReport,
};
use cipd::noise_model::{noise_budget as budget, NoiseBudget};
use cipd::pipeline::{self, AnalyzeOptions};
use cipd::quadrature::QuadratureOptions;
use cipd::RunConfig;

use crate::failure::{Context, Failure};
use crate::{Common, Format, Quadrature};

/// How CDS windows sit on the trace; echoed into manifests.
const WINDOW_REGISTRATION: &str = "baseline: up to T0 of samples ending at the pulse start; \
     signal: up to T0 of samples starting after the pulse end; both clipped at neighbouring \
     pulses, resets and record edges";

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path).context(format!("config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if common.seed.is_some() {
        config.seed = common.seed;
    }
    if common.out.is_some() {
        config.output_dir = common.out.clone();
    }
    Ok(config)
}

fn validated(config: RunConfig) -> Result<RunConfig, Failure> {
    config.validate().context("config")?;
    Ok(config)
}

fn output_dir(config: &RunConfig) -> Result<Option<PathBuf>, Failure> {
    let Some(dir) = &config.output_dir else {
        return Ok(None);
    };
    fs::create_dir_all(dir).map_err(|e| Failure::io(format!("cannot create {}: {e}", dir.display())))?;
    Ok(Some(dir.clone()))
}

fn emit(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    write_atomic(&path, bytes).context(format!("writing {}", path.display()))?;
    Ok(path)
}

fn to_json(value: &impl Serialize) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report types always serialize");
    bytes.push(b'\n');
    bytes
}

fn quadrature(q: &Quadrature) -> Result<QuadratureOptions, Failure> {
    if !(q.rel_tol.is_finite() && q.rel_tol > 0.0) {
        return Err(Failure::config(format!("--rel-tol must be positive, got {}", q.rel_tol)));
    }
    if q.max_intervals == 0 {
        return Err(Failure::config("--max-intervals must be at least 1"));
    }
    Ok(QuadratureOptions {
        rel_tol: q.rel_tol,
        max_intervals: q.max_intervals,
        ..Default::default()
    })
}

const BUDGET_COLUMNS: [&str; 3] = ["cds_noise_voltage_volts", "signal_per_carrier_volts", "resolution_electrons"];

fn budget_values(b: &NoiseBudget) -> [f64; 3] {
    [b.cds_noise_volts, b.signal_per_carrier_volts, b.resolution_electrons]
}

fn csv_table(header: &[String], rows: &[Vec<f64>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row.iter().map(f64::to_string)).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn noise_budget(common: &Common, quad: &Quadrature) -> Result<(), Failure> {
    let config = validated(load_config(common)?)?;
    let b = budget(&config.detector, &config.spectrum, &config.cds, &quadrature(quad)?).context("noise budget")?;

    let (name, bytes) = match common.format.unwrap_or(Format::Json) {
        Format::Json => {
            let report = json!({
                "cds_noise_voltage_volts": b.cds_noise_volts,
                "signal_per_carrier_volts": b.signal_per_carrier_volts,
                "resolution_electrons": b.resolution_electrons,
                "quadrature": b.integral,
                "parameters": {
                    "detector": config.detector,
                    "spectrum": config.spectrum,
                    "cds": config.cds,
                    "t_average_seconds": config.cds.t_average(),
                },
            });
            ("noise_budget.json", to_json(&report))
        }
        Format::Csv => {
            let header: Vec<String> = BUDGET_COLUMNS.iter().map(|s| s.to_string()).collect();
            ("noise_budget.csv", csv_table(&header, &[budget_values(&b).to_vec()]))
        }
    };
    print!("{}", String::from_utf8_lossy(&bytes));
    if let Some(dir) = output_dir(&config)? {
        emit(&dir, name, &bytes)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    config_hash: String,
    trace_file: &'a str,
    n_samples: usize,
    sample_rate_hertz: f64,
    n_pulses: usize,
    /// Ground truth per pulse, for checking the analysis.
    photons: &'a [u64],
    carriers: &'a [u64],
    dark_carriers: usize,
    window_registration: &'static str,
    config: &'a RunConfig,
}

pub fn simulate(common: &Common) -> Result<(), Failure> {
    let mut config = validated(load_config(common)?)?;
    let seed = config.require_seed().context("config")?;
    let dir = output_dir(&config)?.ok_or_else(|| Failure::config("simulate needs --out or `output_dir`"))?;
    // The hash identifies the run, not where it was written.
    config.output_dir = None;

    let s = pipeline::simulate(&config, seed).context("simulation")?;

    let (trace_file, bytes) = match common.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut buf = Vec::new();
            write_trace_csv(&s.trace, &mut buf).context("encoding trace")?;
            ("trace.csv", buf)
        }
        Format::Json => {
            let mut buf = Vec::new();
            write_trace_json(&s.trace, &mut buf).context("encoding trace")?;
            ("trace.json", buf)
        }
    };
    emit(&dir, trace_file, &bytes)?;
    emit(&dir, "config.json", &to_json(&config))?;
    let manifest = Manifest {
        seed,
        config_hash: config.hash(),
        trace_file,
        n_samples: s.trace.len(),
        sample_rate_hertz: s.trace.sample_rate,
        n_pulses: config.schedule.n_pulses,
        photons: &s.photons,
        carriers: &s.carriers,
        dark_carriers: s.dark_times.len(),
        window_registration: WINDOW_REGISTRATION,
        config: &config,
    };
    let path = emit(&dir, "manifest.json", &to_json(&manifest))?;
    println!("{}", path.display());
    Ok(())
}

pub fn analyze(common: &Common, paths: &[PathBuf], min_step: Option<f64>) -> Result<(), Failure> {
    let mut config = load_config(common)?;
    let mut traces = Vec::with_capacity(paths.len());
    for path in paths {
        let trace = load_trace(path, Some(config.sample_rate)).context(format!("trace {}", path.display()))?;
        traces.push(trace);
    }
    // Without a config file, self-describing (JSON) traces supply their own timing.
    if common.config.is_none() {
        if let Some(t) = traces.first() {
            if let Some(schedule) = t.schedule {
                config.schedule = schedule;
            }
            config.sample_rate = t.sample_rate;
        }
    }
    let config = validated(config)?;
    if let Some(m) = min_step {
        if !(m.is_finite() && m > 0.0) {
            return Err(Failure::config(format!("--min-step must be positive, got {m}")));
        }
    }
    let a = pipeline::analyze(&traces, &config, &AnalyzeOptions { min_step }).context("analysis")?;

    let mut report = FitReport::new(&a.fit, &a.histogram);
    report.quantum_efficiency = a.qe;
    report.dark_rate = a.dark_rate;
    let report_bytes = to_json(&report);
    print!("{}", String::from_utf8_lossy(&report_bytes));

    let Some(dir) = output_dir(&config)? else {
        return Ok(());
    };
    let format = common.format.unwrap_or(Format::Csv);
    for (i, r) in a.readouts.iter().enumerate() {
        let stem = if a.readouts.len() == 1 {
            "readout".to_string()
        } else {
            format!("readout_{i}")
        };
        match format {
            Format::Csv => {
                let mut buf = Vec::new();
                write_readout_csv(r, &mut buf).context("encoding readout")?;
                emit(&dir, &format!("{stem}.csv"), &buf)?;
            }
            Format::Json => {
                emit(&dir, &format!("{stem}.json"), &to_json(r))?;
            }
        }
    }
    let mut hist = Vec::new();
    write_histogram_csv(&a.histogram, a.fit.lambda_hat, &mut hist).context("encoding histogram")?;
    emit(&dir, "histogram.csv", &hist)?;
    emit(&dir, "fit.json", &report_bytes)?;
    Ok(())
}

/// Parses `name=v1,v2,...`.
fn parse_axis(spec: &str) -> Result<(String, Vec<f64>), Failure> {
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| Failure::config(format!("--param `{spec}`: expected name=v1,v2,...")))?;
    let values = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Failure::config(format!("--param `{spec}`: `{v}` is not a number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((name.trim().to_string(), values))
}

pub fn sweep(common: &Common, specs: &[String], quad: &Quadrature) -> Result<(), Failure> {
    let base = validated(load_config(common)?)?;
    let opts = quadrature(quad)?;
    let axes = specs.iter().map(|s| parse_axis(s)).collect::<Result<Vec<_>, _>>()?;
    for (name, _) in &axes {
        base.clone().set_scalar(name, 0.0).context("sweep")?;
    }

    let n_points: usize = axes.iter().map(|(_, v)| v.len()).product();
    let mut rows = Vec::with_capacity(n_points);
    for point in 0..n_points {
        // Mixed-radix decoding; the last axis varies fastest.
        let mut rem = point;
        let mut coords = vec![0.0; axes.len()];
        for (slot, (_, values)) in coords.iter_mut().zip(&axes).rev() {
            *slot = values[rem % values.len()];
            rem /= values.len();
        }
        let mut config = base.clone();
        for ((name, _), &v) in axes.iter().zip(&coords) {
            config.set_scalar(name, v).context("sweep")?;
        }
        let label = axes
            .iter()
            .zip(&coords)
            .map(|((n, _), v)| format!("{n}={v}"))
            .collect::<Vec<_>>()
            .join(", ");
        config.validate().context(format!("sweep point [{label}]"))?;
        let b = budget(&config.detector, &config.spectrum, &config.cds, &opts)
            .context(format!("sweep point [{label}]"))?;
        coords.extend(budget_values(&b));
        rows.push(coords);
    }

    let header: Vec<String> = axes
        .iter()
        .map(|(n, _)| n.clone())
        .chain(BUDGET_COLUMNS.iter().map(|s| s.to_string()))
        .collect();
    let (name, bytes) = match common.format.unwrap_or(Format::Csv) {
        Format::Csv => ("sweep.csv", csv_table(&header, &rows)),
        Format::Json => {
            let records: Vec<Value> = rows
                .iter()
                .map(|row| Value::Object(header.iter().cloned().zip(row.iter().map(|&v| json!(v))).collect()))
                .collect();
            ("sweep.json", to_json(&records))
        }
    };
    print!("{}", String::from_utf8_lossy(&bytes));
    if let Some(dir) = output_dir(&base)? {
        emit(&dir, name, &bytes)?;
    }
    Ok(())
}
