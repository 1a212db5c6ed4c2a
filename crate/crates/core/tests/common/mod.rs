//! Independent reference computations shared by the integration suites.
//!
//! Nothing here calls into the crate's quadrature, filter-gain or FFT code.

#![allow(dead_code, clippy::too_many_arguments)]

use std::f64::consts::PI;

/// CDS noise variance by fixed-grid trapezoid over `(f_lo, f_hi)`, with the
/// integrand written out from first principles.
pub fn trapezoid_cds_variance(
    amplitude: f64,
    exponent: f64,
    white: f64,
    t: f64,
    t0: f64,
    fc: f64,
    f_lo: f64,
    f_hi: f64,
    points: usize,
) -> f64 {
    let integrand = |f: f64| {
        let density = amplitude * amplitude / f.powf(exponent) + white * white;
        let comb = 2.0 * (PI * f * t).sin();
        let x = PI * f * t0;
        let sinc = x.sin() / x;
        density * comb * comb * sinc * sinc / (1.0 + (f / fc).powi(2))
    };
    let h = (f_hi - f_lo) / (points - 1) as f64;
    let mut sum = 0.5 * (integrand(f_lo) + integrand(f_hi));
    for i in 1..points - 1 {
        sum += integrand(f_lo + i as f64 * h);
    }
    sum * h
}

/// One-sided periodogram `2 |X_k|^2 / (fs n)` at the given bins by direct DFT.
pub fn periodogram_bins(x: &[f64], sample_rate: f64, bins: &[usize]) -> Vec<f64> {
    let n = x.len();
    let cos_table: Vec<f64> = (0..n).map(|j| (2.0 * PI * j as f64 / n as f64).cos()).collect();
    let sin_table: Vec<f64> = (0..n).map(|j| (2.0 * PI * j as f64 / n as f64).sin()).collect();
    bins.iter()
        .map(|&k| {
            let (mut re, mut im) = (0.0, 0.0);
            let mut idx = 0usize;
            for &v in x {
                re += v * cos_table[idx];
                im -= v * sin_table[idx];
                idx += k;
                if idx >= n {
                    idx -= n;
                }
            }
            2.0 * (re * re + im * im) / (sample_rate * n as f64)
        })
        .collect()
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Reference histogram runs: (measured carrier mean, number of pulses).
pub const HISTOGRAM_RUNS: [(f64, usize); 5] = [(2.60, 744), (4.14, 569), (6.97, 796), (9.89, 800), (22.27, 399)];
