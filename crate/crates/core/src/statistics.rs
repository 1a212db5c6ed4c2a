//! Photon-number histograms, Poisson fits and efficiency/dark-rate estimates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{invalid, non_negative, positive, Error, Result};

/// Minimum expected occupancy of a merged bin in the chi-square test.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts_by_k: BTreeMap<u64, u64>,
    pub n_samples: u64,
}

impl Histogram {
    pub fn from_counts(counts: &[u64]) -> Self {
        let mut counts_by_k = BTreeMap::new();
        for &c in counts {
            *counts_by_k.entry(c).or_insert(0) += 1;
        }
        Self {
            counts_by_k,
            n_samples: counts.len() as u64,
        }
    }

    pub fn occurrences(&self, k: u64) -> u64 {
        self.counts_by_k.get(&k).copied().unwrap_or(0)
    }

    pub fn max_k(&self) -> Option<u64> {
        self.counts_by_k.keys().next_back().copied()
    }

    pub fn mean(&self) -> Option<f64> {
        if self.n_samples == 0 {
            return None;
        }
        let total: f64 = self
            .counts_by_k
            .iter()
            .map(|(&k, &n)| k as f64 * n as f64)
            .sum();
        Some(total / self.n_samples as f64)
    }
}

/// Exact frequency table; negative entries are rejected.
pub fn build_histogram(counts: &[i64]) -> Result<Histogram> {
    let unsigned = counts
        .iter()
        .map(|&c| u64::try_from(c).map_err(|_| invalid("counts", format!("negative entry {c}"))))
        .collect::<Result<Vec<u64>>>()?;
    Ok(Histogram::from_counts(&unsigned))
}

/// `e^-lambda lambda^k / k!`, evaluated in log space. NaN for invalid lambda.
pub fn poisson_pmf(lambda: f64, k: u64) -> f64 {
    if !lambda.is_finite() || lambda < 0.0 {
        return f64::NAN;
    }
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let k = k as f64;
    (k * lambda.ln() - lambda - ln_gamma(k + 1.0)).exp()
}

/// `P(X >= k)` for `X ~ Poisson(lambda)`.
pub fn poisson_upper_tail(lambda: f64, k: u64) -> f64 {
    if k == 0 {
        1.0
    } else if lambda == 0.0 {
        0.0
    } else {
        gamma_lr(k as f64, lambda)
    }
}

/// Survival function of the chi-square distribution.
pub fn chi_square_sf(statistic: f64, dof: usize) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof as f64 / 2.0, statistic / 2.0)
}

/// A merged group of adjacent photon numbers `k_lo..=k_hi`; the last group
/// also carries the expected mass above `k_hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergedBin {
    pub k_lo: u64,
    pub k_hi: u64,
    pub observed: u64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonFit {
    pub lambda_hat: f64,
    pub std_error: f64,
    /// `None` when fewer than three merged bins remain.
    pub chi_square: Option<f64>,
    pub dof: Option<usize>,
    pub p_value: Option<f64>,
    pub n_samples: u64,
    pub bins: Vec<MergedBin>,
}

impl PoissonFit {
    pub fn has_gof(&self) -> bool {
        self.p_value.is_some()
    }
}

/// Adjacent-bin merge so every group expects at least [`MIN_EXPECTED`].
pub fn merge_bins(hist: &Histogram, lambda: f64) -> Vec<MergedBin> {
    let n = hist.n_samples as f64;
    let Some(k_max) = hist.max_k() else {
        return Vec::new();
    };
    let mut bins: Vec<MergedBin> = Vec::new();
    let mut open: Option<MergedBin> = None;
    for k in 0..=k_max {
        let expected = if k == k_max {
            n * poisson_upper_tail(lambda, k)
        } else {
            n * poisson_pmf(lambda, k)
        };
        let bin = open.get_or_insert(MergedBin {
            k_lo: k,
            k_hi: k,
            observed: 0,
            expected: 0.0,
        });
        bin.k_hi = k;
        bin.observed += hist.occurrences(k);
        bin.expected += expected;
        if bin.expected >= MIN_EXPECTED {
            bins.extend(open.take());
        }
    }
    if let Some(rest) = open {
        match bins.last_mut() {
            Some(last) => {
                last.k_hi = rest.k_hi;
                last.observed += rest.observed;
                last.expected += rest.expected;
            }
            None => bins.push(rest),
        }
    }
    bins
}

/// Poisson MLE (the sample mean) with a Pearson chi-square test on merged bins.
pub fn fit_poisson(hist: &Histogram) -> Result<PoissonFit> {
    let lambda = hist.mean().ok_or(Error::EmptyHistogram)?;
    let n = hist.n_samples;
    let bins = merge_bins(hist, lambda);
    let (chi_square, dof, p_value) = if bins.len() >= 3 {
        let chi: f64 = bins
            .iter()
            .map(|b| {
                let d = b.observed as f64 - b.expected;
                d * d / b.expected
            })
            .sum();
        let dof = bins.len() - 2;
        (Some(chi), Some(dof), Some(chi_square_sf(chi, dof)))
    } else {
        (None, None, None)
    };
    Ok(PoissonFit {
        lambda_hat: lambda,
        std_error: (lambda / n as f64).sqrt(),
        chi_square,
        dof,
        p_value,
        n_samples: n,
        bins,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QeEstimate {
    pub qe: f64,
    pub std_error: f64,
}

/// Back-calculated quantum efficiency `measured / incident`.
pub fn estimate_qe(measured_mean: f64, measured_std_error: f64, incident_mean: f64) -> Result<QeEstimate> {
    non_negative("measured_mean", measured_mean)?;
    non_negative("measured_std_error", measured_std_error)?;
    positive("incident_mean", incident_mean)?;
    Ok(QeEstimate {
        qe: measured_mean / incident_mean,
        std_error: measured_std_error / incident_mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate_per_second: f64,
    pub std_error: f64,
    pub total_counts: u64,
    pub exposure_seconds: f64,
}

/// Pooled Poisson rate over `counts.len()` windows of `window` seconds.
pub fn estimate_dark_rate(counts: &[u64], window: f64) -> Result<RateEstimate> {
    positive("window", window)?;
    if counts.is_empty() {
        return Err(invalid("counts", "need at least one window"));
    }
    let total: u64 = counts.iter().sum();
    let exposure = counts.len() as f64 * window;
    Ok(RateEstimate {
        rate_per_second: total as f64 / exposure,
        std_error: (total as f64).sqrt() / exposure,
        total_counts: total,
        exposure_seconds: exposure,
    })
}
