//! Globally adaptive Gauss–Kronrod (7/15) quadrature over a panelled interval.
//!
//! The integration range is supplied as a list of breakpoints. Every panel is
//! first evaluated with the 15-point Kronrod rule; the panel with the largest
//! error estimate is then bisected until the summed error estimate drops
//! below the requested tolerance or the interval budget is exhausted.

#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

// Kronrod abscissae on [-1, 1]; odd indices are shared with the 7-point Gauss rule.
// Digits as tabulated in QUADPACK.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Target for `error <= rel_tol * |value|`.
    pub rel_tol: f64,
    /// Absolute error that is always accepted.
    pub abs_tol: f64,
    /// Upper bound on the number of live intervals.
    pub max_intervals: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 0.0,
            max_intervals: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub intervals: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Panel {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);

    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_sum = kronrod.abs();
    let mut fv = [(0.0, 0.0); 7];

    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv[j] = (f1, f2);
        kronrod += w * (f1 + f2);
        abs_sum += w * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }

    // QUADPACK-style error scaling.
    let mean = 0.5 * kronrod;
    let mut asc = WGK[7] * (fc - mean).abs();
    for (j, &(f1, f2)) in fv.iter().enumerate() {
        asc += WGK[j] * ((f1 - mean).abs() + (f2 - mean).abs());
    }
    let value = kronrod * half;
    let asc = asc * half.abs();
    let raw = ((kronrod - gauss) * half).abs();
    let mut error = raw;
    if asc != 0.0 && raw != 0.0 {
        error = asc * (200.0 * raw / asc).powf(1.5).min(1.0);
    }
    let abs_sum = abs_sum * half.abs();
    if abs_sum > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * abs_sum);
    }
    Panel {
        lo,
        hi,
        value,
        error,
    }
}

/// Integrates `f` over `[breakpoints[0], breakpoints[last]]`, starting from the
/// panels delimited by `breakpoints` (which must be strictly increasing).
///
/// On non-convergence the partial estimate is carried in
/// [`Error::NonConvergence`].
pub fn integrate<F>(f: F, breakpoints: &[f64], options: &QuadratureOptions) -> Result<QuadratureResult>
where
    F: Fn(f64) -> f64,
{
    if breakpoints.len() < 2 {
        return Err(crate::error::invalid(
            "breakpoints",
            "need at least two breakpoints",
        ));
    }
    if breakpoints.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less)) {
        return Err(crate::error::invalid(
            "breakpoints",
            "must be strictly increasing and finite",
        ));
    }

    let mut heap: BinaryHeap<Panel> = breakpoints
        .windows(2)
        .map(|w| kronrod(&f, w[0], w[1]))
        .collect();
    let mut evaluations = 15 * heap.len();
    let mut since_resum = 0usize;
    let (mut value, mut error) = totals(&heap);

    loop {
        if error <= options.abs_tol.max(options.rel_tol * value.abs()) {
            break;
        }
        if heap.len() >= options.max_intervals {
            return Err(Error::NonConvergence {
                estimate: value,
                error_estimate: error,
                intervals: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if !(worst.lo < mid && mid < worst.hi) {
            // Interval can no longer be split in floating point.
            return Err(Error::NonConvergence {
                estimate: value,
                error_estimate: error,
                intervals: heap.len() + 1,
            });
        }
        let left = kronrod(&f, worst.lo, mid);
        let right = kronrod(&f, mid, worst.hi);
        evaluations += 30;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);

        since_resum += 1;
        if since_resum >= 4096 {
            (value, error) = totals(&heap);
            since_resum = 0;
        }
    }

    let (value, error) = totals(&heap);
    Ok(QuadratureResult {
        value,
        error_estimate: error,
        intervals: heap.len(),
        evaluations,
    })
}

fn totals(heap: &BinaryHeap<Panel>) -> (f64, f64) {
    // Sum small-to-large to limit cancellation drift.
    let mut panels: Vec<&Panel> = heap.iter().collect();
    panels.sort_by(|a, b| a.value.abs().total_cmp(&b.value.abs()));
    let value = panels.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    (value, error)
}
