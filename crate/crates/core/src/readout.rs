//! Correlated-double-sampling readout of integrating traces.
//!
//! Each pulse is read as the difference between the mean output over a
//! baseline span before the pulse and a signal span after it, divided by the
//! per-carrier voltage step. Spans are `T0` long where the record allows and
//! are clipped at neighbouring pulses, resets and the record edges, so the
//! signal span of one pulse is the baseline span of the next when
//! `T0 = T - Delta`.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{positive, Error, Result};
use crate::noise_model::{signal_per_carrier, CdsConfig, DetectorParams};
use crate::signal_sim::Trace;

/// Half-open sample ranges between consecutive resets; empty ranges (a reset
/// at index 0) are dropped.
pub fn segment_by_resets(trace: &Trace) -> Vec<Range<usize>> {
    let mut edges = Vec::with_capacity(trace.reset_indices.len() + 2);
    edges.push(0);
    edges.extend(trace.reset_indices.iter().copied().filter(|&r| r < trace.len()));
    edges.push(trace.len());
    edges
        .windows(2)
        .map(|w| w[0]..w[1])
        .filter(|r| !r.is_empty())
        .collect()
}

/// Sample layout of one CDS read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdsWindow {
    /// First sample of the pulse.
    pub start_index: usize,
    /// Samples occupied by the pulse itself.
    pub pulse_span: usize,
    /// Samples averaged immediately before `start_index`.
    pub baseline_span: usize,
    /// Samples averaged immediately after the pulse.
    pub signal_span: usize,
}

impl CdsWindow {
    pub fn baseline(&self) -> Range<usize> {
        self.start_index - self.baseline_span..self.start_index
    }

    pub fn signal(&self) -> Range<usize> {
        let s = self.start_index + self.pulse_span;
        s..s + self.signal_span
    }

    /// Every sample the window touches.
    pub fn extent(&self) -> Range<usize> {
        self.baseline().start..self.signal().end
    }
}

/// One window per scheduled pulse.
pub fn plan_windows(trace: &Trace, cds: &CdsConfig) -> Result<Vec<CdsWindow>> {
    trace.validate()?;
    cds.validate()?;
    let pulses = trace.pulse_ranges()?;
    let t0 = ((cds.t_average() * trace.sample_rate).round() as usize).max(1);
    let resets = &trace.reset_indices;

    let mut windows = Vec::with_capacity(pulses.len());
    for (k, pulse) in pulses.iter().enumerate() {
        // Segment holding the pulse start.
        let seg_start = match resets.partition_point(|&r| r <= pulse.start) {
            0 => 0,
            i => resets[i - 1],
        };
        let seg_end = resets
            .get(resets.partition_point(|&r| r <= pulse.start))
            .copied()
            .unwrap_or(trace.len());
        if seg_end < pulse.end {
            return Err(Error::Timing(format!("a reset interrupts pulse {k} at samples {pulse:?}")));
        }
        let mut lo = seg_start;
        if k > 0 {
            lo = lo.max(pulses[k - 1].end);
        }
        let mut hi = seg_end;
        if let Some(next) = pulses.get(k + 1) {
            hi = hi.min(next.start);
        }
        let window = CdsWindow {
            start_index: pulse.start,
            pulse_span: pulse.len(),
            baseline_span: t0.min(pulse.start.saturating_sub(lo)),
            signal_span: t0.min(hi.saturating_sub(pulse.end)),
        };
        if window.baseline_span == 0 || window.signal_span == 0 {
            return Err(Error::Timing(format!(
                "pulse {k} at samples {pulse:?} has no room for a baseline or signal span"
            )));
        }
        windows.push(window);
    }
    Ok(windows)
}

/// Mean that is exact for constant input.
fn mean(xs: &[f64]) -> f64 {
    let first = xs[0];
    first + xs.iter().map(|&x| x - first).sum::<f64>() / xs.len() as f64
}

/// Signed electron-equivalent estimate per window.
pub fn cds_estimate(trace: &Trace, det: &DetectorParams, windows: &[CdsWindow]) -> Result<Vec<f64>> {
    let spc = signal_per_carrier(det)?;
    windows
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let extent = w.extent();
            if w.baseline_span == 0 || w.signal_span == 0 || extent.end > trace.len() {
                return Err(Error::Timing(format!("window {k} {extent:?} is empty or out of bounds")));
            }
            if let Some(r) = trace
                .reset_indices
                .iter()
                .find(|&&r| extent.start < r && r < extent.end)
            {
                return Err(Error::Timing(format!("window {k} {extent:?} crosses the reset at sample {r}")));
            }
            let before = mean(&trace.samples[w.baseline()]);
            let after = mean(&trace.samples[w.signal()]);
            Ok((after - before) / spc)
        })
        .collect()
}

/// Round half up, clip at zero; `None` for non-finite input.
pub fn quantize_count(raw: f64) -> Option<u64> {
    if raw.is_finite() {
        Some((raw + 0.5).floor().max(0.0) as u64)
    } else {
        None
    }
}

pub fn quantize_counts(raw: &[f64]) -> Vec<Option<u64>> {
    raw.iter().map(|&x| quantize_count(x)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowFlag {
    Ok,
    /// The estimate was NaN or infinite; its count is reported as 0.
    NonFinite,
    /// A level change outside any pulse falls inside the window.
    OffScheduleStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutResult {
    pub windows: Vec<CdsWindow>,
    pub raw_electrons: Vec<f64>,
    pub counts: Vec<u64>,
    pub flags: Vec<WindowFlag>,
}

impl ReadoutResult {
    pub fn from_raw(windows: Vec<CdsWindow>, raw_electrons: Vec<f64>) -> Self {
        let (counts, flags) = quantize_counts(&raw_electrons)
            .into_iter()
            .map(|q| match q {
                Some(c) => (c, WindowFlag::Ok),
                None => (0, WindowFlag::NonFinite),
            })
            .unzip();
        Self {
            windows,
            raw_electrons,
            counts,
            flags,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Counts of windows not flagged non-finite.
    pub fn valid_counts(&self) -> Vec<u64> {
        self.counts
            .iter()
            .zip(&self.flags)
            .filter(|(_, f)| **f != WindowFlag::NonFinite)
            .map(|(c, _)| *c)
            .collect()
    }

    /// Marks windows containing an off-schedule step.
    pub fn flag_off_schedule(&mut self, steps: &[Step]) {
        for (w, flag) in self.windows.iter().zip(self.flags.iter_mut()) {
            if *flag == WindowFlag::NonFinite {
                continue;
            }
            let extent = w.extent();
            if steps.iter().any(|s| s.off_schedule && extent.contains(&s.index)) {
                *flag = WindowFlag::OffScheduleStep;
            }
        }
    }
}

/// Plans windows from the trace's schedule, estimates and quantizes.
pub fn readout(trace: &Trace, det: &DetectorParams, cds: &CdsConfig) -> Result<ReadoutResult> {
    let windows = plan_windows(trace, cds)?;
    let raw = cds_estimate(trace, det, &windows)?;
    Ok(ReadoutResult::from_raw(windows, raw))
}

/// A detected level change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// First sample of the new level.
    pub index: usize,
    pub height_electrons: f64,
    /// True when the change does not coincide with any scheduled pulse.
    pub off_schedule: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaircaseOptions {
    /// Steps smaller than this (in electrons) are suppressed; adjacent levels
    /// closer than half of it are merged.
    pub min_step: f64,
    /// Shortest level kept, in samples.
    pub min_plateau: usize,
    /// Samples on each side of a change excluded when measuring levels, and
    /// the slack allowed when matching a change to a pulse.
    pub guard: usize,
}

impl StaircaseOptions {
    /// Guard of one pulse width when the trace carries a schedule.
    pub fn for_trace(trace: &Trace, min_step: f64) -> Self {
        let guard = trace
            .schedule
            .map(|s| ((s.pulse_width * trace.sample_rate).round() as usize).max(1))
            .unwrap_or(1);
        Self {
            min_step,
            min_plateau: 2 * guard + 1,
            guard,
        }
    }
}

pub fn extract_staircase(trace: &Trace, det: &DetectorParams, min_step: f64) -> Result<Vec<Step>> {
    extract_staircase_with(trace, det, &StaircaseOptions::for_trace(trace, min_step))
}

/// Greedy piecewise-constant fit per reset segment.
///
/// Runs of identical samples seed the fit. Levels shorter than `min_plateau`
/// are merged into their closest neighbour, then adjacent levels closer than
/// `min_step / 2` are merged, smallest difference first. Each remaining
/// boundary is reported with its height measured on guarded plateaus.
pub fn extract_staircase_with(trace: &Trace, det: &DetectorParams, options: &StaircaseOptions) -> Result<Vec<Step>> {
    positive("min_step", options.min_step)?;
    trace.validate()?;
    let spc = signal_per_carrier(det)?;
    let pulses = match trace.schedule {
        Some(_) => Some(trace.pulse_ranges()?),
        None => None,
    };
    let g = options.guard;

    let mut steps = Vec::new();
    for seg in segment_by_resets(trace) {
        let x: Vec<f64> = trace.samples[seg.clone()].iter().map(|v| v / spc).collect();
        let levels = fit_levels(&x, options.min_plateau, options.min_step / 2.0);
        for pair in 0..levels.len().saturating_sub(1) {
            let (left, right) = (&levels[pair], &levels[pair + 1]);
            let height = guarded_mean(&x, right, pair + 2 < levels.len(), true, g)
                - guarded_mean(&x, left, true, pair > 0, g);
            if height.abs() < options.min_step {
                continue;
            }
            let index = seg.start + right.start;
            let off_schedule = pulses.as_ref().is_some_and(|ps| {
                !ps.iter()
                    .any(|p| p.start.saturating_sub(g) <= index && index <= p.end + g)
            });
            steps.push(Step {
                index,
                height_electrons: height,
                off_schedule,
            });
        }
    }
    Ok(steps)
}

fn guarded_mean(x: &[f64], level: &Range<usize>, trim_end: bool, trim_start: bool, g: usize) -> f64 {
    let start = if trim_start { level.start + g } else { level.start };
    let end = if trim_end { level.end.saturating_sub(g) } else { level.end };
    if start < end {
        mean(&x[start..end])
    } else {
        mean(&x[level.clone()])
    }
}

#[derive(Debug, Clone, Copy)]
struct Block {
    start: usize,
    len: usize,
    sum: f64,
    prev: Option<usize>,
    next: Option<usize>,
    version: u32,
    alive: bool,
}

impl Block {
    fn mean(&self) -> f64 {
        self.sum / self.len as f64
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    cost: f64,
    left: usize,
    right: usize,
    left_version: u32,
    right_version: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.left.cmp(&other.left))
    }
}

struct Levels {
    blocks: Vec<Block>,
}

impl Levels {
    fn from_runs(x: &[f64]) -> Self {
        let mut blocks: Vec<Block> = Vec::new();
        for (i, &v) in x.iter().enumerate() {
            match blocks.last_mut() {
                Some(b) if x[b.start] == v => {
                    b.len += 1;
                    b.sum += v;
                }
                _ => {
                    let id = blocks.len();
                    if let Some(b) = blocks.last_mut() {
                        b.next = Some(id);
                    }
                    blocks.push(Block {
                        start: i,
                        len: 1,
                        sum: v,
                        prev: id.checked_sub(1),
                        next: None,
                        version: 0,
                        alive: true,
                    });
                }
            }
        }
        Self { blocks }
    }

    fn candidate(&self, left: usize, right: usize) -> Candidate {
        let (l, r) = (&self.blocks[left], &self.blocks[right]);
        Candidate {
            cost: (l.mean() - r.mean()).abs(),
            left,
            right,
            left_version: l.version,
            right_version: r.version,
        }
    }

    fn is_current(&self, c: &Candidate) -> bool {
        let (l, r) = (&self.blocks[c.left], &self.blocks[c.right]);
        l.alive && r.alive && l.version == c.left_version && r.version == c.right_version
    }

    fn merge(&mut self, left: usize, right: usize) {
        let r = self.blocks[right];
        let l = &mut self.blocks[left];
        l.len += r.len;
        l.sum += r.sum;
        l.next = r.next;
        l.version += 1;
        self.blocks[right].alive = false;
        if let Some(n) = r.next {
            self.blocks[n].prev = Some(left);
        }
    }

    /// Repeatedly merges the cheapest eligible adjacent pair.
    fn merge_while(&mut self, eligible: impl Fn(&Block, &Block, f64) -> bool) {
        let mut heap = BinaryHeap::new();
        for (i, b) in self.blocks.iter().enumerate() {
            if let Some(n) = b.next {
                let c = self.candidate(i, n);
                if eligible(b, &self.blocks[n], c.cost) {
                    heap.push(Reverse(c));
                }
            }
        }
        while let Some(Reverse(c)) = heap.pop() {
            if !self.is_current(&c) {
                continue;
            }
            self.merge(c.left, c.right);
            let merged = self.blocks[c.left];
            let neighbours = [merged.prev.map(|p| (p, c.left)), merged.next.map(|n| (c.left, n))];
            for (a, b) in neighbours.into_iter().flatten() {
                let cand = self.candidate(a, b);
                if eligible(&self.blocks[a], &self.blocks[b], cand.cost) {
                    heap.push(Reverse(cand));
                }
            }
        }
    }

    fn ranges(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut cur = self.blocks.first().map(|_| 0);
        while let Some(i) = cur {
            let b = &self.blocks[i];
            out.push(b.start..b.start + b.len);
            cur = b.next;
        }
        out
    }
}

fn fit_levels(x: &[f64], min_plateau: usize, merge_below: f64) -> Vec<Range<usize>> {
    if x.is_empty() {
        return Vec::new();
    }
    let mut levels = Levels::from_runs(x);
    levels.merge_while(|a, b, _| a.len < min_plateau || b.len < min_plateau);
    levels.merge_while(|_, _, cost| cost < merge_below);
    levels.ranges()
}
