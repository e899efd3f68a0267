//! Trigger-referenced sifting with a temporal filter, and the (t₀, Δt) sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stream::{channel_for_bit, TagStream};
use crate::error::{invalid, Error, Result};

/// Half-open acceptance window [t₀, t₀+Δt) after each trigger edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterWindow {
    pub t0_ns: f64,
    pub dt_ns: f64,
}

impl FilterWindow {
    pub fn new(t0_ns: f64, dt_ns: f64) -> Self {
        Self { t0_ns, dt_ns }
    }

    /// The whole trigger period.
    pub fn full(period_ps: u64) -> Self {
        Self {
            t0_ns: 0.0,
            dt_ns: period_ps as f64 * 1e-3,
        }
    }

    /// Window bounds in integer picoseconds.
    pub fn bounds_ps(&self) -> (u64, u64) {
        let lo = (self.t0_ns * 1e3).round() as u64;
        (lo, lo + (self.dt_ns * 1e3).round() as u64)
    }

    pub fn validate(&self, period_ps: u64) -> Result<()> {
        if !(self.t0_ns >= 0.0) {
            return Err(invalid(
                "t0_ns",
                format!("must be >= 0, got {}", self.t0_ns),
            ));
        }
        if !(self.dt_ns > 0.0) {
            return Err(invalid("dt_ns", format!("must be > 0, got {}", self.dt_ns)));
        }
        if self.bounds_ps().1 > period_ps {
            return Err(invalid(
                "dt_ns",
                format!(
                    "window end {} ns exceeds the trigger period",
                    self.t0_ns + self.dt_ns
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SiftCounts {
    pub n_received: u64,
    pub n_errors: u64,
    pub n_double: u64,
    pub n_empty: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiftedStats {
    pub n_received: u64,
    pub n_errors: u64,
    pub n_double: u64,
    pub n_empty: u64,
    pub sikr_bps: f64,
    pub qber: f64,
}

impl SiftedStats {
    fn from_counts(c: SiftCounts, duration_s: f64) -> Self {
        Self {
            n_received: c.n_received,
            n_errors: c.n_errors,
            n_double: c.n_double,
            n_empty: c.n_empty,
            sikr_bps: if duration_s > 0.0 {
                c.n_received as f64 / duration_s
            } else {
                0.0
            },
            qber: if c.n_received > 0 {
                c.n_errors as f64 / c.n_received as f64
            } else {
                0.0
            },
        }
    }

    pub fn total_pulses(&self) -> u64 {
        self.n_received + self.n_double + self.n_empty
    }
}

/// A click attributed to its pulse.
#[derive(Debug, Clone, Copy)]
struct Attributed {
    pulse: u64,
    offset_ps: u64,
    channel: u8,
}

fn attribute(stream: &TagStream) -> Result<Vec<Attributed>> {
    if stream.triggers.is_empty() {
        return Err(Error::Stream("stream has no trigger records".into()));
    }
    let period = stream.trigger_period_ps;
    Ok(stream
        .clicks
        .iter()
        .filter_map(|r| {
            let k = stream.triggers.pulse_of(r.timestamp_ps, period)?;
            Some(Attributed {
                pulse: k,
                offset_ps: r.timestamp_ps - stream.triggers.time(k, period),
                channel: r.channel,
            })
        })
        .collect())
}

/// Classifies one pulse's in-window clicks: `None` if empty, otherwise
/// `Some(Ok(channel))` for a conclusive click or `Some(Err(()))` for a double.
fn classify(channels: impl Iterator<Item = u8>) -> Option<std::result::Result<u8, ()>> {
    let mut seen: Option<u8> = None;
    for ch in channels {
        match seen {
            None => seen = Some(ch),
            Some(s) if s != ch => return Some(Err(())),
            _ => {}
        }
    }
    seen.map(Ok)
}

pub fn sift(stream: &TagStream, window: FilterWindow) -> Result<SiftedStats> {
    window.validate(stream.trigger_period_ps)?;
    let clicks = attribute(stream)?;
    let (lo, hi) = window.bounds_ps();
    let mut counts = SiftCounts::default();

    let mut i = 0;
    while i < clicks.len() {
        let pulse = clicks[i].pulse;
        let mut j = i;
        while j < clicks.len() && clicks[j].pulse == pulse {
            j += 1;
        }
        let in_window = clicks[i..j]
            .iter()
            .filter(|c| c.offset_ps >= lo && c.offset_ps < hi)
            .map(|c| c.channel);
        match classify(in_window) {
            Some(Ok(ch)) => {
                counts.n_received += 1;
                if ch != channel_for_bit(stream.alice.bit(pulse)) {
                    counts.n_errors += 1;
                }
            }
            Some(Err(())) => counts.n_double += 1,
            None => {}
        }
        i = j;
    }
    counts.n_empty = stream.trigger_count() - counts.n_received - counts.n_double;
    Ok(SiftedStats::from_counts(counts, stream.duration_s))
}

/// Arithmetic grid `start, start+step, …`, including `stop` when it lies
/// on the grid.
pub fn grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && stop >= start) {
        return Err(invalid("grid", format!("bad grid {start}:{stop}:{step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    // Snapped to 1e-9 so decimal steps print cleanly (5.3, not 5.300000000000001).
    Ok((0..=n)
        .map(|i| ((start + step * i as f64) * 1e9).round() / 1e9)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSweepResult {
    pub t0_grid: Vec<f64>,
    pub dt_grid: Vec<f64>,
    /// `stats[i][j]` is the sift at (`t0_grid[i]`, `dt_grid[j]`).
    pub stats: Vec<Vec<SiftedStats>>,
    pub sikr_map: Vec<Vec<f64>>,
    pub qber_map: Vec<Vec<f64>>,
    pub skr_map: Vec<Vec<f64>>,
    /// Cell with the largest SKR; ties resolve to the smallest (i, j).
    pub argmax: (usize, usize),
}

impl FilterSweepResult {
    pub fn best_window(&self) -> FilterWindow {
        let (i, j) = self.argmax;
        FilterWindow::new(self.t0_grid[i], self.dt_grid[j])
    }

    pub fn best_stats(&self) -> SiftedStats {
        let (i, j) = self.argmax;
        self.stats[i][j]
    }
}

/// Sifts every window on the grid. Pulses with a single click are answered
/// by binary search over sorted offsets; the few multi-click pulses are
/// classified directly. Cells run in parallel and the result does not depend
/// on the thread count.
pub fn sweep_filters<F>(
    stream: &TagStream,
    t0_grid: &[f64],
    dt_grid: &[f64],
    keylen_fn: F,
) -> Result<FilterSweepResult>
where
    F: Fn(&SiftedStats, f64) -> f64 + Sync,
{
    if t0_grid.is_empty() || dt_grid.is_empty() {
        return Err(invalid("grid", "empty sweep grid"));
    }
    for &t0 in t0_grid {
        for &dt in dt_grid {
            FilterWindow::new(t0, dt).validate(stream.trigger_period_ps)?;
        }
    }
    let clicks = attribute(stream)?;

    let mut correct = Vec::new();
    let mut wrong = Vec::new();
    let mut multi: Vec<(u8, Vec<(u64, u8)>)> = Vec::new();
    let mut i = 0;
    while i < clicks.len() {
        let pulse = clicks[i].pulse;
        let mut j = i;
        while j < clicks.len() && clicks[j].pulse == pulse {
            j += 1;
        }
        let right = channel_for_bit(stream.alice.bit(pulse));
        if j - i == 1 {
            let c = clicks[i];
            if c.channel == right {
                correct.push(c.offset_ps);
            } else {
                wrong.push(c.offset_ps);
            }
        } else {
            multi.push((
                right,
                clicks[i..j]
                    .iter()
                    .map(|c| (c.offset_ps, c.channel))
                    .collect(),
            ));
        }
        i = j;
    }
    correct.sort_unstable();
    wrong.sort_unstable();
    let in_range = |v: &[u64], lo: u64, hi: u64| {
        (v.partition_point(|&x| x < hi) - v.partition_point(|&x| x < lo)) as u64
    };

    let n_t0 = t0_grid.len();
    let n_dt = dt_grid.len();
    let cells: Vec<SiftedStats> = (0..n_t0 * n_dt)
        .into_par_iter()
        .map(|idx| {
            let w = FilterWindow::new(t0_grid[idx / n_dt], dt_grid[idx % n_dt]);
            let (lo, hi) = w.bounds_ps();
            let n_wrong = in_range(&wrong, lo, hi);
            let mut c = SiftCounts {
                n_received: in_range(&correct, lo, hi) + n_wrong,
                n_errors: n_wrong,
                ..Default::default()
            };
            for (right, hits) in &multi {
                let kept = hits
                    .iter()
                    .filter(|(o, _)| *o >= lo && *o < hi)
                    .map(|&(_, ch)| ch);
                match classify(kept) {
                    Some(Ok(ch)) => {
                        c.n_received += 1;
                        c.n_errors += (ch != *right) as u64;
                    }
                    Some(Err(())) => c.n_double += 1,
                    None => {}
                }
            }
            c.n_empty = stream.trigger_count() - c.n_received - c.n_double;
            SiftedStats::from_counts(c, stream.duration_s)
        })
        .collect();

    let skr: Vec<f64> = cells
        .par_iter()
        .map(|s| keylen_fn(s, stream.duration_s).max(0.0))
        .collect();

    let reshape = |f: &dyn Fn(usize) -> f64| -> Vec<Vec<f64>> {
        (0..n_t0)
            .map(|i| (0..n_dt).map(|j| f(i * n_dt + j)).collect())
            .collect()
    };
    let mut argmax = (0, 0);
    let mut best = f64::NEG_INFINITY;
    for (idx, &v) in skr.iter().enumerate() {
        if v > best {
            best = v;
            argmax = (idx / n_dt, idx % n_dt);
        }
    }
    Ok(FilterSweepResult {
        t0_grid: t0_grid.to_vec(),
        dt_grid: dt_grid.to_vec(),
        sikr_map: reshape(&|k| cells[k].sikr_bps),
        qber_map: reshape(&|k| cells[k].qber),
        skr_map: reshape(&|k| skr[k]),
        stats: (0..n_t0)
            .map(|i| cells[i * n_dt..(i + 1) * n_dt].to_vec())
            .collect(),
        argmax,
    })
}

/// The sweep grid used for the free-space link: t₀ from 0 to 4 ns and
/// Δt from 3 to 12 ns, both in 100 ps steps.
pub fn default_filter_grids() -> (Vec<f64>, Vec<f64>) {
    (
        grid(0.0, 4.0, 0.1).expect("static"),
        grid(3.0, 12.0, 0.1).expect("static"),
    )
}
