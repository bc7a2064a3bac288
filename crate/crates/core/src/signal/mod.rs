//! Raw traces to spike matrices: filtering, threshold detection and window
//! extraction.

mod filter;

pub use filter::{design_filter, filtfilt, Biquad, FilterKind, FilterSpec, SosFilter};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default detection threshold in units of the robust noise estimate.
pub const DEFAULT_K_SIGMA: f64 = 4.0;
/// Default refractory period.
pub const DEFAULT_REFRACTORY_MS: f64 = 1.5;
/// Default extraction window and peak position inside it.
pub const DEFAULT_WINDOW: usize = 64;
pub const DEFAULT_ALIGN_OFFSET: usize = 20;

/// A single-channel recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub samples: Vec<f64>,
    pub fs_hz: f64,
}

impl Trace {
    pub fn new(samples: Vec<f64>, fs_hz: f64) -> Result<Self> {
        if !(fs_hz > 0.0) || !fs_hz.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sampling rate must be positive, got {fs_hz}"
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Trace { samples, fs_hz })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ms_to_samples(&self, ms: f64) -> usize {
        (ms * 1e-3 * self.fs_hz).round().max(1.0) as usize
    }
}

/// Detected spikes, one waveform per column (d × n), with the sample index
/// of each aligned peak.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeMatrix {
    data: DMatrix<f64>,
    times: Vec<usize>,
}

impl SpikeMatrix {
    pub fn new(data: DMatrix<f64>, times: Vec<usize>) -> Result<Self> {
        if data.nrows() < 2 || data.ncols() < 1 {
            return Err(Error::DimensionMismatch(format!(
                "spike matrix needs d >= 2 and n >= 1, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if times.len() != data.ncols() {
            return Err(Error::LengthMismatch {
                left: times.len(),
                right: data.ncols(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("spike times must be strictly increasing".into()));
        }
        Ok(SpikeMatrix { data, times })
    }

    /// Spike matrix without known times; column indices stand in for them.
    pub fn from_columns(data: DMatrix<f64>) -> Result<Self> {
        let n = data.ncols();
        Self::new(data, (0..n).collect())
    }

    /// One waveform per row, as read from a spikes CSV.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::DimensionMismatch(format!(
                "row {i} has {} values, expected {d}",
                r.len()
            )));
        }
        Self::from_columns(DMatrix::from_fn(d, n, |i, j| rows[j][i]))
    }

    pub fn d(&self) -> usize {
        self.data.nrows()
    }

    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn times(&self) -> &[usize] {
        &self.times
    }

    pub fn with_times(self, times: Vec<usize>) -> Result<Self> {
        Self::new(self.data, times)
    }

    /// Waveform rows (n × d), the layout used by the CSV files.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.column_iter().map(|c| c.iter().copied().collect()).collect()
    }
}

/// Robust noise level `median(|x|) / 0.6745`.
pub fn noise_sigma(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut mags: Vec<f64> = samples.iter().map(|v| v.abs()).collect();
    let mid = mags.len() / 2;
    let (_, m, _) = mags.select_nth_unstable_by(mid, f64::total_cmp);
    let mut median = *m;
    if mags.len().is_multiple_of(2) {
        let lower = mags[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        median = 0.5 * (median + lower);
    }
    median / 0.6745
}

/// Peaks of `|x|` above `k_sigma · noise_sigma(x)`, at least
/// `refractory_samples` apart. Within a refractory window the larger peak
/// wins; both polarities are detected.
pub fn detect_spikes(trace: &Trace, k_sigma: f64, refractory_samples: usize) -> Vec<usize> {
    let x = &trace.samples;
    let threshold = k_sigma * noise_sigma(x);
    let mut peaks: Vec<(usize, f64)> = Vec::new();
    let mut i = 0;
    while i < x.len() {
        if x[i].abs() <= threshold {
            i += 1;
            continue;
        }
        let mut best = i;
        let mut j = i;
        while j < x.len() && x[j].abs() > threshold {
            if x[j].abs() > x[best].abs() {
                best = j;
            }
            j += 1;
        }
        let mag = x[best].abs();
        match peaks.last_mut() {
            Some(last) if best - last.0 < refractory_samples => {
                if mag > last.1 {
                    *last = (best, mag);
                }
            }
            _ => peaks.push((best, mag)),
        }
        i = j;
    }
    peaks.into_iter().map(|(t, _)| t).collect()
}

/// Result of [`extract_waveforms`].
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub spikes: SpikeMatrix,
    /// Spikes dropped for lack of margin at the trace edges.
    pub dropped: usize,
}

/// Cuts `window` samples around each time so that the peak lands on row
/// `align_offset`. Times are sorted and de-duplicated first; spikes too close
/// to either edge are dropped and counted.
pub fn extract_waveforms(trace: &Trace, times: &[usize], window: usize, align_offset: usize) -> Result<Extraction> {
    if window < 2 || align_offset >= window {
        return Err(Error::InvalidArgument(format!(
            "need window >= 2 and align_offset < window, got window {window}, offset {align_offset}"
        )));
    }
    let mut sorted = times.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let len = trace.len();
    let (kept, dropped): (Vec<usize>, Vec<usize>) = sorted
        .into_iter()
        .partition(|&t| t >= align_offset && t - align_offset + window <= len);
    if kept.is_empty() {
        return Err(Error::DegenerateData(format!(
            "no spike has {window} samples of margin ({} dropped)",
            dropped.len()
        )));
    }
    let data = DMatrix::from_fn(window, kept.len(), |i, j| trace.samples[kept[j] - align_offset + i]);
    Ok(Extraction {
        spikes: SpikeMatrix::new(data, kept)?,
        dropped: dropped.len(),
    })
}
