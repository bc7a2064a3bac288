//! Ground-truth synthetic spikes.
//!
//! Templates are sums of Gaussian lobes: a unit-amplitude main lobe at the
//! alignment row, an opposite-polarity after-hyperpolarization lobe and an
//! optional small pre-lobe. Spikes are templates plus noise whose standard
//! deviation is `noise_level` times the template peak amplitude.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{SpikeMatrix, Trace, DEFAULT_ALIGN_OFFSET, DEFAULT_WINDOW};
use crate::solver::{derive_seed, rng_from_seed, SortRng};

/// Largest pairwise cosine similarity allowed between easy-mode templates.
pub const EASY_MAX_SIMILARITY: f64 = 0.7;
/// Smallest similarity of the near-duplicate pair in difficult mode.
pub const DIFFICULT_MIN_SIMILARITY: f64 = 0.9;

const MAX_DRAWS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    #[default]
    Easy,
    Difficult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseModel {
    #[default]
    White,
    /// Second-order autoregressive noise `e_t = a1 e_{t-1} + a2 e_{t-2} + u_t`,
    /// rescaled to the requested standard deviation.
    Ar2 { a1: f64, a2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub d: usize,
    pub n_units: usize,
    /// Spikes per unit.
    pub n_spikes: usize,
    /// Noise standard deviation relative to the template peak amplitude.
    pub noise_level: f64,
    pub difficulty: Difficulty,
    pub overlap_fraction: f64,
    pub fs_hz: f64,
    pub seed: u64,
    /// Template peak amplitude.
    pub amplitude: f64,
    pub noise_model: NoiseModel,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            d: DEFAULT_WINDOW,
            n_units: 3,
            n_spikes: 300,
            noise_level: 0.1,
            difficulty: Difficulty::Easy,
            overlap_fraction: 0.0,
            fs_hz: 24_000.0,
            seed: 42,
            amplitude: 1.0,
            noise_model: NoiseModel::White,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.d < 8 {
            return bad(format!("window d = {} too short (need >= 8)", self.d));
        }
        if self.n_units < 2 {
            return bad(format!("need at least 2 units, got {}", self.n_units));
        }
        if !(self.noise_level >= 0.0) || !self.noise_level.is_finite() {
            return bad(format!("noise level must be >= 0, got {}", self.noise_level));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return bad(format!(
                "overlap fraction must be in [0, 1), got {}",
                self.overlap_fraction
            ));
        }
        if !(self.fs_hz > 0.0) || !(self.amplitude > 0.0) {
            return bad("sampling rate and amplitude must be positive".into());
        }
        if let NoiseModel::Ar2 { a1, a2 } = self.noise_model {
            if !(a2.abs() < 1.0 && a1 + a2 < 1.0 && a2 - a1 < 1.0) {
                return bad(format!("AR(2) coefficients ({a1}, {a2}) are not stationary"));
            }
        }
        Ok(())
    }

    /// Row of the template peak, scaled from 20 of 64.
    pub fn peak_index(&self) -> usize {
        peak_index(self.d)
    }
}

pub fn peak_index(d: usize) -> usize {
    ((d * DEFAULT_ALIGN_OFFSET) as f64 / DEFAULT_WINDOW as f64).round() as usize
}

/// A second unit's template superimposed on a spike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overlap {
    pub unit: usize,
    /// Offset of the partner's peak relative to this spike's peak, in samples.
    pub lag: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub time: usize,
    pub unit: usize,
    pub overlap: Option<Overlap>,
}

/// Spikes with whatever ground truth is known about them.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub spikes: SpikeMatrix,
    pub labels: Option<Vec<usize>>,
    pub overlaps: Vec<Option<Overlap>>,
    pub templates: Option<DMatrix<f64>>,
}

impl SynthDataset {
    pub fn times(&self) -> &[usize] {
        self.spikes.times()
    }

    pub fn overlap_flags(&self) -> Vec<bool> {
        self.overlaps.iter().map(Option::is_some).collect()
    }

    /// Ground-truth labels, or an error for datasets that carry none.
    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("dataset has no ground-truth labels".into()))
    }

    pub fn events(&self) -> Result<Vec<SpikeEvent>> {
        let labels = self.require_labels()?;
        Ok(self
            .times()
            .iter()
            .zip(labels)
            .zip(&self.overlaps)
            .map(|((&time, &unit), &overlap)| SpikeEvent { time, unit, overlap })
            .collect())
    }
}

#[derive(Debug, Clone, Copy)]
struct Lobe {
    amp: f64,
    centre: f64,
    width: f64,
}

fn render_lobes(d: usize, lobes: &[Lobe]) -> Vec<f64> {
    (0..d)
        .map(|t| {
            lobes
                .iter()
                .map(|l| l.amp * (-(t as f64 - l.centre).powi(2) / (2.0 * l.width * l.width)).exp())
                .sum()
        })
        .collect()
}

/// Normalizes to unit peak; `None` unless the peak sits exactly at `peak`.
fn finish(mut t: Vec<f64>, peak: usize) -> Option<Vec<f64>> {
    let (imax, vmax) = t.iter().enumerate().fold(
        (0, 0.0f64),
        |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc },
    );
    if imax != peak || vmax <= 0.0 {
        return None;
    }
    t.iter_mut().for_each(|v| *v /= vmax);
    Some(t)
}

#[derive(Debug, Clone, Copy)]
struct Shape {
    polarity: f64,
    main_width: f64,
    after_amp: f64,
    after_delay: f64,
    after_width: f64,
    pre_amp: f64,
    pre_delay: f64,
}

impl Shape {
    fn draw(rng: &mut SortRng, d: usize) -> Shape {
        let s = d as f64 / 64.0;
        Shape {
            polarity: if rng.random::<f64>() < 0.25 { 1.0 } else { -1.0 },
            main_width: rng.random_range(0.8..3.5) * s,
            after_amp: rng.random_range(0.1..0.8),
            after_delay: rng.random_range(4.0..18.0) * s,
            after_width: rng.random_range(1.5..9.0) * s,
            pre_amp: rng.random_range(0.0..0.4),
            pre_delay: rng.random_range(3.0..8.0) * s,
        }
    }

    fn jitter(&self, rng: &mut SortRng, d: usize) -> Shape {
        let s = d as f64 / 64.0;
        Shape {
            main_width: (self.main_width * rng.random_range(0.85..1.15)).max(0.5 * s),
            after_amp: (self.after_amp + rng.random_range(-0.1..0.1)).clamp(0.05, 0.85),
            after_delay: self.after_delay + rng.random_range(-2.0..2.0) * s,
            after_width: (self.after_width * rng.random_range(0.8..1.2)).max(1.0 * s),
            pre_amp: (self.pre_amp + rng.random_range(-0.05..0.05)).clamp(0.0, 0.45),
            ..*self
        }
    }

    fn render(&self, d: usize, peak: usize) -> Option<Vec<f64>> {
        let p = peak as f64;
        let lobes = [
            Lobe {
                amp: self.polarity,
                centre: p,
                width: self.main_width,
            },
            Lobe {
                amp: -self.polarity * self.after_amp,
                centre: p + self.after_delay,
                width: self.after_width,
            },
            Lobe {
                amp: -self.polarity * self.pre_amp,
                centre: p - self.pre_delay,
                width: 0.6 * self.pre_delay,
            },
        ];
        finish(render_lobes(d, &lobes), peak)
    }
}

/// Cosine similarity of two waveforms.
pub fn similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// `d × n_units` unit-peak templates, each peaking at [`peak_index`].
pub fn make_templates(spec: &SynthSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let (d, k) = (spec.d, spec.n_units);
    let peak = spec.peak_index();
    let mut rng = rng_from_seed(derive_seed(spec.seed, 0));
    let mut units: Vec<Vec<f64>> = Vec::with_capacity(k);

    let fits = |cand: &[f64], units: &[Vec<f64>], max_sim: f64| units.iter().all(|u| similarity(cand, u) <= max_sim);

    match spec.difficulty {
        Difficulty::Easy => {
            let mut draws = 0;
            while units.len() < k {
                draws += 1;
                if draws > MAX_DRAWS {
                    return Err(Error::InvalidArgument(format!(
                        "could not draw {k} templates with similarity <= {EASY_MAX_SIMILARITY}"
                    )));
                }
                if let Some(t) = Shape::draw(&mut rng, d).render(d, peak) {
                    if fits(&t, &units, EASY_MAX_SIMILARITY) {
                        units.push(t);
                    }
                }
            }
        }
        Difficulty::Difficult => {
            let base = loop {
                let shape = Shape::draw(&mut rng, d);
                if let Some(t) = shape.render(d, peak) {
                    break (shape, t);
                }
            };
            units.push(base.1.clone());
            let mut draws = 0;
            while units.len() < k {
                draws += 1;
                if draws > MAX_DRAWS {
                    return Err(Error::InvalidArgument(format!(
                        "could not draw {k} difficult templates"
                    )));
                }
                let Some(t) = base.0.jitter(&mut rng, d).render(d, peak) else {
                    continue;
                };
                let distinct = fits(&t, &units, 0.995);
                let close = similarity(&t, &units[0]) >= DIFFICULT_MIN_SIMILARITY;
                if distinct && (close || units.len() > 1) {
                    units.push(t);
                }
            }
        }
    }
    let mut out = DMatrix::from_fn(d, k, |i, j| units[j][i]);
    out *= spec.amplitude;
    Ok(out)
}

fn noise_samples(model: NoiseModel, sigma: f64, len: usize, rng: &mut SortRng) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; len];
    }
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    match model {
        NoiseModel::White => (0..len).map(|_| sigma * unit.sample(rng)).collect(),
        NoiseModel::Ar2 { a1, a2 } => {
            let var = (1.0 - a2) / ((1.0 + a2) * ((1.0 - a2).powi(2) - a1 * a1));
            let scale = sigma / var.sqrt();
            let burn = 200;
            let (mut e1, mut e2) = (0.0, 0.0);
            let mut out = Vec::with_capacity(len);
            for i in 0..len + burn {
                let e = a1 * e1 + a2 * e2 + unit.sample(rng);
                e2 = e1;
                e1 = e;
                if i >= burn {
                    out.push(scale * e);
                }
            }
            out
        }
    }
}

fn add_shifted(target: &mut [f64], template: impl Iterator<Item = f64>, start: i64) {
    for (i, v) in template.enumerate() {
        let pos = start + i as i64;
        if pos >= 0 && (pos as usize) < target.len() {
            target[pos as usize] += v;
        }
    }
}

/// Draws the labelled spike set described by `spec`.
pub fn synthesize_spikes(spec: &SynthSpec) -> Result<SynthDataset> {
    let templates = make_templates(spec)?;
    let (d, k) = (spec.d, spec.n_units);
    let n = k * spec.n_spikes;
    if n == 0 {
        return Err(Error::InvalidArgument("dataset would contain no spikes".into()));
    }
    let mut rng = rng_from_seed(derive_seed(spec.seed, 1));

    let mut labels: Vec<usize> = (0..k).flat_map(|u| std::iter::repeat_n(u, spec.n_spikes)).collect();
    labels.shuffle(&mut rng);

    let mut times = Vec::with_capacity(n);
    let mut t = 2 * d;
    for _ in 0..n {
        times.push(t);
        t += 2 * d + rng.random_range(0..d);
    }

    let max_lag = (d / 4) as i64;
    let overlaps: Vec<Option<Overlap>> = labels
        .iter()
        .map(|&u| {
            (rng.random::<f64>() < spec.overlap_fraction).then(|| {
                let other = rng.random_range(0..k - 1);
                Overlap {
                    unit: if other >= u { other + 1 } else { other },
                    lag: rng.random_range(-max_lag..=max_lag),
                }
            })
        })
        .collect();

    let sigma = spec.noise_level * spec.amplitude;
    let mut data = DMatrix::zeros(d, n);
    for j in 0..n {
        let mut col: Vec<f64> = templates.column(labels[j]).iter().copied().collect();
        if let Some(o) = overlaps[j] {
            add_shifted(&mut col, templates.column(o.unit).iter().copied(), o.lag);
        }
        let noise = noise_samples(spec.noise_model, sigma, d, &mut rng);
        for i in 0..d {
            data[(i, j)] = col[i] + noise[i];
        }
    }

    Ok(SynthDataset {
        spikes: SpikeMatrix::new(data, times)?,
        labels: Some(labels),
        overlaps,
        templates: Some(templates),
    })
}

/// Continuous trace with the templates placed so their peaks land on the
/// event times, over a noise floor of the spec's noise level.
pub fn render_trace(spec: &SynthSpec, templates: &DMatrix<f64>, events: &[SpikeEvent]) -> Result<Trace> {
    spec.validate()?;
    let d = templates.nrows();
    let peak = peak_index(d) as i64;
    let end = events.iter().map(|e| e.time + 2 * d).max().unwrap_or(0);
    let len = end.max(10 * d);
    let mut rng = rng_from_seed(derive_seed(spec.seed, 2));
    let mut samples = noise_samples(spec.noise_model, spec.noise_level * spec.amplitude, len, &mut rng);
    for e in events {
        if e.unit >= templates.ncols() {
            return Err(Error::InvalidArgument(format!("event unit {} has no template", e.unit)));
        }
        let start = e.time as i64 - peak;
        add_shifted(&mut samples, templates.column(e.unit).iter().copied(), start);
        if let Some(o) = e.overlap {
            add_shifted(&mut samples, templates.column(o.unit).iter().copied(), start + o.lag);
        }
    }
    Trace::new(samples, spec.fs_hz)
}
