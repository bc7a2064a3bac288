//! Butterworth design as cascaded second-order sections, and zero-phase
//! forward/backward application.
//!
//! Poles of the analog prototype sit at `exp(iπ(2k + N + 1) / 2N)`. They are
//! mapped to highpass or bandpass with the usual frequency transformations
//! on prewarped edges, then to the z-plane with the bilinear transform. Each
//! section is normalized to unit gain at the reference frequency (Nyquist
//! for highpass, the geometric band centre for bandpass) so high orders do
//! not under- or overflow.

use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use super::Trace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Bandpass,
    Highpass,
}

/// Requested filter. For bandpass, `order` is the prototype order, so the
/// realized filter has `2 * order` poles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub low_hz: f64,
    pub high_hz: Option<f64>,
    pub order: usize,
}

impl FilterSpec {
    pub fn bandpass(low_hz: f64, high_hz: f64, order: usize) -> Self {
        FilterSpec {
            kind: FilterKind::Bandpass,
            low_hz,
            high_hz: Some(high_hz),
            order,
        }
    }

    pub fn highpass(cutoff_hz: f64, order: usize) -> Self {
        FilterSpec {
            kind: FilterKind::Highpass,
            low_hz: cutoff_hz,
            high_hz: None,
            order,
        }
    }
}

impl Default for FilterSpec {
    /// 300–6000 Hz bandpass, prototype order 4.
    fn default() -> Self {
        FilterSpec::bandpass(300.0, 6000.0, 4)
    }
}

/// One biquad, `a[0]` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z: Complex<f64>) -> Complex<f64> {
        let zi = z.inv();
        let zi2 = zi * zi;
        (zi2 * self.b[2] + zi * self.b[1] + self.b[0]) / (zi2 * self.a[2] + zi * self.a[1] + self.a[0])
    }

    /// Roots of `z² + a1 z + a2` (a first-order section has `a2 = 0`, giving a
    /// spurious root at 0 which is harmless for stability checks).
    fn poles(&self) -> [Complex<f64>; 2] {
        let (a1, a2) = (self.a[1], self.a[2]);
        let disc = Complex::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        [(-disc - a1) * 0.5, (disc - a1) * 0.5]
    }

    /// Initial state for a unit step input in steady state (transposed
    /// direct form II).
    fn step_state(&self) -> [f64; 2] {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        // (I - Aᵀ) z = b[1:] - a[1:] b0 with companion A.
        let (m00, m01, m10, m11) = (1.0 + a1, -1.0, a2, 1.0);
        let (r0, r1) = (b1 - a1 * b0, b2 - a2 * b0);
        let det = m00 * m11 - m01 * m10;
        [(r0 * m11 - m01 * r1) / det, (m00 * r1 - m10 * r0) / det]
    }

    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }
}

/// A stable cascade of biquads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
    /// Number of poles of the realized filter.
    pub order: usize,
}

impl SosFilter {
    /// Complex gain at `freq_hz`.
    pub fn response(&self, freq_hz: f64, fs_hz: f64) -> Complex<f64> {
        let z = Complex::from_polar(1.0, 2.0 * PI * freq_hz / fs_hz);
        self.sections
            .iter()
            .fold(Complex::new(1.0, 0.0), |acc, s| acc * s.response(z))
    }

    pub fn magnitude(&self, freq_hz: f64, fs_hz: f64) -> f64 {
        self.response(freq_hz, fs_hz).norm()
    }

    pub fn poles(&self) -> Vec<Complex<f64>> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    /// Causal filtering with an optional initial state per section.
    fn run(&self, x: &mut [f64], init: Option<&[[f64; 2]]>) {
        for (k, s) in self.sections.iter().enumerate() {
            let [mut z0, mut z1] = init.map(|z| z[k]).unwrap_or([0.0, 0.0]);
            let [b0, b1, b2] = s.b;
            let [_, a1, a2] = s.a;
            for v in x.iter_mut() {
                let input = *v;
                let y = b0 * input + z0;
                z0 = b1 * input - a1 * y + z1;
                z1 = b2 * input - a2 * y;
                *v = y;
            }
        }
    }

    /// Per-section steady-state state for a unit step at the cascade input.
    fn step_states(&self) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let z = s.step_state();
                let out = [z[0] * scale, z[1] * scale];
                scale *= s.dc_gain();
                out
            })
            .collect()
    }

    /// Padding length used by [`filtfilt`].
    pub fn pad_len(&self) -> usize {
        3 * self.order
    }
}

fn prewarp(freq_hz: f64, fs_hz: f64) -> f64 {
    2.0 * fs_hz * (PI * freq_hz / fs_hz).tan()
}

fn bilinear(s: Complex<f64>, fs_hz: f64) -> Complex<f64> {
    let k = 2.0 * fs_hz;
    (s + k) / (-s + k)
}

fn prototype_poles(order: usize) -> Vec<Complex<f64>> {
    let n = order as f64;
    (0..order)
        .map(|k| Complex::from_polar(1.0, PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n)))
        .collect()
}

/// Groups z-plane poles into denominators: one per conjugate pair, real
/// poles paired up, a leftover real pole as a first-order section.
fn pole_sections(poles: &[Complex<f64>]) -> Vec<[f64; 3]> {
    let tol = 1e-12;
    let mut out = Vec::new();
    let mut reals = Vec::new();
    for p in poles {
        if p.im > tol {
            out.push([1.0, -2.0 * p.re, p.norm_sqr()]);
        } else if p.im.abs() <= tol {
            reals.push(p.re);
        }
    }
    reals.sort_by(|a, b| b.total_cmp(a));
    for pair in reals.chunks(2) {
        match pair {
            [r1, r2] => out.push([1.0, -(r1 + r2), r1 * r2]),
            [r] => out.push([1.0, -r, 0.0]),
            _ => unreachable!(),
        }
    }
    out
}

/// Designs the Butterworth filter described by `spec` at sampling rate `fs_hz`.
pub fn design_filter(spec: &FilterSpec, fs_hz: f64) -> Result<SosFilter> {
    if !(fs_hz > 0.0) || !fs_hz.is_finite() {
        return Err(Error::InvalidBand(format!(
            "sampling rate must be positive, got {fs_hz}"
        )));
    }
    if spec.order == 0 {
        return Err(Error::InvalidBand("filter order must be at least 1".into()));
    }
    let nyquist = fs_hz / 2.0;
    if !(spec.low_hz > 0.0) || spec.low_hz >= nyquist {
        return Err(Error::InvalidBand(format!(
            "low cutoff {} Hz must lie in (0, {nyquist}) Hz",
            spec.low_hz
        )));
    }
    let proto = prototype_poles(spec.order);

    match spec.kind {
        FilterKind::Highpass => {
            let wc = prewarp(spec.low_hz, fs_hz);
            let poles: Vec<_> = proto.iter().map(|p| bilinear(p.inv() * wc, fs_hz)).collect();
            let z_ref = Complex::new(-1.0, 0.0);
            let sections = pole_sections(&poles)
                .into_iter()
                .map(|a| {
                    let b = if a[2] == 0.0 {
                        [1.0, -1.0, 0.0]
                    } else {
                        [1.0, -2.0, 1.0]
                    };
                    normalize(Biquad { b, a }, z_ref)
                })
                .collect();
            Ok(SosFilter {
                sections,
                order: spec.order,
            })
        }
        FilterKind::Bandpass => {
            let high = spec
                .high_hz
                .ok_or_else(|| Error::InvalidBand("bandpass needs a high cutoff".into()))?;
            if high >= nyquist {
                return Err(Error::InvalidBand(format!(
                    "high cutoff {high} Hz must be below Nyquist {nyquist} Hz"
                )));
            }
            if spec.low_hz >= high {
                return Err(Error::InvalidBand(format!(
                    "low cutoff {} Hz must be below high cutoff {high} Hz",
                    spec.low_hz
                )));
            }
            let wl = prewarp(spec.low_hz, fs_hz);
            let wh = prewarp(high, fs_hz);
            let bw = wh - wl;
            let w0sq = wl * wh;
            let mut poles = Vec::with_capacity(2 * spec.order);
            for p in &proto {
                let half = *p * (bw / 2.0);
                let root = (half * half - w0sq).sqrt();
                poles.push(bilinear(half + root, fs_hz));
                poles.push(bilinear(half - root, fs_hz));
            }
            // Gain reference at the digital image of the analog centre frequency.
            let w_center = 2.0 * (w0sq.sqrt() / (2.0 * fs_hz)).atan();
            let z_ref = Complex::from_polar(1.0, w_center);
            let sections = pole_sections(&poles)
                .into_iter()
                .map(|a| normalize(Biquad { b: [1.0, 0.0, -1.0], a }, z_ref))
                .collect();
            Ok(SosFilter {
                sections,
                order: 2 * spec.order,
            })
        }
    }
}

fn normalize(mut s: Biquad, z_ref: Complex<f64>) -> Biquad {
    let g = s.response(z_ref).norm();
    if g > 0.0 && g.is_finite() {
        for b in &mut s.b {
            *b /= g;
        }
    }
    s
}

/// Zero-phase filtering: forward then backward pass over an odd-symmetric
/// extension of `3 * order` samples at each end, with steady-state initial
/// conditions.
pub fn filtfilt(filter: &SosFilter, trace: &Trace) -> Result<Trace> {
    let x = &trace.samples;
    let pad = filter.pad_len();
    if x.len() <= pad {
        return Err(Error::TooShort { len: x.len(), min: pad });
    }
    let n = x.len();
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let unit = filter.step_states();
    let scaled = |v: f64| unit.iter().map(|z| [z[0] * v, z[1] * v]).collect::<Vec<_>>();

    let init = scaled(ext[0]);
    filter.run(&mut ext, Some(&init));
    ext.reverse();
    let init = scaled(ext[0]);
    filter.run(&mut ext, Some(&init));
    ext.reverse();

    Ok(Trace {
        samples: ext[pad..pad + n].to_vec(),
        fs_hz: trace.fs_hz,
    })
}
