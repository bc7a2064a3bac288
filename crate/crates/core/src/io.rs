//! File formats.
//!
//! - Trace: raw little-endian f64 samples with a JSON sidecar `{"fs_hz": ..}`
//!   next to it (same stem, `.json` extension), or a one-column CSV.
//! - Spikes CSV: one waveform per row, `d` comma-separated values, optional
//!   header line. Values are written in Rust's shortest round-trip form.
//! - Labels / times CSV: one non-negative integer per line.
//! - Manifest JSON: generator spec, file names and SHA-256 checksums.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{Overlap, SynthDataset, SynthSpec};
use crate::error::{Error, Result};
use crate::signal::{SpikeMatrix, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    fs_hz: f64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn loc(path: &Path, line: usize) -> String {
    format!("{}:{line}", path.display())
}

pub fn write_trace_raw(path: &Path, trace: &Trace) -> Result<()> {
    let bytes: Vec<u8> = trace.samples.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    write_json(&sidecar_path(path), &Sidecar { fs_hz: trace.fs_hz })
}

pub fn read_trace_raw(path: &Path) -> Result<Trace> {
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::parse(
            format!("{} at byte {}", path.display(), bytes.len() - bytes.len() % 8),
            format!("file length {} is not a multiple of 8", bytes.len()),
        ));
    }
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side)?;
    let meta: Sidecar = serde_json::from_str(&text).map_err(|e| Error::parse(loc(&side, e.line()), e.to_string()))?;
    let samples = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Trace::new(samples, meta.fs_hz)
}

pub fn write_trace_csv(path: &Path, trace: &Trace) -> Result<()> {
    let mut out = String::with_capacity(trace.len() * 20);
    for v in &trace.samples {
        let _ = writeln!(out, "{v}");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Non-empty CSV records with their 1-based line numbers.
fn records(path: &Path) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::parse(loc(path, line), format!("{kind:?}")),
    }
}

pub fn read_trace_csv(path: &Path, fs_hz: f64) -> Result<Trace> {
    let mut samples = Vec::new();
    for (i, (line, rec)) in records(path)?.into_iter().enumerate() {
        let field = rec.get(0).unwrap_or("");
        match field.parse::<f64>() {
            Ok(v) => samples.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(Error::parse(loc(path, line), format!("not a number: {field:?}"))),
        }
    }
    Trace::new(samples, fs_hz)
}

pub fn spikes_csv(x: &SpikeMatrix) -> String {
    let mut out = String::with_capacity(x.n() * x.d() * 20);
    for col in x.data().column_iter() {
        let mut first = true;
        for v in col.iter() {
            if !first {
                out.push(',');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_spikes_csv(path: &Path, x: &SpikeMatrix) -> Result<()> {
    fs::write(path, spikes_csv(x))?;
    Ok(())
}

/// Reads a spikes CSV; times default to `0..n`.
pub fn read_spikes_csv(path: &Path) -> Result<SpikeMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, (line, rec)) in records(path)?.into_iter().enumerate() {
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(r) => r,
            Err(_) if i == 0 => {
                width = Some(rec.len());
                continue;
            }
            Err(e) => return Err(Error::parse(loc(path, line), format!("bad value: {e}"))),
        };
        let expected = *width.get_or_insert(row.len());
        if row.len() != expected {
            return Err(Error::parse(
                loc(path, line),
                format!("expected {expected} columns, found {}", row.len()),
            ));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(loc(path, line), "non-finite value"));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(loc(path, 1), "no spikes"));
    }
    if rows[0].len() < 2 {
        return Err(Error::parse(loc(path, 1), "spikes need at least 2 samples"));
    }
    SpikeMatrix::from_rows(&rows)
}

pub fn integers_csv(values: &[usize]) -> String {
    let mut out = String::with_capacity(values.len() * 6);
    for v in values {
        let _ = writeln!(out, "{v}");
    }
    out
}

pub fn write_integers(path: &Path, values: &[usize]) -> Result<()> {
    fs::write(path, integers_csv(values))?;
    Ok(())
}

/// Reads one non-negative integer per line (labels or sample times).
pub fn read_integers(path: &Path) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, (line, rec)) in records(path)?.into_iter().enumerate() {
        let field = rec.get(0).unwrap_or("");
        match field.parse::<usize>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 && field.parse::<f64>().is_err() => continue,
            Err(e) => return Err(Error::parse(loc(path, line), format!("{field:?}: {e}"))),
        }
    }
    Ok(out)
}

fn overlaps_csv(overlaps: &[Option<Overlap>]) -> String {
    let mut out = String::from("partner,lag\n");
    for o in overlaps {
        match o {
            Some(o) => {
                let _ = writeln!(out, "{},{}", o.unit, o.lag);
            }
            None => out.push_str(",\n"),
        }
    }
    out
}

fn read_overlaps(path: &Path) -> Result<Vec<Option<Overlap>>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let (unit, lag) = (rec.get(0).unwrap_or(""), rec.get(1).unwrap_or(""));
        if unit.is_empty() && lag.is_empty() {
            out.push(None);
            continue;
        }
        let bad = |_| Error::parse(loc(path, line), format!("bad overlap entry {unit:?},{lag:?}"));
        out.push(Some(Overlap {
            unit: unit.parse().map_err(bad)?,
            lag: lag.parse().map_err(bad)?,
        }));
    }
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub role: String,
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: SynthSpec,
    /// Overlap partners are placed at lags within `±overlap_lag_window` samples.
    pub overlap_lag_window: i64,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn file(&self, role: &str) -> Option<&FileEntry> {
        self.files.iter().find(|f| f.role == role)
    }

    /// Files whose current checksum differs from the recorded one.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for f in &self.files {
            if sha256_hex(&fs::read(dir.join(&f.path))?) != f.sha256 {
                bad.push(f.path.clone());
            }
        }
        Ok(bad)
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `spikes.csv`, `labels.csv`, `times.csv` (plus `overlaps.csv` when
/// any spike overlaps) and `manifest.json` into `dir`.
pub fn write_dataset(dir: &Path, spec: &SynthSpec, ds: &SynthDataset) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut contents = vec![
        ("spikes", "spikes.csv", spikes_csv(&ds.spikes)),
        ("times", "times.csv", integers_csv(ds.times())),
    ];
    if let Some(labels) = &ds.labels {
        contents.push(("labels", "labels.csv", integers_csv(labels)));
    }
    if ds.overlaps.iter().any(Option::is_some) {
        contents.push(("overlaps", "overlaps.csv", overlaps_csv(&ds.overlaps)));
    }
    let mut files = Vec::new();
    for (role, name, text) in contents {
        fs::write(dir.join(name), &text)?;
        files.push(FileEntry {
            role: role.into(),
            path: name.into(),
            sha256: sha256_hex(text.as_bytes()),
        });
    }
    let manifest = Manifest {
        spec: *spec,
        overlap_lag_window: (spec.d / 4) as i64,
        files,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Reads a dataset directory written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<(Manifest, SynthDataset)> {
    let path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&path)?)
        .map_err(|e| Error::parse(loc(&path, e.line()), e.to_string()))?;
    let get = |role: &str| manifest.file(role).map(|f| dir.join(&f.path));
    let spikes = get("spikes").ok_or_else(|| Error::parse(path.display().to_string(), "no spikes file listed"))?;
    let mut ds = load_external(&spikes, get("labels").as_deref(), get("times").as_deref())?;
    if let Some(p) = get("overlaps") {
        let overlaps = read_overlaps(&p)?;
        if overlaps.len() != ds.spikes.n() {
            return Err(Error::LengthMismatch {
                left: ds.spikes.n(),
                right: overlaps.len(),
            });
        }
        ds.overlaps = overlaps;
    }
    Ok((manifest, ds))
}

/// Loads a spikes CSV with optional labels and times files.
pub fn load_external(spikes: &Path, labels: Option<&Path>, times: Option<&Path>) -> Result<SynthDataset> {
    let mut x = read_spikes_csv(spikes)?;
    if let Some(p) = times {
        let t = read_integers(p)?;
        if t.len() != x.n() {
            return Err(Error::LengthMismatch {
                left: x.n(),
                right: t.len(),
            });
        }
        x = x.with_times(t)?;
    }
    let labels = match labels {
        Some(p) => {
            let l = read_integers(p)?;
            if l.len() != x.n() {
                return Err(Error::LengthMismatch {
                    left: x.n(),
                    right: l.len(),
                });
            }
            Some(l)
        }
        None => None,
    };
    let n = x.n();
    Ok(SynthDataset {
        spikes: x,
        labels,
        overlaps: vec![None; n],
        templates: None,
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
