//! Accuracy, detection scores, repeated trials and scaling runs.

use std::fmt::Write as _;
use std::time::Instant;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{synthesize_spikes, SynthSpec};
use crate::error::{Error, Result};
use crate::model::Partition;
use crate::signal::SpikeMatrix;
use crate::solver::{self, fit, sequential_baseline, SolverOptions};

/// Matching tolerance used when none is given.
pub const DEFAULT_TOL_MS: f64 = 0.5;

/// Percentage of spikes whose cluster maps to their true class under the best
/// one-to-one cluster-to-class assignment.
pub fn accuracy(truth: &[usize], pred: &Partition) -> Result<f64> {
    accuracy_labels(truth, pred.labels())
}

pub fn accuracy_labels(truth: &[usize], pred: &[usize]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("no labels to compare".into()));
    }
    let (truth, n_true) = compact(truth);
    let (pred, n_pred) = compact(pred);
    let size = n_true.max(n_pred);
    let mut confusion = Matrix::new(size, size, 0i64);
    for (&t, &p) in truth.iter().zip(&pred) {
        confusion[(p, t)] += 1;
    }
    let (matched, _) = kuhn_munkres(&confusion);
    Ok(100.0 * matched as f64 / truth.len() as f64)
}

// Arbitrary label values mapped to 0..k in order of first appearance.
fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = std::collections::HashMap::new();
    let dense = labels
        .iter()
        .map(|&l| {
            let next = ids.len();
            *ids.entry(l).or_insert(next)
        })
        .collect();
    (dense, ids.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub fpr: f64,
    pub fnr: f64,
    pub matched: usize,
}

/// Greedy one-to-one matching of event times within `±tol` samples.
pub fn fpr_fnr(gt_times: &[usize], cluster_times: &[usize], tol: usize) -> DetectionScore {
    let mut gt = gt_times.to_vec();
    let mut cl = cluster_times.to_vec();
    gt.sort_unstable();
    cl.sort_unstable();
    let (mut i, mut j, mut matched) = (0, 0, 0);
    while i < gt.len() && j < cl.len() {
        if gt[i].abs_diff(cl[j]) <= tol {
            matched += 1;
            i += 1;
            j += 1;
        } else if gt[i] < cl[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    let frac = |unmatched: usize, total: usize| {
        if total == 0 {
            0.0
        } else {
            unmatched as f64 / total as f64
        }
    };
    DetectionScore {
        fnr: frac(gt.len() - matched, gt.len()),
        fpr: frac(cl.len() - matched, cl.len()),
        matched,
    }
}

/// The cluster whose spike times best match `gt_times` (lowest `fnr + fpr`,
/// lowest id on ties).
pub fn best_cluster_score(
    gt_times: &[usize],
    partition: &Partition,
    spike_times: &[usize],
    tol: usize,
) -> Result<(usize, DetectionScore)> {
    if spike_times.len() != partition.n() {
        return Err(Error::LengthMismatch {
            left: partition.n(),
            right: spike_times.len(),
        });
    }
    let mut best: Option<(usize, DetectionScore)> = None;
    for k in 0..partition.c() {
        let times: Vec<usize> = partition.members(k).into_iter().map(|j| spike_times[j]).collect();
        let s = fpr_fnr(gt_times, &times, tol);
        if best.is_none_or(|(_, b)| s.fnr + s.fpr < b.fnr + b.fpr) {
            best = Some((k, s));
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("partition has no clusters".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub monotone: bool,
    pub violations: Vec<usize>,
}

/// Flags every index where the history drops by more than `rel_tol · |J|`.
pub fn monotonicity_report(history: &[f64], rel_tol: f64) -> MonotonicityReport {
    let violations = solver::decreases(history, rel_tol);
    MonotonicityReport {
        monotone: violations.is_empty(),
        violations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Proposed,
    /// PCA to `c − 1` dimensions, then K-means.
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub mean_accuracy_pct: f64,
    pub std_accuracy_pct: f64,
    pub mean_runtime_ms: f64,
    pub std_runtime_ms: f64,
    pub n_trials: usize,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl TrialStats {
    pub fn from_samples(accuracies: &[f64], runtimes_ms: &[f64]) -> Result<Self> {
        if accuracies.is_empty() || accuracies.len() != runtimes_ms.len() {
            return Err(Error::InvalidArgument(
                "need one runtime per accuracy and at least one trial".into(),
            ));
        }
        let (ma, sa) = mean_std(accuracies);
        let (mr, sr) = mean_std(runtimes_ms);
        Ok(TrialStats {
            mean_accuracy_pct: ma,
            std_accuracy_pct: sa,
            mean_runtime_ms: mr,
            std_runtime_ms: sr,
            n_trials: accuracies.len(),
        })
    }

    /// `mean±std` with two decimals.
    pub fn accuracy_cell(&self) -> String {
        format!("{:.2}±{:.2}", self.mean_accuracy_pct, self.std_accuracy_pct)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub method: Method,
    pub stats: TrialStats,
    pub accuracies: Vec<f64>,
    pub runtimes_ms: Vec<f64>,
    pub iterations: Vec<usize>,
    pub objective_histories: Vec<Vec<f64>>,
}

/// Runs `n_trials` sorts with seeds `base_seed + i`.
pub fn run_trials(
    x: &SpikeMatrix,
    truth: &[usize],
    method: Method,
    n_trials: usize,
    base_seed: u64,
    opts: &SolverOptions,
) -> Result<TrialReport> {
    if n_trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    if truth.len() != x.n() {
        return Err(Error::LengthMismatch {
            left: x.n(),
            right: truth.len(),
        });
    }
    let runs = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let o = opts.with_seed(base_seed.wrapping_add(i as u64));
            let start = Instant::now();
            let r = match method {
                Method::Proposed => fit(x, &o)?,
                Method::Baseline => sequential_baseline(x, o.c - 1, &o)?,
            };
            let ms = start.elapsed().as_secs_f64() * 1e3;
            Ok((accuracy(truth, &r.partition)?, ms, r.iterations, r.objective_history))
        })
        .collect::<Result<Vec<_>>>()?;
    let accuracies: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let runtimes_ms: Vec<f64> = runs.iter().map(|r| r.1).collect();
    Ok(TrialReport {
        method,
        stats: TrialStats::from_samples(&accuracies, &runtimes_ms)?,
        accuracies,
        runtimes_ms,
        iterations: runs.iter().map(|r| r.2).collect(),
        objective_histories: runs.into_iter().map(|r| r.3).collect(),
    })
}

/// One line of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub dataset: String,
    pub noise_level: f64,
    pub method: Method,
    pub stats: TrialStats,
}

/// Aligned text table: dataset, noise, method, accuracy mean±std, time.
pub fn render_table(rows: &[TableRow]) -> String {
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.dataset.clone(),
                format!("{:.3}", r.noise_level),
                format!("{:?}", r.method).to_lowercase(),
                r.stats.accuracy_cell(),
                format!("{:.1}±{:.1}", r.stats.mean_runtime_ms, r.stats.std_runtime_ms),
            ]
        })
        .collect();
    let header = ["dataset", "noise", "method", "accuracy (%)", "time (ms)"];
    let mut widths = header.map(|h| h.chars().count());
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cols: &[String]| {
        let parts: Vec<String> = cols
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&header.map(String::from));
    for row in &cells {
        line(row);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    /// Median wall time over the repeats.
    pub ms: f64,
    pub iterations: usize,
}

/// Times [`fit`] on easy three-unit sets of the requested sizes (`d = 64`).
pub fn bench_scaling(sizes: &[usize], repeats: usize, seed: u64) -> Result<Vec<BenchRow>> {
    sizes
        .iter()
        .map(|&n| {
            let spec = SynthSpec {
                n_spikes: n.div_ceil(3),
                noise_level: 0.1,
                seed,
                ..SynthSpec::default()
            };
            let x = synthesize_spikes(&spec)?.spikes;
            let opts = SolverOptions::new(3).with_seed(seed);
            let mut times = Vec::new();
            let mut iterations = 0;
            for _ in 0..repeats.max(1) {
                let start = Instant::now();
                let r = fit(&x, &opts)?;
                times.push(start.elapsed().as_secs_f64() * 1e3);
                iterations = r.iterations;
            }
            times.sort_by(f64::total_cmp);
            Ok(BenchRow {
                n: x.n(),
                ms: times[times.len() / 2],
                iterations,
            })
        })
        .collect()
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("n,ms,iterations\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.3},{}", r.n, r.ms, r.iterations);
    }
    out
}
