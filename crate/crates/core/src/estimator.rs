//! Estimating the number of units before sorting.
//!
//! The spikes are embedded on their leading `m0` principal axes, clustered
//! for every candidate count, and each clustering is scored with the
//! Calinski-Harabasz index or the gap statistic.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, Partition};
use crate::numerics::{sym_eig, SymMatrix};
use crate::signal::SpikeMatrix;
use crate::solver::{derive_seed, fit, kmeans_restarts, rng_from_seed, SolverOptions, SortResult};

pub const DEFAULT_M0: usize = 3;
pub const DEFAULT_C_MIN: usize = 2;
pub const DEFAULT_C_MAX: usize = 10;
pub const DEFAULT_B_REFS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    #[default]
    CalinskiHarabasz,
    Gap,
}

/// How a count is picked from the gap curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GapRule {
    /// Smallest k with `gap(k) ≥ gap(k+1) − s(k+1)`.
    #[default]
    FirstK,
    Argmax,
}

/// Where gap reference sets come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GapReference {
    /// Uniform over the bounding box of the data in its principal-axis frame.
    #[default]
    Uniform,
    /// The data itself; the gap is then exactly zero.
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChScore {
    pub value: f64,
    /// Set when the within-cluster scatter vanishes; `value` is then +∞.
    pub degenerate: bool,
}

/// Calinski-Harabasz index of a partition of the columns of `y`.
pub fn calinski_harabasz(y: &DMatrix<f64>, g: &Partition) -> Result<ChScore> {
    let n = y.ncols();
    if g.n() != n {
        return Err(Error::LengthMismatch { left: n, right: g.n() });
    }
    let c = g.c();
    if c < 2 || c >= n {
        return Err(Error::InvalidArgument(format!("need 2 <= c < n, got c = {c}, n = {n}")));
    }
    if let Some(k) = g.sizes().iter().position(|&s| s == 0) {
        return Err(Error::EmptyCluster(k));
    }
    let centers = model::centers(y, g)?;
    let within = model::sse(y, g, &centers);
    let mean = y.column_mean();
    let between: f64 = g
        .sizes()
        .iter()
        .enumerate()
        .map(|(k, &s)| s as f64 * (centers.column(k) - &mean).norm_squared())
        .sum();
    let num = between / (c - 1) as f64;
    if within <= 0.0 {
        return Ok(ChScore {
            value: f64::INFINITY,
            degenerate: true,
        });
    }
    Ok(ChScore {
        value: num / (within / (n - c) as f64),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapScore {
    pub gap: f64,
    /// Reference spread `sd · sqrt(1 + 1/B)`.
    pub s_k: f64,
}

/// Clustering settings shared by the index computations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSettings {
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for ClusterSettings {
    fn default() -> Self {
        ClusterSettings {
            restarts: 10,
            max_iters: 300,
        }
    }
}

fn log_dispersion(y: &DMatrix<f64>, c: usize, settings: ClusterSettings, seed: u64) -> Result<f64> {
    let w = if c == 1 {
        model::center_matrix(y).norm_squared()
    } else {
        let mut rng = rng_from_seed(seed);
        kmeans_restarts(y, c, settings.restarts, settings.max_iters, &mut rng)?.sse
    };
    Ok(w.max(f64::MIN_POSITIVE).ln())
}

/// Uniform draw over the principal-axis bounding box of `y`.
fn reference_sample<R: Rng + ?Sized>(y: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let yc = model::center_matrix(y);
    let axes = sym_eig(&SymMatrix::symmetrize(&yc * yc.transpose()))?.vectors;
    let rotated = axes.transpose() * &yc;
    let (m, n) = rotated.shape();
    let bounds: Vec<(f64, f64)> = rotated.row_iter().map(|r| (r.min(), r.max())).collect();
    let draw = DMatrix::from_fn(m, n, |i, _| {
        let (lo, hi) = bounds[i];
        if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        }
    });
    Ok(axes * draw)
}

/// Gap statistic for `c` clusters with `b_refs` reference sets.
///
/// The data and every reference set are clustered from the same seed, so the
/// `Data` reference gives a gap of exactly zero.
pub fn gap_statistic<R: Rng + ?Sized>(
    y: &DMatrix<f64>,
    c: usize,
    b_refs: usize,
    settings: ClusterSettings,
    reference: GapReference,
    rng: &mut R,
) -> Result<GapScore> {
    if c == 0 || b_refs == 0 {
        return Err(Error::InvalidArgument("gap needs c >= 1 and b_refs >= 1".into()));
    }
    let base = rng.next_u64();
    let cluster_seed = derive_seed(base, 0);
    let log_w = log_dispersion(y, c, settings, cluster_seed)?;
    let refs = (0..b_refs)
        .map(|b| {
            let sample = match reference {
                GapReference::Data => y.clone(),
                GapReference::Uniform => reference_sample(y, &mut rng_from_seed(derive_seed(base, b as u64 + 1)))?,
            };
            log_dispersion(&sample, c, settings, cluster_seed)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = refs.iter().sum::<f64>() / b_refs as f64;
    let var = refs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / b_refs as f64;
    Ok(GapScore {
        gap: mean - log_w,
        s_k: var.sqrt() * (1.0 + 1.0 / b_refs as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateOptions {
    pub m0: usize,
    /// Inclusive candidate range; `None` means `[2, min(10, n − 1)]`.
    pub c_range: Option<(usize, usize)>,
    pub index: IndexKind,
    pub gap_rule: GapRule,
    pub b_refs: usize,
    pub cluster: ClusterSettings,
    pub seed: u64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            m0: DEFAULT_M0,
            c_range: None,
            index: IndexKind::CalinskiHarabasz,
            gap_rule: GapRule::FirstK,
            b_refs: DEFAULT_B_REFS,
            cluster: ClusterSettings::default(),
            seed: 42,
        }
    }
}

impl EstimateOptions {
    pub fn candidates(&self, n: usize) -> Result<Vec<usize>> {
        let (lo, hi) = match self.c_range {
            Some(r) => r,
            None => {
                let hi = DEFAULT_C_MAX.min(n.saturating_sub(1));
                if hi < DEFAULT_C_MIN {
                    return Err(Error::RangeTooLarge { c: DEFAULT_C_MIN, n });
                }
                (DEFAULT_C_MIN, hi)
            }
        };
        if lo < 2 || lo > hi {
            return Err(Error::InvalidArgument(format!("invalid candidate range [{lo}, {hi}]")));
        }
        if hi >= n {
            return Err(Error::RangeTooLarge { c: hi, n });
        }
        Ok((lo..=hi).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationReport {
    pub candidates: Vec<usize>,
    /// Index value per candidate; a degenerate CH score is reported as `f64::MAX`.
    pub scores: Vec<f64>,
    /// Gap reference spread per candidate (gap index only).
    pub s_k: Option<Vec<f64>>,
    pub degenerate: Vec<bool>,
    pub chosen: usize,
    pub index_kind: IndexKind,
    pub m0: usize,
    /// Space the index was computed in.
    pub embedding: String,
}

fn choose_ch(candidates: &[usize], scores: &[ChScore]) -> usize {
    let finite = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.degenerate)
        .fold(None::<(usize, f64)>, |best, (i, s)| match best {
            Some((_, v)) if v >= s.value => best,
            _ => Some((i, s.value)),
        });
    candidates[finite.map_or(0, |(i, _)| i)]
}

fn choose_gap(candidates: &[usize], scores: &[GapScore], rule: GapRule) -> usize {
    match rule {
        GapRule::FirstK => {
            for i in 0..candidates.len().saturating_sub(1) {
                if scores[i].gap >= scores[i + 1].gap - scores[i + 1].s_k {
                    return candidates[i];
                }
            }
            *candidates.last().expect("non-empty candidates")
        }
        GapRule::Argmax => {
            let mut best = 0;
            for i in 1..scores.len() {
                if scores[i].gap > scores[best].gap {
                    best = i;
                }
            }
            candidates[best]
        }
    }
}

/// Scores every candidate count on the `m0`-dimensional PCA embedding.
pub fn estimate_c(x: &SpikeMatrix, opts: &EstimateOptions) -> Result<EstimationReport> {
    let candidates = opts.candidates(x.n())?;
    let w = model::pca_init(x, opts.m0)?;
    let y = w.matrix().transpose() * model::center(x);
    let m0 = w.m();

    let (scores, s_k, degenerate, chosen) = match opts.index {
        IndexKind::CalinskiHarabasz => {
            let ch = candidates
                .par_iter()
                .map(|&c| {
                    let mut rng = rng_from_seed(derive_seed(opts.seed, c as u64));
                    let km = kmeans_restarts(&y, c, opts.cluster.restarts, opts.cluster.max_iters, &mut rng)?;
                    calinski_harabasz(&y, &km.partition)
                })
                .collect::<Result<Vec<_>>>()?;
            let chosen = choose_ch(&candidates, &ch);
            let scores = ch
                .iter()
                .map(|s| if s.degenerate { f64::MAX } else { s.value })
                .collect();
            (scores, None, ch.iter().map(|s| s.degenerate).collect(), chosen)
        }
        IndexKind::Gap => {
            let gaps = candidates
                .par_iter()
                .map(|&c| {
                    let mut rng = rng_from_seed(derive_seed(opts.seed, c as u64));
                    gap_statistic(&y, c, opts.b_refs, opts.cluster, GapReference::Uniform, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let chosen = choose_gap(&candidates, &gaps, opts.gap_rule);
            (
                gaps.iter().map(|g| g.gap).collect(),
                Some(gaps.iter().map(|g| g.s_k).collect()),
                vec![false; candidates.len()],
                chosen,
            )
        }
    };

    Ok(EstimationReport {
        candidates,
        scores,
        s_k,
        degenerate,
        chosen,
        index_kind: opts.index,
        m0,
        embedding: format!("pca{m0}"),
    })
}

/// Estimates the count, then sorts with `c = ĉ` and `m = ĉ − 1`.
pub fn auto_sort(
    x: &SpikeMatrix,
    est: &EstimateOptions,
    solver: &SolverOptions,
) -> Result<(SortResult, EstimationReport)> {
    let report = estimate_c(x, est)?;
    let opts = SolverOptions {
        c: report.chosen,
        ..*solver
    };
    let result = fit(x, &opts)?;
    Ok((result, report))
}
