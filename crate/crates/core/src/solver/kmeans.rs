//! K-means++ seeding and Lloyd iterations on column data.
//!
//! Ties in the assignment step go to the lowest cluster index. A cluster that
//! empties out is refilled with the point farthest from its centre, taken
//! from a cluster that can spare it.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::Partition;

/// Outcome of one Lloyd run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub partition: Partition,
    /// m × c matrix of cluster means.
    pub centers: DMatrix<f64>,
    /// Sum of squared distances to the assigned centres.
    pub sse: f64,
    /// Centre updates performed.
    pub iterations: usize,
    /// SSE after each assignment pass.
    pub sse_history: Vec<f64>,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
fn col(y: &DMatrix<f64>, i: usize) -> &[f64] {
    let m = y.nrows();
    &y.as_slice()[i * m..(i + 1) * m]
}

/// Number of distinct columns, capped at `limit`. Stops as soon as `limit`
/// are found, so it is cheap on non-degenerate data.
fn distinct_columns(y: &DMatrix<f64>, limit: usize) -> usize {
    let mut seen: Vec<usize> = Vec::with_capacity(limit);
    for i in 0..y.ncols() {
        if seen.len() >= limit {
            break;
        }
        if seen.iter().all(|&j| col(y, j) != col(y, i)) {
            seen.push(i);
        }
    }
    seen.len()
}

/// Column indices picked by K-means++: the first uniformly, each next one
/// with probability proportional to its squared distance to the nearest pick.
pub fn kmeanspp_indices<R: Rng + ?Sized>(y: &DMatrix<f64>, c: usize, rng: &mut R) -> Result<Vec<usize>> {
    let n = y.ncols();
    if c == 0 {
        return Err(Error::InvalidArgument("cluster count must be positive".into()));
    }
    if n < c || distinct_columns(y, c) < c {
        return Err(Error::DegenerateData(format!(
            "fewer than {c} distinct points among {n}"
        )));
    }
    let mut picks = Vec::with_capacity(c);
    let first = rng.random_range(0..n);
    picks.push(first);
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(col(y, i), col(y, first))).collect();

    while picks.len() < c {
        let total: f64 = d2.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            chosen = Some(i);
            if acc > target {
                break;
            }
        }
        let next = chosen.ok_or_else(|| Error::DegenerateData("all points coincide with chosen centres".into()))?;
        picks.push(next);
        for (i, v) in d2.iter_mut().enumerate() {
            *v = v.min(sq_dist(col(y, i), col(y, next)));
        }
    }
    Ok(picks)
}

/// K-means++ initial centres (m × c), each a distinct data column.
pub fn kmeanspp_seed<R: Rng + ?Sized>(y: &DMatrix<f64>, c: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let idx = kmeanspp_indices(y, c, rng)?;
    Ok(y.select_columns(idx.iter()))
}

fn assign(y: &DMatrix<f64>, centers: &DMatrix<f64>, labels: &mut [usize], dists: &mut [f64]) {
    let c = centers.ncols();
    for i in 0..y.ncols() {
        let p = col(y, i);
        let mut best = 0;
        let mut best_d = sq_dist(p, col(centers, 0));
        for j in 1..c {
            let d = sq_dist(p, col(centers, j));
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        labels[i] = best;
        dists[i] = best_d;
    }
}

fn repair_empty(y: &DMatrix<f64>, centers: &mut DMatrix<f64>, labels: &mut [usize], dists: &mut [f64]) {
    let c = centers.ncols();
    let mut sizes = vec![0usize; c];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for j in 0..c {
        if sizes[j] > 0 {
            continue;
        }
        let mut donor: Option<usize> = None;
        for i in 0..labels.len() {
            if sizes[labels[i]] > 1 && donor.is_none_or(|b| dists[i] > dists[b]) {
                donor = Some(i);
            }
        }
        // n >= c guarantees some cluster has a spare point.
        let i = donor.expect("a cluster with more than one point");
        sizes[labels[i]] -= 1;
        sizes[j] = 1;
        labels[i] = j;
        dists[i] = 0.0;
        centers.column_mut(j).copy_from(&y.column(i));
    }
}

fn means(y: &DMatrix<f64>, labels: &[usize], c: usize) -> DMatrix<f64> {
    let m = y.nrows();
    let mut sums = DMatrix::zeros(m, c);
    let mut counts = vec![0usize; c];
    {
        let s = sums.as_mut_slice();
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (acc, v) in s[l * m..(l + 1) * m].iter_mut().zip(col(y, i)) {
                *acc += v;
            }
        }
    }
    for (j, &cnt) in counts.iter().enumerate() {
        let mut cj = sums.column_mut(j);
        cj /= cnt as f64;
    }
    sums
}

/// Lloyd iterations from the given centres until the assignment stops
/// changing or `max_iters` centre updates have been made.
pub fn kmeans(y: &DMatrix<f64>, c: usize, init: &DMatrix<f64>, max_iters: usize) -> Result<KMeansResult> {
    let n = y.ncols();
    if init.nrows() != y.nrows() || init.ncols() != c {
        return Err(Error::DimensionMismatch(format!(
            "initial centres are {}x{}, expected {}x{c}",
            init.nrows(),
            init.ncols(),
            y.nrows()
        )));
    }
    if c == 0 || n < c {
        return Err(Error::DegenerateData(format!(
            "cannot form {c} clusters from {n} points"
        )));
    }
    if y.iter().chain(init.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }

    let mut centers = init.clone();
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0; n];
    assign(y, &centers, &mut labels, &mut dists);
    repair_empty(y, &mut centers, &mut labels, &mut dists);
    let mut sse_history = vec![dists.iter().sum()];

    let mut next = labels.clone();
    let mut iterations = 0;
    while iterations < max_iters {
        centers = means(y, &labels, c);
        iterations += 1;
        assign(y, &centers, &mut next, &mut dists);
        repair_empty(y, &mut centers, &mut next, &mut dists);
        sse_history.push(dists.iter().sum());
        if next == labels {
            break;
        }
        std::mem::swap(&mut labels, &mut next);
    }

    let centers = means(y, &labels, c);
    let sse = (0..n).map(|i| sq_dist(col(y, i), col(&centers, labels[i]))).sum();
    Ok(KMeansResult {
        partition: Partition::new_unchecked(labels, c),
        centers,
        sse,
        iterations,
        sse_history,
    })
}

/// Best-SSE result over `restarts` K-means++-seeded runs (earliest wins ties).
pub fn kmeans_restarts<R: Rng + ?Sized>(
    y: &DMatrix<f64>,
    c: usize,
    restarts: usize,
    max_iters: usize,
    rng: &mut R,
) -> Result<KMeansResult> {
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let init = kmeanspp_seed(y, c, rng)?;
        let run = kmeans(y, c, &init, max_iters)?;
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}
