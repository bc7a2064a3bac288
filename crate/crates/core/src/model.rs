//! Algebraic core of the unified model.
//!
//! With `Xc = X·H` the centred spikes, `S1 = Xc Xcᵀ` is the total scatter and
//! `S2 = Xc (I − G(GᵀG)⁻¹Gᵀ) Xcᵀ` the within-cluster scatter of a partition.
//! The objective is the ratio trace `J(W, G) = tr{(WᵀS2W)⁻¹ WᵀS1W}`, which PCA
//! alone maximizes through the numerator and K-means alone minimizes through
//! the denominator.
//!
//! `H` is never formed; centering subtracts row means. [`centering_matrix`]
//! builds it explicitly for tests.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{self, inv_sqrt_spd_ridged, orient_columns, Ridge, SymMatrix};
use crate::signal::SpikeMatrix;

/// Hard assignment of `n` spikes to `c` non-empty clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    labels: Vec<usize>,
    c: usize,
}

impl Partition {
    pub fn new(labels: Vec<usize>, c: usize) -> Result<Self> {
        if c == 0 {
            return Err(Error::InvalidArgument("cluster count must be positive".into()));
        }
        if labels.len() < c {
            return Err(Error::InvalidArgument(format!(
                "{} spikes cannot fill {c} clusters",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::InvalidArgument(format!("label {bad} out of range for c = {c}")));
        }
        let p = Partition { labels, c };
        if let Some(j) = p.sizes().iter().position(|&s| s == 0) {
            return Err(Error::EmptyCluster(j));
        }
        Ok(p)
    }

    /// Builds a partition whose cluster count is `max(label) + 1`.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let c = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(labels, c)
    }

    pub(crate) fn new_unchecked(labels: Vec<usize>, c: usize) -> Self {
        debug_assert!(Partition::new(labels.clone(), c).is_ok());
        Partition { labels, c }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.c];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] == cluster).collect()
    }

    /// Labels renumbered in order of first occurrence.
    pub fn canonical(&self) -> Vec<usize> {
        let mut map = vec![usize::MAX; self.c];
        let mut next = 0;
        self.labels
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect()
    }

    /// Equality up to relabeling of clusters.
    pub fn same_grouping(&self, other: &Partition) -> bool {
        self.n() == other.n() && self.c == other.c && self.canonical() == other.canonical()
    }

    /// The n × c indicator matrix G.
    pub fn indicator(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.n(), self.c);
        for (i, &l) in self.labels.iter().enumerate() {
            g[(i, l)] = 1.0;
        }
        g
    }
}

/// d × m projection with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    w: DMatrix<f64>,
}

impl Projection {
    /// Wraps `w`, checking `‖WᵀW − I‖_∞ ≤ 1e-8`.
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if w.ncols() == 0 || w.ncols() > w.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "projection must be d x m with 1 <= m <= d, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let gram = w.transpose() * &w;
        let err = (gram - DMatrix::identity(w.ncols(), w.ncols())).amax();
        if err > 1e-8 {
            return Err(Error::InvalidArgument(format!(
                "projection columns not orthonormal (error {err:e})"
            )));
        }
        Ok(Projection { w })
    }

    /// Orthonormal basis of the column span of `w` (thin QR), with the
    /// largest-magnitude entry of each column made positive.
    pub fn orthonormalize(w: &DMatrix<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let m = w.ncols();
        let qr = w.clone().qr();
        let r = qr.r();
        let scale = r.diagonal().amax();
        if (0..m).any(|i| r[(i, i)].abs() <= 1e-12 * scale) {
            return Err(Error::DegenerateData(
                "projection columns are linearly dependent".into(),
            ));
        }
        let mut q = qr.q().columns(0, m).into_owned();
        orient_columns(&mut q);
        Projection::new(q)
    }

    pub fn d(&self) -> usize {
        self.w.nrows()
    }

    pub fn m(&self) -> usize {
        self.w.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.w
    }

    /// Row-major copy of W (d rows of m values).
    pub fn row_major(&self) -> Vec<f64> {
        self.w.transpose().as_slice().to_vec()
    }
}

/// Value of the ratio-trace objective together with its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Objective {
    pub value: f64,
    /// `tr(WᵀS1W)`.
    pub s1_trace: f64,
    /// `tr(WᵀS2W)`.
    pub s2_trace: f64,
    /// Ridge added to `WᵀS2W` before inversion.
    pub ridge: f64,
}

/// Explicit centering matrix `I − 11ᵀ/n`. Test use only; O(n²) memory.
#[doc(hidden)]
pub fn centering_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}

/// `X·H`: each row with its mean removed.
pub fn center(x: &SpikeMatrix) -> DMatrix<f64> {
    center_matrix(x.data())
}

pub(crate) fn center_matrix(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = x.column_mean();
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        col -= &mean;
    }
    out
}

/// Total scatter `S1 = X H Xᵀ`.
pub fn total_scatter(x: &SpikeMatrix) -> SymMatrix {
    scatter(&center(x))
}

pub(crate) fn scatter(xc: &DMatrix<f64>) -> SymMatrix {
    SymMatrix::symmetrize(xc * xc.transpose())
}

/// Within-cluster scatter `S2 = X H (I − G(GᵀG)⁻¹Gᵀ) H Xᵀ`, i.e. the scatter of
/// each spike around its cluster mean.
pub fn within_scatter(x: &SpikeMatrix, g: &Partition) -> Result<SymMatrix> {
    within_scatter_centered(&center(x), g)
}

pub(crate) fn within_scatter_centered(xc: &DMatrix<f64>, g: &Partition) -> Result<SymMatrix> {
    let means = centers(xc, g)?;
    let mut resid = xc.clone();
    for (i, mut col) in resid.column_iter_mut().enumerate() {
        col -= means.column(g.labels[i]);
    }
    Ok(scatter(&resid))
}

/// Column j is the mean of the columns of `y` assigned to cluster j
/// (`M = Y G (GᵀG)⁻¹`).
pub fn centers(y: &DMatrix<f64>, g: &Partition) -> Result<DMatrix<f64>> {
    if y.ncols() != g.n() {
        return Err(Error::LengthMismatch {
            left: y.ncols(),
            right: g.n(),
        });
    }
    let mut sums = DMatrix::zeros(y.nrows(), g.c);
    let mut counts = vec![0usize; g.c];
    for (i, col) in y.column_iter().enumerate() {
        let l = g.labels[i];
        let mut s = sums.column_mut(l);
        s += col;
        counts[l] += 1;
    }
    for (j, &cnt) in counts.iter().enumerate() {
        if cnt == 0 {
            return Err(Error::EmptyCluster(j));
        }
        let mut s = sums.column_mut(j);
        s /= cnt as f64;
    }
    Ok(sums)
}

/// `J = tr{(WᵀS2W + ridge·I)⁻¹ WᵀS1W}` for any d × m matrix `w`.
pub fn trace_ratio(s1: &SymMatrix, s2: &SymMatrix, w: &DMatrix<f64>, ridge: Ridge) -> Result<Objective> {
    if w.nrows() != s1.dim() || s1.dim() != s2.dim() {
        return Err(Error::DimensionMismatch(format!(
            "W has {} rows, scatters are {}x{} and {}x{}",
            w.nrows(),
            s1.dim(),
            s1.dim(),
            s2.dim(),
            s2.dim()
        )));
    }
    let a = s1.congruence(w);
    let b = s2.congruence(w);
    let (value, applied) = numerics::ratio_trace(&a, &b, ridge)?;
    Ok(Objective {
        value,
        s1_trace: a.trace(),
        s2_trace: b.trace(),
        ridge: applied,
    })
}

/// The unified objective for spikes `x`, projection `w` and partition `g`.
pub fn objective(x: &SpikeMatrix, w: &Projection, g: &Partition, ridge: Ridge) -> Result<Objective> {
    if g.n() != x.n() {
        return Err(Error::LengthMismatch {
            left: g.n(),
            right: x.n(),
        });
    }
    let xc = center(x);
    trace_ratio(&scatter(&xc), &within_scatter_centered(&xc, g)?, w.matrix(), ridge)
}

/// Gradient of `tr{(WᵀS2W)⁻¹ WᵀS1W}` with respect to W:
/// `2 S1 W B⁻¹ − 2 S2 W B⁻¹ A B⁻¹` with `A = WᵀS1W`, `B = WᵀS2W`.
pub fn trace_ratio_gradient(s1: &SymMatrix, s2: &SymMatrix, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let a = s1.congruence(w);
    let b = s2.congruence(w);
    let b_inv = b
        .as_matrix()
        .clone()
        .try_inverse()
        .ok_or(Error::SingularDenominator { ridge: 0.0 })?;
    let s1w = s1.as_matrix() * w;
    let s2w = s2.as_matrix() * w;
    Ok(&s1w * &b_inv * 2.0 - &s2w * &b_inv * a.as_matrix() * &b_inv * 2.0)
}

/// Clamps a requested PCA dimension to `[1, min(d, n − 1)]`.
pub(crate) fn clamp_dim(requested: usize, d: usize, n: usize) -> usize {
    let cap = d.min(n.saturating_sub(1)).max(1);
    let m = requested.clamp(1, cap);
    if m != requested {
        log::warn!("reduced dimension {requested} clipped to {m} (d = {d}, n = {n})");
    }
    m
}

/// Leading `m0` principal axes of the spikes.
pub fn pca_init(x: &SpikeMatrix, m0: usize) -> Result<Projection> {
    pca_from_scatter(&total_scatter(x), clamp_dim(m0, x.d(), x.n()))
}

pub(crate) fn pca_from_scatter(s1: &SymMatrix, m: usize) -> Result<Projection> {
    let eig = numerics::sym_eig(s1)?.truncate(m);
    Projection::new(eig.vectors)
}

/// `(WᵀXHXᵀW)^{-1/2} WᵀXH`: the projected spikes with unit total scatter.
pub fn whitened_embedding(x: &SpikeMatrix, w: &Projection, ridge: Ridge) -> Result<DMatrix<f64>> {
    let xc = center(x);
    whiten(&xc, &scatter(&xc), w, ridge).map(|(y, _)| y)
}

pub(crate) fn whiten(xc: &DMatrix<f64>, s1: &SymMatrix, w: &Projection, ridge: Ridge) -> Result<(DMatrix<f64>, f64)> {
    let (k, applied) = inv_sqrt_spd_ridged(&s1.congruence(w.matrix()), ridge)?;
    let projected = w.matrix().transpose() * xc;
    Ok((k.as_matrix() * projected, applied))
}

/// Sum of squared distances from each column of `y` to its cluster centre.
pub(crate) fn sse(y: &DMatrix<f64>, g: &Partition, centers: &DMatrix<f64>) -> f64 {
    y.column_iter()
        .zip(&g.labels)
        .map(|(col, &l)| (col - centers.column(l)).norm_squared())
        .sum()
}

/// Captured variance `tr(WᵀS1W)`.
pub fn captured_variance(s1: &SymMatrix, w: &DMatrix<f64>) -> f64 {
    s1.congruence(w).trace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spikes(rows: &[&[f64]]) -> SpikeMatrix {
        let d = rows.len();
        let n = rows[0].len();
        SpikeMatrix::from_columns(DMatrix::from_fn(d, n, |i, j| rows[i][j])).unwrap()
    }

    fn random_spikes(rng: &mut ChaCha8Rng, d: usize, n: usize) -> SpikeMatrix {
        SpikeMatrix::from_columns(DMatrix::from_fn(d, n, |_, _| rng.random_range(-2.0..2.0))).unwrap()
    }

    fn random_partition(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Partition {
        loop {
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
            if let Ok(p) = Partition::new(labels, c) {
                return p;
            }
        }
    }

    #[test]
    fn partition_validation() {
        assert!(matches!(Partition::new(vec![0, 0, 2], 3), Err(Error::EmptyCluster(1))));
        assert!(Partition::new(vec![0, 3], 2).is_err());
        assert!(Partition::new(vec![0], 2).is_err());
        let p = Partition::new(vec![1, 1, 0, 2], 3).unwrap();
        assert_eq!(p.canonical(), vec![0, 0, 1, 2]);
        assert!(p.same_grouping(&Partition::new(vec![0, 0, 2, 1], 3).unwrap()));
        assert!(!p.same_grouping(&Partition::new(vec![0, 1, 2, 1], 3).unwrap()));
    }

    #[test]
    fn center_examples() {
        let x = spikes(&[&[1.0, 3.0], &[0.0, 0.0]]);
        let c = center(&x);
        assert_eq!(c[(0, 0)], -1.0);
        assert_eq!(c[(0, 1)], 1.0);
        let again = center(&SpikeMatrix::from_columns(c.clone()).unwrap());
        assert!((again - &c).amax() < 1e-12);
    }

    #[test]
    fn center_matches_explicit_h() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_spikes(&mut rng, 4, 3);
        let explicit = x.data() * centering_matrix(3);
        assert!((center(&x) - explicit).amax() < 1e-12);
    }

    #[test]
    fn total_scatter_examples() {
        let x = spikes(&[&[2.0, 2.0, 2.0], &[1.0, 1.0, 1.0]]);
        assert!(total_scatter(&x).as_matrix().amax() == 0.0);
        let x = spikes(&[&[-1.0, 1.0], &[0.0, 0.0]]);
        assert!((total_scatter(&x).as_matrix()[(0, 0)] - 2.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_spikes(&mut rng, 4, 10);
        let xh = x.data() * centering_matrix(10);
        let oracle = &xh * xh.transpose();
        assert!((total_scatter(&x).into_inner() - oracle).amax() < 1e-10);
    }

    #[test]
    fn within_scatter_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_spikes(&mut rng, 3, 6);
        let singletons = Partition::new((0..6).collect(), 6).unwrap();
        assert!(within_scatter(&x, &singletons).unwrap().as_matrix().amax() < 1e-12);
        let one = Partition::new(vec![0; 6], 1).unwrap();
        let s2 = within_scatter(&x, &one).unwrap();
        assert!((s2.into_inner() - total_scatter(&x).into_inner()).amax() < 1e-12);
    }

    #[test]
    fn within_scatter_matches_projector_form_and_kmeans_sse() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_spikes(&mut rng, 3, 8);
        let g = random_partition(&mut rng, 8, 2);
        let s2 = within_scatter(&x, &g).unwrap();

        // Projector form with explicit H and G.
        let h = centering_matrix(8);
        let gm = g.indicator();
        let p = &gm * (gm.transpose() * &gm).try_inverse().unwrap() * gm.transpose();
        let xh = x.data() * &h;
        let oracle = &xh * (DMatrix::identity(8, 8) - p) * xh.transpose();
        assert!((s2.as_matrix() - &oracle).amax() < 1e-10);

        // K-means SSE at per-cluster means.
        let mut sse_oracle = 0.0;
        for j in 0..2 {
            let idx = g.members(j);
            for r in 0..3 {
                let mean: f64 = idx.iter().map(|&i| xh[(r, i)]).sum::<f64>() / idx.len() as f64;
                sse_oracle += idx.iter().map(|&i| (xh[(r, i)] - mean).powi(2)).sum::<f64>();
            }
        }
        assert!((s2.trace() - sse_oracle).abs() <= 1e-8 * sse_oracle);
    }

    #[test]
    fn objective_scalar_case() {
        let x = spikes(&[&[-1.0, 1.0], &[0.0, 0.0]]);
        let w = Projection::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let g = Partition::new(vec![0, 0], 1).unwrap();
        let j = objective(&x, &w, &g, Ridge::None).unwrap();
        assert!((j.value - 1.0).abs() < 1e-15);
        assert!((j.s1_trace - 2.0).abs() < 1e-15);
        assert!((j.s2_trace - 2.0).abs() < 1e-15);
    }

    #[test]
    fn objective_singleton_clusters_need_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_spikes(&mut rng, 3, 5);
        let w = Projection::new(DMatrix::identity(3, 3)).unwrap();
        let g = Partition::new((0..5).collect(), 5).unwrap();
        assert!(matches!(
            objective(&x, &w, &g, Ridge::None),
            Err(Error::SingularDenominator { .. })
        ));
        let r = 1e-6;
        let j = objective(&x, &w, &g, Ridge::Fixed(r)).unwrap();
        let s1 = total_scatter(&x).trace();
        assert!((j.value - s1 / r).abs() < 1e-6 * s1 / r);
        assert_eq!(j.ridge, r);
    }

    #[test]
    fn objective_matches_dense_inverse_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_spikes(&mut rng, 5, 20);
        let g = random_partition(&mut rng, 20, 3);
        let w = pca_init(&x, 2).unwrap();
        let j = objective(&x, &w, &g, Ridge::None).unwrap();

        let h = centering_matrix(20);
        let gm = g.indicator();
        let p = &gm * (gm.transpose() * &gm).try_inverse().unwrap() * gm.transpose();
        let xh = x.data() * &h;
        let s1 = &xh * xh.transpose();
        let s2 = &xh * (DMatrix::identity(20, 20) - p) * xh.transpose();
        let wm = w.matrix();
        let a = wm.transpose() * s1 * wm;
        let b = wm.transpose() * s2 * wm;
        let oracle = (b.try_inverse().unwrap() * a).trace();
        assert!((j.value - oracle).abs() <= 1e-8 * oracle);
    }

    #[test]
    fn objective_basis_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_spikes(&mut rng, 6, 30);
        let g = random_partition(&mut rng, 30, 3);
        let xc = center(&x);
        let s1 = scatter(&xc);
        let s2 = within_scatter_centered(&xc, &g).unwrap();
        let w = pca_init(&x, 2).unwrap();
        let base = trace_ratio(&s1, &s2, w.matrix(), Ridge::None).unwrap().value;
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, -1.1, 0.7]);
        let moved = trace_ratio(&s1, &s2, &(w.matrix() * a), Ridge::None).unwrap().value;
        assert!((base - moved).abs() <= 1e-7 * base);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_spikes(&mut rng, 4, 25);
        let g = random_partition(&mut rng, 25, 3);
        let xc = center(&x);
        let s1 = scatter(&xc);
        let s2 = within_scatter_centered(&xc, &g).unwrap();
        let w = DMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
        let grad = trace_ratio_gradient(&s1, &s2, &w).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            for k in 0..2 {
                let mut wp = w.clone();
                wp[(i, k)] += h;
                let mut wm = w.clone();
                wm[(i, k)] -= h;
                let fd = (trace_ratio(&s1, &s2, &wp, Ridge::None).unwrap().value
                    - trace_ratio(&s1, &s2, &wm, Ridge::None).unwrap().value)
                    / (2.0 * h);
                assert!((fd - grad[(i, k)]).abs() <= 1e-4 * grad.amax());
            }
        }
    }

    #[test]
    fn pca_examples() {
        // Points on the line y = 2x.
        let x = spikes(&[&[-2.0, -1.0, 0.0, 1.0, 2.0], &[-4.0, -2.0, 0.0, 2.0, 4.0]]);
        let w = pca_init(&x, 1).unwrap();
        let dir = w.matrix().column(0);
        assert!((dir[1] / dir[0] - 2.0).abs() < 1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_spikes(&mut rng, 4, 12);
        let w = pca_init(&x, 4).unwrap();
        let s1 = total_scatter(&x);
        assert!((captured_variance(&s1, w.matrix()) - s1.trace()).abs() < 1e-10 * s1.trace());
    }

    #[test]
    fn pca_beats_random_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_spikes(&mut rng, 6, 40);
        let s1 = total_scatter(&x);
        let best = captured_variance(&s1, pca_init(&x, 3).unwrap().matrix());
        for _ in 0..200 {
            let r = DMatrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
            let q = Projection::orthonormalize(&r).unwrap();
            assert!(captured_variance(&s1, q.matrix()) <= best + 1e-10);
        }
    }

    #[test]
    fn pca_clips_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_spikes(&mut rng, 5, 3);
        assert_eq!(pca_init(&x, 4).unwrap().m(), 2);
    }

    #[test]
    fn whitening_gives_identity_scatter() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_spikes(&mut rng, 6, 50);
        let w = pca_init(&x, 3).unwrap();
        let y = whitened_embedding(&x, &w, Ridge::None).unwrap();
        assert!((&y * y.transpose() - DMatrix::identity(3, 3)).amax() < 1e-7);

        let x = spikes(&[&[-1.0, 0.5, 0.5], &[0.0, 0.0, 0.0]]);
        let w = Projection::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let y = whitened_embedding(&x, &w, Ridge::None).unwrap();
        assert!((y.norm_squared() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn whitening_isotropic_data_is_scaled_isometry() {
        // Orthogonal design: the four points (±1, 0), (0, ±1) have S1 = 2I.
        let x = spikes(&[&[1.0, -1.0, 0.0, 0.0], &[0.0, 0.0, 1.0, -1.0]]);
        let w = Projection::new(DMatrix::identity(2, 2)).unwrap();
        let y = whitened_embedding(&x, &w, Ridge::None).unwrap();
        let expected = center(&x) / 2f64.sqrt();
        assert!((y - expected).amax() < 1e-12);
    }

    #[test]
    fn centers_examples() {
        let y = DMatrix::from_row_slice(1, 4, &[0.0, 1.0, 10.0, 12.0]);
        let m = centers(&y, &Partition::new(vec![0, 0, 1, 1], 2).unwrap()).unwrap();
        assert_eq!(m.as_slice(), &[0.5, 11.0]);
        let m = centers(&y, &Partition::new(vec![0; 4], 1).unwrap()).unwrap();
        assert_eq!(m.as_slice(), &[5.75]);
        let m = centers(&y, &Partition::new(vec![0, 1, 2, 3], 4).unwrap()).unwrap();
        assert_eq!(m, y);
    }

    #[test]
    fn orthonormalize_rejects_dependent_columns() {
        let w = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        assert!(Projection::orthonormalize(&w).is_err());
    }
}
