//! Dense symmetric linear algebra used by the solver.
//!
//! Everything here works on small matrices (d up to a few hundred), so the
//! kernels are plain dense routines: a symmetric eigendecomposition, a
//! symmetric-definite generalized eigensolver built on Cholesky reduction, and
//! the inverse square root of an SPD matrix.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative size of the automatic ridge, scaled by `trace / dim` of the matrix.
pub const AUTO_RIDGE_FACTOR: f64 = 1e-10;

/// Number of tenfold escalations tried by [`Ridge::Auto`] before giving up.
const AUTO_RIDGE_STEPS: i32 = 6;

/// Smallest squared Cholesky pivot, relative to the largest diagonal entry,
/// that still counts as positive definite.
const PIVOT_FLOOR: f64 = 1e-14;

/// Regularization policy for matrices that must be inverted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ridge {
    /// Never regularize; a singular matrix is an error.
    None,
    /// Always add this multiple of the identity.
    Fixed(f64),
    /// Add `AUTO_RIDGE_FACTOR * trace / dim` only when the positive-definiteness
    /// check fails, escalating tenfold a few times if needed.
    #[default]
    Auto,
}

/// A real symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps `m` after checking it is square, finite and symmetric to within
    /// `1e-12 * max(1, max|m_ij|)`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let scale = m.amax().max(1.0);
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(SymMatrix(m))
    }

    /// Replaces `m` by `(m + mᵀ) / 2`. Panics if `m` is not square.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "symmetrize needs a square matrix");
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// `wᵀ · self · w`, symmetrized.
    pub fn congruence(&self, w: &DMatrix<f64>) -> SymMatrix {
        SymMatrix::symmetrize(w.transpose() * &self.0 * w)
    }
}

/// Eigenvalues sorted in non-increasing order with matching column eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigPairs {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigPairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Keeps only the leading `k` pairs.
    pub fn truncate(self, k: usize) -> EigPairs {
        let k = k.min(self.len());
        EigPairs {
            values: self.values.rows(0, k).into_owned(),
            vectors: self.vectors.columns(0, k).into_owned(),
        }
    }
}

/// Flips each column so that its largest-magnitude entry is positive.
pub(crate) fn orient_columns(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0usize;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Full eigendecomposition of a symmetric matrix, values descending.
pub fn sym_eig(a: &SymMatrix) -> Result<EigPairs> {
    if a.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let eig = SymmetricEigen::new(a.0.clone());
    let mut order: Vec<usize> = (0..a.dim()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = eig.eigenvectors.select_columns(order.iter());
    orient_columns(&mut vectors);
    Ok(EigPairs { values, vectors })
}

fn try_cholesky(a: &DMatrix<f64>, ridge: f64) -> Option<Cholesky<f64, Dyn>> {
    let mut m = a.clone();
    if ridge != 0.0 {
        for i in 0..m.nrows() {
            m[(i, i)] += ridge;
        }
    }
    let max_diag = m.diagonal().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let chol = Cholesky::new(m)?;
    let l = chol.l_dirty();
    let floor = PIVOT_FLOOR * max_diag;
    let ok = (0..l.nrows()).all(|i| {
        let p = l[(i, i)];
        p.is_finite() && p * p > floor
    });
    ok.then_some(chol)
}

/// Cholesky factor of `a + ridge·I` under the given policy. `fallback_scale`
/// replaces `trace(a)/dim` when `a` has no positive trace (e.g. `a = 0`).
pub(crate) fn ridged_cholesky(
    a: &DMatrix<f64>,
    ridge: Ridge,
    fallback_scale: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    match ridge {
        Ridge::None => try_cholesky(a, 0.0)
            .map(|c| (c, 0.0))
            .ok_or(Error::SingularDenominator { ridge: 0.0 }),
        Ridge::Fixed(r) => {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(Error::InvalidArgument(format!("ridge must be >= 0, got {r}")));
            }
            try_cholesky(a, r)
                .map(|c| (c, r))
                .ok_or(Error::SingularDenominator { ridge: r })
        }
        Ridge::Auto => {
            if let Some(c) = try_cholesky(a, 0.0) {
                return Ok((c, 0.0));
            }
            let dim = a.nrows().max(1) as f64;
            let own = a.trace() / dim;
            let scale = if own > 0.0 && own.is_finite() {
                own
            } else {
                fallback_scale
            };
            if !(scale > 0.0) || !scale.is_finite() {
                return Err(Error::SingularDenominator { ridge: 0.0 });
            }
            let base = AUTO_RIDGE_FACTOR * scale;
            let mut r = base;
            for _ in 0..=AUTO_RIDGE_STEPS {
                if let Some(c) = try_cholesky(a, r) {
                    log::debug!("applied ridge {r:e} to a {}x{} matrix", a.nrows(), a.ncols());
                    return Ok((c, r));
                }
                r *= 10.0;
            }
            Err(Error::SingularDenominator { ridge: r / 10.0 })
        }
    }
}

/// Top-`m` pairs of `s1·w = λ·(s2 + ridge·I)·w`, solved by Cholesky reduction
/// to a standard symmetric problem. Returns the pairs (unit-norm eigenvectors)
/// and the ridge actually applied.
pub fn gen_eig_spd(s1: &SymMatrix, s2: &SymMatrix, m: usize, ridge: Ridge) -> Result<(EigPairs, f64)> {
    let d = s1.dim();
    if s2.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "s1 is {d}x{d} but s2 is {}x{}",
            s2.dim(),
            s2.dim()
        )));
    }
    if m == 0 || m > d {
        return Err(Error::DimensionMismatch(format!(
            "requested {m} eigenpairs from a {d}-dimensional problem"
        )));
    }
    if s1.0.iter().chain(s2.0.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }

    let (chol, applied) = ridged_cholesky(&s2.0, ridge, s1.trace() / d as f64)?;
    let l = chol.l();
    // C = L⁻¹ S1 L⁻ᵀ
    let left = l
        .solve_lower_triangular(&s1.0)
        .ok_or(Error::SingularDenominator { ridge: applied })?;
    let c = l
        .solve_lower_triangular(&left.transpose())
        .ok_or(Error::SingularDenominator { ridge: applied })?;
    let reduced = sym_eig(&SymMatrix::symmetrize(c))?.truncate(m);

    let mut w = l
        .transpose()
        .solve_upper_triangular(&reduced.vectors)
        .ok_or(Error::SingularDenominator { ridge: applied })?;
    for mut col in w.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    orient_columns(&mut w);
    Ok((
        EigPairs {
            values: reduced.values,
            vectors: w,
        },
        applied,
    ))
}

/// `(a + ridge·I)^{-1/2}` together with the ridge applied.
pub(crate) fn inv_sqrt_spd_ridged(a: &SymMatrix, ridge: Ridge) -> Result<(SymMatrix, f64)> {
    if a.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (_, applied) = ridged_cholesky(&a.0, ridge, 0.0)?;
    let mut shifted = a.0.clone();
    for i in 0..shifted.nrows() {
        shifted[(i, i)] += applied;
    }
    let eig = sym_eig(&SymMatrix(shifted))?;
    if eig.values.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::SingularDenominator { ridge: applied });
    }
    let scaled = DVector::from_iterator(eig.len(), eig.values.iter().map(|v| v.sqrt().recip()));
    let v = &eig.vectors;
    let out = v * DMatrix::from_diagonal(&scaled) * v.transpose();
    Ok((SymMatrix::symmetrize(out), applied))
}

/// Inverse square root of `a + ridge·I` for symmetric positive-definite input.
pub fn inv_sqrt_spd(a: &SymMatrix, ridge: Ridge) -> Result<SymMatrix> {
    inv_sqrt_spd_ridged(a, ridge).map(|(m, _)| m)
}

/// `tr{(b + ridge·I)⁻¹ a}` for small symmetric `a`, `b`; returns the value and
/// the ridge applied to `b`.
pub(crate) fn ratio_trace(a: &SymMatrix, b: &SymMatrix, ridge: Ridge) -> Result<(f64, f64)> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "numerator {}x{} vs denominator {}x{}",
            a.dim(),
            a.dim(),
            b.dim(),
            b.dim()
        )));
    }
    let (chol, applied) = ridged_cholesky(&b.0, ridge, a.trace() / a.dim() as f64)?;
    let value = chol.solve(&a.0).trace();
    if !value.is_finite() {
        return Err(Error::SingularDenominator { ridge: applied });
    }
    Ok((value, applied))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, d: usize) -> SymMatrix {
        let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        SymMatrix::symmetrize(m)
    }

    fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> SymMatrix {
        let m = DMatrix::from_fn(d, d + 3, |_, _| rng.random_range(-1.0..1.0));
        SymMatrix::symmetrize(&m * m.transpose() + DMatrix::identity(d, d) * 0.1)
    }

    #[test]
    fn sym_eig_diagonal() {
        let e = sym_eig(&SymMatrix::from_diagonal(&[1.0, 4.0])).unwrap();
        assert_eq!(e.values.as_slice(), &[4.0, 1.0]);
        assert_abs_diff_eq!(e.vectors[(1, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.vectors[(0, 1)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn sym_eig_identity() {
        let e = sym_eig(&SymMatrix::identity(3)).unwrap();
        for v in e.values.iter() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn sym_eig_reconstructs_random_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_sym(&mut rng, 5);
        let e = sym_eig(&a).unwrap();
        let recon = &e.vectors * DMatrix::from_diagonal(&e.values) * e.vectors.transpose();
        assert!((recon - a.as_matrix()).amax() < 1e-8);
        let gram = e.vectors.transpose() * &e.vectors;
        assert!((gram - DMatrix::identity(5, 5)).amax() < 1e-8);
        for w in e.values.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn sym_eig_rejects_nan() {
        let mut m = DMatrix::identity(2, 2);
        m[(0, 0)] = f64::NAN;
        assert!(matches!(SymMatrix::new(m.clone()), Err(Error::NonFinite)));
        assert!(matches!(sym_eig(&SymMatrix(m)), Err(Error::NonFinite)));
    }

    #[test]
    fn sign_convention_largest_entry_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let e = sym_eig(&random_sym(&mut rng, 6)).unwrap();
        for col in e.vectors.column_iter() {
            let imax = col.iamax();
            assert!(col[imax] > 0.0);
        }
    }

    #[test]
    fn gen_eig_diagonal_pair() {
        let s1 = SymMatrix::from_diagonal(&[2.0, 1.0]);
        let s2 = SymMatrix::from_diagonal(&[1.0, 2.0]);
        let (e, ridge) = gen_eig_spd(&s1, &s2, 1, Ridge::None).unwrap();
        assert_eq!(ridge, 0.0);
        assert_abs_diff_eq!(e.values[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.vectors[(0, 0)].abs(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.vectors[(1, 0)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gen_eig_identity_denominator_is_standard_evd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s1 = random_sym(&mut rng, 5);
        let (g, _) = gen_eig_spd(&s1, &SymMatrix::identity(5), 3, Ridge::None).unwrap();
        let e = sym_eig(&s1).unwrap().truncate(3);
        assert!((g.values - e.values).amax() < 1e-10);
        assert!((g.vectors - e.vectors).amax() < 1e-8);
    }

    #[test]
    fn gen_eig_matches_explicit_inverse_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s1 = random_spd(&mut rng, 4);
        let s2 = random_spd(&mut rng, 4);
        let (g, _) = gen_eig_spd(&s1, &s2, 2, Ridge::None).unwrap();

        // Eigenvalues of s2⁻¹ s1 through a dense inverse and a real Schur form.
        let prod = s2.as_matrix().clone().try_inverse().unwrap() * s1.as_matrix();
        let mut oracle: Vec<f64> = prod
            .schur()
            .eigenvalues()
            .expect("real spectrum")
            .iter()
            .copied()
            .collect();
        oracle.sort_by(|a, b| b.total_cmp(a));
        for k in 0..2 {
            assert!((g.values[k] - oracle[k]).abs() < 1e-7 * oracle[0].abs().max(1.0));
        }

        let norm = s1.as_matrix().norm() + s2.as_matrix().norm();
        for k in 0..2 {
            let w = g.vectors.column(k);
            let r = s1.as_matrix() * w - s2.as_matrix() * w * g.values[k];
            assert!(r.norm() <= 1e-7 * norm);
        }
    }

    #[test]
    fn gen_eig_scale_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s1 = random_spd(&mut rng, 5);
        let s2 = random_spd(&mut rng, 5);
        let (a, _) = gen_eig_spd(&s1, &s2, 3, Ridge::None).unwrap();
        let alpha = 37.5;
        let s1b = SymMatrix::symmetrize(s1.as_matrix() * alpha);
        let s2b = SymMatrix::symmetrize(s2.as_matrix() * alpha);
        let (b, _) = gen_eig_spd(&s1b, &s2b, 3, Ridge::None).unwrap();
        for k in 0..3 {
            assert!((a.values[k] - b.values[k]).abs() <= 1e-8 * a.values[k].abs());
        }
    }

    #[test]
    fn gen_eig_singular_denominator() {
        let s1 = SymMatrix::from_diagonal(&[1.0, 1.0]);
        let s2 = SymMatrix::from_diagonal(&[1.0, 0.0]);
        assert!(matches!(
            gen_eig_spd(&s1, &s2, 1, Ridge::None),
            Err(Error::SingularDenominator { .. })
        ));
        let (e, ridge) = gen_eig_spd(&s1, &s2, 1, Ridge::Auto).unwrap();
        assert!(ridge > 0.0);
        assert!(e.values[0] > 1e6);
        assert_abs_diff_eq!(e.vectors[(1, 0)], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn gen_eig_dimension_errors() {
        let a = SymMatrix::identity(2);
        let b = SymMatrix::identity(3);
        assert!(matches!(
            gen_eig_spd(&a, &b, 1, Ridge::None),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            gen_eig_spd(&a, &a, 3, Ridge::None),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn inv_sqrt_diagonal_and_identity() {
        let r = inv_sqrt_spd(&SymMatrix::from_diagonal(&[4.0, 9.0]), Ridge::None).unwrap();
        assert_abs_diff_eq!(r.as_matrix()[(0, 0)], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(r.as_matrix()[(1, 1)], 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.as_matrix()[(0, 1)], 0.0, epsilon = 1e-14);
        let i = inv_sqrt_spd(&SymMatrix::identity(3), Ridge::None).unwrap();
        assert!((i.into_inner() - DMatrix::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn inv_sqrt_defining_identity_and_commutes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_spd(&mut rng, 3);
        let r = inv_sqrt_spd(&a, Ridge::None).unwrap();
        let r = r.as_matrix();
        let id = r * a.as_matrix() * r;
        assert!((id - DMatrix::identity(3, 3)).amax() < 1e-8);
        let comm = r * a.as_matrix() - a.as_matrix() * r;
        assert!(comm.amax() < 1e-8);
    }

    #[test]
    fn inv_sqrt_rejects_indefinite() {
        let a = SymMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(matches!(
            inv_sqrt_spd(&a, Ridge::None),
            Err(Error::SingularDenominator { .. })
        ));
    }

    #[test]
    fn ratio_trace_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_spd(&mut rng, 3);
        let b = random_spd(&mut rng, 3);
        let (v, _) = ratio_trace(&a, &b, Ridge::None).unwrap();
        let oracle = (b.as_matrix().clone().try_inverse().unwrap() * a.as_matrix()).trace();
        assert!((v - oracle).abs() < 1e-10 * oracle.abs());
    }

    #[test]
    fn fixed_ridge_rejects_negative() {
        assert!(matches!(
            ratio_trace(&SymMatrix::identity(2), &SymMatrix::identity(2), Ridge::Fixed(-1.0)),
            Err(Error::InvalidArgument(_))
        ));
    }
}
