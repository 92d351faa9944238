//! Dense factorizations shared by every other module.
//!
//! All routines are thin wrappers over `nalgebra` that pin down ordering
//! and sign conventions so that closed-form solutions are reproducible.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: DVector<f64>,
    /// Column `j` pairs with `values[j]`.
    pub vectors: DMatrix<f64>,
}

impl SymEig {
    /// The first `k` eigenvectors as a `m × k` matrix.
    pub fn leading(&self, k: usize) -> DMatrix<f64> {
        self.vectors.columns(0, k).into_owned()
    }

    /// The last `k` eigenvectors, ordered by increasing eigenvalue.
    pub fn trailing(&self, k: usize) -> DMatrix<f64> {
        let m = self.vectors.ncols();
        DMatrix::from_fn(self.vectors.nrows(), k, |i, j| self.vectors[(i, m - 1 - j)])
    }
}

fn ensure_finite(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        invalid(format!("{what} has non-finite entries"))
    }
}

/// Makes the entry of largest magnitude in every column nonnegative.
/// Ties go to the lowest row index.
pub(crate) fn fix_column_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0;
        let mut best_abs = -1.0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Symmetric eigendecomposition. The input is symmetrized as `(A + Aᵀ)/2`.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<SymEig> {
    if !a.is_square() {
        return invalid(format!("sym_eig expects a square matrix, got {}x{}", a.nrows(), a.ncols()));
    }
    ensure_finite(a, "sym_eig input")?;
    let sym = (a + a.transpose()) * 0.5;
    let m = sym.nrows();
    let eig = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let values = DVector::from_iterator(m, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);
    fix_column_signs(&mut vectors);
    Ok(SymEig { values, vectors })
}

/// Orthonormal polar factor `A (AᵀA)^{-1/2}` of a tall matrix, via thin SVD.
pub fn polar_factor(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (p, q) = a.shape();
    if p < q {
        return invalid(format!("polar_factor needs p >= q, got {p}x{q}"));
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateRetraction);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= 1e-12 * smax {
        return Err(Error::DegenerateRetraction);
    }
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    Ok(u * v_t)
}

/// Principal angles between `span(U)` and `span(V)` in ascending order.
///
/// `U` is `p × a`, `V` is `p × b` with `a <= b`; both orthonormal.
pub fn principal_angles(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<Vec<f64>> {
    if u.nrows() != v.nrows() {
        return invalid(format!(
            "principal_angles: ambient dimensions differ ({} vs {})",
            u.nrows(),
            v.nrows()
        ));
    }
    if u.ncols() > v.ncols() {
        return invalid(format!(
            "principal_angles: first basis has more columns ({}) than the second ({})",
            u.ncols(),
            v.ncols()
        ));
    }
    if u.ncols() == 0 {
        return Ok(Vec::new());
    }
    let inner = u.transpose() * v;
    let sv = inner.singular_values();
    let mut angles: Vec<f64> = sv.iter().map(|s| s.clamp(0.0, 1.0).acos()).collect();
    angles.sort_by(f64::total_cmp);
    angles.truncate(u.ncols());
    Ok(angles)
}

/// Generalized Grassmann distance: ℓ²-norm of the principal angles.
pub fn subspace_distance(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<f64> {
    let (a, b) = if u.ncols() <= v.ncols() { (u, v) } else { (v, u) };
    Ok(principal_angles(a, b)?.iter().map(|t| t * t).sum::<f64>().sqrt())
}

/// Descending generalized eigenvalues of the pencil `(A, B)` for `B ≻ 0`.
/// Returns `None` when the Cholesky factorization of `B` fails.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DVector<f64>> {
    let bs = (b + b.transpose()) * 0.5;
    let chol = bs.cholesky()?;
    let l = chol.l();
    let linv = l.clone().try_inverse()?;
    let c = &linv * a * linv.transpose();
    sym_eig(&c).ok().map(|e| e.values)
}

/// A matrix `F` with `F Fᵀ = A` for symmetric PSD `A`, built from the
/// eigendecomposition (works for singular `A`). Fails on negative spectrum.
pub fn psd_factor(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eig(a)?;
    let scale = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    if eig.values.iter().any(|&l| l < -1e-10 * scale) {
        return invalid("matrix is not positive semi-definite");
    }
    // Round-off eigenvalues would leak O(√ε) mass outside the range of `A`.
    let mut f = eig.vectors.clone();
    for (j, mut col) in f.column_iter_mut().enumerate() {
        let l = eig.values[j];
        col *= if l > 1e-12 * scale { l.sqrt() } else { 0.0 };
    }
    Ok(f)
}

/// Numerical rank of a symmetric PSD matrix with relative threshold `rel_tol`.
pub fn psd_rank(a: &DMatrix<f64>, rel_tol: f64) -> Result<usize> {
    let eig = sym_eig(a)?;
    let top = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(eig.values.iter().filter(|&&l| l > rel_tol * top && top > 0.0).count())
}

pub(crate) fn orthonormality_error(u: &DMatrix<f64>) -> f64 {
    let q = u.ncols();
    (u.transpose() * u - DMatrix::<f64>::identity(q, q)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    /// Modified Gram–Schmidt; independent of the SVD path under test.
    fn gram_schmidt(a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut q = a.clone();
        for j in 0..q.ncols() {
            for i in 0..j {
                let dot = q.column(i).dot(&q.column(j));
                let ci = q.column(i).into_owned();
                q.column_mut(j).axpy(-dot, &ci, 1.0);
            }
            let n = q.column(j).norm();
            q.column_mut(j).unscale_mut(n);
        }
        q
    }

    #[test]
    fn sym_eig_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 2.0]));
        let e = sym_eig(&a).unwrap();
        assert_eq!(e.values.as_slice(), &[4.0, 2.0, 1.0]);
        let expected = DMatrix::from_row_slice(3, 3, &[0., 0., 1., 1., 0., 0., 0., 1., 0.]);
        assert!((e.vectors - expected).norm() < 1e-14);
    }

    #[test]
    fn sym_eig_identity_and_swap() {
        let e = sym_eig(&DMatrix::identity(3, 3)).unwrap();
        assert!(e.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!((e.vectors.transpose() * &e.vectors - DMatrix::identity(3, 3)).norm() < 1e-12);

        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let e = sym_eig(&a).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14 && (e.values[1] + 1.0).abs() < 1e-14);
        let v0 = e.vectors.column(0);
        let v1 = e.vectors.column(1);
        assert!((v0[0] - FRAC_1_SQRT_2).abs() < 1e-12 && (v0[1] - FRAC_1_SQRT_2).abs() < 1e-12);
        // (1,-1)/√2 up to the tie-breaking sign rule: both entries have equal magnitude,
        // so the first must be nonnegative.
        assert!((v1[0] - FRAC_1_SQRT_2).abs() < 1e-12 && (v1[1] + FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn sym_eig_rejects_nan() {
        let mut a = DMatrix::<f64>::identity(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(sym_eig(&a), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn sym_eig_reconstruction_and_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let g = gaussian(7, 7, &mut rng);
            let a = &g + g.transpose();
            let e = sym_eig(&a).unwrap();
            let recon = &e.vectors * DMatrix::from_diagonal(&e.values) * e.vectors.transpose();
            assert!((recon - &a).norm() <= 1e-10 * a.norm());
            assert!(orthonormality_error(&e.vectors) <= 1e-12);
            assert!((e.values.sum() - a.trace()).abs() <= 1e-10 * a.norm());
            assert!(e.values.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn polar_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = gram_schmidt(&gaussian(5, 3, &mut rng));
        assert!((polar_factor(&u).unwrap() - &u).norm() < 1e-12);

        let a = DMatrix::from_row_slice(3, 2, &[2., 0., 0., 3., 0., 0.]);
        let expected = DMatrix::from_row_slice(3, 2, &[1., 0., 0., 1., 0., 0.]);
        assert!((polar_factor(&a).unwrap() - expected).norm() < 1e-14);
    }

    #[test]
    fn polar_maximizes_alignment_against_random_candidates() {
        let a = DMatrix::from_row_slice(3, 2, &[1., 1., 0., 1., 0., 0.]);
        let u = polar_factor(&a).unwrap();
        assert!(orthonormality_error(&u) <= 1e-12);
        let best = (u.transpose() * &a).trace();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let cand = gram_schmidt(&gaussian(3, 2, &mut rng));
            assert!((cand.transpose() * &a).trace() <= best + 1e-12);
        }
    }

    #[test]
    fn polar_rank_deficient() {
        let a = DMatrix::from_row_slice(3, 2, &[1., 1., 1., 1., 0., 0.]);
        assert!(matches!(polar_factor(&a), Err(Error::DegenerateRetraction)));
    }

    #[test]
    fn polar_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = gaussian(8, 4, &mut rng);
        let u = polar_factor(&a).unwrap();
        assert!((polar_factor(&u).unwrap() - &u).norm() < 1e-12);
    }

    #[test]
    fn principal_angle_examples() {
        let e1 = DMatrix::from_column_slice(3, 1, &[1., 0., 0.]);
        let e2 = DMatrix::from_column_slice(3, 1, &[0., 1., 0.]);
        let diag = DMatrix::from_column_slice(3, 1, &[FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.]);
        assert!(principal_angles(&e1, &e1).unwrap()[0].abs() < 1e-7);
        assert!((principal_angles(&e1, &e2).unwrap()[0] - FRAC_PI_2).abs() < 1e-14);
        assert!((principal_angles(&e1, &diag).unwrap()[0] - FRAC_PI_4).abs() < 1e-12);
        let plane = DMatrix::from_column_slice(3, 2, &[1., 0., 0., 0., 1., 0.]);
        assert!(matches!(principal_angles(&plane, &e1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn principal_angles_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = gram_schmidt(&gaussian(6, 3, &mut rng));
        let v = gram_schmidt(&gaussian(6, 3, &mut rng));
        let a = principal_angles(&u, &v).unwrap();
        let b = principal_angles(&v, &u).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn pencil_scaling() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        let l1 = generalized_eigenvalues(&a, &DMatrix::identity(2, 2)).unwrap();
        let l2 = generalized_eigenvalues(&a, &(DMatrix::identity(2, 2) * 2.0)).unwrap();
        assert!((l1[0] - 3.0).abs() < 1e-14 && (l1[1] - 1.0).abs() < 1e-14);
        assert!((l2[0] - 1.5).abs() < 1e-14 && (l2[1] - 0.5).abs() < 1e-14);
    }
}
