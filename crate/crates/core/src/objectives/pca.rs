use nalgebra::{DMatrix, DVector};

use super::{check_ambient, column_weights, scale_columns, weighted_quadratic_trace, Dataset};
use crate::descent::Objective;
use crate::error::Result;
use crate::flag_manifold::{FlagPoint, FlagSignature};
use crate::numerics::sym_eig;

/// Multilevel reconstruction error `‖X − Π̄ X‖_F²` for an average projector
/// `Π̄`. Expanding the square block by block gives
/// `tr(XXᵀ) − Σ_k (1 − w_k²) tr(U_kᵀ XXᵀ U_k)` with `w_k = (k−1)/d`.
#[derive(Debug, Clone)]
pub struct NestedPca {
    signature: FlagSignature,
    scatter: DMatrix<f64>,
    total: f64,
    /// `1 − w_k²` per column.
    coeffs: DVector<f64>,
}

pub fn nested_pca_objective(x: &Dataset, sig: &FlagSignature) -> Result<NestedPca> {
    check_ambient(sig, x.p(), "dataset")?;
    let scatter = x.scatter();
    let coeffs = column_weights(sig, |k, d| 1.0 - (k as f64 / d as f64).powi(2));
    Ok(NestedPca { signature: sig.clone(), total: scatter.trace(), scatter, coeffs })
}

impl Objective for NestedPca {
    fn signature(&self) -> &FlagSignature {
        &self.signature
    }

    fn value(&self, basis: &DMatrix<f64>) -> f64 {
        self.total - weighted_quadratic_trace(&self.scatter, basis, &self.coeffs)
    }

    fn euclid_grad(&self, basis: &DMatrix<f64>) -> DMatrix<f64> {
        scale_columns(&self.scatter * basis, &self.coeffs) * -2.0
    }
}

/// A vanishing eigengap at the boundary of some level: the optimal flag is
/// not unique there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonUniqueWarning {
    /// 0-based level index.
    pub level: usize,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct PcaClosedForm {
    pub point: FlagPoint,
    /// Eigenvalues of the sample covariance, descending.
    pub eigenvalues: DVector<f64>,
    pub warnings: Vec<NonUniqueWarning>,
}

pub const EIGENGAP_TOL: f64 = 1e-10;

/// Global minimizer of [`NestedPca`]: the leading eigenvectors of the sample
/// covariance, nested in order.
pub fn nested_pca_closed_form(x: &Dataset, sig: &FlagSignature) -> Result<PcaClosedForm> {
    check_ambient(sig, x.p(), "dataset")?;
    let cov = x.scatter() / (x.n().max(1) as f64);
    let eig = sym_eig(&cov)?;
    let p = sig.p();
    let warnings = sig
        .dims()
        .iter()
        .enumerate()
        .filter(|&(_, &q)| q < p)
        .filter_map(|(level, &q)| {
            let gap = eig.values[q - 1] - eig.values[q];
            (gap < EIGENGAP_TOL).then_some(NonUniqueWarning { level, gap })
        })
        .collect();
    let point = FlagPoint::new(sig.clone(), eig.leading(sig.q()))?;
    Ok(PcaClosedForm { point, eigenvalues: eig.values, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descent::{multi_restart, restart_seeds, DescentConfig};
    use crate::flag_manifold::{average_projector, flag_distance, random_uniform};
    use crate::objectives::test_util::{gaussian, grad_rel_error, rotate_blocks};
    use crate::objectives::{center, CenterMode};

    fn sig(p: usize, dims: &[usize]) -> FlagSignature {
        FlagSignature::new(p, dims.to_vec()).unwrap()
    }

    /// Samples whose scatter is exactly `n · diag(s)`.
    fn diag_cov_data(s: &[f64]) -> Dataset {
        let p = s.len();
        let mut x = DMatrix::zeros(p, 2 * p);
        for (i, &si) in s.iter().enumerate() {
            x[(i, 2 * i)] = (p as f64 * si).sqrt();
            x[(i, 2 * i + 1)] = -(p as f64 * si).sqrt();
        }
        Dataset::new(x).unwrap()
    }

    #[test]
    fn perfect_reconstruction_is_zero() {
        let s = sig(4, &[2]);
        let u = random_uniform(&s, 3).unwrap();
        let x = Dataset::new(u.basis() * gaussian(2, 7, 1)).unwrap();
        let obj = nested_pca_objective(&x, &s).unwrap();
        assert!(obj.value(u.basis()).abs() < 1e-12);
    }

    #[test]
    fn single_sample_off_flag() {
        let s = sig(3, &[1, 2]);
        let x = Dataset::new(DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0])).unwrap();
        let obj = nested_pca_objective(&x, &s).unwrap();
        assert!((obj.value(FlagPoint::identity(s).basis()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eigen_flag_value() {
        let x = diag_cov_data(&[4.0, 2.0, 1.0]);
        let n = x.n() as f64;
        let obj = nested_pca_objective(&x, &sig(3, &[1, 2])).unwrap();
        let v = obj.value(FlagPoint::identity(sig(3, &[1, 2])).basis());
        assert!((v - 1.5 * n).abs() < 1e-12);
    }

    #[test]
    fn matches_projector_form() {
        let s = sig(6, &[1, 3, 4]);
        let x = Dataset::new(gaussian(6, 20, 2)).unwrap();
        let obj = nested_pca_objective(&x, &s).unwrap();
        for seed in 0..5 {
            let u = random_uniform(&s, seed).unwrap();
            let pi = average_projector(&u).unwrap();
            let direct = (x.samples() - &pi * x.samples()).norm_squared();
            assert!((obj.value(u.basis()) - direct).abs() < 1e-10 * direct);
        }
    }

    #[test]
    fn quotient_invariance_and_gradient() {
        let s = sig(7, &[2, 3, 5]);
        let x = Dataset::new(gaussian(7, 30, 4)).unwrap();
        let obj = nested_pca_objective(&x, &s).unwrap();
        for seed in 0..10 {
            let u = random_uniform(&s, 100 + seed).unwrap();
            let v = obj.value(u.basis());
            assert!((obj.value(&rotate_blocks(&u, seed)) - v).abs() < 1e-10 * v.abs().max(1.0));
            assert!(grad_rel_error(&obj, u.basis()) < 1e-5);
        }
    }

    #[test]
    fn closed_form_on_diagonal_covariance() {
        let x = diag_cov_data(&[4.0, 2.0, 1.0]);
        let cf = nested_pca_closed_form(&x, &sig(3, &[1, 2])).unwrap();
        assert!(cf.warnings.is_empty());
        assert!((cf.point.basis() - DMatrix::<f64>::identity(3, 2)).norm() < 1e-12);
    }

    #[test]
    fn isotropic_data_warns() {
        let x = diag_cov_data(&[1.0, 1.0, 1.0]);
        let cf = nested_pca_closed_form(&x, &sig(3, &[1, 2])).unwrap();
        assert_eq!(cf.warnings.len(), 2);
    }

    #[test]
    fn closed_form_beats_descent() {
        let s = sig(6, &[1, 3]);
        let x = center(&Dataset::new(gaussian(6, 40, 9)).unwrap(), CenterMode::Mean).unwrap();
        let obj = nested_pca_objective(&x, &s).unwrap();
        let cf = nested_pca_closed_form(&x, &s).unwrap();
        let cfg = DescentConfig { max_iters: 3000, ..Default::default() };
        let (best, trace) = multi_restart(&obj, &restart_seeds(0, 3), &cfg).unwrap();
        assert!(obj.value(cf.point.basis()) <= trace.final_objective() + 1e-8);
        assert!(flag_distance(&best, &cf.point).unwrap().iter().all(|&t| t < 1e-3));
    }
}
