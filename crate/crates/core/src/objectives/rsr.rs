use nalgebra::{DMatrix, DVector};

use super::{check_ambient, column_weights, scale_columns, Dataset};
use crate::descent::Objective;
use crate::error::Result;
use crate::flag_manifold::FlagSignature;

/// Floor applied to residual radicands before dividing by their square root.
pub const RSR_RADICAND_FLOOR: f64 = 1e-12;

/// Least absolute deviation `Σ_i ‖x_i − Π̄ x_i‖` with the average projector.
///
/// The squared residual of sample `i` reduces to
/// `r_i = ‖x_i‖² − Σ_k (1 − w_k²) ‖U_kᵀ x_i‖²`, `w_k = (k−1)/d`.
#[derive(Debug, Clone)]
pub struct RsrLad {
    signature: FlagSignature,
    samples: DMatrix<f64>,
    sq_norms: DVector<f64>,
    coeffs: DVector<f64>,
}

pub fn rsr_lad_objective(x: &Dataset, sig: &FlagSignature) -> Result<RsrLad> {
    check_ambient(sig, x.p(), "dataset")?;
    let samples = x.samples().clone();
    let sq_norms = DVector::from_iterator(samples.ncols(), samples.column_iter().map(|c| c.norm_squared()));
    let coeffs = column_weights(sig, |k, d| 1.0 - (k as f64 / d as f64).powi(2));
    Ok(RsrLad { signature: sig.clone(), samples, sq_norms, coeffs })
}

impl RsrLad {
    /// Squared residuals `r_i` and the projected coordinates `UᵀX`.
    fn radicands(&self, basis: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let proj = basis.transpose() * &self.samples;
        let r = DVector::from_fn(self.samples.ncols(), |i, _| {
            let captured: f64 = proj.column(i).iter().zip(self.coeffs.iter()).map(|(c, a)| a * c * c).sum();
            self.sq_norms[i] - captured
        });
        (r, proj)
    }

    /// Per-sample residual norms `‖x_i − Π̄ x_i‖`.
    pub fn residuals(&self, basis: &DMatrix<f64>) -> DVector<f64> {
        self.radicands(basis).0.map(|r| r.max(0.0).sqrt())
    }
}

impl Objective for RsrLad {
    fn signature(&self) -> &FlagSignature {
        &self.signature
    }

    fn value(&self, basis: &DMatrix<f64>) -> f64 {
        self.residuals(basis).sum()
    }

    fn euclid_grad(&self, basis: &DMatrix<f64>) -> DMatrix<f64> {
        let (r, proj) = self.radicands(basis);
        let inv = r.map(|ri| 1.0 / ri.max(RSR_RADICAND_FLOOR).sqrt());
        // −Σ_i x_i (a ⊙ Uᵀx_i)ᵀ / √r_i
        let weighted = scale_columns(proj.transpose(), &self.coeffs);
        let mut scaled = self.samples.clone();
        for (mut col, &s) in scaled.column_iter_mut().zip(inv.iter()) {
            col *= s;
        }
        -(scaled * weighted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flag_manifold::{average_projector, random_uniform, FlagPoint};
    use crate::objectives::test_util::{gaussian, grad_rel_error, rotate_blocks};

    fn sig(p: usize, dims: &[usize]) -> FlagSignature {
        FlagSignature::new(p, dims.to_vec()).unwrap()
    }

    #[test]
    fn point_on_subspace() {
        let s = sig(3, &[1]);
        let x = Dataset::new(DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0])).unwrap();
        let obj = rsr_lad_objective(&x, &s).unwrap();
        assert_eq!(obj.value(FlagPoint::identity(s).basis()), 0.0);
    }

    #[test]
    fn orthogonal_point_both_forms() {
        let s = sig(3, &[1, 2]);
        let x = Dataset::new(DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0])).unwrap();
        let basis = DMatrix::from_column_slice(3, 2, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let obj = rsr_lad_objective(&x, &s).unwrap();
        assert!((obj.value(&basis) - 1.0).abs() < 1e-15);
        let pi = average_projector(&FlagPoint::new(s, basis).unwrap()).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0, 0.5]));
        assert!((&pi - expected).norm() < 1e-15);
        assert!(((x.samples() - &pi * x.samples()).norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn grassmann_case() {
        let s = sig(5, &[2]);
        let x = Dataset::new(gaussian(5, 25, 7)).unwrap();
        let obj = rsr_lad_objective(&x, &s).unwrap();
        let u = random_uniform(&s, 2).unwrap();
        let resid = x.samples() - u.basis() * (u.basis().transpose() * x.samples());
        let direct: f64 = resid.column_iter().map(|c| c.norm()).sum();
        assert!((obj.value(u.basis()) - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn projector_form_invariance_gradient() {
        let s = sig(6, &[1, 2, 4]);
        let x = Dataset::new(gaussian(6, 30, 8)).unwrap();
        let obj = rsr_lad_objective(&x, &s).unwrap();
        for seed in 0..10 {
            let u = random_uniform(&s, 50 + seed).unwrap();
            let v = obj.value(u.basis());
            let pi = average_projector(&u).unwrap();
            let resid = x.samples() - &pi * x.samples();
            let direct: f64 = resid.column_iter().map(|c| c.norm()).sum();
            assert!((v - direct).abs() < 1e-10 * direct);
            assert!((obj.value(&rotate_blocks(&u, seed)) - v).abs() < 1e-10 * v);
            assert!(grad_rel_error(&obj, u.basis()) < 1e-5);
        }
    }
}
