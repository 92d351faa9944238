use nalgebra::{DMatrix, DVector};

use super::{check_ambient, check_symmetric, column_weights, scale_columns, weighted_quadratic_trace};
use crate::descent::Objective;
use crate::error::{invalid, Result};
use crate::flag_manifold::FlagSignature;
use crate::numerics::sym_eig;

/// Pseudo-Huber width for the entrywise ℓ¹ penalty.
pub const SSC_SMOOTHING: f64 = 1e-8;

/// Normalized graph Laplacian plus sparsity weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SscProblem {
    laplacian: DMatrix<f64>,
    beta: f64,
}

impl SscProblem {
    pub fn new(laplacian: DMatrix<f64>, beta: f64) -> Result<Self> {
        check_symmetric(&laplacian, "Laplacian")?;
        if !(beta >= 0.0 && beta.is_finite()) {
            return invalid(format!("beta must be a nonnegative finite number, got {beta}"));
        }
        let laplacian = (&laplacian + laplacian.transpose()) * 0.5;
        let min = sym_eig(&laplacian)?.values.min();
        if min < -1e-8 {
            return invalid(format!("Laplacian is not PSD (min eigenvalue {min:e})"));
        }
        Ok(Self { laplacian, beta })
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n(&self) -> usize {
        self.laplacian.nrows()
    }
}

/// Smoothed `|m|`, shifted so that it vanishes at 0.
pub(crate) fn smooth_abs(m: f64) -> f64 {
    (m * m + SSC_SMOOTHING * SSC_SMOOTHING).sqrt() - SSC_SMOOTHING
}

/// Sum of [`smooth_abs`] over all entries.
pub fn smooth_l1(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|&v| smooth_abs(v)).sum()
}

/// `Σ_k w_k tr(U_kᵀ L U_k) + β ‖M‖₁` with `M = Σ_k w_k U_kU_kᵀ`, `w_k = d − k + 1`
/// and the ℓ¹ norm smoothed entrywise.
#[derive(Debug, Clone)]
pub struct Ssc {
    signature: FlagSignature,
    problem: SscProblem,
    weights: DVector<f64>,
}

pub fn ssc_objective(prob: &SscProblem, sig: &FlagSignature) -> Result<Ssc> {
    check_ambient(sig, prob.n(), "Laplacian")?;
    let weights = column_weights(sig, |k, d| (d - k) as f64);
    Ok(Ssc { signature: sig.clone(), problem: prob.clone(), weights })
}

impl Ssc {
    fn weighted_projector(&self, basis: &DMatrix<f64>) -> DMatrix<f64> {
        scale_columns(basis.clone(), &self.weights) * basis.transpose()
    }
}

impl Objective for Ssc {
    fn signature(&self) -> &FlagSignature {
        &self.signature
    }

    fn value(&self, basis: &DMatrix<f64>) -> f64 {
        let smooth = weighted_quadratic_trace(&self.problem.laplacian, basis, &self.weights);
        if self.problem.beta == 0.0 {
            return smooth;
        }
        smooth + self.problem.beta * smooth_l1(&self.weighted_projector(basis))
    }

    fn euclid_grad(&self, basis: &DMatrix<f64>) -> DMatrix<f64> {
        let mut g = self.problem.laplacian.clone();
        if self.problem.beta > 0.0 {
            let m = self.weighted_projector(basis);
            let eps2 = SSC_SMOOTHING * SSC_SMOOTHING;
            g += m.map(|v| v / (v * v + eps2).sqrt()) * self.problem.beta;
        }
        scale_columns(g * basis, &self.weights) * 2.0
    }
}
