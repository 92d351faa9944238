//! Flag-tricked objectives and their analytic Euclidean gradients.
//!
//! Every objective is written in Stiefel form: the average projector is never
//! materialized, and the per-block weights are folded into a column scaling
//! of the representative.

mod dataset;
mod dip;
mod pca;
mod rsr;
mod ssc;
mod trace_ratio;

pub use dataset::{center, geometric_median, CenterMode, Dataset};
pub use dip::{dip_mmd_objective, DipMmd, DipProblem};
pub use pca::{nested_pca_closed_form, nested_pca_objective, NestedPca, NonUniqueWarning, PcaClosedForm};
pub use rsr::{rsr_lad_objective, RsrLad, RSR_RADICAND_FLOOR};
pub use ssc::{ssc_objective, Ssc, SscProblem, SSC_SMOOTHING};
pub use trace_ratio::{build_lda_matrices, trace_ratio_objective, TraceRatio, TraceRatioProblem};

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::flag_manifold::FlagSignature;

/// Expands per-block weights `w(k, d)` (0-based `k`) to one weight per column.
pub(crate) fn column_weights(sig: &FlagSignature, w: impl Fn(usize, usize) -> f64) -> DVector<f64> {
    let d = sig.depth();
    DVector::from_iterator(sig.q(), sig.column_levels().into_iter().map(|k| w(k, d)))
}

/// `m · diag(w)`.
pub(crate) fn scale_columns(mut m: DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    for (mut col, &wj) in m.column_iter_mut().zip(w.iter()) {
        col *= wj;
    }
    m
}

/// `Σ_j w_j · u_jᵀ A u_j` for the columns `u_j` of `u`.
pub(crate) fn weighted_quadratic_trace(a: &DMatrix<f64>, u: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    let au = a * u;
    u.column_iter()
        .zip(au.column_iter())
        .zip(w.iter())
        .map(|((uj, auj), &wj)| wj * uj.dot(&auj))
        .sum()
}

pub(crate) fn check_ambient(sig: &FlagSignature, p: usize, what: &str) -> Result<()> {
    if sig.p() != p {
        return invalid(format!("{what} has ambient dimension {p} but the signature is {sig}"));
    }
    Ok(())
}

pub(crate) fn check_symmetric(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if !a.is_square() {
        return invalid(format!("{what} must be square"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return invalid(format!("{what} has non-finite entries"));
    }
    let scale = a.abs().max().max(1.0);
    if (a - a.transpose()).abs().max() > 1e-10 * scale {
        return invalid(format!("{what} is not symmetric"));
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod test_util {
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use crate::flag_manifold::{FlagPoint, FlagSignature};
    use crate::numerics::polar_factor;

    pub fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    /// Right-multiplies every block of the representative by a random rotation.
    pub fn rotate_blocks(x: &FlagPoint, seed: u64) -> DMatrix<f64> {
        let sig: &FlagSignature = x.signature();
        let mut out = x.basis().clone();
        for k in 0..sig.depth() {
            let r = sig.block(k);
            let b = r.len();
            let rot = polar_factor(&gaussian(b, b, seed + k as u64)).unwrap();
            let block = x.basis().columns(r.start, b) * rot;
            out.columns_mut(r.start, b).copy_from(&block);
        }
        out
    }

    /// Max relative error of the analytic gradient against central differences.
    pub fn grad_rel_error<O: crate::descent::Objective>(obj: &O, u: &DMatrix<f64>) -> f64 {
        let fd = crate::descent::fd_gradient(obj, u, 1e-6);
        (obj.euclid_grad(u) - &fd).norm() / fd.norm().max(1e-300)
    }
}
