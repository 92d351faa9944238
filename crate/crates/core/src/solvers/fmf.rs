//! Fast Median Flag: IRLS for the multilevel least-absolute-deviation problem.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::descent::{IterRecord, Objective, OptTrace, Termination};
use crate::error::{invalid, Error, Result};
use crate::flag_manifold::{flag_distance, riemannian_gradient, FlagPoint, FlagSignature};
use crate::numerics::sym_eig;
use crate::objectives::{nested_pca_closed_form, rsr_lad_objective, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FmfConfig {
    pub max_iters: usize,
    /// Stop once the flag moves by at most this much (root-sum-square of
    /// per-level distances).
    pub conv_threshold: f64,
    /// Saturation of the residual square roots in the sample reweighting.
    pub huber_eps: f64,
    /// Huber width of the underlying smoothed loss; with the printed update it
    /// only matters through its coincidence with `huber_eps`.
    pub huber_delta: f64,
}

impl Default for FmfConfig {
    fn default() -> Self {
        Self { max_iters: 100, conv_threshold: 1e-6, huber_eps: 1e-10, huber_delta: 1e-10 }
    }
}

impl FmfConfig {
    pub fn check(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.conv_threshold > 0.0 && self.huber_eps > 0.0 && self.huber_delta > 0.0) {
            return invalid("FMF parameters must all be positive");
        }
        Ok(())
    }
}

/// Relative threshold below which the `q`-th eigenvalue of `XXᵀ` counts as zero.
const RANK_TOL: f64 = 1e-12;

/// Runs IRLS from the nested-PCA solution.
///
/// Trace records hold the LAD objective, the Riemannian gradient norm of the
/// LAD objective, and in the `step` column the flag displacement of the
/// update that followed.
pub fn fmf(x: &Dataset, sig: &FlagSignature, cfg: &FmfConfig) -> Result<(FlagPoint, OptTrace)> {
    cfg.check()?;
    if x.n() < sig.q() {
        return invalid(format!("FMF needs at least q = {} samples, got {}", sig.q(), x.n()));
    }
    check_rank(x, sig.q())?;
    let lad = rsr_lad_objective(x, sig)?;
    let mut u = nested_pca_closed_form(x, sig)?.point;
    let mut records = Vec::new();
    let mut termination = Termination::MaxIters;

    for iter in 0..cfg.max_iters {
        let resid = lad.residuals(u.basis());
        let mut y = x.samples().clone();
        for (mut col, r) in y.column_iter_mut().zip(resid.iter()) {
            col /= r.sqrt().max(cfg.huber_eps);
        }
        let next = FlagPoint::new(sig.clone(), weighted_flag(&y, sig.q())?)?;
        let delta = flag_distance(&u, &next)?.iter().map(|t| t * t).sum::<f64>().sqrt();
        records.push(record(&lad, &u, iter, delta)?);
        u = next;
        if delta <= cfg.conv_threshold {
            termination = Termination::Converged;
            break;
        }
    }
    records.push(record(&lad, &u, records.len(), 0.0)?);
    Ok((u, OptTrace { records, termination }))
}

fn record<O: Objective>(obj: &O, u: &FlagPoint, iter: usize, step: f64) -> Result<IterRecord> {
    let objective = obj.value(u.basis());
    if !objective.is_finite() {
        return Err(Error::NumericalBlowup);
    }
    let grad_norm = riemannian_gradient(u, &obj.euclid_grad(u.basis()))?.norm();
    Ok(IterRecord { iter, objective, grad_norm, step })
}

/// Leading `q` eigenvectors of `YYᵀ`, i.e. the left singular vectors of `Y`.
fn weighted_flag(y: &DMatrix<f64>, q: usize) -> Result<DMatrix<f64>> {
    Ok(sym_eig(&(y * y.transpose()))?.leading(q))
}

/// Positive reweighting never changes the column span, so the rank of the
/// reweighted samples is decided once on the raw data.
fn check_rank(x: &Dataset, q: usize) -> Result<()> {
    let values = sym_eig(&x.scatter())?.values;
    if !(values[q - 1] > RANK_TOL * values[0]) {
        return Err(Error::RankDeficient(format!(
            "samples span fewer than q = {q} dimensions (eigenvalue {:e})",
            values[q - 1]
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::test_util::gaussian;
    use nalgebra::DVector;

    fn sig(p: usize, dims: &[usize]) -> FlagSignature {
        FlagSignature::new(p, dims.to_vec()).unwrap()
    }

    #[test]
    fn coordinate_flag_is_fixed_point() {
        // Points on the e1 and e2 axes only: the coordinate flag reproduces itself.
        let x = DMatrix::from_column_slice(
            4,
            4,
            &[3.0, 0.0, 0.0, 0.0, -3.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0],
        );
        let s = sig(4, &[1, 2]);
        let (u, trace) = fmf(&Dataset::new(x).unwrap(), &s, &FmfConfig::default()).unwrap();
        assert_eq!(trace.termination, Termination::Converged);
        assert!(trace.records.len() <= 3);
        let target = FlagPoint::identity(s);
        assert!(flag_distance(&u, &target).unwrap().iter().all(|&t| t < 1e-6));
    }

    #[test]
    fn too_few_samples() {
        let x = Dataset::new(gaussian(4, 1, 0)).unwrap();
        assert!(fmf(&x, &sig(4, &[1, 2]), &FmfConfig::default()).is_err());
    }

    #[test]
    fn rank_deficient_weights() {
        // Every sample lies on one line, so YYᵀ has rank 1 < q = 2.
        let x = DMatrix::from_fn(3, 5, |i, j| if i == 0 { j as f64 + 1.0 } else { 0.0 });
        let r = fmf(&Dataset::new(x).unwrap(), &sig(3, &[1, 2]), &FmfConfig::default());
        assert!(matches!(r, Err(Error::RankDeficient(_))));
    }

    /// Independent Grassmann IRLS using singular vectors and explicit projectors.
    fn fms_reference(x: &DMatrix<f64>, q: usize, iters: usize, eps: f64) -> Vec<DMatrix<f64>> {
        let svd = x.clone().svd(true, false);
        let order = {
            let mut o: Vec<usize> = (0..svd.singular_values.len()).collect();
            o.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
            o
        };
        let left = |u: &DMatrix<f64>, order: &[usize]| u.select_columns(&order[..q]);
        let mut u = left(svd.u.as_ref().unwrap(), &order);
        let mut out = vec![u.clone()];
        for _ in 0..iters {
            let proj = &u * u.transpose();
            let w = DVector::from_iterator(
                x.ncols(),
                x.column_iter().map(|c| 1.0 / (c - &proj * c).norm().sqrt().max(eps)),
            );
            let mut y = x.clone();
            for (mut col, wi) in y.column_iter_mut().zip(w.iter()) {
                col *= *wi;
            }
            let s = y.svd(true, false);
            let mut o: Vec<usize> = (0..s.singular_values.len()).collect();
            o.sort_by(|&a, &b| s.singular_values[b].total_cmp(&s.singular_values[a]));
            u = left(s.u.as_ref().unwrap(), &o);
            out.push(u.clone());
        }
        out
    }

    #[test]
    fn single_level_matches_fms() {
        let mut x = gaussian(5, 40, 3);
        for mut c in x.column_iter_mut().take(30) {
            c[3] *= 0.05;
            c[4] *= 0.05;
        }
        let s = sig(5, &[2]);
        let cfg = FmfConfig { max_iters: 6, conv_threshold: 1e-300, ..Default::default() };
        let reference = fms_reference(&x, 2, 6, cfg.huber_eps);
        // FMF's final iterate after t steps must equal the reference's t-th.
        for t in 1..=6 {
            let (u, _) = fmf(&Dataset::new(x.clone()).unwrap(), &s, &FmfConfig { max_iters: t, ..cfg }).unwrap();
            // Projector gap: principal angles bottom out near √ε.
            let gap = (u.basis() * u.basis().transpose() - &reference[t] * reference[t].transpose()).norm();
            assert!(gap < 1e-8, "iteration {t}: {gap:e}");
        }
    }

    #[test]
    fn lad_objective_decreases() {
        let mut x = gaussian(6, 60, 8);
        for mut c in x.column_iter_mut().take(50) {
            for i in 2..6 {
                c[i] *= 0.05;
            }
        }
        let (_, trace) = fmf(&Dataset::new(x).unwrap(), &sig(6, &[1, 2]), &FmfConfig::default()).unwrap();
        let first = trace.records[0].objective;
        assert!(trace.final_objective() < first);
        assert!(trace.records.windows(2).all(|w| w[1].objective <= w[0].objective * (1.0 + 1e-9)));
    }
}
