//! Flag iterative trace ratio: Newton root-finding on
//! `f(ρ) = Σ_k Σ_{j≤q_k} ℓ_j(A − ρB)`.

use nalgebra::{DMatrix, DVector};

use crate::descent::{IterRecord, OptTrace, Termination};
use crate::error::{Error, Result};
use crate::flag_manifold::{flag_distance, random_uniform, FlagPoint, FlagSignature};
use crate::numerics::{generalized_eigenvalues, sym_eig};
use crate::objectives::{trace_ratio_objective, TraceRatio, TraceRatioProblem};

/// One Newton iterate.
#[derive(Debug, Clone)]
pub struct NewtonState {
    pub rho: f64,
    pub flag: FlagPoint,
    pub f_value: f64,
}

pub const MAX_NEWTON_ITERS: usize = 100;

/// Bounds `(ℓ_q(A, B), ℓ_1(A, B))` on the optimal ratio from the generalized
/// eigenvalues of the pencil, descending.
pub fn newton_bracket(prob: &TraceRatioProblem, sig: &FlagSignature) -> Result<(f64, f64)> {
    let values = generalized_eigenvalues(prob.a(), prob.b()).ok_or(Error::FallbackToRandomInit)?;
    Ok((values[sig.q() - 1], values[0]))
}

/// Per-column multiplicities `d − k` (0-based level `k`): column `j` of block
/// `k` enters the sums of levels `k..d`.
fn level_counts(sig: &FlagSignature) -> DVector<f64> {
    let d = sig.depth();
    DVector::from_iterator(sig.q(), sig.column_levels().into_iter().map(|k| (d - k) as f64))
}

/// Evaluates `f(ρ)` and the flag of leading eigenvectors of `A − ρB`.
pub fn newton_state(prob: &TraceRatioProblem, sig: &FlagSignature, rho: f64) -> Result<NewtonState> {
    let shifted: DMatrix<f64> = prob.a() - prob.b() * rho;
    let eig = sym_eig(&shifted)?;
    let counts = level_counts(sig);
    let f_value = counts.iter().enumerate().map(|(j, c)| c * eig.values[j]).sum();
    Ok(NewtonState { rho, flag: FlagPoint::new(sig.clone(), eig.leading(sig.q()))?, f_value })
}

/// Maximizes the flag trace ratio. Returns the optimal flag, `ρ*`, and a trace
/// whose `objective` column holds `−ρ^{t+1}`, `grad_norm` holds `|f(ρ^t)|` and
/// `step` holds `|ρ^{t+1} − ρ^t|`.
///
/// Starts at the lower bracket end when `B ≻ 0`, otherwise at the ratio of a
/// random flag.
pub fn flag_itr(prob: &TraceRatioProblem, sig: &FlagSignature, tol: f64) -> Result<(FlagPoint, f64, OptTrace)> {
    let obj = trace_ratio_objective(prob, sig)?;
    let mut rho = match newton_bracket(prob, sig) {
        Ok((low, _)) => low,
        Err(Error::FallbackToRandomInit) => obj.ratio(random_uniform(sig, 0)?.basis())?,
        Err(e) => return Err(e),
    };
    let mut records = Vec::new();
    let mut termination = Termination::MaxIters;
    let mut prev: Option<FlagPoint> = None;
    for iter in 0..MAX_NEWTON_ITERS {
        let state = newton_state(prob, sig, rho)?;
        let next = updated_ratio(&obj, &state.flag)?;
        records.push(IterRecord { iter, objective: -next, grad_norm: state.f_value.abs(), step: (next - rho).abs() });
        let settled = match &prev {
            Some(p) => flag_distance(p, &state.flag)?.iter().map(|t| t * t).sum::<f64>().sqrt() <= tol,
            None => false,
        };
        let stalled = (next - rho).abs() <= f64::EPSILON * rho.abs().max(1.0);
        rho = next;
        prev = Some(state.flag);
        if settled || stalled {
            termination = Termination::Converged;
            break;
        }
    }
    let final_state = newton_state(prob, sig, rho)?;
    Ok((final_state.flag, rho, OptTrace { records, termination }))
}

fn updated_ratio(obj: &TraceRatio, flag: &FlagPoint) -> Result<f64> {
    obj.ratio(flag.basis())
}
