//! First-order steepest descent on flag manifolds with Armijo backtracking.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::flag_manifold::{random_uniform, retract, riemannian_gradient, validate, FlagPoint, FlagSignature};
use crate::numerics::{orthonormality_error, polar_factor};

/// A smooth cost on a flag manifold, expressed on Stiefel representatives.
///
/// `value` and `euclid_grad` accept any `p × q` matrix so that finite
/// differences can probe off-manifold perturbations. Implementations must be
/// pure: restarts evaluate them from several threads.
pub trait Objective: Sync {
    fn signature(&self) -> &FlagSignature;
    fn value(&self, basis: &DMatrix<f64>) -> f64;
    fn euclid_grad(&self, basis: &DMatrix<f64>) -> DMatrix<f64>;
}

/// Objective assembled from a pair of closures.
pub struct FnObjective<V, G> {
    signature: FlagSignature,
    value: V,
    grad: G,
}

impl<V, G> FnObjective<V, G>
where
    V: Fn(&DMatrix<f64>) -> f64 + Sync,
    G: Fn(&DMatrix<f64>) -> DMatrix<f64> + Sync,
{
    pub fn new(signature: FlagSignature, value: V, grad: G) -> Self {
        Self { signature, value, grad }
    }
}

impl<V, G> Objective for FnObjective<V, G>
where
    V: Fn(&DMatrix<f64>) -> f64 + Sync,
    G: Fn(&DMatrix<f64>) -> DMatrix<f64> + Sync,
{
    fn signature(&self) -> &FlagSignature {
        &self.signature
    }
    fn value(&self, basis: &DMatrix<f64>) -> f64 {
        (self.value)(basis)
    }
    fn euclid_grad(&self, basis: &DMatrix<f64>) -> DMatrix<f64> {
        (self.grad)(basis)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescentConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub initial_step: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// Re-orthonormalize the iterate every this many iterations (0 disables).
    pub repolarize_every: usize,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-6,
            initial_step: 1.0,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 40,
            repolarize_every: 50,
        }
    }
}

impl DescentConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.grad_tol >= 0.0) || !(self.initial_step > 0.0) {
            return invalid("grad_tol must be >= 0 and initial_step > 0");
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return invalid("armijo_c must lie in (0, 1)");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return invalid("backtrack_factor must lie in (0, 1)");
        }
        if self.max_backtracks == 0 {
            return invalid("max_backtracks must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    GradTol,
    MaxIters,
    LineSearchFail,
    /// Fixed-point solvers: successive iterates moved less than the threshold.
    Converged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub step: f64,
}

/// Per-iteration history of a solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptTrace {
    pub records: Vec<IterRecord>,
    pub termination: Termination,
}

impl OptTrace {
    pub fn final_objective(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.objective)
    }

    pub fn is_monotone(&self) -> bool {
        self.records.windows(2).all(|w| w[1].objective <= w[0].objective)
    }

    /// CSV with columns `iter,objective,grad_norm,step`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("iter,objective,grad_norm,step\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{:?},{:?},{:?}", r.iter, r.objective, r.grad_norm, r.step);
        }
        out
    }
}

/// Steepest descent along the Riemannian gradient with polar retraction.
///
/// Each line search starts at `initial_step` and backtracks until
/// `f(R(x, α∇)) ≤ f(x) − c·α·‖∇‖²`. A failed line search ends the run and
/// returns the current iterate.
pub fn steepest_descent<O: Objective + ?Sized>(
    obj: &O,
    init: &FlagPoint,
    cfg: &DescentConfig,
) -> Result<(FlagPoint, OptTrace)> {
    cfg.check()?;
    if init.signature() != obj.signature() {
        return invalid(format!(
            "initial point lives on {}, objective on {}",
            init.signature(),
            obj.signature()
        ));
    }
    if !validate(init) {
        return invalid("initial point is not orthonormal");
    }

    let mut x = init.clone();
    let mut fx = obj.value(x.basis());
    if !fx.is_finite() {
        return Err(Error::NumericalBlowup);
    }
    let mut records = Vec::new();
    let mut termination = Termination::MaxIters;

    for iter in 0..cfg.max_iters {
        let grad = riemannian_gradient(&x, &obj.euclid_grad(x.basis()))?;
        let gnorm = grad.norm();
        if !gnorm.is_finite() {
            return Err(Error::NumericalBlowup);
        }
        if gnorm <= cfg.grad_tol {
            records.push(IterRecord { iter, objective: fx, grad_norm: gnorm, step: 0.0 });
            termination = Termination::GradTol;
            break;
        }

        let decrease = cfg.armijo_c * gnorm * gnorm;
        let mut step = cfg.initial_step;
        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            match retract(&x, &grad, step) {
                Ok(y) => {
                    let fy = obj.value(y.basis());
                    if fy.is_finite() && fy <= fx - step * decrease {
                        accepted = Some((y, fy));
                        break;
                    }
                }
                Err(Error::DegenerateRetraction) => {}
                Err(e) => return Err(e),
            }
            step *= cfg.backtrack_factor;
        }

        let Some((y, fy)) = accepted else {
            records.push(IterRecord { iter, objective: fx, grad_norm: gnorm, step: 0.0 });
            termination = Termination::LineSearchFail;
            break;
        };
        records.push(IterRecord { iter, objective: fx, grad_norm: gnorm, step });
        x = y;
        fx = fy;

        if cfg.repolarize_every > 0
            && (iter + 1) % cfg.repolarize_every == 0
            && orthonormality_error(x.basis()) > 1e-12
        {
            let fixed = FlagPoint::new(x.signature().clone(), polar_factor(x.basis())?)?;
            let f_fixed = obj.value(fixed.basis());
            if f_fixed <= fx {
                x = fixed;
                fx = f_fixed;
            }
        }
    }

    if termination == Termination::MaxIters {
        let grad = riemannian_gradient(&x, &obj.euclid_grad(x.basis()))?;
        records.push(IterRecord { iter: cfg.max_iters, objective: fx, grad_norm: grad.norm(), step: 0.0 });
    }
    Ok((x, OptTrace { records, termination }))
}

/// Runs [`steepest_descent`] from one uniformly random flag per seed, in
/// parallel, and keeps the run with the lowest final objective (ties go to
/// the earlier seed).
pub fn multi_restart<O: Objective + ?Sized>(
    obj: &O,
    seeds: &[u64],
    cfg: &DescentConfig,
) -> Result<(FlagPoint, OptTrace)> {
    if seeds.is_empty() {
        return invalid("multi_restart needs at least one seed");
    }
    let runs: Vec<Result<(FlagPoint, OptTrace)>> = seeds
        .par_iter()
        .map(|&s| {
            let init = random_uniform(obj.signature(), s)?;
            steepest_descent(obj, &init, cfg)
        })
        .collect();
    let mut best: Option<(FlagPoint, OptTrace)> = None;
    let mut last_err = None;
    for run in runs {
        match run {
            Ok(r) => {
                let better = best
                    .as_ref()
                    .is_none_or(|b| r.1.final_objective() < b.1.final_objective());
                if better {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap())
}

/// Default number of random restarts.
pub const DEFAULT_RESTARTS: usize = 5;

/// Restart seeds derived from a base seed.
pub fn restart_seeds(base: u64, restarts: usize) -> Vec<u64> {
    (0..restarts as u64).map(|r| base.wrapping_mul(1_000_003).wrapping_add(r)).collect()
}

/// Central finite-difference Euclidean gradient over every basis entry.
pub fn fd_gradient<O: Objective + ?Sized>(obj: &O, basis: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let mut probe = basis.clone();
    DMatrix::from_fn(basis.nrows(), basis.ncols(), |i, j| {
        let orig = probe[(i, j)];
        probe[(i, j)] = orig + h;
        let up = obj.value(&probe);
        probe[(i, j)] = orig - h;
        let down = obj.value(&probe);
        probe[(i, j)] = orig;
        (up - down) / (2.0 * h)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flag_manifold::flag_distance;
    use nalgebra::DVector;

    fn quad_objective(a: DMatrix<f64>, sig: FlagSignature) -> impl Objective {
        let a2 = a.clone();
        FnObjective::new(
            sig,
            move |u: &DMatrix<f64>| -(u.transpose() * &a * u).trace(),
            move |u: &DMatrix<f64>| -(&a2 * u) * 2.0,
        )
    }

    #[test]
    fn constant_objective_stops_immediately() {
        let sig = FlagSignature::new(4, vec![1, 2]).unwrap();
        let obj = FnObjective::new(sig.clone(), |_: &DMatrix<f64>| 3.0, |u: &DMatrix<f64>| {
            DMatrix::zeros(u.nrows(), u.ncols())
        });
        let init = random_uniform(&sig, 0).unwrap();
        let (x, trace) = steepest_descent(&obj, &init, &DescentConfig::default()).unwrap();
        assert_eq!(trace.termination, Termination::GradTol);
        assert_eq!(trace.records.len(), 1);
        assert_eq!(x, init);
    }

    #[test]
    fn leading_eigenvector_on_grassmannian() {
        let sig = FlagSignature::grassmann(3, 1).unwrap();
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 0.0]));
        let obj = quad_objective(a, sig.clone());
        let init = random_uniform(&sig, 5).unwrap();
        let cfg = DescentConfig { max_iters: 2000, ..Default::default() };
        let (x, trace) = steepest_descent(&obj, &init, &cfg).unwrap();
        assert_eq!(trace.termination, Termination::GradTol);
        assert!(trace.is_monotone());
        assert!((trace.final_objective() + 3.0).abs() < 1e-9);
        let target = FlagPoint::identity(sig);
        assert!(flag_distance(&x, &target).unwrap()[0] < 1e-6);
    }

    #[test]
    fn deterministic_runs() {
        let sig = FlagSignature::new(5, vec![1, 3]).unwrap();
        let a = DMatrix::from_fn(5, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 + if i == j { 4.0 } else { 0.0 });
        let a = &a + a.transpose();
        let obj = quad_objective(a, sig.clone());
        let init = random_uniform(&sig, 1).unwrap();
        let cfg = DescentConfig { max_iters: 30, grad_tol: 0.0, ..Default::default() };
        let r1 = steepest_descent(&obj, &init, &cfg).unwrap();
        let r2 = steepest_descent(&obj, &init, &cfg).unwrap();
        assert_eq!(r1.0, r2.0);
        assert_eq!(r1.1, r2.1);
        assert!(r1.1.records.iter().all(|r| r.objective.is_finite()));
    }

    #[test]
    fn non_finite_start_is_blowup() {
        let sig = FlagSignature::grassmann(3, 1).unwrap();
        let obj = FnObjective::new(sig.clone(), |_: &DMatrix<f64>| f64::NAN, |u: &DMatrix<f64>| u.clone());
        let init = random_uniform(&sig, 0).unwrap();
        assert!(matches!(
            steepest_descent(&obj, &init, &DescentConfig::default()),
            Err(Error::NumericalBlowup)
        ));
    }

    #[test]
    fn line_search_failure_is_graceful() {
        // A nonzero gradient with a constant value: no step can pass Armijo.
        let sig = FlagSignature::grassmann(3, 1).unwrap();
        let obj = FnObjective::new(sig.clone(), |_: &DMatrix<f64>| 1.0, |u: &DMatrix<f64>| {
            DMatrix::from_fn(u.nrows(), u.ncols(), |i, _| i as f64 + 1.0)
        });
        let init = random_uniform(&sig, 2).unwrap();
        let (x, trace) = steepest_descent(&obj, &init, &DescentConfig::default()).unwrap();
        assert_eq!(trace.termination, Termination::LineSearchFail);
        assert_eq!(x, init);
    }

    #[test]
    fn fd_gradient_linear_and_quadratic() {
        let sig = FlagSignature::new(4, vec![1, 2]).unwrap();
        let c = DMatrix::from_fn(4, 2, |i, j| i as f64 - 2.0 * j as f64 + 0.5);
        let c2 = c.clone();
        let lin = FnObjective::new(
            sig.clone(),
            move |u: &DMatrix<f64>| (c.transpose() * u).trace(),
            |u: &DMatrix<f64>| DMatrix::zeros(u.nrows(), u.ncols()),
        );
        let u = random_uniform(&sig, 3).unwrap();
        assert!((fd_gradient(&lin, u.basis(), 1e-5) - &c2).abs().max() < 1e-9);

        let a = DMatrix::from_fn(4, 4, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let a2 = a.clone();
        let quad = FnObjective::new(
            sig,
            move |u: &DMatrix<f64>| (u.transpose() * &a * u).trace(),
            |u: &DMatrix<f64>| DMatrix::zeros(u.nrows(), u.ncols()),
        );
        let exact = &a2 * u.basis() * 2.0;
        let fd = fd_gradient(&quad, u.basis(), 1e-6);
        assert!((fd - &exact).norm() / exact.norm() < 1e-5);
    }

    #[test]
    fn trace_csv() {
        let trace = OptTrace {
            records: vec![IterRecord { iter: 0, objective: 1.5, grad_norm: 0.25, step: 1.0 }],
            termination: Termination::MaxIters,
        };
        assert_eq!(trace.to_csv_string(), "iter,objective,grad_norm,step\n0,1.5,0.25,1.0\n");
    }
}
