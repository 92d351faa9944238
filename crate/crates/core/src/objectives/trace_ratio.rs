use nalgebra::{DMatrix, DVector};

use super::{check_ambient, check_symmetric, column_weights, scale_columns, weighted_quadratic_trace, Dataset};
use crate::descent::Objective;
use crate::error::{invalid, Error, Result};
use crate::flag_manifold::FlagSignature;
use crate::numerics::sym_eig;

/// A pencil of symmetric PSD matrices for `max tr(ΠA) / tr(ΠB)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRatioProblem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

fn check_psd(m: &DMatrix<f64>, what: &str) -> Result<DVector<f64>> {
    let values = sym_eig(m)?.values;
    let scale = values.iter().fold(0.0_f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    if values.iter().any(|&v| v < -1e-10 * scale) {
        return invalid(format!("{what} is not positive semi-definite"));
    }
    Ok(values)
}

impl TraceRatioProblem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&a, "A")?;
        check_symmetric(&b, "B")?;
        if a.shape() != b.shape() {
            return invalid("A and B must have the same size");
        }
        check_psd(&a, "A")?;
        check_psd(&b, "B")?;
        Ok(Self { a: (&a + a.transpose()) * 0.5, b: (&b + b.transpose()) * 0.5 })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn p(&self) -> usize {
        self.a.nrows()
    }

    /// Numerical rank of `B`, counting eigenvalues above `1e-12 · tr(B)`.
    pub fn rank_b(&self) -> usize {
        let tol = 1e-12 * self.b.trace();
        check_psd(&self.b, "B").map_or(0, |v| v.iter().filter(|&&x| x > tol).count())
    }

    /// The ratio stays bounded over the flag manifold only if `rank(B) > p − q`.
    pub fn check_rank(&self, sig: &FlagSignature) -> Result<()> {
        let r = self.rank_b();
        if r + sig.q() <= self.p() {
            return invalid(format!("rank(B) = {r} must exceed p - q = {}", self.p() - sig.q()));
        }
        Ok(())
    }
}

/// Negated flag trace ratio `−Σ_k w_k tr(U_kᵀAU_k) / Σ_k w_k tr(U_kᵀBU_k)`
/// with `w_k = d − k + 1`.
#[derive(Debug, Clone)]
pub struct TraceRatio {
    signature: FlagSignature,
    problem: TraceRatioProblem,
    weights: DVector<f64>,
}

pub const DENOMINATOR_FLOOR: f64 = 1e-14;

pub fn trace_ratio_objective(prob: &TraceRatioProblem, sig: &FlagSignature) -> Result<TraceRatio> {
    check_ambient(sig, prob.p(), "trace-ratio problem")?;
    prob.check_rank(sig)?;
    let weights = column_weights(sig, |k, d| (d - k) as f64);
    Ok(TraceRatio { signature: sig.clone(), problem: prob.clone(), weights })
}

impl TraceRatio {
    pub fn problem(&self) -> &TraceRatioProblem {
        &self.problem
    }

    /// Weighted numerator and denominator.
    pub fn parts(&self, basis: &DMatrix<f64>) -> (f64, f64) {
        (
            weighted_quadratic_trace(&self.problem.a, basis, &self.weights),
            weighted_quadratic_trace(&self.problem.b, basis, &self.weights),
        )
    }

    /// The (positive) ratio being maximized.
    pub fn ratio(&self, basis: &DMatrix<f64>) -> Result<f64> {
        let (num, den) = self.parts(basis);
        if den <= DENOMINATOR_FLOOR {
            return Err(Error::DegenerateDenominator(den));
        }
        Ok(num / den)
    }

    pub fn try_value(&self, basis: &DMatrix<f64>) -> Result<f64> {
        self.ratio(basis).map(|r| -r)
    }
}

impl Objective for TraceRatio {
    fn signature(&self) -> &FlagSignature {
        &self.signature
    }

    /// `+∞` where the denominator degenerates, so line searches back away.
    fn value(&self, basis: &DMatrix<f64>) -> f64 {
        self.try_value(basis).unwrap_or(f64::INFINITY)
    }

    fn euclid_grad(&self, basis: &DMatrix<f64>) -> DMatrix<f64> {
        let (num, den) = self.parts(basis);
        let au = scale_columns(&self.problem.a * basis, &self.weights);
        let bu = scale_columns(&self.problem.b * basis, &self.weights);
        (au * den - bu * num) * (-2.0 / (den * den))
    }
}

/// Between-class and within-class scatter, each regularized by `1e-5 · tr`
/// on the diagonal and normalized to unit trace.
pub fn build_lda_matrices(x: &Dataset) -> Result<TraceRatioProblem> {
    let Some(labels) = x.labels() else {
        return invalid("LDA needs labeled data");
    };
    let c = x.num_classes();
    if c < 2 {
        return invalid("LDA needs at least two classes");
    }
    let p = x.p();
    let mu = x.samples().column_mean();
    let mut sums = vec![DVector::<f64>::zeros(p); c];
    let mut counts = vec![0usize; c];
    for (col, &l) in x.samples().column_iter().zip(labels) {
        sums[l] += col;
        counts[l] += 1;
    }
    let means: Vec<DVector<f64>> = sums.into_iter().zip(&counts).map(|(s, &n)| s / n as f64).collect();

    let mut between = DMatrix::zeros(p, p);
    for m in &means {
        let d = m - &mu;
        between += &d * d.transpose();
    }
    let mut within = DMatrix::zeros(p, p);
    for (col, &l) in x.samples().column_iter().zip(labels) {
        let d = col - &means[l];
        within += &d * d.transpose();
    }
    TraceRatioProblem::new(regularize_unit_trace(between), regularize_unit_trace(within))
}

fn regularize_unit_trace(m: DMatrix<f64>) -> DMatrix<f64> {
    let p = m.nrows();
    let t = m.trace();
    // An all-zero scatter has no scale to borrow; fall back to an absolute ridge.
    let ridge = if t > 0.0 { 1e-5 * t } else { 1e-5 };
    let r = m + DMatrix::<f64>::identity(p, p) * ridge;
    let t = r.trace();
    r / t
}
