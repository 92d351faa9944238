use nalgebra::{DMatrix, DVector};

use super::{check_ambient, column_weights, scale_columns};
use crate::descent::Objective;
use crate::error::{invalid, Result};
use crate::flag_manifold::FlagSignature;

/// Source and target samples (columns) and the Gaussian kernel bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct DipProblem {
    source: DMatrix<f64>,
    target: DMatrix<f64>,
    sigma: f64,
}

impl DipProblem {
    pub fn new(source: DMatrix<f64>, target: DMatrix<f64>, sigma: f64) -> Result<Self> {
        if source.nrows() != target.nrows() {
            return invalid("source and target must share the ambient dimension");
        }
        if source.ncols() == 0 || target.ncols() == 0 {
            return invalid("source and target must be nonempty");
        }
        if source.iter().chain(target.iter()).any(|v| !v.is_finite()) {
            return invalid("samples must be finite");
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return invalid(format!("sigma must be positive, got {sigma}"));
        }
        Ok(Self { source, target, sigma })
    }

    pub fn source(&self) -> &DMatrix<f64> {
        &self.source
    }

    pub fn target(&self) -> &DMatrix<f64> {
        &self.target
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn p(&self) -> usize {
        self.source.nrows()
    }
}

/// Squared MMD between the projected source and target samples, with the
/// Gaussian kernel evaluated on `zᵀ Π̄ z`.
#[derive(Debug, Clone)]
pub struct DipMmd {
    signature: FlagSignature,
    problem: DipProblem,
    /// Average-projector weight per column.
    weights: DVector<f64>,
}

pub fn dip_mmd_objective(prob: &DipProblem, sig: &FlagSignature) -> Result<DipMmd> {
    check_ambient(sig, prob.p(), "DIP problem")?;
    let weights = column_weights(sig, |k, d| (d - k) as f64 / d as f64);
    Ok(DipMmd { signature: sig.clone(), problem: prob.clone(), weights })
}

/// Kernel matrix `exp(−‖y_i − z_j‖²/(2σ²))` between the columns of `y` and `z`.
fn kernel(y: &DMatrix<f64>, z: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let yn: Vec<f64> = y.column_iter().map(|c| c.norm_squared()).collect();
    let zn: Vec<f64> = z.column_iter().map(|c| c.norm_squared()).collect();
    let cross = y.transpose() * z;
    let s = -1.0 / (2.0 * sigma * sigma);
    DMatrix::from_fn(y.ncols(), z.ncols(), |i, j| ((yn[i] + zn[j] - 2.0 * cross[(i, j)]).max(0.0) * s).exp())
}

/// `Σ_ij e_ij (a_i − b_j)(a_i − b_j)ᵀ U`, assembled without forming `p × p` sums.
fn pair_scatter_times(a: &DMatrix<f64>, b: &DMatrix<f64>, e: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    let row = e.column_sum();
    let col = e.row_sum().transpose();
    let au = a.transpose() * u;
    let bu = b.transpose() * u;
    let scale_rows = |m: &DMatrix<f64>, s: &DVector<f64>| {
        let mut m = m.clone();
        for (mut r, &si) in m.row_iter_mut().zip(s.iter()) {
            r *= si;
        }
        m
    };
    a * scale_rows(&au, &row) + b * scale_rows(&bu, &col) - a * (e * &bu) - b * (e.transpose() * &au)
}

impl DipMmd {
    /// Coordinates `diag(√c) Uᵀ X` whose Euclidean geometry realizes `zᵀ Π̄ z`.
    fn embed(&self, basis: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = basis.transpose() * x;
        for (mut r, &w) in y.row_iter_mut().zip(self.weights.iter()) {
            r *= w.sqrt();
        }
        y
    }

    fn kernels(&self, basis: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let ys = self.embed(basis, &self.problem.source);
        let yt = self.embed(basis, &self.problem.target);
        let s = self.problem.sigma;
        (kernel(&ys, &ys, s), kernel(&yt, &yt, s), kernel(&ys, &yt, s))
    }
}

impl Objective for DipMmd {
    fn signature(&self) -> &FlagSignature {
        &self.signature
    }

    fn value(&self, basis: &DMatrix<f64>) -> f64 {
        let (kss, ktt, kst) = self.kernels(basis);
        let ns = kss.nrows() as f64;
        let nt = ktt.nrows() as f64;
        kss.sum() / (ns * ns) + ktt.sum() / (nt * nt) - 2.0 * kst.sum() / (ns * nt)
    }

    fn euclid_grad(&self, basis: &DMatrix<f64>) -> DMatrix<f64> {
        let (kss, ktt, kst) = self.kernels(basis);
        let (xs, xt) = (&self.problem.source, &self.problem.target);
        let ns = xs.ncols() as f64;
        let nt = xt.ncols() as f64;
        let uc = scale_columns(basis.clone(), &self.weights);
        // ∂/∂U exp(−zᵀΠ̄z/2σ²) = −exp(·)/σ² · z zᵀ U C
        let s = pair_scatter_times(xs, xs, &kss, &uc) / (ns * ns) + pair_scatter_times(xt, xt, &ktt, &uc) / (nt * nt)
            - pair_scatter_times(xs, xt, &kst, &uc) * (2.0 / (ns * nt));
        s * (-1.0 / (self.problem.sigma * self.problem.sigma))
    }
}
