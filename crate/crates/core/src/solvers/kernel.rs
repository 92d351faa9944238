//! Kernel graph embedding solved as a flag trace ratio in the span of the
//! kernel eigenvectors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::itr::flag_itr;
use super::spectral::pairwise_distances;
use crate::error::{invalid, Error, Result};
use crate::flag_manifold::FlagSignature;
use crate::numerics::sym_eig;
use crate::objectives::{check_symmetric, Dataset, TraceRatioProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Rbf { sigma: f64 },
    Linear,
}

impl Kernel {
    /// Kernel matrix between the columns of `a` and of `b`.
    pub fn matrix(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        match *self {
            Kernel::Linear => a.transpose() * b,
            Kernel::Rbf { sigma } => {
                let an: Vec<f64> = a.column_iter().map(|c| c.norm_squared()).collect();
                let bn: Vec<f64> = b.column_iter().map(|c| c.norm_squared()).collect();
                let g = a.transpose() * b;
                DMatrix::from_fn(a.ncols(), b.ncols(), |i, j| {
                    (-(an[i] + bn[j] - 2.0 * g[(i, j)]).max(0.0) / (2.0 * sigma * sigma)).exp()
                })
            }
        }
    }
}

/// Eigenvalues below this fraction of the largest are discarded.
pub const KERNEL_TRUNCATION: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct KernelEmbedding {
    kernel: Kernel,
    training: DMatrix<f64>,
    /// `V` (`n × q`): the embedding of a point `x` is `Vᵀ k(X, x)`.
    pub coefficients: DMatrix<f64>,
    /// Embedded training samples `VᵀK` (`q × n`).
    pub embedded: DMatrix<f64>,
    /// Optimal flag trace ratio.
    pub rho: f64,
}

impl KernelEmbedding {
    /// Embeds new samples (columns).
    pub fn embed(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.coefficients.transpose() * self.kernel.matrix(&self.training, x)
    }
}

fn graph_laplacian(s: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&s.column_sum()) - s
}

/// Maximizes the flag trace ratio between the penalty-graph and the
/// similarity-graph Laplacians in the RKHS of `kernel`.
pub fn kernel_graph_embed(
    x: &Dataset,
    similarity: &DMatrix<f64>,
    penalty: &DMatrix<f64>,
    sig: &FlagSignature,
    kernel: Kernel,
) -> Result<KernelEmbedding> {
    let n = x.n();
    for (m, what) in [(similarity, "similarity"), (penalty, "penalty")] {
        check_symmetric(m, what)?;
        if m.nrows() != n {
            return invalid(format!("{what} matrix must be {n}x{n}"));
        }
        if m.iter().any(|&v| v < 0.0) {
            return invalid(format!("{what} matrix must be nonnegative"));
        }
    }
    if let Kernel::Rbf { sigma } = kernel {
        if !(sigma > 0.0) {
            return invalid("RBF bandwidth must be positive");
        }
    }
    let k = kernel.matrix(x.samples(), x.samples());
    let eig = sym_eig(&k)?;
    let top = eig.values[0];
    let r = eig.values.iter().take_while(|&&v| v > KERNEL_TRUNCATION * top).count();
    if r <= sig.q() {
        return Err(Error::RankDeficient(format!("kernel has numerical rank {r}, need more than q = {}", sig.q())));
    }
    // M = Q_r Λ_r^{1/2}, so A = Mᵀ L^p M and B = Mᵀ L M.
    let mut m = eig.vectors.columns(0, r).into_owned();
    for (j, mut col) in m.column_iter_mut().enumerate() {
        col *= eig.values[j].sqrt();
    }
    let a = m.transpose() * graph_laplacian(penalty) * &m;
    let b = m.transpose() * graph_laplacian(similarity) * &m;
    let prob = TraceRatioProblem::new((&a + a.transpose()) * 0.5, (&b + b.transpose()) * 0.5)?;
    let reduced = FlagSignature::new(r, sig.dims().to_vec())?;
    let (u, rho, _) = flag_itr(&prob, &reduced, 1e-12)?;

    let mut v = eig.vectors.columns(0, r).into_owned();
    for (j, mut col) in v.column_iter_mut().enumerate() {
        col /= eig.values[j].sqrt();
    }
    let coefficients = v * u.basis();
    let embedded = coefficients.transpose() * &k;
    Ok(KernelEmbedding { kernel, training: x.samples().clone(), coefficients, embedded, rho })
}

/// RBF bandwidth heuristic: median pairwise distance.
pub fn median_bandwidth(x: &DMatrix<f64>) -> f64 {
    let d = pairwise_distances(x);
    let n = x.ncols();
    let mut v: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| d[(i, j)]).collect();
    if v.is_empty() {
        return 1.0;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}
