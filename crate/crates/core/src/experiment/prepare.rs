//! Turning a dataset and a config into an optimization problem, and solving it.

use nalgebra::{DMatrix, DVector};

use super::{ExperimentConfig, Problem, SolverKind};
use crate::descent::{multi_restart, restart_seeds, steepest_descent, Objective, OptTrace};
use crate::error::{invalid, Result};
use crate::flag_manifold::{FlagPoint, FlagSignature};
use crate::numerics::sym_eig;
use crate::objectives::{
    build_lda_matrices, dip_mmd_objective, geometric_median, nested_pca_objective, rsr_lad_objective,
    ssc_objective, trace_ratio_objective, Dataset, DipProblem, SscProblem, TraceRatioProblem,
};
use crate::solvers::{build_laplacian, flag_itr, fmf, median_bandwidth};

/// An affine preprocessing map fitted on one dataset and reusable on others
/// (training statistics applied to held-out folds).
#[derive(Debug, Clone)]
pub(crate) struct Preprocess {
    shift: Option<DVector<f64>>,
    /// Orthonormal `p × r` basis of the PCA reduction, if any.
    reduce: Option<DMatrix<f64>>,
}

impl Preprocess {
    /// Centering, then for the trace ratio a PCA reduction to `n − C`
    /// dimensions when that is below `p`.
    pub(crate) fn fit(cfg: &ExperimentConfig, x: &Dataset) -> Result<Self> {
        if x.n() == 0 {
            return invalid("dataset is empty");
        }
        let shift = cfg.centering().mode().map(|m| match m {
            crate::objectives::CenterMode::Mean => x.samples().column_mean(),
            crate::objectives::CenterMode::Median => geometric_median(x.samples()),
        });
        let mut pre = Self { shift, reduce: None };
        if cfg.problem == Problem::TraceRatio {
            let c = x.num_classes();
            if c < 2 {
                return invalid("trace ratio (LDA) needs labeled data with at least two classes");
            }
            if x.n() <= c {
                return invalid(format!("LDA needs more samples ({}) than classes ({c})", x.n()));
            }
            let r = x.n() - c;
            if r < x.p() {
                let scatter = pre.apply(x)?.scatter();
                pre.reduce = Some(sym_eig(&scatter)?.leading(r));
            }
        }
        Ok(pre)
    }

    pub(crate) fn apply(&self, x: &Dataset) -> Result<Dataset> {
        let mut s = x.samples().clone();
        if let Some(c) = &self.shift {
            if c.len() != s.nrows() {
                return invalid("preprocessing fitted on a different ambient dimension");
            }
            for mut col in s.column_iter_mut() {
                col -= c;
            }
        }
        match &self.reduce {
            Some(p) => {
                let mut out = Dataset::new(p.transpose() * s)?;
                if let Some(l) = x.labels() {
                    out = out.with_labels(l.to_vec())?;
                }
                if let Some(m) = x.outlier_mask() {
                    out = out.with_outlier_mask(m.to_vec())?;
                }
                Ok(out)
            }
            None => x.map_samples(s),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ProblemData {
    Pca,
    Rsr,
    TraceRatio(TraceRatioProblem),
    Ssc(SscProblem),
    Dip(DipProblem),
}

/// The preprocessed data together with the problem built from it.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Samples in the coordinates the subspaces live in (after centering and
    /// any reduction). For SSC the flag lives in sample space instead.
    pub data: Dataset,
    pub problem: ProblemData,
    pub(crate) pre: Preprocess,
}

impl Prepared {
    pub fn new(cfg: &ExperimentConfig, raw: &Dataset) -> Result<Self> {
        let pre = Preprocess::fit(cfg, raw)?;
        let data = pre.apply(raw)?;
        let problem = match cfg.problem {
            Problem::Pca => ProblemData::Pca,
            Problem::Rsr => ProblemData::Rsr,
            Problem::TraceRatio => ProblemData::TraceRatio(build_lda_matrices(&data)?),
            Problem::Ssc => ProblemData::Ssc(SscProblem::new(build_laplacian(&data)?, cfg.beta)?),
            Problem::Dip => {
                let labels = match data.labels() {
                    Some(l) if data.num_classes() == 2 => l,
                    _ => return invalid("DIP needs labels 0 (source) and 1 (target)"),
                };
                let pick = |d: usize| {
                    let idx: Vec<usize> = (0..data.n()).filter(|&i| labels[i] == d).collect();
                    data.select(&idx).samples().clone()
                };
                let sigma = cfg.dip_sigma.unwrap_or_else(|| median_bandwidth(data.samples()));
                ProblemData::Dip(DipProblem::new(pick(0), pick(1), sigma)?)
            }
        };
        Ok(Self { data, problem, pre })
    }

    /// Ambient dimension of the flag manifold.
    pub fn ambient(&self) -> usize {
        match &self.problem {
            ProblemData::Ssc(p) => p.n(),
            _ => self.data.p(),
        }
    }

    pub fn signature(&self, dims: &[usize]) -> Result<FlagSignature> {
        FlagSignature::new(self.ambient(), dims.to_vec())
    }

    pub fn objective(&self, sig: &FlagSignature) -> Result<Box<dyn Objective>> {
        Ok(match &self.problem {
            ProblemData::Pca => Box::new(nested_pca_objective(&self.data, sig)?),
            ProblemData::Rsr => Box::new(rsr_lad_objective(&self.data, sig)?),
            ProblemData::TraceRatio(p) => Box::new(trace_ratio_objective(p, sig)?),
            ProblemData::Ssc(p) => Box::new(ssc_objective(p, sig)?),
            ProblemData::Dip(p) => Box::new(dip_mmd_objective(p, sig)?),
        })
    }

    /// Solves on `sig` with the configured solver. Steepest descent restarts
    /// from several seeded random flags, except for SSC, which starts from
    /// the bottom eigenvectors of the Laplacian.
    pub fn solve(&self, sig: &FlagSignature, cfg: &ExperimentConfig, seed: u64) -> Result<(FlagPoint, OptTrace)> {
        match (cfg.solver, &self.problem) {
            (SolverKind::Fmf, ProblemData::Rsr) => fmf(&self.data, sig, &cfg.fmf),
            (SolverKind::Newton, ProblemData::TraceRatio(p)) => {
                flag_itr(p, sig, cfg.newton_tol).map(|(u, _, trace)| (u, trace))
            }
            (SolverKind::Sd, ProblemData::Ssc(p)) => {
                let obj = ssc_objective(p, sig)?;
                let init = FlagPoint::new(sig.clone(), sym_eig(p.laplacian())?.trailing(sig.q()))?;
                steepest_descent(&obj, &init, &cfg.descent)
            }
            (SolverKind::Sd, _) => {
                let obj = self.objective(sig)?;
                multi_restart(obj.as_ref(), &restart_seeds(seed, cfg.restarts), &cfg.descent)
            }
            (s, _) => invalid(format!("solver {s:?} does not apply to problem {:?}", cfg.problem)),
        }
    }
}
