//! Experiment harness: per-dimension Grassmann runs against one flag run,
//! nestedness metrics, ensemble classification tables and outlier scores.
//!
//! Every entry point takes an [`ExperimentConfig`] and writes CSV (and SVG)
//! artifacts under its output directory. The returned reports carry the same
//! numbers for programmatic use.

mod compare;
mod outliers;
mod prepare;
mod source;
mod svg;
mod table;

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::descent::{DescentConfig, DEFAULT_RESTARTS};
use crate::ensemble::DEFAULT_KNN_K;
use crate::error::{invalid, Error, Result};
use crate::objectives::CenterMode;
use crate::solvers::FmfConfig;

pub use compare::{run_compare, CompareReport, RunOutcome, RunResult, SeedComparison};
pub use outliers::{run_outlier_scores, OutlierReport, ScoredSample, SeedScores};
pub use prepare::{Prepared, ProblemData};
pub use source::{generate, load_source, DataSource};
pub use table::{run_ensemble, EnsembleReport, EnsembleRow, SeedEnsemble};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    Pca,
    Rsr,
    TraceRatio,
    Ssc,
    Dip,
}

impl FromStr for Problem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pca" => Self::Pca,
            "rsr" => Self::Rsr,
            "trace-ratio" | "tr" | "lda" => Self::TraceRatio,
            "ssc" => Self::Ssc,
            "dip" => Self::Dip,
            _ => return invalid(format!("unknown problem '{s}' (pca, rsr, trace-ratio, ssc, dip)")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Sd,
    Fmf,
    Newton,
}

impl FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sd" => Self::Sd,
            "fmf" => Self::Fmf,
            "newton" => Self::Newton,
            _ => return invalid(format!("unknown solver '{s}' (sd, fmf, newton)")),
        })
    }
}

/// Centering applied to the data before building the problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Centering {
    None,
    Mean,
    Median,
}

impl Centering {
    pub(crate) fn mode(self) -> Option<CenterMode> {
        match self {
            Centering::None => None,
            Centering::Mean => Some(CenterMode::Mean),
            Centering::Median => Some(CenterMode::Median),
        }
    }
}

impl FromStr for Centering {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => Self::None,
            "mean" => Self::Mean,
            "median" => Self::Median,
            _ => return invalid(format!("unknown centering '{s}' (none, mean, median)")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub signature: Vec<usize>,
    /// CSV path, or `gen:<name>[:key=value,...]`.
    pub data: String,
    pub solver: SolverKind,
    pub seeds: Vec<u64>,
    pub descent: DescentConfig,
    pub fmf: FmfConfig,
    pub newton_tol: f64,
    /// Random restarts per steepest-descent solve.
    pub restarts: usize,
    /// Sparsity weight of the SSC objective.
    pub beta: f64,
    pub knn_k: usize,
    /// Defaults to mean centering for PCA and trace ratio, none otherwise.
    pub center: Option<Centering>,
    /// Kernel bandwidth for DIP; defaults to the median pairwise distance.
    pub dip_sigma: Option<f64>,
    pub out: PathBuf,
    /// Worker threads (0 uses every core).
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: Problem::Pca,
            signature: vec![1, 2],
            data: "gen:haystack".into(),
            solver: SolverKind::Sd,
            seeds: vec![0],
            descent: DescentConfig::default(),
            fmf: FmfConfig::default(),
            newton_tol: 1e-10,
            restarts: DEFAULT_RESTARTS,
            beta: 0.1,
            knn_k: DEFAULT_KNN_K,
            center: None,
            dip_sigma: None,
            out: PathBuf::from("out"),
            jobs: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("bad config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that can be checked before touching data.
    pub fn validate(&self) -> Result<()> {
        let sig = &self.signature;
        if sig.is_empty() || sig[0] == 0 || sig.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("signature must be a strictly increasing list of positive integers");
        }
        if self.seeds.is_empty() {
            return invalid("at least one seed is required");
        }
        match (self.solver, self.problem) {
            (SolverKind::Sd, _) | (SolverKind::Fmf, Problem::Rsr) | (SolverKind::Newton, Problem::TraceRatio) => {}
            (s, p) => return invalid(format!("solver {s:?} does not apply to problem {p:?}")),
        }
        self.descent.check()?;
        self.fmf.check()?;
        if !(self.newton_tol > 0.0) {
            return invalid("newton_tol must be positive");
        }
        if self.restarts == 0 {
            return invalid("restarts must be positive");
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return invalid("beta must be a nonnegative number");
        }
        if self.knn_k == 0 {
            return invalid("knn_k must be positive");
        }
        if let Some(s) = self.dip_sigma {
            if !(s > 0.0) {
                return invalid("dip_sigma must be positive");
            }
        }
        DataSource::parse(&self.data)?;
        Ok(())
    }

    pub(crate) fn centering(&self) -> Centering {
        self.center.unwrap_or(match self.problem {
            Problem::Pca | Problem::TraceRatio => Centering::Mean,
            Problem::Rsr | Problem::Ssc | Problem::Dip => Centering::None,
        })
    }

    pub(crate) fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))
    }
}

/// Parses `0..9` (inclusive), `3` or `1,4,7`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidInput(format!("bad seed list '{s}'"));
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

/// Parses `1,2,5`.
pub fn parse_signature(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| Error::InvalidInput(format!("bad signature '{s}'"))))
        .collect()
}

pub(crate) fn create_dir(path: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(Error::from)
}

pub(crate) fn write_file(path: &std::path::Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(Error::from)
}

/// Formats an optional float as a CSV cell.
pub(crate) fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(parse_seeds("0..=2").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 7").unwrap(), vec![4, 7]);
        assert!(parse_seeds("3..1").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn solver_problem_compatibility() {
        let mut cfg = ExperimentConfig { problem: Problem::Pca, solver: SolverKind::Fmf, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg.problem = Problem::Rsr;
        assert!(cfg.validate().is_ok());
        cfg.solver = SolverKind::Newton;
        assert!(cfg.validate().is_err());
        cfg.problem = Problem::TraceRatio;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn signature_checked() {
        for bad in [vec![], vec![0, 1], vec![2, 2], vec![3, 1]] {
            let cfg = ExperimentConfig { signature: bad, ..Default::default() };
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let cfg = ExperimentConfig { problem: Problem::TraceRatio, signature: vec![1, 2, 5], ..Default::default() };
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        let partial = ExperimentConfig::from_json(r#"{"problem": "ssc", "beta": 0.5}"#).unwrap();
        assert_eq!(partial.problem, Problem::Ssc);
        assert_eq!(partial.seeds, vec![0]);
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }
}
