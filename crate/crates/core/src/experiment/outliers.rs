//! Reconstruction-error outlier scores of the Grassmann and flag RSR optima.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::compare::prepare_all;
use super::{cell, create_dir, write_file, ExperimentConfig, Problem};
use crate::error::{invalid, Result};
use crate::flag_manifold::{average_projector, FlagSignature};
use crate::objectives::Dataset;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredSample {
    pub sample: usize,
    pub score: f64,
    pub outlier: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedScores {
    pub seed: u64,
    /// `‖x − U Uᵀ x‖` for the Grassmann optimum at `q_d`, ascending.
    pub grassmann: Vec<ScoredSample>,
    /// `‖x − Π̄ x‖` with the average projector of the flag optimum, ascending.
    pub flag: Vec<ScoredSample>,
    /// Smallest outlier score minus largest inlier score.
    pub grassmann_margin: Option<f64>,
    pub flag_margin: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct OutlierReport {
    pub seeds: Vec<(u64, std::result::Result<SeedScores, String>)>,
}

impl OutlierReport {
    pub fn all_failed(&self) -> bool {
        self.seeds.iter().all(|(_, r)| r.is_err())
    }
}

fn sorted_scores(x: &Dataset, projector: &DMatrix<f64>) -> Vec<ScoredSample> {
    let resid = x.samples() - projector * x.samples();
    let mask = x.outlier_mask();
    let mut v: Vec<ScoredSample> = resid
        .column_iter()
        .enumerate()
        .map(|(i, r)| ScoredSample { sample: i, score: r.norm(), outlier: mask.map(|m| m[i]) })
        .collect();
    v.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.sample.cmp(&b.sample)));
    v
}

fn margin(scores: &[ScoredSample]) -> Option<f64> {
    let pick = |want: bool| scores.iter().filter(move |s| s.outlier == Some(want)).map(|s| s.score);
    let min_out = pick(true).fold(f64::INFINITY, f64::min);
    let max_in = pick(false).fold(f64::NEG_INFINITY, f64::max);
    (min_out.is_finite() && max_in.is_finite()).then_some(min_out - max_in)
}

/// Scores every sample by its distance to the recovered subspace (Grassmann,
/// `q = q_d`) and to the recovered flag (through its average projector) and
/// writes `scores.csv` and `margins.csv`.
pub fn run_outlier_scores(cfg: &ExperimentConfig) -> Result<OutlierReport> {
    cfg.validate()?;
    if cfg.problem != Problem::Rsr {
        return invalid("outlier scores are defined for the rsr problem");
    }
    let pool = cfg.thread_pool()?;
    let seeds = pool.install(|| -> Result<Vec<_>> {
        let prepared = prepare_all(cfg)?;
        Ok(prepared
            .par_iter()
            .map(|(seed, prep)| {
                let run = || -> Result<SeedScores> {
                    let prep = prep.as_ref().map_err(|e| crate::Error::InvalidInput(e.clone()))?;
                    let sig = prep.signature(&cfg.signature)?;
                    let (flag, _) = prep.solve(&sig, cfg, *seed)?;
                    let (gr, _) = prep.solve(&FlagSignature::grassmann(sig.p(), sig.q())?, cfg, *seed)?;
                    let grassmann = sorted_scores(&prep.data, &(gr.basis() * gr.basis().transpose()));
                    let flag = sorted_scores(&prep.data, &average_projector(&flag)?);
                    Ok(SeedScores {
                        seed: *seed,
                        grassmann_margin: margin(&grassmann),
                        flag_margin: margin(&flag),
                        grassmann,
                        flag,
                    })
                };
                (*seed, run().map_err(|e| e.to_string()))
            })
            .collect())
    })?;
    let report = OutlierReport { seeds };
    write_outliers(cfg, &report)?;
    Ok(report)
}

fn write_outliers(cfg: &ExperimentConfig, report: &OutlierReport) -> Result<()> {
    create_dir(&cfg.out)?;
    let mut scores = String::from("seed,method,rank,sample,score,outlier\n");
    let mut margins = String::from("seed,status,grassmann_margin,flag_margin\n");
    for (seed, r) in &report.seeds {
        match r {
            Ok(s) => {
                for (method, list) in [("grassmann", &s.grassmann), ("flag", &s.flag)] {
                    for (rank, x) in list.iter().enumerate() {
                        let tag = x.outlier.map_or("", |o| if o { "outlier" } else { "inlier" });
                        let _ = writeln!(scores, "{seed},{method},{},{},{},{tag}", rank + 1, x.sample, x.score);
                    }
                }
                let _ = writeln!(margins, "{seed},ok,{},{}", cell(s.grassmann_margin), cell(s.flag_margin));
            }
            Err(e) => {
                let _ = writeln!(margins, "{seed},failed,,{}", e.replace([',', '\n'], ";"));
            }
        }
    }
    write_file(&cfg.out.join("scores.csv"), &scores)?;
    write_file(&cfg.out.join("margins.csv"), &margins)?;
    Ok(())
}
