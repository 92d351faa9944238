//! Ensemble classification over the levels of a flag (Gr / Fl / Fl-U / Fl-W).

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::prepare::Prepared;
use super::source::{load_source, DataSource};
use super::{create_dir, write_file, ExperimentConfig, Problem};
use crate::ensemble::{
    cross_entropy, knn_predict_proba_with_classes, optimal_soft_voting, project_levels, soft_voting_ce,
    EnsembleWeights, LevelPredictions,
};
use crate::error::{invalid, Error, Result};
use crate::flag_manifold::FlagSignature;
use crate::objectives::Dataset;

/// Outcome of one stratified split.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedEnsemble {
    pub seed: u64,
    /// Per flag level.
    pub level_val_ce: Vec<f64>,
    pub level_test_ce: Vec<f64>,
    /// Grassmann optimum at `q_d`.
    pub grassmann_val_ce: f64,
    pub grassmann_test_ce: f64,
    pub uniform_val_ce: f64,
    pub uniform_test_ce: f64,
    pub weighted_val_ce: f64,
    pub weighted_test_ce: f64,
    /// Soft-voting weights fitted on the validation fold.
    pub weights: Vec<f64>,
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRow {
    pub method: String,
    pub mean_val_ce: f64,
    pub mean_test_ce: f64,
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct EnsembleReport {
    pub seeds: Vec<(u64, std::result::Result<SeedEnsemble, String>)>,
    /// `Gr`, `Fl`, `Fl-U`, `Fl-W`, averaged over the successful seeds.
    pub rows: Vec<EnsembleRow>,
}

impl EnsembleReport {
    pub fn all_failed(&self) -> bool {
        self.seeds.iter().all(|(_, r)| r.is_err())
    }

    pub fn row(&self, method: &str) -> Option<&EnsembleRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

/// Per-class shuffled 60/20/20 split into (train, validation, test) indices.
pub(crate) fn stratified_split(labels: &[usize], seed: u64) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5711_7a7e);
    let (mut tr, mut va, mut te) = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.len() < 3 {
            return invalid(format!("class {c} has {} samples; a stratified split needs 3", idx.len()));
        }
        idx.shuffle(&mut rng);
        let n = idx.len() as f64;
        let n_va = ((0.2 * n).round() as usize).max(1);
        let n_te = ((0.2 * n).round() as usize).max(1);
        let n_tr = idx.len() - n_va - n_te;
        tr.extend_from_slice(&idx[..n_tr]);
        va.extend_from_slice(&idx[n_tr..n_tr + n_va]);
        te.extend_from_slice(&idx[n_tr + n_va..]);
    }
    for v in [&mut tr, &mut va, &mut te] {
        v.sort_unstable();
    }
    Ok((tr, va, te))
}

fn one_seed(cfg: &ExperimentConfig, raw: &Dataset, seed: u64) -> Result<SeedEnsemble> {
    let labels = raw.labels().ok_or_else(|| Error::InvalidInput("ensemble needs labeled data".into()))?;
    let classes = raw.num_classes();
    let (tr, va, te) = stratified_split(labels, seed)?;
    let train_raw = raw.select(&tr);
    let prep = Prepared::new(cfg, &train_raw)?;
    let val = prep.pre.apply(&raw.select(&va))?;
    let test = prep.pre.apply(&raw.select(&te))?;
    let train = &prep.data;
    let train_labels = train.labels().expect("labels survive preprocessing");
    let k = cfg.knn_k.min(train.n());

    let sig = prep.signature(&cfg.signature)?;
    let (flag, _) = prep.solve(&sig, cfg, seed)?;
    let gr_sig = FlagSignature::grassmann(prep.ambient(), sig.q())?;
    let (gr, _) = prep.solve(&gr_sig, cfg, seed)?;

    let predict = |train_z: &[DMatrix<f64>], eval_z: &[DMatrix<f64>]| -> Result<LevelPredictions> {
        let levels = train_z
            .iter()
            .zip(eval_z)
            .map(|(a, b)| knn_predict_proba_with_classes(a, train_labels, b, k, classes))
            .collect::<Result<Vec<_>>>()?;
        LevelPredictions::new(levels)
    };
    let z_train = project_levels(train, &flag)?;
    let val_preds = predict(&z_train, &project_levels(&val, &flag)?)?;
    let test_preds = predict(&z_train, &project_levels(&test, &flag)?)?;
    let zg_train = project_levels(train, &gr)?;
    let gr_val = predict(&zg_train, &project_levels(&val, &gr)?)?;
    let gr_test = predict(&zg_train, &project_levels(&test, &gr)?)?;

    let val_labels = val.labels().expect("labels");
    let test_labels = test.labels().expect("labels");
    let ce_levels = |p: &LevelPredictions, l: &[usize]| -> Result<Vec<f64>> {
        p.levels().iter().map(|m| cross_entropy(m, l)).collect()
    };
    let d = sig.depth();
    let uniform = EnsembleWeights::uniform(d);
    let weights = optimal_soft_voting(&val_preds, val_labels)?;
    Ok(SeedEnsemble {
        seed,
        level_val_ce: ce_levels(&val_preds, val_labels)?,
        level_test_ce: ce_levels(&test_preds, test_labels)?,
        grassmann_val_ce: cross_entropy(&gr_val.levels()[0], val_labels)?,
        grassmann_test_ce: cross_entropy(&gr_test.levels()[0], test_labels)?,
        uniform_val_ce: soft_voting_ce(&val_preds, &uniform, val_labels)?,
        uniform_test_ce: soft_voting_ce(&test_preds, &uniform, test_labels)?,
        weighted_val_ce: soft_voting_ce(&val_preds, &weights, val_labels)?,
        weighted_test_ce: soft_voting_ce(&test_preds, &weights, test_labels)?,
        weights: weights.as_vector().iter().copied().collect(),
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn join(w: &[f64]) -> String {
    w.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(";")
}

/// Repeats a stratified train/validation/test split once per seed, learns the
/// flag (and the Grassmann optimum at `q_d`) on the training fold, classifies
/// every projection with k-nearest neighbours, and reports the test
/// cross-entropy of a single Grassmann classifier (`Gr`), the top flag level
/// (`Fl`), uniform soft voting over the levels (`Fl-U`) and soft voting with
/// weights fitted on the validation fold (`Fl-W`).
///
/// Writes `ensemble.csv` (the summary), `ensemble_seeds.csv` and `levels.csv`.
pub fn run_ensemble(cfg: &ExperimentConfig) -> Result<EnsembleReport> {
    cfg.validate()?;
    if matches!(cfg.problem, Problem::Ssc | Problem::Dip) {
        return invalid("ensemble classification needs a projection problem (pca, rsr or trace-ratio)");
    }
    let src = DataSource::parse(&cfg.data)?;
    let fixed = match &src {
        DataSource::Csv(_) => Some(load_source(&src, 0)?.0),
        _ => None,
    };
    let probe = match &fixed {
        Some(ds) => ds.clone(),
        None => load_source(&src, cfg.seeds[0])?.0,
    };
    if probe.labels().is_none() {
        return invalid("ensemble needs labeled data");
    }
    let pool = cfg.thread_pool()?;
    let seeds: Vec<(u64, std::result::Result<SeedEnsemble, String>)> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let run = match &fixed {
                    Some(ds) => one_seed(cfg, ds, seed),
                    None => load_source(&src, seed).and_then(|(ds, _)| one_seed(cfg, &ds, seed)),
                };
                (seed, run.map_err(|e| e.to_string()))
            })
            .collect()
    });

    let ok: Vec<&SeedEnsemble> = seeds.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    let d = cfg.signature.len();
    let mean_weights: Vec<f64> = (0..d).map(|k| mean(ok.iter().map(|s| s.weights[k]))).collect();
    let rows = vec![
        EnsembleRow {
            method: "Gr".into(),
            mean_val_ce: mean(ok.iter().map(|s| s.grassmann_val_ce)),
            mean_test_ce: mean(ok.iter().map(|s| s.grassmann_test_ce)),
            weights: None,
        },
        EnsembleRow {
            method: "Fl".into(),
            mean_val_ce: mean(ok.iter().map(|s| s.level_val_ce[d - 1])),
            mean_test_ce: mean(ok.iter().map(|s| s.level_test_ce[d - 1])),
            weights: Some(EnsembleWeights::vertex(d, d - 1).as_vector().iter().copied().collect()),
        },
        EnsembleRow {
            method: "Fl-U".into(),
            mean_val_ce: mean(ok.iter().map(|s| s.uniform_val_ce)),
            mean_test_ce: mean(ok.iter().map(|s| s.uniform_test_ce)),
            weights: Some(vec![1.0 / d as f64; d]),
        },
        EnsembleRow {
            method: "Fl-W".into(),
            mean_val_ce: mean(ok.iter().map(|s| s.weighted_val_ce)),
            mean_test_ce: mean(ok.iter().map(|s| s.weighted_test_ce)),
            weights: Some(mean_weights),
        },
    ];
    let report = EnsembleReport { seeds, rows };
    write_ensemble(cfg, &report)?;
    Ok(report)
}

fn write_ensemble(cfg: &ExperimentConfig, report: &EnsembleReport) -> Result<()> {
    create_dir(&cfg.out)?;
    let mut summary = String::from("method,mean_val_ce,mean_test_ce,weights\n");
    for r in &report.rows {
        let w = r.weights.as_deref().map(join).unwrap_or_default();
        let _ = writeln!(summary, "{},{},{},{w}", r.method, r.mean_val_ce, r.mean_test_ce);
    }
    write_file(&cfg.out.join("ensemble.csv"), &summary)?;

    let d = cfg.signature.len();
    let mut per_seed = String::from("seed,status,method,val_ce,test_ce,weights\n");
    let mut levels = String::from("seed,level,q_k,val_ce,test_ce,weight\n");
    for (seed, r) in &report.seeds {
        match r {
            Ok(s) => {
                let rows: [(&str, f64, f64, String); 4] = [
                    ("Gr", s.grassmann_val_ce, s.grassmann_test_ce, String::new()),
                    ("Fl", s.level_val_ce[d - 1], s.level_test_ce[d - 1], String::new()),
                    ("Fl-U", s.uniform_val_ce, s.uniform_test_ce, join(&vec![1.0 / d as f64; d])),
                    ("Fl-W", s.weighted_val_ce, s.weighted_test_ce, join(&s.weights)),
                ];
                for (m, v, t, w) in rows {
                    let _ = writeln!(per_seed, "{seed},ok,{m},{v},{t},{w}");
                }
                for k in 0..d {
                    let _ = writeln!(
                        levels,
                        "{seed},{},{},{},{},{}",
                        k + 1,
                        cfg.signature[k],
                        s.level_val_ce[k],
                        s.level_test_ce[k],
                        s.weights[k]
                    );
                }
            }
            Err(e) => {
                let _ = writeln!(per_seed, "{seed},failed,,,,{}", e.replace([',', '\n'], ";"));
            }
        }
    }
    write_file(&cfg.out.join("ensemble_seeds.csv"), &per_seed)?;
    write_file(&cfg.out.join("levels.csv"), &levels)?;
    Ok(())
}
