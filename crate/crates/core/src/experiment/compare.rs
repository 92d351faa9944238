//! Grassmann runs at every level against one flag run.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::prepare::{Prepared, ProblemData};
use super::source::{load_source, DataSource};
use super::svg::{scatter_svg, Panel};
use super::{cell, create_dir, write_file, ExperimentConfig};
use crate::descent::OptTrace;
use crate::error::Result;
use crate::flag_manifold::FlagPoint;
use crate::numerics::subspace_distance;
use crate::objectives::Dataset;

#[derive(Debug, Clone)]
pub struct RunResult {
    pub point: FlagPoint,
    pub trace: OptTrace,
    pub objective: f64,
    pub seconds: f64,
}

/// One solve: a Grassmann run `gr-q<q>` or the flag run `flag`.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub name: String,
    pub dims: Vec<usize>,
    pub result: std::result::Result<RunResult, String>,
}

/// Nestedness metrics of one seed. Entries are `None` where a run failed or
/// the quantity does not apply.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedComparison {
    pub seed: u64,
    /// `Θ(S_k, S_{k+1})` between consecutive Grassmann optima, `k < d`.
    pub grassmann_angles: Vec<Option<f64>>,
    /// The same angles inside the flag (zero up to roundoff).
    pub flag_angles: Vec<Option<f64>>,
    /// `tr(Π_{S_k} X Xᵀ) / tr(X Xᵀ)` per level.
    pub grassmann_ev: Vec<Option<f64>>,
    pub flag_ev: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub runs: Vec<RunOutcome>,
    pub seeds: Vec<SeedComparison>,
}

impl CompareReport {
    pub fn all_failed(&self) -> bool {
        self.runs.iter().all(|r| r.result.is_err())
    }

    pub fn run(&self, seed: u64, name: &str) -> Option<&RunOutcome> {
        self.runs.iter().find(|r| r.seed == seed && r.name == name)
    }

    pub fn flag(&self, seed: u64) -> Option<&RunResult> {
        self.run(seed, "flag")?.result.as_ref().ok()
    }

    pub fn grassmann(&self, seed: u64, q: usize) -> Option<&RunResult> {
        self.run(seed, &format!("gr-q{q}"))?.result.as_ref().ok()
    }
}

fn timed_solve(prep: &Prepared, dims: &[usize], cfg: &ExperimentConfig, seed: u64) -> Result<RunResult> {
    let start = Instant::now();
    let sig = prep.signature(dims)?;
    let (point, trace) = prep.solve(&sig, cfg, seed)?;
    let objective = prep.objective(&sig)?.value(point.basis());
    Ok(RunResult { point, trace, objective, seconds: start.elapsed().as_secs_f64() })
}

fn explained_variance(x: &Dataset, u: &DMatrix<f64>) -> Option<f64> {
    let total = x.samples().norm_squared();
    (u.nrows() == x.p() && total > 0.0).then(|| (u.transpose() * x.samples()).norm_squared() / total)
}

fn consecutive_angles(subspaces: &[Option<DMatrix<f64>>]) -> Vec<Option<f64>> {
    subspaces
        .windows(2)
        .map(|w| match (&w[0], &w[1]) {
            (Some(a), Some(b)) => subspace_distance(a, b).ok(),
            _ => None,
        })
        .collect()
}

/// Loads and prepares the data of every seed (in parallel).
pub(crate) fn prepare_all(cfg: &ExperimentConfig) -> Result<Vec<(u64, std::result::Result<Prepared, String>)>> {
    let src = DataSource::parse(&cfg.data)?;
    // A fixed CSV file is read once; load errors there are configuration errors.
    let fixed = match &src {
        DataSource::Csv(_) => Some(load_source(&src, 0)?.0),
        _ => None,
    };
    Ok(cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let prep = match &fixed {
                Some(ds) => Prepared::new(cfg, ds),
                None => load_source(&src, seed).and_then(|(ds, _)| Prepared::new(cfg, &ds)),
            };
            (seed, prep.map_err(|e| e.to_string()))
        })
        .collect())
}

fn level_coordinates(prep: &Prepared, u: &DMatrix<f64>) -> DMatrix<f64> {
    let cols = u.ncols().min(2);
    let u2 = u.columns(0, cols);
    let z = match prep.problem {
        ProblemData::Ssc(_) => u2.transpose(),
        _ => u2.transpose() * prep.data.samples(),
    };
    let mut out = DMatrix::zeros(2, z.ncols());
    out.rows_mut(0, cols).copy_from(&z);
    out
}

fn groups(x: &Dataset) -> Vec<usize> {
    if let Some(l) = x.labels() {
        l.to_vec()
    } else if let Some(m) = x.outlier_mask() {
        m.iter().map(|&o| usize::from(o)).collect()
    } else {
        vec![0; x.n()]
    }
}

/// Solves the Grassmann problem at every `q_k` and the flag problem once per
/// seed, then writes `angles.csv`, `explained_variance.csv`, `report.csv`,
/// per-run `traces/` and `bases/`, and `scatter.svg` for the first seed.
///
/// Solver failures are recorded per run instead of aborting.
pub fn run_compare(cfg: &ExperimentConfig) -> Result<CompareReport> {
    cfg.validate()?;
    let pool = cfg.thread_pool()?;
    let dims = cfg.signature.clone();
    let d = dims.len();

    let (prepared, runs) = pool.install(|| -> Result<_> {
        let prepared = prepare_all(cfg)?;
        let tasks: Vec<(usize, Option<usize>)> =
            (0..prepared.len()).flat_map(|s| (0..d).map(move |k| (s, Some(k))).chain([(s, None)])).collect();
        let runs: Vec<RunOutcome> = tasks
            .par_iter()
            .map(|&(s, level)| {
                let (seed, prep) = &prepared[s];
                let run_dims = level.map_or_else(|| dims.clone(), |k| vec![dims[k]]);
                let name = level.map_or_else(|| "flag".to_string(), |k| format!("gr-q{}", dims[k]));
                let result = match prep {
                    Ok(p) => timed_solve(p, &run_dims, cfg, *seed).map_err(|e| e.to_string()),
                    Err(e) => Err(format!("data preparation failed: {e}")),
                };
                RunOutcome { seed: *seed, name, dims: run_dims, result }
            })
            .collect();
        Ok((prepared, runs))
    })?;

    let mut seeds = Vec::with_capacity(prepared.len());
    for (s, (seed, prep)) in prepared.iter().enumerate() {
        let base = s * (d + 1);
        let gr: Vec<Option<DMatrix<f64>>> = (0..d)
            .map(|k| runs[base + k].result.as_ref().ok().map(|r| r.point.basis().clone()))
            .collect();
        let flag = runs[base + d].result.as_ref().ok();
        let fl: Vec<Option<DMatrix<f64>>> = (0..d).map(|k| flag.map(|r| r.point.subspace(k))).collect();
        let ev = |subs: &[Option<DMatrix<f64>>]| -> Vec<Option<f64>> {
            subs.iter()
                .map(|u| match (u, prep) {
                    (Some(u), Ok(p)) if !matches!(p.problem, ProblemData::Ssc(_)) => explained_variance(&p.data, u),
                    _ => None,
                })
                .collect()
        };
        seeds.push(SeedComparison {
            seed: *seed,
            grassmann_angles: consecutive_angles(&gr),
            flag_angles: consecutive_angles(&fl),
            grassmann_ev: ev(&gr),
            flag_ev: ev(&fl),
        });
    }
    let report = CompareReport { runs, seeds };
    write_compare(cfg, &prepared, &report)?;
    Ok(report)
}

fn write_compare(
    cfg: &ExperimentConfig,
    prepared: &[(u64, std::result::Result<Prepared, String>)],
    report: &CompareReport,
) -> Result<()> {
    let out = &cfg.out;
    create_dir(&out.join("traces"))?;
    create_dir(&out.join("bases"))?;
    let dims = &cfg.signature;

    let mut angles = String::from("seed,k,q_k,q_next,grassmann,flag\n");
    let mut ev = String::from("seed,k,q_k,grassmann,flag\n");
    for sc in &report.seeds {
        for k in 0..sc.grassmann_angles.len() {
            let _ = writeln!(
                angles,
                "{},{},{},{},{},{}",
                sc.seed,
                k + 1,
                dims[k],
                dims[k + 1],
                cell(sc.grassmann_angles[k]),
                cell(sc.flag_angles[k])
            );
        }
        for k in 0..dims.len() {
            let _ = writeln!(ev, "{},{},{},{},{}", sc.seed, k + 1, dims[k], cell(sc.grassmann_ev[k]), cell(sc.flag_ev[k]));
        }
    }
    write_file(&out.join("angles.csv"), &angles)?;
    write_file(&out.join("explained_variance.csv"), &ev)?;

    let mut table = String::from("seed,run,dims,status,objective,iterations,termination,seconds,message\n");
    for r in &report.runs {
        let dims_cell = r.dims.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
        let stem = format!("seed{}_{}", r.seed, r.name);
        match &r.result {
            Ok(res) => {
                let _ = writeln!(
                    table,
                    "{},{},{},ok,{},{},{:?},{:.6},",
                    r.seed,
                    r.name,
                    dims_cell,
                    res.objective,
                    res.trace.records.len(),
                    res.trace.termination,
                    res.seconds
                );
                write_file(&out.join("traces").join(format!("{stem}.csv")), &res.trace.to_csv_string())?;
                res.point.save(out.join("bases").join(format!("{stem}.csv")))?;
            }
            Err(msg) => {
                let msg = msg.replace([',', '\n'], ";");
                let _ = writeln!(table, "{},{},{},failed,,,,,{msg}", r.seed, r.name, dims_cell);
            }
        }
    }
    write_file(&out.join("report.csv"), &table)?;

    // Scatter of the first seed with a complete flag run: the first level
    // with at least two dimensions (or the only level) of both methods.
    let shown = prepared.iter().find_map(|(seed, p)| Some((*seed, p.as_ref().ok()?, report.flag(*seed)?)));
    let mut panels = Vec::new();
    if let Some((seed, prep, flag)) = shown {
        let k = dims.iter().position(|&q| q >= 2).unwrap_or(0);
        let point_groups = groups(&prep.data);
        if let Some(gr) = report.grassmann(seed, dims[k]) {
            panels.push(Panel {
                title: format!("Grassmann q={} (seed {seed})", dims[k]),
                coords: level_coordinates(prep, gr.point.basis()),
                groups: point_groups.clone(),
            });
        }
        panels.push(Panel {
            title: format!("Flag q={} (seed {seed})", dims[k]),
            coords: level_coordinates(prep, &flag.point.subspace(k)),
            groups: point_groups,
        });
    }
    write_file(&out.join("scatter.svg"), &scatter_svg(&panels))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{Problem, SolverKind};

    fn cfg(dir: &std::path::Path, problem: Problem, data: &str, sig: Vec<usize>) -> ExperimentConfig {
        ExperimentConfig {
            problem,
            signature: sig,
            data: data.into(),
            seeds: vec![0, 1],
            out: dir.to_path_buf(),
            jobs: 2,
            restarts: 2,
            ..Default::default()
        }
    }

    #[test]
    fn pca_flag_is_nested_and_matches_grassmann() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg(dir.path(), Problem::Pca, "gen:clusters:c=3,p=6,n_per=30", vec![1, 2, 4]);
        c.descent.max_iters = 3000;
        c.descent.grad_tol = 1e-9;
        let rep = run_compare(&c).unwrap();
        for sc in &rep.seeds {
            for a in &sc.flag_angles {
                assert!(a.unwrap() < 1e-6);
            }
            let ev: Vec<f64> = sc.flag_ev.iter().map(|v| v.unwrap()).collect();
            assert!(ev.windows(2).all(|w| w[1] >= w[0]));
            let flag = rep.flag(sc.seed).unwrap();
            for (k, &q) in c.signature.iter().enumerate() {
                let gr = rep.grassmann(sc.seed, q).unwrap();
                assert!(subspace_distance(&flag.point.subspace(k), gr.point.basis()).unwrap() < 1e-3);
            }
        }
        for f in ["angles.csv", "explained_variance.csv", "report.csv", "scatter.svg", "traces/seed0_flag.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let angles = std::fs::read_to_string(dir.path().join("angles.csv")).unwrap();
        assert_eq!(angles.lines().count(), 1 + 2 * 2);
    }

    #[test]
    fn outputs_are_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mk = |d: &std::path::Path| {
            let mut c = cfg(d, Problem::Rsr, "gen:haystack:n_in=60,n_out=10", vec![1, 2]);
            c.jobs = if d == a.path() { 1 } else { 3 };
            c
        };
        run_compare(&mk(a.path())).unwrap();
        run_compare(&mk(b.path())).unwrap();
        for f in ["angles.csv", "explained_variance.csv", "bases/seed1_flag.csv", "traces/seed0_gr-q2.csv"] {
            let x = std::fs::read_to_string(a.path().join(f)).unwrap();
            let y = std::fs::read_to_string(b.path().join(f)).unwrap();
            assert_eq!(x, y, "{f}");
        }
    }

    #[test]
    fn single_level_flag_equals_grassmann() {
        let dir = tempfile::tempdir().unwrap();
        let rep = run_compare(&cfg(dir.path(), Problem::Rsr, "gen:haystack:n_in=60,n_out=10", vec![2])).unwrap();
        for seed in [0, 1] {
            let f = rep.flag(seed).unwrap();
            let g = rep.grassmann(seed, 2).unwrap();
            assert_eq!(f.point.basis(), g.point.basis());
            assert_eq!(f.trace, g.trace);
        }
    }

    #[test]
    fn failures_are_recorded_per_run() {
        let dir = tempfile::tempdir().unwrap();
        // No level of (2, 3) fits strictly inside R^2.
        let c = cfg(dir.path(), Problem::Pca, "gen:clusters:c=3,p=2,n_per=5", vec![2, 3]);
        let rep = run_compare(&c).unwrap();
        assert!(rep.all_failed());
        let table = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert!(table.lines().skip(1).all(|l| l.contains("failed")));
    }

    #[test]
    fn newton_and_fmf_pipelines() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg(dir.path(), Problem::TraceRatio, "gen:clusters", vec![1, 2]);
        c.solver = SolverKind::Newton;
        let rep = run_compare(&c).unwrap();
        assert!(rep.runs.iter().all(|r| r.result.is_ok()));
        let mut c = cfg(dir.path(), Problem::Rsr, "gen:haystack", vec![1, 2]);
        c.solver = SolverKind::Fmf;
        let rep = run_compare(&c).unwrap();
        assert!(rep.runs.iter().all(|r| r.result.is_ok()));
    }
}
