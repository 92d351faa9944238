use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flagtrick::datagen::save_csv;
use flagtrick::experiment::{
    generate, parse_seeds, parse_signature, run_compare, run_ensemble, run_outlier_scores, Centering,
    ExperimentConfig, Problem, SolverKind,
};
use flagtrick::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_ALL_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "flagtrick", version, about = "Nested subspace learning on flag manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Grassmann problem at every level and the flag problem once; report nestedness.
    Compare(Common),
    /// Stratified classification with per-level kNN and soft voting (Gr, Fl, Fl-U, Fl-W).
    Ensemble(Common),
    /// Reconstruction-error outlier scores of the Grassmann and flag RSR solutions.
    Outliers(Common),
    /// Write a generated dataset to CSV, one file per seed.
    Gen(GenArgs),
}

/// Flags shared by the experiment subcommands. Every flag overrides the
/// corresponding field of the `--config` file.
#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// pca, rsr, trace-ratio, ssc or dip.
    #[arg(long)]
    problem: Option<String>,
    /// Increasing dimensions, e.g. 1,2,5.
    #[arg(long)]
    signature: Option<String>,
    /// CSV path or gen:<name>[:key=value,...].
    #[arg(long)]
    data: Option<String>,
    /// sd, fmf (rsr only) or newton (trace-ratio only).
    #[arg(long)]
    solver: Option<String>,
    /// Seed range `0..9` (inclusive) or list `1,4,7`.
    #[arg(long)]
    seeds: Option<String>,
    /// SSC sparsity weight.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    knn_k: Option<usize>,
    /// none, mean or median.
    #[arg(long)]
    center: Option<String>,
    /// Random restarts per steepest-descent solve.
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Print the effective config as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct GenArgs {
    /// gen:<name>[:key=value,...]
    #[arg(long)]
    data: String,
    #[arg(long, default_value = "0")]
    seeds: String,
    /// Output directory (or a .csv file for a single seed).
    #[arg(long, default_value = "data")]
    out: PathBuf,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = &self.problem {
            cfg.problem = p.parse::<Problem>()?;
        }
        if let Some(s) = &self.signature {
            cfg.signature = parse_signature(s)?;
        }
        if let Some(d) = &self.data {
            cfg.data = d.clone();
        }
        if let Some(s) = &self.solver {
            cfg.solver = s.parse::<SolverKind>()?;
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = parse_seeds(s)?;
        }
        if let Some(c) = &self.center {
            cfg.center = Some(c.parse::<Centering>()?);
        }
        cfg.beta = self.beta.unwrap_or(cfg.beta);
        cfg.knn_k = self.knn_k.unwrap_or(cfg.knn_k);
        cfg.restarts = self.restarts.unwrap_or(cfg.restarts);
        cfg.descent.max_iters = self.max_iters.unwrap_or(cfg.descent.max_iters);
        cfg.descent.grad_tol = self.grad_tol.unwrap_or(cfg.descent.grad_tol);
        cfg.jobs = self.jobs.unwrap_or(cfg.jobs);
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn compare(cfg: &ExperimentConfig) -> Result<bool, Error> {
    let rep = run_compare(cfg)?;
    let ok = rep.runs.iter().filter(|r| r.result.is_ok()).count();
    println!("{ok}/{} runs succeeded; outputs in {}", rep.runs.len(), cfg.out.display());
    for sc in &rep.seeds {
        let gr: Vec<String> = sc.grassmann_angles.iter().map(|a| fmt(*a)).collect();
        let fl: Vec<String> = sc.flag_angles.iter().map(|a| fmt(*a)).collect();
        println!("seed {}: consecutive angles grassmann [{}] flag [{}]", sc.seed, gr.join(", "), fl.join(", "));
    }
    for r in rep.runs.iter().filter(|r| r.result.is_err()) {
        eprintln!("seed {} {}: {}", r.seed, r.name, r.result.as_ref().unwrap_err());
    }
    Ok(!rep.all_failed())
}

fn ensemble(cfg: &ExperimentConfig) -> Result<bool, Error> {
    let rep = run_ensemble(cfg)?;
    println!("{:<6} {:>12} {:>12}  weights", "method", "val CE", "test CE");
    for r in &rep.rows {
        let w = r.weights.as_ref().map_or_else(String::new, |w| {
            format!("({})", w.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(", "))
        });
        println!("{:<6} {:>12.4} {:>12.4}  {w}", r.method, r.mean_val_ce, r.mean_test_ce);
    }
    for (seed, r) in &rep.seeds {
        if let Err(e) = r {
            eprintln!("seed {seed}: {e}");
        }
    }
    Ok(!rep.all_failed())
}

fn outliers(cfg: &ExperimentConfig) -> Result<bool, Error> {
    let rep = run_outlier_scores(cfg)?;
    for (seed, r) in &rep.seeds {
        match r {
            Ok(s) => println!(
                "seed {seed}: separation margin grassmann {} flag {}",
                fmt(s.grassmann_margin),
                fmt(s.flag_margin)
            ),
            Err(e) => eprintln!("seed {seed}: {e}"),
        }
    }
    Ok(!rep.all_failed())
}

fn gen(args: &GenArgs) -> Result<bool, Error> {
    let seeds = parse_seeds(&args.seeds)?;
    let single_file = seeds.len() == 1 && args.out.extension().is_some_and(|e| e == "csv");
    if !single_file {
        std::fs::create_dir_all(&args.out)?;
    }
    for seed in seeds {
        let (ds, pv) = generate(&args.data, seed)?;
        let name = pv.generator.split(':').next().unwrap_or("data").to_string();
        let path = if single_file { args.out.clone() } else { args.out.join(format!("{name}_seed{seed}.csv")) };
        save_csv(&ds, &path, Some(&pv))?;
        println!("wrote {} ({} samples, {} features)", path.display(), ds.n(), ds.p());
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gen(args) => gen(args),
        Command::Compare(c) | Command::Ensemble(c) | Command::Outliers(c) => match c.resolve() {
            Err(e) => Err(e),
            Ok(cfg) if c.print_config => {
                println!("{}", cfg.to_json());
                Ok(true)
            }
            Ok(cfg) => match &cli.command {
                Command::Compare(_) => compare(&cfg),
                Command::Ensemble(_) => ensemble(&cfg),
                _ => outliers(&cfg),
            },
        },
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: every run failed");
            ExitCode::from(EXIT_ALL_FAILED)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
