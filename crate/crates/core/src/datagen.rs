//! Seeded synthetic datasets and CSV ingestion.
//!
//! CSV files store one sample per row. A header row is optional; the columns
//! named `label` and `outlier` carry metadata, everything else is a feature.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::numerics::{psd_factor, psd_rank};
use crate::objectives::Dataset;

const RANK_TOL: f64 = 1e-10;

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Inliers drawn from `N(0, Σ_in/q)`, outliers from `N(0, Σ_out/rank(Σ_out))`.
#[derive(Debug, Clone, PartialEq)]
pub struct HaystackConfig {
    pub p: usize,
    pub q: usize,
    pub n_in: usize,
    pub n_out: usize,
    pub inlier_cov: DMatrix<f64>,
    pub outlier_cov: DMatrix<f64>,
    pub seed: u64,
}

impl HaystackConfig {
    /// Anisotropic inliers `diag(5, 1, 0.1)` (450 samples) against outliers
    /// `diag(0.1, 0.1, 5)` (50 samples) in three dimensions. The inlier
    /// covariance has full rank, so `q = 3`.
    pub fn anisotropic(seed: u64) -> Self {
        let diag = |v: [f64; 3]| DMatrix::from_diagonal(&DVector::from_row_slice(&v));
        Self {
            p: 3,
            q: 3,
            n_in: 450,
            n_out: 50,
            inlier_cov: diag([5.0, 1.0, 0.1]),
            outlier_cov: diag([0.1, 0.1, 5.0]),
            seed,
        }
    }

    /// The classical model: inliers uniform on a random `q`-subspace
    /// (`Σ_in = P P_ᵀ` for an orthonormal `P`), outliers `σ²_out I/p`.
    pub fn isotropic(p: usize, q: usize, n_in: usize, n_out: usize, sigma_out: f64, seed: u64) -> Result<Self> {
        if q == 0 || q > p {
            return invalid("need 0 < q <= p");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_5ace);
        let basis = crate::numerics::polar_factor(&gaussian(&mut rng, p, q))?;
        Ok(Self {
            p,
            q,
            n_in,
            n_out,
            inlier_cov: &basis * basis.transpose(),
            outlier_cov: DMatrix::identity(p, p) * (sigma_out * sigma_out / p as f64),
            seed,
        })
    }
}

pub fn haystack(cfg: &HaystackConfig) -> Result<Dataset> {
    let p = cfg.p;
    if cfg.inlier_cov.shape() != (p, p) || cfg.outlier_cov.shape() != (p, p) {
        return invalid(format!("covariances must be {p}x{p}"));
    }
    if cfg.q == 0 {
        return invalid("q must be positive");
    }
    let f_in = psd_factor(&cfg.inlier_cov)?;
    let f_out = psd_factor(&cfg.outlier_cov)?;
    let rank_in = psd_rank(&cfg.inlier_cov, RANK_TOL)?;
    if rank_in > cfg.q {
        return invalid(format!("inlier covariance has rank {rank_in} > q = {}", cfg.q));
    }
    let rank_out = psd_rank(&cfg.outlier_cov, RANK_TOL)?;
    if cfg.n_out > 0 && rank_out == 0 {
        return invalid("outlier covariance is zero");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let inliers = &f_in * gaussian(&mut rng, f_in.ncols(), cfg.n_in) / (cfg.q as f64).sqrt();
    let outliers = &f_out * gaussian(&mut rng, f_out.ncols(), cfg.n_out) / (rank_out.max(1) as f64).sqrt();
    let mut x = DMatrix::zeros(p, cfg.n_in + cfg.n_out);
    x.columns_mut(0, cfg.n_in).copy_from(&inliers);
    x.columns_mut(cfg.n_in, cfg.n_out).copy_from(&outliers);
    let mask = (0..cfg.n_in + cfg.n_out).map(|i| i >= cfg.n_in).collect();
    Dataset::new(x)?.with_outlier_mask(mask)
}

pub const DEFAULT_MOONS_NOISE: f64 = 0.08;

/// Two interleaved half circles in the `(x, y)` plane of `ℝ³`, with isotropic
/// Gaussian noise on all three coordinates. Label 0 is the upper moon.
pub fn two_moons_3d(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || n % 2 != 0 {
        return invalid(format!("two moons needs a positive even sample count, got {n}"));
    }
    if !(noise >= 0.0) {
        return invalid("noise must be nonnegative");
    }
    let half = n / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = |i: usize| if half == 1 { 0.0 } else { PI * i as f64 / (half - 1) as f64 };
    let mut x = DMatrix::zeros(3, n);
    for i in 0..half {
        x[(0, i)] = t(i).cos();
        x[(1, i)] = t(i).sin();
        x[(0, half + i)] = 1.0 - t(i).cos();
        x[(1, half + i)] = 0.5 - t(i).sin();
    }
    if noise > 0.0 {
        x += gaussian(&mut rng, 3, n) * noise;
    }
    let labels = (0..n).map(|i| usize::from(i >= half)).collect();
    Dataset::new(x)?.with_labels(labels)
}

/// `n_per` samples around each row of `means` with shared covariance.
pub fn gaussian_clusters(c: usize, n_per: usize, means: &DMatrix<f64>, cov: &DMatrix<f64>, seed: u64) -> Result<Dataset> {
    if c == 0 || means.nrows() != c {
        return invalid(format!("means must have one row per cluster ({c})"));
    }
    let p = means.ncols();
    if cov.shape() != (p, p) {
        return invalid(format!("covariance must be {p}x{p}"));
    }
    let f = psd_factor(cov)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(p, c * n_per);
    let mut labels = Vec::with_capacity(c * n_per);
    for k in 0..c {
        let noise = &f * gaussian(&mut rng, f.ncols(), n_per);
        for j in 0..n_per {
            let col = noise.column(j) + means.row(k).transpose();
            x.set_column(k * n_per + j, &col);
            labels.push(k);
        }
    }
    Dataset::new(x)?.with_labels(labels)
}

/// `c` isotropic unit-variance clusters in `ℝ^p` whose means are drawn
/// from `N(0, sep² I)` with the same seed, `n_per` samples each.
pub fn random_clusters(c: usize, p: usize, n_per: usize, sep: f64, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0xc1_u64 << 32));
    let means = gaussian(&mut rng, c, p) * sep;
    gaussian_clusters(c, n_per, &means, &DMatrix::identity(p, p), seed)
}

/// Five clusters in `ℝ^10` (means from `N(0, 4 I)`, unit spread, 20 each).
pub fn five_clusters(seed: u64) -> Result<Dataset> {
    random_clusters(5, 10, 20, 2.0, seed)
}

/// Source (label 0) and target (label 1) domains for domain adaptation:
/// the same anisotropic Gaussian, the target translated by `shift` along the
/// last coordinate, which carries the least variance.
pub fn two_domains(p: usize, n_per: usize, shift: f64, seed: u64) -> Result<Dataset> {
    if p < 2 || n_per == 0 {
        return invalid("two domains needs p >= 2 and samples in each domain");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales = DVector::from_fn(p, |i, _| 1.0 / (1.0 + i as f64));
    let mut x = gaussian(&mut rng, p, 2 * n_per);
    for (mut row, s) in x.row_iter_mut().zip(scales.iter()) {
        row *= *s;
    }
    for j in n_per..2 * n_per {
        x[(p - 1, j)] += shift;
    }
    Dataset::new(x)?.with_labels((0..2 * n_per).map(|j| usize::from(j >= n_per)).collect())
}

/// 64-dimensional stand-in for handwritten digits: 90 inliers near a random
/// 5-dimensional subspace whose energy sits mostly in two directions, and 10
/// outliers drawn from a separate 3-dimensional subspace plus ambient noise.
/// A 5-dimensional fit therefore tends to absorb the outlier directions.
pub fn digits_like(seed: u64) -> Result<Dataset> {
    const P: usize = 64;
    const N_IN: usize = 90;
    const N_OUT: usize = 10;
    const OUT_RANK: usize = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = crate::numerics::polar_factor(&gaussian(&mut rng, P, 5 + OUT_RANK))?;
    let scales = DVector::from_row_slice(&[3.0, 2.5, 0.4, 0.32, 0.24]);
    let mut coords = gaussian(&mut rng, 5, N_IN);
    for (mut row, s) in coords.row_iter_mut().zip(scales.iter()) {
        row *= *s;
    }
    let inliers = basis.columns(0, 5) * coords + gaussian(&mut rng, P, N_IN) * 0.05;
    // Outliers share a low-rank structure of their own (the "other digits"),
    // orthogonal to the inlier subspace, plus ambient noise.
    let outliers = basis.columns(5, OUT_RANK) * gaussian(&mut rng, OUT_RANK, N_OUT) * 3.0
        + gaussian(&mut rng, P, N_OUT) * 0.2;
    let mut x = DMatrix::zeros(P, N_IN + N_OUT);
    x.columns_mut(0, N_IN).copy_from(&inliers);
    x.columns_mut(N_IN, N_OUT).copy_from(&outliers);
    Dataset::new(x)?.with_outlier_mask((0..N_IN + N_OUT).map(|i| i >= N_IN).collect())
}

/// Provenance written as a leading comment line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvProvenance {
    pub seed: u64,
    pub generator: String,
}

pub fn to_csv_string(x: &Dataset, provenance: Option<&CsvProvenance>) -> String {
    let mut out = String::new();
    if let Some(pv) = provenance {
        let _ = writeln!(out, "# seed={} generator={}", pv.seed, pv.generator);
    }
    let mut header: Vec<String> = (0..x.p()).map(|i| format!("x{i}")).collect();
    if x.labels().is_some() {
        header.push("label".into());
    }
    if x.outlier_mask().is_some() {
        header.push("outlier".into());
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for j in 0..x.n() {
        let mut cells: Vec<String> = x.samples().column(j).iter().map(|v| format!("{v}")).collect();
        if let Some(l) = x.labels() {
            cells.push(l[j].to_string());
        }
        if let Some(m) = x.outlier_mask() {
            cells.push(u8::from(m[j]).to_string());
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn parse_err(row: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse { row, col, msg: msg.into() }
}

/// Parses a CSV document. Row and column numbers in errors are 1-based, with
/// rows counted as lines of the input.
pub fn from_csv_str(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, 0, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        records.push((line, rec));
    }
    let Some((first_line, first)) = records.first() else {
        return Err(parse_err(1, 1, "no data rows"));
    };

    let is_header = first.iter().any(|c| c.parse::<f64>().is_err());
    let names: Vec<String> = if is_header {
        first.iter().map(|c| c.to_ascii_lowercase()).collect()
    } else {
        (0..first.len()).map(|i| format!("x{i}")).collect()
    };
    let label_col = names.iter().position(|n| n == "label");
    let outlier_col = names.iter().position(|n| n == "outlier");
    let width = names.len();
    let body = if is_header { &records[1..] } else { &records[..] };
    if body.is_empty() {
        return Err(parse_err(*first_line + 1, 1, "no data rows after the header"));
    }

    let p = width - usize::from(label_col.is_some()) - usize::from(outlier_col.is_some());
    let mut values = Vec::with_capacity(p * body.len());
    let mut labels = Vec::new();
    let mut mask = Vec::new();
    for (line, rec) in body {
        if rec.len() != width {
            return Err(parse_err(*line, rec.len().min(width) + 1, format!("expected {width} fields, found {}", rec.len())));
        }
        for (c, cell) in rec.iter().enumerate() {
            let col = c + 1;
            if Some(c) == label_col {
                labels.push(cell.parse::<usize>().map_err(|_| parse_err(*line, col, format!("bad label `{cell}`")))?);
            } else if Some(c) == outlier_col {
                mask.push(match cell {
                    "1" | "true" => true,
                    "0" | "false" => false,
                    _ => return Err(parse_err(*line, col, format!("bad outlier flag `{cell}`"))),
                });
            } else {
                let v: f64 = cell.parse().map_err(|_| parse_err(*line, col, format!("not a number: `{cell}`")))?;
                if !v.is_finite() {
                    return Err(parse_err(*line, col, "non-finite value"));
                }
                values.push(v);
            }
        }
    }
    let samples = DMatrix::from_column_slice(p, body.len(), &values);
    let mut ds = Dataset::new(samples)?;
    if label_col.is_some() {
        ds = ds.with_labels(labels)?;
    }
    if outlier_col.is_some() {
        ds = ds.with_outlier_mask(mask)?;
    }
    Ok(ds)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    from_csv_str(&std::fs::read_to_string(path)?)
}

pub fn save_csv(x: &Dataset, path: impl AsRef<Path>, provenance: Option<&CsvProvenance>) -> Result<()> {
    std::fs::write(path, to_csv_string(x, provenance))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_cov(x: &DMatrix<f64>) -> DMatrix<f64> {
        let mean = x.column_mean();
        let mut c = x.clone();
        for mut col in c.column_iter_mut() {
            col -= &mean;
        }
        &c * c.transpose() / x.ncols() as f64
    }

    #[test]
    fn anisotropic_haystack_covariance() {
        let cfg = HaystackConfig::anisotropic(0);
        let ds = haystack(&cfg).unwrap();
        assert_eq!(ds.n(), 500);
        let inliers = ds.samples().columns(0, 450).into_owned();
        let cov = sample_cov(&inliers);
        for (i, target) in [5.0, 1.0, 0.1].into_iter().enumerate() {
            let t = target / cfg.q as f64;
            assert!((cov[(i, i)] - t).abs() < 0.15 * t, "entry {i}: {} vs {t}", cov[(i, i)]);
        }
        let mask = ds.outlier_mask().unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 50);
    }

    #[test]
    fn rank_of_inliers_bounded_by_q() {
        let mut cfg = HaystackConfig::anisotropic(0);
        cfg.q = 2;
        assert!(haystack(&cfg).is_err());
        cfg.q = 3;
        cfg.outlier_cov[(0, 0)] = -1.0;
        assert!(haystack(&cfg).is_err());
    }

    #[test]
    fn pure_gaussian_and_reproducible() {
        let mut cfg = HaystackConfig::anisotropic(4);
        cfg.n_out = 0;
        let a = haystack(&cfg).unwrap();
        assert!(a.outlier_mask().unwrap().iter().all(|&m| !m));
        assert_eq!(a, haystack(&cfg).unwrap());
        cfg.seed = 5;
        assert_ne!(a, haystack(&cfg).unwrap());
    }

    #[test]
    fn isotropic_haystack_is_classical_model() {
        let cfg = HaystackConfig::isotropic(6, 2, 50, 10, 1.0, 3).unwrap();
        let ds = haystack(&cfg).unwrap();
        // Inliers lie exactly on the 2-dimensional range of Σ_in.
        let pin = &cfg.inlier_cov;
        let inl = ds.samples().columns(0, 50).into_owned();
        assert!((pin * &inl - &inl).norm() < 1e-10 * inl.norm());
        assert!((&cfg.outlier_cov - DMatrix::identity(6, 6) / 6.0).norm() < 1e-15);
    }

    #[test]
    fn moons_noiseless_geometry() {
        let ds = two_moons_3d(100, 0.0, 0).unwrap();
        let x = ds.samples();
        assert!(x.row(2).iter().all(|&v| v == 0.0));
        for j in 0..50 {
            assert!((x.column(j).norm() - 1.0).abs() < 1e-12);
            let c = DVector::from_row_slice(&[1.0, 0.5, 0.0]);
            assert!(((x.column(50 + j) - c).norm() - 1.0).abs() < 1e-12);
        }
        let labels = ds.labels().unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 50);
        let width = x.row(0).max() - x.row(0).min();
        assert!((width - 3.0).abs() < 1e-12);
        assert!(two_moons_3d(7, 0.1, 0).is_err());
    }

    #[test]
    fn clusters_behave() {
        let means = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 50.0, 50.0]);
        let ds = gaussian_clusters(2, 200, &means, &DMatrix::identity(2, 2), 1).unwrap();
        for k in 0..2 {
            let idx: Vec<usize> = (0..400).filter(|&j| ds.labels().unwrap()[j] == k).collect();
            let m = ds.select(&idx).samples().column_mean();
            let bound = 4.0 / 200f64.sqrt();
            assert!((m - means.row(k).transpose()).amax() < bound);
        }
        let pred = crate::solvers::kmeans(ds.samples(), 2, 3, 0);
        assert_eq!(crate::solvers::clustering_accuracy(&pred, ds.labels().unwrap()), 1.0);
        let one = gaussian_clusters(1, 10, &DMatrix::zeros(1, 2), &DMatrix::identity(2, 2), 0).unwrap();
        assert_eq!(one.num_classes(), 1);
    }

    #[test]
    fn csv_round_trip() {
        let x = DMatrix::from_row_slice(2, 3, &[0.1, -2.5e-17, 3.0, 1.0 / 3.0, 7e10, -0.0]);
        let ds = Dataset::new(x).unwrap().with_labels(vec![0, 1, 0]).unwrap();
        let pv = CsvProvenance { seed: 9, generator: "test".into() };
        let text = to_csv_string(&ds, Some(&pv));
        assert!(text.starts_with("# seed=9 generator=test\nx0,x1,label\n"));
        assert_eq!(from_csv_str(&text).unwrap(), ds);
    }

    #[test]
    fn csv_headerless_and_outliers() {
        let ds = from_csv_str("1,2\n3,4\n5,6\n").unwrap();
        assert_eq!((ds.p(), ds.n()), (2, 3));
        assert_eq!(ds.samples()[(1, 2)], 6.0);
        let ds = from_csv_str("a,b,outlier\n1,2,0\n3,4,1\n").unwrap();
        assert_eq!(ds.outlier_mask().unwrap(), &[false, true]);
    }

    #[test]
    fn csv_errors_locate_cells() {
        assert!(matches!(from_csv_str(""), Err(Error::Parse { .. })));
        assert!(matches!(from_csv_str("# only a comment\n"), Err(Error::Parse { .. })));
        match from_csv_str("x0,x1\n1,2\n3\n") {
            Err(Error::Parse { row, col, .. }) => assert_eq!((row, col), (3, 2)),
            other => panic!("{other:?}"),
        }
        match from_csv_str("x0,x1\n1,2\n3,abc\n") {
            Err(Error::Parse { row, col, .. }) => assert_eq!((row, col), (3, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_file_io() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let ds = five_clusters(2).unwrap();
        save_csv(&ds, &path, None).unwrap();
        let back = load_csv(&path).unwrap();
        assert!((back.samples() - ds.samples()).amax() < 1e-12);
        assert_eq!(back.labels(), ds.labels());
    }

    #[test]
    fn digits_like_shape() {
        let ds = digits_like(0).unwrap();
        assert_eq!((ds.p(), ds.n()), (64, 100));
        assert_eq!(ds.outlier_mask().unwrap().iter().filter(|&&m| m).count(), 10);
    }
}
