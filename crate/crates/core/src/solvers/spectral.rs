//! Graph Laplacians and k-means on spectral embeddings.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::objectives::Dataset;

/// Pairwise Euclidean distances between the columns of `x`.
pub fn pairwise_distances(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.ncols();
    let norms: Vec<f64> = x.column_iter().map(|c| c.norm_squared()).collect();
    let gram = x.transpose() * x;
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { (norms[i] + norms[j] - 2.0 * gram[(i, j)]).max(0.0).sqrt() })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Normalized Laplacian `I − D^{-1/2} W D^{-1/2}` of the Gaussian affinity
/// whose bandwidth is the median pairwise distance.
pub fn build_laplacian(x: &Dataset) -> Result<DMatrix<f64>> {
    let n = x.n();
    if n < 2 {
        return invalid("a graph needs at least two samples");
    }
    let dist = pairwise_distances(x.samples());
    let sigma = median((0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| dist[(i, j)]).collect());
    if !(sigma > 0.0) {
        return invalid("median pairwise distance is zero; samples are duplicates");
    }
    let w = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (-dist[(i, j)].powi(2) / (2.0 * sigma * sigma)).exp()
        }
    });
    Ok(normalized_laplacian(&w))
}

/// `I − D^{-1/2} W D^{-1/2}`; isolated vertices get a zero row and column in
/// the normalized affinity.
pub fn normalized_laplacian(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let inv_sqrt = DVector::from_iterator(n, w.column_sum().iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }));
    let l = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - inv_sqrt[i] * w[(i, j)] * inv_sqrt[j]
    });
    (&l + l.transpose()) * 0.5
}

pub const KMEANS_RESTARTS: usize = 10;
const LLOYD_MAX_ITERS: usize = 300;

/// Clusters the samples (columns) of a spectral embedding into `c` groups:
/// every sample is scaled to unit norm, then k-means with k-means++ seeding
/// keeps the best of [`KMEANS_RESTARTS`] runs. Labels are numbered by first
/// appearance.
pub fn spectral_cluster(embedding: &DMatrix<f64>, c: usize, seed: u64) -> Result<Vec<usize>> {
    if c < 2 {
        return invalid("spectral clustering needs at least two clusters");
    }
    if embedding.ncols() < c {
        return invalid(format!("{} samples cannot form {c} clusters", embedding.ncols()));
    }
    let mut y = embedding.clone();
    for mut col in y.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    Ok(relabel_by_appearance(&kmeans(&y, c, KMEANS_RESTARTS, seed)))
}

/// Best-inertia k-means over several k-means++ restarts.
pub fn kmeans(x: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts.max(1) {
        let (inertia, labels) = lloyd(x, kmeans_plus_plus(x, k, &mut rng));
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    best.map(|(_, l)| l).unwrap_or_default()
}

fn sq_dist(a: nalgebra::DVectorView<f64>, b: nalgebra::DVectorView<f64>) -> f64 {
    (a - b).norm_squared()
}

fn kmeans_plus_plus(x: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = x.ncols();
    let mut centers = DMatrix::zeros(x.nrows(), k);
    let first = rng.random_range(0..n);
    centers.set_column(0, &x.column(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.column(i), centers.column(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if t < d {
                    idx = i;
                    break;
                }
                t -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.set_column(c, &x.column(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.column(i), centers.column(c)));
        }
    }
    centers
}

fn lloyd(x: &DMatrix<f64>, mut centers: DMatrix<f64>) -> (f64, Vec<usize>) {
    let n = x.ncols();
    let k = centers.ncols();
    let mut labels = vec![usize::MAX; n];
    let mut inertia = 0.0;
    for _ in 0..LLOYD_MAX_ITERS {
        let mut changed = false;
        inertia = 0.0;
        for i in 0..n {
            let (best, d) = (0..k)
                .map(|c| (c, sq_dist(x.column(i), centers.column(c))))
                .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
            inertia += d;
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = DMatrix::zeros(x.nrows(), k);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            let mut col = sums.column_mut(l);
            col += x.column(i);
            counts[l] += 1;
        }
        for c in 0..k {
            // Empty clusters keep their previous center.
            if counts[c] > 0 {
                centers.set_column(c, &(sums.column(c) / counts[c] as f64));
            }
        }
    }
    (inertia, labels)
}

fn relabel_by_appearance(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Fraction of samples correctly assigned under the best one-to-one matching
/// of predicted to true clusters (exhaustive over permutations).
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(pred.len(), truth.len());
    if pred.is_empty() {
        return 1.0;
    }
    let k = pred.iter().chain(truth).max().map_or(0, |m| m + 1);
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        confusion[p][t] += 1;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |p| {
        best = best.max((0..k).map(|i| confusion[i][p[i]]).sum());
    });
    best as f64 / pred.len() as f64
}

fn permute(v: &mut Vec<usize>, start: usize, f: &mut impl FnMut(&[usize])) {
    if start == v.len() {
        f(v);
        return;
    }
    for i in start..v.len() {
        v.swap(start, i);
        permute(v, start + 1, f);
        v.swap(start, i);
    }
}
