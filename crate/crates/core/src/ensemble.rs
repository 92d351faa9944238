//! Multilevel learning: one classifier per flag level, combined by voting.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::flag_manifold::{validate, FlagPoint};
use crate::objectives::Dataset;

/// Probability floor applied before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;
/// Additive smoothing of kNN class counts.
pub const KNN_SMOOTHING: f64 = 1e-3;
pub const DEFAULT_KNN_K: usize = 5;

/// Per-level class-probability matrices (`n × C` each).
#[derive(Debug, Clone, PartialEq)]
pub struct LevelPredictions {
    levels: Vec<DMatrix<f64>>,
}

impl LevelPredictions {
    pub fn new(levels: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = levels.first() else {
            return invalid("at least one level is required");
        };
        let shape = first.shape();
        for (k, m) in levels.iter().enumerate() {
            if m.shape() != shape {
                return invalid(format!("level {k} has shape {:?}, expected {shape:?}", m.shape()));
            }
            if m.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return invalid(format!("level {k} has entries outside [0, 1]"));
            }
            if m.row_iter().any(|r| (r.sum() - 1.0).abs() > 1e-9) {
                return invalid(format!("level {k} has rows not summing to 1"));
            }
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[DMatrix<f64>] {
        &self.levels
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn n(&self) -> usize {
        self.levels[0].nrows()
    }

    pub fn classes(&self) -> usize {
        self.levels[0].ncols()
    }
}

/// Convex combination weights over levels.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleWeights(DVector<f64>);

impl EnsembleWeights {
    pub fn new(w: DVector<f64>) -> Result<Self> {
        if w.is_empty() || w.iter().any(|&v| !(v >= 0.0)) || (w.sum() - 1.0).abs() > 1e-12 {
            return invalid("weights must be nonnegative and sum to 1");
        }
        Ok(Self(w))
    }

    pub fn uniform(d: usize) -> Self {
        Self(DVector::from_element(d, 1.0 / d as f64))
    }

    pub fn vertex(d: usize, k: usize) -> Self {
        let mut w = DVector::zeros(d);
        w[k] = 1.0;
        Self(w)
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }
}

/// k-nearest-neighbour class probabilities for the columns of `test`, with
/// `(count + α)/(k + αC)` smoothing. Distance ties go to the lower training
/// index. The class count is taken from `train_labels`.
pub fn knn_predict_proba(
    train: &DMatrix<f64>,
    train_labels: &[usize],
    test: &DMatrix<f64>,
    k: usize,
) -> Result<DMatrix<f64>> {
    let classes = train_labels.iter().max().map_or(0, |m| m + 1);
    knn_predict_proba_with_classes(train, train_labels, test, k, classes)
}

/// As [`knn_predict_proba`] with an explicit number of classes.
pub fn knn_predict_proba_with_classes(
    train: &DMatrix<f64>,
    train_labels: &[usize],
    test: &DMatrix<f64>,
    k: usize,
    classes: usize,
) -> Result<DMatrix<f64>> {
    let n_tr = train.ncols();
    if n_tr == 0 {
        return invalid("kNN needs a nonempty training set");
    }
    if train_labels.len() != n_tr || train.nrows() != test.nrows() {
        return invalid("kNN inputs have inconsistent shapes");
    }
    if k == 0 || k > n_tr {
        return invalid(format!("k = {k} must lie in 1..={n_tr}"));
    }
    if train_labels.iter().any(|&l| l >= classes) {
        return invalid("training label exceeds the class count");
    }
    let denom = k as f64 + KNN_SMOOTHING * classes as f64;
    let mut out = DMatrix::zeros(test.ncols(), classes);
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n_tr);
    for (i, t) in test.column_iter().enumerate() {
        order.clear();
        order.extend(train.column_iter().enumerate().map(|(j, x)| ((x - t).norm_squared(), j)));
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut counts = vec![0usize; classes];
        for &(_, j) in &order[..k] {
            counts[train_labels[j]] += 1;
        }
        for (c, &cnt) in counts.iter().enumerate() {
            out[(i, c)] = (cnt as f64 + KNN_SMOOTHING) / denom;
        }
    }
    Ok(out)
}

/// Coordinates `U_{1:q_k}ᵀ X` of the samples at every level.
pub fn project_levels(x: &Dataset, flag: &FlagPoint) -> Result<Vec<DMatrix<f64>>> {
    if !validate(flag) {
        return invalid("flag basis is not orthonormal");
    }
    if flag.signature().p() != x.p() {
        return invalid("flag and data dimensions differ");
    }
    let full = flag.basis().transpose() * x.samples();
    Ok(flag.signature().dims().iter().map(|&q| full.rows(0, q).into_owned()).collect())
}

fn check_labels(n: usize, classes: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != n {
        return invalid(format!("{} labels for {n} predictions", labels.len()));
    }
    if labels.iter().any(|&l| l >= classes) {
        return invalid("label exceeds the class count");
    }
    Ok(())
}

/// `−(1/(nC)) Σ_i ln p_{i, y_i}` with probabilities floored at [`PROB_FLOOR`].
pub fn cross_entropy(preds: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
    check_labels(preds.nrows(), preds.ncols(), labels)?;
    let scale = (preds.nrows() * preds.ncols()) as f64;
    Ok(-labels.iter().enumerate().map(|(i, &y)| preds[(i, y)].max(PROB_FLOOR).ln()).sum::<f64>() / scale)
}

/// `Σ_k w_k · preds_k`.
pub fn ensemble_predict(preds: &LevelPredictions, weights: &EnsembleWeights) -> Result<DMatrix<f64>> {
    if weights.0.len() != preds.depth() {
        return invalid("one weight per level is required");
    }
    let mut out = DMatrix::zeros(preds.n(), preds.classes());
    for (m, &w) in preds.levels.iter().zip(weights.0.iter()) {
        out += m * w;
    }
    Ok(out)
}

/// True-class probability of every sample at every level (`n × d`).
fn true_class_matrix(preds: &LevelPredictions, labels: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(preds.n(), preds.depth(), |i, k| preds.levels[k][(i, labels[i])])
}

fn mixture_ce(t: &DMatrix<f64>, w: &DVector<f64>, scale: f64) -> f64 {
    -(t * w).iter().map(|&p| p.max(PROB_FLOOR).ln()).sum::<f64>() / scale
}

/// Cross-entropy of the weighted mixture of level predictions.
pub fn soft_voting_ce(preds: &LevelPredictions, weights: &EnsembleWeights, labels: &[usize]) -> Result<f64> {
    check_labels(preds.n(), preds.classes(), labels)?;
    if weights.0.len() != preds.depth() {
        return invalid("one weight per level is required");
    }
    let scale = (preds.n() * preds.classes()) as f64;
    Ok(mixture_ce(&true_class_matrix(preds, labels), &weights.0, scale))
}

const MIRROR_STEP: f64 = 0.5;
const MIRROR_MAX_ITERS: usize = 2000;
const MIRROR_REL_TOL: f64 = 1e-10;

/// Simplex weights minimizing the mixture cross-entropy, by exponentiated
/// gradient from the uniform point. The result never does worse than the
/// uniform weights or any single level.
pub fn optimal_soft_voting(preds: &LevelPredictions, labels: &[usize]) -> Result<EnsembleWeights> {
    check_labels(preds.n(), preds.classes(), labels)?;
    let d = preds.depth();
    if d == 1 {
        return Ok(EnsembleWeights::vertex(1, 0));
    }
    let t = true_class_matrix(preds, labels);
    let scale = (preds.n() * preds.classes()) as f64;
    let objective = |w: &DVector<f64>| mixture_ce(&t, w, scale);

    let mut w = DVector::from_element(d, 1.0 / d as f64);
    let mut f = objective(&w);
    let mut best = (f, w.clone());
    for _ in 0..MIRROR_MAX_ITERS {
        let mix = &t * &w;
        let inv = mix.map(|p| if p > PROB_FLOOR { 1.0 / p } else { 0.0 });
        let grad = -(t.transpose() * inv) / scale;
        let shift = grad.min();
        let mut next = DVector::from_fn(d, |k, _| w[k] * (-MIRROR_STEP * (grad[k] - shift)).exp());
        next /= next.sum();
        let f_next = objective(&next);
        let rel = (f - f_next).abs() / f.abs().max(f64::MIN_POSITIVE);
        w = next;
        f = f_next;
        if f < best.0 {
            best = (f, w.clone());
        }
        if rel < MIRROR_REL_TOL {
            break;
        }
    }
    for k in 0..d {
        let v = EnsembleWeights::vertex(d, k).0;
        let fv = objective(&v);
        if fv < best.0 {
            best = (fv, v);
        }
    }
    let mut w = best.1;
    w /= w.sum();
    EnsembleWeights::new(w)
}

/// Index (0-based) of the level with the lowest holdout cross-entropy; ties
/// go to the smaller level.
pub fn hard_vote(holdout_ce: &[f64]) -> Result<usize> {
    if holdout_ce.is_empty() {
        return invalid("hard voting needs at least one level");
    }
    Ok(holdout_ce
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, &ce)| if ce < acc.1 { (k, ce) } else { acc })
        .0)
}
