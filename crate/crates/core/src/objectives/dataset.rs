use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Samples stored column-wise (`p × n`), with optional class labels and
/// ground-truth outlier flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: DMatrix<f64>,
    labels: Option<Vec<usize>>,
    outlier_mask: Option<Vec<bool>>,
}

impl Dataset {
    pub fn new(samples: DMatrix<f64>) -> Result<Self> {
        if samples.iter().any(|v| !v.is_finite()) {
            return invalid("dataset has non-finite entries");
        }
        Ok(Self { samples, labels: None, outlier_mask: None })
    }

    /// Attaches labels; classes must be exactly `0..C` with none skipped.
    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n() {
            return invalid(format!("{} labels for {} samples", labels.len(), self.n()));
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; classes];
        for &l in &labels {
            seen[l] = true;
        }
        if seen.iter().any(|s| !s) {
            return invalid("labels must cover 0..C contiguously");
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_outlier_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.n() {
            return invalid(format!("outlier mask has {} entries for {} samples", mask.len(), self.n()));
        }
        self.outlier_mask = Some(mask);
        Ok(self)
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn outlier_mask(&self) -> Option<&[bool]> {
        self.outlier_mask.as_deref()
    }

    pub fn p(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n(&self) -> usize {
        self.samples.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels().map_or(0, |l| l.iter().max().map_or(0, |m| m + 1))
    }

    /// Same metadata, new sample matrix (e.g. after a projection).
    pub fn map_samples(&self, samples: DMatrix<f64>) -> Result<Self> {
        if samples.ncols() != self.n() {
            return invalid("mapped samples must keep the sample count");
        }
        let mut out = Self::new(samples)?;
        out.labels = self.labels.clone();
        out.outlier_mask = self.outlier_mask.clone();
        Ok(out)
    }

    /// Subset of samples by column index, metadata carried along.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            samples: self.samples.select_columns(idx),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            outlier_mask: self.outlier_mask.as_ref().map(|m| idx.iter().map(|&i| m[i]).collect()),
        }
    }

    /// `XXᵀ`.
    pub fn scatter(&self) -> DMatrix<f64> {
        &self.samples * self.samples.transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterMode {
    Mean,
    Median,
}

/// Geometric median by Weiszfeld iteration.
pub fn geometric_median(x: &DMatrix<f64>) -> DVector<f64> {
    const TOL: f64 = 1e-9;
    const MAX_ITERS: usize = 1000;
    let n = x.ncols();
    let mut m = x.column_mean();
    for _ in 0..MAX_ITERS {
        let mut num = DVector::zeros(x.nrows());
        let mut den = 0.0;
        let mut coincident = None;
        for (i, col) in x.column_iter().enumerate() {
            let dist = (col - &m).norm();
            if dist < 1e-15 {
                coincident = Some(i);
                continue;
            }
            num += col / dist;
            den += 1.0 / dist;
        }
        if den == 0.0 {
            break;
        }
        let mut next = num / den;
        if let Some(i) = coincident {
            // Vardi–Zhang correction: stay at a data point if it is optimal.
            let r = (&next - &m).norm() * den;
            let eta = if n > 1 { 1.0 } else { 0.0 };
            if r <= eta {
                next = x.column(i).into_owned();
            } else {
                let t = (eta / r).min(1.0);
                next = &next * (1.0 - t) + &m * t;
            }
        }
        let moved = (&next - &m).norm();
        m = next;
        if moved <= TOL * (1.0 + m.norm()) {
            break;
        }
    }
    m
}

/// Translates the samples so the chosen center sits at the origin.
pub fn center(x: &Dataset, mode: CenterMode) -> Result<Dataset> {
    if x.n() == 0 {
        return invalid("cannot center an empty dataset");
    }
    let c = match mode {
        CenterMode::Mean => x.samples.column_mean(),
        CenterMode::Median => geometric_median(&x.samples),
    };
    let mut samples = x.samples.clone();
    for mut col in samples.column_iter_mut() {
        col -= &c;
    }
    x.map_samples(samples)
}
