use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    /// `+1` for normal, `−1` for abnormal.
    pub fn sign(self) -> i8 {
        match self {
            Label::Normal => 1,
            Label::Abnormal => -1,
        }
    }

    pub fn from_sign(s: i8) -> Option<Self> {
        match s {
            1 => Some(Label::Normal),
            -1 => Some(Label::Abnormal),
            _ => None,
        }
    }

    pub fn is_abnormal(self) -> bool {
        self == Label::Abnormal
    }
}

/// Per-column mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    /// Column statistics of the listed rows. Constant columns get `std = 1`
    /// so that normalization stays invertible.
    pub fn fit(x: &Matrix, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidBatch(
                "cannot fit statistics on zero rows".into(),
            ));
        }
        let d = x.cols();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for &i in rows {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for &i in rows {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    pub fn normalize(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn denormalize(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }

    fn check(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.mean.len() {
            return Err(Error::Shape(format!(
                "data has {} columns, statistics cover {}",
                x.cols(),
                self.mean.len()
            )));
        }
        Ok(())
    }
}

/// Feature rows with normal/abnormal labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    x: Matrix,
    y: Vec<Label>,
    /// Statistics used to normalize `x`, if it has been normalized.
    pub feature_stats: Option<FeatureStats>,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, x: Matrix, y: Vec<Label>) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::Shape(format!(
                "{} labels for {} rows",
                y.len(),
                x.rows()
            )));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("dataset features".into()));
        }
        Ok(Self {
            name: name.into(),
            x,
            y,
            feature_stats: None,
        })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn labels(&self) -> &[Label] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn indices_of(&self, label: Label) -> Vec<usize> {
        self.y
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == label)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.y.iter().filter(|l| **l == label).count()
    }

    pub fn has_both_classes(&self) -> bool {
        self.count(Label::Normal) > 0 && self.count(Label::Abnormal) > 0
    }

    /// Rows `idx` in the given order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            feature_stats: self.feature_stats.clone(),
        }
    }

    /// Only the rows carrying `label`.
    pub fn filter(&self, label: Label) -> Self {
        self.subset(&self.indices_of(label))
    }

    /// Applies `stats` to the features and records them.
    pub fn normalized(&self, stats: &FeatureStats) -> Result<Self> {
        Ok(Self {
            name: self.name.clone(),
            x: stats.normalize(&self.x)?,
            y: self.y.clone(),
            feature_stats: Some(stats.clone()),
        })
    }
}
