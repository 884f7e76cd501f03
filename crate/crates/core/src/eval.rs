//! Point accuracy, distance accuracy, cross-entropy and per-class F1.

use std::fmt::Write as _;
use std::ops::Range;

use thiserror::Error;

use crate::geo::{haversine_distance, GpsPoint};
use crate::linalg::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    Empty,
    #[error("length mismatch in {context}: {left} vs {right}")]
    Length { context: &'static str, left: usize, right: usize },
    #[error("total distance weight is zero")]
    ZeroWeight,
    #[error("row {row} of the predicted distribution sums to {sum}")]
    NotNormalized { row: usize, sum: f64 },
    #[error("class index {index} out of range for {classes} classes")]
    Class { index: usize, classes: usize },
    #[error("segments do not partition {points} points")]
    Segments { points: usize },
}

fn same_len(context: &'static str, left: usize, right: usize) -> Result<(), EvalError> {
    if left != right {
        return Err(EvalError::Length { context, left, right });
    }
    Ok(())
}

pub fn point_accuracy(targets: &[usize], predictions: &[usize]) -> Result<f64, EvalError> {
    same_len("targets/predictions", targets.len(), predictions.len())?;
    if targets.is_empty() {
        return Err(EvalError::Empty);
    }
    let correct = targets.iter().zip(predictions).filter(|(t, p)| t == p).count();
    Ok(correct as f64 / targets.len() as f64)
}

/// Each point's forward leg inside its segment; the last point of a
/// segment weighs 0.
pub fn leg_weights(points: &[GpsPoint], segments: &[Range<usize>]) -> Result<Vec<f64>, EvalError> {
    let mut w = vec![0.0; points.len()];
    let mut next = 0;
    for s in segments {
        if s.start != next || s.end > points.len() || s.is_empty() {
            return Err(EvalError::Segments { points: points.len() });
        }
        for i in s.start..s.end - 1 {
            w[i] = haversine_distance(&points[i], &points[i + 1]);
        }
        next = s.end;
    }
    if next != points.len() {
        return Err(EvalError::Segments { points: points.len() });
    }
    Ok(w)
}

pub fn weighted_accuracy(weights: &[f64], targets: &[usize], predictions: &[usize]) -> Result<f64, EvalError> {
    same_len("targets/predictions", targets.len(), predictions.len())?;
    same_len("weights/targets", weights.len(), targets.len())?;
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(EvalError::ZeroWeight);
    }
    let correct: f64 = weights
        .iter()
        .zip(targets.iter().zip(predictions))
        .filter(|(_, (t, p))| t == p)
        .map(|(w, _)| w)
        .sum();
    Ok(correct / total)
}

pub fn distance_accuracy(
    points: &[GpsPoint],
    segments: &[Range<usize>],
    targets: &[usize],
    predictions: &[usize],
) -> Result<f64, EvalError> {
    same_len("points/targets", points.len(), targets.len())?;
    weighted_accuracy(&leg_weights(points, segments)?, targets, predictions)
}

/// Mean `−log p(target)` in nats.
pub fn cross_entropy(targets: &[usize], log_probs: &Matrix) -> Result<f64, EvalError> {
    same_len("targets/log-probability rows", targets.len(), log_probs.rows())?;
    if targets.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut total = 0.0;
    for (r, &y) in targets.iter().enumerate() {
        let row = log_probs.row(r);
        if y >= row.len() {
            return Err(EvalError::Class { index: y, classes: row.len() });
        }
        let sum: f64 = row.iter().map(|v| v.exp()).sum();
        if !((sum - 1.0).abs() <= 1e-6) {
            return Err(EvalError::NotNormalized { row: r, sum });
        }
        total -= row[y];
    }
    Ok(total / targets.len() as f64)
}

/// Rows are target classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix { classes, counts: vec![0; classes * classes] }
    }

    pub fn from_counts(rows: &[Vec<u64>]) -> Result<Self, EvalError> {
        let n = rows.len();
        let mut m = Self::new(n);
        for (r, row) in rows.iter().enumerate() {
            same_len("confusion row", n, row.len())?;
            m.counts[r * n..(r + 1) * n].copy_from_slice(row);
        }
        Ok(m)
    }

    pub fn from_predictions(classes: usize, targets: &[usize], predictions: &[usize]) -> Result<Self, EvalError> {
        same_len("targets/predictions", targets.len(), predictions.len())?;
        let mut m = Self::new(classes);
        for (&t, &p) in targets.iter().zip(predictions) {
            m.record(t, p)?;
        }
        Ok(m)
    }

    pub fn record(&mut self, target: usize, predicted: usize) -> Result<(), EvalError> {
        for index in [target, predicted] {
            if index >= self.classes {
                return Err(EvalError::Class { index, classes: self.classes });
            }
        }
        self.counts[target * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<(), EvalError> {
        same_len("confusion size", self.classes, other.classes)?;
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, target: usize, predicted: usize) -> u64 {
        self.counts[target * self.classes + predicted]
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        (0..self.classes).map(|p| self.get(c, p)).sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, c)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Report {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    /// Unweighted mean of the per-class F1.
    pub average_f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn harmonic_f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn f1_report(confusion: &ConfusionMatrix) -> Result<F1Report, EvalError> {
    if confusion.total() == 0 {
        return Err(EvalError::Empty);
    }
    let n = confusion.classes;
    let precision: Vec<f64> = (0..n).map(|c| ratio(confusion.get(c, c), confusion.col_sum(c))).collect();
    let recall: Vec<f64> = (0..n).map(|c| ratio(confusion.get(c, c), confusion.row_sum(c))).collect();
    let f1: Vec<f64> = precision.iter().zip(&recall).map(|(&p, &r)| harmonic_f1(p, r)).collect();
    Ok(F1Report { average_f1: average(&f1), precision, recall, f1 })
}

/// Unweighted mean of per-class scores.
pub fn average(scores: &[f64]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub a_point: f64,
    pub a_distance: f64,
    /// Nats per point.
    pub e_h: f64,
    pub confusion: ConfusionMatrix,
    pub f1: F1Report,
}

impl Metrics {
    pub fn a_f1(&self) -> f64 {
        self.f1.average_f1
    }

    /// Metrics for aligned targets, predictions, log-probabilities and
    /// distance weights.
    pub fn compute(
        targets: &[usize],
        log_probs: &Matrix,
        predictions: &[usize],
        weights: &[f64],
    ) -> Result<Self, EvalError> {
        let confusion = ConfusionMatrix::from_predictions(log_probs.cols(), targets, predictions)?;
        Ok(Metrics {
            a_point: point_accuracy(targets, predictions)?,
            a_distance: weighted_accuracy(weights, targets, predictions)?,
            e_h: cross_entropy(targets, log_probs)?,
            f1: f1_report(&confusion)?,
            confusion,
        })
    }

    /// Confusion matrix, per-class precision/recall/F1 and the summary
    /// measures as a plain-text table.
    pub fn render(&self, class_names: &[&str]) -> String {
        let mut s = String::new();
        let w = class_names.iter().map(|n| n.len()).max().unwrap_or(0).max(9);
        let _ = write!(s, "{:>w$}", "target");
        for name in class_names {
            let _ = write!(s, " {name:>w$}");
        }
        let _ = writeln!(s, " {:>w$}", "recall");
        for (r, name) in class_names.iter().enumerate() {
            let _ = write!(s, "{name:>w$}");
            for c in 0..class_names.len() {
                let _ = write!(s, " {:>w$}", self.confusion.get(r, c));
            }
            let _ = writeln!(s, " {:>w$.3}", self.f1.recall[r]);
        }
        for (label, values) in [("precision", &self.f1.precision), ("f1", &self.f1.f1)] {
            let _ = write!(s, "{label:>w$}");
            for v in values.iter() {
                let _ = write!(s, " {v:>w$.3}");
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "A_point    {:.6}", self.a_point);
        let _ = writeln!(s, "A_distance {:.6}", self.a_distance);
        let _ = writeln!(s, "E_H        {:.6}", self.e_h);
        let _ = writeln!(s, "A_F1       {:.6}", self.a_f1());
        s
    }
}
