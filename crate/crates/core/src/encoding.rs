//! Turns per-point feature vectors into network input: discretized
//! indicators for the embedding path, standardized values for the raw path.

use thiserror::Error;

use crate::discretize::{CutPoints, DiscretizationMethod, DiscretizeError};
use crate::linalg::Matrix;
use crate::preprocess::FeatureVector;
use crate::rnn::{InputSpec, SequenceInput};

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("feature index {0} out of range (features are v_p, v_avg, v_sd)")]
    Feature(usize),
    #[error("no features selected")]
    NoFeatures,
    #[error("{0} cut lists for {1} features")]
    CutCount(usize, usize),
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    Discretized { method: DiscretizationMethod, cuts: Vec<CutPoints> },
    Standardized { mean: Vec<f64>, sd: Vec<f64> },
}

/// A fitted encoder over a subset of the three features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEncoder {
    features: Vec<usize>,
    encoder: Encoder,
}

fn check_features(features: &[usize]) -> Result<(), EncodingError> {
    if features.is_empty() {
        return Err(EncodingError::NoFeatures);
    }
    match features.iter().find(|&&f| f >= FeatureVector::NAMES.len()) {
        Some(&f) => Err(EncodingError::Feature(f)),
        None => Ok(()),
    }
}

impl FeatureEncoder {
    pub fn new(features: Vec<usize>, encoder: Encoder) -> Result<Self, EncodingError> {
        check_features(&features)?;
        let n = match &encoder {
            Encoder::Discretized { cuts, .. } => cuts.len(),
            Encoder::Standardized { mean, sd } => mean.len().min(sd.len()),
        };
        if n != features.len() {
            return Err(EncodingError::CutCount(n, features.len()));
        }
        Ok(FeatureEncoder { features, encoder })
    }

    /// Cut points fitted per feature on the training rows.
    pub fn fit_discretized(
        method: DiscretizationMethod,
        features: &[usize],
        rows: &[FeatureVector],
        labels: &[usize],
    ) -> Result<Self, EncodingError> {
        check_features(features)?;
        let cuts = features
            .iter()
            .map(|&f| {
                let values: Vec<f64> = rows.iter().map(|r| r.get(f)).collect();
                method.fit(&values, labels)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(features.to_vec(), Encoder::Discretized { method, cuts })
    }

    /// z-scores from the training rows; a constant feature keeps unit scale.
    pub fn fit_standardized(features: &[usize], rows: &[FeatureVector]) -> Result<Self, EncodingError> {
        check_features(features)?;
        if rows.is_empty() {
            return Err(DiscretizeError::EmptySample.into());
        }
        let n = rows.len() as f64;
        let mut mean = Vec::new();
        let mut sd = Vec::new();
        for &f in features {
            let m = rows.iter().map(|r| r.get(f)).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r.get(f) - m).powi(2)).sum::<f64>() / n;
            mean.push(m);
            sd.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Self::new(features.to_vec(), Encoder::Standardized { mean, sd })
    }

    /// Raw values passed through unchanged.
    pub fn identity(features: &[usize]) -> Result<Self, EncodingError> {
        let n = features.len();
        Self::new(features.to_vec(), Encoder::Standardized { mean: vec![0.0; n], sd: vec![1.0; n] })
    }

    pub fn features(&self) -> &[usize] {
        &self.features
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn input_spec(&self, embedding_dim: usize) -> InputSpec {
        match self.bin_counts() {
            Some(bin_counts) => InputSpec::Embedded { bin_counts, dim: embedding_dim },
            None => InputSpec::Raw { features: self.features.len() },
        }
    }

    pub fn bin_counts(&self) -> Option<Vec<usize>> {
        match &self.encoder {
            Encoder::Discretized { cuts, .. } => Some(cuts.iter().map(CutPoints::n_intervals).collect()),
            Encoder::Standardized { .. } => None,
        }
    }

    pub fn encode(&self, rows: &[FeatureVector]) -> SequenceInput {
        let t = rows.len();
        match &self.encoder {
            Encoder::Discretized { method, cuts } => SequenceInput::Indicators(
                self.features
                    .iter()
                    .zip(cuts)
                    .map(|(&f, c)| {
                        let mut m = Matrix::zeros(t, c.n_intervals());
                        for (r, row) in rows.iter().enumerate() {
                            m.row_mut(r).copy_from_slice(&method.encode(row.get(f), c));
                        }
                        m
                    })
                    .collect(),
            ),
            Encoder::Standardized { mean, sd } => SequenceInput::Raw(Matrix::from_fn(t, self.features.len(), |r, j| {
                (rows[r].get(self.features[j]) - mean[j]) / sd[j]
            })),
        }
    }
}
