use std::collections::HashMap;

use crate::numcore::Matrix;
use crate::{Error, Result};

/// Category label of an observation.
pub type Label = u32;

/// Observations as feature vectors, with optional ground-truth categories.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    ids: Vec<usize>,
    features: Matrix,
    labels: Vec<Option<Label>>,
    row_of: HashMap<usize, usize>,
}

impl Dataset {
    pub fn new(ids: Vec<usize>, features: Matrix, labels: Vec<Option<Label>>) -> Result<Self> {
        if ids.len() != features.rows() || labels.len() != features.rows() {
            return Err(Error::Shape(format!(
                "{} ids and {} labels for {} feature rows",
                ids.len(),
                labels.len(),
                features.rows()
            )));
        }
        let mut row_of = HashMap::with_capacity(ids.len());
        for (row, &id) in ids.iter().enumerate() {
            if row_of.insert(id, row).is_some() {
                return Err(Error::Consistency(format!("duplicate observation id {id}")));
            }
        }
        Ok(Self {
            ids,
            features,
            labels,
            row_of,
        })
    }

    /// Dataset whose ids are the row indices.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<Option<Label>>) -> Result<Self> {
        Self::new((0..rows.len()).collect(), Matrix::from_rows(rows)?, labels)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[Option<Label>] {
        &self.labels
    }

    pub fn contains(&self, id: usize) -> bool {
        self.row_of.contains_key(&id)
    }

    pub fn row_of(&self, id: usize) -> Result<usize> {
        self.row_of
            .get(&id)
            .copied()
            .ok_or_else(|| Error::Consistency(format!("unknown observation id {id}")))
    }

    pub fn features_of(&self, id: usize) -> Result<&[f64]> {
        Ok(self.features.row(self.row_of(id)?))
    }

    pub fn label_of(&self, id: usize) -> Result<Option<Label>> {
        Ok(self.labels[self.row_of(id)?])
    }

    /// True when every observation carries a label.
    pub fn is_labeled(&self) -> bool {
        !self.labels.is_empty() && self.labels.iter().all(Option::is_some)
    }

    /// Label lookup that fails on unlabeled observations.
    pub fn require_label(&self, id: usize) -> Result<Label> {
        self.label_of(id)?
            .ok_or_else(|| Error::Usage(format!("observation {id} has no label")))
    }

    /// Copy with the features of the given rows replaced.
    pub fn with_features(&self, features: Matrix) -> Result<Self> {
        Self::new(self.ids.clone(), features, self.labels.clone())
    }
}
