//! Datasets, instances and linear models.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("instance {index} has {found} features, expected {expected}")]
    FeatureLength {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("instance {index} has target {value} but classification targets must be 0 or 1")]
    NonBinaryTarget { index: usize, value: f64 },
    #[error("instance {index} has a non-finite feature or target")]
    NonFinite { index: usize },
    #[error("group {0} has no instances")]
    EmptyGroup(GroupId),
    #[error("dataset has no instances")]
    Empty,
    #[error("feature name count {found} does not match k = {expected}")]
    FeatureNames { expected: usize, found: usize },
    #[error("model has {found} weights, dataset has k = {expected}")]
    WeightLength { expected: usize, found: usize },
}

/// Opaque categorical group identifier `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupId(pub u32);

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for GroupId {
    fn from(v: u32) -> Self {
        GroupId(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskMode {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub features: Vec<f64>,
    pub group: GroupId,
    pub target: f64,
}

impl Instance {
    pub fn new(features: Vec<f64>, group: impl Into<GroupId>, target: f64) -> Self {
        Instance {
            features,
            group: group.into(),
            target,
        }
    }
}

/// A validated training set `T`.
///
/// Every group listed in the index is non-empty and the index partitions the
/// instance list. Instances are immutable once the dataset is built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    k: usize,
    instances: Vec<Instance>,
    mode: TaskMode,
    group_index: BTreeMap<GroupId, Vec<usize>>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(k: usize, instances: Vec<Instance>, mode: TaskMode) -> Result<Self, DomainError> {
        if instances.is_empty() {
            return Err(DomainError::Empty);
        }
        let mut group_index: BTreeMap<GroupId, Vec<usize>> = BTreeMap::new();
        for (i, inst) in instances.iter().enumerate() {
            if inst.features.len() != k {
                return Err(DomainError::FeatureLength {
                    index: i,
                    expected: k,
                    found: inst.features.len(),
                });
            }
            if !inst.target.is_finite() || inst.features.iter().any(|x| !x.is_finite()) {
                return Err(DomainError::NonFinite { index: i });
            }
            if mode == TaskMode::Classification && inst.target != 0.0 && inst.target != 1.0 {
                return Err(DomainError::NonBinaryTarget {
                    index: i,
                    value: inst.target,
                });
            }
            group_index.entry(inst.group).or_default().push(i);
        }
        let feature_names = (0..k).map(|j| format!("x{j}")).collect();
        Ok(Dataset {
            k,
            instances,
            mode,
            group_index,
            feature_names,
        })
    }

    /// Like [`Dataset::new`] but also requires every group in `expected` to
    /// be present, which is how an empty group gets reported.
    pub fn with_groups(
        k: usize,
        instances: Vec<Instance>,
        mode: TaskMode,
        expected: &[GroupId],
    ) -> Result<Self, DomainError> {
        let ds = Dataset::new(k, instances, mode)?;
        for g in expected {
            if !ds.group_index.contains_key(g) {
                return Err(DomainError::EmptyGroup(*g));
            }
        }
        Ok(ds)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self, DomainError> {
        if names.len() != self.k {
            return Err(DomainError::FeatureNames {
                expected: self.k,
                found: names.len(),
            });
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn mode(&self) -> TaskMode {
        self.mode
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn group_index(&self) -> &BTreeMap<GroupId, Vec<usize>> {
        &self.group_index
    }

    pub fn groups(&self) -> Vec<GroupId> {
        self.group_index.keys().copied().collect()
    }

    pub fn group_size(&self, g: GroupId) -> usize {
        self.group_index.get(&g).map_or(0, Vec::len)
    }

    pub fn targets(&self) -> Vec<f64> {
        self.instances.iter().map(|i| i.target).collect()
    }

    pub fn group_labels(&self) -> Vec<GroupId> {
        self.instances.iter().map(|i| i.group).collect()
    }

    /// Sub-dataset made of the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset, DomainError> {
        let instances = rows.iter().map(|&r| self.instances[r].clone()).collect();
        Dataset::new(self.k, instances, self.mode)?.with_feature_names(self.feature_names.clone())
    }
}

/// Linear hypothesis `h(x) = θ·x`, no intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>) -> Self {
        LinearModel { weights }
    }

    pub fn zeros(k: usize) -> Self {
        LinearModel {
            weights: vec![0.0; k],
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x)
    }

    pub fn predict_all(&self, ds: &Dataset) -> Result<Vec<f64>, DomainError> {
        if self.weights.len() != ds.k() {
            return Err(DomainError::WeightLength {
                expected: ds.k(),
                found: self.weights.len(),
            });
        }
        Ok(ds.instances().iter().map(|i| self.predict(&i.features)).collect())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_index_partitions_instances() {
        let ds = Dataset::new(
            1,
            vec![
                Instance::new(vec![1.0], 0, 0.5),
                Instance::new(vec![2.0], 1, 0.5),
                Instance::new(vec![3.0], 0, 0.5),
            ],
            TaskMode::Regression,
        )
        .unwrap();
        assert_eq!(ds.group_index()[&GroupId(0)], vec![0, 2]);
        assert_eq!(ds.group_index()[&GroupId(1)], vec![1]);
        let total: usize = ds.group_index().values().map(Vec::len).sum();
        assert_eq!(total, ds.len());
    }

    #[test]
    fn rejects_bad_instances() {
        let err = Dataset::new(2, vec![Instance::new(vec![1.0], 0, 0.0)], TaskMode::Regression);
        assert!(matches!(err, Err(DomainError::FeatureLength { .. })));
        let err = Dataset::new(1, vec![Instance::new(vec![1.0], 0, 0.5)], TaskMode::Classification);
        assert!(matches!(err, Err(DomainError::NonBinaryTarget { .. })));
        let err = Dataset::with_groups(
            1,
            vec![Instance::new(vec![1.0], 0, 1.0)],
            TaskMode::Classification,
            &[GroupId(0), GroupId(1)],
        );
        assert_eq!(err.unwrap_err(), DomainError::EmptyGroup(GroupId(1)));
    }

    #[test]
    fn predict_is_dot_product() {
        let m = LinearModel::new(vec![0.5, -2.0]);
        assert_eq!(m.predict(&[2.0, 1.0]), -1.0);
    }
}
