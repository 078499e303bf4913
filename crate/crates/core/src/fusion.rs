//! Joint/coordinate representation and early/late fusion.
//!
//! Element-wise reductions (sum, mul, avg) combine operands in a canonical
//! order, sorted by value, so the result is exactly independent of the order
//! in which modalities are listed. Averages are accumulated as running means,
//! which keeps `avg(v, ..., v) == v` exact.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, Modality};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMethod {
    #[default]
    Concat,
    Sum,
    Mul,
    Avg,
}

impl std::str::FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(FusionMethod::Concat),
            "sum" => Ok(FusionMethod::Sum),
            "mul" => Ok(FusionMethod::Mul),
            "avg" => Ok(FusionMethod::Avg),
            other => Err(Error::Config(format!("unknown fusion method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LateFusion {
    #[default]
    Sum,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepresentationKind {
    #[default]
    Joint,
    CoordinateEarly,
    CoordinateLate,
}

/// Representation strategy plus the per-modality linear maps used by the
/// coordinate modes. Inter-modal constraints are not modelled.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationMode<T> {
    pub kind: RepresentationKind,
    projections: BTreeMap<Modality, Matrix<T>>,
}

impl<T: Scalar> RepresentationMode<T> {
    pub fn joint() -> Self {
        Self {
            kind: RepresentationKind::Joint,
            projections: BTreeMap::new(),
        }
    }

    pub fn coordinate(kind: RepresentationKind) -> Self {
        Self {
            kind,
            projections: BTreeMap::new(),
        }
    }

    /// Register `P_m` with shape `d_out x d_m`.
    pub fn with_projection(mut self, modality: Modality, p: Matrix<T>) -> Self {
        self.projections.insert(modality, p);
        self
    }

    pub fn with_identity(self, modality: Modality, dim: usize) -> Self {
        self.with_projection(modality, Matrix::identity(dim))
    }

    pub fn projection(&self, modality: Modality) -> Option<&Matrix<T>> {
        self.projections.get(&modality)
    }

    pub fn modalities(&self) -> impl Iterator<Item = Modality> + '_ {
        self.projections.keys().copied()
    }
}

fn sorted<T: Scalar>(mut vals: Vec<T>) -> Vec<T> {
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    vals
}

fn canonical_sum<T: Scalar>(vals: Vec<T>) -> T {
    sorted(vals).into_iter().fold(T::zero(), |a, b| a + b)
}

fn canonical_product<T: Scalar>(vals: Vec<T>) -> T {
    sorted(vals).into_iter().fold(T::one(), |a, b| a * b)
}

fn canonical_mean<T: Scalar>(vals: Vec<T>) -> T {
    let mut mean = T::zero();
    for (k, v) in sorted(vals).into_iter().enumerate() {
        mean = mean + (v - mean) / T::of_usize(k + 1);
    }
    mean
}

/// Combine per-modality vectors into one, in modality order for `Concat`.
pub fn early_fuse<T: Scalar, V: AsRef<[T]>>(features: &[V], method: FusionMethod) -> Result<Vec<T>> {
    let first = features.first().ok_or(Error::EmptyModalities)?.as_ref();
    if method == FusionMethod::Concat {
        return Ok(features.iter().flat_map(|v| v.as_ref().iter().copied()).collect());
    }
    let dim = first.len();
    if let Some(bad) = features.iter().find(|v| v.as_ref().len() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            found: bad.as_ref().len(),
        });
    }
    let reduce = match method {
        FusionMethod::Sum => canonical_sum::<T>,
        FusionMethod::Mul => canonical_product::<T>,
        FusionMethod::Avg => canonical_mean::<T>,
        FusionMethod::Concat => unreachable!(),
    };
    Ok((0..dim)
        .map(|k| reduce(features.iter().map(|v| v.as_ref()[k]).collect()))
        .collect())
}

/// `P_m · feature` for the modality's registered projection.
pub fn coordinate_project<T: Scalar>(
    feature: &[T],
    modality: Modality,
    mode: &RepresentationMode<T>,
) -> Result<Vec<T>> {
    let p = mode.projection(modality).ok_or(Error::UnknownModality(modality))?;
    if p.cols() != feature.len() {
        return Err(Error::DimMismatch {
            expected: p.cols(),
            found: feature.len(),
        });
    }
    Ok(p.mul_vec(feature))
}

/// Shared-space representation: concatenation in modality order.
pub fn joint_represent<T: Scalar, V: AsRef<[T]>>(features: &[V]) -> Result<Vec<T>> {
    if features.is_empty() {
        return Err(Error::EmptyModalities);
    }
    Ok(features.iter().flat_map(|v| v.as_ref().iter().copied()).collect())
}

/// Aggregate modality-specific predictions for one (user, item).
pub fn late_fuse<T: Scalar>(scores: &[T], method: LateFusion) -> Result<T> {
    if scores.is_empty() {
        return Err(Error::EmptyModalities);
    }
    Ok(match method {
        LateFusion::Sum => canonical_sum(scores.to_vec()),
        LateFusion::Avg => canonical_mean(scores.to_vec()),
    })
}

/// Late fusion of whole score vectors, element-wise.
pub fn late_fuse_vectors<T: Scalar>(scores: &[Vec<T>], method: LateFusion) -> Result<Vec<T>> {
    let first = scores.first().ok_or(Error::EmptyModalities)?;
    (0..first.len())
        .map(|k| {
            let col: Vec<T> = scores
                .iter()
                .map(|s| s.get(k).copied().ok_or(Error::DimMismatch { expected: first.len(), found: s.len() }))
                .collect::<Result<_>>()?;
            late_fuse(&col, method)
        })
        .collect()
}

/// Fuse row-aligned feature blocks into a single block.
///
/// `Joint` concatenates; `CoordinateEarly` projects each modality and then
/// applies `method`. `CoordinateLate` keeps modalities apart and is rejected
/// here: callers keep the blocks separate instead.
pub fn fuse_features(
    blocks: &[FeatureMatrix],
    mode: &RepresentationMode<f64>,
    method: FusionMethod,
) -> Result<FeatureMatrix> {
    let first = blocks.first().ok_or(Error::EmptyModalities)?;
    for b in blocks {
        if b.row_ids() != first.row_ids() {
            return Err(Error::Config(format!(
                "{} features are not row-aligned with {}",
                b.modality(),
                first.modality()
            )));
        }
    }
    let modality = if blocks.len() == 1 {
        first.modality()
    } else {
        Modality::VisualTextual
    };
    let mut values = Vec::new();
    let mut dim = 0;
    for r in 0..first.len() {
        let rows: Vec<Vec<f64>> = blocks
            .iter()
            .map(|b| b.row(r).iter().map(|&v| f64::from(v)).collect())
            .collect();
        let fused = match mode.kind {
            RepresentationKind::Joint => joint_represent(&rows)?,
            RepresentationKind::CoordinateEarly => {
                let projected: Vec<Vec<f64>> = rows
                    .iter()
                    .zip(blocks)
                    .map(|(row, b)| coordinate_project(row, b.modality(), mode))
                    .collect::<Result<_>>()?;
                early_fuse(&projected, method)?
            }
            RepresentationKind::CoordinateLate => {
                return Err(Error::Config(
                    "coordinate_late keeps modalities separate; nothing to fuse".into(),
                ))
            }
        };
        dim = fused.len();
        values.extend(fused.into_iter().map(|v| v as f32));
    }
    if first.is_empty() {
        dim = match mode.kind {
            RepresentationKind::Joint => blocks.iter().map(FeatureMatrix::dim).sum(),
            _ => blocks
                .iter()
                .map(|b| mode.projection(b.modality()).map_or(b.dim(), Matrix::rows))
                .max()
                .unwrap_or(1),
        };
    }
    FeatureMatrix::new(modality, dim, first.row_ids().to_vec(), values)
}

/// Interpret an MMFE block as a projection matrix: one row per output dim.
pub fn projection_from_features(fm: &FeatureMatrix) -> Matrix<f64> {
    fm.to_matrix()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_examples() {
        assert_eq!(early_fuse(&[vec![1.0, 2.0], vec![3.0, 4.0]], FusionMethod::Concat).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(early_fuse(&[vec![2.0, 4.0], vec![4.0, 8.0]], FusionMethod::Avg).unwrap(), vec![3.0, 6.0]);
        assert_eq!(
            early_fuse(&[vec![1.0, 0.0, 2.0], vec![5.0, 7.0, 3.0]], FusionMethod::Mul).unwrap(),
            vec![5.0, 0.0, 6.0]
        );
        assert_eq!(early_fuse(&[vec![1.0, 2.0], vec![3.0, 4.0]], FusionMethod::Sum).unwrap(), vec![4.0, 6.0]);
    }

    #[test]
    fn early_errors() {
        let empty: [Vec<f64>; 0] = [];
        assert!(matches!(early_fuse(&empty, FusionMethod::Sum), Err(Error::EmptyModalities)));
        assert!(matches!(
            early_fuse(&[vec![1.0], vec![1.0, 2.0]], FusionMethod::Avg),
            Err(Error::DimMismatch { expected: 1, found: 2 })
        ));
        // concat accepts ragged operands
        assert_eq!(early_fuse(&[vec![1.0], vec![1.0, 2.0]], FusionMethod::Concat).unwrap().len(), 3);
    }

    #[test]
    fn projection_examples() {
        let mode = RepresentationMode::coordinate(RepresentationKind::CoordinateEarly)
            .with_identity(Modality::Visual, 2)
            .with_projection(Modality::Textual, Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]));
        assert_eq!(coordinate_project(&[2.0, 3.0], Modality::Visual, &mode).unwrap(), vec![2.0, 3.0]);
        assert_eq!(coordinate_project(&[2.0, 3.0], Modality::Textual, &mode).unwrap(), vec![5.0, 3.0]);
        assert!(matches!(
            coordinate_project(&[2.0, 3.0], Modality::Audio, &mode),
            Err(Error::UnknownModality(Modality::Audio))
        ));
    }

    #[test]
    fn joint_examples() {
        assert_eq!(joint_represent(&[vec![1.0, 2.0]]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(joint_represent(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap(), vec![1.0, 2.0, 3.0]);
        let empty: [Vec<f64>; 0] = [];
        assert!(matches!(joint_represent(&empty), Err(Error::EmptyModalities)));
    }

    #[test]
    fn late_examples() {
        assert!((late_fuse(&[0.2, 0.6], LateFusion::Avg).unwrap() - 0.4f64).abs() < 1e-15);
        assert_eq!(late_fuse(&[0.37], LateFusion::Sum).unwrap(), 0.37);
        assert_eq!(late_fuse(&[0.1, 0.1, 0.1], LateFusion::Avg).unwrap(), 0.1);
        assert!(matches!(late_fuse::<f64>(&[], LateFusion::Avg), Err(Error::EmptyModalities)));
    }

    #[test]
    fn fuse_blocks_joint_and_early() {
        let a = FeatureMatrix::new(Modality::Visual, 2, vec!["x".into(), "y".into()], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = FeatureMatrix::new(Modality::Textual, 2, vec!["x".into(), "y".into()], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let joint = fuse_features(&[a.clone(), b.clone()], &RepresentationMode::joint(), FusionMethod::Concat).unwrap();
        assert_eq!(joint.dim(), 4);
        assert_eq!(joint.row(1), &[3.0, 4.0, 7.0, 8.0]);
        let mode = RepresentationMode::coordinate(RepresentationKind::CoordinateEarly)
            .with_identity(Modality::Visual, 2)
            .with_identity(Modality::Textual, 2);
        let early = fuse_features(&[a, b], &mode, FusionMethod::Sum).unwrap();
        assert_eq!(early.row(0), &[6.0, 8.0]);
    }
}
