use nalgebra::DVector;

use crate::error::{Error, Result};

/// A set of `n >= 1` finite points in `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    points: Vec<DVector<f64>>,
    dim: usize,
}

impl ParticleEnsemble {
    pub fn new(points: Vec<DVector<f64>>) -> Result<Self> {
        let first = points.first().ok_or_else(|| {
            Error::DegenerateEnsemble("ensemble must hold at least one point".into())
        })?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::DegenerateEnsemble(
                "points must have dimension >= 1".into(),
            ));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteEvaluation(format!("particle {i}")));
            }
        }
        Ok(Self { points, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(
            rows.iter()
                .map(|r| DVector::from_column_slice(r.as_ref()))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DVector<f64>> {
        self.points.iter()
    }

    pub fn into_points(self) -> Vec<DVector<f64>> {
        self.points
    }

    /// Returns a copy with every point shifted by `offset`.
    pub fn translated(&self, offset: &DVector<f64>) -> Result<Self> {
        if offset.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: offset.len(),
            });
        }
        Self::new(self.points.iter().map(|p| p + offset).collect())
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: self.dim,
            });
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for ParticleEnsemble {
    type Output = DVector<f64>;

    fn index(&self, i: usize) -> &DVector<f64> {
        &self.points[i]
    }
}
