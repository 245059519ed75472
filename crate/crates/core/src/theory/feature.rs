use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Linear,
    LinearRelu,
}

/// A fixed random feature extractor `f(x) = W x` (optionally rectified)
/// with operator norm capped at `beta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMapSpec {
    pub kind: FeatureKind,
    pub out_dim: usize,
    pub seed: u64,
    pub beta: f64,
}

impl Default for FeatureMapSpec {
    fn default() -> Self {
        Self {
            kind: FeatureKind::Linear,
            out_dim: 16,
            seed: 0,
            beta: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FeatureMap {
    kind: FeatureKind,
    weights: DMatrix<f64>,
}

impl FeatureMap {
    pub fn build(spec: &FeatureMapSpec, input_dim: usize) -> Result<Self> {
        if spec.out_dim == 0 || input_dim == 0 {
            return Err(Error::invalid("feature_map", "dimensions must be positive"));
        }
        if !(spec.beta > 0.0 && spec.beta.is_finite()) {
            return Err(Error::invalid("feature_map", format!("beta {} must be positive", spec.beta)));
        }
        let mut rng = seed::rng(seed::derive(spec.seed, seed::stream::FEATURE, 0));
        let mut w = DMatrix::from_fn(spec.out_dim, input_dim, |_, _| StandardNormal.sample(&mut rng));
        let top = w.singular_values().max();
        w *= spec.beta / top;
        Ok(Self {
            kind: spec.kind,
            weights: w,
        })
    }

    /// Builds a linear map with explicit weights (rows are output features).
    pub fn from_weights(kind: FeatureKind, weights: DMatrix<f64>) -> Self {
        Self { kind, weights }
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn operator_norm(&self) -> f64 {
        self.weights.singular_values().max()
    }

    pub fn apply_slice(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                op: "feature_map",
                left: vec![x.len()],
                right: vec![self.input_dim()],
            });
        }
        let mut y = &self.weights * DVector::from_column_slice(x);
        if self.kind == FeatureKind::LinearRelu {
            y.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        Ok(y)
    }

    pub fn apply(&self, x: &Tensor) -> Result<DVector<f64>> {
        self.apply_slice(x.data())
    }
}

/// Feature consistency error `‖f(x1) - f(x2)‖₂`.
pub fn fce(map: &FeatureMap, x1: &Tensor, x2: &Tensor) -> Result<f64> {
    x1.expect_same_shape(x2, "fce")?;
    Ok((map.apply(x1)? - map.apply(x2)?).norm())
}
