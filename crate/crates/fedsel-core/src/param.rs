//! Flat parameter vectors.
//!
//! Model weights, gradients, and momentum buffers all share one flat `f64`
//! representation so aggregation and vector algebra stay allocation-cheap and
//! layout-agnostic.

use serde::{Deserialize, Serialize};

/// A flat vector of `f64` parameters (weights, a gradient, or a momentum
/// buffer). All arithmetic assumes operands have equal length; mismatches
/// panic because they are caller bugs, not runtime conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        assert_eq!(self.len(), other.len(), "dot: length mismatch");
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.0 {
            *v *= s;
        }
    }

    pub fn scaled(&self, s: f64) -> ParamVector {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &ParamVector) {
        assert_eq!(self.len(), other.len(), "axpy: length mismatch");
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += s * b;
        }
    }

    pub fn add(&mut self, other: &ParamVector) {
        self.axpy(1.0, other);
    }

    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Elementwise mean of the given vectors. Panics on an empty slice or
    /// mixed lengths.
    pub fn mean(vectors: &[&ParamVector]) -> ParamVector {
        assert!(!vectors.is_empty(), "mean of zero vectors");
        let mut acc = ParamVector::zeros(vectors[0].len());
        for v in vectors {
            acc.add(v);
        }
        acc.scale(1.0 / vectors.len() as f64);
        acc
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}
