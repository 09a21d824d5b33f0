use nalgebra::{DVector, DVectorView};

use crate::error::{Error, Result};

/// Truncated moment sequence `(m_0, ..., m_N)` where every `m_k` is a block of
/// `block_dim` reals. Blocks are stored contiguously by `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    order: usize,
    block_dim: usize,
    values: DVector<f64>,
}

impl MomentVector {
    pub fn new(order: usize, block_dim: usize, values: DVector<f64>) -> Result<Self> {
        if block_dim == 0 {
            return Err(Error::invalid("block_dim", "must be positive"));
        }
        let expected = block_dim * (order + 1);
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                stage: "moment vector",
                node: i,
            });
        }
        Ok(Self {
            order,
            block_dim,
            values,
        })
    }

    pub fn zeros(order: usize, block_dim: usize) -> Self {
        Self {
            order,
            block_dim,
            values: DVector::zeros(block_dim * (order + 1)),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    /// The `k`-th moment block.
    pub fn block(&self, k: usize) -> DVectorView<'_, f64> {
        self.values.rows(k * self.block_dim, self.block_dim)
    }

    pub fn norm(&self) -> f64 {
        self.values.norm()
    }
}
