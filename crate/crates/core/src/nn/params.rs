use sha2::{Digest, Sha256};

use super::tensor::{Scalar, Tensor};
use crate::error::{invalid, Result};

/// Ordered list of parameter tensors, in layer declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<F> {
    tensors: Vec<Tensor<F>>,
}

impl<F: Scalar> ParamSet<F> {
    pub fn new(tensors: Vec<Tensor<F>>) -> Self {
        Self { tensors }
    }

    pub fn tensors(&self) -> &[Tensor<F>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<F>] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn num_elements(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect(),
        }
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.tensors.iter().map(|t| t.shape().to_vec()).collect()
    }

    pub fn same_layout(&self, other: &ParamSet<F>) -> bool {
        self.len() == other.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape() == b.shape())
    }

    fn locate(&self, mut k: usize) -> Option<(usize, usize)> {
        for (ti, t) in self.tensors.iter().enumerate() {
            if k < t.len() {
                return Some((ti, k));
            }
            k -= t.len();
        }
        None
    }

    /// Element `k` of the flattened parameter vector.
    pub fn get_flat(&self, k: usize) -> Option<F> {
        self.locate(k).map(|(t, i)| self.tensors[t].data()[i])
    }

    pub fn set_flat(&mut self, k: usize, v: F) -> Result<()> {
        match self.locate(k) {
            Some((t, i)) => {
                self.tensors[t].data_mut()[i] = v;
                Ok(())
            }
            None => invalid(format!("flat parameter index {k} out of range")),
        }
    }

    pub fn cast<G: Scalar>(&self) -> ParamSet<G> {
        ParamSet {
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn any_nonzero(&self) -> bool {
        self.tensors
            .iter()
            .any(|t| t.data().iter().any(|&v| v != F::zero()))
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: F, other: &ParamSet<F>) -> Result<()> {
        if !self.same_layout(other) {
            return invalid("parameter layouts differ");
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    /// SHA-256 over the f32 little-endian image of every tensor. Identifies
    /// the exact weights a healthy reference was computed with.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tensors {
            for d in t.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.update((v.f64() as f32).to_le_bytes());
            }
        }
        h.finalize()
            .iter()
            .take(16)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
