//! Strongly convex reference functions `h` and the Bregman distance
//! `Δ_h(x, y) = h(x) − h(y) − ⟨∇h(y), x − y⟩`.

use crate::error::{LbsError, Result};
use crate::numerics::{BlockVector, DenseVector};

pub trait BregmanGeometry: Send + Sync {
    fn value(&self, x: &BlockVector) -> f64;

    /// `∇h_n` restricted to block `n`.
    fn grad_block(&self, n: usize, x_n: &DenseVector) -> DenseVector;

    /// Strong-convexity modulus `μ`.
    fn modulus(&self) -> f64;

    fn grad(&self, x: &BlockVector) -> BlockVector {
        x.map_blocks(|n, b| self.grad_block(n, b))
    }

    fn bregman(&self, x: &BlockVector, y: &BlockVector) -> Result<f64> {
        x.check_structure(y)?;
        let diff = x.sub(y)?;
        Ok(self.value(x) - self.value(y) - self.grad(y).inner(&diff)?)
    }

    /// Gradient of `Δ_h(·, y)` at `x`: `∇h(x) − ∇h(y)`.
    fn bregman_grad_x(&self, x: &BlockVector, y: &BlockVector) -> Result<BlockVector> {
        x.check_structure(y)?;
        self.grad(x).sub(&self.grad(y))
    }
}

/// `h(x) = ½ Σ_n μ_n ‖x_n‖²` (Mahalanobis with `A = diag(μ_n I)`), so
/// `∇h(x) = (μ_n x_n)_n` and the modulus is `min_n μ_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalMahalanobis {
    weights: Vec<f64>,
}

impl DiagonalMahalanobis {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(LbsError::Domain("geometry needs at least one weight".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(LbsError::Domain(format!(
                "geometry weights must be positive and finite, got {w}"
            )));
        }
        Ok(Self { weights })
    }

    /// `A = μ I` on `blocks` blocks.
    pub fn uniform(mu: f64, blocks: usize) -> Result<Self> {
        Self::new(vec![mu; blocks])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn weight(&self, n: usize) -> f64 {
        // A single weight applies to every block.
        if self.weights.len() == 1 {
            self.weights[0]
        } else {
            self.weights[n]
        }
    }

    pub fn check_blocks(&self, blocks: usize) -> Result<()> {
        if self.weights.len() != 1 && self.weights.len() != blocks {
            return Err(LbsError::Dimension(format!(
                "{} geometry weights for {blocks} blocks",
                self.weights.len()
            )));
        }
        Ok(())
    }
}

impl BregmanGeometry for DiagonalMahalanobis {
    fn value(&self, x: &BlockVector) -> f64 {
        x.blocks()
            .iter()
            .enumerate()
            .map(|(n, b)| 0.5 * self.weight(n) * b.norm2())
            .sum()
    }

    fn grad_block(&self, n: usize, x_n: &DenseVector) -> DenseVector {
        x_n.scaled(self.weight(n))
    }

    fn modulus(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    // Closed form; avoids the cancellation in h(x) − h(y) − ⟨∇h(y), x − y⟩.
    fn bregman(&self, x: &BlockVector, y: &BlockVector) -> Result<f64> {
        x.check_structure(y)?;
        let mut acc = 0.0;
        for (n, (a, b)) in x.blocks().iter().zip(y.blocks()).enumerate() {
            acc += 0.5 * self.weight(n) * a.sub(b)?.norm2();
        }
        Ok(acc)
    }
}

/// `Δ_h(x, y)`.
pub fn bregman(geom: &dyn BregmanGeometry, x: &BlockVector, y: &BlockVector) -> Result<f64> {
    geom.bregman(x, y)
}

pub fn bregman_grad_x(
    geom: &dyn BregmanGeometry,
    x: &BlockVector,
    y: &BlockVector,
) -> Result<BlockVector> {
    geom.bregman_grad_x(x, y)
}
