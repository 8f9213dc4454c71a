//! Linear maps with forward and adjoint actions: masks, circular convolution,
//! finite-difference gradients and the orthonormal Haar transform.

mod conv;
mod fft;
mod gradient;
mod haar;

pub use conv::{convolve, convolve_adjoint, ConvKernel, Convolution};
pub use fft::{fft2, ifft2, Fft2Plan, Spectrum};
pub use gradient::{grad_h, grad_h_adjoint, grad_v, grad_v_adjoint, GradH, GradV};
pub use haar::{haar_dwt, haar_idwt, HaarAnalysis, HaarSynthesis};

use crate::error::{dim_err, Result};
use crate::numerics::{DenseVector, SeededRng};

pub trait LinearMap: Send + Sync {
    fn in_shape(&self) -> &[usize];
    fn out_shape(&self) -> &[usize];
    fn forward(&self, x: &DenseVector) -> Result<DenseVector>;
    fn adjoint(&self, y: &DenseVector) -> Result<DenseVector>;

    /// `Aᵀ A x`.
    fn normal(&self, x: &DenseVector) -> Result<DenseVector> {
        self.adjoint(&self.forward(x)?)
    }
}

impl<T: LinearMap + ?Sized> LinearMap for Box<T> {
    fn in_shape(&self) -> &[usize] {
        (**self).in_shape()
    }
    fn out_shape(&self) -> &[usize] {
        (**self).out_shape()
    }
    fn forward(&self, x: &DenseVector) -> Result<DenseVector> {
        (**self).forward(x)
    }
    fn adjoint(&self, y: &DenseVector) -> Result<DenseVector> {
        (**self).adjoint(y)
    }
}

pub(crate) fn check_shape(x: &DenseVector, shape: &[usize], what: &str) -> Result<()> {
    if x.shape() != shape {
        return dim_err(format!(
            "{what}: expected shape {shape:?}, got {:?}",
            x.shape()
        ));
    }
    Ok(())
}

/// Binary sampling mask `M`; `M x` zeroes the missing entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    keep: Vec<bool>,
    shape: Vec<usize>,
}

impl Mask {
    pub fn new(keep: Vec<bool>, shape: &[usize]) -> Result<Self> {
        if keep.len() != shape.iter().product::<usize>() {
            return dim_err(format!(
                "mask with {} entries does not fit shape {shape:?}",
                keep.len()
            ));
        }
        Ok(Self {
            keep,
            shape: shape.to_vec(),
        })
    }

    pub fn all(shape: &[usize]) -> Self {
        Self {
            keep: vec![true; shape.iter().product()],
            shape: shape.to_vec(),
        }
    }

    /// Nonzero entries are kept.
    pub fn from_dense(pattern: &DenseVector) -> Self {
        Self {
            keep: pattern.data().iter().map(|&v| v != 0.0).collect(),
            shape: pattern.shape().to_vec(),
        }
    }

    /// Drops exactly `round(missing_ratio * n)` entries chosen uniformly.
    pub fn random(rng: &mut SeededRng, shape: &[usize], missing_ratio: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&missing_ratio) {
            return Err(crate::LbsError::Domain(format!(
                "missing ratio must lie in [0, 1], got {missing_ratio}"
            )));
        }
        let n: usize = shape.iter().product();
        let missing = (missing_ratio * n as f64).round() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        for i in 0..missing {
            let j = i + rng.below(n - i);
            order.swap(i, j);
        }
        let mut keep = vec![true; n];
        for &i in &order[..missing] {
            keep[i] = false;
        }
        Self::new(keep, shape)
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn missing_fraction(&self) -> f64 {
        let missing = self.keep.iter().filter(|k| !**k).count();
        missing as f64 / self.keep.len() as f64
    }

    /// 0/1 image of the mask.
    pub fn to_dense(&self) -> DenseVector {
        let data = self.keep.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect();
        DenseVector::new(data, &self.shape).expect("mask shape is consistent")
    }

    pub fn apply(&self, x: &DenseVector) -> Result<DenseVector> {
        check_shape(x, &self.shape, "mask")?;
        let data = x
            .data()
            .iter()
            .zip(&self.keep)
            .map(|(&v, &k)| if k { v } else { 0.0 })
            .collect();
        DenseVector::new(data, &self.shape)
    }
}

impl LinearMap for Mask {
    fn in_shape(&self) -> &[usize] {
        &self.shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.shape
    }
    fn forward(&self, x: &DenseVector) -> Result<DenseVector> {
        self.apply(x)
    }
    fn adjoint(&self, y: &DenseVector) -> Result<DenseVector> {
        self.apply(y)
    }
}

/// `outer ∘ inner`.
#[derive(Debug, Clone)]
pub struct Composed<A, B> {
    pub outer: A,
    pub inner: B,
}

impl<A: LinearMap, B: LinearMap> Composed<A, B> {
    pub fn new(outer: A, inner: B) -> Result<Self> {
        if outer.in_shape() != inner.out_shape() {
            return dim_err(format!(
                "cannot compose: inner output {:?} vs outer input {:?}",
                inner.out_shape(),
                outer.in_shape()
            ));
        }
        Ok(Self { outer, inner })
    }
}

impl<A: LinearMap, B: LinearMap> LinearMap for Composed<A, B> {
    fn in_shape(&self) -> &[usize] {
        self.inner.in_shape()
    }
    fn out_shape(&self) -> &[usize] {
        self.outer.out_shape()
    }
    fn forward(&self, x: &DenseVector) -> Result<DenseVector> {
        self.outer.forward(&self.inner.forward(x)?)
    }
    fn adjoint(&self, y: &DenseVector) -> Result<DenseVector> {
        self.inner.adjoint(&self.outer.adjoint(y)?)
    }
}

/// `scale · I` on a fixed shape.
#[derive(Debug, Clone)]
pub struct ScaledIdentity {
    pub scale: f64,
    shape: Vec<usize>,
}

impl ScaledIdentity {
    pub fn new(scale: f64, shape: &[usize]) -> Self {
        Self {
            scale,
            shape: shape.to_vec(),
        }
    }
}

impl LinearMap for ScaledIdentity {
    fn in_shape(&self) -> &[usize] {
        &self.shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.shape
    }
    fn forward(&self, x: &DenseVector) -> Result<DenseVector> {
        check_shape(x, &self.shape, "scaled identity")?;
        Ok(x.scaled(self.scale))
    }
    fn adjoint(&self, y: &DenseVector) -> Result<DenseVector> {
        self.forward(y)
    }
}

/// Relative mismatch `|⟨Ax, y⟩ − ⟨x, Aᵀy⟩| / (‖Ax‖‖y‖)` on one random pair.
pub fn adjoint_mismatch(map: &dyn LinearMap, rng: &mut SeededRng) -> Result<f64> {
    let x = rng.uniform_vector(map.in_shape(), -1.0, 1.0);
    let y = rng.uniform_vector(map.out_shape(), -1.0, 1.0);
    let ax = map.forward(&x)?;
    let aty = map.adjoint(&y)?;
    let lhs = ax.inner(&y)?;
    let rhs = x.inner(&aty)?;
    let scale = (ax.norm() * y.norm()).max(x.norm() * aty.norm()).max(1e-300);
    Ok((lhs - rhs).abs() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_idempotent_and_self_adjoint() {
        let mut rng = SeededRng::new(3);
        let mask = Mask::random(&mut rng, &[8, 8], 0.4).unwrap();
        assert!((mask.missing_fraction() - 0.40625).abs() < 1e-12); // round(25.6) = 26 of 64
        let x = rng.uniform_vector(&[8, 8], -1.0, 1.0);
        let once = mask.forward(&x).unwrap();
        assert_eq!(mask.forward(&once).unwrap(), once);
        for _ in 0..20 {
            assert!(adjoint_mismatch(&mask, &mut rng).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn mask_ratio_bounds() {
        let mut rng = SeededRng::new(3);
        assert!(Mask::random(&mut rng, &[4], 1.5).is_err());
        assert_eq!(Mask::random(&mut rng, &[4, 4], 0.0).unwrap(), Mask::all(&[4, 4]));
    }

    #[test]
    fn composition_shape_checked() {
        let a = ScaledIdentity::new(2.0, &[3]);
        let b = ScaledIdentity::new(2.0, &[4]);
        assert!(Composed::new(a, b).is_err());
    }
}
