use super::{check_shape, LinearMap};
use crate::error::Result;
use crate::numerics::DenseVector;

/// `(D_h u)(i, j) = u(i, j+1) − u(i, j)`, periodic in `j`.
pub fn grad_h(u: &DenseVector) -> Result<DenseVector> {
    let (h, w) = u.dims2()?;
    let mut out = DenseVector::zeros(&[h, w]);
    for i in 0..h {
        for j in 0..w {
            out.set(i, j, u.at(i, (j + 1) % w) - u.at(i, j));
        }
    }
    Ok(out)
}

/// `(D_hᵀ y)(i, j) = y(i, j−1) − y(i, j)`.
pub fn grad_h_adjoint(y: &DenseVector) -> Result<DenseVector> {
    let (h, w) = y.dims2()?;
    let mut out = DenseVector::zeros(&[h, w]);
    for i in 0..h {
        for j in 0..w {
            out.set(i, j, y.at(i, (j + w - 1) % w) - y.at(i, j));
        }
    }
    Ok(out)
}

/// `(D_v u)(i, j) = u(i+1, j) − u(i, j)`, periodic in `i`.
pub fn grad_v(u: &DenseVector) -> Result<DenseVector> {
    let (h, w) = u.dims2()?;
    let mut out = DenseVector::zeros(&[h, w]);
    for i in 0..h {
        for j in 0..w {
            out.set(i, j, u.at((i + 1) % h, j) - u.at(i, j));
        }
    }
    Ok(out)
}

pub fn grad_v_adjoint(y: &DenseVector) -> Result<DenseVector> {
    let (h, w) = y.dims2()?;
    let mut out = DenseVector::zeros(&[h, w]);
    for i in 0..h {
        for j in 0..w {
            out.set(i, j, y.at((i + h - 1) % h, j) - y.at(i, j));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct GradH {
    shape: [usize; 2],
}

impl GradH {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            shape: [height, width],
        }
    }
}

impl LinearMap for GradH {
    fn in_shape(&self) -> &[usize] {
        &self.shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.shape
    }
    fn forward(&self, x: &DenseVector) -> Result<DenseVector> {
        check_shape(x, &self.shape, "horizontal gradient")?;
        grad_h(x)
    }
    fn adjoint(&self, y: &DenseVector) -> Result<DenseVector> {
        check_shape(y, &self.shape, "horizontal gradient adjoint")?;
        grad_h_adjoint(y)
    }
}

#[derive(Debug, Clone)]
pub struct GradV {
    shape: [usize; 2],
}

impl GradV {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            shape: [height, width],
        }
    }
}

impl LinearMap for GradV {
    fn in_shape(&self) -> &[usize] {
        &self.shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.shape
    }
    fn forward(&self, x: &DenseVector) -> Result<DenseVector> {
        check_shape(x, &self.shape, "vertical gradient")?;
        grad_v(x)
    }
    fn adjoint(&self, y: &DenseVector) -> Result<DenseVector> {
        check_shape(y, &self.shape, "vertical gradient adjoint")?;
        grad_v_adjoint(y)
    }
}
