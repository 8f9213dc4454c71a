use std::f64::consts::FRAC_1_SQRT_2;

use super::{check_shape, LinearMap};
use crate::error::{dim_err, Result};
use crate::numerics::DenseVector;

fn check_divisible(h: usize, w: usize, levels: usize) -> Result<()> {
    let block = 1usize.checked_shl(levels as u32).unwrap_or(0);
    if block == 0 || !h.is_multiple_of(block) || !w.is_multiple_of(block) || h == 0 || w == 0 {
        return dim_err(format!(
            "{h}x{w} image is not divisible by 2^{levels} for a {levels}-level Haar transform"
        ));
    }
    Ok(())
}

/// One orthonormal analysis step along a strided line of `2 * half` samples.
fn split_line(buf: &mut [f64], scratch: &mut [f64]) {
    let half = buf.len() / 2;
    for k in 0..half {
        let (a, b) = (buf[2 * k], buf[2 * k + 1]);
        scratch[k] = (a + b) * FRAC_1_SQRT_2;
        scratch[half + k] = (a - b) * FRAC_1_SQRT_2;
    }
    buf.copy_from_slice(&scratch[..buf.len()]);
}

fn merge_line(buf: &mut [f64], scratch: &mut [f64]) {
    let half = buf.len() / 2;
    for k in 0..half {
        let (s, d) = (buf[k], buf[half + k]);
        scratch[2 * k] = (s + d) * FRAC_1_SQRT_2;
        scratch[2 * k + 1] = (s - d) * FRAC_1_SQRT_2;
    }
    buf.copy_from_slice(&scratch[..buf.len()]);
}

/// Applies `op` to every row then every column of the top-left `rh × rw`
/// region (or columns then rows when `columns_first`).
fn sweep(
    data: &mut [f64],
    width: usize,
    rh: usize,
    rw: usize,
    columns_first: bool,
    op: fn(&mut [f64], &mut [f64]),
) {
    let mut line = vec![0.0; rh.max(rw)];
    let mut scratch = vec![0.0; rh.max(rw)];
    let rows = |data: &mut [f64], line: &mut [f64], scratch: &mut [f64]| {
        for i in 0..rh {
            let row = &mut data[i * width..i * width + rw];
            line[..rw].copy_from_slice(row);
            op(&mut line[..rw], scratch);
            row.copy_from_slice(&line[..rw]);
        }
    };
    let cols = |data: &mut [f64], line: &mut [f64], scratch: &mut [f64]| {
        for j in 0..rw {
            for i in 0..rh {
                line[i] = data[i * width + j];
            }
            op(&mut line[..rh], scratch);
            for i in 0..rh {
                data[i * width + j] = line[i];
            }
        }
    };
    if columns_first {
        cols(data, &mut line, &mut scratch);
        rows(data, &mut line, &mut scratch);
    } else {
        rows(data, &mut line, &mut scratch);
        cols(data, &mut line, &mut scratch);
    }
}

/// Multi-level orthonormal 2-D Haar analysis. Coefficients use the Mallat
/// layout: the coarsest approximation sits in the top-left corner.
pub fn haar_dwt(u: &DenseVector, levels: usize) -> Result<DenseVector> {
    let (h, w) = u.dims2()?;
    check_divisible(h, w, levels)?;
    let mut data = u.data().to_vec();
    for l in 0..levels {
        sweep(&mut data, w, h >> l, w >> l, false, split_line);
    }
    DenseVector::image(h, w, data)
}

/// Inverse of [`haar_dwt`] (equivalently its adjoint).
pub fn haar_idwt(coeffs: &DenseVector, levels: usize) -> Result<DenseVector> {
    let (h, w) = coeffs.dims2()?;
    check_divisible(h, w, levels)?;
    let mut data = coeffs.data().to_vec();
    for l in (0..levels).rev() {
        sweep(&mut data, w, h >> l, w >> l, true, merge_line);
    }
    DenseVector::image(h, w, data)
}

/// `W`: image → Haar coefficients.
#[derive(Debug, Clone)]
pub struct HaarAnalysis {
    shape: [usize; 2],
    levels: usize,
}

impl HaarAnalysis {
    pub fn new(height: usize, width: usize, levels: usize) -> Result<Self> {
        check_divisible(height, width, levels)?;
        Ok(Self {
            shape: [height, width],
            levels,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }
}

impl LinearMap for HaarAnalysis {
    fn in_shape(&self) -> &[usize] {
        &self.shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.shape
    }
    fn forward(&self, x: &DenseVector) -> Result<DenseVector> {
        check_shape(x, &self.shape, "haar analysis")?;
        haar_dwt(x, self.levels)
    }
    fn adjoint(&self, y: &DenseVector) -> Result<DenseVector> {
        check_shape(y, &self.shape, "haar analysis adjoint")?;
        haar_idwt(y, self.levels)
    }
}

/// `B = Wᵀ`: Haar coefficients → image (the synthesis dictionary).
#[derive(Debug, Clone)]
pub struct HaarSynthesis {
    shape: [usize; 2],
    levels: usize,
}

impl HaarSynthesis {
    pub fn new(height: usize, width: usize, levels: usize) -> Result<Self> {
        check_divisible(height, width, levels)?;
        Ok(Self {
            shape: [height, width],
            levels,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }
}

impl LinearMap for HaarSynthesis {
    fn in_shape(&self) -> &[usize] {
        &self.shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.shape
    }
    fn forward(&self, x: &DenseVector) -> Result<DenseVector> {
        check_shape(x, &self.shape, "haar synthesis")?;
        haar_idwt(x, self.levels)
    }
    fn adjoint(&self, y: &DenseVector) -> Result<DenseVector> {
        check_shape(y, &self.shape, "haar synthesis adjoint")?;
        haar_dwt(y, self.levels)
    }
}
