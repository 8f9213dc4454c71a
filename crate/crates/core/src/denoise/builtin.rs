//! Fixed, non-learned image denoisers.

use super::{Identity, ImageDenoiser};
use crate::error::{LbsError, Result};
use crate::linops::{haar_dwt, haar_idwt};
use crate::numerics::DenseVector;

/// 3×3 median filter with circular boundary handling.
pub fn median3x3(image: &DenseVector) -> Result<DenseVector> {
    let (h, w) = image.dims2()?;
    let mut out = image.zeros_like();
    let mut win = [0.0f64; 9];
    for r in 0..h {
        for c in 0..w {
            let mut k = 0;
            for dr in [h - 1, 0, 1] {
                for dc in [w - 1, 0, 1] {
                    win[k] = image.at((r + dr) % h, (c + dc) % w);
                    k += 1;
                }
            }
            win.sort_unstable_by(f64::total_cmp);
            out.set(r, c, win[4]);
        }
    }
    Ok(out)
}

/// Soft-thresholds the Haar detail coefficients at `tau` and resynthesizes.
/// The coarsest approximation band is left untouched.
pub fn wavelet_shrink(image: &DenseVector, tau: f64, levels: usize) -> Result<DenseVector> {
    if !(tau >= 0.0) {
        return Err(LbsError::Domain(format!("threshold must be nonnegative, got {tau}")));
    }
    let (h, w) = image.dims2()?;
    let mut coeffs = haar_dwt(image, levels)?;
    let (ah, aw) = (h >> levels, w >> levels);
    for r in 0..h {
        for c in 0..w {
            if r < ah && c < aw {
                continue;
            }
            let v = coeffs.at(r, c);
            coeffs.set(r, c, v.signum() * (v.abs() - tau).max(0.0));
        }
    }
    haar_idwt(&coeffs, levels)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Median3x3;

impl ImageDenoiser for Median3x3 {
    fn name(&self) -> String {
        "median3x3".into()
    }
    fn denoise(&self, image: &DenseVector) -> Result<DenseVector> {
        median3x3(image)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WaveletShrink {
    pub tau: f64,
    pub levels: usize,
}

impl ImageDenoiser for WaveletShrink {
    fn name(&self) -> String {
        format!("wavelet_shrink({})", self.tau)
    }
    fn denoise(&self, image: &DenseVector) -> Result<DenseVector> {
        wavelet_shrink(image, self.tau, self.levels)
    }
}

/// Identity, 3×3 median and one-level Haar shrinkage at `tau`.
pub fn builtin_denoisers(tau: f64) -> Vec<Box<dyn ImageDenoiser>> {
    vec![
        Box::new(Identity),
        Box::new(Median3x3),
        Box::new(WaveletShrink { tau, levels: 1 }),
    ]
}
