//! Image quality scores.

use crate::error::{LbsError, Result};
use crate::numerics::DenseVector;

/// Value reported for identical images.
pub const PSNR_CAP: f64 = 99.0;
const SSIM_WINDOW: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    pub psnr: f64,
    pub ssim: f64,
}

fn check_pair(x: &DenseVector, reference: &DenseVector) -> Result<()> {
    x.check_same_shape(reference)?;
    if !reference.all_finite() {
        return Err(LbsError::Domain("reference image has non-finite values".into()));
    }
    Ok(())
}

/// `10 log10(peak² / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr(x: &DenseVector, reference: &DenseVector, peak: f64) -> Result<f64> {
    check_pair(x, reference)?;
    let mse = x.sub(reference)?.norm2() / x.len().max(1) as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP))
}

/// Mean SSIM over all 8×8 windows (stride 1) with uniform weights and
/// constants `(0.01·peak)²`, `(0.03·peak)²`. Images smaller than the window
/// use a single window covering everything.
pub fn ssim(x: &DenseVector, reference: &DenseVector, peak: f64) -> Result<f64> {
    check_pair(x, reference)?;
    let (h, w) = x.dims2()?;
    if x == reference {
        return Ok(1.0);
    }
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let (wh, ww) = (SSIM_WINDOW.min(h), SSIM_WINDOW.min(w));
    let n = (wh * ww) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=h - wh {
        for c0 in 0..=w - ww {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in r0..r0 + wh {
                for c in c0..c0 + ww {
                    let (a, b) = (x.at(r, c), reference.at(r, c));
                    sx += a;
                    sy += b;
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                }
            }
            let (mx, my) = (sx / n, sy / n);
            let vx = (sxx / n - mx * mx).max(0.0);
            let vy = (syy / n - my * my).max(0.0);
            let cov = sxy / n - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

pub fn quality(x: &DenseVector, reference: &DenseVector) -> Result<QualityReport> {
    Ok(QualityReport {
        psnr: psnr(x, reference, 1.0)?,
        ssim: ssim(x, reference, 1.0)?,
    })
}
