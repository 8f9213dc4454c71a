use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::Result;
use crate::numerics::DenseVector;

/// Complex `height × width` spectrum, row-major. The forward transform is
/// unnormalized; the inverse divides by `height * width`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub height: usize,
    pub width: usize,
    pub data: Vec<Complex64>,
}

/// Reusable row/column plans for one image size.
#[derive(Clone)]
pub struct Fft2Plan {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2Plan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2Plan")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl Fft2Plan {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn forward_real(&self, x: &DenseVector) -> Result<Spectrum> {
        super::check_shape(x, &[self.height, self.width], "fft2")?;
        let mut data: Vec<Complex64> = x.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        Ok(Spectrum {
            height: self.height,
            width: self.width,
            data,
        })
    }

    /// Real part of the normalized inverse transform.
    pub fn inverse_real(&self, spectrum: &Spectrum) -> DenseVector {
        let mut data = spectrum.data.clone();
        self.transform(&mut data, true);
        let scale = 1.0 / (self.height * self.width) as f64;
        let real = data.iter().map(|c| c.re * scale).collect();
        DenseVector::image(self.height, self.width, real).expect("plan shape")
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let (h, w) = (self.height, self.width);
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        row.process(data);
        let mut column = vec![Complex64::new(0.0, 0.0); h];
        for j in 0..w {
            for i in 0..h {
                column[i] = data[i * w + j];
            }
            col.process(&mut column);
            for i in 0..h {
                data[i * w + j] = column[i];
            }
        }
    }
}

pub fn fft2(x: &DenseVector) -> Result<Spectrum> {
    let (h, w) = x.dims2()?;
    Fft2Plan::new(h, w).forward_real(x)
}

pub fn ifft2(spectrum: &Spectrum) -> DenseVector {
    Fft2Plan::new(spectrum.height, spectrum.width).inverse_real(spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    #[test]
    fn delta_has_flat_spectrum() {
        let mut x = DenseVector::zeros(&[8, 4]);
        x.set(0, 0, 1.0);
        let s = fft2(&x).unwrap();
        for c in &s.data {
            assert!((c.re - 1.0).abs() < 1e-14 && c.im.abs() < 1e-14);
        }
    }

    #[test]
    fn constant_image_concentrates_in_dc() {
        let x = DenseVector::filled(&[6, 10], 0.3);
        let s = fft2(&x).unwrap();
        assert!((s.data[0].re - 0.3 * 60.0).abs() < 1e-12);
        for c in &s.data[1..] {
            assert!(c.norm() < 1e-12);
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        let mut rng = SeededRng::new(11);
        let x = rng.uniform_vector(&[32, 32], -1.0, 1.0);
        let s = fft2(&x).unwrap();
        let back = ifft2(&s);
        let err = back.sub(&x).unwrap().data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-10, "round trip error {err}");

        let energy: f64 = s.data.iter().map(|c| c.norm_sqr()).sum::<f64>() / 1024.0;
        assert!((energy - x.norm2()).abs() < 1e-8);
    }

    #[test]
    fn non_power_of_two_sizes() {
        let mut rng = SeededRng::new(12);
        let x = rng.uniform_vector(&[7, 12], -1.0, 1.0);
        let back = ifft2(&fft2(&x).unwrap());
        assert!(back.sub(&x).unwrap().norm() < 1e-12);
    }
}
