use num_complex::Complex64;

use super::fft::{Fft2Plan, Spectrum};
use super::{check_shape, LinearMap};
use crate::error::{dim_err, LbsError, Result};
use crate::numerics::DenseVector;

/// 2-D blur kernel with its anchor (the tap aligned with the output pixel).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    taps: DenseVector,
    anchor: (usize, usize),
    /// Set when the kernel was rescaled to unit sum on load.
    pub renormalized: bool,
}

impl ConvKernel {
    /// Kernel anchored at `(kh / 2, kw / 2)`; taps are used as given.
    pub fn new(taps: DenseVector) -> Result<Self> {
        let (kh, kw) = taps.dims2()?;
        if kh == 0 || kw == 0 {
            return dim_err("kernel must have at least one tap");
        }
        if !taps.all_finite() {
            return Err(LbsError::Domain("kernel taps must be finite".into()));
        }
        Ok(Self {
            taps,
            anchor: (kh / 2, kw / 2),
            renormalized: false,
        })
    }

    pub fn with_anchor(mut self, row: usize, col: usize) -> Result<Self> {
        let (kh, kw) = self.taps.dims2()?;
        if row >= kh || col >= kw {
            return dim_err(format!("anchor ({row}, {col}) outside {kh}x{kw} kernel"));
        }
        self.anchor = (row, col);
        Ok(self)
    }

    /// Single unit tap: the identity blur.
    pub fn delta() -> Self {
        Self::new(DenseVector::filled(&[1, 1], 1.0)).expect("1x1 kernel")
    }

    /// `size × size` uniform kernel with unit sum.
    pub fn box_blur(size: usize) -> Result<Self> {
        if size == 0 {
            return dim_err("box kernel size must be positive");
        }
        let v = 1.0 / (size * size) as f64;
        Self::new(DenseVector::filled(&[size, size], v))
    }

    pub fn taps(&self) -> &DenseVector {
        &self.taps
    }

    pub fn anchor(&self) -> (usize, usize) {
        self.anchor
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.taps.shape()[0], self.taps.shape()[1])
    }

    pub fn sum(&self) -> f64 {
        self.taps.data().iter().sum()
    }

    /// Rescale to unit sum, flagging the kernel if that changed anything.
    pub fn normalized(mut self) -> Result<Self> {
        let s = self.sum();
        if s.abs() < 1e-300 {
            return Err(LbsError::Domain("kernel sums to zero; cannot normalize".into()));
        }
        if (s - 1.0).abs() > 1e-9 {
            self.taps = self.taps.scaled(1.0 / s);
            self.renormalized = true;
        }
        Ok(self)
    }

    /// Parses the plain-text kernel format (`"H W"` then `H` rows of `W`
    /// floats) and normalizes to unit sum.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| LbsError::Format("empty kernel file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| LbsError::Format(format!("bad kernel header {header:?}: {e}")))?;
        let [kh, kw] = dims[..] else {
            return Err(LbsError::Format(format!(
                "kernel header must be \"H W\", got {header:?}"
            )));
        };
        let mut taps = Vec::with_capacity(kh * kw);
        for r in 0..kh {
            let line = lines
                .next()
                .ok_or_else(|| LbsError::Format(format!("kernel has {r} rows, expected {kh}")))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| LbsError::Format(format!("kernel row {r}: {e}")))?;
            if row.len() != kw {
                return Err(LbsError::Format(format!(
                    "kernel row {r} has {} values, expected {kw}",
                    row.len()
                )));
            }
            taps.extend(row);
        }
        if lines.next().is_some() {
            return Err(LbsError::Format(format!("kernel has more than {kh} rows")));
        }
        Self::new(DenseVector::image(kh, kw, taps)?)?.normalized()
    }

    pub fn to_text(&self) -> String {
        let (kh, kw) = self.dims();
        let mut out = format!("{kh} {kw}\n");
        for r in 0..kh {
            let row: Vec<String> = (0..kw).map(|c| format!("{:e}", self.taps.at(r, c))).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Kernel laid out on an `h × w` periodic grid with the anchor at the origin.
    fn embed(&self, h: usize, w: usize) -> DenseVector {
        let (kh, kw) = self.dims();
        let (ar, ac) = self.anchor;
        let mut pad = DenseVector::zeros(&[h, w]);
        for a in 0..kh {
            for b in 0..kw {
                let r = (a + h - ar % h) % h;
                let c = (b + w - ac % w) % w;
                let cur = pad.at(r, c);
                pad.set(r, c, cur + self.taps.at(a, b));
            }
        }
        pad
    }
}

/// Circular convolution `u ↦ k ⊗ u` on a fixed image size, evaluated in the
/// Fourier domain.
#[derive(Debug, Clone)]
pub struct Convolution {
    kernel: ConvKernel,
    shape: [usize; 2],
    plan: Fft2Plan,
    transfer: Spectrum,
}

impl Convolution {
    pub fn new(kernel: ConvKernel, height: usize, width: usize) -> Result<Self> {
        let (kh, kw) = kernel.dims();
        if kh > height || kw > width {
            return dim_err(format!(
                "{kh}x{kw} kernel larger than {height}x{width} image"
            ));
        }
        let plan = Fft2Plan::new(height, width);
        let transfer = plan.forward_real(&kernel.embed(height, width))?;
        Ok(Self {
            kernel,
            shape: [height, width],
            plan,
            transfer,
        })
    }

    pub fn kernel(&self) -> &ConvKernel {
        &self.kernel
    }

    /// Frequency response of the kernel.
    pub fn transfer(&self) -> &Spectrum {
        &self.transfer
    }

    fn filter(&self, x: &DenseVector, conjugate: bool) -> Result<DenseVector> {
        check_shape(x, &self.shape, "convolution")?;
        let mut s = self.plan.forward_real(x)?;
        for (v, k) in s.data.iter_mut().zip(&self.transfer.data) {
            let k: Complex64 = if conjugate { k.conj() } else { *k };
            *v *= k;
        }
        Ok(self.plan.inverse_real(&s))
    }
}

impl LinearMap for Convolution {
    fn in_shape(&self) -> &[usize] {
        &self.shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.shape
    }
    fn forward(&self, x: &DenseVector) -> Result<DenseVector> {
        self.filter(x, false)
    }
    fn adjoint(&self, y: &DenseVector) -> Result<DenseVector> {
        self.filter(y, true)
    }
}

/// `k ⊗ u` with periodic boundaries.
pub fn convolve(kernel: &ConvKernel, u: &DenseVector) -> Result<DenseVector> {
    let (h, w) = u.dims2()?;
    Convolution::new(kernel.clone(), h, w)?.forward(u)
}

/// Adjoint of [`convolve`]: circular correlation with the same taps.
pub fn convolve_adjoint(kernel: &ConvKernel, y: &DenseVector) -> Result<DenseVector> {
    let (h, w) = y.dims2()?;
    Convolution::new(kernel.clone(), h, w)?.adjoint(y)
}
