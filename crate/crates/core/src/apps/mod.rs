//! The two imaging problems in solver form, quality metrics and image I/O.

mod completion;
mod deblur;
mod image_io;
mod metrics;

pub use completion::{build_completion, CoefficientDenoiser, CompletionFidelity, CompletionParams, CompletionProblem};
pub use deblur::{build_deblur, DeblurParams, DeblurProblem, DeblurSmooth, BLOCK_LABELS};
pub use image_io::{decode_pnm, encode_pnm, read_image, read_mask, write_image, Image};
pub use metrics::{psnr, quality, ssim, QualityReport, PSNR_CAP};

pub use crate::denoise::piecewise_smooth_image;

use crate::numerics::{DenseVector, SeededRng};

/// Seeded piecewise-smooth test image.
pub fn synthetic_image(height: usize, width: usize, seed: u64) -> DenseVector {
    let mut rng = SeededRng::new(seed).substream("synthetic-image");
    piecewise_smooth_image(&mut rng, height, width)
}
