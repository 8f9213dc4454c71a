//! The pluggable operator `T_d`: a uniform contract over block vectors,
//! image-level denoisers, fixed built-ins, adversarial operators for
//! safeguard testing and a small trainable residual convolutional network.

mod adversarial;
mod builtin;
mod net;
mod train;

pub use adversarial::{ConstantOp, NegationOp, NoiseOp, SignFlipOp};
pub use builtin::{builtin_denoisers, median3x3, wavelet_shrink, Median3x3, WaveletShrink};
pub use net::{ConvLayer, LayerGrads, ResidualConvNet};
pub use train::{
    add_noise, moving_average, piecewise_smooth_image, synthetic_corpus, train, validation_report, TrainConfig,
    TrainReport, ValidationReport,
};

use crate::error::{LbsError, Result};
use crate::numerics::{BlockVector, DenseVector};

/// Provenance attached to a denoiser.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DenoiserMetadata {
    pub trained_on: Option<String>,
    pub noise_sigma: Option<f64>,
}

/// A deterministic, structure-preserving map on block vectors.
pub trait DenoiserOp: Send + Sync {
    fn name(&self) -> String;

    fn apply(&self, x: &BlockVector) -> Result<BlockVector>;

    fn metadata(&self) -> DenoiserMetadata {
        DenoiserMetadata::default()
    }
}

/// A deterministic shape-preserving map on a single 2-D image.
pub trait ImageDenoiser: Send + Sync {
    fn name(&self) -> String;

    fn denoise(&self, image: &DenseVector) -> Result<DenseVector>;

    fn metadata(&self) -> DenoiserMetadata {
        DenoiserMetadata::default()
    }
}

impl<T: ImageDenoiser + ?Sized> ImageDenoiser for Box<T> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn denoise(&self, image: &DenseVector) -> Result<DenseVector> {
        (**self).denoise(image)
    }
    fn metadata(&self) -> DenoiserMetadata {
        (**self).metadata()
    }
}

impl<T: DenoiserOp + ?Sized> DenoiserOp for Box<T> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn apply(&self, x: &BlockVector) -> Result<BlockVector> {
        (**self).apply(x)
    }
    fn metadata(&self) -> DenoiserMetadata {
        (**self).metadata()
    }
}

/// The identity map.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl DenoiserOp for Identity {
    fn name(&self) -> String {
        "identity".into()
    }
    fn apply(&self, x: &BlockVector) -> Result<BlockVector> {
        Ok(x.clone())
    }
}

impl ImageDenoiser for Identity {
    fn name(&self) -> String {
        "identity".into()
    }
    fn denoise(&self, image: &DenseVector) -> Result<DenseVector> {
        Ok(image.clone())
    }
}

/// Applies an image denoiser to selected blocks and passes the rest through.
pub struct Blockwise<D> {
    inner: D,
    blocks: Option<Vec<usize>>,
}

impl<D: ImageDenoiser> Blockwise<D> {
    /// Denoise every block.
    pub fn all(inner: D) -> Self {
        Self {
            inner,
            blocks: None,
        }
    }

    pub fn only(inner: D, blocks: Vec<usize>) -> Self {
        Self {
            inner,
            blocks: Some(blocks),
        }
    }

    pub fn inner(&self) -> &D {
        &self.inner
    }
}

impl<D: ImageDenoiser> DenoiserOp for Blockwise<D> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn apply(&self, x: &BlockVector) -> Result<BlockVector> {
        x.blocks()
            .iter()
            .enumerate()
            .map(|(n, b)| {
                let selected = self.blocks.as_ref().is_none_or(|s| s.contains(&n));
                if selected {
                    checked_output(&self.inner.name(), b, self.inner.denoise(b)?)
                } else {
                    Ok(b.clone())
                }
            })
            .collect::<Result<Vec<_>>>()
            .and_then(|blocks| relabel(BlockVector::new(blocks)?, x))
    }

    fn metadata(&self) -> DenoiserMetadata {
        self.inner.metadata()
    }
}

pub(crate) fn relabel(mut out: BlockVector, like: &BlockVector) -> Result<BlockVector> {
    if let Some(labels) = like.labels() {
        out = out.with_labels(labels.to_vec())?;
    }
    Ok(out)
}

/// Enforces the shape-preserving and finiteness contract on an output.
pub(crate) fn checked_output(
    name: &str,
    input: &DenseVector,
    output: DenseVector,
) -> Result<DenseVector> {
    input.check_same_shape(&output)?;
    if !output.all_finite() {
        return Err(LbsError::Numerical(format!(
            "denoiser {name} produced non-finite values"
        )));
    }
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    #[test]
    fn blockwise_selects_blocks() {
        let mut rng = SeededRng::new(1);
        let x = BlockVector::new(vec![
            rng.uniform_vector(&[6, 6], 0.0, 1.0),
            rng.uniform_vector(&[6, 6], 0.0, 1.0),
        ])
        .unwrap()
        .with_labels(vec!["a", "b"])
        .unwrap();
        let op = Blockwise::only(Median3x3, vec![0]);
        let y = op.apply(&x).unwrap();
        assert_eq!(y.block(1), x.block(1));
        assert_ne!(y.block(0), x.block(0));
        assert_eq!(y.label(1), "b");
        assert_eq!(Identity.apply(&x).unwrap(), x);
    }
}
