//! Noise-residual training of [`ResidualConvNet`] on a procedurally
//! generated corpus with plain minibatch SGD.

use super::net::{LayerGrads, ResidualConvNet};
use super::DenoiserMetadata;
use crate::error::{LbsError, Result};
use crate::numerics::{gaussian_noise, DenseVector, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub patch_size: usize,
    pub noise_sigma: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Patches drawn per epoch.
    pub patches_per_epoch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            patch_size: 35,
            noise_sigma: 0.1,
            learning_rate: 0.5,
            epochs: 30,
            batch_size: 8,
            patches_per_epoch: 128,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("patch_size", self.patch_size),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("patches_per_epoch", self.patches_per_epoch),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(LbsError::Domain(format!("{name} must be positive")));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(LbsError::Domain(format!(
                "noise sigma must be finite and nonnegative, got {}",
                self.noise_sigma
            )));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(LbsError::Domain(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.patches_per_epoch.div_ceil(self.batch_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Minibatch loss before each SGD step.
    pub loss_curve: Vec<f64>,
    pub epochs_run: usize,
}

impl TrainReport {
    pub fn initial_loss(&self) -> f64 {
        self.loss_curve.first().copied().unwrap_or(0.0)
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_curve.last().copied().unwrap_or(0.0)
    }
}

/// Trailing moving average; entry `k` averages `curve[k+1−window ..= k]`
/// (fewer at the start).
pub fn moving_average(curve: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(curve.len());
    let mut acc = 0.0;
    for (k, v) in curve.iter().enumerate() {
        acc += v;
        if k >= window {
            acc -= curve[k - window];
        }
        out.push(acc / (k + 1).min(window) as f64);
    }
    out
}

/// Piecewise-smooth test image on `[0, 1]`: a gentle linear ramp overlaid
/// with flat rectangles and discs.
pub fn piecewise_smooth_image(rng: &mut SeededRng, height: usize, width: usize) -> DenseVector {
    let base = rng.uniform_range(0.2, 0.6);
    let (gy, gx) = (rng.uniform_range(-0.2, 0.2), rng.uniform_range(-0.2, 0.2));
    let mut img = DenseVector::zeros(&[height, width]);
    for r in 0..height {
        for c in 0..width {
            let v = base + gy * r as f64 / height as f64 + gx * c as f64 / width as f64;
            img.set(r, c, v);
        }
    }
    let shapes = 3 + rng.below(4);
    for _ in 0..shapes {
        let level = rng.uniform();
        let cy = rng.uniform_range(0.0, height as f64);
        let cx = rng.uniform_range(0.0, width as f64);
        let ry = rng.uniform_range(0.1, 0.35) * height as f64;
        let rx = rng.uniform_range(0.1, 0.35) * width as f64;
        let disc = rng.uniform() < 0.5;
        for r in 0..height {
            for c in 0..width {
                let dy = (r as f64 - cy) / ry;
                let dx = (c as f64 - cx) / rx;
                let inside = if disc {
                    dy * dy + dx * dx <= 1.0
                } else {
                    dy.abs() <= 1.0 && dx.abs() <= 1.0
                };
                if inside {
                    img.set(r, c, level);
                }
            }
        }
    }
    img.map(|v| v.clamp(0.0, 1.0))
}

/// `count` seeded piecewise-smooth images.
pub fn synthetic_corpus(count: usize, height: usize, width: usize, seed: u64) -> Vec<DenseVector> {
    let mut rng = SeededRng::new(seed).substream("corpus");
    (0..count)
        .map(|_| piecewise_smooth_image(&mut rng, height, width))
        .collect()
}

/// `image + N(0, sigma²)`, returning the noisy image and the noise.
pub fn add_noise(
    image: &DenseVector,
    sigma: f64,
    rng: &mut SeededRng,
) -> Result<(DenseVector, DenseVector)> {
    let noise = gaussian_noise(rng, image.shape(), sigma)?;
    Ok((image.add(&noise)?, noise))
}

/// `size × size` crop at a random offset, wrapping around the image edges.
fn sample_patch(image: &DenseVector, size: usize, rng: &mut SeededRng) -> Result<DenseVector> {
    let (h, w) = image.dims2()?;
    let (r0, c0) = (rng.below(h), rng.below(w));
    let mut data = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            data.push(image.at((r0 + r) % h, (c0 + c) % w));
        }
    }
    DenseVector::image(size, size, data)
}

/// Minibatch SGD on the mean-squared noise-prediction error. Fails when the
/// loss becomes non-finite or exceeds ten times its initial value.
pub fn train(
    net: &mut ResidualConvNet,
    corpus: &[DenseVector],
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(LbsError::Training("training corpus is empty".into()));
    }
    let mut rng = SeededRng::new(config.seed).substream("train");
    let mut loss_curve = Vec::with_capacity(config.epochs * config.batches_per_epoch());
    for epoch in 0..config.epochs {
        let mut remaining = config.patches_per_epoch;
        while remaining > 0 {
            let size = remaining.min(config.batch_size);
            remaining -= size;
            let mut loss = 0.0;
            let mut samples: Vec<Vec<LayerGrads>> = Vec::with_capacity(size);
            for _ in 0..size {
                let img = &corpus[rng.below(corpus.len())];
                let clean = sample_patch(img, config.patch_size, &mut rng)?;
                let (noisy, noise) = add_noise(&clean, config.noise_sigma, &mut rng)?;
                let (l, g) = net.loss_and_grads(&noisy, &noise)?;
                loss += l;
                samples.push(g);
            }
            loss /= size as f64;
            let initial = loss_curve.first().copied().unwrap_or(loss);
            if !loss.is_finite() || (loss > 10.0 * initial && loss > 1e-12) {
                return Err(LbsError::Training(format!(
                    "training diverged in epoch {epoch} (loss {loss:e} vs initial {initial:e}); \
                     reduce the learning rate"
                )));
            }
            loss_curve.push(loss);
            net.sgd_step(&ResidualConvNet::mean_grads(&samples), config.learning_rate)?;
        }
    }
    net.set_metadata(DenoiserMetadata {
        trained_on: Some(format!("synthetic corpus of {} images", corpus.len())),
        noise_sigma: Some(config.noise_sigma),
    });
    Ok(TrainReport {
        loss_curve,
        epochs_run: config.epochs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub input_mse: f64,
    pub output_mse: f64,
}

impl ValidationReport {
    /// PSNR for unit peak.
    pub fn input_psnr(&self) -> f64 {
        -10.0 * self.input_mse.log10()
    }

    pub fn output_psnr(&self) -> f64 {
        -10.0 * self.output_mse.log10()
    }

    pub fn gain_db(&self) -> f64 {
        self.output_psnr() - self.input_psnr()
    }
}

/// Mean squared errors of noisy and denoised versions of `clean` images.
pub fn validation_report(
    net: &ResidualConvNet,
    clean: &[DenseVector],
    sigma: f64,
    seed: u64,
) -> Result<ValidationReport> {
    let mut rng = SeededRng::new(seed).substream("validation");
    let (mut input, mut output, mut count) = (0.0, 0.0, 0usize);
    for img in clean {
        let (noisy, _) = add_noise(img, sigma, &mut rng)?;
        let den = net.apply(&noisy)?;
        input += noisy.sub(img)?.norm2();
        output += den.sub(img)?.norm2();
        count += img.len();
    }
    let n = count.max(1) as f64;
    Ok(ValidationReport {
        input_mse: input / n,
        output_mse: output / n,
    })
}
