//! A small residual convolutional denoiser: stacked 3×3 convolutions with
//! circular padding and rectifiers, predicting the noise that is then
//! subtracted from the input. Forward and backward passes are hand-written.

use std::path::Path;

use super::{DenoiserMetadata, ImageDenoiser};
use crate::error::{dim_err, LbsError, Result};
use crate::numerics::{DenseVector, SeededRng};

const KSIZE: usize = 3;
const MAGIC: &[u8; 8] = b"LBSRCNET";
const FORMAT_VERSION: u32 = 1;

/// One `out × in × 3 × 3` cross-correlation bank with biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    in_channels: usize,
    out_channels: usize,
    /// Indexed `[o][i][a][b]`, tap `(a, b)` reading offset `(a − 1, b − 1)`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Gradients with the same layout as a [`ConvLayer`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

type Maps = Vec<Vec<f64>>;

/// Column (or row) index tables for the three offsets with wrap-around.
struct Wrap {
    rows: [Vec<usize>; KSIZE],
    cols: [Vec<usize>; KSIZE],
}

impl Wrap {
    fn new(h: usize, w: usize) -> Self {
        let table = |n: usize, a: usize| (0..n).map(|i| (i + n + a - 1) % n).collect();
        Self {
            rows: [table(h, 0), table(h, 1), table(h, 2)],
            cols: [table(w, 0), table(w, 1), table(w, 2)],
        }
    }
}

impl ConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weights: vec![0.0; out_channels * in_channels * KSIZE * KSIZE],
            bias: vec![0.0; out_channels],
        }
    }

    /// Uniform on `[−1/√fan_in, 1/√fan_in]`, zero biases.
    pub fn random(in_channels: usize, out_channels: usize, rng: &mut SeededRng) -> Self {
        let mut layer = Self::zeros(in_channels, out_channels);
        let s = 1.0 / ((in_channels * KSIZE * KSIZE) as f64).sqrt();
        for w in &mut layer.weights {
            *w = rng.uniform_range(-s, s);
        }
        layer
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn widx(&self, o: usize, i: usize, a: usize, b: usize) -> usize {
        ((o * self.in_channels + i) * KSIZE + a) * KSIZE + b
    }

    fn forward(&self, input: &Maps, h: usize, w: usize, wrap: &Wrap) -> Maps {
        let mut out = vec![vec![0.0; h * w]; self.out_channels];
        for (o, dst) in out.iter_mut().enumerate() {
            dst.fill(self.bias[o]);
            for (i, src) in input.iter().enumerate() {
                for a in 0..KSIZE {
                    for b in 0..KSIZE {
                        let k = self.weights[self.widx(o, i, a, b)];
                        if k == 0.0 {
                            continue;
                        }
                        for r in 0..h {
                            let s_row = &src[wrap.rows[a][r] * w..][..w];
                            let d_row = &mut dst[r * w..][..w];
                            for (c, d) in d_row.iter_mut().enumerate() {
                                *d += k * s_row[wrap.cols[b][c]];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grads` and returns the input
    /// gradient (skipped when `need_input` is false).
    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        input: &Maps,
        d_out: &Maps,
        h: usize,
        w: usize,
        wrap: &Wrap,
        grads: &mut LayerGrads,
        need_input: bool,
    ) -> Maps {
        let mut d_in = if need_input {
            vec![vec![0.0; h * w]; self.in_channels]
        } else {
            Vec::new()
        };
        for (o, g) in d_out.iter().enumerate() {
            grads.bias[o] += g.iter().sum::<f64>();
            for (i, src) in input.iter().enumerate() {
                for a in 0..KSIZE {
                    for b in 0..KSIZE {
                        let idx = self.widx(o, i, a, b);
                        let k = self.weights[idx];
                        let mut acc = 0.0;
                        for r in 0..h {
                            let sr = wrap.rows[a][r];
                            let s_row = &src[sr * w..][..w];
                            let g_row = &g[r * w..][..w];
                            for (c, gv) in g_row.iter().enumerate() {
                                acc += gv * s_row[wrap.cols[b][c]];
                            }
                            if need_input && k != 0.0 {
                                let d_row = &mut d_in[i][sr * w..][..w];
                                for (c, gv) in g_row.iter().enumerate() {
                                    d_row[wrap.cols[b][c]] += k * gv;
                                }
                            }
                        }
                        grads.weights[idx] += acc;
                    }
                }
            }
        }
        d_in
    }
}

impl LayerGrads {
    fn zeros_like(layer: &ConvLayer) -> Self {
        Self {
            weights: vec![0.0; layer.weights.len()],
            bias: vec![0.0; layer.bias.len()],
        }
    }

    fn scale(&mut self, s: f64) {
        self.weights.iter_mut().chain(self.bias.iter_mut()).for_each(|v| *v *= s);
    }

    fn add(&mut self, other: &LayerGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }
}

/// `output = input − N(input)` where `N` is a stack of 3×3 convolutions with
/// rectifiers between them.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualConvNet {
    layers: Vec<ConvLayer>,
    metadata: DenoiserMetadata,
}

struct Cache {
    /// Inputs to each layer.
    inputs: Vec<Maps>,
    /// Pre-activation outputs of each layer.
    pre: Vec<Maps>,
}

impl ResidualConvNet {
    /// Channel widths from input to output, e.g. `[1, 8, 8, 1]`. Hidden
    /// layers get fan-in scaled uniform weights; the final layer starts at
    /// zero so a fresh net is the identity.
    pub fn new(channels: &[usize], seed: u64) -> Result<Self> {
        Self::check_channels(channels)?;
        let mut rng = SeededRng::new(seed).substream("net-init");
        let last = channels.len() - 2;
        let layers = channels
            .windows(2)
            .enumerate()
            .map(|(l, p)| {
                if l == last {
                    ConvLayer::zeros(p[0], p[1])
                } else {
                    ConvLayer::random(p[0], p[1], &mut rng)
                }
            })
            .collect();
        Ok(Self {
            layers,
            metadata: DenoiserMetadata::default(),
        })
    }

    pub fn zeros(channels: &[usize]) -> Result<Self> {
        Self::check_channels(channels)?;
        Ok(Self {
            layers: channels.windows(2).map(|p| ConvLayer::zeros(p[0], p[1])).collect(),
            metadata: DenoiserMetadata::default(),
        })
    }

    pub fn from_layers(layers: Vec<ConvLayer>) -> Result<Self> {
        let mut channels = vec![layers.first().map_or(0, |l| l.in_channels)];
        for (k, l) in layers.iter().enumerate() {
            if l.in_channels != channels[k] {
                return dim_err(format!(
                    "layer {k} expects {} channels, previous layer gives {}",
                    l.in_channels, channels[k]
                ));
            }
            channels.push(l.out_channels);
        }
        Self::check_channels(&channels)?;
        Ok(Self {
            layers,
            metadata: DenoiserMetadata::default(),
        })
    }

    fn check_channels(channels: &[usize]) -> Result<()> {
        if channels.len() < 2 || channels[0] != 1 || channels[channels.len() - 1] != 1 {
            return dim_err(format!(
                "channel widths must start and end at 1, got {channels:?}"
            ));
        }
        if channels.contains(&0) {
            return dim_err("channel widths must be positive");
        }
        Ok(())
    }

    pub fn with_metadata(mut self, metadata: DenoiserMetadata) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn set_metadata(&mut self, metadata: DenoiserMetadata) {
        self.metadata = metadata;
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer] {
        &mut self.layers
    }

    pub fn channels(&self) -> Vec<usize> {
        let mut c = vec![1];
        c.extend(self.layers.iter().map(|l| l.out_channels));
        c
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(ConvLayer::num_params).sum()
    }

    fn forward_cached(&self, x: &DenseVector, rectify: bool) -> Result<(Cache, usize, usize)> {
        let (h, w) = x.dims2()?;
        let wrap = Wrap::new(h, w);
        let mut inputs = vec![vec![x.data().to_vec()]];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&inputs[l], h, w, &wrap);
            if l + 1 < self.layers.len() {
                let a = if rectify {
                    z.iter().map(|m| m.iter().map(|v| v.max(0.0)).collect()).collect()
                } else {
                    z.clone()
                };
                inputs.push(a);
            }
            pre.push(z);
        }
        Ok((Cache { inputs, pre }, h, w))
    }

    /// The network's noise estimate `N(x)`.
    pub fn predict_noise(&self, x: &DenseVector) -> Result<DenseVector> {
        self.predict(x, true)
    }

    /// `N(x)` with every rectifier replaced by the identity, which makes the
    /// map affine in `x`.
    pub fn predict_noise_linear(&self, x: &DenseVector) -> Result<DenseVector> {
        self.predict(x, false)
    }

    fn predict(&self, x: &DenseVector, rectify: bool) -> Result<DenseVector> {
        let (mut cache, h, w) = self.forward_cached(x, rectify)?;
        let out = cache.pre.pop().and_then(|mut m| m.pop()).unwrap_or_default();
        DenseVector::image(h, w, out)
    }

    /// `x − N(x)`.
    pub fn apply(&self, x: &DenseVector) -> Result<DenseVector> {
        let out = x.sub(&self.predict_noise(x)?)?;
        if !out.all_finite() {
            return Err(LbsError::Numerical("denoiser produced non-finite output".into()));
        }
        Ok(out)
    }

    /// Mean squared error `(1/HW)‖N(noisy) − noise‖²` and its gradient with
    /// respect to every parameter.
    pub fn loss_and_grads(
        &self,
        noisy: &DenseVector,
        noise: &DenseVector,
    ) -> Result<(f64, Vec<LayerGrads>)> {
        noisy.check_same_shape(noise)?;
        let (cache, h, w) = self.forward_cached(noisy, true)?;
        let wrap = Wrap::new(h, w);
        let pred = &cache.pre[self.layers.len() - 1][0];
        let scale = 1.0 / (h * w) as f64;
        let mut loss = 0.0;
        let mut d: Maps = vec![pred
            .iter()
            .zip(noise.data())
            .map(|(p, t)| {
                let e = p - t;
                loss += e * e;
                2.0 * scale * e
            })
            .collect()];
        loss *= scale;
        let mut grads: Vec<LayerGrads> = self.layers.iter().map(LayerGrads::zeros_like).collect();
        for l in (0..self.layers.len()).rev() {
            if l + 1 < self.layers.len() {
                for (dm, zm) in d.iter_mut().zip(&cache.pre[l]) {
                    for (dv, zv) in dm.iter_mut().zip(zm) {
                        if *zv <= 0.0 {
                            *dv = 0.0;
                        }
                    }
                }
            }
            d = self.layers[l].backward(&cache.inputs[l], &d, h, w, &wrap, &mut grads[l], l > 0);
        }
        Ok((loss, grads))
    }

    /// `θ ← θ − lr · g`.
    pub fn sgd_step(&mut self, grads: &[LayerGrads], learning_rate: f64) -> Result<()> {
        if grads.len() != self.layers.len() {
            return dim_err("gradient list does not match the layer count");
        }
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                *w -= learning_rate * gw;
            }
            for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                *b -= learning_rate * gb;
            }
        }
        Ok(())
    }

    /// Averages per-sample gradients in order.
    pub fn mean_grads(samples: &[Vec<LayerGrads>]) -> Vec<LayerGrads> {
        let mut acc = samples[0].clone();
        for s in &samples[1..] {
            for (a, b) in acc.iter_mut().zip(s) {
                a.add(b);
            }
        }
        let k = 1.0 / samples.len() as f64;
        acc.iter_mut().for_each(|g| g.scale(k));
        acc
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.metadata.noise_sigma.unwrap_or(f64::NAN).to_le_bytes());
        for l in &self.layers {
            for d in [l.out_channels, l.in_channels, KSIZE, KSIZE] {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in l.weights.iter().chain(&l.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(LbsError::Format("not a denoiser weight file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(LbsError::Format(format!("unsupported weight file version {version}")));
        }
        let count = r.u32()? as usize;
        let sigma = r.f64()?;
        let mut layers = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let out_c = r.u32()? as usize;
            let in_c = r.u32()? as usize;
            let (kh, kw) = (r.u32()? as usize, r.u32()? as usize);
            if kh != KSIZE || kw != KSIZE {
                return Err(LbsError::Format(format!("unsupported kernel size {kh}x{kw}")));
            }
            let mut layer = ConvLayer::zeros(in_c, out_c);
            for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *v = r.f64()?;
            }
            layers.push(layer);
        }
        if r.pos != bytes.len() {
            return Err(LbsError::Format("trailing bytes after weights".into()));
        }
        let mut net = Self::from_layers(layers).map_err(|e| LbsError::Format(e.to_string()))?;
        net.metadata.noise_sigma = (!sigma.is_nan()).then_some(sigma);
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut net = Self::from_bytes(&std::fs::read(path)?)?;
        net.metadata.trained_on = Some(path.display().to_string());
        Ok(net)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(LbsError::Format("weight file is truncated".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl ImageDenoiser for ResidualConvNet {
    fn name(&self) -> String {
        let ch: Vec<String> = self.channels().iter().map(usize::to_string).collect();
        format!("residual-cnn({})", ch.join("-"))
    }

    fn denoise(&self, image: &DenseVector) -> Result<DenseVector> {
        self.apply(image)
    }

    fn metadata(&self) -> DenoiserMetadata {
        self.metadata.clone()
    }
}
