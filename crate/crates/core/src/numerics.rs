//! Dense containers, block partitioning and the seeded random stream used by
//! every other module.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{dim_err, LbsError, Result};

/// A dense `f64` array with a 1-D or 2-D (height × width) shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector {
    data: Vec<f64>,
    shape: Vec<usize>,
}

impl DenseVector {
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        if shape.is_empty() || shape.len() > 2 {
            return dim_err(format!("shape must be 1-D or 2-D, got {shape:?}"));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return dim_err(format!(
                "shape {shape:?} holds {expected} entries but data has {}",
                data.len()
            ));
        }
        Ok(Self {
            data,
            shape: shape.to_vec(),
        })
    }

    /// 1-D vector owning `data`.
    pub fn from_vec(data: Vec<f64>) -> Self {
        let n = data.len();
        Self {
            data,
            shape: vec![n],
        }
    }

    /// Row-major `height × width` image.
    pub fn image(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(data, &[height, width])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            data: vec![value; n],
            shape: shape.to_vec(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// `(height, width)` of a 2-D vector.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [h, w] => Ok((h, w)),
            _ => dim_err(format!("expected a 2-D image, got shape {:?}", self.shape)),
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.shape[1] + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let w = self.shape[1];
        self.data[row * w + col] = value;
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return dim_err(format!(
                "shape {:?} does not match {:?}",
                self.shape, other.shape
            ));
        }
        Ok(())
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            shape: self.shape.clone(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            shape: self.shape.clone(),
        })
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    /// `alpha * x + self`, in place.
    pub fn axpy_in_place(&mut self, alpha: f64, x: &Self) -> Result<()> {
        self.check_same_shape(x)?;
        for (y, &xv) in self.data.iter_mut().zip(&x.data) {
            *y += alpha * xv;
        }
        Ok(())
    }

    /// Same data viewed under a new shape with the same element count.
    pub fn reshaped(self, shape: &[usize]) -> Result<Self> {
        Self::new(self.data, shape)
    }
}

/// The `N`-block optimization variable `x = {x_1, ..., x_N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    blocks: Vec<DenseVector>,
    labels: Option<Vec<String>>,
}

impl BlockVector {
    pub fn new(blocks: Vec<DenseVector>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(LbsError::Dimension(
                "a block vector needs at least one block".into(),
            ));
        }
        Ok(Self {
            blocks,
            labels: None,
        })
    }

    pub fn single(block: DenseVector) -> Self {
        Self {
            blocks: vec![block],
            labels: None,
        }
    }

    pub fn with_labels<S: Into<String>>(mut self, labels: Vec<S>) -> Result<Self> {
        if labels.len() != self.blocks.len() {
            return dim_err(format!(
                "{} labels given for {} blocks",
                labels.len(),
                self.blocks.len()
            ));
        }
        self.labels = Some(labels.into_iter().map(Into::into).collect());
        Ok(self)
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[DenseVector] {
        &self.blocks
    }

    pub fn block(&self, n: usize) -> &DenseVector {
        &self.blocks[n]
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Label of block `n`, falling back to `x<n>`.
    pub fn label(&self, n: usize) -> String {
        match &self.labels {
            Some(l) => l[n].clone(),
            None => format!("x{}", n + 1),
        }
    }

    pub fn into_blocks(self) -> Vec<DenseVector> {
        self.blocks
    }

    /// Replace block `n`; the replacement must keep the block's shape.
    pub fn set_block(&mut self, n: usize, value: DenseVector) -> Result<()> {
        if n >= self.blocks.len() {
            return dim_err(format!("block index {n} out of range"));
        }
        self.blocks[n].check_same_shape(&value)?;
        self.blocks[n] = value;
        Ok(())
    }

    pub fn check_structure(&self, other: &Self) -> Result<()> {
        if self.blocks.len() != other.blocks.len() {
            return dim_err(format!(
                "{} blocks vs {} blocks",
                self.blocks.len(),
                other.blocks.len()
            ));
        }
        for (a, b) in self.blocks.iter().zip(&other.blocks) {
            a.check_same_shape(b)?;
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            blocks: self.blocks.iter().map(DenseVector::zeros_like).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn norm2(&self) -> f64 {
        self.blocks.iter().map(DenseVector::norm2).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_structure(other)?;
        let mut acc = 0.0;
        for (a, b) in self.blocks.iter().zip(&other.blocks) {
            acc += a.inner(b)?;
        }
        Ok(acc)
    }

    pub fn all_finite(&self) -> bool {
        self.blocks.iter().all(DenseVector::all_finite)
    }

    pub fn map_blocks(&self, mut f: impl FnMut(usize, &DenseVector) -> DenseVector) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .enumerate()
                .map(|(n, b)| f(n, b))
                .collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64 + Copy) -> Result<Self> {
        self.check_structure(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.zip_map(b, f))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            blocks,
            labels: self.labels.clone(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        self.map_blocks(|_, b| b.scaled(alpha))
    }
}

/// `Σ a_i b_i`.
pub fn inner(a: &DenseVector, b: &DenseVector) -> Result<f64> {
    a.inner(b)
}

/// `Σ_n ‖x_n‖²`.
pub fn block_norm2(x: &BlockVector) -> f64 {
    x.norm2()
}

/// `alpha * x + y`, blockwise.
pub fn axpy(alpha: f64, x: &BlockVector, y: &BlockVector) -> Result<BlockVector> {
    x.zip_map(y, move |xv, yv| alpha * xv + yv)
}

/// Seeded ChaCha20 stream. ChaCha is counter based, so a `(seed, stream)`
/// pair names the same sequence on every platform.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha20Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream for `label`, derived from the root seed only (not
    /// from how much of this stream has been consumed).
    pub fn substream(&self, label: &str) -> Self {
        let mut h = fnv1a(self.stream.to_le_bytes().as_slice(), FNV_OFFSET);
        h = fnv1a(label.as_bytes(), h);
        Self::with_stream(self.seed, h)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn uniform_vector(&mut self, shape: &[usize], lo: f64, hi: f64) -> DenseVector {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.uniform_range(lo, hi)).collect();
        DenseVector {
            data,
            shape: shape.to_vec(),
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

pub(crate) fn fnv1a(bytes: &[u8], mut hash: u64) -> u64 {
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Hash of the bit patterns of `values`, used to make deterministic
/// input-dependent streams.
pub(crate) fn hash_f64s(values: &[f64], seed: u64) -> u64 {
    let mut h = fnv1a(&seed.to_le_bytes(), FNV_OFFSET);
    for v in values {
        h = fnv1a(&v.to_bits().to_le_bytes(), h);
    }
    h
}

/// I.i.d. `N(0, sigma²)` samples of the given shape.
pub fn gaussian_noise(rng: &mut SeededRng, shape: &[usize], sigma: f64) -> Result<DenseVector> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(LbsError::Domain(format!(
            "noise level must be finite and nonnegative, got {sigma}"
        )));
    }
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| sigma * rng.standard_normal()).collect();
    DenseVector::new(data, shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(data: &[f64]) -> DenseVector {
        DenseVector::from_vec(data.to_vec())
    }

    #[test]
    fn inner_examples() {
        assert_eq!(inner(&v(&[1.0, 0.0, 2.0]), &v(&[3.0, 4.0, 5.0])).unwrap(), 13.0);
        let z = DenseVector::zeros(&[4]);
        assert_eq!(inner(&z, &z).unwrap(), 0.0);

        let mut rng = SeededRng::new(7);
        let x = gaussian_noise(&mut rng, &[100], 1.0).unwrap();
        assert!((inner(&x, &x).unwrap() - x.norm2()).abs() < 1e-12);
    }

    #[test]
    fn inner_shape_mismatch() {
        let err = inner(&v(&[1.0]), &v(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, LbsError::Dimension(_)));
    }

    #[test]
    fn block_norm2_examples() {
        let x = BlockVector::single(v(&[3.0, 4.0]));
        assert_eq!(block_norm2(&x), 25.0);
        let x = BlockVector::new(vec![v(&[1.0]), v(&[2.0]), v(&[2.0])]).unwrap();
        assert_eq!(block_norm2(&x), 9.0);
        assert_eq!(block_norm2(&x.zeros_like()), 0.0);
    }

    #[test]
    fn empty_block_vector_rejected() {
        assert!(BlockVector::new(vec![]).is_err());
    }

    #[test]
    fn set_block_rejects_resize() {
        let mut x = BlockVector::single(v(&[1.0, 2.0]));
        assert!(x.set_block(0, v(&[1.0])).is_err());
    }

    #[test]
    fn axpy_examples() {
        let x = BlockVector::new(vec![v(&[1.0, 2.0]), v(&[3.0])]).unwrap();
        let y = BlockVector::new(vec![v(&[-1.0, 5.0]), v(&[0.5])]).unwrap();
        assert_eq!(axpy(0.0, &x, &y).unwrap(), y);
        assert_eq!(axpy(1.0, &x, &y.zeros_like()).unwrap(), x);

        // w = x - 0.5 (x - v) is the midpoint of x and v.
        let gamma = 0.5;
        let diff = x.sub(&y).unwrap();
        let w = axpy(-gamma, &diff, &x).unwrap();
        for (n, block) in w.blocks().iter().enumerate() {
            for (i, &wi) in block.data().iter().enumerate() {
                let mid = 0.5 * (x.block(n).data()[i] + y.block(n).data()[i]);
                assert!((wi - mid).abs() < 1e-15);
            }
        }
        assert!(axpy(1.0, &x, &BlockVector::single(v(&[1.0]))).is_err());
    }

    #[test]
    fn gaussian_noise_examples() {
        let mut rng = SeededRng::new(1);
        let z = gaussian_noise(&mut rng, &[10], 0.0).unwrap();
        assert!(z.data().iter().all(|&x| x == 0.0));

        let mut rng = SeededRng::new(42);
        let x = gaussian_noise(&mut rng, &[100_000], 1.0).unwrap();
        let n = x.len() as f64;
        let mean = x.data().iter().sum::<f64>() / n;
        let var = x.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.02, "std {}", var.sqrt());

        let a = gaussian_noise(&mut SeededRng::new(42), &[64], 1.0).unwrap();
        let b = gaussian_noise(&mut SeededRng::new(42), &[64], 1.0).unwrap();
        assert_eq!(a, b);

        assert!(matches!(
            gaussian_noise(&mut rng, &[3], -1.0),
            Err(LbsError::Domain(_))
        ));
    }

    #[test]
    fn substreams_are_labelled_and_reproducible() {
        let root = SeededRng::new(9);
        let mut a = root.substream("mask");
        let mut b = root.substream("mask");
        let mut c = root.substream("noise");
        let xa: Vec<f64> = (0..8).map(|_| a.uniform()).collect();
        let xb: Vec<f64> = (0..8).map(|_| b.uniform()).collect();
        let xc: Vec<f64> = (0..8).map(|_| c.uniform()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    fn block_pair() -> impl Strategy<Value = (BlockVector, BlockVector)> {
        (1usize..4, 1usize..6).prop_flat_map(|(nb, len)| {
            let block = prop::collection::vec(-10.0f64..10.0, len);
            (
                prop::collection::vec(block.clone(), nb),
                prop::collection::vec(block, nb),
            )
                .prop_map(|(a, b)| {
                    let to_bv = |v: Vec<Vec<f64>>| {
                        BlockVector::new(v.into_iter().map(DenseVector::from_vec).collect())
                            .unwrap()
                    };
                    (to_bv(a), to_bv(b))
                })
        })
    }

    proptest! {
        #[test]
        fn cauchy_schwarz((a, b) in block_pair()) {
            let ip = a.inner(&b).unwrap();
            prop_assert!(ip * ip <= block_norm2(&a) * block_norm2(&b) * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn axpy_is_linear((x, y) in block_pair(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let lhs = axpy(alpha, &x, &axpy(beta, &x, &y).unwrap()).unwrap();
            let rhs = axpy(alpha + beta, &x, &y).unwrap();
            let diff = lhs.sub(&rhs).unwrap();
            prop_assert!(diff.norm() <= 1e-12 * (1.0 + rhs.norm()));
        }

        #[test]
        fn rng_streams_bitwise_equal(seed in any::<u64>()) {
            let mut a = SeededRng::new(seed);
            let mut b = SeededRng::new(seed);
            for _ in 0..16 {
                prop_assert_eq!(a.standard_normal().to_bits(), b.standard_normal().to_bits());
            }
        }
    }
}
