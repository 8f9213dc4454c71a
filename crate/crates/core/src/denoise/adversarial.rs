//! Deliberately unhelpful operators used to exercise the safeguard.

use super::{relabel, DenoiserOp};
use crate::error::Result;
use crate::numerics::{hash_f64s, BlockVector, SeededRng};

/// `x ↦ −x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NegationOp;

impl DenoiserOp for NegationOp {
    fn name(&self) -> String {
        "negation".into()
    }
    fn apply(&self, x: &BlockVector) -> Result<BlockVector> {
        Ok(x.scaled(-1.0))
    }
}

/// Ignores its input and returns a constant-filled point.
#[derive(Debug, Clone, Copy)]
pub struct ConstantOp(pub f64);

impl DenoiserOp for ConstantOp {
    fn name(&self) -> String {
        format!("constant({})", self.0)
    }
    fn apply(&self, x: &BlockVector) -> Result<BlockVector> {
        let c = self.0;
        Ok(x.map_blocks(|_, b| b.map(|_| c)))
    }
}

/// Negates a fixed pseudo-random half of the entries.
#[derive(Debug, Clone, Copy)]
pub struct SignFlipOp {
    pub seed: u64,
}

impl DenoiserOp for SignFlipOp {
    fn name(&self) -> String {
        "sign-flip".into()
    }
    fn apply(&self, x: &BlockVector) -> Result<BlockVector> {
        let mut rng = SeededRng::new(self.seed).substream("sign-flip");
        Ok(x.map_blocks(|_, b| {
            let mut out = b.clone();
            for v in out.data_mut() {
                if rng.uniform() < 0.5 {
                    *v = -*v;
                }
            }
            out
        }))
    }
}

/// Adds large uniform noise seeded by a hash of the input, so repeated
/// applications to the same point agree bitwise.
#[derive(Debug, Clone, Copy)]
pub struct NoiseOp {
    pub amplitude: f64,
    pub seed: u64,
}

impl DenoiserOp for NoiseOp {
    fn name(&self) -> String {
        format!("noise({})", self.amplitude)
    }
    fn apply(&self, x: &BlockVector) -> Result<BlockVector> {
        let all: Vec<f64> = x.blocks().iter().flat_map(|b| b.data().iter().copied()).collect();
        let mut rng = SeededRng::new(hash_f64s(&all, self.seed));
        let a = self.amplitude;
        let out = x.map_blocks(|_, b| {
            let mut o = b.clone();
            o.data_mut().iter_mut().for_each(|v| *v += rng.uniform_range(-a, a));
            o
        });
        relabel(out, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::DenseVector;

    #[test]
    fn deterministic_and_shape_preserving() {
        let x = BlockVector::new(vec![
            DenseVector::from_vec(vec![1.0, -2.0, 3.0]),
            DenseVector::filled(&[2, 2], 0.5),
        ])
        .unwrap();
        let ops: Vec<Box<dyn DenoiserOp>> = vec![
            Box::new(NegationOp),
            Box::new(ConstantOp(7.0)),
            Box::new(SignFlipOp { seed: 3 }),
            Box::new(NoiseOp { amplitude: 10.0, seed: 4 }),
        ];
        for op in &ops {
            let a = op.apply(&x).unwrap();
            let b = op.apply(&x).unwrap();
            assert_eq!(a, b, "{}", op.name());
            a.check_structure(&x).unwrap();
        }
        let y = x.map_blocks(|_, b| b.map(|v| v + 1e-9));
        let n = NoiseOp { amplitude: 10.0, seed: 4 };
        assert_ne!(
            n.apply(&x).unwrap().sub(&x).unwrap(),
            n.apply(&y).unwrap().sub(&y).unwrap()
        );
    }
}
