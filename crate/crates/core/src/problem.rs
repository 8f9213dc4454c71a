//! Composite problems `Ψ(x) = f(x) + Σ_n g_n(x_n)` in the form every solver
//! consumes.

use std::fmt;

use crate::bregman::BregmanGeometry;
use crate::error::{dim_err, LbsError, Result};
use crate::numerics::{BlockVector, DenseVector};
use crate::prox::ProxFn;

/// The smooth coupling term `f`.
pub trait SmoothFn: Send + Sync {
    fn value(&self, x: &BlockVector) -> f64;

    /// Partial gradient `∇_n f(x)`.
    fn grad_block(&self, x: &BlockVector, n: usize) -> Result<DenseVector>;

    fn grad(&self, x: &BlockVector) -> Result<BlockVector> {
        let blocks = (0..x.num_blocks())
            .map(|n| self.grad_block(x, n))
            .collect::<Result<Vec<_>>>()?;
        let mut g = BlockVector::new(blocks)?;
        if let Some(labels) = x.labels() {
            g = g.with_labels(labels.to_vec())?;
        }
        Ok(g)
    }

    /// True when `f` is a convex quadratic, so `∇f` is affine with a
    /// positive semidefinite linear part.
    fn is_convex_quadratic(&self) -> bool {
        false
    }
}

type Readout = Box<dyn Fn(&BlockVector) -> Result<DenseVector> + Send + Sync>;

pub struct SplitProblem {
    smooth: Box<dyn SmoothFn>,
    regularizers: Vec<Box<dyn ProxFn>>,
    geometry: Box<dyn BregmanGeometry>,
    lipschitz: f64,
    readout: Option<Readout>,
}

impl fmt::Debug for SplitProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.regularizers.iter().map(|g| g.name()).collect();
        f.debug_struct("SplitProblem")
            .field("regularizers", &names)
            .field("lipschitz", &self.lipschitz)
            .field("modulus", &self.geometry.modulus())
            .finish()
    }
}

impl SplitProblem {
    pub fn new(
        smooth: Box<dyn SmoothFn>,
        regularizers: Vec<Box<dyn ProxFn>>,
        geometry: Box<dyn BregmanGeometry>,
        lipschitz: f64,
    ) -> Result<Self> {
        if regularizers.is_empty() {
            return dim_err("a problem needs at least one block");
        }
        if !(lipschitz > 0.0) || !lipschitz.is_finite() {
            return Err(LbsError::Domain(format!(
                "Lipschitz constant must be positive and finite, got {lipschitz}"
            )));
        }
        Ok(Self {
            smooth,
            regularizers,
            geometry,
            lipschitz,
            readout: None,
        })
    }

    /// Map from the block variable to the quantity compared against ground
    /// truth (e.g. the synthesized image). Defaults to the first block.
    pub fn with_readout(
        mut self,
        readout: impl Fn(&BlockVector) -> Result<DenseVector> + Send + Sync + 'static,
    ) -> Self {
        self.readout = Some(Box::new(readout));
        self
    }

    pub fn num_blocks(&self) -> usize {
        self.regularizers.len()
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn geometry(&self) -> &dyn BregmanGeometry {
        self.geometry.as_ref()
    }

    pub fn smooth(&self) -> &dyn SmoothFn {
        self.smooth.as_ref()
    }

    pub fn regularizer(&self, n: usize) -> &dyn ProxFn {
        self.regularizers[n].as_ref()
    }

    pub fn check_point(&self, x: &BlockVector) -> Result<()> {
        if x.num_blocks() != self.num_blocks() {
            return dim_err(format!(
                "point has {} blocks, problem has {}",
                x.num_blocks(),
                self.num_blocks()
            ));
        }
        Ok(())
    }

    pub fn f_value(&self, x: &BlockVector) -> f64 {
        self.smooth.value(x)
    }

    pub fn f_grad(&self, x: &BlockVector) -> Result<BlockVector> {
        self.smooth.grad(x)
    }

    pub fn f_grad_block(&self, x: &BlockVector, n: usize) -> Result<DenseVector> {
        self.smooth.grad_block(x, n)
    }

    pub fn g_value(&self, x: &BlockVector) -> f64 {
        x.blocks()
            .iter()
            .zip(&self.regularizers)
            .map(|(b, g)| g.value(b))
            .sum()
    }

    /// `Ψ(x) = f(x) + Σ_n g_n(x_n)`.
    pub fn objective(&self, x: &BlockVector) -> f64 {
        self.f_value(x) + self.g_value(x)
    }

    /// `ψ_n(y) = f(x with block n replaced by y) + g_n(y)`.
    pub fn block_objective(&self, x: &BlockVector, n: usize, y: &DenseVector) -> Result<f64> {
        let mut probe = x.clone();
        probe.set_block(n, y.clone())?;
        Ok(self.f_value(&probe) + self.regularizers[n].value(y))
    }

    /// Blockwise `prox_{ρ g_n}`.
    pub fn prox_g(&self, x: &BlockVector, rho: f64) -> Result<BlockVector> {
        self.check_point(x)?;
        let blocks = x
            .blocks()
            .iter()
            .zip(&self.regularizers)
            .map(|(b, g)| g.prox(b, rho))
            .collect::<Result<Vec<_>>>()?;
        relabel(BlockVector::new(blocks)?, x)
    }

    /// `prox_{ρ f}(v)`, i.e. the solution of `x + ρ∇f(x) = v`, by conjugate
    /// gradients. Only available for convex quadratic `f`.
    pub fn prox_f(&self, v: &BlockVector, rho: f64) -> Result<BlockVector> {
        if !self.smooth.is_convex_quadratic() {
            return Err(LbsError::Domain(
                "the resolvent of f is only available for convex quadratic f".into(),
            ));
        }
        let zero = v.zeros_like();
        let g0 = self.f_grad(&zero)?;
        // (I + ρH) x = v − ρ∇f(0), with H x = ∇f(x) − ∇f(0).
        let apply = |x: &BlockVector| -> Result<BlockVector> {
            let hx = self.f_grad(x)?.sub(&g0)?;
            crate::numerics::axpy(rho, &hx, x)
        };
        let rhs = crate::numerics::axpy(-rho, &g0, v)?;
        conjugate_gradient(apply, &rhs, v.clone(), 1e-13, 5000)
    }

    pub fn readout(&self, x: &BlockVector) -> Result<DenseVector> {
        match &self.readout {
            Some(r) => r(x),
            None => Ok(x.block(0).clone()),
        }
    }
}

fn relabel(mut out: BlockVector, like: &BlockVector) -> Result<BlockVector> {
    if let Some(labels) = like.labels() {
        out = out.with_labels(labels.to_vec())?;
    }
    Ok(out)
}

/// Conjugate gradients for a symmetric positive definite `apply`.
pub fn conjugate_gradient(
    apply: impl Fn(&BlockVector) -> Result<BlockVector>,
    rhs: &BlockVector,
    x0: BlockVector,
    rel_tol: f64,
    max_iters: usize,
) -> Result<BlockVector> {
    let mut x = x0;
    let mut r = rhs.sub(&apply(&x)?)?;
    let mut p = r.clone();
    let mut rr = r.norm2();
    let target = (rel_tol * rhs.norm()).powi(2).max(1e-300);
    for _ in 0..max_iters {
        if rr <= target {
            return Ok(x);
        }
        let ap = apply(&p)?;
        let pap = p.inner(&ap)?;
        if !(pap > 0.0) {
            return Err(LbsError::Numerical(
                "conjugate gradients met a non-positive curvature direction".into(),
            ));
        }
        let alpha = rr / pap;
        x = crate::numerics::axpy(alpha, &p, &x)?;
        r = crate::numerics::axpy(-alpha, &ap, &r)?;
        let rr_new = r.norm2();
        p = crate::numerics::axpy(rr_new / rr, &p, &r)?;
        rr = rr_new;
    }
    if rr <= target * 1e4 {
        return Ok(x);
    }
    Err(LbsError::Numerical(format!(
        "conjugate gradients did not converge in {max_iters} iterations"
    )))
}

/// `f(x) = ½ Σ_n Σ_i d_{n,i} (x_{n,i} − a_{n,i})²` with `d > 0`: a separable
/// convex quadratic with closed-form proximal subproblems, used for
/// baseline cross-checks.
#[derive(Debug, Clone)]
pub struct DiagonalQuadratic {
    pub curvature: BlockVector,
    pub center: BlockVector,
}

impl DiagonalQuadratic {
    pub fn new(curvature: BlockVector, center: BlockVector) -> Result<Self> {
        curvature.check_structure(&center)?;
        if curvature.blocks().iter().any(|b| b.data().iter().any(|d| !(*d > 0.0))) {
            return Err(LbsError::Domain("curvatures must be positive".into()));
        }
        Ok(Self { curvature, center })
    }

    pub fn max_curvature(&self) -> f64 {
        self.curvature
            .blocks()
            .iter()
            .flat_map(|b| b.data().iter().copied())
            .fold(0.0, f64::max)
    }
}

impl SmoothFn for DiagonalQuadratic {
    fn value(&self, x: &BlockVector) -> f64 {
        let mut acc = 0.0;
        for n in 0..x.num_blocks() {
            for ((xi, ai), di) in x
                .block(n)
                .data()
                .iter()
                .zip(self.center.block(n).data())
                .zip(self.curvature.block(n).data())
            {
                acc += 0.5 * di * (xi - ai) * (xi - ai);
            }
        }
        acc
    }

    fn grad_block(&self, x: &BlockVector, n: usize) -> Result<DenseVector> {
        let diff = x.block(n).sub(self.center.block(n))?;
        diff.zip_map(self.curvature.block(n), |e, d| d * e)
    }

    fn is_convex_quadratic(&self) -> bool {
        true
    }
}
