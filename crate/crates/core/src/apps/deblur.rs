//! Non-blind deblurring with a nonconvex TV prior via half-quadratic
//! splitting over blocks `(u, v_h, v_v)`:
//! `(1/2ρ_f)‖k⊗u − y‖² + (1/2η)(‖D_h u − v_h‖² + ‖D_v u − v_v‖²)
//!  + χ_[0,1](u) + ‖v_h‖_p^p + ‖v_v‖_p^p`.

use crate::bregman::DiagonalMahalanobis;
use crate::denoise::{Blockwise, ImageDenoiser};
use crate::error::{LbsError, Result};
use crate::linops::{grad_h, grad_h_adjoint, grad_v, grad_v_adjoint, ConvKernel, Convolution, LinearMap};
use crate::numerics::{BlockVector, DenseVector};
use crate::problem::{SmoothFn, SplitProblem};
use crate::prox::{BoxIndicator, LpPower};
use crate::splitting::estimate_lipschitz;

pub const BLOCK_LABELS: [&str; 3] = ["u", "v_h", "v_v"];

#[derive(Debug, Clone, PartialEq)]
pub struct DeblurParams {
    pub rho_fidelity: f64,
    /// Coupling weight `η`.
    pub eta: f64,
    pub p: f64,
    pub mu_u: f64,
    pub mu_v: f64,
    pub seed: u64,
}

impl Default for DeblurParams {
    fn default() -> Self {
        Self {
            rho_fidelity: 0.002,
            eta: 0.05,
            p: 0.8,
            mu_u: 0.01,
            mu_v: 0.001,
            seed: 0,
        }
    }
}

/// Fidelity plus half-quadratic coupling.
#[derive(Debug, Clone)]
pub struct DeblurSmooth {
    blur: Convolution,
    y: DenseVector,
    inv_rho: f64,
    inv_eta: f64,
}

impl DeblurSmooth {
    fn parts(&self, x: &BlockVector) -> Result<(DenseVector, DenseVector, DenseVector)> {
        let u = x.block(0);
        Ok((
            self.blur.forward(u)?.sub(&self.y)?,
            grad_h(u)?.sub(x.block(1))?,
            grad_v(u)?.sub(x.block(2))?,
        ))
    }
}

impl SmoothFn for DeblurSmooth {
    fn value(&self, x: &BlockVector) -> f64 {
        self.parts(x).map_or(f64::NAN, |(r, ch, cv)| {
            0.5 * self.inv_rho * r.norm2() + 0.5 * self.inv_eta * (ch.norm2() + cv.norm2())
        })
    }

    fn grad_block(&self, x: &BlockVector, n: usize) -> Result<DenseVector> {
        let u = x.block(0);
        match n {
            0 => {
                let (r, ch, cv) = self.parts(x)?;
                let mut g = self.blur.adjoint(&r)?.scaled(self.inv_rho);
                g.axpy_in_place(self.inv_eta, &grad_h_adjoint(&ch)?)?;
                g.axpy_in_place(self.inv_eta, &grad_v_adjoint(&cv)?)?;
                Ok(g)
            }
            1 => Ok(x.block(1).sub(&grad_h(u)?)?.scaled(self.inv_eta)),
            2 => Ok(x.block(2).sub(&grad_v(u)?)?.scaled(self.inv_eta)),
            _ => Err(LbsError::Dimension(format!("deblurring has 3 blocks, asked for {n}"))),
        }
    }

    fn is_convex_quadratic(&self) -> bool {
        true
    }
}

#[derive(Debug)]
pub struct DeblurProblem {
    problem: SplitProblem,
    y: DenseVector,
    kernel: ConvKernel,
    params: DeblurParams,
}

pub fn build_deblur(y: &DenseVector, kernel: &ConvKernel, params: &DeblurParams) -> Result<DeblurProblem> {
    let (h, w) = y.dims2()?;
    for (name, v) in [("rho_fidelity", params.rho_fidelity), ("eta", params.eta)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(LbsError::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    let smooth = DeblurSmooth {
        blur: Convolution::new(kernel.clone(), h, w)?,
        y: y.clone(),
        inv_rho: 1.0 / params.rho_fidelity,
        inv_eta: 1.0 / params.eta,
    };
    let template = BlockVector::new(vec![DenseVector::zeros(&[h, w]); 3])?;
    let g0 = smooth.grad(&template)?;
    let hessian = |v: &BlockVector| smooth.grad(v)?.sub(&g0);
    let lipschitz = estimate_lipschitz(hessian, &template, 1.0, params.seed)?;
    let problem = SplitProblem::new(
        Box::new(smooth),
        vec![
            Box::new(BoxIndicator::unit()),
            Box::new(LpPower::new(params.p)?),
            Box::new(LpPower::new(params.p)?),
        ],
        Box::new(DiagonalMahalanobis::new(vec![params.mu_u, params.mu_v, params.mu_v])?),
        lipschitz,
    )?;
    Ok(DeblurProblem {
        problem,
        y: y.clone(),
        kernel: kernel.clone(),
        params: params.clone(),
    })
}

impl DeblurProblem {
    pub fn split_problem(&self) -> &SplitProblem {
        &self.problem
    }

    pub fn observed(&self) -> &DenseVector {
        &self.y
    }

    pub fn kernel(&self) -> &ConvKernel {
        &self.kernel
    }

    pub fn params(&self) -> &DeblurParams {
        &self.params
    }

    /// `u⁰ = clamp(y, 0, 1)`, `v⁰ = D u⁰`.
    pub fn initial_point(&self) -> Result<BlockVector> {
        let u = self.y.map(|v| v.clamp(0.0, 1.0));
        BlockVector::new(vec![grad_h(&u)?, grad_v(&u)?])
            .and_then(|v| BlockVector::new([vec![u], v.into_blocks()].concat()))?
            .with_labels(BLOCK_LABELS.to_vec())
    }

    /// Denoises the `u` block and passes the gradient blocks through.
    pub fn lift_denoiser<D: ImageDenoiser>(&self, denoiser: D) -> Blockwise<D> {
        Blockwise::only(denoiser, vec![0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn random_instance(seed: u64) -> (DeblurProblem, SeededRng) {
        let mut rng = SeededRng::new(seed);
        let y = rng.uniform_vector(&[10, 12], 0.0, 1.0);
        let k = ConvKernel::box_blur(3).unwrap();
        (build_deblur(&y, &k, &DeblurParams::default()).unwrap(), rng)
    }

    #[test]
    fn block_gradients_match_finite_differences() {
        let (dp, mut rng) = random_instance(1);
        let p = dp.split_problem();
        for _ in 0..10 {
            let x = BlockVector::new(vec![
                rng.uniform_vector(&[10, 12], 0.0, 1.0),
                rng.uniform_vector(&[10, 12], -0.5, 0.5),
                rng.uniform_vector(&[10, 12], -0.5, 0.5),
            ])
            .unwrap();
            for n in 0..3 {
                let g = p.f_grad_block(&x, n).unwrap();
                for i in [0, 17, 119] {
                    let eps = 1e-6;
                    let bump = |d: f64| {
                        let mut b = x.block(n).clone();
                        b.data_mut()[i] += d;
                        let mut xp = x.clone();
                        xp.set_block(n, b).unwrap();
                        p.f_value(&xp)
                    };
                    let fd = (bump(eps) - bump(-eps)) / (2.0 * eps);
                    let an = g.data()[i];
                    assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "block {n}: {fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn lipschitz_bounds_hessian() {
        let (dp, _) = random_instance(2);
        let l = dp.split_problem().lipschitz();
        let params = dp.params();
        // ‖K‖ ≤ 1 and ‖D_h‖², ‖D_v‖² ≤ 4 bound the spectrum by 1/ρ + 9/η.
        assert!(l <= 1.05 * (1.0 / params.rho_fidelity + 9.0 / params.eta));
        assert!(l >= 1.0 / params.eta);
    }

    #[test]
    fn initial_point_is_feasible_and_labelled() {
        let mut rng = SeededRng::new(3);
        let y = rng.uniform_vector(&[8, 8], -0.2, 1.2);
        let dp = build_deblur(&y, &ConvKernel::delta(), &DeblurParams::default()).unwrap();
        let x0 = dp.initial_point().unwrap();
        assert!(dp.split_problem().objective(&x0).is_finite());
        assert_eq!(x0.label(2), "v_v");
        let c = DeblurSmooth {
            blur: Convolution::new(ConvKernel::delta(), 8, 8).unwrap(),
            y: y.clone(),
            inv_rho: 1.0,
            inv_eta: 1.0,
        };
        // Coupling vanishes at v = D u.
        let (_, ch, cv) = c.parts(&x0).unwrap();
        assert_eq!(ch.norm() + cv.norm(), 0.0);
    }

    #[test]
    fn invalid_parameters() {
        let y = DenseVector::zeros(&[8, 8]);
        let k = ConvKernel::delta();
        let bad = DeblurParams {
            eta: 0.0,
            ..Default::default()
        };
        assert!(build_deblur(&y, &k, &bad).is_err());
        assert!(build_deblur(&y, &ConvKernel::box_blur(9).unwrap(), &DeblurParams::default()).is_err());
    }
}
