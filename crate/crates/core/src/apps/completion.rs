//! Image completion by ℓp sparse coding in a Haar basis:
//! `min_α (1/2ρ_f)‖M⊙Bα − y‖² + ‖α‖_p^p` with `B` the inverse DWT.

use crate::bregman::DiagonalMahalanobis;
use crate::denoise::{DenoiserMetadata, DenoiserOp, ImageDenoiser};
use crate::error::{LbsError, Result};
use crate::linops::{haar_dwt, haar_idwt, HaarSynthesis, LinearMap, Mask};
use crate::numerics::{BlockVector, DenseVector};
use crate::problem::{SmoothFn, SplitProblem};
use crate::prox::LpPower;
use crate::splitting::estimate_lipschitz;

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionParams {
    /// Fidelity scale `ρ_f` in `(1/2ρ_f)‖M⊙Bα − y‖²`.
    pub rho_fidelity: f64,
    pub p: f64,
    /// Geometry `h = (μ/2)‖α‖²`.
    pub mu: f64,
    /// Haar decomposition depth.
    pub levels: usize,
    /// Seed of the power-iteration start.
    pub seed: u64,
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self {
            rho_fidelity: 0.05,
            p: 0.8,
            mu: 1.0,
            levels: 3,
            seed: 0,
        }
    }
}

/// The smooth fidelity term.
#[derive(Debug, Clone)]
pub struct CompletionFidelity {
    mask: Mask,
    synth: HaarSynthesis,
    y: DenseVector,
    inv_rho: f64,
}

impl CompletionFidelity {
    fn residual(&self, alpha: &DenseVector) -> Result<DenseVector> {
        let img = self.synth.forward(alpha)?;
        self.mask.apply(&img.sub(&self.y)?)
    }
}

impl SmoothFn for CompletionFidelity {
    fn value(&self, x: &BlockVector) -> f64 {
        self.residual(x.block(0))
            .map_or(f64::NAN, |r| 0.5 * self.inv_rho * r.norm2())
    }

    fn grad_block(&self, x: &BlockVector, _n: usize) -> Result<DenseVector> {
        let r = self.residual(x.block(0))?;
        Ok(self.synth.adjoint(&r)?.scaled(self.inv_rho))
    }

    fn is_convex_quadratic(&self) -> bool {
        true
    }
}

/// A completion instance in solver form plus what is needed to map
/// coefficients back to images.
#[derive(Debug)]
pub struct CompletionProblem {
    problem: SplitProblem,
    observed: DenseVector,
    mask: Mask,
    levels: usize,
    params: CompletionParams,
}

/// Builds the completion problem. Unobserved pixels of `y` are zeroed.
pub fn build_completion(
    y: &DenseVector,
    mask: &Mask,
    params: &CompletionParams,
) -> Result<CompletionProblem> {
    let (h, w) = y.dims2()?;
    if mask.shape() != y.shape() {
        return Err(LbsError::Dimension(format!(
            "mask shape {:?} does not match image shape {:?}",
            mask.shape(),
            y.shape()
        )));
    }
    if !(params.rho_fidelity > 0.0) {
        return Err(LbsError::Domain(format!(
            "rho_fidelity must be positive, got {}",
            params.rho_fidelity
        )));
    }
    let synth = HaarSynthesis::new(h, w, params.levels)?;
    let observed = mask.apply(y)?;
    let fidelity = CompletionFidelity {
        mask: mask.clone(),
        synth: synth.clone(),
        y: observed.clone(),
        inv_rho: 1.0 / params.rho_fidelity,
    };
    let template = BlockVector::single(DenseVector::zeros(&[h, w]));
    let normal = |v: &BlockVector| -> Result<BlockVector> {
        let img = mask.apply(&synth.forward(v.block(0))?)?;
        Ok(BlockVector::single(synth.adjoint(&img)?))
    };
    let lipschitz = estimate_lipschitz(normal, &template, 1.0 / params.rho_fidelity, params.seed)?;
    // An all-zero mask makes f vanish; any positive constant is then valid.
    let lipschitz = if lipschitz > 0.0 { lipschitz } else { 1.0 };
    let levels = params.levels;
    let problem = SplitProblem::new(
        Box::new(fidelity),
        vec![Box::new(LpPower::new(params.p)?)],
        Box::new(DiagonalMahalanobis::uniform(params.mu, 1)?),
        lipschitz,
    )?
    .with_readout(move |x| haar_idwt(x.block(0), levels));
    Ok(CompletionProblem {
        problem,
        observed,
        mask: mask.clone(),
        levels,
        params: params.clone(),
    })
}

impl CompletionProblem {
    pub fn split_problem(&self) -> &SplitProblem {
        &self.problem
    }

    pub fn observed(&self) -> &DenseVector {
        &self.observed
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn params(&self) -> &CompletionParams {
        &self.params
    }

    /// `α⁰ = Bᵀ(M⊙y)`.
    pub fn initial_point(&self) -> Result<BlockVector> {
        BlockVector::single(haar_dwt(&self.observed, self.levels)?).with_labels(vec!["alpha"])
    }

    /// `Bα`.
    pub fn image(&self, alpha: &BlockVector) -> Result<DenseVector> {
        self.problem.readout(alpha)
    }

    /// Lifts an image denoiser to coefficients: `α ↦ W D(Bα)`.
    pub fn lift_denoiser<D: ImageDenoiser>(&self, denoiser: D) -> CoefficientDenoiser<D> {
        CoefficientDenoiser {
            inner: denoiser,
            levels: self.levels,
        }
    }
}

/// `α ↦ W D(Bα)` for an image denoiser `D`.
pub struct CoefficientDenoiser<D> {
    inner: D,
    levels: usize,
}

impl<D: ImageDenoiser> DenoiserOp for CoefficientDenoiser<D> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn apply(&self, x: &BlockVector) -> Result<BlockVector> {
        let img = haar_idwt(x.block(0), self.levels)?;
        let den = self.inner.denoise(&img)?;
        img.check_same_shape(&den)?;
        let out = BlockVector::single(haar_dwt(&den, self.levels)?);
        match x.labels() {
            Some(l) => out.with_labels(l.to_vec()),
            None => Ok(out),
        }
    }

    fn metadata(&self) -> DenoiserMetadata {
        self.inner.metadata()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;
    use crate::splitting::{fbs_solve, SolverConfig};

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = SeededRng::new(1);
        let y = rng.uniform_vector(&[8, 8], 0.0, 1.0);
        let mask = Mask::random(&mut rng, &[8, 8], 0.4).unwrap();
        let cp = build_completion(&y, &mask, &CompletionParams::default()).unwrap();
        let p = cp.split_problem();
        for _ in 0..10 {
            let a = BlockVector::single(rng.uniform_vector(&[8, 8], -1.0, 1.0));
            let g = p.f_grad(&a).unwrap();
            for i in [0, 9, 27, 63] {
                let eps = 1e-5;
                let bump = |d: f64| {
                    let mut b = a.block(0).clone();
                    b.data_mut()[i] += d;
                    p.f_value(&BlockVector::single(b))
                };
                let fd = (bump(eps) - bump(-eps)) / (2.0 * eps);
                let an = g.block(0).data()[i];
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn lipschitz_of_full_mask_is_inverse_rho() {
        let y = DenseVector::zeros(&[16, 16]);
        let params = CompletionParams {
            rho_fidelity: 0.5,
            ..Default::default()
        };
        let cp = build_completion(&y, &Mask::all(&[16, 16]), &params).unwrap();
        let l = cp.split_problem().lipschitz() / crate::splitting::LIPSCHITZ_SAFETY;
        assert!((l - 2.0).abs() < 2e-3, "{l}");
    }

    #[test]
    fn empty_mask_gives_zero_gradient_and_zero_solution() {
        let mut rng = SeededRng::new(2);
        let y = rng.uniform_vector(&[8, 8], 0.0, 1.0);
        let mask = Mask::new(vec![false; 64], &[8, 8]).unwrap();
        let cp = build_completion(&y, &mask, &CompletionParams::default()).unwrap();
        assert_eq!(cp.observed().norm(), 0.0);
        let p = cp.split_problem();
        let a = BlockVector::single(rng.uniform_vector(&[8, 8], -1.0, 1.0));
        assert_eq!(p.f_grad(&a).unwrap().norm(), 0.0);
        let cfg = SolverConfig {
            rho: 0.5,
            max_iters: 200,
            ..Default::default()
        };
        let out = fbs_solve(p, &a, &cfg, None).unwrap();
        assert_eq!(out.solution.norm(), 0.0);
    }

    #[test]
    fn planted_sparse_code_recovered_with_full_mask() {
        let mut alpha = DenseVector::zeros(&[16, 16]);
        for (r, c, v) in [(0, 0, 4.0), (1, 3, -2.0), (9, 12, 1.5), (4, 6, 3.0)] {
            alpha.set(r, c, v);
        }
        let y = haar_idwt(&alpha, 2).unwrap();
        let params = CompletionParams {
            rho_fidelity: 0.01,
            p: 1.0,
            levels: 2,
            ..Default::default()
        };
        let cp = build_completion(&y, &Mask::all(&[16, 16]), &params).unwrap();
        let p = cp.split_problem();
        let cfg = SolverConfig {
            rho: 0.9 / p.lipschitz(),
            tol: 1e-12,
            max_iters: 5000,
            ..Default::default()
        };
        let out = fbs_solve(p, &cp.initial_point().unwrap(), &cfg, None).unwrap();
        // Soft thresholding at ρ_f shrinks each planted entry by exactly ρ_f.
        let rec = out.solution.block(0);
        for (a, b) in rec.data().iter().zip(alpha.data()) {
            let expected = b.signum() * (b.abs() - 0.01).max(0.0);
            assert!((a - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn lifted_identity_is_identity() {
        let y = DenseVector::filled(&[8, 8], 0.5);
        let cp = build_completion(&y, &Mask::all(&[8, 8]), &CompletionParams::default()).unwrap();
        let t = cp.lift_denoiser(crate::denoise::Identity);
        let a = BlockVector::single(SeededRng::new(3).uniform_vector(&[8, 8], -1.0, 1.0));
        assert!(t.apply(&a).unwrap().sub(&a).unwrap().norm() < 1e-12);
    }

    #[test]
    fn bad_inputs() {
        let y = DenseVector::zeros(&[8, 8]);
        assert!(build_completion(&y, &Mask::all(&[8, 4]), &CompletionParams::default()).is_err());
        let odd = DenseVector::zeros(&[6, 6]);
        assert!(build_completion(&odd, &Mask::all(&[6, 6]), &CompletionParams::default()).is_err());
    }
}
