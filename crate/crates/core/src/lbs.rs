//! Learnable Bregman splitting: each outer iteration applies the learned
//! operator `T_d` once to the whole point, takes a Bregman-penalized gradient
//! step and then sweeps the blocks, accepting the learned candidate only when
//! it passes the relative optimality criterion and falling back to a plain
//! proximal-gradient step otherwise. A final per-block comparison against the
//! relaxed point keeps the objective monotone.

use crate::denoise::DenoiserOp;
use crate::error::{LbsError, Result};
use crate::numerics::{BlockVector, DenseVector};
use crate::problem::SplitProblem;
use crate::splitting::{check_gamma, relative_change, Recorder, Schedule, SolveOutput};
use crate::trace::{is_descent, BlockRecord, Branch, SolverTrace, UcusChoice};

#[derive(Debug, Clone, PartialEq)]
pub struct LbsConfig {
    /// Relative optimality constant `c`.
    pub c: f64,
    /// Bregman penalty weights `λ^t`.
    pub lambda: Schedule,
    /// Proximal step `ρ`.
    pub rho: f64,
    /// Relaxation `γ^t ∈ (0, 1]`.
    pub gamma: Schedule,
    pub tol: f64,
    pub max_iters: usize,
    /// Fail with [`LbsError::Descent`] when `Ψ` rises between iterations.
    pub descent_check: bool,
    /// Also reject learned candidates that would raise `ψ_n` above its value
    /// at the previous iterate.
    pub learned_descent_guard: bool,
    /// Gauss–Seidel sweep order; empty means `0, 1, …, N−1`.
    pub block_order: Vec<usize>,
    pub record_timing: bool,
}

impl Default for LbsConfig {
    fn default() -> Self {
        Self {
            c: 1e-3,
            lambda: Schedule::Constant(1.0),
            rho: 0.5,
            gamma: Schedule::Constant(1.0),
            tol: 1e-4,
            max_iters: 500,
            descent_check: true,
            learned_descent_guard: true,
            block_order: Vec::new(),
            record_timing: false,
        }
    }
}

impl LbsConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(self.c >= 0.0) || !self.c.is_finite() {
            return Err(LbsError::Domain(format!("ROC constant must be nonnegative, got {}", self.c)));
        }
        self.lambda.check("lambda", positive)?;
        if !positive(self.rho) {
            return Err(LbsError::Domain(format!("step rho must be positive, got {}", self.rho)));
        }
        self.gamma.check("gamma", |g| g > 0.0 && g <= 1.0)?;
        if !positive(self.tol) {
            return Err(LbsError::Domain(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    /// `c < μ/(2λ^t)` for every scheduled `λ^t` and `ρL < 1`.
    pub fn descent_hypotheses_hold(&self, problem: &SplitProblem) -> bool {
        let mu = problem.geometry().modulus();
        self.lambda.values().iter().all(|l| self.c < mu / (2.0 * l))
            && self.rho * problem.lipschitz() < 1.0
    }

    fn order(&self, blocks: usize) -> Result<Vec<usize>> {
        if self.block_order.is_empty() {
            return Ok((0..blocks).collect());
        }
        let mut seen = vec![false; blocks];
        for &n in &self.block_order {
            if n >= blocks || seen[n] {
                return Err(LbsError::Domain(format!(
                    "block order {:?} is not a permutation of 0..{blocks}",
                    self.block_order
                )));
            }
            seen[n] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(LbsError::Domain(format!(
                "block order {:?} misses blocks",
                self.block_order
            )));
        }
        Ok(self.block_order.clone())
    }
}

/// Sufficient-descent constant of the learned branch, `μ/(2λ) − c`.
pub fn learned_descent_constant(mu: f64, lambda: f64, c: f64) -> f64 {
    mu / (2.0 * lambda) - c
}

/// Sufficient-descent constant of the fallback branch, `1/(2ρ) − L/2`.
pub fn fallback_descent_constant(rho: f64, lipschitz: f64) -> f64 {
    0.5 / rho - 0.5 * lipschitz
}

/// `M = max{μ/(2λ) − c, 1/(2ρ) − L/2}`.
pub fn sufficient_descent_constant(mu: f64, lambda: f64, c: f64, rho: f64, lipschitz: f64) -> f64 {
    learned_descent_constant(mu, lambda, c).max(fallback_descent_constant(rho, lipschitz))
}

/// `f(x) + Σ g_n(x_n) + (1/λ) Δ_h(x, x_prev)`.
pub fn penalized_objective(
    problem: &SplitProblem,
    x: &BlockVector,
    x_prev: &BlockVector,
    lambda: f64,
) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(problem.objective(x) + problem.geometry().bregman(x, x_prev)? / lambda)
}

/// `x − ρ(∇f(x) + (1/λ)(∇h(x) − ∇h(anchor)))`.
pub fn t_f_step(
    problem: &SplitProblem,
    x: &BlockVector,
    anchor: &BlockVector,
    lambda: f64,
    rho: f64,
) -> Result<BlockVector> {
    check_lambda(lambda)?;
    let grad = problem.f_grad(x)?;
    let pull = problem.geometry().bregman_grad_x(x, anchor)?;
    let inv = 1.0 / lambda;
    let mut out = x.clone();
    let blocks: Vec<DenseVector> = (0..x.num_blocks())
        .map(|n| {
            let step = grad.block(n).zip_map(pull.block(n), |g, d| g + inv * d)?;
            let mut b = x.block(n).clone();
            b.axpy_in_place(-rho, &step)?;
            Ok(b)
        })
        .collect::<Result<_>>()?;
    for (n, b) in blocks.into_iter().enumerate() {
        out.set_block(n, b)?;
    }
    Ok(out)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) {
        return Err(LbsError::Domain(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

/// Outcome of the relative optimality criterion for one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocOutcome {
    pub satisfied: bool,
    /// `‖e_{u_n}‖`.
    pub error_norm: f64,
    /// `c ‖u_n − x_n^t‖`.
    pub threshold: f64,
}

/// Step parameters shared by the per-block operations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub lambda: f64,
    pub rho: f64,
    pub c: f64,
}

/// Checks `‖e‖ ≤ c‖u_n − x_n^t‖` with
/// `e = (z_n − u_n)/ρ + ∇_n f(point with u_n) + (1/λ)(∇h_n(u_n) − ∇h_n(x_n^t))`.
/// `point` holds the already updated blocks; its block `n` is ignored.
pub fn roc_check(
    problem: &SplitProblem,
    point: &BlockVector,
    n: usize,
    u_n: &DenseVector,
    z_n: &DenseVector,
    x_prev_n: &DenseVector,
    params: StepParams,
) -> Result<RocOutcome> {
    let mut probe = point.clone();
    probe.set_block(n, u_n.clone())?;
    let grad = problem.f_grad_block(&probe, n)?;
    let geom = problem.geometry();
    let pull = geom.grad_block(n, u_n).sub(&geom.grad_block(n, x_prev_n))?;
    let inv_rho = 1.0 / params.rho;
    let inv_lambda = 1.0 / params.lambda;
    let mut e = z_n.zip_map(u_n, |z, u| (z - u) * inv_rho)?;
    e.axpy_in_place(1.0, &grad)?;
    e.axpy_in_place(inv_lambda, &pull)?;
    let error_norm = e.norm();
    let threshold = params.c * u_n.sub(x_prev_n)?.norm();
    Ok(RocOutcome {
        satisfied: error_norm <= threshold,
        error_norm,
        threshold,
    })
}

/// Relaxed-vs-candidate comparison: `w = x_prev − γ(x_prev − v)` is kept
/// when `ψ_n(w) ≤ ψ_n(v)`, otherwise `v`. Returns the chosen block, which one
/// was chosen, and its `ψ_n` value.
pub fn ucus(
    problem: &SplitProblem,
    point: &BlockVector,
    n: usize,
    v_n: &DenseVector,
    x_prev_n: &DenseVector,
    gamma: f64,
) -> Result<(DenseVector, UcusChoice, f64)> {
    check_gamma(gamma)?;
    let psi_v = problem.block_objective(point, n, v_n)?;
    if gamma == 1.0 {
        return Ok((v_n.clone(), UcusChoice::Candidate, psi_v));
    }
    let w = x_prev_n.zip_map(v_n, |x, v| x - gamma * (x - v))?;
    let psi_w = problem.block_objective(point, n, &w)?;
    if psi_w <= psi_v {
        Ok((w, UcusChoice::Relaxed, psi_w))
    } else {
        Ok((v_n.clone(), UcusChoice::Candidate, psi_v))
    }
}

/// Model-based candidate `prox_{ρg_n}(x_n^t − ρ∇_n f(point))`, where `point`
/// carries `x_n^t` in block `n`.
fn fallback_candidate(
    problem: &SplitProblem,
    point: &BlockVector,
    n: usize,
    rho: f64,
) -> Result<DenseVector> {
    let mut y = point.block(n).clone();
    y.axpy_in_place(-rho, &problem.f_grad_block(point, n)?)?;
    problem.regularizer(n).prox(&y, rho)
}

/// Runs learnable Bregman splitting from `x0` with learned operator `t_d`
/// until the relative change drops to `tol` or `max_iters` is reached.
pub fn lbs_solve(
    problem: &SplitProblem,
    x0: &BlockVector,
    t_d: &dyn DenoiserOp,
    config: &LbsConfig,
    ground_truth: Option<&DenseVector>,
) -> Result<SolveOutput> {
    config.validate()?;
    problem.check_point(x0)?;
    let order = config.order(x0.num_blocks())?;
    let rec = Recorder::new(problem, ground_truth, config.record_timing);
    let mut trace = SolverTrace::new(
        format!("lbs[{}]", t_d.name()),
        Recorder::labels(x0),
        problem.objective(x0),
    );
    let mut x = x0.clone();
    let mut psi_prev = trace.initial_psi;
    for t in 0..config.max_iters {
        let params = StepParams {
            lambda: config.lambda.at(t),
            rho: config.rho,
            c: config.c,
        };
        let gamma = config.gamma.at(t);
        let d = t_d.apply(&x)?;
        d.check_structure(&x)?;
        if !d.all_finite() {
            return Err(LbsError::Numerical(format!(
                "learned operator {} returned non-finite values at iteration {}",
                t_d.name(),
                t + 1
            )));
        }
        let z = t_f_step(problem, &d, &x, params.lambda, params.rho)?;

        let mut point = x.clone();
        let mut records = vec![None; x.num_blocks()];
        for &n in &order {
            let x_n = x.block(n);
            let u = problem.regularizer(n).prox(z.block(n), params.rho)?;
            let roc = roc_check(problem, &point, n, &u, z.block(n), x_n, params)?;
            let psi_x = problem.block_objective(&point, n, x_n)?;
            let learned = roc.satisfied
                && (!config.learned_descent_guard
                    || problem.block_objective(&point, n, &u)? <= psi_x);
            let v = if learned {
                u
            } else {
                fallback_candidate(problem, &point, n, params.rho)?
            };
            let candidate_drop = psi_x - problem.block_objective(&point, n, &v)?;
            let candidate_step2 = v.sub(x_n)?.norm2();
            let (next, choice, _) = ucus(problem, &point, n, &v, x_n, gamma)?;
            point.set_block(n, next)?;
            records[n] = Some(BlockRecord {
                roc_satisfied: roc.satisfied,
                learned,
                roc_error: roc.error_norm,
                roc_threshold: roc.threshold,
                ucus: choice,
                candidate_step2,
                candidate_drop,
            });
        }
        let blocks: Vec<BlockRecord> = records.into_iter().map(|r| r.expect("every block swept")).collect();
        let branch = if blocks.iter().all(|b| b.learned) {
            Branch::Learned
        } else {
            Branch::Fallback
        };
        let psi = problem.objective(&point);
        let (mut row, rel) = rec.row(t + 1, &x, &point, psi, branch)?;
        row.blocks = blocks;
        trace.rows.push(row);
        if config.descent_check && !is_descent(psi_prev, psi) {
            return Err(LbsError::Descent {
                iter: t + 1,
                before: psi_prev,
                after: psi,
            });
        }
        psi_prev = psi;
        x = point;
        if rel <= config.tol {
            trace.converged = true;
            break;
        }
    }
    Ok(SolveOutput { solution: x, trace })
}

/// `‖x^{t+1} − x^t‖ / ‖x^t‖` for consecutive LBS iterates.
pub fn iteration_error(x_new: &BlockVector, x_old: &BlockVector) -> Result<f64> {
    relative_change(x_new, x_old)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bregman::DiagonalMahalanobis;
    use crate::denoise::{ConstantOp, Identity, NegationOp, NoiseOp, SignFlipOp};
    use crate::numerics::SeededRng;
    use crate::problem::{DiagonalQuadratic, SmoothFn};
    use crate::prox::{LpPower, ProxFn, Zero};
    use crate::splitting::{fbs_solve, SolverConfig};
    use crate::trace::trace_diagnostics;

    fn scalar(v: f64) -> BlockVector {
        BlockVector::single(DenseVector::from_vec(vec![v]))
    }

    fn diag_problem(
        curv: Vec<f64>,
        center: Vec<f64>,
        reg: Box<dyn ProxFn>,
        mu: f64,
    ) -> SplitProblem {
        let lip = curv.iter().copied().fold(0.0, f64::max);
        let q = DiagonalQuadratic::new(
            BlockVector::single(DenseVector::from_vec(curv)),
            BlockVector::single(DenseVector::from_vec(center)),
        )
        .unwrap();
        SplitProblem::new(
            Box::new(q),
            vec![reg],
            Box::new(DiagonalMahalanobis::uniform(mu, 1).unwrap()),
            lip,
        )
        .unwrap()
    }

    /// Two coupled blocks: `f(a, b) = ½‖a − b‖² + ½‖a − s‖² + ½‖b − r‖²`.
    struct Coupled {
        s: DenseVector,
        r: DenseVector,
    }

    impl SmoothFn for Coupled {
        fn value(&self, x: &BlockVector) -> f64 {
            let (a, b) = (x.block(0), x.block(1));
            0.5 * (a.sub(b).unwrap().norm2()
                + a.sub(&self.s).unwrap().norm2()
                + b.sub(&self.r).unwrap().norm2())
        }
        fn grad_block(&self, x: &BlockVector, n: usize) -> Result<DenseVector> {
            let (a, b) = (x.block(0), x.block(1));
            if n == 0 {
                a.sub(b)?.add(&a.sub(&self.s)?)
            } else {
                b.sub(a)?.add(&b.sub(&self.r)?)
            }
        }
    }

    fn coupled_problem(p: f64, seed: u64) -> SplitProblem {
        let mut rng = SeededRng::new(seed);
        let f = Coupled {
            s: rng.uniform_vector(&[12], -2.0, 2.0),
            r: rng.uniform_vector(&[12], -2.0, 2.0),
        };
        SplitProblem::new(
            Box::new(f),
            vec![
                Box::new(LpPower::new(p).unwrap().with_weight(0.3).unwrap()),
                Box::new(LpPower::new(p).unwrap().with_weight(0.1).unwrap()),
            ],
            Box::new(DiagonalMahalanobis::new(vec![0.5, 0.4]).unwrap()),
            3.0,
        )
        .unwrap()
    }

    #[test]
    fn penalized_objective_examples() {
        let p = diag_problem(vec![2.0, 1.0], vec![1.0, -1.0], Box::new(Zero), 0.5);
        let x = BlockVector::single(DenseVector::from_vec(vec![0.3, 0.7]));
        let y = BlockVector::single(DenseVector::from_vec(vec![-0.2, 0.1]));
        assert_eq!(penalized_objective(&p, &x, &x, 0.7).unwrap(), p.objective(&x));
        // Hand-expanded: ½·2·0.7² + ½·1·1.7² + (1/λ)·½·0.5·(0.5² + 0.6²)
        let lambda = 0.8;
        let expected = 0.49 + 1.445 + (0.25 * 0.61) / lambda;
        assert!((penalized_objective(&p, &x, &y, lambda).unwrap() - expected).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for l in [0.1, 1.0, 10.0, 1e3] {
            let v = penalized_objective(&p, &x, &y, l).unwrap();
            assert!(v < prev && v > p.objective(&x));
            prev = v;
        }
        assert!(penalized_objective(&p, &x, &y, 0.0).is_err());
    }

    #[test]
    fn t_f_step_examples() {
        let half = diag_problem(vec![1.0; 3], vec![0.0; 3], Box::new(Zero), 1.0);
        let x = BlockVector::single(DenseVector::from_vec(vec![1.0, -2.0, 4.0]));
        let out = t_f_step(&half, &x, &x, 1.0, 0.1).unwrap();
        for (o, v) in out.block(0).data().iter().zip(x.block(0).data()) {
            assert!((o - 0.9 * v).abs() < 1e-15);
        }
        // The pull toward the anchor: anchor 0 adds ρ/λ·μ·x.
        let zero = x.zeros_like();
        let out = t_f_step(&half, &x, &zero, 1.0, 0.1).unwrap();
        for (o, v) in out.block(0).data().iter().zip(x.block(0).data()) {
            assert!((o - 0.8 * v).abs() < 1e-15);
        }
        let stationary = diag_problem(vec![1.0; 3], vec![1.0, -2.0, 4.0], Box::new(Zero), 1.0);
        assert_eq!(t_f_step(&stationary, &x, &x, 1.0, 0.3).unwrap(), x);
    }

    #[test]
    fn roc_examples() {
        let p = diag_problem(vec![1.0], vec![0.0], Box::new(Zero), 1.0);
        let params = StepParams {
            lambda: 1.0,
            rho: 0.5,
            c: 0.1,
        };
        let zero = DenseVector::from_vec(vec![0.0]);
        let pt = scalar(0.0);
        let out = roc_check(&p, &pt, 0, &zero, &zero, &zero, params).unwrap();
        assert!(out.satisfied && out.error_norm == 0.0);

        let one = DenseVector::from_vec(vec![1.0]);
        let zero_c = StepParams { c: 0.0, ..params };
        let out = roc_check(&p, &pt, 0, &one, &one, &zero, zero_c).unwrap();
        assert!(!out.satisfied && out.error_norm > 0.0);
    }

    #[test]
    fn roc_holds_at_exact_penalized_minimizer() {
        // f = ½d(x − a)², h = ½μx², g = weight·|x|. The minimizer of
        // f + g + (1/λ)Δ_h(·, x_prev) is u = soft(d a + (μ/λ) x_prev, w) / (d + μ/λ).
        let (d, a, mu, lambda, w, rho) = (2.0, 1.5, 0.4, 0.8, 0.3, 0.25);
        let x_prev = -0.7;
        let p = diag_problem(
            vec![d],
            vec![a],
            Box::new(LpPower::new(1.0).unwrap().with_weight(w).unwrap()),
            mu,
        );
        let k = mu / lambda;
        let s = d * a + k * x_prev;
        let u = s.signum() * (s.abs() - w).max(0.0) / (d + k);
        // prox_{ρg}(u + ρ·w·sign(u)) = u, and stationarity of u makes e vanish.
        let z = u + rho * w * u.signum();
        let params = StepParams { lambda, rho, c: 0.0 };
        let un = DenseVector::from_vec(vec![u]);
        let back = p.regularizer(0).prox(&DenseVector::from_vec(vec![z]), rho).unwrap();
        assert!((back.data()[0] - u).abs() < 1e-15);
        let out = roc_check(
            &p,
            &scalar(x_prev),
            0,
            &un,
            &DenseVector::from_vec(vec![z]),
            &DenseVector::from_vec(vec![x_prev]),
            params,
        )
        .unwrap();
        assert!(out.error_norm < 1e-12, "{}", out.error_norm);
        let c_any = StepParams { c: 1e-6, ..params };
        let out = roc_check(
            &p,
            &scalar(x_prev),
            0,
            &un,
            &DenseVector::from_vec(vec![z]),
            &DenseVector::from_vec(vec![x_prev]),
            c_any,
        )
        .unwrap();
        assert!(out.satisfied);
    }

    /// `ψ(x) = bump near 0.5 on top of a smooth bowl`, a 1-D nonconvex smooth
    /// function used to exercise the comparison step.
    struct Bump;

    impl SmoothFn for Bump {
        fn value(&self, x: &BlockVector) -> f64 {
            let t = x.block(0).data()[0];
            0.1 * t * t + 5.0 * (-(t - 0.5) * (t - 0.5) / 0.01).exp()
        }
        fn grad_block(&self, x: &BlockVector, _: usize) -> Result<DenseVector> {
            let t = x.block(0).data()[0];
            let g = 0.2 * t - 5.0 * 2.0 * (t - 0.5) / 0.01 * (-(t - 0.5) * (t - 0.5) / 0.01).exp();
            Ok(DenseVector::from_vec(vec![g]))
        }
    }

    #[test]
    fn ucus_examples() {
        let p = SplitProblem::new(
            Box::new(Bump),
            vec![Box::new(Zero)],
            Box::new(DiagonalMahalanobis::uniform(1.0, 1).unwrap()),
            1.0,
        )
        .unwrap();
        let x_prev = DenseVector::from_vec(vec![0.0]);
        let v = DenseVector::from_vec(vec![1.0]);
        let pt = scalar(0.0);
        let (out, choice, _) = ucus(&p, &pt, 0, &v, &x_prev, 1.0).unwrap();
        assert_eq!((out, choice), (v.clone(), UcusChoice::Candidate));
        // Midpoint sits on the bump, so the candidate wins.
        let (out, choice, _) = ucus(&p, &pt, 0, &v, &x_prev, 0.5).unwrap();
        assert_eq!((out, choice), (v.clone(), UcusChoice::Candidate));
        // Away from the bump the relaxed point is lower.
        let (out, choice, psi) = ucus(&p, &pt, 0, &v, &x_prev, 0.05).unwrap();
        assert_eq!(choice, UcusChoice::Relaxed);
        assert!((out.data()[0] - 0.05).abs() < 1e-15);
        assert!(psi <= p.block_objective(&pt, 0, &v).unwrap());
        assert!(ucus(&p, &pt, 0, &v, &x_prev, 0.0).is_err());

        let convex = diag_problem(vec![1.0], vec![0.3], Box::new(Zero), 1.0);
        let mut rng = SeededRng::new(1);
        for _ in 0..100 {
            let xp = DenseVector::from_vec(vec![rng.uniform_range(-2.0, 2.0)]);
            let vv = DenseVector::from_vec(vec![rng.uniform_range(-2.0, 2.0)]);
            let g = rng.uniform_range(0.01, 1.0);
            let (_, _, psi) = ucus(&convex, &scalar(0.0), 0, &vv, &xp, g).unwrap();
            assert!(psi <= convex.block_objective(&scalar(0.0), 0, &vv).unwrap());
        }
    }

    #[test]
    fn constants_example() {
        assert_eq!(learned_descent_constant(0.01, 1.0, 0.001), 0.004);
        assert_eq!(fallback_descent_constant(0.5, 1.0), 0.5);
        assert_eq!(sufficient_descent_constant(0.01, 1.0, 0.001, 0.5, 1.0), 0.5);
    }

    #[test]
    fn identity_lbs_matches_lasso_and_fbs() {
        let p = diag_problem(
            vec![1.0, 2.0, 0.5, 1.5],
            vec![3.0, -0.2, -4.0, 0.9],
            Box::new(LpPower::new(1.0).unwrap()),
            0.8,
        );
        let x0 = BlockVector::single(DenseVector::zeros(&[4]));
        let cfg = LbsConfig {
            rho: 0.45,
            c: 0.1,
            tol: 1e-13,
            max_iters: 2000,
            ..Default::default()
        };
        let out = lbs_solve(&p, &x0, &Identity, &cfg, None).unwrap();
        let expected = [2.0, 0.0, -2.0, 0.9 - 1.0 / 1.5];
        for (x, e) in out.solution.block(0).data().iter().zip(expected) {
            assert!((x - e).abs() < 1e-6, "{x} vs {e}");
        }
        let fbs = fbs_solve(
            &p,
            &x0,
            &SolverConfig {
                rho: 0.45,
                tol: 1e-13,
                max_iters: 2000,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        assert!(out.solution.sub(&fbs.solution).unwrap().norm() < 1e-5);
        assert!(trace_diagnostics(&out.trace).is_monotone());
    }

    fn pathological() -> Vec<Box<dyn DenoiserOp>> {
        vec![
            Box::new(Identity),
            Box::new(NegationOp),
            Box::new(ConstantOp(3.0)),
            Box::new(NoiseOp {
                amplitude: 50.0,
                seed: 7,
            }),
            Box::new(SignFlipOp { seed: 8 }),
        ]
    }

    #[test]
    fn safeguard_keeps_descent_for_pathological_operators() {
        for p_exp in [1.0, 0.8, 0.5] {
            let problem = coupled_problem(p_exp, 3);
            let x0 = BlockVector::new(vec![DenseVector::filled(&[12], 1.0); 2]).unwrap();
            for gamma in [1.0, 0.5] {
                for t_d in pathological() {
                    let cfg = LbsConfig {
                        rho: 0.3,
                        c: 0.2,
                        gamma: Schedule::Constant(gamma),
                        max_iters: 300,
                        tol: 1e-10,
                        ..Default::default()
                    };
                    let out = lbs_solve(&problem, &x0, t_d.as_ref(), &cfg, None)
                        .unwrap_or_else(|e| panic!("{} p={p_exp}: {e}", t_d.name()));
                    let diag = trace_diagnostics(&out.trace);
                    assert!(diag.is_monotone(), "{}", t_d.name());
                    assert!(diag.last_decade_mean < diag.first_decade_mean, "{}", t_d.name());
                }
            }
        }
    }

    #[test]
    fn noise_operator_always_falls_back_and_converges() {
        let problem = coupled_problem(0.8, 4);
        let x0 = BlockVector::new(vec![DenseVector::filled(&[12], 0.5); 2]).unwrap();
        let cfg = LbsConfig {
            rho: 0.3,
            c: 0.2,
            max_iters: 1000,
            tol: 1e-8,
            ..Default::default()
        };
        let noise = NoiseOp {
            amplitude: 50.0,
            seed: 1,
        };
        let out = lbs_solve(&problem, &x0, &noise, &cfg, None).unwrap();
        assert!(out.converged());
        let diag = trace_diagnostics(&out.trace);
        assert!(diag.is_monotone());
        let total = out.iterations() * 2;
        assert!(diag.fallback_count as f64 >= 0.95 * total as f64);
    }

    #[test]
    fn fallback_candidates_show_sufficient_descent() {
        let problem = coupled_problem(0.8, 5);
        let x0 = BlockVector::new(vec![DenseVector::filled(&[12], 2.0); 2]).unwrap();
        let cfg = LbsConfig {
            rho: 0.3,
            c: 0.2,
            max_iters: 200,
            tol: 1e-12,
            ..Default::default()
        };
        let out = lbs_solve(&problem, &x0, &NegationOp, &cfg, None).unwrap();
        let m = fallback_descent_constant(cfg.rho, problem.lipschitz());
        for row in &out.trace.rows {
            for b in row.blocks.iter().filter(|b| !b.learned) {
                assert!(b.candidate_drop >= m * b.candidate_step2 - 1e-12);
            }
        }
    }

    #[test]
    fn descent_check_reports_iteration() {
        // An unguarded run whose learned candidate jumps uphill.
        let p = diag_problem(vec![1.0], vec![0.0], Box::new(Zero), 1.0);
        let cfg = LbsConfig {
            rho: 0.2,
            c: 1e6,
            learned_descent_guard: false,
            ..Default::default()
        };
        let err = lbs_solve(&p, &scalar(1.0), &ConstantOp(40.0), &cfg, None).unwrap_err();
        assert!(matches!(err, LbsError::Descent { iter: 1, .. }), "{err}");
        let off = LbsConfig {
            descent_check: false,
            max_iters: 3,
            ..cfg
        };
        assert!(lbs_solve(&p, &scalar(1.0), &ConstantOp(40.0), &off, None).is_ok());
    }

    #[test]
    fn config_validation() {
        let p = diag_problem(vec![1.0], vec![0.0], Box::new(Zero), 1.0);
        let bad = [
            LbsConfig { c: -1.0, ..Default::default() },
            LbsConfig { rho: 0.0, ..Default::default() },
            LbsConfig { lambda: Schedule::Constant(0.0), ..Default::default() },
            LbsConfig { gamma: Schedule::Explicit(vec![1.0, 1.2]), ..Default::default() },
            LbsConfig { block_order: vec![1], ..Default::default() },
        ];
        for cfg in bad {
            assert!(lbs_solve(&p, &scalar(0.0), &Identity, &cfg, None).is_err(), "{cfg:?}");
        }
        let cfg = LbsConfig {
            c: 0.1,
            rho: 0.5,
            ..Default::default()
        };
        assert!(cfg.descent_hypotheses_hold(&p));
        assert!(!LbsConfig { c: 0.6, ..cfg }.descent_hypotheses_hold(&p));
    }

    #[test]
    fn trace_is_deterministic() {
        let problem = coupled_problem(0.8, 6);
        let x0 = BlockVector::new(vec![DenseVector::filled(&[12], 1.0); 2]).unwrap();
        let cfg = LbsConfig {
            rho: 0.3,
            c: 0.2,
            max_iters: 50,
            ..Default::default()
        };
        let t_d = NoiseOp { amplitude: 1.0, seed: 3 };
        let a = lbs_solve(&problem, &x0, &t_d, &cfg, None).unwrap();
        let b = lbs_solve(&problem, &x0, &t_d, &cfg, None).unwrap();
        assert_eq!(a.trace.to_csv(), b.trace.to_csv());
    }
}
