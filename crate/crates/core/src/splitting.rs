//! Relaxed Krasnoselskii–Mann iteration and the classical splitting
//! baselines built on it: forward–backward (proximal gradient), FISTA,
//! Peaceman–Rachford, Douglas–Rachford and scaled ADMM.

use std::time::Instant;

use crate::error::{LbsError, Result};
use crate::linops::LinearMap;
use crate::numerics::{axpy, BlockVector, DenseVector, SeededRng};
use crate::problem::SplitProblem;
use crate::trace::{Branch, SolverTrace, TraceRow};

/// Per-iteration parameter sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Constant(f64),
    /// Explicit values; the last one repeats.
    Explicit(Vec<f64>),
}

impl Schedule {
    pub fn at(&self, t: usize) -> f64 {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::Explicit(vs) => *vs.get(t).or(vs.last()).unwrap_or(&f64::NAN),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Schedule::Constant(v) => vec![*v],
            Schedule::Explicit(vs) => vs.clone(),
        }
    }

    pub(crate) fn check(&self, what: &str, ok: impl Fn(f64) -> bool) -> Result<()> {
        let vals = self.values();
        if vals.is_empty() {
            return Err(LbsError::Domain(format!("{what} schedule is empty")));
        }
        if let Some(v) = vals.iter().find(|v| !ok(**v)) {
            return Err(LbsError::Domain(format!("{what} value {v} out of range")));
        }
        Ok(())
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(LbsError::Domain(format!(
            "relaxation gamma must lie in (0, 1], got {gamma}"
        )));
    }
    Ok(())
}

type OpFn<'a> = Box<dyn Fn(&BlockVector) -> Result<BlockVector> + 'a>;

/// A named map `T` on block vectors, iterated as `x ← (1−γ)x + γT(x)`.
pub struct FixedPointOperator<'a> {
    name: String,
    map: OpFn<'a>,
}

impl<'a> FixedPointOperator<'a> {
    pub fn new(
        name: impl Into<String>,
        map: impl Fn(&BlockVector) -> Result<BlockVector> + 'a,
    ) -> Self {
        Self {
            name: name.into(),
            map: Box::new(map),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn apply(&self, x: &BlockVector) -> Result<BlockVector> {
        (self.map)(x)
    }
}

/// `(1 − γ) x + γ T(x)`.
pub fn km_step(op: &FixedPointOperator<'_>, x: &BlockVector, gamma: f64) -> Result<BlockVector> {
    check_gamma(gamma)?;
    let tx = op.apply(x)?;
    if gamma == 1.0 {
        return Ok(tx);
    }
    x.zip_map(&tx, move |a, b| (1.0 - gamma) * a + gamma * b)
}

/// `x ↦ prox_{ρg}(x − ρ∇f(x))`.
pub fn fbs_operator<'a>(
    f_grad: impl Fn(&BlockVector) -> Result<BlockVector> + 'a,
    prox_g: impl Fn(&BlockVector, f64) -> Result<BlockVector> + 'a,
    rho: f64,
) -> Result<FixedPointOperator<'a>> {
    check_positive(rho, "step rho")?;
    Ok(FixedPointOperator::new("fbs", move |x: &BlockVector| {
        let forward = axpy(-rho, &f_grad(x)?, x)?;
        prox_g(&forward, rho)
    }))
}

/// `R_G ∘ R_F` with reflections `R = 2 prox − I`.
pub fn prs_operator<'a>(
    prox_f: impl Fn(&BlockVector, f64) -> Result<BlockVector> + 'a,
    prox_g: impl Fn(&BlockVector, f64) -> Result<BlockVector> + 'a,
    rho: f64,
) -> Result<FixedPointOperator<'a>> {
    check_positive(rho, "step rho")?;
    Ok(FixedPointOperator::new("prs", move |s: &BlockVector| {
        let rf = reflect(&prox_f(s, rho)?, s)?;
        reflect(&prox_g(&rf, rho)?, &rf)
    }))
}

/// Douglas–Rachford: the PRS operator averaged with the identity (`γ = ½`).
pub fn drs_operator<'a>(
    prox_f: impl Fn(&BlockVector, f64) -> Result<BlockVector> + 'a,
    prox_g: impl Fn(&BlockVector, f64) -> Result<BlockVector> + 'a,
    rho: f64,
) -> Result<FixedPointOperator<'a>> {
    let prs = prs_operator(prox_f, prox_g, rho)?;
    Ok(FixedPointOperator::new("drs", move |s: &BlockVector| {
        km_step(&prs, s, 0.5)
    }))
}

fn reflect(resolvent: &BlockVector, point: &BlockVector) -> Result<BlockVector> {
    resolvent.zip_map(point, |j, p| 2.0 * j - p)
}

fn check_positive(v: f64, what: &str) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(LbsError::Domain(format!("{what} must be positive, got {v}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rho: f64,
    pub gamma: Schedule,
    pub max_iters: usize,
    pub tol: f64,
    /// Fill the trace's `time_ms` column. Off by default so traces stay
    /// byte-reproducible.
    pub record_timing: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            gamma: Schedule::Constant(1.0),
            max_iters: 1000,
            tol: 1e-4,
            record_timing: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        check_positive(self.rho, "step rho")?;
        self.gamma.check("gamma", |g| g > 0.0 && g <= 1.0)?;
        check_positive(self.tol, "tolerance")?;
        Ok(())
    }

    /// `ρ < 1/L`: the hypothesis under which FBS steps descend.
    pub fn step_below_inverse_lipschitz(&self, lipschitz: f64) -> bool {
        self.rho * lipschitz < 1.0
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub solution: BlockVector,
    pub trace: SolverTrace,
}

impl SolveOutput {
    pub fn converged(&self) -> bool {
        self.trace.converged
    }

    pub fn iterations(&self) -> usize {
        self.trace.iterations()
    }
}

/// `‖x_new − x_old‖ / ‖x_old‖`, falling back to the absolute change when
/// `‖x_old‖ < 1e-12`.
pub fn relative_change(x_new: &BlockVector, x_old: &BlockVector) -> Result<f64> {
    let step = x_new.sub(x_old)?.norm();
    let base = x_old.norm();
    Ok(if base < 1e-12 { step } else { step / base })
}

/// Shared bookkeeping for building trace rows.
pub(crate) struct Recorder<'a> {
    problem: &'a SplitProblem,
    ground_truth: Option<&'a DenseVector>,
    start: Instant,
    timing: bool,
}

impl<'a> Recorder<'a> {
    pub(crate) fn new(
        problem: &'a SplitProblem,
        ground_truth: Option<&'a DenseVector>,
        timing: bool,
    ) -> Self {
        Self {
            problem,
            ground_truth,
            start: Instant::now(),
            timing,
        }
    }

    pub(crate) fn labels(x: &BlockVector) -> Vec<String> {
        (0..x.num_blocks()).map(|n| x.label(n)).collect()
    }

    /// Row for `x_old → x_new`, and the relative change used for stopping.
    pub(crate) fn row(
        &self,
        iter: usize,
        x_old: &BlockVector,
        x_new: &BlockVector,
        psi: f64,
        branch: Branch,
    ) -> Result<(TraceRow, f64)> {
        if !x_new.all_finite() || psi.is_nan() {
            return Err(LbsError::Numerical(format!(
                "non-finite iterate at iteration {iter}"
            )));
        }
        let diff = x_new.sub(x_old)?;
        let block_step_norm2: Vec<f64> = diff.blocks().iter().map(DenseVector::norm2).collect();
        let step_norm2 = diff.norm2();
        let rel = relative_change(x_new, x_old)?;
        let rec_error = match self.ground_truth {
            Some(gt) => {
                let est = self.problem.readout(x_new)?;
                let err = est.sub(gt)?.norm();
                let base = gt.norm();
                Some(if base > 0.0 { (err / base).log10() } else { err.log10() })
            }
            None => None,
        };
        let time_ms = self
            .timing
            .then(|| self.start.elapsed().as_secs_f64() * 1e3);
        Ok((
            TraceRow {
                iter,
                psi,
                step_norm2,
                block_step_norm2,
                branch,
                blocks: Vec::new(),
                iter_error: rel.log10(),
                rec_error,
                time_ms,
                extras: Vec::new(),
            },
            rel,
        ))
    }
}

/// Proximal gradient: KM iteration on the FBS operator.
pub fn fbs_solve(
    problem: &SplitProblem,
    x0: &BlockVector,
    config: &SolverConfig,
    ground_truth: Option<&DenseVector>,
) -> Result<SolveOutput> {
    config.validate()?;
    problem.check_point(x0)?;
    let op = fbs_operator(|x| problem.f_grad(x), |x, r| problem.prox_g(x, r), config.rho)?;
    let rec = Recorder::new(problem, ground_truth, config.record_timing);
    let mut trace = SolverTrace::new("fbs", Recorder::labels(x0), problem.objective(x0));
    let mut x = x0.clone();
    for t in 0..config.max_iters {
        let x_new = km_step(&op, &x, config.gamma.at(t))?;
        let psi = problem.objective(&x_new);
        let (row, rel) = rec.row(t + 1, &x, &x_new, psi, Branch::Model)?;
        trace.rows.push(row);
        x = x_new;
        if rel <= config.tol {
            trace.converged = true;
            break;
        }
    }
    Ok(SolveOutput { solution: x, trace })
}

/// FISTA with function-value restart: when an accelerated step raises `Ψ`,
/// momentum is reset and a plain FBS step is taken from the last iterate.
pub fn fista_solve(
    problem: &SplitProblem,
    x0: &BlockVector,
    config: &SolverConfig,
    ground_truth: Option<&DenseVector>,
) -> Result<SolveOutput> {
    config.validate()?;
    problem.check_point(x0)?;
    let op = fbs_operator(|x| problem.f_grad(x), |x, r| problem.prox_g(x, r), config.rho)?;
    let rec = Recorder::new(problem, ground_truth, config.record_timing);
    let mut trace = SolverTrace::new("fista", Recorder::labels(x0), problem.objective(x0));
    trace.extra_columns.push("restart".into());
    let mut x = x0.clone();
    let mut y = x0.clone();
    let mut theta = 1.0f64;
    let mut psi_prev = trace.initial_psi;
    for t in 0..config.max_iters {
        let mut x_new = op.apply(&y)?;
        let mut psi = problem.objective(&x_new);
        let restarted = psi > psi_prev;
        if restarted {
            theta = 1.0;
            x_new = op.apply(&x)?;
            psi = problem.objective(&x_new);
            y = x_new.clone();
        } else {
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let beta = (theta - 1.0) / theta_next;
            let momentum = x_new.sub(&x)?;
            y = axpy(beta, &momentum, &x_new)?;
            theta = theta_next;
        }
        let (mut row, rel) = rec.row(t + 1, &x, &x_new, psi, Branch::Model)?;
        row.extras.push(if restarted { 1.0 } else { 0.0 });
        trace.rows.push(row);
        x = x_new;
        psi_prev = psi;
        if rel <= config.tol {
            trace.converged = true;
            break;
        }
    }
    Ok(SolveOutput { solution: x, trace })
}

/// Relaxed Peaceman–Rachford on the governing sequence `s`; `gamma = ½`
/// gives Douglas–Rachford and `gamma = 1` plain PRS. Reported iterates are
/// `prox_{ρg}(R_F s)`, which coincide with `prox_{ρf}(s)` at a fixed point and
/// always lie in the domain of `g`.
pub fn drs_solve(
    problem: &SplitProblem,
    x0: &BlockVector,
    config: &SolverConfig,
    ground_truth: Option<&DenseVector>,
) -> Result<SolveOutput> {
    relaxed_prs_solve(problem, x0, config, ground_truth, "drs", Some(0.5))
}

pub fn prs_solve(
    problem: &SplitProblem,
    x0: &BlockVector,
    config: &SolverConfig,
    ground_truth: Option<&DenseVector>,
) -> Result<SolveOutput> {
    relaxed_prs_solve(problem, x0, config, ground_truth, "prs", Some(1.0))
}

fn relaxed_prs_solve(
    problem: &SplitProblem,
    x0: &BlockVector,
    config: &SolverConfig,
    ground_truth: Option<&DenseVector>,
    name: &str,
    fixed_gamma: Option<f64>,
) -> Result<SolveOutput> {
    config.validate()?;
    problem.check_point(x0)?;
    let rho = config.rho;
    let rec = Recorder::new(problem, ground_truth, config.record_timing);
    let mut trace = SolverTrace::new(name, Recorder::labels(x0), problem.objective(x0));
    let mut s = x0.clone();
    let mut x = x0.clone();
    for t in 0..config.max_iters {
        let gamma = fixed_gamma.unwrap_or_else(|| config.gamma.at(t));
        let xf = problem.prox_f(&s, rho)?;
        let rf = reflect(&xf, &s)?;
        let xg = problem.prox_g(&rf, rho)?;
        let rg = reflect(&xg, &rf)?;
        s = s.zip_map(&rg, move |a, b| (1.0 - gamma) * a + gamma * b)?;
        let psi = problem.objective(&xg);
        let (row, rel) = rec.row(t + 1, &x, &xg, psi, Branch::Model)?;
        trace.rows.push(row);
        x = xg;
        if rel <= config.tol {
            trace.converged = true;
            break;
        }
    }
    Ok(SolveOutput { solution: x, trace })
}

/// Scaled-form ADMM for `min f(x) + g(z)` subject to `x = z`:
/// `x ← prox_{ρf}(z − u)`, `z ← prox_{ρg}(x + u)`, `u ← u + x − z`.
/// Reported iterates are `z`; the trace carries the primal residual
/// `‖x − z‖` and dual residual `‖z − z_prev‖ / ρ` as extra columns.
pub fn admm_solve(
    problem: &SplitProblem,
    x0: &BlockVector,
    config: &SolverConfig,
    ground_truth: Option<&DenseVector>,
) -> Result<SolveOutput> {
    config.validate()?;
    problem.check_point(x0)?;
    let rho = config.rho;
    let rec = Recorder::new(problem, ground_truth, config.record_timing);
    let mut trace = SolverTrace::new("admm", Recorder::labels(x0), problem.objective(x0));
    trace.extra_columns = vec!["primal_res".into(), "dual_res".into()];
    let mut z = x0.clone();
    let mut u = x0.zeros_like();
    for t in 0..config.max_iters {
        let x = problem.prox_f(&z.sub(&u)?, rho)?;
        let z_new = problem.prox_g(&x.add(&u)?, rho)?;
        let primal = x.sub(&z_new)?;
        u = u.add(&primal)?;
        let psi = problem.objective(&z_new);
        let (mut row, rel) = rec.row(t + 1, &z, &z_new, psi, Branch::Model)?;
        row.extras = vec![primal.norm(), z_new.sub(&z)?.norm() / rho];
        trace.rows.push(row);
        z = z_new;
        if rel <= config.tol && primal.norm() <= config.tol * z.norm().max(1.0) {
            trace.converged = true;
            break;
        }
    }
    Ok(SolveOutput { solution: z, trace })
}

/// Safety factor applied on top of the power-iteration estimate.
pub const LIPSCHITZ_SAFETY: f64 = 1.05;
const POWER_TOL: f64 = 1e-6;
const POWER_MAX_ITERS: usize = 10_000;

/// Largest eigenvalue of a symmetric positive semidefinite operator by power
/// iteration from a seeded random start.
pub fn power_iteration(
    op: impl Fn(&BlockVector) -> Result<BlockVector>,
    template: &BlockVector,
    seed: u64,
) -> Result<f64> {
    let mut rng = SeededRng::new(seed).substream("power-iteration");
    let mut v = template.map_blocks(|_, b| rng.uniform_vector(b.shape(), -1.0, 1.0));
    let n0 = v.norm();
    v = v.scaled(1.0 / n0);
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let w = op(&v)?;
        let next = v.inner(&w)?;
        let nw = w.norm();
        if nw == 0.0 {
            return Ok(0.0);
        }
        if !nw.is_finite() {
            return Err(LbsError::Numerical("power iteration diverged".into()));
        }
        v = w.scaled(1.0 / nw);
        if (next - lambda).abs() <= POWER_TOL * next.abs() {
            return Ok(next.max(lambda));
        }
        lambda = next;
    }
    Err(LbsError::Numerical(format!(
        "power iteration did not reach relative tolerance {POWER_TOL} in {POWER_MAX_ITERS} iterations"
    )))
}

/// `1.05 · weight · λ_max(op)` where `∇f = weight · op(x) + const`.
pub fn estimate_lipschitz(
    normal_op: impl Fn(&BlockVector) -> Result<BlockVector>,
    template: &BlockVector,
    weight: f64,
    seed: u64,
) -> Result<f64> {
    Ok(LIPSCHITZ_SAFETY * weight * power_iteration(normal_op, template, seed)?)
}

/// [`estimate_lipschitz`] for `f = (weight/2)‖A x − b‖²`.
pub fn estimate_lipschitz_linear(map: &dyn LinearMap, weight: f64, seed: u64) -> Result<f64> {
    let template = BlockVector::single(DenseVector::zeros(map.in_shape()));
    estimate_lipschitz(
        |v| Ok(BlockVector::single(map.normal(v.block(0))?)),
        &template,
        weight,
        seed,
    )
}
