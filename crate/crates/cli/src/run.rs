//! Instance construction, solver dispatch and the experiment commands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use lbs_core::apps::{
    build_completion, build_deblur, psnr, quality, read_image, read_mask, synthetic_image, write_image,
    CompletionParams, CompletionProblem, DeblurParams, DeblurProblem, Image, QualityReport,
};
use lbs_core::denoise::{Identity, Median3x3, WaveletShrink};
use lbs_core::linops::{convolve, ConvKernel, Mask};
use lbs_core::numerics::gaussian_noise;
use lbs_core::splitting::{admm_solve, drs_solve, fbs_solve, fista_solve};
use lbs_core::trace::fallback_fraction;
use lbs_core::{
    lbs_solve, BlockVector, DenoiserOp, DenseVector, ImageDenoiser, LbsConfig, ResidualConvNet,
    Schedule, SeededRng, SolveOutput, SolverConfig, SplitProblem,
};

use crate::config::{DenoiserKind, ExperimentConfig, SolverKind, Task};
use crate::error::{CliError, CliResult};
use crate::manifest::{ArtifactWriter, RunManifest, SolverMetrics};

/// Step size used when `solver.rho=auto`, as a fraction of `1/L`.
pub const AUTO_STEP_FRACTION: f64 = 0.95;

pub enum TaskProblem {
    Complete(CompletionProblem),
    Deblur(DeblurProblem),
}

/// A degraded observation in solver form, with its reference if known.
pub struct Instance {
    pub problem: TaskProblem,
    pub ground_truth: Option<DenseVector>,
}

impl Instance {
    pub fn split_problem(&self) -> &SplitProblem {
        match &self.problem {
            TaskProblem::Complete(p) => p.split_problem(),
            TaskProblem::Deblur(p) => p.split_problem(),
        }
    }

    pub fn observed(&self) -> &DenseVector {
        match &self.problem {
            TaskProblem::Complete(p) => p.observed(),
            TaskProblem::Deblur(p) => p.observed(),
        }
    }

    pub fn initial_point(&self) -> CliResult<BlockVector> {
        Ok(match &self.problem {
            TaskProblem::Complete(p) => p.initial_point()?,
            TaskProblem::Deblur(p) => p.initial_point()?,
        })
    }

    pub fn image(&self, x: &BlockVector) -> CliResult<DenseVector> {
        Ok(self.split_problem().readout(x)?)
    }

    /// Lifts an image denoiser to the task's block structure.
    pub fn lift(&self, denoiser: Box<dyn ImageDenoiser>) -> Box<dyn DenoiserOp> {
        match &self.problem {
            TaskProblem::Complete(p) => Box::new(p.lift_denoiser(denoiser)),
            TaskProblem::Deblur(p) => Box::new(p.lift_denoiser(denoiser)),
        }
    }
}

fn with_path(path: &Path, e: lbs_core::LbsError) -> CliError {
    match CliError::from(e) {
        CliError::Io(m) if !m.contains(&path.display().to_string()) => {
            CliError::Io(format!("{}: {m}", path.display()))
        }
        other => other,
    }
}

fn load_gray(path: &Path) -> CliResult<DenseVector> {
    Ok(read_image(path).map_err(|e| with_path(path, e))?.luminance())
}

fn load_kernel(cfg: &ExperimentConfig) -> CliResult<ConvKernel> {
    match &cfg.kernel {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            ConvKernel::parse(&text)
                .map_err(|e| CliError::Config(format!("kernel file {}: {e}", path.display())))
        }
        None => Ok(ConvKernel::box_blur(cfg.blur_size)?),
    }
}

/// Reads or synthesizes the observation. Synthetic instances draw the
/// image, mask and noise from labelled substreams of `seed`.
pub fn build_instance(cfg: &ExperimentConfig) -> CliResult<Instance> {
    let root = SeededRng::new(cfg.seed);
    let (observed, mut ground_truth) = match &cfg.input {
        Some(path) => (load_gray(path)?, None),
        None => {
            let gt = synthetic_image(cfg.size, cfg.size, cfg.seed);
            let obs = match cfg.task {
                Task::Complete => gt.clone(),
                Task::Deblur => {
                    let blurred = convolve(&load_kernel(cfg)?, &gt)?;
                    let noise = gaussian_noise(&mut root.substream("noise"), gt.shape(), cfg.noise_sigma)?;
                    blurred.add(&noise)?
                }
            };
            (obs, Some(gt))
        }
    };
    if let Some(path) = &cfg.ground_truth {
        ground_truth = Some(load_gray(path)?);
    }
    if let Some(gt) = &ground_truth {
        if gt.shape() != observed.shape() {
            return Err(CliError::Config(format!(
                "ground truth shape {:?} differs from input shape {:?}",
                gt.shape(),
                observed.shape()
            )));
        }
    }
    let problem = match cfg.task {
        Task::Complete => {
            let mask = match &cfg.mask {
                Some(path) => read_mask(path).map_err(|e| with_path(path, e))?,
                None => Mask::random(&mut root.substream("mask"), observed.shape(), cfg.mask_ratio)?,
            };
            let defaults = CompletionParams::default();
            let params = CompletionParams {
                rho_fidelity: cfg.rho_fidelity.unwrap_or(defaults.rho_fidelity),
                p: cfg.p,
                mu: cfg.mu.unwrap_or(defaults.mu),
                levels: cfg.levels,
                seed: cfg.seed,
            };
            TaskProblem::Complete(build_completion(&observed, &mask, &params)?)
        }
        Task::Deblur => {
            let defaults = DeblurParams::default();
            let params = DeblurParams {
                rho_fidelity: cfg.rho_fidelity.unwrap_or(defaults.rho_fidelity),
                eta: cfg.eta,
                p: cfg.p,
                mu_u: cfg.mu.unwrap_or(defaults.mu_u),
                mu_v: cfg.mu_v,
                seed: cfg.seed,
            };
            TaskProblem::Deblur(build_deblur(&observed, &load_kernel(cfg)?, &params)?)
        }
    };
    Ok(Instance {
        problem,
        ground_truth,
    })
}

pub fn build_denoiser(cfg: &ExperimentConfig) -> CliResult<Box<dyn ImageDenoiser>> {
    Ok(match cfg.denoiser {
        DenoiserKind::Identity => Box::new(Identity),
        DenoiserKind::Median => Box::new(Median3x3),
        DenoiserKind::Wavelet => Box::new(WaveletShrink {
            tau: cfg.tau,
            levels: 1,
        }),
        DenoiserKind::Net => {
            let path = cfg
                .weights
                .as_ref()
                .ok_or_else(|| CliError::Config("denoiser.kind=net needs denoiser.weights".into()))?;
            Box::new(ResidualConvNet::load(path).map_err(|e| with_path(path, e))?)
        }
    })
}

pub fn step_size(cfg: &ExperimentConfig, problem: &SplitProblem) -> f64 {
    cfg.rho.unwrap_or(AUTO_STEP_FRACTION / problem.lipschitz())
}

pub fn lbs_config(cfg: &ExperimentConfig, rho: f64) -> LbsConfig {
    LbsConfig {
        c: cfg.c_or_default(),
        lambda: Schedule::Constant(cfg.lambda),
        rho,
        gamma: Schedule::Constant(cfg.gamma),
        tol: cfg.tol,
        max_iters: cfg.max_iters,
        descent_check: cfg.descent_check,
        record_timing: cfg.timing,
        ..LbsConfig::default()
    }
}

/// Runs one solver with the stopping rule shared by all of them.
pub fn run_solver(
    instance: &Instance,
    kind: SolverKind,
    cfg: &ExperimentConfig,
    denoiser: Option<&dyn DenoiserOp>,
) -> CliResult<SolveOutput> {
    let problem = instance.split_problem();
    let x0 = instance.initial_point()?;
    let rho = step_size(cfg, problem);
    let gt = instance.ground_truth.as_ref();
    let sc = SolverConfig {
        rho,
        gamma: Schedule::Constant(cfg.gamma),
        max_iters: cfg.max_iters,
        tol: cfg.tol,
        record_timing: cfg.timing,
    };
    Ok(match kind {
        SolverKind::Lbs => {
            let t_d = denoiser.ok_or_else(|| CliError::Config("lbs needs a denoiser".into()))?;
            lbs_solve(problem, &x0, t_d, &lbs_config(cfg, rho), gt)?
        }
        SolverKind::Fbs => fbs_solve(problem, &x0, &sc, gt)?,
        SolverKind::Fista => fista_solve(problem, &x0, &sc, gt)?,
        SolverKind::Admm => admm_solve(problem, &x0, &sc, gt)?,
        SolverKind::Drs => drs_solve(problem, &x0, &sc, gt)?,
    })
}

fn quality_against(instance: &Instance, image: &DenseVector) -> CliResult<Option<QualityReport>> {
    instance
        .ground_truth
        .as_ref()
        .map(|gt| quality(image, gt))
        .transpose()
        .map_err(CliError::from)
}

fn metrics_for(
    instance: &Instance,
    kind: SolverKind,
    out: &SolveOutput,
    wall_ms: f64,
) -> CliResult<SolverMetrics> {
    let image = instance.image(&out.solution)?;
    let q = quality_against(instance, &image)?;
    let n = out.iterations();
    let fb = (kind == SolverKind::Lbs && n > 0).then(|| fallback_fraction(&out.trace, 0, n));
    Ok(SolverMetrics {
        solver: kind.to_string(),
        iterations: n,
        converged: out.converged(),
        final_psi: out.trace.final_psi(),
        psnr: q.map(|q| q.psnr),
        ssim: q.map(|q| q.ssim),
        fallback_fraction: fb,
        wall_ms,
    })
}

fn input_psnr(instance: &Instance) -> CliResult<Option<f64>> {
    instance
        .ground_truth
        .as_ref()
        .map(|gt| psnr(instance.observed(), gt, 1.0))
        .transpose()
        .map_err(CliError::from)
}

/// The result of one `complete`/`deblur` run.
pub struct RunResult {
    pub output: SolveOutput,
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
}

/// Builds the task instance, runs `cfg.solver` and writes the restored and
/// observed images, the trace CSV, a quality report and the manifest.
pub fn cmd_run(cfg: &ExperimentConfig, command: &str) -> CliResult<RunResult> {
    cfg.validate()?;
    let started = Instant::now();
    let instance = build_instance(cfg)?;
    let denoiser = match cfg.solver {
        SolverKind::Lbs => Some(instance.lift(build_denoiser(cfg)?)),
        _ => None,
    };
    let t = Instant::now();
    let output = run_solver(&instance, cfg.solver, cfg, denoiser.as_deref())?;
    let wall_ms = t.elapsed().as_secs_f64() * 1e3;
    let metrics = metrics_for(&instance, cfg.solver, &output, wall_ms)?;

    let mut w = ArtifactWriter::new(&cfg.output_dir)?;
    let restored = instance.image(&output.solution)?;
    let image_paths = vec![
        w.write_image("restored.pgm", &restored)?,
        w.write_image("observed.pgm", instance.observed())?,
    ];
    let trace_path = w.write_text("trace.csv", &output.trace.to_csv())?;
    let mut report = format!(
        "solver {}\niterations {}\nconverged {}\nfinal_psi {}\n",
        metrics.solver, metrics.iterations, metrics.converged, metrics.final_psi
    );
    let in_psnr = input_psnr(&instance)?;
    if let (Some(p), Some(s), Some(ip)) = (metrics.psnr, metrics.ssim, in_psnr) {
        report += &format!("input_psnr {ip}\npsnr {p}\nssim {s}\n");
    }
    if let Some(fb) = metrics.fallback_fraction {
        report += &format!("fallback_fraction {fb}\n");
    }
    w.write_text("quality.txt", &report)?;

    let manifest = RunManifest::new(command, cfg, started.elapsed().as_secs_f64())
        .with_input_psnr(in_psnr)
        .with_solver(metrics)
        .with_traces(vec![trace_path])
        .with_images(image_paths);
    let manifest_path = w.finish(manifest.clone())?;
    Ok(RunResult {
        output,
        manifest,
        manifest_path,
    })
}

/// One row of the comparison table.
pub struct CompareRow {
    pub metrics: SolverMetrics,
    pub output: SolveOutput,
}

/// Runs every solver in `compare.solvers` on one instance, sequentially,
/// with the same stopping rule, writing one trace per solver and a table.
pub fn cmd_compare(cfg: &ExperimentConfig) -> CliResult<(Vec<CompareRow>, RunManifest)> {
    cfg.validate()?;
    if cfg.compare_solvers.is_empty() {
        return Err(CliError::Config("compare.solvers is empty".into()));
    }
    let started = Instant::now();
    let instance = build_instance(cfg)?;
    let denoiser = if cfg.compare_solvers.contains(&SolverKind::Lbs) {
        Some(instance.lift(build_denoiser(cfg)?))
    } else {
        None
    };
    let mut w = ArtifactWriter::new(&cfg.output_dir)?;
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for &kind in &cfg.compare_solvers {
        let t = Instant::now();
        let output = run_solver(&instance, kind, cfg, denoiser.as_deref())?;
        let metrics = metrics_for(&instance, kind, &output, t.elapsed().as_secs_f64() * 1e3)?;
        traces.push(w.write_text(&format!("trace_{kind}.csv"), &output.trace.to_csv())?);
        rows.push(CompareRow { metrics, output });
    }
    let table = comparison_table(&rows);
    w.write_text("compare.csv", &table)?;
    let mut manifest = RunManifest::new("compare", cfg, 0.0)
        .with_input_psnr(input_psnr(&instance)?)
        .with_traces(traces);
    for r in &rows {
        manifest = manifest.with_solver(r.metrics.clone());
    }
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    w.finish(manifest.clone())?;
    Ok((rows, manifest))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.4}"))
}

pub fn comparison_table(rows: &[CompareRow]) -> String {
    let mut s = String::from("solver,iterations,converged,final_psi,psnr,ssim,wall_ms\n");
    for r in rows {
        let m = &r.metrics;
        s += &format!(
            "{},{},{},{:.10e},{},{},{:.1}\n",
            m.solver,
            m.iterations,
            m.converged,
            m.final_psi,
            fmt_opt(m.psnr),
            fmt_opt(m.ssim),
            m.wall_ms
        );
    }
    s
}

/// Writes a gray image; helper shared with the training command.
pub(crate) fn save_gray(path: &Path, image: &DenseVector) -> CliResult<()> {
    write_image(path, &Image::gray(image.clone()))
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
