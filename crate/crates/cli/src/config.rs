//! Flat `key=value` experiment configuration with dotted sections.
//!
//! Every key has a default, so a config file only lists what it changes.
//! `to_text` writes every key; parsing that text gives back the same config.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Complete,
    Deblur,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Lbs,
    Fbs,
    Fista,
    Admm,
    Drs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenoiserKind {
    Identity,
    Median,
    Wavelet,
    Net,
}

macro_rules! keyword_enum {
    ($ty:ty, $what:literal, { $($var:path => $s:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($var => $s),+ }
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($s => Ok($var),)+
                    _ => Err(format!(
                        "unknown {} '{}' (expected one of: {})",
                        $what, s, [$($s),+].join(", ")
                    )),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

keyword_enum!(Task, "task", { Task::Complete => "complete", Task::Deblur => "deblur" });
keyword_enum!(SolverKind, "solver", {
    SolverKind::Lbs => "lbs",
    SolverKind::Fbs => "fbs",
    SolverKind::Fista => "fista",
    SolverKind::Admm => "admm",
    SolverKind::Drs => "drs",
});
keyword_enum!(DenoiserKind, "denoiser", {
    DenoiserKind::Identity => "identity",
    DenoiserKind::Median => "median",
    DenoiserKind::Wavelet => "wavelet",
    DenoiserKind::Net => "net",
});

/// Everything needed to reproduce one run.
///
/// `None` numeric fields mean "task default" and print as `auto`; `None`
/// paths print as an empty value.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub seed: u64,
    pub output_dir: PathBuf,

    /// Observed image. Without it a synthetic instance is generated from
    /// the seed and degraded in-process.
    pub input: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub kernel: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub mask_ratio: f64,
    pub size: usize,
    pub blur_size: usize,
    pub noise_sigma: f64,

    pub solver: SolverKind,
    pub c: Option<f64>,
    pub lambda: f64,
    /// Defaults to `0.95 / L`.
    pub rho: Option<f64>,
    pub gamma: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub descent_check: bool,
    pub timing: bool,

    pub rho_fidelity: Option<f64>,
    pub eta: f64,
    pub p: f64,
    pub mu: Option<f64>,
    pub mu_v: f64,
    pub levels: usize,

    pub denoiser: DenoiserKind,
    pub weights: Option<PathBuf>,
    pub tau: f64,

    pub compare_solvers: Vec<SolverKind>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::Complete,
            seed: 0,
            output_dir: PathBuf::from("lbs-out"),
            input: None,
            mask: None,
            kernel: None,
            ground_truth: None,
            mask_ratio: 0.4,
            size: 64,
            blur_size: 9,
            noise_sigma: 0.01,
            solver: SolverKind::Lbs,
            c: None,
            lambda: 1.0,
            rho: None,
            gamma: 1.0,
            tol: 1e-4,
            max_iters: 2000,
            descent_check: true,
            timing: false,
            rho_fidelity: None,
            eta: 0.05,
            p: 0.8,
            mu: None,
            mu_v: 0.001,
            levels: 3,
            denoiser: DenoiserKind::Wavelet,
            weights: None,
            tau: 0.05,
            compare_solvers: vec![SolverKind::Lbs, SolverKind::Fbs, SolverKind::Fista],
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> CliResult<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("{key}: cannot parse '{value}': {e}")))
}

fn parse_auto(key: &str, value: &str) -> CliResult<Option<f64>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn parse_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn parse_keyword<T: FromStr<Err = String>>(key: &str, value: &str) -> CliResult<T> {
    value.parse().map_err(|e| CliError::Config(format!("{key}: {e}")))
}

fn show_auto(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(String::new, |p| p.display().to_string())
}

impl ExperimentConfig {
    /// Every recognized key, in the order `to_text` writes them.
    pub fn keys() -> Vec<&'static str> {
        Self::default().entries().into_iter().map(|(k, _)| k).collect()
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("task", self.task.to_string()),
            ("seed", self.seed.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("data.input", show_path(&self.input)),
            ("data.mask", show_path(&self.mask)),
            ("data.kernel", show_path(&self.kernel)),
            ("data.ground_truth", show_path(&self.ground_truth)),
            ("data.mask_ratio", self.mask_ratio.to_string()),
            ("data.size", self.size.to_string()),
            ("data.blur_size", self.blur_size.to_string()),
            ("data.noise_sigma", self.noise_sigma.to_string()),
            ("solver.name", self.solver.to_string()),
            ("solver.c", show_auto(self.c)),
            ("solver.lambda", self.lambda.to_string()),
            ("solver.rho", show_auto(self.rho)),
            ("solver.gamma", self.gamma.to_string()),
            ("solver.tol", self.tol.to_string()),
            ("solver.max_iters", self.max_iters.to_string()),
            ("solver.descent_check", self.descent_check.to_string()),
            ("solver.timing", self.timing.to_string()),
            ("model.rho_fidelity", show_auto(self.rho_fidelity)),
            ("model.eta", self.eta.to_string()),
            ("model.p", self.p.to_string()),
            ("model.mu", show_auto(self.mu)),
            ("model.mu_v", self.mu_v.to_string()),
            ("model.levels", self.levels.to_string()),
            ("denoiser.kind", self.denoiser.to_string()),
            ("denoiser.weights", show_path(&self.weights)),
            ("denoiser.tau", self.tau.to_string()),
            (
                "compare.solvers",
                self.compare_solvers
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
        ]
    }

    /// Sets one key. Unknown keys are rejected by name.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let value = value.trim();
        match key {
            "task" => self.task = parse_keyword(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "data.input" => self.input = parse_path(value),
            "data.mask" => self.mask = parse_path(value),
            "data.kernel" => self.kernel = parse_path(value),
            "data.ground_truth" => self.ground_truth = parse_path(value),
            "data.mask_ratio" => self.mask_ratio = parse_num(key, value)?,
            "data.size" => self.size = parse_num(key, value)?,
            "data.blur_size" => self.blur_size = parse_num(key, value)?,
            "data.noise_sigma" => self.noise_sigma = parse_num(key, value)?,
            "solver.name" => self.solver = parse_keyword(key, value)?,
            "solver.c" => self.c = parse_auto(key, value)?,
            "solver.lambda" => self.lambda = parse_num(key, value)?,
            "solver.rho" => self.rho = parse_auto(key, value)?,
            "solver.gamma" => self.gamma = parse_num(key, value)?,
            "solver.tol" => self.tol = parse_num(key, value)?,
            "solver.max_iters" => self.max_iters = parse_num(key, value)?,
            "solver.descent_check" => self.descent_check = parse_num(key, value)?,
            "solver.timing" => self.timing = parse_num(key, value)?,
            "model.rho_fidelity" => self.rho_fidelity = parse_auto(key, value)?,
            "model.eta" => self.eta = parse_num(key, value)?,
            "model.p" => self.p = parse_num(key, value)?,
            "model.mu" => self.mu = parse_auto(key, value)?,
            "model.mu_v" => self.mu_v = parse_num(key, value)?,
            "model.levels" => self.levels = parse_num(key, value)?,
            "denoiser.kind" => self.denoiser = parse_keyword(key, value)?,
            "denoiser.weights" => self.weights = parse_path(value),
            "denoiser.tau" => self.tau = parse_num(key, value)?,
            "compare.solvers" => {
                self.compare_solvers = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_keyword(key, s))
                    .collect::<CliResult<_>>()?
            }
            _ => {
                return Err(CliError::Config(format!(
                    "unknown config key '{key}' (known keys: {})",
                    Self::keys().join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies `key=value` lines on top of the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected key=value, got '{line}'", lineno + 1))
            })?;
            self.set(key.trim(), value).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("line {}: {m}", lineno + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Range checks that do not depend on the instance.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return bad(format!("data.mask_ratio must lie in [0, 1], got {}", self.mask_ratio));
        }
        if self.size == 0 || self.blur_size == 0 {
            return bad("data.size and data.blur_size must be positive".into());
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(format!("data.noise_sigma must be nonnegative, got {}", self.noise_sigma));
        }
        for (k, v) in [
            ("solver.lambda", Some(self.lambda)),
            ("solver.tol", Some(self.tol)),
            ("solver.rho", self.rho),
            ("model.rho_fidelity", self.rho_fidelity),
            ("model.eta", Some(self.eta)),
            ("model.mu", self.mu),
            ("model.mu_v", Some(self.mu_v)),
            ("denoiser.tau", Some(self.tau)),
        ] {
            if let Some(v) = v {
                if !pos(v) {
                    return bad(format!("{k} must be positive, got {v}"));
                }
            }
        }
        if let Some(c) = self.c {
            if !(c >= 0.0) || !c.is_finite() {
                return bad(format!("solver.c must be nonnegative, got {c}"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("solver.gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad(format!("model.p must lie in (0, 1], got {}", self.p));
        }
        if self.max_iters == 0 {
            return bad("solver.max_iters must be positive".into());
        }
        if self.denoiser == DenoiserKind::Net && self.weights.is_none() {
            return bad("denoiser.kind=net needs denoiser.weights".into());
        }
        Ok(())
    }

    pub fn c_or_default(&self) -> f64 {
        self.c.unwrap_or(match self.task {
            Task::Complete => 50.0,
            Task::Deblur => 500.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn comments_blank_lines_and_spaces() {
        let cfg = ExperimentConfig::parse(
            "# header\n\n task = deblur \nsolver.rho=0.25 # inline\ndata.input=\n",
        )
        .unwrap();
        assert_eq!(cfg.task, Task::Deblur);
        assert_eq!(cfg.rho, Some(0.25));
        assert_eq!(cfg.input, None);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::parse("solver.rh0=0.5").unwrap_err();
        assert!(matches!(err, CliError::Config(ref m) if m.contains("'solver.rh0'") && m.contains("line 1")));
    }

    #[test]
    fn bad_values_are_config_errors() {
        for line in ["task=inpaint", "solver.max_iters=-3", "solver.c=abc", "compare.solvers=lbs,foo", "no equals"] {
            let err = ExperimentConfig::parse(line).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{line}");
        }
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig {
            denoiser: DenoiserKind::Net,
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.weights = Some("w.bin".into());
        cfg.validate().unwrap();
        cfg.gamma = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn task_dependent_c() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.c_or_default(), 50.0);
        cfg.task = Task::Deblur;
        assert_eq!(cfg.c_or_default(), 500.0);
        cfg.c = Some(0.1);
        assert_eq!(cfg.c_or_default(), 0.1);
    }
}
