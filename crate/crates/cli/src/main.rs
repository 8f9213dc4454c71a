use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lbs_cli::config::{ExperimentConfig, Task};
use lbs_cli::run::{cmd_compare, cmd_run, comparison_table};
use lbs_cli::selftest::{format_report, run_selftest};
use lbs_cli::train::{cmd_train, TrainArgs};
use lbs_cli::{parse_thread_cap, CliError, CliResult, THREADS_ENV};

/// Learnable Bregman splitting experiments.
#[derive(Parser)]
#[command(name = "lbs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Image completion. Takes `--config FILE` and `--<key> <value>` overrides.
    Complete {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
    /// Deblurring with nonconvex TV. Same options as `complete`.
    Deblur {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
    /// Runs every solver in `compare.solvers` on one instance.
    Compare {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
    /// Trains the residual CNN denoiser on a synthetic corpus.
    TrainDenoiser {
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs the invariant suite; exits 0 iff every check passes.
    Selftest,
}

/// `--config FILE`, `--print-config`, and `--key value` / `--key=value`
/// overrides applied after the file.
fn experiment_config(args: &[String], task: Option<Task>) -> CliResult<(ExperimentConfig, bool)> {
    let mut cfg = ExperimentConfig::default();
    if let Some(t) = task {
        cfg.task = t;
    }
    let mut overrides = Vec::new();
    let mut print = false;
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            return Err(CliError::Config(format!("unexpected argument '{arg}'")));
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        if key == "print-config" {
            print = true;
            continue;
        }
        let value = match value {
            Some(v) => v,
            None => it
                .next()
                .cloned()
                .ok_or_else(|| CliError::Config(format!("--{key} needs a value")))?,
        };
        if key == "config" {
            let text = std::fs::read_to_string(&value)
                .map_err(|e| CliError::Io(format!("{value}: {e}")))?;
            cfg.apply_text(&text)?;
        } else {
            overrides.push((key, value));
        }
    }
    for (k, v) in overrides {
        cfg.set(&k, &v)?;
    }
    if let Some(t) = task {
        if cfg.task != t {
            return Err(CliError::Config(format!(
                "config says task={} but the command is {t}",
                cfg.task
            )));
        }
    }
    Ok((cfg, print))
}

fn run(cli: Cli) -> CliResult<bool> {
    parse_thread_cap(std::env::var(THREADS_ENV).ok().as_deref())?;
    match cli.command {
        Command::Complete { args } => single(&args, Task::Complete),
        Command::Deblur { args } => single(&args, Task::Deblur),
        Command::Compare { args } => {
            let (cfg, print) = experiment_config(&args, None)?;
            if print {
                print!("{}", cfg.to_text());
                return Ok(true);
            }
            let (rows, _) = cmd_compare(&cfg)?;
            print!("{}", comparison_table(&rows));
            println!("outputs in {}", cfg.output_dir.display());
            Ok(true)
        }
        Command::TrainDenoiser { sigma, epochs, seed, out } => {
            let outcome = cmd_train(&TrainArgs { sigma, epochs, seed, out: out.clone() })?;
            println!(
                "trained {} parameters; loss {:.3e} -> {:.3e}; held-out gain {:.2} dB",
                outcome.net.num_params(),
                outcome.loss_curve.first().copied().unwrap_or(f64::NAN),
                outcome.loss_curve.last().copied().unwrap_or(f64::NAN),
                outcome.validation_gain_db
            );
            println!("weights {}; manifest {}", out.display(), outcome.manifest_path.display());
            Ok(true)
        }
        Command::Selftest => {
            let results = run_selftest()?;
            print!("{}", format_report(&results));
            Ok(results.iter().all(|r| r.passed))
        }
    }
}

fn single(args: &[String], task: Task) -> CliResult<bool> {
    let (cfg, print) = experiment_config(args, Some(task))?;
    if print {
        print!("{}", cfg.to_text());
        return Ok(true);
    }
    let res = cmd_run(&cfg, task.as_str())?;
    let m = &res.manifest.metrics[0];
    print!("{} {}: {} iterations (converged {}), final psi {:.6e}", task, m.solver, m.iterations, m.converged, m.final_psi);
    if let (Some(p), Some(ip)) = (m.psnr, res.manifest.input_psnr) {
        print!(", psnr {p:.2} dB (input {ip:.2} dB)");
    }
    println!();
    println!("manifest {}", res.manifest_path.display());
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
