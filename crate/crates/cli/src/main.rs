//! `bigconv`: dataset generation, training, evaluation, verification and
//! benchmarking from the command line.
//!
//! Exit codes: 0 on success, 1 on usage or validation errors, 2 when a
//! verification check fails.

mod checks;
mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bigconv_core::synth::{generate_dataset, Difficulty, Split};
use bigconv_core::verify;
use clap::{Parser, Subcommand};
use serde::Serialize;

use checks::{run_verify, VerifyOptions};
use config::{parse_variants, Overrides, RunConfig, CONFIG_FILE, MODEL_FILE};

#[derive(Debug, Parser)]
#[command(
    name = "bigconv",
    version,
    about = "Boundary-aware graph convolution toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset: PGM triples plus manifest.json.
    Synth {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// easy or textured.
        #[arg(long, default_value = "easy")]
        difficulty: Difficulty,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the train split; writes config.json, loss.csv and model.bigc.
    Train {
        #[command(flatten)]
        overrides: Overrides,
        /// One variant, or a comma list run into sibling directories
        /// `<out>/<variant>`.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        checkpoint_every: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint on the test split; writes metrics.json.
    Eval {
        /// A training output directory: supplies config.json and model.bigc.
        #[arg(long)]
        run: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle and gradient checks; exits 2 if any fails.
    Verify {
        /// Every suite below.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        equivalence: bool,
        #[arg(long)]
        null_space: bool,
        #[arg(long)]
        gradients: bool,
        #[arg(long)]
        residual: bool,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long)]
        grad_tolerance: Option<f64>,
        /// Also write verify.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time factored against dense Laplacian application; writes bench.csv.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "256,1024,4096")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 8)]
        channels: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Status {
    Ok,
    ChecksFailed,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn threads() -> Result<usize> {
    match std::env::var("BIGC_THREADS") {
        Err(_) => Ok(1),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => bail!("BIGC_THREADS must be a positive integer, got {s:?}"),
        },
    }
}

#[derive(Serialize)]
struct SynthEcho<'a> {
    seed: u64,
    count: usize,
    size: usize,
    difficulty: Difficulty,
    out: &'a Path,
}

fn train_cmd(
    overrides: &Overrides,
    variant: Option<&str>,
    checkpoint_every: Option<usize>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut base = overrides.resolve(None)?;
    if let Some(e) = checkpoint_every {
        base.checkpoint_every = e;
    }
    if out.is_some() {
        base.out = out;
    }
    let root = base.out_dir()?.to_path_buf();
    let variants = match variant {
        Some(list) => parse_variants(list)?,
        None => vec![base.pipeline.grm.variant],
    };
    let sweep = variants.len() > 1;
    for v in variants {
        let mut cfg = base.clone();
        cfg.pipeline.grm.variant = v;
        if sweep {
            cfg.out = Some(root.join(v.as_str()));
        }
        let loss = run::train_run(&cfg)?;
        println!(
            "train {v}: {} iterations, final loss {loss:.6}, wrote {}",
            cfg.pipeline.iterations,
            cfg.out_dir()?.display()
        );
    }
    Ok(())
}

fn eval_cmd(
    run_dir: Option<PathBuf>,
    overrides: &Overrides,
    variant: Option<&str>,
    checkpoint: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let base = match &run_dir {
        Some(d) if overrides.config.is_none() => Some(RunConfig::load(&d.join(CONFIG_FILE))?),
        _ => None,
    };
    let mut cfg = overrides.resolve(base)?;
    if let Some(list) = variant {
        match parse_variants(list)?.as_slice() {
            [v] => cfg.pipeline.grm.variant = *v,
            _ => bail!("eval takes a single variant"),
        }
    }
    let checkpoint = match (checkpoint, &run_dir) {
        (Some(c), _) => c,
        (None, Some(d)) => d.join(MODEL_FILE),
        (None, None) => bail!("eval needs --checkpoint or --run"),
    };
    match (out, &run_dir) {
        (Some(o), _) => cfg.out = Some(o),
        (None, Some(d)) => cfg.out = Some(d.clone()),
        (None, None) => {}
    }
    let report = run::eval_run(&cfg, &checkpoint)?;
    println!(
        "eval {}: {} {} scenes, foreground dice {:.4} bacc {:.4} biou {:.4}",
        cfg.pipeline.grm.variant,
        report.samples,
        Split::Test,
        report.foreground.dice,
        report.foreground.bacc,
        report.foreground.biou
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Synth {
            seed,
            count,
            size,
            difficulty,
            out,
        } => {
            if count == 0 {
                bail!("--count must be positive");
            }
            let manifest = generate_dataset(&out, seed, count, size, difficulty)?;
            let echo = SynthEcho {
                seed,
                count,
                size,
                difficulty,
                out: &out,
            };
            write_json(&out.join("synth.json"), &echo)?;
            println!(
                "synth: {} scenes ({} train, {} val, {} test) in {}",
                manifest.samples.len(),
                manifest.count(Split::Train),
                manifest.count(Split::Val),
                manifest.count(Split::Test),
                out.display()
            );
            Ok(Status::Ok)
        }
        Command::Train {
            overrides,
            variant,
            checkpoint_every,
            out,
        } => {
            train_cmd(&overrides, variant.as_deref(), checkpoint_every, out)?;
            Ok(Status::Ok)
        }
        Command::Eval {
            run,
            overrides,
            variant,
            checkpoint,
            out,
        } => {
            eval_cmd(run, &overrides, variant.as_deref(), checkpoint, out)?;
            Ok(Status::Ok)
        }
        Command::Verify {
            all,
            equivalence,
            null_space,
            gradients,
            residual,
            seeds,
            grad_tolerance,
            out,
        } => {
            let opts = VerifyOptions {
                equivalence: all || equivalence,
                null_space: all || null_space,
                gradients: all || gradients,
                residual: all || residual,
                seeds,
                grad_tolerance,
            };
            if !(opts.equivalence || opts.null_space || opts.gradients || opts.residual) {
                bail!("verify: choose --all or at least one suite");
            }
            if seeds == 0 {
                bail!("--seeds must be positive");
            }
            let report = run_verify(opts)?;
            for s in &report.suites {
                println!(
                    "{}: {} ({} cases, max {:.3e}, tol {:.0e}; {}) [{:.1}s]",
                    s.name,
                    if s.pass { "PASS" } else { "FAIL" },
                    s.cases,
                    s.max_error,
                    s.tolerance,
                    s.detail,
                    s.seconds
                );
            }
            if let Some(dir) = out {
                write_json(&dir.join("verify.json"), &report)?;
            }
            println!(
                "verify: {}",
                if report.pass { "all pass" } else { "FAILED" }
            );
            Ok(if report.pass {
                Status::Ok
            } else {
                Status::ChecksFailed
            })
        }
        Command::Bench {
            sizes,
            repeats,
            channels,
            seed,
            out,
        } => {
            let report = verify::scaling_bench(&sizes, repeats, channels, seed)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let csv = out.join("bench.csv");
            std::fs::write(&csv, report.to_csv())
                .with_context(|| format!("writing {}", csv.display()))?;
            write_json(&out.join("bench.json"), &report)?;
            println!(
                "bench: factored slope {:.2}, dense slope {:.2}, wrote {}",
                report.factored_slope,
                report.dense_slope,
                csv.display()
            );
            Ok(Status::Ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let pool = threads().and_then(|n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting worker pool")
    });
    if let Err(e) = pool {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match dispatch(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::ChecksFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
