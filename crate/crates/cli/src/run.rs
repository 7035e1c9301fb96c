use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bigconv_core::pipeline::{
    evaluate, load_checkpoint, save_checkpoint, train_step, BatchSchedule, ClassMetrics, Example,
    ModelState,
};
use bigconv_core::synth::{load_samples, read_manifest, SceneSample, Split, MANIFEST_FILE};
use serde::Serialize;

use crate::config::{RunConfig, LOSS_FILE, METRICS_FILE, MODEL_FILE};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_split(cfg: &RunConfig, split: Split) -> Result<Vec<SceneSample>> {
    let data = cfg.data_dir()?;
    let manifest = read_manifest(&data.join(MANIFEST_FILE))?;
    let scenes = load_samples(data, &manifest, split)?;
    if scenes.is_empty() {
        bail!("{} has no {split} scenes", data.display());
    }
    Ok(scenes)
}

/// Trains one configuration into `cfg.out`, writing the config echo, the
/// loss log, optional intermediate checkpoints and `model.bigc`.
pub fn train_run(cfg: &RunConfig) -> Result<f64> {
    cfg.pipeline.validate()?;
    let out = cfg.out_dir()?;
    create_dir(out)?;
    cfg.save(out)?;
    let examples = load_split(cfg, Split::Train)?
        .iter()
        .map(|s| Example::from_scene(&cfg.pipeline, s))
        .collect::<bigconv_core::Result<Vec<_>>>()?;

    let pc = &cfg.pipeline;
    let mut state = ModelState::init(pc)?;
    let mut schedule = BatchSchedule::new(examples.len(), pc.seed);
    let mut log = String::from("iteration,total,L_R,L_B\n");
    let mut last = f64::NAN;
    while state.iteration < pc.iterations {
        let batch: Vec<Example> = schedule
            .next_batch(pc.batch_size)
            .into_iter()
            .map(|i| examples[i].clone())
            .collect();
        let it = state.iteration;
        let l = train_step(&mut state, pc, &batch)?;
        let _ = writeln!(log, "{it},{},{},{}", l.total, l.region, l.boundary);
        last = l.total;
        let every = cfg.checkpoint_every;
        if every > 0 && state.iteration % every == 0 && state.iteration < pc.iterations {
            let path = out.join(format!("checkpoint_{:06}.bigc", state.iteration));
            save_checkpoint(&path, &state.params, state.iteration)?;
        }
    }
    write(&out.join(LOSS_FILE), &log)?;
    save_checkpoint(&out.join(MODEL_FILE), &state.params, state.iteration)?;
    Ok(last)
}

#[derive(Debug, Serialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub split: Split,
    pub checkpoint: PathBuf,
    pub iteration: usize,
    pub samples: usize,
    /// Boundary band width, in pixels, used for BIoU.
    pub band: usize,
    pub foreground: ClassMetrics,
    pub background: ClassMetrics,
    /// Scenes whose ground truth lacks one class, so B-Acc falls back to
    /// the single defined rate.
    pub bacc_degenerate: usize,
    pub config: RunConfig,
}

/// Scores `checkpoint` on the test split and writes `metrics.json` under
/// `cfg.out`.
pub fn eval_run(cfg: &RunConfig, checkpoint: &Path) -> Result<MetricsReport> {
    cfg.pipeline.validate()?;
    let (params, iteration) = load_checkpoint(checkpoint, &cfg.pipeline).with_context(|| {
        format!(
            "checkpoint {} does not fit the configuration",
            checkpoint.display()
        )
    })?;
    let scenes = load_split(cfg, Split::Test)?;
    let ev = evaluate(&cfg.pipeline, &params, &scenes)?;
    let report = MetricsReport {
        seed: cfg.pipeline.seed,
        split: Split::Test,
        checkpoint: checkpoint.to_path_buf(),
        iteration,
        samples: ev.samples,
        band: ev.band,
        foreground: ev.foreground,
        background: ev.background,
        bacc_degenerate: ev.bacc_degenerate,
        config: cfg.clone(),
    };
    let out = cfg.out_dir()?;
    create_dir(out)?;
    write(
        &out.join(METRICS_FILE),
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;
    Ok(report)
}
