use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bigconv_core::graph::Variant;
use bigconv_core::grm::Connection;
use bigconv_core::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};

pub const CONFIG_FILE: &str = "config.json";
pub const MODEL_FILE: &str = "model.bigc";
pub const LOSS_FILE: &str = "loss.csv";
pub const METRICS_FILE: &str = "metrics.json";

/// Everything a train or eval run depends on. Written back as
/// `config.json` so a run directory can be evaluated or repeated later.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Dataset directory holding `manifest.json`.
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Also write `checkpoint_<iteration>.bigc` every this many steps; 0
    /// keeps only the final model.
    pub checkpoint_every: usize,
    pub pipeline: PipelineConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(CONFIG_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn data_dir(&self) -> Result<&Path> {
        match &self.data {
            Some(d) => Ok(d),
            None => bail!("no dataset directory: pass --data or set \"data\" in the config"),
        }
    }

    pub fn out_dir(&self) -> Result<&Path> {
        match &self.out {
            Some(d) => Ok(d),
            None => bail!("no output directory: pass --out or set \"out\" in the config"),
        }
    }
}

/// Flag values that replace config-file values when present.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// JSON run configuration; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// GRM link between layers: residual or gru.
    #[arg(long)]
    pub connection: Option<Connection>,
    /// Number of graph layers in the GRM.
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub image_size: Option<usize>,
}

impl Overrides {
    pub fn resolve(&self, base: Option<RunConfig>) -> Result<RunConfig> {
        let mut cfg = match (&self.config, base) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(b)) => b,
            (None, None) => RunConfig::default(),
        };
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
        }
        let p = &mut cfg.pipeline;
        if let Some(v) = self.seed {
            p.seed = v;
        }
        if let Some(v) = self.connection {
            p.grm.connection = v;
        }
        if let Some(v) = self.layers {
            p.grm.n_layers = v;
        }
        if let Some(v) = self.iterations {
            p.iterations = v;
        }
        if let Some(v) = self.batch_size {
            p.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            p.learning_rate = v;
        }
        if let Some(v) = self.alpha {
            p.alpha = v;
        }
        if let Some(v) = self.image_size {
            p.image_size = v;
            p.region_grid = v / 4;
            p.boundary_grid = v / 2;
        }
        Ok(cfg)
    }
}

/// Parses `boundary,classic` style lists, rejecting duplicates.
pub fn parse_variants(list: &str) -> Result<Vec<Variant>> {
    let mut out: Vec<Variant> = Vec::new();
    for tag in list.split(',').map(str::trim) {
        let v: Variant = tag.parse()?;
        if out.contains(&v) {
            bail!("variant `{v}` listed twice");
        }
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"pipeline": {"learnig_rate": 1}}"#);
        assert!(err.is_err());
        let err = serde_json::from_str::<RunConfig>(r#"{"outdir": "x"}"#);
        assert!(err.is_err());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"pipeline": {"seed": 3}}"#).unwrap();
        assert_eq!(cfg.pipeline.seed, 3);
        assert_eq!(
            cfg.pipeline.iterations,
            PipelineConfig::default().iterations
        );
    }

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"pipeline": {"seed": 3, "iterations": 9}}"#).unwrap();
        let o = Overrides {
            config: Some(path),
            seed: Some(11),
            ..Default::default()
        };
        let cfg = o.resolve(None).unwrap();
        assert_eq!(cfg.pipeline.seed, 11);
        assert_eq!(cfg.pipeline.iterations, 9);
    }

    #[test]
    fn variant_lists() {
        assert_eq!(
            parse_variants("boundary,channel_spatial,classic").unwrap(),
            vec![Variant::Boundary, Variant::ChannelSpatial, Variant::Classic]
        );
        assert!(parse_variants("boundary,boundary").is_err());
        assert!(parse_variants("bogus").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            data: Some("data".into()),
            checkpoint_every: 5,
            ..Default::default()
        };
        cfg.save(dir.path()).unwrap();
        assert_eq!(RunConfig::load(&dir.path().join(CONFIG_FILE)).unwrap(), cfg);
    }
}
