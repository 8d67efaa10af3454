//! JSON run configuration. Every field can be overridden from the command line.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use rationale_bench::detection::{ApConfig, Interpolation, DEFAULT_IOU_THRESHOLD};
use rationale_bench::embedding::EMBED_URL_ENV;
use rationale_bench::eval::{parse_metrics, EvalOptions, Metric};
use rationale_bench::synthesis::DEFAULT_MIN_COUNT;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub triplets: Option<PathBuf>,
    pub coco: Option<PathBuf>,
    pub category_map: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub iou_threshold: Option<f64>,
    pub interpolation: Option<Interpolation>,
    pub metrics: Option<BTreeSet<Metric>>,
    pub per_sample_vts: Option<bool>,
    pub bleu_smoothing: Option<bool>,
    pub embed_url: Option<String>,
    pub embed_cache: Option<PathBuf>,
    pub min_count: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.dataset,
            &mut config.predictions,
            &mut config.embeddings,
            &mut config.triplets,
            &mut config.coco,
            &mut config.category_map,
            &mut config.lexicon,
            &mut config.embed_cache,
            &mut config.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn eval_options(&self) -> anyhow::Result<EvalOptions> {
        let defaults = EvalOptions::default();
        let metrics = self.metrics.clone().unwrap_or(defaults.metrics);
        if metrics.is_empty() {
            bail!("configuration error: metrics list is empty");
        }
        let ap = ApConfig {
            iou_threshold: self.iou_threshold.unwrap_or(DEFAULT_IOU_THRESHOLD),
            interpolation: self.interpolation.unwrap_or_default(),
        };
        ap.validate()?;
        Ok(EvalOptions {
            metrics,
            ap,
            bleu_smoothing: self.bleu_smoothing.unwrap_or(defaults.bleu_smoothing),
            rouge_beta: defaults.rouge_beta,
            per_sample_vts: self.per_sample_vts.unwrap_or(defaults.per_sample_vts),
        })
    }

    pub fn min_count(&self) -> usize {
        self.min_count.unwrap_or(DEFAULT_MIN_COUNT)
    }
}

pub fn require<'a>(path: &'a Option<PathBuf>, what: &str) -> anyhow::Result<&'a Path> {
    let path = path
        .as_deref()
        .with_context(|| format!("no {what} path given (config file or --{what})"))?;
    if !path.exists() {
        bail!("{what} file {} does not exist", path.display());
    }
    Ok(path)
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// JSONL file of precomputed embeddings (`{"id": ..., "vector": [...]}`).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub triplets: Option<PathBuf>,
    #[arg(long)]
    pub coco: Option<PathBuf>,
    #[arg(long)]
    pub category_map: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub iou_threshold: Option<f64>,
    /// all_point or eleven_point.
    #[arg(long, value_parser = parse_interpolation)]
    pub interpolation: Option<Interpolation>,
    /// Comma-separated subset of bleu4,rouge_l,cider,meteor,ap,cos_gte,vts.
    #[arg(long, value_parser = parse_metric_list)]
    pub metrics: Option<BTreeSet<Metric>>,
    /// Fuse vtS per sample and average instead of once over the dataset.
    #[arg(long)]
    pub per_sample_vts: bool,
    /// Add-one smoothing for BLEU orders 2 to 4.
    #[arg(long)]
    pub bleu_smoothing: bool,
    /// Embedding service URL, used when no embeddings file is configured.
    #[arg(long, env = EMBED_URL_ENV)]
    pub embed_url: Option<String>,
    #[arg(long)]
    pub embed_cache: Option<PathBuf>,
    #[arg(long)]
    pub min_count: Option<usize>,
    #[arg(long, short)]
    pub output_dir: Option<PathBuf>,
}

fn parse_interpolation(s: &str) -> Result<Interpolation, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown interpolation `{s}`"))
}

fn parse_metric_list(s: &str) -> Result<BTreeSet<Metric>, String> {
    parse_metrics(s).map_err(|e| e.to_string())
}

impl ConfigArgs {
    /// Loads the config file if any and applies flag overrides.
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field {
                    config.$field = Some(v.clone());
                })*
            };
        }
        take!(
            dataset,
            predictions,
            embeddings,
            triplets,
            coco,
            category_map,
            lexicon,
            iou_threshold,
            interpolation,
            metrics,
            embed_url,
            embed_cache,
            min_count,
            output_dir
        );
        if self.per_sample_vts {
            config.per_sample_vts = Some(true);
        }
        if self.bleu_smoothing {
            config.bleu_smoothing = Some(true);
        }
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(
            &path,
            r#"{"dataset": "d.jsonl", "iou_threshold": 0.7, "metrics": ["ap", "vts"]}"#,
        )
        .unwrap();
        let args = ConfigArgs {
            config: Some(path),
            iou_threshold: Some(0.5),
            ..ConfigArgs::default()
        };
        let config = args.resolve().unwrap();
        assert_eq!(config.iou_threshold, Some(0.5));
        assert_eq!(config.dataset, Some(dir.path().join("d.jsonl")));
        assert_eq!(config.eval_options().unwrap().metrics.len(), 2);
    }

    #[test]
    fn empty_metrics_rejected() {
        let config = RunConfig {
            metrics: Some(BTreeSet::new()),
            ..RunConfig::default()
        };
        assert!(config.eval_options().is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"iou": 0.5}"#).unwrap();
        assert!(RunConfig::load(&path).is_err());
    }
}
