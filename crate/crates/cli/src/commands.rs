//! Batch subcommands: eval, synth, review apply, kernels check, report.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rationale_bench::embedding::{EmbeddingProvider, FileProvider, RemoteConfig, RemoteProvider};
use rationale_bench::eval::{self, Metric, MetricReport};
use rationale_bench::kernels::check::{self, CheckReport};
use rationale_bench::review::{apply_review, ReviewDecision};
use rationale_bench::synthesis::{
    self, dataset_stats, queue_stats, CategoryMap, CocoAnnotations, DatasetStats, Lexicon,
    SynthesisOptions,
};
use serde::Serialize;

use crate::config::{require, RunConfig};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TABLE: &str = "report.txt";
pub const QUEUE_FILE: &str = "queue.jsonl";
pub const SYNTH_STATS: &str = "synth_stats.json";

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    rationale_bench::jsonl::write_atomic(path, contents.as_bytes())
        .with_context(|| format!("writing {}", path.display()))
}

fn embedding_provider(config: &RunConfig) -> anyhow::Result<Option<Box<dyn EmbeddingProvider>>> {
    if let Some(path) = &config.embeddings {
        let provider = FileProvider::open(path)
            .with_context(|| format!("loading embeddings {}", path.display()))?;
        return Ok(Some(Box::new(provider)));
    }
    if let Some(url) = &config.embed_url {
        let mut remote = RemoteConfig::new(url.clone());
        remote.cache_dir = Some(
            config
                .embed_cache
                .clone()
                .unwrap_or_else(|| config.output_dir().join("embed-cache")),
        );
        return Ok(Some(Box::new(RemoteProvider::new(remote)?)));
    }
    Ok(None)
}

/// Scores predictions and writes `report.json` and `report.txt` to the output directory.
pub fn eval(config: &RunConfig) -> anyhow::Result<MetricReport> {
    let options = config.eval_options()?;
    let dataset = synthesis::load_dataset(require(&config.dataset, "dataset")?)?;
    let predictions = eval::load_predictions(require(&config.predictions, "predictions")?)?;
    let needs_embeddings =
        options.metrics.contains(&Metric::CosGte) || options.metrics.contains(&Metric::Vts);
    let provider = if needs_embeddings {
        embedding_provider(config)?
    } else {
        None
    };
    let report = eval::run_eval(&dataset, &predictions, provider.as_deref(), &options)?;

    let out = config.output_dir();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_file(&out.join(REPORT_JSON), &report.to_json()?)?;
    write_file(&out.join(REPORT_TABLE), &report.render_table())?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthSummary {
    pub queue_path: PathBuf,
    pub queued: usize,
    pub nouns_seen: usize,
    pub noun_occurrences: usize,
    pub frequent_nouns: Vec<String>,
    pub top_nouns: Vec<(String, usize)>,
    pub unmapped_nouns: Vec<String>,
    pub unresolved_records: Vec<String>,
    pub drafts: DatasetStats,
}

/// Runs the synthesis pipeline and exports the review queue.
pub fn synth(config: &RunConfig) -> anyhow::Result<SynthSummary> {
    let records = synthesis::load_triplets(require(&config.triplets, "triplets")?)?;
    let coco = CocoAnnotations::load(require(&config.coco, "coco")?)?;
    let cmap = CategoryMap::load(require(&config.category_map, "category-map")?)?;
    cmap.validate_against(&coco)?;
    let lexicon = match &config.lexicon {
        Some(path) => Lexicon::load(path)?,
        None => Lexicon::bundled(),
    };
    let options = SynthesisOptions {
        min_count: config.min_count(),
    };
    let output = synthesis::synthesize(&records, &coco, &lexicon, &cmap, &options)?;

    let out = config.output_dir();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let queue_path = out.join(QUEUE_FILE);
    let queued = synthesis::export_review_queue(&output.items, &queue_path)?;
    let summary = SynthSummary {
        queue_path,
        queued,
        nouns_seen: output.noun_stats.counts.len(),
        noun_occurrences: output.noun_stats.total(),
        frequent_nouns: output.frequent.iter().cloned().collect(),
        top_nouns: output
            .noun_stats
            .top(10)
            .into_iter()
            .map(|(n, c)| (n.to_string(), c))
            .collect(),
        unmapped_nouns: output.unmapped.iter().cloned().collect(),
        unresolved_records: output.unresolved.clone(),
        drafts: queue_stats(&output.items),
    };
    write_file(
        &out.join(SYNTH_STATS),
        &(serde_json::to_string_pretty(&summary)? + "\n"),
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct ApplySummary {
    pub applied: usize,
    pub rejected: Vec<String>,
    pub stats: DatasetStats,
}

/// Replays a decision log over a queue and writes the accepted samples.
pub fn review_apply(queue: &Path, decisions: &Path, output: &Path) -> anyhow::Result<ApplySummary> {
    let items = synthesis::load_review_queue(queue)?;
    let decisions: Vec<ReviewDecision> = if decisions.exists() {
        rationale_bench::jsonl::read(decisions)?
    } else {
        Vec::new()
    };
    let outcome = apply_review(items, &decisions)?;
    synthesis::write_dataset(output, &outcome.samples)?;
    Ok(ApplySummary {
        applied: decisions.len() - outcome.rejected.len(),
        rejected: outcome
            .rejected
            .iter()
            .map(|(d, r)| format!("{}: {r}", d.id))
            .collect(),
        stats: dataset_stats(&outcome.samples),
    })
}

pub fn kernels_check(seed: u64) -> CheckReport {
    check::run(seed)
}

pub fn render_check(report: &CheckReport) -> String {
    let mut out = String::new();
    for r in &report.results {
        out += &format!(
            "{} {:<26} worst {:.3e} (tolerance {:.0e})\n",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.worst,
            r.tolerance
        );
    }
    out
}

pub fn load_report(path: &Path) -> anyhow::Result<MetricReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing report {}", path.display()))
}
