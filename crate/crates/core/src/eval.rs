//! End-to-end evaluation of predictions against a rationale dataset.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{evaluate_dataset, ApConfig, Detection};
use crate::embedding::{clamp_similarity, cosine, EmbeddingProvider, TextItem};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::synthesis::{string_or_number, RationaleSample};
use crate::text::{self, BleuConfig, TokenSequence};
use crate::vts::{to_percent, VtsInputs, VtsReport};

/// How many offending ids an alignment error lists.
const MAX_LISTED_IDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Bleu4,
    RougeL,
    Cider,
    Meteor,
    Ap,
    CosGte,
    Vts,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Bleu4,
        Metric::RougeL,
        Metric::Cider,
        Metric::Meteor,
        Metric::Ap,
        Metric::CosGte,
        Metric::Vts,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Bleu4 => "bleu4",
            Metric::RougeL => "rouge_l",
            Metric::Cider => "cider",
            Metric::Meteor => "meteor",
            Metric::Ap => "ap",
            Metric::CosGte => "cos_gte",
            Metric::Vts => "vts",
        }
    }

    fn is_textual(self) -> bool {
        matches!(
            self,
            Metric::Bleu4 | Metric::RougeL | Metric::Cider | Metric::Meteor
        )
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown metric `{s}`")))
    }
}

/// Parses a comma-separated metric list.
pub fn parse_metrics(list: &str) -> Result<BTreeSet<Metric>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(Metric::from_str)
        .collect()
}

/// One predicted sample: boxes with scores and, for text metrics, a rationale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(deserialize_with = "string_or_number")]
    pub id: String,
    #[serde(default)]
    pub boxes: Vec<Detection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub textual_rationale: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    jsonl::read(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub metrics: BTreeSet<Metric>,
    pub ap: ApConfig,
    pub bleu_smoothing: bool,
    pub rouge_beta: f64,
    /// Fuse AP and cosine per sample and average, instead of fusing the dataset AP
    /// with the mean cosine.
    pub per_sample_vts: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            metrics: Metric::ALL.into_iter().collect(),
            ap: ApConfig::default(),
            bleu_smoothing: false,
            rouge_beta: text::DEFAULT_BETA,
            per_sample_vts: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SampleScores {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cos_gte: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meteor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cider: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vts: Option<f64>,
}

/// Evaluation output. Headline values are percentages with two decimals; the
/// unrounded fractions sit under `raw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub toolkit_version: String,
    #[serde(flatten)]
    pub metrics: BTreeMap<String, f64>,
    pub raw: BTreeMap<String, f64>,
    pub num_samples: usize,
    pub config: EvalOptions,
    pub embedding_provider: Option<String>,
    pub notes: Vec<String>,
    pub warnings: Vec<String>,
    pub per_sample: Vec<SampleScores>,
}

impl MetricReport {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Plain-text table of the headline metrics.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let width = self
            .metrics
            .keys()
            .map(String::len)
            .max()
            .unwrap_or(6)
            .max(6);
        let _ = writeln!(out, "{:<width$}  {:>8}", "metric", "value");
        let _ = writeln!(out, "{:-<width$}  {:->8}", "", "");
        for (k, v) in &self.metrics {
            let _ = writeln!(out, "{k:<width$}  {v:>8.2}");
        }
        let _ = writeln!(out, "\nsamples: {}", self.num_samples);
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

pub fn pred_embedding_id(sample_id: &str) -> String {
    format!("{sample_id}:pred")
}

pub fn gt_embedding_id(sample_id: &str) -> String {
    format!("{sample_id}:gt")
}

fn list_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> String {
    let ids: Vec<&str> = ids.into_iter().collect();
    let mut shown = ids
        .iter()
        .take(MAX_LISTED_IDS)
        .copied()
        .collect::<Vec<_>>()
        .join(", ");
    if ids.len() > MAX_LISTED_IDS {
        let _ = write!(shown, " (and {} more)", ids.len() - MAX_LISTED_IDS);
    }
    shown
}

/// Scores `predictions` against `dataset`.
///
/// Every prediction must name a dataset sample. The evaluated set is the dataset
/// samples that have a prediction, in dataset order.
pub fn run_eval(
    dataset: &[RationaleSample],
    predictions: &[Prediction],
    provider: Option<&dyn EmbeddingProvider>,
    options: &EvalOptions,
) -> Result<MetricReport> {
    if options.metrics.is_empty() {
        return Err(Error::Config("no metrics requested".into()));
    }
    options.ap.validate()?;
    if options.rouge_beta.is_nan() || options.rouge_beta <= 0.0 {
        return Err(Error::Config(format!(
            "ROUGE beta {} must be positive",
            options.rouge_beta
        )));
    }

    let mut by_id: HashMap<&str, &Prediction> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(p.id.as_str(), p).is_some() {
            return Err(Error::DuplicateId(p.id.clone()));
        }
    }
    let known: BTreeSet<&str> = dataset.iter().map(|s| s.id.as_str()).collect();
    let unknown: Vec<&str> = predictions
        .iter()
        .map(|p| p.id.as_str())
        .filter(|id| !known.contains(id))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} prediction ids not in the dataset: {}",
            unknown.len(),
            list_ids(unknown)
        )));
    }

    let pairs: Vec<(&RationaleSample, &Prediction)> = dataset
        .iter()
        .filter_map(|s| by_id.get(s.id.as_str()).map(|p| (s, *p)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no predictions to evaluate".into()));
    }

    let mut warnings = Vec::new();
    let mut notes = Vec::new();
    if pairs.len() < dataset.len() {
        warnings.push(format!(
            "{} dataset samples have no prediction and were skipped",
            dataset.len() - pairs.len()
        ));
    }

    let wants = |m: Metric| options.metrics.contains(&m);
    let need_ap = wants(Metric::Ap) || wants(Metric::Vts);
    let need_cos = wants(Metric::CosGte) || wants(Metric::Vts);
    let need_text = options.metrics.iter().any(|m| m.is_textual()) || need_cos;

    let candidates: Vec<String> = if need_text {
        let missing: Vec<&str> = pairs
            .iter()
            .filter(|(_, p)| p.textual_rationale.is_none())
            .map(|(s, _)| s.id.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} predictions lack a textual_rationale: {}",
                missing.len(),
                list_ids(missing)
            )));
        }
        pairs
            .iter()
            .map(|(_, p)| p.textual_rationale.clone().unwrap_or_default())
            .collect()
    } else {
        Vec::new()
    };

    let mut per_sample: Vec<SampleScores> = pairs
        .iter()
        .map(|(s, _)| SampleScores {
            id: s.id.clone(),
            ..SampleScores::default()
        })
        .collect();
    let mut raw = BTreeMap::new();

    let mut dataset_ap = None;
    if need_ap {
        let instances: Vec<_> = pairs
            .iter()
            .map(|(s, p)| (p.boxes.clone(), s.visual_rationale.clone()))
            .collect();
        let result = evaluate_dataset(&instances, &options.ap)?;
        if !result.samples_without_gt.is_empty() {
            warnings.push(format!(
                "{} samples have detections but no ground-truth boxes (scored AP 0)",
                result.samples_without_gt.len()
            ));
        }
        for (row, ap) in per_sample.iter_mut().zip(&result.per_sample) {
            row.ap = Some(*ap);
        }
        dataset_ap = Some(result.ap);
        if wants(Metric::Ap) {
            raw.insert("ap".to_string(), result.ap);
        }
    }

    let mut mean_cos = None;
    if need_cos {
        let provider = provider.ok_or_else(|| {
            Error::Config("cos_gte/vts need an embedding file or --embed-url".into())
        })?;
        let items: Vec<TextItem> = pairs
            .iter()
            .zip(&candidates)
            .flat_map(|((s, _), cand)| {
                [
                    TextItem::new(pred_embedding_id(&s.id), cand.clone()),
                    TextItem::new(gt_embedding_id(&s.id), s.textual_rationale.clone()),
                ]
            })
            .collect();
        let vectors = provider.embed(&items)?;
        let mut clamped = 0usize;
        let mut sum = 0.0;
        for (row, pair) in per_sample.iter_mut().zip(vectors.chunks(2)) {
            let (value, was_clamped) = clamp_similarity(cosine(&pair[0], &pair[1])?);
            clamped += usize::from(was_clamped);
            sum += value;
            row.cos_gte = Some(value);
        }
        if clamped > 0 {
            warnings.push(format!(
                "{clamped} negative cosine similarities clamped to 0"
            ));
        }
        notes.push("cos_gte: cosine clamped to [0, 1] before fusion".into());
        let mean = sum / pairs.len() as f64;
        mean_cos = Some(mean);
        if wants(Metric::CosGte) {
            raw.insert("cos_gte".to_string(), mean);
        }
    }

    if wants(Metric::Vts) {
        let (cos, ap) = (mean_cos.unwrap_or(0.0), dataset_ap.unwrap_or(0.0));
        let fused = if options.per_sample_vts {
            let reports: Vec<VtsReport> = per_sample
                .iter()
                .map(|r| {
                    VtsInputs::new(r.cos_gte.unwrap_or(0.0), r.ap.unwrap_or(0.0))
                        .map(VtsReport::compute)
                })
                .collect::<Result<_>>()?;
            for (row, rep) in per_sample.iter_mut().zip(&reports) {
                row.vts = Some(rep.vts);
            }
            let n = reports.len() as f64;
            let degenerate = reports.iter().filter(|r| r.degenerate).count();
            if degenerate > 0 {
                warnings.push(format!("{degenerate} samples have zero cosine and zero AP"));
            }
            VtsReport {
                vts: reports.iter().map(|r| r.vts).sum::<f64>() / n,
                arith: reports.iter().map(|r| r.arith).sum::<f64>() / n,
                prod: reports.iter().map(|r| r.prod).sum::<f64>() / n,
                cos_sim: cos,
                ap,
                degenerate: degenerate == reports.len(),
            }
        } else {
            VtsReport::compute(VtsInputs::new(cos, ap)?)
        };
        if fused.degenerate {
            warnings.push("vts inputs are both zero; vts reported as 0".into());
        }
        raw.insert("vts".to_string(), fused.vts);
        raw.insert("vts_arith".to_string(), fused.arith);
        raw.insert("vts_prod".to_string(), fused.prod);
    }

    if options.metrics.iter().any(|m| m.is_textual()) {
        let cand_tokens: Vec<TokenSequence> =
            candidates.par_iter().map(|c| text::tokenize(c)).collect();
        let ref_tokens: Vec<Vec<TokenSequence>> = pairs
            .par_iter()
            .map(|(s, _)| vec![text::tokenize(&s.textual_rationale)])
            .collect();
        let n = pairs.len() as f64;
        if wants(Metric::Bleu4) {
            let config = BleuConfig {
                smoothing: options.bleu_smoothing,
            };
            raw.insert(
                "bleu4".into(),
                text::bleu4_with(&cand_tokens, &ref_tokens, &config)?,
            );
        }
        if wants(Metric::RougeL) {
            let scores: Vec<f64> = cand_tokens
                .par_iter()
                .zip(ref_tokens.par_iter())
                .map(|(c, r)| text::rouge_l_multi(c, r, options.rouge_beta))
                .collect();
            for (row, v) in per_sample.iter_mut().zip(&scores) {
                row.rouge_l = Some(*v);
            }
            raw.insert("rouge_l".into(), scores.iter().sum::<f64>() / n);
        }
        if wants(Metric::Meteor) {
            let scores: Vec<f64> = cand_tokens
                .par_iter()
                .zip(ref_tokens.par_iter())
                .map(|(c, r)| text::meteor_multi(c, r))
                .collect();
            for (row, v) in per_sample.iter_mut().zip(&scores) {
                row.meteor = Some(*v);
            }
            raw.insert("meteor".into(), scores.iter().sum::<f64>() / n);
            notes.push("meteor: exact and stem matching only, no synonym stage".into());
        }
        if wants(Metric::Cider) {
            let scores = text::cider(&cand_tokens, &ref_tokens)?;
            if scores.degenerate_corpus {
                warnings.push("CIDEr computed on a single-item corpus".into());
            }
            for (row, v) in per_sample.iter_mut().zip(&scores.per_item) {
                row.cider = Some(*v);
            }
            raw.insert("cider".into(), scores.mean);
        }
        notes.push("spice: not computed".into());
    }

    let metrics = raw
        .iter()
        .map(|(k, v)| (k.clone(), to_percent(*v)))
        .collect();
    Ok(MetricReport {
        toolkit_version: crate::VERSION.to_string(),
        metrics,
        raw,
        num_samples: pairs.len(),
        config: options.clone(),
        embedding_provider: if need_cos {
            provider.map(|p| p.describe())
        } else {
            None
        },
        notes,
        warnings,
        per_sample,
    })
}
