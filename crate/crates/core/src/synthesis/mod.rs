//! Building a rationale dataset from question/answer/explanation triplets and
//! COCO boxes.
//!
//! The pipeline harvests lexicon nouns from every triplet, keeps the frequent
//! ones, groups them into annotation categories, and attaches every box of a
//! matching category on the record's image as a candidate visual rationale.
//! Candidates then go through human review (see [`crate::review`]) before they
//! become [`RationaleSample`]s.

mod coco;
mod nouns;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

pub use coco::{CocoAnnotations, CocoBox, ImageInfo, BOUNDS_TOLERANCE};
pub use nouns::{
    count_noun_frequencies, extract_nouns, filter_frequent, record_nouns, singularize, Lexicon,
    NounStats,
};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::jsonl;
use crate::review::{Candidate, Origin, ReviewItem, ReviewStatus};

/// Default frequency cut: nouns must appear more than this many times.
pub const DEFAULT_MIN_COUNT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    #[serde(default = "one")]
    pub score: f64,
}

fn one() -> f64 {
    1.0
}

/// Accepts either a JSON string or an integer id.
pub(crate) fn string_or_number<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        S(String),
        N(u64),
    }
    Ok(match Id::deserialize(d)? {
        Id::S(s) => s,
        Id::N(n) => n.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletRecord {
    #[serde(deserialize_with = "string_or_number")]
    pub id: String,
    #[serde(deserialize_with = "string_or_number")]
    pub image_id: String,
    pub question: String,
    pub answers: Vec<Answer>,
    pub explanation: String,
}

impl TripletRecord {
    pub fn validate(&self) -> Result<()> {
        if self.question.trim().is_empty() {
            return Err(Error::InvalidInput(format!(
                "record {}: empty question",
                self.id
            )));
        }
        if self.explanation.trim().is_empty() {
            return Err(Error::InvalidInput(format!(
                "record {}: empty explanation",
                self.id
            )));
        }
        if self.answers.is_empty() {
            return Err(Error::InvalidInput(format!(
                "record {}: no answers",
                self.id
            )));
        }
        if let Some(a) = self
            .answers
            .iter()
            .find(|a| !(0.0..=1.0).contains(&a.score))
        {
            return Err(Error::InvalidInput(format!(
                "record {}: answer score {} outside [0, 1]",
                self.id, a.score
            )));
        }
        Ok(())
    }

    /// Highest-scoring answer; the first one on ties.
    pub fn top_answer(&self) -> &str {
        self.answers
            .iter()
            .fold(None::<&Answer>, |best, a| match best {
                Some(b) if b.score >= a.score => Some(b),
                _ => Some(a),
            })
            .map_or("", |a| a.text.as_str())
    }
}

pub fn load_triplets(path: impl AsRef<Path>) -> Result<Vec<TripletRecord>> {
    let records: Vec<TripletRecord> = jsonl::read(path)?;
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}

/// Noun → annotation category name.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryMap {
    pub entries: BTreeMap<String, String>,
}

impl CategoryMap {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut map: CategoryMap = serde_json::from_str(&text)?;
        map.entries = map
            .entries
            .into_iter()
            .map(|(noun, cat)| (noun.to_lowercase(), cat))
            .collect();
        Ok(map)
    }

    /// Every target category must exist in the annotation schema.
    pub fn validate_against(&self, coco: &CocoAnnotations) -> Result<()> {
        let missing: BTreeSet<&str> = self
            .entries
            .values()
            .filter(|c| !coco.has_category(c))
            .map(String::as_str)
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "category map targets unknown categories: {}",
                missing.into_iter().collect::<Vec<_>>().join(", ")
            )))
        }
    }
}

/// Categories of the mapped nouns plus the nouns that had no mapping.
pub fn map_to_categories_detailed(
    nouns: &[String],
    cmap: &CategoryMap,
) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut categories = BTreeSet::new();
    let mut unmapped = BTreeSet::new();
    for noun in nouns {
        match cmap.entries.get(noun) {
            Some(cat) => {
                categories.insert(cat.clone());
            }
            None => {
                unmapped.insert(noun.clone());
            }
        }
    }
    (categories, unmapped)
}

pub fn map_to_categories(nouns: &[String], cmap: &CategoryMap) -> BTreeSet<String> {
    let (categories, unmapped) = map_to_categories_detailed(nouns, cmap);
    for noun in &unmapped {
        log::debug!("no category for noun `{noun}`");
    }
    categories
}

/// Boxes on the record's image whose category is in `categories` (case-insensitive),
/// ordered by annotation id.
pub fn match_boxes(
    record: &TripletRecord,
    coco: &CocoAnnotations,
    categories: &BTreeSet<String>,
) -> Result<Vec<Candidate>> {
    if !coco.images.contains_key(&record.image_id) {
        return Err(Error::UnknownImage {
            record: record.id.clone(),
            image_id: record.image_id.clone(),
        });
    }
    let wanted: BTreeSet<String> = categories.iter().map(|c| c.to_lowercase()).collect();
    Ok(coco
        .boxes
        .get(&record.image_id)
        .into_iter()
        .flatten()
        .filter_map(|b| {
            let name = coco.category_name(b.category_id)?;
            wanted
                .contains(&name.to_lowercase())
                .then(|| Candidate::matched(b.annotation_id, name, b.bbox))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub annotation_id: Option<u64>,
    pub source_category: String,
    pub origin: Origin,
}

/// A finished dataset record: answers plus textual and visual rationales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationaleSample {
    #[serde(deserialize_with = "string_or_number")]
    pub id: String,
    #[serde(deserialize_with = "string_or_number")]
    pub image_id: String,
    #[serde(default)]
    pub image_path: String,
    pub question: String,
    pub answers: Vec<Answer>,
    pub textual_rationale: String,
    pub visual_rationale: Vec<BoundingBox>,
    #[serde(default)]
    pub provenance: Vec<Provenance>,
    #[serde(default)]
    pub no_visual_rationale: bool,
}

impl RationaleSample {
    pub fn validate(&self) -> Result<()> {
        if self.visual_rationale.is_empty() && !self.no_visual_rationale {
            return Err(Error::InvalidInput(format!(
                "sample {}: empty visual rationale without the no_visual_rationale flag",
                self.id
            )));
        }
        if !self.provenance.is_empty() && self.provenance.len() != self.visual_rationale.len() {
            return Err(Error::InvalidInput(format!(
                "sample {}: {} boxes but {} provenance entries",
                self.id,
                self.visual_rationale.len(),
                self.provenance.len()
            )));
        }
        Ok(())
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<RationaleSample>> {
    let samples: Vec<RationaleSample> = jsonl::read(path)?;
    let mut seen = BTreeSet::new();
    for s in &samples {
        s.validate()?;
        if !seen.insert(s.id.as_str()) {
            return Err(Error::DuplicateId(s.id.clone()));
        }
    }
    Ok(samples)
}

pub fn write_dataset(path: impl AsRef<Path>, samples: &[RationaleSample]) -> Result<()> {
    jsonl::write(path, samples)
}

/// Writes the review queue; every exported item starts out pending.
pub fn export_review_queue(items: &[ReviewItem], path: impl AsRef<Path>) -> Result<usize> {
    let pending: Vec<ReviewItem> = items
        .iter()
        .cloned()
        .map(|mut item| {
            item.status = ReviewStatus::Pending;
            item
        })
        .collect();
    jsonl::write(path, &pending)?;
    Ok(pending.len())
}

pub fn load_review_queue(path: impl AsRef<Path>) -> Result<Vec<ReviewItem>> {
    let items: Vec<ReviewItem> = jsonl::read(path)?;
    let mut seen = BTreeSet::new();
    for item in &items {
        if !seen.insert(item.id.as_str()) {
            return Err(Error::DuplicateId(item.id.clone()));
        }
    }
    Ok(items)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_images: usize,
    pub num_qa_pairs: usize,
    pub num_textual_rationales: usize,
    pub num_visual_rationales: usize,
}

pub fn dataset_stats(samples: &[RationaleSample]) -> DatasetStats {
    DatasetStats {
        num_images: samples
            .iter()
            .map(|s| s.image_id.as_str())
            .collect::<BTreeSet<_>>()
            .len(),
        num_qa_pairs: samples.len(),
        num_textual_rationales: samples
            .iter()
            .filter(|s| !s.textual_rationale.trim().is_empty())
            .count(),
        num_visual_rationales: samples.iter().map(|s| s.visual_rationale.len()).sum(),
    }
}

/// Same counts for queue drafts, where candidates stand in for visual rationales.
pub fn queue_stats(items: &[ReviewItem]) -> DatasetStats {
    DatasetStats {
        num_images: items
            .iter()
            .map(|s| s.image_id.as_str())
            .collect::<BTreeSet<_>>()
            .len(),
        num_qa_pairs: items.len(),
        num_textual_rationales: items
            .iter()
            .filter(|s| !s.textual_rationale.trim().is_empty())
            .count(),
        num_visual_rationales: items.iter().map(|s| s.candidates.len()).sum(),
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    pub min_count: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            min_count: DEFAULT_MIN_COUNT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOutput {
    pub noun_stats: NounStats,
    pub frequent: BTreeSet<String>,
    /// Draft queue items in input order.
    pub items: Vec<ReviewItem>,
    /// Records whose image id is missing from the annotations.
    pub unresolved: Vec<String>,
    /// Frequent nouns with no category mapping.
    pub unmapped: BTreeSet<String>,
}

/// Harvest, filter, group and match. Records on unknown images are listed in
/// `unresolved` and skipped; records that match no box are still queued so a
/// reviewer can add boxes by hand.
pub fn synthesize(
    records: &[TripletRecord],
    coco: &CocoAnnotations,
    lexicon: &Lexicon,
    cmap: &CategoryMap,
    options: &SynthesisOptions,
) -> Result<SynthesisOutput> {
    if options.min_count == 0 {
        return Err(Error::Config("min_count must be at least 1".into()));
    }
    let mut lexicon = lexicon.clone();
    lexicon.extend(cmap.entries.keys());

    let per_record: Vec<Vec<String>> = records
        .par_iter()
        .map(|r| record_nouns(r, &lexicon))
        .collect();
    let mut noun_stats = NounStats::default();
    for noun in per_record.iter().flatten() {
        *noun_stats.counts.entry(noun.clone()).or_insert(0) += 1;
    }
    let frequent = filter_frequent(&noun_stats, options.min_count);

    let drafts: Vec<std::result::Result<(ReviewItem, BTreeSet<String>), String>> = records
        .par_iter()
        .zip(per_record.par_iter())
        .map(|(record, nouns)| {
            let kept: Vec<String> = nouns
                .iter()
                .filter(|n| frequent.contains(*n))
                .cloned()
                .collect();
            let (categories, unmapped) = map_to_categories_detailed(&kept, cmap);
            let candidates = match match_boxes(record, coco, &categories) {
                Ok(c) => c,
                Err(_) => return Err(record.id.clone()),
            };
            let image = &coco.images[&record.image_id];
            Ok((ReviewItem::draft(record, image, candidates), unmapped))
        })
        .collect();

    let mut items = Vec::with_capacity(records.len());
    let mut unresolved = Vec::new();
    let mut unmapped = BTreeSet::new();
    for draft in drafts {
        match draft {
            Ok((item, missing)) => {
                items.push(item);
                unmapped.extend(missing);
            }
            Err(id) => unresolved.push(id),
        }
    }
    if !unresolved.is_empty() {
        log::warn!("{} records reference unknown images", unresolved.len());
    }
    Ok(SynthesisOutput {
        noun_stats,
        frequent,
        items,
        unresolved,
        unmapped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, image: &str, q: &str, e: &str) -> TripletRecord {
        TripletRecord {
            id: id.into(),
            image_id: image.into(),
            question: q.into(),
            answers: vec![Answer {
                text: "yes".into(),
                score: 1.0,
            }],
            explanation: e.into(),
        }
    }

    fn cmap(pairs: &[(&str, &str)]) -> CategoryMap {
        CategoryMap {
            entries: pairs
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        }
    }

    const COCO: &str = r#"{
        "images": [{"id": 1, "file_name": "1.jpg", "width": 100, "height": 100},
                   {"id": 2, "file_name": "2.jpg", "width": 100, "height": 100}],
        "categories": [{"id": 1, "name": "person"}, {"id": 18, "name": "dog"}, {"id": 20, "name": "sheep"}],
        "annotations": [
            {"id": 5, "image_id": 1, "category_id": 20, "bbox": [1, 1, 10, 10]},
            {"id": 3, "image_id": 1, "category_id": 20, "bbox": [20, 20, 10, 10]},
            {"id": 4, "image_id": 1, "category_id": 18, "bbox": [40, 40, 10, 10]}
        ]
    }"#;

    #[test]
    fn category_examples() {
        let m = cmap(&[("man", "Person"), ("woman", "Person")]);
        assert_eq!(
            map_to_categories(&["man".into(), "woman".into()], &m),
            BTreeSet::from(["Person".to_string()])
        );
        assert!(map_to_categories(&[], &m).is_empty());
        let (cats, unmapped) = map_to_categories_detailed(&["xylophone".into()], &m);
        assert!(cats.is_empty());
        assert_eq!(unmapped, BTreeSet::from(["xylophone".to_string()]));
    }

    #[test]
    fn match_examples() {
        let coco = CocoAnnotations::parse(COCO).unwrap();
        let r = record("r1", "1", "how many sheep", "two sheep graze");
        let sheep = match_boxes(&r, &coco, &BTreeSet::from(["sheep".to_string()])).unwrap();
        assert_eq!(
            sheep.iter().map(|c| c.annotation_id).collect::<Vec<_>>(),
            [Some(3), Some(5)]
        );
        assert!(match_boxes(&r, &coco, &BTreeSet::new()).unwrap().is_empty());
        let lost = record("r9", "404", "q", "e");
        assert!(matches!(
            match_boxes(&lost, &coco, &BTreeSet::new()),
            Err(Error::UnknownImage { record, .. }) if record == "r9"
        ));
    }

    #[test]
    fn category_map_validation() {
        let coco = CocoAnnotations::parse(COCO).unwrap();
        assert!(cmap(&[("man", "Person")]).validate_against(&coco).is_ok());
        assert!(cmap(&[("car", "vehicle")]).validate_against(&coco).is_err());
    }

    #[test]
    fn stats_examples() {
        let b = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let mk = |id: &str, n: usize| RationaleSample {
            id: id.into(),
            image_id: "1".into(),
            image_path: "1.jpg".into(),
            question: "q".into(),
            answers: vec![],
            textual_rationale: "because".into(),
            visual_rationale: vec![b; n],
            provenance: vec![],
            no_visual_rationale: false,
        };
        assert_eq!(
            dataset_stats(&[mk("a", 3), mk("b", 2)]),
            DatasetStats {
                num_images: 1,
                num_qa_pairs: 2,
                num_textual_rationales: 2,
                num_visual_rationales: 5
            }
        );
        assert_eq!(dataset_stats(&[]), DatasetStats::default());
    }

    #[test]
    fn pipeline_queues_unmatched_and_lists_unresolved() {
        let coco = CocoAnnotations::parse(COCO).unwrap();
        let records = vec![
            record("a", "1", "are the sheep white", "the sheep are white"),
            record("b", "2", "is the sheep asleep", "the sheep lies down"),
            record("c", "3", "is it a dog", "a dog"),
        ];
        let out = synthesize(
            &records,
            &coco,
            &Lexicon::parse("sheep\ndog"),
            &cmap(&[("sheep", "sheep")]),
            &SynthesisOptions { min_count: 1 },
        )
        .unwrap();
        assert_eq!(out.noun_stats.counts["sheep"], 4);
        assert_eq!(out.items.len(), 2);
        assert_eq!(out.items[0].candidates.len(), 2);
        assert!(out.items[1].candidates.is_empty());
        assert_eq!(out.unresolved, ["c"]);
    }

    #[test]
    fn triplet_ids_accept_numbers() {
        let r: TripletRecord = serde_json::from_str(
            r#"{"id": 17, "image_id": 9, "question": "q", "answers": [{"text": "a", "score": 0.3}], "explanation": "e"}"#,
        )
        .unwrap();
        assert_eq!((r.id.as_str(), r.image_id.as_str()), ("17", "9"));
        assert_eq!(r.top_answer(), "a");
    }

    #[test]
    fn triplet_validation() {
        let mut r = record("x", "1", "q", "e");
        assert!(r.validate().is_ok());
        r.answers.clear();
        assert!(r.validate().is_err());
        assert!(record("x", "1", " ", "e").validate().is_err());
    }
}
