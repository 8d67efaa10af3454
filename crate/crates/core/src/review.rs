//! Human review of synthesized candidates.
//!
//! Each queued item carries a version. A decision names the version it was made
//! against; it applies only if that is still the item's current version, and a
//! successful application bumps the version by one. Applied decisions are the
//! event log: replaying them over the original queue rebuilds the same state.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::jsonl;
use crate::synthesis::{
    string_or_number, Answer, ImageInfo, Provenance, RationaleSample, TripletRecord,
    BOUNDS_TOLERANCE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    #[default]
    Matched,
    HumanAdded,
}

/// One candidate box of a queued item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCandidate", into = "RawCandidate")]
pub struct Candidate {
    pub annotation_id: Option<u64>,
    pub category: String,
    pub bbox: BoundingBox,
    pub origin: Origin,
}

#[derive(Serialize, Deserialize)]
struct RawCandidate {
    annotation_id: Option<u64>,
    category: String,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    #[serde(default)]
    origin: Origin,
}

impl TryFrom<RawCandidate> for Candidate {
    type Error = Error;

    fn try_from(raw: RawCandidate) -> Result<Self> {
        if raw.origin == Origin::Matched && raw.annotation_id.is_none() {
            return Err(Error::InvalidInput(
                "matched candidate without an annotation id".into(),
            ));
        }
        Ok(Candidate {
            annotation_id: raw.annotation_id,
            category: raw.category,
            bbox: BoundingBox::new(raw.x, raw.y, raw.w, raw.h)?,
            origin: raw.origin,
        })
    }
}

impl From<Candidate> for RawCandidate {
    fn from(c: Candidate) -> Self {
        RawCandidate {
            annotation_id: c.annotation_id,
            category: c.category,
            x: c.bbox.x(),
            y: c.bbox.y(),
            w: c.bbox.w(),
            h: c.bbox.h(),
            origin: c.origin,
        }
    }
}

impl Candidate {
    pub fn matched(annotation_id: u64, category: &str, bbox: BoundingBox) -> Self {
        Self {
            annotation_id: Some(annotation_id),
            category: category.to_string(),
            bbox,
            origin: Origin::Matched,
        }
    }

    pub fn human_added(bbox: BoundingBox) -> Self {
        Self {
            annotation_id: None,
            category: String::new(),
            bbox,
            origin: Origin::HumanAdded,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewStatus {
    #[default]
    Pending,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    #[serde(deserialize_with = "string_or_number")]
    pub id: String,
    #[serde(deserialize_with = "string_or_number")]
    pub image_id: String,
    pub image_path: String,
    pub image_width: f64,
    pub image_height: f64,
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub answers: Vec<Answer>,
    pub textual_rationale: String,
    pub candidates: Vec<Candidate>,
    #[serde(default)]
    pub status: ReviewStatus,
    #[serde(default)]
    pub version: u64,
}

impl ReviewItem {
    pub fn draft(record: &TripletRecord, image: &ImageInfo, candidates: Vec<Candidate>) -> Self {
        Self {
            id: record.id.clone(),
            image_id: record.image_id.clone(),
            image_path: image.file_name.clone(),
            image_width: image.width,
            image_height: image.height,
            question: record.question.clone(),
            answer: record.top_answer().to_string(),
            answers: record.answers.clone(),
            textual_rationale: record.explanation.clone(),
            candidates,
            status: ReviewStatus::Pending,
            version: 0,
        }
    }

    /// Final dataset record for an accepted item.
    pub fn to_sample(&self) -> RationaleSample {
        RationaleSample {
            id: self.id.clone(),
            image_id: self.image_id.clone(),
            image_path: self.image_path.clone(),
            question: self.question.clone(),
            answers: if self.answers.is_empty() {
                vec![Answer {
                    text: self.answer.clone(),
                    score: 1.0,
                }]
            } else {
                self.answers.clone()
            },
            textual_rationale: self.textual_rationale.clone(),
            visual_rationale: self.candidates.iter().map(|c| c.bbox).collect(),
            provenance: self
                .candidates
                .iter()
                .map(|c| Provenance {
                    annotation_id: c.annotation_id,
                    source_category: c.category.clone(),
                    origin: c.origin,
                })
                .collect(),
            no_visual_rationale: self.candidates.is_empty(),
        }
    }
}

/// Queue listing entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewSummary {
    pub id: String,
    pub image_id: String,
    pub question: String,
    pub answer: String,
    pub textual_rationale: String,
    pub num_candidates: usize,
    pub status: ReviewStatus,
    pub version: u64,
}

impl From<&ReviewItem> for ReviewSummary {
    fn from(item: &ReviewItem) -> Self {
        Self {
            id: item.id.clone(),
            image_id: item.image_id.clone(),
            question: item.question.clone(),
            answer: item.answer.clone(),
            textual_rationale: item.textual_rationale.clone(),
            num_candidates: item.candidates.len(),
            status: item.status,
            version: item.version,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AddedBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionStatus {
    Accepted,
    Rejected,
}

impl From<DecisionStatus> for ReviewStatus {
    fn from(s: DecisionStatus) -> Self {
        match s {
            DecisionStatus::Accepted => ReviewStatus::Accepted,
            DecisionStatus::Rejected => ReviewStatus::Rejected,
        }
    }
}

/// A reviewer's edit of one item, made against `version`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewDecision {
    #[serde(deserialize_with = "string_or_number")]
    pub id: String,
    #[serde(default)]
    pub removed: Vec<usize>,
    #[serde(default)]
    pub added: Vec<AddedBox>,
    pub status: DecisionStatus,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rejection {
    #[error("unknown item `{id}`")]
    UnknownId { id: String },
    #[error("stale version {submitted}, item is at {current}")]
    StaleVersion { submitted: u64, current: u64 },
    #[error("removed index {index} out of range for {len} candidates")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("added box {index}: {reason}")]
    InvalidBox { index: usize, reason: String },
}

impl Rejection {
    pub fn is_conflict(&self) -> bool {
        matches!(self, Rejection::StaleVersion { .. })
    }
}

/// Applies one decision to one item, returning the edited copy.
pub fn apply_decision(
    item: &ReviewItem,
    decision: &ReviewDecision,
) -> Result<ReviewItem, Rejection> {
    if decision.id != item.id {
        return Err(Rejection::UnknownId {
            id: decision.id.clone(),
        });
    }
    if decision.version != item.version {
        return Err(Rejection::StaleVersion {
            submitted: decision.version,
            current: item.version,
        });
    }
    let removed: BTreeSet<usize> = decision.removed.iter().copied().collect();
    if let Some(&index) = removed.iter().find(|&&i| i >= item.candidates.len()) {
        return Err(Rejection::IndexOutOfRange {
            index,
            len: item.candidates.len(),
        });
    }
    let mut added = Vec::with_capacity(decision.added.len());
    for (index, b) in decision.added.iter().enumerate() {
        let bbox = BoundingBox::new(b.x, b.y, b.w, b.h).map_err(|e| Rejection::InvalidBox {
            index,
            reason: e.to_string(),
        })?;
        if !bbox.within(item.image_width, item.image_height, BOUNDS_TOLERANCE) {
            return Err(Rejection::InvalidBox {
                index,
                reason: format!(
                    "outside the {}x{} image",
                    item.image_width, item.image_height
                ),
            });
        }
        added.push(Candidate::human_added(bbox));
    }

    let mut next = item.clone();
    next.candidates = item
        .candidates
        .iter()
        .enumerate()
        .filter(|(i, _)| !removed.contains(i))
        .map(|(_, c)| c.clone())
        .chain(added)
        .collect();
    next.status = decision.status.into();
    next.version = item.version + 1;
    Ok(next)
}

/// In-memory queue state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReviewState {
    items: Vec<ReviewItem>,
    index: HashMap<String, usize>,
}

impl ReviewState {
    pub fn new(queue: Vec<ReviewItem>) -> Result<Self> {
        let mut index = HashMap::with_capacity(queue.len());
        for (i, item) in queue.iter().enumerate() {
            if index.insert(item.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(item.id.clone()));
            }
        }
        Ok(Self {
            items: queue,
            index,
        })
    }

    pub fn items(&self) -> &[ReviewItem] {
        &self.items
    }

    pub fn get(&self, id: &str) -> Option<&ReviewItem> {
        self.index.get(id).map(|&i| &self.items[i])
    }

    pub fn summaries(&self) -> Vec<ReviewSummary> {
        self.items.iter().map(ReviewSummary::from).collect()
    }

    pub fn submit(&mut self, decision: &ReviewDecision) -> Result<&ReviewItem, Rejection> {
        let &i = self
            .index
            .get(&decision.id)
            .ok_or_else(|| Rejection::UnknownId {
                id: decision.id.clone(),
            })?;
        self.items[i] = apply_decision(&self.items[i], decision)?;
        Ok(&self.items[i])
    }

    /// Accepted items as dataset records, in queue order.
    pub fn final_dataset(&self) -> Vec<RationaleSample> {
        self.items
            .iter()
            .filter(|i| i.status == ReviewStatus::Accepted)
            .map(ReviewItem::to_sample)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReviewOutcome {
    pub samples: Vec<RationaleSample>,
    pub state: ReviewState,
    pub rejected: Vec<(ReviewDecision, Rejection)>,
}

/// Applies `decisions` in order. Rejected decisions leave state untouched and are
/// reported; only accepted items reach the final dataset.
pub fn apply_review(queue: Vec<ReviewItem>, decisions: &[ReviewDecision]) -> Result<ReviewOutcome> {
    let mut state = ReviewState::new(queue)?;
    let mut rejected = Vec::new();
    for d in decisions {
        if let Err(r) = state.submit(d) {
            rejected.push((d.clone(), r));
        }
    }
    Ok(ReviewOutcome {
        samples: state.final_dataset(),
        state,
        rejected,
    })
}

/// Review state backed by an append-only decision log.
///
/// Reads take a snapshot `Arc`; submissions serialize on a writer lock, append the
/// decision to the log, then publish a new snapshot.
pub struct ReviewService {
    snapshot: RwLock<Arc<ReviewState>>,
    writer: Mutex<()>,
    log_path: PathBuf,
}

impl ReviewService {
    /// Loads the queue and replays any existing log.
    pub fn open(queue_path: impl AsRef<Path>, log_path: impl AsRef<Path>) -> Result<Self> {
        let queue = crate::synthesis::load_review_queue(queue_path)?;
        let log_path = log_path.as_ref().to_path_buf();
        let decisions: Vec<ReviewDecision> = if log_path.exists() {
            jsonl::read(&log_path)?
        } else {
            Vec::new()
        };
        let outcome = apply_review(queue, &decisions)?;
        if !outcome.rejected.is_empty() {
            log::warn!(
                "{} logged decisions no longer apply during replay",
                outcome.rejected.len()
            );
        }
        Ok(Self {
            snapshot: RwLock::new(Arc::new(outcome.state)),
            writer: Mutex::new(()),
            log_path,
        })
    }

    pub fn snapshot(&self) -> Arc<ReviewState> {
        self.snapshot.read().expect("review snapshot lock").clone()
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    /// Validates and applies a decision. `Ok(Err(_))` is a rejected decision; the
    /// outer error is a failure to persist it.
    pub fn submit(&self, decision: &ReviewDecision) -> Result<Result<ReviewItem, Rejection>> {
        let _guard = self.writer.lock().expect("review writer lock");
        let current = self.snapshot();
        let mut next = (*current).clone();
        let item = match next.submit(decision) {
            Ok(item) => item.clone(),
            Err(r) => return Ok(Err(r)),
        };
        jsonl::append(&self.log_path, decision)?;
        *self.snapshot.write().expect("review snapshot lock") = Arc::new(next);
        Ok(Ok(item))
    }
}
