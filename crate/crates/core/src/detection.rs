//! Single-category detection evaluation: greedy matching, precision/recall and AP.
//!
//! Visual rationales carry no class label, so every detection competes for every
//! ground-truth box on its sample. Ranking ties are broken by input order so that
//! reports are reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDetection")]
pub struct Detection {
    #[serde(flatten)]
    pub bbox: BoundingBox,
    pub score: f64,
}

#[derive(Deserialize)]
struct RawDetection {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    score: f64,
}

impl TryFrom<RawDetection> for Detection {
    type Error = Error;

    fn try_from(raw: RawDetection) -> Result<Self> {
        Detection::new(BoundingBox::new(raw.x, raw.y, raw.w, raw.h)?, raw.score)
    }
}

impl Detection {
    pub fn new(bbox: BoundingBox, score: f64) -> Result<Self> {
        if !score.is_finite() || !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidInput(format!(
                "detection score {score} outside [0, 1]"
            )));
        }
        Ok(Self { bbox, score })
    }
}

/// Ground-truth visual rationale of one sample. An empty set is only legal when
/// the sample is explicitly marked as having no visual rationale.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruthSet {
    boxes: Vec<BoundingBox>,
}

impl GroundTruthSet {
    pub fn new(boxes: Vec<BoundingBox>, no_visual_rationale: bool) -> Result<Self> {
        if boxes.is_empty() && !no_visual_rationale {
            return Err(Error::InvalidInput(
                "empty ground-truth set without the no-visual-rationale flag".into(),
            ));
        }
        Ok(Self { boxes })
    }

    pub fn boxes(&self) -> &[BoundingBox] {
        &self.boxes
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

impl From<Vec<BoundingBox>> for GroundTruthSet {
    fn from(boxes: Vec<BoundingBox>) -> Self {
        Self { boxes }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub num_gt: usize,
}

/// How the precision envelope is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Exact area under the monotonized envelope.
    #[default]
    AllPoint,
    /// Mean of the envelope sampled at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApConfig {
    pub iou_threshold: f64,
    pub interpolation: Interpolation,
}

impl Default for ApConfig {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            interpolation: Interpolation::AllPoint,
        }
    }
}

impl ApConfig {
    pub fn validate(&self) -> Result<()> {
        check_threshold(self.iou_threshold)
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("IoU threshold {t} outside (0, 1]")))
    }
}

/// Indices of `dets` in descending score order; equal scores keep input order.
pub fn ranking(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    order
}

/// True-positive flags in descending-score order.
///
/// Each detection, best first, claims the still-unmatched ground-truth box it
/// overlaps most (lowest index on ties), provided the IoU reaches the threshold.
/// Anything else is a false positive, including a second hit on a claimed box.
pub fn match_detections(
    dets: &[Detection],
    gts: &[BoundingBox],
    iou_threshold: f64,
) -> Result<Vec<bool>> {
    check_threshold(iou_threshold)?;
    let order = ranking(dets);
    Ok(match_ranked(dets, &order, gts, iou_threshold))
}

fn match_ranked(
    dets: &[Detection],
    order: &[usize],
    gts: &[BoundingBox],
    iou_threshold: f64,
) -> Vec<bool> {
    let mut claimed = vec![false; gts.len()];
    order
        .iter()
        .map(|&d| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if claimed[g] {
                    continue;
                }
                let overlap = dets[d].bbox.iou(gt);
                if overlap >= iou_threshold && best.is_none_or(|(_, b)| overlap > b) {
                    best = Some((g, overlap));
                }
            }
            match best {
                Some((g, _)) => {
                    claimed[g] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

pub fn pr_curve(tp_flags: &[bool], num_gt: usize) -> PrCurve {
    if num_gt == 0 {
        return PrCurve {
            points: Vec::new(),
            num_gt,
        };
    }
    let mut tp = 0usize;
    let points = tp_flags
        .iter()
        .enumerate()
        .map(|(k, &hit)| {
            tp += usize::from(hit);
            PrPoint {
                precision: tp as f64 / (k + 1) as f64,
                recall: tp as f64 / num_gt as f64,
            }
        })
        .collect();
    PrCurve { points, num_gt }
}

pub fn average_precision(curve: &PrCurve) -> f64 {
    average_precision_with(curve, Interpolation::AllPoint)
}

pub fn average_precision_with(curve: &PrCurve, interpolation: Interpolation) -> f64 {
    if curve.points.is_empty() || curve.num_gt == 0 {
        return 0.0;
    }
    // Envelope: precision at each point becomes the best precision at any later point.
    let mut envelope: Vec<f64> = curve.points.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let ap = match interpolation {
        Interpolation::AllPoint => {
            let mut prev_recall = 0.0;
            let mut area = 0.0;
            for (p, &env) in curve.points.iter().zip(&envelope) {
                if p.recall > prev_recall {
                    area += (p.recall - prev_recall) * env;
                    prev_recall = p.recall;
                }
            }
            area
        }
        Interpolation::ElevenPoint => {
            let total: f64 = (0..=10)
                .map(|i| {
                    let r = i as f64 / 10.0;
                    curve
                        .points
                        .iter()
                        .zip(&envelope)
                        .find(|(p, _)| p.recall >= r - 1e-12)
                        .map_or(0.0, |(_, &env)| env)
                })
                .sum();
            total / 11.0
        }
    };
    ap.clamp(0.0, 1.0)
}

/// AP of a single sample.
pub fn sample_ap(dets: &[Detection], gts: &[BoundingBox], config: &ApConfig) -> Result<f64> {
    let flags = match_detections(dets, gts, config.iou_threshold)?;
    Ok(average_precision_with(
        &pr_curve(&flags, gts.len()),
        config.interpolation,
    ))
}

/// Result of pooled evaluation over a whole dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetAp {
    pub ap: f64,
    /// AP of each sample evaluated alone, in input order.
    pub per_sample: Vec<f64>,
    pub num_gt: usize,
    pub num_detections: usize,
    /// Indices of samples that have detections but no ground truth to recall.
    pub samples_without_gt: Vec<usize>,
}

/// Pooled single-category AP. Detections from all samples are ranked together by
/// score (ties by sample, then input order) while matching stays within each sample.
pub fn evaluate_dataset(
    per_sample: &[(Vec<Detection>, Vec<BoundingBox>)],
    config: &ApConfig,
) -> Result<DatasetAp> {
    config.validate()?;
    if per_sample.is_empty() {
        return Err(Error::InvalidInput(
            "dataset AP over an empty sample list".into(),
        ));
    }
    struct Ranked {
        score: f64,
        sample: usize,
        index: usize,
        tp: bool,
    }
    let mut pooled = Vec::new();
    let mut per_sample_ap = Vec::with_capacity(per_sample.len());
    let mut samples_without_gt = Vec::new();
    let mut num_gt = 0;
    for (s, (dets, gts)) in per_sample.iter().enumerate() {
        let order = ranking(dets);
        let flags = match_ranked(dets, &order, gts, config.iou_threshold);
        per_sample_ap.push(average_precision_with(
            &pr_curve(&flags, gts.len()),
            config.interpolation,
        ));
        if gts.is_empty() && !dets.is_empty() {
            samples_without_gt.push(s);
        }
        num_gt += gts.len();
        pooled.extend(order.iter().zip(flags).map(|(&index, tp)| Ranked {
            score: dets[index].score,
            sample: s,
            index,
            tp,
        }));
    }
    pooled.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.sample.cmp(&b.sample))
            .then(a.index.cmp(&b.index))
    });
    let flags: Vec<bool> = pooled.iter().map(|r| r.tp).collect();
    let ap = average_precision_with(&pr_curve(&flags, num_gt), config.interpolation);
    Ok(DatasetAp {
        ap,
        per_sample: per_sample_ap,
        num_gt,
        num_detections: flags.len(),
        samples_without_gt,
    })
}

pub fn dataset_ap(
    per_sample: &[(Vec<Detection>, Vec<BoundingBox>)],
    iou_threshold: f64,
) -> Result<f64> {
    let config = ApConfig {
        iou_threshold,
        ..ApConfig::default()
    };
    Ok(evaluate_dataset(per_sample, &config)?.ap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn det(b: BoundingBox, score: f64) -> Detection {
        Detection::new(b, score).unwrap()
    }

    #[test]
    fn match_examples() {
        let gt = bx(0.0, 0.0, 4.0, 4.0);
        assert_eq!(
            match_detections(&[det(gt, 0.7)], &[gt], 0.5).unwrap(),
            vec![true]
        );
        assert_eq!(
            match_detections(&[det(bx(10.0, 10.0, 1.0, 1.0), 0.7)], &[gt], 0.5).unwrap(),
            vec![false]
        );
        // Input order is low score first; output is in score order.
        assert_eq!(
            match_detections(&[det(gt, 0.8), det(gt, 0.9)], &[gt], 0.5).unwrap(),
            vec![true, false]
        );
    }

    #[test]
    fn threshold_is_validated() {
        let gt = bx(0.0, 0.0, 1.0, 1.0);
        for t in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                match_detections(&[], &[gt], t),
                Err(Error::Config(_))
            ));
        }
        assert!(match_detections(&[], &[gt], 1.0).is_ok());
    }

    #[test]
    fn score_ties_follow_input_order() {
        let gt = bx(0.0, 0.0, 4.0, 4.0);
        let near = bx(0.0, 0.0, 4.0, 3.0);
        let dets = [det(near, 0.5), det(gt, 0.5)];
        assert_eq!(ranking(&dets), vec![0, 1]);
        assert_eq!(
            match_detections(&dets, &[gt], 0.5).unwrap(),
            vec![true, false]
        );
    }

    #[test]
    fn detection_score_range() {
        let b = bx(0.0, 0.0, 1.0, 1.0);
        assert!(Detection::new(b, 1.2).is_err());
        assert!(Detection::new(b, f64::NAN).is_err());
        let d: Detection =
            serde_json::from_str(r#"{"x":0,"y":0,"w":2,"h":2,"score":0.4}"#).unwrap();
        assert_eq!(d.score, 0.4);
    }

    #[test]
    fn pr_curve_examples() {
        assert_eq!(
            pr_curve(&[true], 1).points,
            vec![PrPoint {
                precision: 1.0,
                recall: 1.0
            }]
        );
        let misses = pr_curve(&[false, false], 2);
        assert!(misses
            .points
            .iter()
            .all(|p| p.precision == 0.0 && p.recall == 0.0));
        let mixed = pr_curve(&[true, false, true], 2);
        let expected = [(1.0, 0.5), (0.5, 0.5), (2.0 / 3.0, 1.0)];
        for (p, (prec, rec)) in mixed.points.iter().zip(expected) {
            assert!((p.precision - prec).abs() < 1e-15);
            assert!((p.recall - rec).abs() < 1e-15);
        }
        assert!(pr_curve(&[true], 0).points.is_empty());
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&pr_curve(&[true], 1)), 1.0);
        assert_eq!(average_precision(&pr_curve(&[], 3)), 0.0);
        let ap = average_precision(&pr_curve(&[true, false, true], 2));
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn eleven_point_ap() {
        let curve = pr_curve(&[true, false, true], 2);
        // recall 0..=0.5 -> 1.0 (6 points), 0.6..=1.0 -> 2/3 (5 points)
        let expected = (6.0 + 5.0 * 2.0 / 3.0) / 11.0;
        let ap = average_precision_with(&curve, Interpolation::ElevenPoint);
        assert!((ap - expected).abs() < 1e-12);
    }

    #[test]
    fn dataset_examples() {
        let gt = bx(0.0, 0.0, 4.0, 4.0);
        let far = bx(20.0, 20.0, 2.0, 2.0);
        let perfect = (vec![det(gt, 0.9)], vec![gt]);
        assert_eq!(
            dataset_ap(std::slice::from_ref(&perfect), 0.5).unwrap(),
            1.0
        );
        assert_eq!(
            dataset_ap(&[perfect.clone(), perfect.clone()], 0.5).unwrap(),
            1.0
        );
        // Second sample's detection misses and ranks below the hit.
        let miss = (vec![det(far, 0.3)], vec![gt]);
        assert!((dataset_ap(&[perfect, miss], 0.5).unwrap() - 0.5).abs() < 1e-12);
        assert!(dataset_ap(&[], 0.5).is_err());
    }

    #[test]
    fn dataset_flags_samples_without_gt() {
        let gt = bx(0.0, 0.0, 4.0, 4.0);
        let result = evaluate_dataset(
            &[(vec![det(gt, 0.9)], vec![gt]), (vec![det(gt, 0.2)], vec![])],
            &ApConfig::default(),
        )
        .unwrap();
        assert_eq!(result.samples_without_gt, vec![1]);
        assert_eq!(result.per_sample, vec![1.0, 0.0]);
        assert_eq!(result.ap, 1.0);
    }

    #[test]
    fn empty_gt_set_requires_flag() {
        assert!(GroundTruthSet::new(vec![], false).is_err());
        assert!(GroundTruthSet::new(vec![], true).unwrap().is_empty());
    }
}
