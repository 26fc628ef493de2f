//! Detection evaluation at a single IoU threshold.
//!
//! Detections are ranked by score and greedily matched to groundtruth with
//! [`rotated_iou`]. Average precision is the area under the precision envelope
//! (all-point interpolation), mAP is its mean over categories and AR is the
//! mean over categories of the final recall.

use std::collections::HashMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{DatasetManifest, DetectionRecord, GroundTruthRecord};
use crate::geometry::{rotated_iou, ObbParams};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("records of several categories passed to single-category matching: {0:?} and {1:?}")]
    MixedCategories(String, String),
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("iou threshold {0} outside (0, 1)")]
    BadThreshold(f64),
    #[error("groundtruth {index}: {message}")]
    InvalidGroundTruth { index: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchFlag {
    TruePositive,
    FalsePositive,
    /// Best match was a difficult groundtruth: neither TP nor FP.
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Index into the input detections, in ranking order.
    pub order: Vec<usize>,
    /// Flag per ranked detection, aligned with `order`.
    pub flags: Vec<MatchFlag>,
    /// Per input groundtruth.
    pub gt_matched: Vec<bool>,
    pub iou_threshold: f64,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.flags.iter().filter(|f| **f == MatchFlag::TruePositive).count()
    }

    pub fn false_positives(&self) -> usize {
        self.flags.iter().filter(|f| **f == MatchFlag::FalsePositive).count()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrCurve {
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
}

/// TP/FP/FN counts. True negatives have no meaning for detection and are
/// always 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub ap: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl CategoryReport {
    pub fn confusion(&self) -> ConfusionCounts {
        ConfusionCounts { tp: self.tp, fp: self.fp, fn_: self.fn_, tn: 0 }
    }
}

/// Serialized key order: `iou_threshold, per_category, mAP, AR, meta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub per_category: IndexMap<String, CategoryReport>,
    #[serde(rename = "mAP")]
    pub map: f64,
    #[serde(rename = "AR")]
    pub ar: f64,
    pub meta: ReportMeta,
}

/// Interpretation notes carried with every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub ap_method: String,
    pub ar_definition: String,
    pub true_negatives: String,
}

impl Default for ReportMeta {
    fn default() -> Self {
        Self {
            ap_method: "all-point interpolation".into(),
            ar_definition: "mean over categories of final recall at iou_threshold".into(),
            true_negatives: "undefined for detection; reported as 0".into(),
        }
    }
}

fn check_threshold(t: f64) -> Result<(), MetricsError> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(MetricsError::BadThreshold(t))
    }
}

/// Ranking order: descending score, ties kept in input order.
fn ranking(dets: &[DetectionRecord]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    order
}

/// Greedy matching for a single category. Each ranked detection takes the
/// still-unmatched groundtruth of the same image with the highest IoU; it is
/// a true positive when that IoU reaches the threshold.
pub fn match_detections(
    dets: &[DetectionRecord],
    gts: &[GroundTruthRecord],
    iou_threshold: f64,
) -> Result<MatchResult, MetricsError> {
    check_threshold(iou_threshold)?;
    let mut category: Option<&str> = None;
    for c in dets.iter().map(|d| d.category.as_str()).chain(gts.iter().map(|g| g.category.as_str())) {
        match category {
            None => category = Some(c),
            Some(first) if first != c => return Err(MetricsError::MixedCategories(first.into(), c.into())),
            _ => {}
        }
    }
    let gt_boxes: Vec<ObbParams> = gts
        .iter()
        .enumerate()
        .map(|(index, g)| g.obb().map_err(|e| MetricsError::InvalidGroundTruth { index, message: e.to_string() }))
        .collect::<Result<_, _>>()?;
    let mut by_image: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        by_image.entry(g.image_id.as_str()).or_default().push(i);
    }

    let order = ranking(dets);
    let mut gt_matched = vec![false; gts.len()];
    let mut flags = Vec::with_capacity(order.len());
    for &di in &order {
        let det = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for &gi in by_image.get(det.image_id.as_str()).map(Vec::as_slice).unwrap_or(&[]) {
            if gt_matched[gi] {
                continue;
            }
            let iou = rotated_iou(&det.obb, &gt_boxes[gi]);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        let flag = match best {
            Some((gi, iou)) if iou >= iou_threshold => {
                if gts[gi].difficult {
                    MatchFlag::Ignored
                } else {
                    gt_matched[gi] = true;
                    MatchFlag::TruePositive
                }
            }
            _ => MatchFlag::FalsePositive,
        };
        flags.push(flag);
    }
    Ok(MatchResult { order, flags, gt_matched, iou_threshold })
}

/// Cumulative precision/recall over the ranked detections. Ignored
/// detections are skipped. With `num_gt == 0` every recall is 0.
pub fn pr_curve(m: &MatchResult, num_gt: usize) -> PrCurve {
    let mut curve = PrCurve::default();
    let (mut tp, mut seen) = (0usize, 0usize);
    for flag in &m.flags {
        match flag {
            MatchFlag::Ignored => continue,
            MatchFlag::TruePositive => tp += 1,
            MatchFlag::FalsePositive => {}
        }
        seen += 1;
        curve.recall.push(if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 });
        curve.precision.push(tp as f64 / seen as f64);
    }
    curve
}

/// All-point interpolated AP: the precision envelope (running maximum from
/// the right) integrated over recall.
pub fn average_precision(c: &PrCurve) -> f64 {
    if c.recall.is_empty() {
        return 0.0;
    }
    let mut envelope = c.precision.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (&r, &p) in c.recall.iter().zip(&envelope) {
        if r > prev_recall {
            ap += (r - prev_recall) * p;
            prev_recall = r;
        }
    }
    ap.clamp(0.0, 1.0)
}

/// Full evaluation over the manifest's categories. Categories with neither
/// groundtruth nor detections are left out of the report and the means.
pub fn evaluate(
    dets: &[DetectionRecord],
    gts: &[GroundTruthRecord],
    manifest: &DatasetManifest,
    iou_threshold: f64,
) -> Result<EvalReport, MetricsError> {
    check_threshold(iou_threshold)?;
    let mut det_groups: IndexMap<&str, Vec<DetectionRecord>> =
        manifest.categories.iter().map(|c| (c.as_str(), Vec::new())).collect();
    let mut gt_groups: IndexMap<&str, Vec<GroundTruthRecord>> =
        manifest.categories.iter().map(|c| (c.as_str(), Vec::new())).collect();
    for d in dets {
        det_groups
            .get_mut(d.category.as_str())
            .ok_or_else(|| MetricsError::UnknownCategory(d.category.clone()))?
            .push(d.clone());
    }
    for g in gts {
        gt_groups
            .get_mut(g.category.as_str())
            .ok_or_else(|| MetricsError::UnknownCategory(g.category.clone()))?
            .push(g.clone());
    }

    let mut per_category = IndexMap::new();
    for category in &manifest.categories {
        let cat_dets = &det_groups[category.as_str()];
        let cat_gts = &gt_groups[category.as_str()];
        if cat_dets.is_empty() && cat_gts.is_empty() {
            continue;
        }
        let m = match_detections(cat_dets, cat_gts, iou_threshold)?;
        let num_gt = cat_gts.iter().filter(|g| !g.difficult).count();
        let curve = pr_curve(&m, num_gt);
        let tp = m.true_positives();
        per_category.insert(
            category.clone(),
            CategoryReport {
                ap: average_precision(&curve),
                recall: if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 },
                tp,
                fp: m.false_positives(),
                fn_: num_gt - tp,
            },
        );
    }
    let n = per_category.len();
    let mean = |f: fn(&CategoryReport) -> f64| {
        if n == 0 {
            0.0
        } else {
            per_category.values().map(f).sum::<f64>() / n as f64
        }
    };
    let map = mean(|r| r.ap);
    let ar = mean(|r| r.recall);
    Ok(EvalReport { iou_threshold, per_category, map, ar, meta: ReportMeta::default() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ObbParams;

    fn gt(image: &str, cat: &str, b: ObbParams) -> GroundTruthRecord {
        GroundTruthRecord { image_id: image.into(), quad: b.to_quad(), category: cat.into(), difficult: false }
    }

    fn det(image: &str, cat: &str, b: ObbParams, score: f64) -> DetectionRecord {
        DetectionRecord { image_id: image.into(), obb: b, category: cat.into(), score }
    }

    fn boxed(cx: f64) -> ObbParams {
        ObbParams::new(cx, 10.0, 8.0, 4.0, 0.3).unwrap()
    }

    #[test]
    fn exact_match_is_tp() {
        let m = match_detections(&[det("a", "s", boxed(10.0), 0.9)], &[gt("a", "s", boxed(10.0))], 0.5).unwrap();
        assert_eq!(m.flags, vec![MatchFlag::TruePositive]);
        assert_eq!(m.gt_matched, vec![true]);
    }

    #[test]
    fn duplicate_detection_is_fp() {
        let dets = [det("a", "s", boxed(10.0), 0.4), det("a", "s", boxed(10.0), 0.9)];
        let m = match_detections(&dets, &[gt("a", "s", boxed(10.0))], 0.5).unwrap();
        assert_eq!(m.order, vec![1, 0]);
        assert_eq!(m.flags, vec![MatchFlag::TruePositive, MatchFlag::FalsePositive]);
    }

    #[test]
    fn threshold_boundary() {
        // two unit-height strips: IoU = overlap / (2 − overlap)
        let g = ObbParams::new(0.0, 0.0, 10.0, 1.0, 0.0).unwrap();
        // overlap 40/7 gives IoU 0.4
        let d = ObbParams::new(10.0 - 40.0 / 7.0, 0.0, 10.0, 1.0, 0.0).unwrap();
        let iou = rotated_iou(&d, &g);
        assert!((iou - 0.4).abs() < 1e-12);
        let m = match_detections(&[det("a", "s", d, 0.5)], &[gt("a", "s", g)], 0.5).unwrap();
        assert_eq!(m.flags, vec![MatchFlag::FalsePositive]);
        // threshold is inclusive
        let m = match_detections(&[det("a", "s", g, 0.5)], &[gt("a", "s", g)], 0.999_999).unwrap();
        assert_eq!(m.flags, vec![MatchFlag::TruePositive]);
    }

    #[test]
    fn other_images_never_match() {
        let m = match_detections(&[det("b", "s", boxed(10.0), 0.9)], &[gt("a", "s", boxed(10.0))], 0.5).unwrap();
        assert_eq!(m.flags, vec![MatchFlag::FalsePositive]);
    }

    #[test]
    fn difficult_matches_are_ignored() {
        let mut g = gt("a", "s", boxed(10.0));
        g.difficult = true;
        let m = match_detections(&[det("a", "s", boxed(10.0), 0.9)], &[g], 0.5).unwrap();
        assert_eq!(m.flags, vec![MatchFlag::Ignored]);
        assert_eq!(m.gt_matched, vec![false]);
        assert!(pr_curve(&m, 0).recall.is_empty());
    }

    #[test]
    fn mixed_categories_rejected() {
        let err = match_detections(&[det("a", "s", boxed(10.0), 0.9)], &[gt("a", "t", boxed(10.0))], 0.5);
        assert!(matches!(err, Err(MetricsError::MixedCategories(..))));
        assert!(matches!(match_detections(&[], &[], 1.0), Err(MetricsError::BadThreshold(_))));
    }

    fn curve_of(flags: &[MatchFlag], num_gt: usize) -> PrCurve {
        let m = MatchResult {
            order: (0..flags.len()).collect(),
            flags: flags.to_vec(),
            gt_matched: vec![],
            iou_threshold: 0.5,
        };
        pr_curve(&m, num_gt)
    }

    #[test]
    fn pr_curves() {
        use MatchFlag::*;
        let c = curve_of(&[TruePositive], 1);
        assert_eq!((c.recall, c.precision), (vec![1.0], vec![1.0]));
        let c = curve_of(&[TruePositive, FalsePositive], 1);
        assert_eq!((c.recall.clone(), c.precision.clone()), (vec![1.0, 1.0], vec![1.0, 0.5]));
        assert_eq!(average_precision(&c), 1.0);
        let c = curve_of(&[FalsePositive, TruePositive], 2);
        assert_eq!((c.recall.clone(), c.precision.clone()), (vec![0.0, 0.5], vec![0.0, 0.5]));
        assert_eq!(average_precision(&c), 0.25);
        let c = curve_of(&[FalsePositive, TruePositive], 0);
        assert_eq!(c.recall, vec![0.0, 0.0]);
        assert_eq!(average_precision(&c), 0.0);
        assert_eq!(average_precision(&PrCurve::default()), 0.0);
    }

    #[test]
    fn ap_envelope_by_hand() {
        use MatchFlag::*;
        // TP FP TP FP TP over 4 gts
        // recall    .25 .25 .5  .5  .75
        // precision 1   .5  2/3 .5  .6
        // envelope  1   2/3 2/3 .6  .6  → .25·1 + .25·2/3 + .25·.6
        let c = curve_of(&[TruePositive, FalsePositive, TruePositive, FalsePositive, TruePositive], 4);
        let expected = 0.25 + 0.25 * 2.0 / 3.0 + 0.25 * 0.6;
        assert!((average_precision(&c) - expected).abs() < 1e-15);
    }

    fn manifest(cats: &[&str], gts: &[GroundTruthRecord]) -> DatasetManifest {
        DatasetManifest {
            images: vec![("a".into(), crate::geometry::ImageSize::square(100).unwrap())],
            groundtruth: gts.to_vec(),
            categories: cats.iter().map(|c| c.to_string()).collect(),
        }
    }

    #[test]
    fn evaluate_examples() {
        let gts = vec![gt("a", "ship", boxed(10.0)), gt("a", "ship", boxed(40.0)), gt("a", "plane", boxed(70.0))];
        let m = manifest(&["ship", "plane", "car"], &gts);
        let perfect: Vec<_> = gts.iter().map(|g| det("a", &g.category, g.obb().unwrap(), 1.0)).collect();
        let r = evaluate(&perfect, &gts, &m, 0.5).unwrap();
        assert_eq!((r.map, r.ar), (1.0, 1.0));
        assert_eq!(r.per_category.len(), 2);
        assert!(r.per_category.values().all(|c| c.fp == 0 && c.fn_ == 0));

        let r = evaluate(&[], &gts, &m, 0.5).unwrap();
        assert_eq!(r.map, 0.0);
        assert_eq!(r.per_category.values().map(|c| c.fn_).sum::<usize>(), 3);

        let half: Vec<_> = perfect.iter().filter(|d| d.category == "ship").cloned().collect();
        let r = evaluate(&half, &gts, &m, 0.5).unwrap();
        assert_eq!(r.map, 0.5);
        assert_eq!(r.ar, 0.5);

        let unknown = vec![det("a", "boat", boxed(10.0), 1.0)];
        assert_eq!(evaluate(&unknown, &gts, &m, 0.5), Err(MetricsError::UnknownCategory("boat".into())));
    }

    #[test]
    fn report_key_order() {
        let gts = vec![gt("a", "ship", boxed(10.0))];
        let r = evaluate(&[], &gts, &manifest(&["ship"], &gts), 0.5).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        let pos = |k: &str| s.find(k).unwrap();
        assert!(pos("\"iou_threshold\"") < pos("\"per_category\""));
        assert!(pos("\"per_category\"") < pos("\"mAP\""));
        assert!(pos("\"mAP\"") < pos("\"AR\""));
        assert!(s.contains(r#""ship":{"ap":0.0,"recall":0.0,"tp":0,"fp":0,"fn":1}"#));
    }
}
