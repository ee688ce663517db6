//! Average precision against ground truth, and nearest-to-centroid retrieval.

use crate::detector::{detect_all, DetectOptions, Detection, Mlp};
use crate::dsd::MinedSet;
use crate::error::{Error, Result};
use crate::math;
use crate::model::{Dataset, FrameId, GroundTruth, RegionId, VideoId};
use crate::scoring::Scorecard;
use crate::wdec::ClusterState;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Indices of `detections` by descending score, ties by frame then region, then input order.
fn ranked(detections: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        let (da, db) = (&detections[a], &detections[b]);
        db.score
            .total_cmp(&da.score)
            .then(da.frame_id.cmp(&db.frame_id))
            .then(da.region_id.cmp(&db.region_id))
    });
    order
}

/// True-positive flags in ranked order, plus the ground-truth box count.
pub fn match_detections(detections: &[Detection], gt: &GroundTruth, iou_threshold: f64) -> (Vec<bool>, usize) {
    let mut taken: BTreeMap<FrameId, Vec<bool>> = BTreeMap::new();
    let flags = ranked(detections)
        .into_iter()
        .map(|i| {
            let d = &detections[i];
            let boxes = gt.get(d.frame_id);
            let used = taken.entry(d.frame_id).or_insert_with(|| vec![false; boxes.len()]);
            let mut best: Option<(usize, f64)> = None;
            for (j, b) in boxes.iter().enumerate() {
                if used[j] {
                    continue;
                }
                let iou = d.bbox.iou(b);
                if best.is_none_or(|(_, v)| iou > v) {
                    best = Some((j, iou));
                }
            }
            match best {
                Some((j, iou)) if iou >= iou_threshold => {
                    used[j] = true;
                    true
                }
                _ => false,
            }
        })
        .collect();
    (flags, gt.total_boxes())
}

/// Area under the all-points interpolated precision-recall curve.
pub fn average_precision(detections: &[Detection], gt: &GroundTruth, iou_threshold: f64) -> Result<f64> {
    let (flags, total) = match_detections(detections, gt, iou_threshold);
    if total == 0 {
        return Err(Error::Evaluation("no ground-truth boxes; average precision is undefined".into()));
    }
    let mut recall = Vec::with_capacity(flags.len() + 2);
    let mut precision = Vec::with_capacity(flags.len() + 2);
    recall.push(0.0);
    precision.push(0.0);
    let mut tp = 0usize;
    for (k, &hit) in flags.iter().enumerate() {
        tp += usize::from(hit);
        recall.push(tp as f64 / total as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    recall.push(1.0);
    precision.push(0.0);
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    for i in 1..recall.len() {
        if recall[i] != recall[i - 1] {
            ap += (recall[i] - recall[i - 1]) * precision[i];
        }
    }
    Ok(ap)
}

pub fn mean_average_precision(aps: &[f64]) -> Result<f64> {
    if aps.is_empty() {
        return Err(Error::Evaluation("no per-class results to average".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub object_name: String,
    /// `(iou threshold, AP)` in the order requested.
    pub ap_by_threshold: Vec<(f64, f64)>,
    pub n_frames: usize,
    pub n_gt: usize,
}

impl EvalReport {
    pub fn ap_at(&self, threshold: f64) -> Option<f64> {
        self.ap_by_threshold.iter().find(|(t, _)| *t == threshold).map(|&(_, ap)| ap)
    }
}

pub fn evaluate_detections(
    detections: &[Detection],
    dataset: &Dataset,
    gt: &GroundTruth,
    iou_thresholds: &[f64],
) -> Result<EvalReport> {
    gt.bind(dataset)?;
    if iou_thresholds.is_empty() {
        return Err(Error::invalid("at least one IoU threshold is required"));
    }
    if let Some(d) = detections.iter().find(|d| dataset.frame_position(d.frame_id).is_none()) {
        return Err(Error::invalid(format!("detection in unknown frame {}", d.frame_id)));
    }
    let ap_by_threshold = iou_thresholds
        .iter()
        .map(|&t| Ok((t, average_precision(detections, gt, t)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        object_name: dataset.object_name().into(),
        ap_by_threshold,
        n_frames: dataset.frames().len(),
        n_gt: gt.total_boxes(),
    })
}

/// Detects on every frame and scores the result at each threshold.
pub fn evaluate(
    mlp: &Mlp,
    dataset: &Dataset,
    gt: &GroundTruth,
    iou_thresholds: &[f64],
    opts: DetectOptions,
) -> Result<(EvalReport, Vec<Detection>)> {
    let detections = detect_all(mlp, dataset, opts)?;
    let report = evaluate_detections(&detections, dataset, gt, iou_thresholds)?;
    Ok((report, detections))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Retrieved {
    pub region_id: RegionId,
    pub video_id: VideoId,
    pub distance: f64,
    /// Picked after distinct videos ran out.
    pub relaxed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    pub cluster: usize,
    pub regions: Vec<Retrieved>,
}

impl Retrieval {
    pub fn relaxed(&self) -> bool {
        self.regions.iter().any(|r| r.relaxed)
    }
}

/// The `n` mined survivors of the top cluster nearest its centroid, one per video where possible.
pub fn retrieve_top_n(
    dataset: &Dataset,
    state: &ClusterState,
    scorecard: &Scorecard,
    mined: &MinedSet,
    n: usize,
) -> Result<Retrieval> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if scorecard.k() != state.k {
        return Err(Error::invalid("scorecard and cluster state disagree on K"));
    }
    let cluster = scorecard.top();
    let centroid = state.centroid(cluster);
    let mut pool = mined
        .positives
        .iter()
        .filter(|p| p.cluster == cluster)
        .map(|p| {
            let r = dataset
                .region_position(p.region_id)
                .ok_or_else(|| Error::Retrieval(format!("mined region {} not in dataset", p.region_id)))?;
            let distance = math::sqrt(math::squared_distance(dataset.embedding(r), centroid));
            Ok(Retrieved { region_id: p.region_id, video_id: dataset.frame_of_region(r).video_id, distance, relaxed: false })
        })
        .collect::<Result<Vec<_>>>()?;
    if pool.is_empty() {
        return Err(Error::Retrieval(format!("top cluster {} has no mined survivors", cluster)));
    }
    pool.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.region_id.cmp(&b.region_id)));
    let mut videos = BTreeSet::new();
    let mut picked = vec![false; pool.len()];
    let mut regions = Vec::with_capacity(n);
    for (i, r) in pool.iter().enumerate() {
        if regions.len() == n {
            break;
        }
        if videos.insert(r.video_id) {
            picked[i] = true;
            regions.push(*r);
        }
    }
    for (i, r) in pool.iter().enumerate() {
        if regions.len() == n {
            break;
        }
        if !picked[i] {
            regions.push(Retrieved { relaxed: true, ..*r });
        }
    }
    Ok(Retrieval { cluster, regions })
}
