use super::mlp::Mlp;
use super::sampler::POSITIVE;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::model::{Dataset, FrameId, RegionId};
use alloc::vec::Vec;

const SCORING_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame_id: FrameId,
    pub region_id: RegionId,
    pub bbox: BBox,
    /// Positive-class probability.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectOptions {
    pub nms_iou: f64,
    pub score_threshold: f64,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions { nms_iou: 0.3, score_threshold: 0.5 }
    }
}

/// Greedy suppression; equal scores keep their input order.
pub fn nms(mut detections: Vec<Detection>, iou_threshold: f64) -> Vec<Detection> {
    detections.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut kept: Vec<Detection> = Vec::with_capacity(detections.len());
    for d in detections {
        if kept.iter().all(|k| k.bbox.iou(&d.bbox) < iou_threshold) {
            kept.push(d);
        }
    }
    kept
}

/// Positive-class probabilities for the given dataset positions.
pub fn score_regions(mlp: &Mlp, dataset: &Dataset, regions: &[usize]) -> Result<Vec<f64>> {
    if mlp.input_dim() != dataset.dim() {
        return Err(Error::invalid("detector input width does not match the dataset"));
    }
    let mut scores = Vec::with_capacity(regions.len());
    let mut inputs = Vec::with_capacity(SCORING_CHUNK * dataset.dim());
    for chunk in regions.chunks(SCORING_CHUNK) {
        inputs.clear();
        for &r in chunk {
            inputs.extend_from_slice(dataset.embedding(r));
        }
        let probs = mlp.predict(&inputs)?;
        scores.extend(probs.chunks_exact(mlp.classes()).map(|p| p[POSITIVE]));
    }
    Ok(scores)
}

fn finish_frame(dataset: &Dataset, regions: &[usize], scores: &[f64], opts: DetectOptions) -> Vec<Detection> {
    let candidates = regions
        .iter()
        .zip(scores)
        .filter(|&(_, &s)| s >= opts.score_threshold)
        .map(|(&r, &score)| {
            let rec = &dataset.regions()[r];
            Detection { frame_id: rec.frame_id, region_id: rec.region_id, bbox: rec.bbox, score }
        })
        .collect();
    nms(candidates, opts.nms_iou)
}

pub fn detect_frame(mlp: &Mlp, dataset: &Dataset, frame: usize, opts: DetectOptions) -> Result<Vec<Detection>> {
    let regions = dataset.frame_regions(frame);
    let scores = score_regions(mlp, dataset, regions)?;
    Ok(finish_frame(dataset, regions, &scores, opts))
}

/// Detections for every frame, concatenated in ascending frame id order.
pub fn detect_all(mlp: &Mlp, dataset: &Dataset, opts: DetectOptions) -> Result<Vec<Detection>> {
    let all: Vec<usize> = (0..dataset.n_regions()).collect();
    let scores = score_regions(mlp, dataset, &all)?;
    let mut order: Vec<usize> = (0..dataset.frames().len()).collect();
    order.sort_by_key(|&f| dataset.frames()[f].frame_id);
    let mut out = Vec::new();
    let mut frame_scores = Vec::new();
    for f in order {
        let regions = dataset.frame_regions(f);
        frame_scores.clear();
        frame_scores.extend(regions.iter().map(|&r| scores[r]));
        out.extend(finish_frame(dataset, regions, &frame_scores, opts));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::DetectorParams;
    use crate::rng::{self, Stage};
    use crate::synth::{generate, SynthConfig};
    use alloc::vec;
    use proptest::prelude::*;
    use rand::Rng;

    fn det(i: u64, b: [f64; 4], score: f64) -> Detection {
        Detection { frame_id: FrameId(0), region_id: RegionId(i), bbox: BBox::from_array(b).unwrap(), score }
    }

    /// Scan-and-remove reference: pick the best remaining, drop its overlaps, repeat.
    fn nms_oracle(dets: &[Detection], thr: f64) -> Vec<Detection> {
        let mut remaining: Vec<(usize, Detection)> = dets.iter().copied().enumerate().collect();
        let mut kept = Vec::new();
        while !remaining.is_empty() {
            let mut best = 0;
            for (i, (pos, d)) in remaining.iter().enumerate() {
                let (bpos, bd) = remaining[best];
                if d.score > bd.score || (d.score == bd.score && *pos < bpos) {
                    best = i;
                }
            }
            let (_, top) = remaining.remove(best);
            remaining.retain(|(_, d)| top.bbox.iou(&d.bbox) < thr);
            kept.push(top);
        }
        kept
    }

    #[test]
    fn duplicate_boxes_keep_the_best() {
        let b = [10.0, 10.0, 50.0, 50.0];
        let kept = nms(vec![det(1, b, 0.8), det(2, b, 0.9)], 0.3);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 0.9);
    }

    #[test]
    fn disjoint_and_single() {
        let d = vec![det(1, [0.0, 0.0, 1.0, 1.0], 0.5), det(2, [5.0, 5.0, 6.0, 6.0], 0.7)];
        assert_eq!(nms(d.clone(), 0.3).len(), 2);
        assert_eq!(nms(d[..1].to_vec(), 0.3), d[..1].to_vec());
    }

    #[test]
    fn chain_of_three() {
        // a~b and b~c overlap by 1/3, a and c do not touch.
        let a = det(1, [0.0, 0.0, 2.0, 1.0], 0.6);
        let b = det(2, [1.0, 0.0, 3.0, 1.0], 0.9);
        let c = det(3, [2.0, 0.0, 4.0, 1.0], 0.7);
        let all = vec![a, b, c];
        assert_eq!(nms(all.clone(), 0.3), vec![b]);
        assert_eq!(nms(all.clone(), 0.3), nms_oracle(&all, 0.3));
        assert_eq!(nms(all.clone(), 0.5), vec![b, c, a]);
        assert_eq!(nms(all.clone(), 0.5), nms_oracle(&all, 0.5));
    }

    #[test]
    fn ten_box_fixture_matches_oracle() {
        let mut r = rng::stream(11, Stage::SynthFrame, &[]);
        let dets: Vec<Detection> = (0..10)
            .map(|i| {
                let x = r.random_range(0.0..60.0);
                let y = r.random_range(0.0..60.0);
                let w = r.random_range(10.0..40.0);
                let h = r.random_range(10.0..40.0);
                det(i, [x, y, x + w, y + h], (r.random_range(0..5) as f64) / 5.0)
            })
            .collect();
        for thr in [0.1, 0.3, 0.5] {
            assert_eq!(nms(dets.clone(), thr), nms_oracle(&dets, thr));
        }
    }

    proptest! {
        #[test]
        fn nms_agrees_with_oracle(raw in proptest::collection::vec((0.0..50.0f64, 0.0..50.0f64, 1.0..30.0f64, 1.0..30.0f64, 0u8..6), 0..12), thr in 0.05..0.9f64) {
            let dets: Vec<Detection> = raw.iter().enumerate().map(|(i, &(x, y, w, h, s))| det(i as u64, [x, y, x + w, y + h], s as f64 / 5.0)).collect();
            prop_assert_eq!(nms(dets.clone(), thr), nms_oracle(&dets, thr));
        }
    }

    #[test]
    fn detect_frame_thresholds_and_sorts() {
        let out = generate(&SynthConfig::small()).unwrap();
        let ds = &out.dataset;
        let p = DetectorParams::new(ds.dim(), &[8], 2).unwrap();
        let none = detect_frame(&p.mlp, ds, 0, DetectOptions { nms_iou: 0.3, score_threshold: 1.1 }).unwrap();
        assert!(none.is_empty());
        let some = detect_frame(&p.mlp, ds, 0, DetectOptions { nms_iou: 1.1, score_threshold: 0.0 }).unwrap();
        assert_eq!(some.len(), ds.frame_regions(0).len());
        assert!(some.windows(2).all(|w| w[0].score >= w[1].score));
        let fid = ds.frames()[0].frame_id;
        assert!(some.iter().all(|d| d.frame_id == fid));
    }

    #[test]
    fn detect_all_matches_per_frame() {
        let out = generate(&SynthConfig::small()).unwrap();
        let ds = &out.dataset;
        let p = DetectorParams::new(ds.dim(), &[8], 3).unwrap();
        let opts = DetectOptions { nms_iou: 0.3, score_threshold: 0.4 };
        let all = detect_all(&p.mlp, ds, opts).unwrap();
        let mut per: Vec<Detection> = Vec::new();
        let mut order: Vec<usize> = (0..ds.frames().len()).collect();
        order.sort_by_key(|&f| ds.frames()[f].frame_id);
        for f in order {
            per.extend(detect_frame(&p.mlp, ds, f, opts).unwrap());
        }
        assert_eq!(all, per);
    }
}
