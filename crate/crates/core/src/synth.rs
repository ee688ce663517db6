//! Deterministic synthetic datasets with a planted object cluster.
//!
//! Embeddings are isotropic Gaussian blobs around unit-norm centroids: one
//! object blob, a few distractor blobs (context objects that co-occur more
//! often with the object but also show up in negative frames) and background
//! blobs. Half the videos are "positive" (the object was mentioned); a
//! `noise_level` fraction of their frames contain no object at all.
//!
//! Each frame is generated from its own derived random stream, so the output
//! is a pure function of the config.

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::math;
use crate::model::{Dataset, FrameId, FrameRecord, GroundTruth, RegionId, RegionRecord, VideoId};
use crate::rng::{self, Stage, StreamRng};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Nominal frame extent in pixels.
pub const FRAME_WIDTH: f64 = 640.0;
pub const FRAME_HEIGHT: f64 = 360.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub object_name: String,
    pub n_videos: usize,
    pub frames_per_video: usize,
    pub regions_per_frame: usize,
    pub dim: usize,
    /// Fraction of positive frames that do not contain the object.
    pub noise_level: f64,
    pub n_distractor_clusters: usize,
    pub n_background_clusters: usize,
    pub object_spread: f64,
    pub distractor_spread: f64,
    pub background_spread: f64,
    /// Object box size relative to the frame extent.
    pub object_box_scale: f64,
    /// Jittered proposals around each object instance.
    pub object_regions_per_frame: usize,
    /// Lower IoU bound between an object proposal and its ground-truth box.
    pub min_object_iou: f64,
    /// Fraction of a clean frame's proposals that only graze the object.
    pub near_miss_fraction: f64,
    /// How far near-miss embeddings sit from the object centroid towards a background centroid.
    pub near_miss_blend: f64,
    /// Probability that a non-object region in a positive frame is a distractor.
    pub distractor_rate_positive: f64,
    /// Same, for negative frames.
    pub distractor_rate_negative: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            object_name: String::from("object"),
            n_videos: 20,
            frames_per_video: 25,
            regions_per_frame: 50,
            dim: 64,
            noise_level: 0.515,
            n_distractor_clusters: 3,
            n_background_clusters: 4,
            object_spread: 0.035,
            distractor_spread: 0.04,
            background_spread: 0.05,
            object_box_scale: 0.25,
            object_regions_per_frame: 8,
            min_object_iou: 0.65,
            near_miss_fraction: 0.04,
            near_miss_blend: 0.2,
            distractor_rate_positive: 0.2,
            distractor_rate_negative: 0.15,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// A small instance for fast tests.
    pub fn small() -> Self {
        SynthConfig {
            n_videos: 6,
            frames_per_video: 6,
            regions_per_frame: 20,
            dim: 16,
            ..SynthConfig::default()
        }
    }

    fn near_miss_count(&self) -> usize {
        math::round(self.near_miss_fraction * self.regions_per_frame as f64) as usize
    }

    pub fn n_positive_videos(&self) -> usize {
        self.n_videos - self.n_videos / 2
    }

    pub fn n_positive_frames(&self) -> usize {
        self.n_positive_videos() * self.frames_per_video
    }

    /// Number of positive frames without the object.
    pub fn n_noisy_frames(&self) -> usize {
        math::round(self.noise_level * self.n_positive_frames() as f64) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_videos < 2 {
            return fail(format!("n_videos = {} but need at least 2", self.n_videos));
        }
        if self.frames_per_video < 1 {
            return fail(String::from("frames_per_video must be at least 1"));
        }
        if self.regions_per_frame < 2 {
            return fail(format!("regions_per_frame = {} but need at least 2", self.regions_per_frame));
        }
        if self.dim < 1 {
            return fail(String::from("dim must be positive"));
        }
        if !(0.0..1.0).contains(&self.noise_level) {
            return fail(format!("noise_level {} outside [0, 1)", self.noise_level));
        }
        for (name, s) in [
            ("object_spread", self.object_spread),
            ("distractor_spread", self.distractor_spread),
            ("background_spread", self.background_spread),
        ] {
            if !(s > 0.0) || !s.is_finite() {
                return fail(format!("{} must be positive, got {}", name, s));
            }
        }
        if self.n_background_clusters < 1 {
            return fail(String::from("need at least one background cluster"));
        }
        if !(self.object_box_scale > 0.0 && self.object_box_scale < 0.8) {
            return fail(format!("object_box_scale {} outside (0, 0.8)", self.object_box_scale));
        }
        if self.object_regions_per_frame < 1 {
            return fail(String::from("object_regions_per_frame must be at least 1"));
        }
        if !(0.5..1.0).contains(&self.min_object_iou) {
            return fail(format!("min_object_iou {} outside [0.5, 1)", self.min_object_iou));
        }
        if !(0.0..1.0).contains(&self.near_miss_fraction) || !(0.0..1.0).contains(&self.near_miss_blend) {
            return fail(String::from("near-miss fraction and blend must lie in [0, 1)"));
        }
        for (name, p) in [
            ("distractor_rate_positive", self.distractor_rate_positive),
            ("distractor_rate_negative", self.distractor_rate_negative),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{} {} outside [0, 1]", name, p));
            }
        }
        if (self.distractor_rate_positive > 0.0 || self.distractor_rate_negative > 0.0)
            && self.n_distractor_clusters == 0
        {
            return fail(String::from("distractor rates are positive but there are no distractor clusters"));
        }
        if self.object_regions_per_frame + self.near_miss_count() > self.regions_per_frame {
            return fail(format!(
                "{} object and {} near-miss proposals do not fit in {} regions per frame",
                self.object_regions_per_frame,
                self.near_miss_count(),
                self.regions_per_frame
            ));
        }
        if self.n_noisy_frames() >= self.n_positive_frames() {
            return fail(format!(
                "noise_level {} leaves no clean positive frame out of {}",
                self.noise_level,
                self.n_positive_frames()
            ));
        }
        Ok(())
    }
}

/// What the generator planted, for oracle checks.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantReport {
    /// Index of the object blob in `centroids`.
    pub object_centroid_index: usize,
    /// All blob centroids: object, distractors, then backgrounds.
    pub centroids: Vec<Vec<f64>>,
    /// Proposals with IoU >= `min_object_iou` against a ground-truth box.
    pub object_region_ids: Vec<RegionId>,
    pub near_miss_region_ids: Vec<RegionId>,
    pub clean_frame_ids: Vec<FrameId>,
    pub noisy_frame_ids: Vec<FrameId>,
}

impl PlantReport {
    pub fn object_centroid(&self) -> &[f64] {
        &self.centroids[self.object_centroid_index]
    }

    pub fn is_object(&self, id: RegionId) -> bool {
        self.object_region_ids.binary_search(&id).is_ok()
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub ground_truth: GroundTruth,
    pub plant: PlantReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Object,
    NearMiss,
    Distractor,
    Background,
}

pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let centroids = draw_centroids(config)?;
    let n_distractors = config.n_distractor_clusters;
    let background_offset = 1 + n_distractors;

    let n_pos_frames = config.n_positive_frames();
    let mut noisy = vec![false; n_pos_frames];
    for flag in noisy.iter_mut().take(config.n_noisy_frames()) {
        *flag = true;
    }
    noisy.shuffle(&mut rng::stream(config.seed, Stage::SynthNoise, &[]));

    let n_near = config.near_miss_count();
    let n_frames = config.n_videos * config.frames_per_video;
    let mut frames = Vec::with_capacity(n_frames);
    let mut regions = Vec::with_capacity(n_frames * config.regions_per_frame);
    let mut embeddings = Vec::with_capacity(n_frames * config.regions_per_frame * config.dim);
    let mut ground_truth = GroundTruth::new();
    let mut plant = PlantReport {
        object_centroid_index: 0,
        centroids: centroids.clone(),
        object_region_ids: Vec::new(),
        near_miss_region_ids: Vec::new(),
        clean_frame_ids: Vec::new(),
        noisy_frame_ids: Vec::new(),
    };

    for video in 0..config.n_videos {
        let positive = video < config.n_positive_videos();
        for f in 0..config.frames_per_video {
            let frame_index = video * config.frames_per_video + f;
            let frame_id = FrameId(frame_index as u64);
            let mut rng = rng::stream(config.seed, Stage::SynthFrame, &[frame_index as u64]);
            let clean = positive && !noisy[frame_index];
            frames.push(FrameRecord { frame_id, video_id: VideoId(video as u64), positive });

            let mut slots = Vec::with_capacity(config.regions_per_frame);
            if clean {
                slots.extend(core::iter::repeat_n(Slot::Object, config.object_regions_per_frame));
                slots.extend(core::iter::repeat_n(Slot::NearMiss, n_near));
            }
            let distractor_rate =
                if positive { config.distractor_rate_positive } else { config.distractor_rate_negative };
            while slots.len() < config.regions_per_frame {
                slots.push(if rng.random_bool(distractor_rate) { Slot::Distractor } else { Slot::Background });
            }
            slots.shuffle(&mut rng);

            let object_box = if clean {
                let b = object_box(config, &mut rng);
                ground_truth.insert(frame_id, vec![b])?;
                plant.clean_frame_ids.push(frame_id);
                Some(b)
            } else {
                if positive {
                    ground_truth.insert(frame_id, Vec::new())?;
                    plant.noisy_frame_ids.push(frame_id);
                }
                None
            };

            for (r, slot) in slots.into_iter().enumerate() {
                let region_id = RegionId((frame_index * config.regions_per_frame + r) as u64);
                let (bbox, center, blend_towards, spread) = match slot {
                    Slot::Object => {
                        plant.object_region_ids.push(region_id);
                        let gt = object_box.expect("object slot in clean frame");
                        (jittered_box(&gt, config.min_object_iou, &mut rng), 0, None, config.object_spread)
                    }
                    Slot::NearMiss => {
                        plant.near_miss_region_ids.push(region_id);
                        let gt = object_box.expect("near-miss slot in clean frame");
                        let bg = background_offset + rng.random_range(0..config.n_background_clusters);
                        (near_miss_box(&gt, &mut rng), 0, Some(bg), config.object_spread)
                    }
                    Slot::Distractor => {
                        let c = 1 + rng.random_range(0..n_distractors);
                        (background_box(&mut rng), c, None, config.distractor_spread)
                    }
                    Slot::Background => {
                        let c = background_offset + rng.random_range(0..config.n_background_clusters);
                        (background_box(&mut rng), c, None, config.background_spread)
                    }
                };
                let mu = &centroids[center];
                for d in 0..config.dim {
                    let mut base = mu[d];
                    if let Some(bg) = blend_towards {
                        base += config.near_miss_blend * (centroids[bg][d] - mu[d]);
                    }
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    embeddings.push((base + spread * noise) as f32);
                }
                regions.push(RegionRecord { region_id, frame_id, bbox, positive });
            }
        }
    }

    plant.object_region_ids.sort_unstable();
    plant.near_miss_region_ids.sort_unstable();
    let dataset = Dataset::new(config.object_name.clone(), config.dim, frames, regions, embeddings)?;
    Ok(SynthOutput { dataset, ground_truth, plant })
}

fn draw_centroids(config: &SynthConfig) -> Result<Vec<Vec<f64>>> {
    let total = 1 + config.n_distractor_clusters + config.n_background_clusters;
    let max_spread = config.object_spread.max(config.distractor_spread).max(config.background_spread);
    let min_separation = 4.0 * max_spread;
    let mut rng = rng::stream(config.seed, Stage::SynthCentroids, &[]);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(total);
    let mut attempts = 0;
    while centroids.len() < total {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::Config(format!(
                "could not place {} unit centroids at pairwise distance >= {}",
                total, min_separation
            )));
        }
        let mut v: Vec<f64> = (0..config.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = math::sqrt(v.iter().map(|x| x * x).sum());
        if norm == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let far_enough = centroids.iter().all(|c| {
            let d2: f64 = c.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
            math::sqrt(d2) >= min_separation
        });
        if far_enough {
            centroids.push(v);
        }
    }
    Ok(centroids)
}

fn object_box(config: &SynthConfig, rng: &mut StreamRng) -> BBox {
    let w = config.object_box_scale * FRAME_WIDTH * rng.random_range(0.75..1.25);
    let h = config.object_box_scale * FRAME_HEIGHT * rng.random_range(0.75..1.25);
    let x1 = rng.random_range(0.0..FRAME_WIDTH - w);
    let y1 = rng.random_range(0.0..FRAME_HEIGHT - h);
    BBox { x1, y1, x2: x1 + w, y2: y1 + h }
}

fn gaussian(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

fn jittered_box(gt: &BBox, min_iou: f64, rng: &mut StreamRng) -> BBox {
    let (sw, sh) = (0.06 * gt.width(), 0.06 * gt.height());
    for _ in 0..64 {
        let b = BBox {
            x1: gt.x1 + sw * gaussian(rng),
            y1: gt.y1 + sh * gaussian(rng),
            x2: gt.x2 + sw * gaussian(rng),
            y2: gt.y2 + sh * gaussian(rng),
        };
        if b.validate().is_ok() && b.iou(gt) >= min_iou {
            return b;
        }
    }
    *gt
}

fn near_miss_box(gt: &BBox, rng: &mut StreamRng) -> BBox {
    for _ in 0..64 {
        let scale = rng.random_range(0.7..1.3);
        let (w, h) = (gt.width() * scale, gt.height() * scale);
        let theta = rng.random_range(0.0..core::f64::consts::TAU);
        let reach = rng.random_range(0.5..1.1);
        let cx = (gt.x1 + gt.x2) / 2.0 + reach * gt.width() * libm::cos(theta);
        let cy = (gt.y1 + gt.y2) / 2.0 + reach * gt.height() * libm::sin(theta);
        let b = BBox { x1: cx - w / 2.0, y1: cy - h / 2.0, x2: cx + w / 2.0, y2: cy + h / 2.0 };
        let v = b.iou(gt);
        if v > 0.02 && v < 0.38 {
            return b;
        }
    }
    // Slid 80% of a width sideways: IoU = 0.2 / 1.8.
    gt.translate(0.8 * gt.width(), 0.0)
}

fn background_box(rng: &mut StreamRng) -> BBox {
    let w = FRAME_WIDTH * rng.random_range(0.06..0.5);
    let h = FRAME_HEIGHT * rng.random_range(0.06..0.5);
    let x1 = rng.random_range(0.0..FRAME_WIDTH - w);
    let y1 = rng.random_range(0.0..FRAME_HEIGHT - h);
    BBox { x1, y1, x2: x1 + w, y2: y1 + h }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noisy_fraction_matches_table_average() {
        // 10 positive videos x 10 frames = 100 positive frames at 51.5% noise.
        let cfg = SynthConfig { n_videos: 20, frames_per_video: 10, regions_per_frame: 12, dim: 8, ..SynthConfig::default() };
        let out = generate(&cfg).unwrap();
        let noisy = out.plant.noisy_frame_ids.len();
        assert!(noisy == 51 || noisy == 52, "noisy = {}", noisy);
        assert_eq!(out.plant.clean_frame_ids.len() + noisy, 100);
        let realized = noisy as f64 / 100.0;
        assert!((realized - cfg.noise_level).abs() < 1.0 / 100.0);
    }

    #[test]
    fn zero_noise_gives_every_positive_frame_an_object() {
        let cfg = SynthConfig { noise_level: 0.0, ..SynthConfig::small() };
        let out = generate(&cfg).unwrap();
        for f in out.dataset.frames().iter().filter(|f| f.positive) {
            assert_eq!(out.ground_truth.get(f.frame_id).len(), 1);
            let fi = out.dataset.frame_position(f.frame_id).unwrap();
            let planted = out.dataset.frame_regions(fi).iter()
                .filter(|&&r| out.plant.is_object(out.dataset.regions()[r].region_id))
                .count();
            assert!(planted >= 1);
        }
    }

    #[test]
    fn negative_frames_never_hold_objects() {
        let out = generate(&SynthConfig::small()).unwrap();
        for f in out.dataset.frames().iter().filter(|f| !f.positive) {
            assert!(out.ground_truth.get(f.frame_id).is_empty());
            let fi = out.dataset.frame_position(f.frame_id).unwrap();
            for &r in out.dataset.frame_regions(fi) {
                let id = out.dataset.regions()[r].region_id;
                assert!(!out.plant.is_object(id));
                assert!(out.plant.near_miss_region_ids.binary_search(&id).is_err());
            }
        }
    }

    #[test]
    fn object_proposals_overlap_their_ground_truth() {
        let out = generate(&SynthConfig::small()).unwrap();
        let ds = &out.dataset;
        for &id in &out.plant.object_region_ids {
            let r = &ds.regions()[ds.region_position(id).unwrap()];
            let gt = out.ground_truth.get(r.frame_id)[0];
            assert!(r.bbox.iou(&gt) >= 0.5);
        }
        for &id in &out.plant.near_miss_region_ids {
            let r = &ds.regions()[ds.region_position(id).unwrap()];
            let v = r.bbox.iou(&out.ground_truth.get(r.frame_id)[0]);
            assert!(v > 0.0 && v < 0.4, "near miss iou {}", v);
        }
    }

    #[test]
    fn generation_is_a_pure_function_of_the_config() {
        let a = generate(&SynthConfig::small()).unwrap();
        let b = generate(&SynthConfig::small()).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.ground_truth, b.ground_truth);
        assert_eq!(a.plant, b.plant);
        let c = generate(&SynthConfig { seed: 1, ..SynthConfig::small() }).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn distractors_occur_in_both_frame_labels() {
        let cfg = SynthConfig::default();
        let out = generate(&SynthConfig { n_videos: 4, frames_per_video: 5, dim: 8, ..cfg }).unwrap();
        let ds = &out.dataset;
        let distractors: Vec<&Vec<f64>> = out.plant.centroids[1..1 + 3].iter().collect();
        let mut seen = [false, false];
        for (i, r) in ds.regions().iter().enumerate() {
            let z = ds.embedding(i);
            let near_distractor = distractors.iter().any(|c| crate::math::squared_distance(z, c) < 0.1);
            if near_distractor {
                seen[r.positive as usize] = true;
            }
        }
        assert_eq!(seen, [true, true]);
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let all_noisy = SynthConfig { noise_level: 0.99, n_videos: 2, frames_per_video: 10, ..SynthConfig::small() };
        assert!(matches!(generate(&all_noisy), Err(Error::Config(_))));
        let crowded = SynthConfig { regions_per_frame: 4, object_regions_per_frame: 5, ..SynthConfig::small() };
        assert!(generate(&crowded).is_err());
        assert!(generate(&SynthConfig { noise_level: 1.0, ..SynthConfig::small() }).is_err());
        assert!(generate(&SynthConfig { object_spread: 0.0, ..SynthConfig::small() }).is_err());
    }
}
