//! Potential score: ranks clusters by how likely they hold the object.
//!
//! A good cluster is pure (mostly positive-frame regions), compact, and drawn
//! from many videos. Per cluster the raw score is `P² · ln U / V`; the raw
//! scores are divided by their sum and passed through a softmax at
//! temperature `τ`. `U` is used unnormalized so `ln U ≥ 0`, which keeps the
//! ranking direction of all three criteria intact. Empty clusters are masked
//! out of the softmax and score exactly zero.

use crate::error::{Error, Result};
use crate::math;
use crate::model::{Dataset, VideoId};
use crate::wdec::ClusterState;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Floor applied to the variance before dividing by it.
pub const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterStats {
    pub count: usize,
    /// Fraction of members from positive frames.
    pub positive_ratio: f64,
    /// Mean squared distance of members to the centroid.
    pub variance: f64,
    pub unique_videos: usize,
}

impl ClusterStats {
    pub const EMPTY: ClusterStats = ClusterStats { count: 0, positive_ratio: 0.0, variance: 0.0, unique_videos: 0 };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterScore {
    pub stats: ClusterStats,
    /// `P² · ln U / max(V, floor)`, before normalization.
    pub raw: f64,
    pub score: f64,
    pub masked: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scorecard {
    pub tau: f64,
    pub clusters: Vec<ClusterScore>,
}

impl Scorecard {
    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.score).collect()
    }

    /// Cluster indices by descending score; ties go to the lower index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.clusters.len()).collect();
        order.sort_by(|&a, &b| {
            self.clusters[b].score.total_cmp(&self.clusters[a].score).then(a.cmp(&b))
        });
        order
    }

    pub fn top(&self) -> usize {
        self.ranking()[0]
    }
}

/// Purity, variance, video variety and size of every cluster.
pub fn cluster_stats(dataset: &Dataset, state: &ClusterState) -> Result<Vec<ClusterStats>> {
    state.validate(dataset.n_regions())?;
    if state.dim != dataset.dim() {
        return Err(Error::invalid("cluster state dimension differs from dataset"));
    }
    let k = state.k;
    let mut counts = vec![0usize; k];
    let mut positives = vec![0usize; k];
    let mut sq = vec![0.0f64; k];
    let mut videos: Vec<BTreeSet<VideoId>> = vec![BTreeSet::new(); k];
    for (i, &j) in state.assignments.iter().enumerate() {
        counts[j] += 1;
        if dataset.regions()[i].positive {
            positives[j] += 1;
        }
        sq[j] += math::squared_distance(dataset.embedding(i), state.centroid(j));
        videos[j].insert(dataset.frame_of_region(i).video_id);
    }
    Ok((0..k)
        .map(|j| {
            if counts[j] == 0 {
                ClusterStats::EMPTY
            } else {
                ClusterStats {
                    count: counts[j],
                    positive_ratio: positives[j] as f64 / counts[j] as f64,
                    variance: sq[j] / counts[j] as f64,
                    unique_videos: videos[j].len(),
                }
            }
        })
        .collect())
}

pub fn raw_score(stats: &ClusterStats) -> f64 {
    if stats.count == 0 {
        return 0.0;
    }
    let p = stats.positive_ratio;
    p * p * math::ln(stats.unique_videos.max(1) as f64) / stats.variance.max(VARIANCE_FLOOR)
}

pub fn potential_score(stats: &[ClusterStats], tau: f64) -> Result<Scorecard> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::Scoring(format!("temperature must be finite and non-negative, got {}", tau)));
    }
    let raws: Vec<f64> = stats.iter().map(raw_score).collect();
    let live: Vec<usize> = (0..stats.len()).filter(|&j| stats[j].count > 0).collect();
    if live.is_empty() {
        return Err(Error::Scoring(format!("all {} clusters are empty", stats.len())));
    }
    if let Some(&j) = live.iter().find(|&&j| !raws[j].is_finite()) {
        return Err(Error::Scoring(format!("cluster {} has non-finite raw score", j)));
    }
    let total: f64 = live.iter().map(|&j| raws[j]).sum();
    let norm = if total > 0.0 { total } else { 1.0 };
    let logits: Vec<f64> = live.iter().map(|&j| tau * raws[j] / norm).collect();
    let mut probs = vec![0.0; live.len()];
    math::softmax_into(&logits, &mut probs);

    let mut clusters: Vec<ClusterScore> = stats
        .iter()
        .zip(&raws)
        .map(|(s, &raw)| ClusterScore { stats: *s, raw, score: 0.0, masked: s.count == 0 })
        .collect();
    for (&j, &p) in live.iter().zip(&probs) {
        clusters[j].score = p;
    }
    Ok(Scorecard { tau, clusters })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EmbeddingView, FrameId, FrameRecord, RegionId, RegionRecord};
    use crate::geometry::BBox;
    use proptest::prelude::*;

    fn st(p: f64, v: f64, u: usize) -> ClusterStats {
        ClusterStats { count: 10, positive_ratio: p, variance: v, unique_videos: u }
    }

    #[test]
    fn singleton_softmax() {
        let card = potential_score(&[st(0.7, 0.2, 3)], 50.0).unwrap();
        assert_eq!(card.scores(), vec![1.0]);
    }

    #[test]
    fn identical_clusters_share_evenly() {
        let card = potential_score(&[st(0.7, 0.2, 3), st(0.7, 0.2, 3)], 50.0).unwrap();
        assert_eq!(card.scores(), vec![0.5, 0.5]);
    }

    #[test]
    fn scalar_oracle_fixture() {
        let card = potential_score(&[st(0.9, 0.1, 5), st(0.3, 0.1, 5)], 50.0).unwrap();
        // raw = (0.81, 0.09) * ln 5 / 0.1 -> normalized (0.9, 0.1) -> softmax(45, 5)
        let r0 = 0.81 * 5f64.ln() / 0.1;
        let r1 = 0.09 * 5f64.ln() / 0.1;
        let (a, b) = (50.0 * r0 / (r0 + r1), 50.0 * r1 / (r0 + r1));
        let s0 = 1.0 / (1.0 + (b - a).exp());
        let s1 = 1.0 / (1.0 + (a - b).exp());
        assert!((card.clusters[0].score - s0).abs() <= 1e-6 * s0);
        assert!((card.clusters[1].score - s1).abs() <= 1e-6 * s1);
        assert_eq!(card.top(), 0);
    }

    #[test]
    fn empty_clusters_are_masked() {
        let card = potential_score(&[st(0.9, 0.1, 5), ClusterStats::EMPTY, st(0.5, 0.1, 5)], 50.0).unwrap();
        assert!(card.clusters[1].masked);
        assert_eq!(card.clusters[1].score, 0.0);
        assert!((card.scores().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(potential_score(&[ClusterStats::EMPTY; 3], 50.0).is_err());
    }

    #[test]
    fn single_video_cluster_scores_at_the_bottom() {
        let card = potential_score(&[st(1.0, 0.01, 1), st(0.5, 0.2, 4)], 50.0).unwrap();
        assert_eq!(card.clusters[0].raw, 0.0);
        assert!(!card.clusters[0].masked);
        assert_eq!(card.top(), 1);
    }

    fn one_cluster_dataset() -> (Dataset, ClusterState) {
        let frames = alloc::vec![
            FrameRecord { frame_id: FrameId(0), video_id: VideoId(0), positive: true },
            FrameRecord { frame_id: FrameId(1), video_id: VideoId(1), positive: false },
        ];
        let b = BBox::new(0., 0., 1., 1.).unwrap();
        let mut regions = Vec::new();
        for i in 0..4 {
            regions.push(RegionRecord { region_id: RegionId(i), frame_id: FrameId(0), bbox: b, positive: true });
        }
        regions.push(RegionRecord { region_id: RegionId(9), frame_id: FrameId(1), bbox: b, positive: false });
        let mut emb = alloc::vec![1.0f32, 2.0].repeat(4);
        emb.extend([9.0, 9.0]);
        let ds = Dataset::new("x", 2, frames, regions, emb).unwrap();
        let state = ClusterState {
            centroids: alloc::vec![1.0, 2.0, 9.0, 9.0],
            k: 2,
            dim: 2,
            assignments: alloc::vec![0, 0, 0, 0, 1],
            epoch: 0,
            interval: 5,
        };
        (ds, state)
    }

    #[test]
    fn concentrated_cluster_statistics() {
        let (ds, state) = one_cluster_dataset();
        let stats = cluster_stats(&ds, &state).unwrap();
        assert_eq!(stats[0], ClusterStats { count: 4, positive_ratio: 1.0, variance: 0.0, unique_videos: 1 });
        assert_eq!(stats[1].positive_ratio, 0.0);
    }

    #[test]
    fn variance_matches_two_pass_oracle() {
        let out = crate::synth::generate(&crate::synth::SynthConfig::small()).unwrap();
        let ds = out.dataset;
        let state = ClusterState::initialize(ds.embeddings(), 4, 2, 5).unwrap();
        let stats = cluster_stats(&ds, &state).unwrap();
        let emb: EmbeddingView<'_> = ds.embeddings();
        for j in 0..4 {
            let members: Vec<usize> = (0..ds.n_regions()).filter(|&i| state.assignments[i] == j).collect();
            if members.is_empty() {
                continue;
            }
            // Pass 1: per-member distances. Pass 2: their mean.
            let d: Vec<f64> = members
                .iter()
                .map(|&i| emb.row(i).iter().zip(state.centroid(j)).map(|(&a, &b)| (a as f64 - b).powi(2)).sum())
                .collect();
            let oracle = d.iter().sum::<f64>() / d.len() as f64;
            assert!((stats[j].variance - oracle).abs() <= 1e-6 * oracle.max(1e-12));
            let pos = members.iter().filter(|&&i| ds.regions()[i].positive).count();
            assert_eq!(stats[j].positive_ratio, pos as f64 / members.len() as f64);
        }
    }

    fn arb_stats() -> impl Strategy<Value = ClusterStats> {
        (1usize..50, 0.0..=1.0f64, 1e-4..2.0f64, 1usize..30)
            .prop_map(|(count, p, v, u)| ClusterStats { count, positive_ratio: p, variance: v, unique_videos: u })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn scores_form_a_simplex(stats in proptest::collection::vec(arb_stats(), 1..12), tau in 0.0..200.0f64) {
            let card = potential_score(&stats, tau).unwrap();
            let s: f64 = card.scores().iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-6);
            prop_assert!(card.scores().iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn improving_a_criterion_never_lowers_rank(
            stats in proptest::collection::vec(arb_stats(), 2..8),
            which in 0usize..3,
            idx in 0usize..8,
        ) {
            let j = idx % stats.len();
            let before = potential_score(&stats, 50.0).unwrap();
            let mut better = stats.clone();
            match which {
                0 => better[j].positive_ratio = (better[j].positive_ratio + 0.2).min(1.0),
                1 => better[j].unique_videos += 3,
                _ => better[j].variance *= 0.5,
            }
            let after = potential_score(&better, 50.0).unwrap();
            let rank = |c: &Scorecard| c.ranking().iter().position(|&x| x == j).unwrap();
            prop_assert!(rank(&after) <= rank(&before));
        }

        #[test]
        fn permuting_clusters_permutes_scores(stats in proptest::collection::vec(arb_stats(), 2..8), shift in 1usize..7) {
            let n = stats.len();
            let rotated: Vec<ClusterStats> = (0..n).map(|i| stats[(i + shift) % n]).collect();
            let a = potential_score(&stats, 50.0).unwrap().scores();
            let b = potential_score(&rotated, 50.0).unwrap().scores();
            for i in 0..n {
                prop_assert!((b[i] - a[(i + shift) % n]).abs() <= 1e-12);
            }
        }

        #[test]
        fn temperature_controls_sharpness(stats in proptest::collection::vec(arb_stats(), 2..8)) {
            let cold = potential_score(&stats, 1e-9).unwrap();
            let uniform = 1.0 / stats.len() as f64;
            prop_assert!(cold.scores().iter().all(|&s| (s - uniform).abs() < 1e-6));
            let raws: Vec<f64> = stats.iter().map(raw_score).collect();
            let distinct = raws.iter().any(|&r| (r - raws[0]).abs() > 1e-9 * raws[0].abs().max(1.0));
            if distinct {
                let max = |t: f64| potential_score(&stats, t).unwrap().scores().iter().cloned().fold(0.0, f64::max);
                prop_assert!(max(10.0) < max(20.0) || max(10.0) == 1.0);
            }
        }
    }
}
