//! Class-balanced batch drawing from mined regions.

use crate::dsd::MinedSet;
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rng::StreamRng;
use crate::scoring::Scorecard;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

pub const POSITIVE: usize = 1;
pub const NEGATIVE: usize = 0;

/// Row-major embeddings with one class index per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub dim: usize,
    pub inputs: Vec<f32>,
    pub targets: Vec<usize>,
    /// Dataset positions of the rows, when drawn from a dataset.
    pub regions: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

pub trait BatchSource {
    fn dim(&self) -> usize;
    fn draw(&self, batch_size: usize, rng: &mut StreamRng) -> Result<Batch>;
}

/// Positives by cluster potential, negatives split between negative frames and hard negatives.
#[derive(Debug, Clone)]
pub struct MinedSampler<'a> {
    dataset: &'a Dataset,
    clusters: Vec<usize>,
    members: Vec<Vec<usize>>,
    cumulative: Vec<f64>,
    uniform_negatives: Vec<usize>,
    hard_negatives: Vec<usize>,
}

impl<'a> MinedSampler<'a> {
    pub fn new(dataset: &'a Dataset, mined: &MinedSet, scorecard: &Scorecard) -> Result<Self> {
        if mined.positives.is_empty() {
            return Err(Error::Sampling("mined set has no positives".into()));
        }
        let mut by_cluster: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for p in &mined.positives {
            if p.cluster >= scorecard.k() {
                return Err(Error::Sampling(format!("positive tagged with unknown cluster {}", p.cluster)));
            }
            let pos = dataset
                .region_position(p.region_id)
                .ok_or_else(|| Error::Sampling(format!("mined region {} not in dataset", p.region_id)))?;
            by_cluster.entry(p.cluster).or_default().push(pos);
        }
        let clusters: Vec<usize> = by_cluster.keys().copied().collect();
        let members: Vec<Vec<usize>> = by_cluster.into_values().collect();
        let mut weights: Vec<f64> = clusters.iter().map(|&k| scorecard.clusters[k].score.max(0.0)).collect();
        if weights.iter().sum::<f64>() <= 0.0 || weights.iter().any(|w| !w.is_finite()) {
            weights.iter_mut().for_each(|w| *w = 1.0);
        }
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in weights {
            acc += w;
            cumulative.push(acc);
        }
        let uniform_negatives: Vec<usize> = (0..dataset.n_regions())
            .filter(|&r| !dataset.regions()[r].positive)
            .collect();
        let hard_negatives = mined
            .hard_negatives
            .iter()
            .map(|id| {
                dataset
                    .region_position(*id)
                    .ok_or_else(|| Error::Sampling(format!("hard negative {} not in dataset", id)))
            })
            .collect::<Result<Vec<usize>>>()?;
        if uniform_negatives.is_empty() && hard_negatives.is_empty() {
            return Err(Error::Sampling("no negative regions to draw from".into()));
        }
        Ok(MinedSampler { dataset, clusters, members, cumulative, uniform_negatives, hard_negatives })
    }

    /// Clusters holding survivors and their sampling probabilities.
    pub fn cluster_probabilities(&self) -> Vec<(usize, f64)> {
        let total = *self.cumulative.last().expect("at least one cluster");
        let mut prev = 0.0;
        self.clusters
            .iter()
            .zip(&self.cumulative)
            .map(|(&k, &c)| {
                let p = (c - prev) / total;
                prev = c;
                (k, p)
            })
            .collect()
    }

    fn pick_cluster(&self, rng: &mut StreamRng) -> usize {
        let total = *self.cumulative.last().expect("at least one cluster");
        let u = rng.random::<f64>() * total;
        self.cumulative.iter().position(|&c| u < c).unwrap_or(self.cumulative.len() - 1)
    }

    fn uniform(pool: &[usize], rng: &mut StreamRng) -> usize {
        pool[rng.random_range(0..pool.len())]
    }

    /// Dataset positions of positives and negatives for one batch.
    pub fn draw_positions(&self, batch_size: usize, rng: &mut StreamRng) -> Result<(Vec<usize>, Vec<usize>)> {
        if batch_size < 2 || !batch_size.is_multiple_of(2) {
            return Err(Error::Sampling(format!("batch size {} must be even and positive", batch_size)));
        }
        let half = batch_size / 2;
        let positives = (0..half)
            .map(|_| {
                let c = self.pick_cluster(rng);
                Self::uniform(&self.members[c], rng)
            })
            .collect();
        let (n_uniform, n_hard) = if self.hard_negatives.is_empty() {
            (half, 0)
        } else if self.uniform_negatives.is_empty() {
            (0, half)
        } else {
            (half / 2, half - half / 2)
        };
        let mut negatives = Vec::with_capacity(half);
        negatives.extend((0..n_uniform).map(|_| Self::uniform(&self.uniform_negatives, rng)));
        negatives.extend((0..n_hard).map(|_| Self::uniform(&self.hard_negatives, rng)));
        Ok((positives, negatives))
    }
}

impl BatchSource for MinedSampler<'_> {
    fn dim(&self) -> usize {
        self.dataset.dim()
    }

    fn draw(&self, batch_size: usize, rng: &mut StreamRng) -> Result<Batch> {
        let (pos, neg) = self.draw_positions(batch_size, rng)?;
        let d = self.dataset.dim();
        let mut inputs = Vec::with_capacity(batch_size * d);
        let mut targets = Vec::with_capacity(batch_size);
        for (&r, t) in pos.iter().map(|r| (r, POSITIVE)).chain(neg.iter().map(|r| (r, NEGATIVE))) {
            inputs.extend_from_slice(self.dataset.embedding(r));
            targets.push(t);
        }
        let regions = pos.into_iter().chain(neg).collect();
        Ok(Batch { dim: d, inputs, targets, regions })
    }
}

pub fn sample_batch(
    mined: &MinedSet,
    dataset: &Dataset,
    scorecard: &Scorecard,
    batch_size: usize,
    rng: &mut StreamRng,
) -> Result<Batch> {
    MinedSampler::new(dataset, mined, scorecard)?.draw(batch_size, rng)
}

/// Fixed labeled rows drawn uniformly with replacement, half from each class.
#[derive(Debug, Clone)]
pub struct LabeledSource {
    dim: usize,
    inputs: Vec<f32>,
    by_class: [Vec<usize>; 2],
}

impl LabeledSource {
    pub fn new(dim: usize, inputs: Vec<f32>, positive: &[bool]) -> Result<Self> {
        if dim == 0 || inputs.len() != dim * positive.len() {
            return Err(Error::invalid("labeled inputs do not match the label count"));
        }
        let mut by_class = [Vec::new(), Vec::new()];
        for (i, &p) in positive.iter().enumerate() {
            by_class[p as usize].push(i);
        }
        if by_class.iter().any(Vec::is_empty) {
            return Err(Error::Sampling("both classes are needed".into()));
        }
        Ok(LabeledSource { dim, inputs, by_class })
    }

    /// All rows with their labels.
    pub fn rows(&self) -> (&[f32], Vec<bool>) {
        let mut labels = vec![false; self.inputs.len() / self.dim];
        for &i in &self.by_class[POSITIVE] {
            labels[i] = true;
        }
        (&self.inputs, labels)
    }
}

impl BatchSource for LabeledSource {
    fn dim(&self) -> usize {
        self.dim
    }

    fn draw(&self, batch_size: usize, rng: &mut StreamRng) -> Result<Batch> {
        if batch_size < 2 || !batch_size.is_multiple_of(2) {
            return Err(Error::Sampling(format!("batch size {} must be even and positive", batch_size)));
        }
        let mut batch = Batch { dim: self.dim, inputs: Vec::new(), targets: Vec::new(), regions: Vec::new() };
        for class in [POSITIVE, NEGATIVE] {
            for _ in 0..batch_size / 2 {
                let pool = &self.by_class[class];
                let i = pool[rng.random_range(0..pool.len())];
                batch.inputs.extend_from_slice(&self.inputs[i * self.dim..(i + 1) * self.dim]);
                batch.targets.push(class);
                batch.regions.push(i);
            }
        }
        Ok(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsd::MinedPositive;
    use crate::model::RegionId;
    use crate::rng::{self, Stage};
    use crate::scoring::{ClusterScore, ClusterStats};
    use crate::synth::{generate, SynthConfig};
    use alloc::vec;

    fn scorecard(scores: &[f64]) -> Scorecard {
        Scorecard {
            tau: 1.0,
            clusters: scores
                .iter()
                .map(|&s| ClusterScore { stats: ClusterStats::EMPTY, raw: 0.0, score: s, masked: false })
                .collect(),
        }
    }

    fn fixture() -> (Dataset, Vec<RegionId>, Vec<RegionId>) {
        let out = generate(&SynthConfig::small()).unwrap();
        let ds = out.dataset;
        let pos: Vec<RegionId> = ds.regions().iter().filter(|r| r.positive).map(|r| r.region_id).collect();
        let neg: Vec<RegionId> = ds.regions().iter().filter(|r| !r.positive).map(|r| r.region_id).collect();
        (ds, pos, neg)
    }

    fn mined(pos: &[RegionId], clusters: &[usize], hard: Vec<RegionId>) -> MinedSet {
        MinedSet {
            positives: pos.iter().zip(clusters.iter().cycle()).map(|(&region_id, &cluster)| MinedPositive { region_id, cluster }).collect(),
            hard_negatives: hard,
        }
    }

    #[test]
    fn one_hot_score_draws_only_that_cluster() {
        let (ds, pos, _) = fixture();
        let m = mined(&pos[..30], &[3, 7], vec![]);
        let mut scores = vec![0.0; 10];
        scores[7] = 1.0;
        let sampler = MinedSampler::new(&ds, &m, &scorecard(&scores)).unwrap();
        let allowed: Vec<usize> = m
            .positives
            .iter()
            .filter(|p| p.cluster == 7)
            .map(|p| ds.region_position(p.region_id).unwrap())
            .collect();
        let mut r = rng::stream(1, Stage::DetectorBatch, &[]);
        for _ in 0..20 {
            let (p, _) = sampler.draw_positions(16, &mut r).unwrap();
            assert!(p.iter().all(|x| allowed.contains(x)));
        }
    }

    #[test]
    fn empty_hard_negatives_fall_back_to_negative_frames() {
        let (ds, pos, _) = fixture();
        let m = mined(&pos[..10], &[0], vec![]);
        let sampler = MinedSampler::new(&ds, &m, &scorecard(&[1.0])).unwrap();
        let (_, neg) = sampler.draw_positions(32, &mut rng::stream(2, Stage::DetectorBatch, &[])).unwrap();
        assert_eq!(neg.len(), 16);
        assert!(neg.iter().all(|&r| !ds.regions()[r].positive));
    }

    #[test]
    fn negatives_are_an_even_mix() {
        let (ds, pos, _) = fixture();
        let hard: Vec<RegionId> = pos[40..50].to_vec();
        let m = mined(&pos[..10], &[0], hard.clone());
        let sampler = MinedSampler::new(&ds, &m, &scorecard(&[1.0])).unwrap();
        let (_, neg) = sampler.draw_positions(32, &mut rng::stream(3, Stage::DetectorBatch, &[])).unwrap();
        let n_hard = neg.iter().filter(|&&r| hard.contains(&ds.regions()[r].region_id)).count();
        assert_eq!(n_hard, 8);
    }

    #[test]
    fn batches_are_class_balanced() {
        let (ds, pos, neg) = fixture();
        let m = mined(&pos[..10], &[0, 1], neg[..5].to_vec());
        let b = sample_batch(&m, &ds, &scorecard(&[0.5, 0.5]), 24, &mut rng::stream(4, Stage::DetectorBatch, &[])).unwrap();
        assert_eq!(b.len(), 24);
        assert_eq!(b.targets.iter().filter(|&&t| t == POSITIVE).count(), 12);
        assert_eq!(b.inputs.len(), 24 * ds.dim());
    }

    #[test]
    fn cluster_frequencies_follow_scores() {
        let (ds, pos, _) = fixture();
        let m = mined(&pos[..20], &[0, 1], vec![]);
        let sampler = MinedSampler::new(&ds, &m, &scorecard(&[0.7, 0.3])).unwrap();
        let mut r = rng::stream(5, Stage::DetectorBatch, &[]);
        let draws = 10_000;
        let first = (0..draws).filter(|_| sampler.pick_cluster(&mut r) == 0).count();
        let f = first as f64 / draws as f64;
        assert!((f - 0.7).abs() <= 0.02, "frequency {}", f);
    }

    #[test]
    fn errors() {
        let (ds, pos, _) = fixture();
        let empty = MinedSet::default();
        assert!(matches!(MinedSampler::new(&ds, &empty, &scorecard(&[1.0])), Err(Error::Sampling(_))));
        let m = mined(&pos[..4], &[0], vec![]);
        let sampler = MinedSampler::new(&ds, &m, &scorecard(&[1.0])).unwrap();
        let mut r = rng::stream(6, Stage::DetectorBatch, &[]);
        assert!(sampler.draw_positions(7, &mut r).is_err());
        assert!(sampler.draw_positions(0, &mut r).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let (ds, pos, neg) = fixture();
        let m = mined(&pos[..10], &[0, 1], neg[..5].to_vec());
        let sc = scorecard(&[0.6, 0.4]);
        let a = sample_batch(&m, &ds, &sc, 16, &mut rng::stream(9, Stage::DetectorBatch, &[1])).unwrap();
        let b = sample_batch(&m, &ds, &sc, 16, &mut rng::stream(9, Stage::DetectorBatch, &[1])).unwrap();
        assert_eq!(a, b);
    }
}
