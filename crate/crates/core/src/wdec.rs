//! Weighted deep embedded clustering with fixed embeddings.
//!
//! Soft assignments use the Student's-t kernel `(1 + |z - mu|^2)^-1`, each
//! sample weighted by its weak label (0.5 for negatives, 1 for positives).
//! Because that weight depends only on the sample, it cancels inside the
//! row normalization of the soft assignment; its effect is carried instead by
//! a per-sample multiplier on the KL self-training loss, so positive regions
//! pull harder on the centroids than negative ones.
//!
//! Only the centroids are optimized. The target distribution is recomputed at
//! the start of every [`refine`] call and held fixed within it.

use crate::error::{Error, Result};
use crate::math;
use crate::model::EmbeddingView;
use crate::rng::{self, Stage};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

pub const NEGATIVE_WEIGHT: f64 = 0.5;
pub const POSITIVE_WEIGHT: f64 = 1.0;
pub const LLOYD_ITERATIONS: usize = 10;

/// Sample weight for a region with the given weak label.
#[inline]
pub fn sample_weight(positive: bool) -> f64 {
    if positive {
        POSITIVE_WEIGHT
    } else {
        NEGATIVE_WEIGHT
    }
}

/// Dense row-stochastic `n x k` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix {
    n: usize,
    k: usize,
    values: Vec<f64>,
}

pub type SoftAssignment = AssignmentMatrix;
pub type TargetDistribution = AssignmentMatrix;

impl AssignmentMatrix {
    pub fn from_rows(k: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 || !values.len().is_multiple_of(k) {
            return Err(Error::invalid(format!(
                "{} values do not form rows of width {}",
                values.len(),
                k
            )));
        }
        Ok(AssignmentMatrix { n: values.len() / k, k, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Column index of the largest entry of row `i`; ties go to the lower index.
    pub fn argmax(&self, i: usize) -> usize {
        let row = self.row(i);
        let mut best = 0;
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = j;
            }
        }
        best
    }
}

/// Cluster centroids plus the hard assignment of every region.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    /// Row-major `k x dim`. Values are always representable as `f32`.
    pub centroids: Vec<f64>,
    pub k: usize,
    pub dim: usize,
    pub assignments: Vec<usize>,
    /// Total refinement epochs applied so far.
    pub epoch: usize,
    /// Refinement epochs per outer cycle.
    pub interval: usize,
}

impl ClusterState {
    /// k-means++ seeded initialization followed by hard assignment.
    pub fn initialize(emb: EmbeddingView<'_>, k: usize, seed: u64, interval: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("need at least 2 clusters, got {}", k)));
        }
        let centroids = init_centroids(emb, k, seed)?;
        let assignments = hard_assignments(emb, &centroids);
        Ok(ClusterState { centroids, k, dim: emb.dim(), assignments, epoch: 0, interval })
    }

    pub fn validate(&self, n_regions: usize) -> Result<()> {
        if self.k < 2 {
            return Err(Error::validation(format!("cluster count {} below 2", self.k)));
        }
        if self.centroids.len() != self.k * self.dim {
            return Err(Error::validation("centroid matrix does not match k x dim"));
        }
        if self.centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite centroid"));
        }
        if self.assignments.len() != n_regions {
            return Err(Error::validation(format!(
                "{} assignments for {} regions",
                self.assignments.len(),
                n_regions
            )));
        }
        if let Some(a) = self.assignments.iter().find(|&&a| a >= self.k) {
            return Err(Error::validation(format!("assignment {} out of range", a)));
        }
        Ok(())
    }

    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Clusters with no hard-assigned members.
    pub fn empty_clusters(&self) -> Vec<usize> {
        self.cluster_sizes().iter().enumerate().filter(|(_, &s)| s == 0).map(|(j, _)| j).collect()
    }
}

fn check_centroids(emb: EmbeddingView<'_>, centroids: &[f64]) -> Result<usize> {
    if centroids.is_empty() || !centroids.len().is_multiple_of(emb.dim()) {
        return Err(Error::invalid(format!(
            "centroid buffer of length {} does not match dim {}",
            centroids.len(),
            emb.dim()
        )));
    }
    Ok(centroids.len() / emb.dim())
}

fn nearest(z: &[f32], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = math::squared_distance(z, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Index of the nearest centroid for every row; ties go to the lower index.
pub fn hard_assignments(emb: EmbeddingView<'_>, centroids: &[f64]) -> Vec<usize> {
    emb.iter().map(|z| nearest(z, centroids, emb.dim()).0).collect()
}

fn round_to_f32(values: &mut [f64]) {
    for v in values {
        *v = *v as f32 as f64;
    }
}

/// Greedy k-means++ seeding (several D²-sampled candidates per step, keeping the
/// one that lowers the potential most) followed by Lloyd iterations.
pub fn init_centroids(emb: EmbeddingView<'_>, k: usize, seed: u64) -> Result<Vec<f64>> {
    let n = emb.rows();
    let dim = emb.dim();
    if k == 0 || n < k {
        return Err(Error::invalid(format!("cannot seed {} clusters from {} points", k, n)));
    }
    let mut rng = rng::stream(seed, Stage::KmeansInit, &[k as u64]);
    let trials = 2 + math::ln(k as f64) as usize;

    let mut chosen: Vec<usize> = vec![rng.random_range(0..n)];
    let first = emb.row(chosen[0]);
    let mut closest: Vec<f64> = emb.iter().map(|z| sq_dist_f32(z, first)).collect();

    while chosen.len() < k {
        let potential: f64 = closest.iter().sum();
        let pick = if potential <= 0.0 {
            // Fewer distinct points than clusters; take the next unused row.
            (0..n).find(|i| !chosen.contains(i)).expect("n >= k")
        } else {
            let mut best: Option<(usize, f64)> = None;
            for _ in 0..trials {
                let target = rng.random_range(0.0..potential);
                let mut acc = 0.0;
                let mut cand = n - 1;
                for (i, &d) in closest.iter().enumerate() {
                    acc += d;
                    if acc > target && d > 0.0 {
                        cand = i;
                        break;
                    }
                }
                if closest[cand] == 0.0 {
                    // Round-off walked past the end; fall back to the last positive mass.
                    cand = closest.iter().rposition(|&d| d > 0.0).expect("positive potential");
                }
                let c = emb.row(cand);
                let pot: f64 = emb.iter().zip(&closest).map(|(z, &d)| d.min(sq_dist_f32(z, c))).sum();
                if best.is_none_or(|(_, p)| pot < p) {
                    best = Some((cand, pot));
                }
            }
            best.expect("at least one trial").0
        };
        let c = emb.row(pick);
        for (z, d) in emb.iter().zip(closest.iter_mut()) {
            *d = d.min(sq_dist_f32(z, c));
        }
        chosen.push(pick);
    }

    let mut centroids: Vec<f64> = Vec::with_capacity(k * dim);
    for &i in &chosen {
        centroids.extend(emb.row(i).iter().map(|&v| v as f64));
    }

    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];
    for _ in 0..LLOYD_ITERATIONS {
        sums.iter_mut().for_each(|s| *s = 0.0);
        counts.iter_mut().for_each(|c| *c = 0);
        for z in emb.iter() {
            let (j, _) = nearest(z, &centroids, dim);
            counts[j] += 1;
            for (s, &v) in sums[j * dim..(j + 1) * dim].iter_mut().zip(z) {
                *s += v as f64;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let inv = counts[j] as f64;
            for d in 0..dim {
                centroids[j * dim + d] = sums[j * dim + d] / inv;
            }
        }
    }
    round_to_f32(&mut centroids);
    Ok(centroids)
}

fn sq_dist_f32(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Weighted Student's-t soft assignment.
pub fn soft_assign(emb: EmbeddingView<'_>, labels: &[bool], centroids: &[f64]) -> Result<SoftAssignment> {
    let k = check_centroids(emb, centroids)?;
    if labels.len() != emb.rows() {
        return Err(Error::invalid(format!(
            "{} labels for {} embeddings",
            labels.len(),
            emb.rows()
        )));
    }
    let mut values = Vec::with_capacity(emb.rows() * k);
    for (z, &y) in emb.iter().zip(labels) {
        let w = sample_weight(y);
        let start = values.len();
        let mut total = 0.0;
        for c in centroids.chunks_exact(emb.dim()) {
            let v = w / (1.0 + math::squared_distance(z, c));
            total += v;
            values.push(v);
        }
        values[start..].iter_mut().for_each(|v| *v /= total);
    }
    Ok(AssignmentMatrix { n: emb.rows(), k, values })
}

/// Standard DEC target: `p_ij ∝ q_ij² / f_j` with soft frequencies `f_j = Σ_i q_ij`.
pub fn target_distribution(q: &SoftAssignment) -> TargetDistribution {
    let k = q.k;
    let mut freq = vec![0.0f64; k];
    for row in q.values.chunks_exact(k) {
        for (f, &v) in freq.iter_mut().zip(row) {
            *f += v;
        }
    }
    let mut values = Vec::with_capacity(q.values.len());
    for row in q.values.chunks_exact(k) {
        let start = values.len();
        let mut total = 0.0;
        for (&v, &f) in row.iter().zip(&freq) {
            let p = v * v / f;
            total += p;
            values.push(p);
        }
        values[start..].iter_mut().for_each(|p| *p /= total);
    }
    AssignmentMatrix { n: q.n, k, values }
}

/// `Σ_i ω(y_i) Σ_j p_ij log(p_ij / q_ij)`.
pub fn kl_loss(p: &TargetDistribution, q: &SoftAssignment, labels: &[bool]) -> Result<f64> {
    if p.n != q.n || p.k != q.k || labels.len() != p.n {
        return Err(Error::invalid(format!(
            "shape mismatch: P is {}x{}, Q is {}x{}, {} labels",
            p.n,
            p.k,
            q.n,
            q.k,
            labels.len()
        )));
    }
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let mut row = 0.0;
        for (&pv, &qv) in p.row(i).iter().zip(q.row(i)) {
            if pv > 0.0 {
                row += pv * (math::ln(pv) - math::ln(qv));
            }
        }
        loss += sample_weight(y) * row;
    }
    Ok(loss)
}

/// Loss and its gradient with respect to the centroids, for a fixed target.
///
/// `∂L/∂μ_j = -2 Σ_i ω_i (1 + |z_i - μ_j|²)^-1 (p_ij - q_ij)(z_i - μ_j)`.
pub fn kl_loss_and_gradient(
    emb: EmbeddingView<'_>,
    labels: &[bool],
    centroids: &[f64],
    target: &TargetDistribution,
) -> Result<(f64, Vec<f64>)> {
    let k = check_centroids(emb, centroids)?;
    let dim = emb.dim();
    if target.n != emb.rows() || target.k != k || labels.len() != emb.rows() {
        return Err(Error::invalid("target, labels and embeddings disagree in shape"));
    }
    let mut grad = vec![0.0f64; k * dim];
    let mut kernel = vec![0.0f64; k];
    let mut loss = 0.0;
    for (i, z) in emb.iter().enumerate() {
        let w = sample_weight(labels[i]);
        let mut total = 0.0;
        for (a, c) in kernel.iter_mut().zip(centroids.chunks_exact(dim)) {
            *a = 1.0 / (1.0 + math::squared_distance(z, c));
            total += *a;
        }
        let p_row = target.row(i);
        let mut row_loss = 0.0;
        for j in 0..k {
            let q = kernel[j] / total;
            let p = p_row[j];
            if p > 0.0 {
                row_loss += p * (math::ln(p) - math::ln(q));
            }
            let coeff = -2.0 * w * kernel[j] * (p - q);
            let c = &centroids[j * dim..(j + 1) * dim];
            for ((g, &zv), &cv) in grad[j * dim..(j + 1) * dim].iter_mut().zip(z).zip(c) {
                *g += coeff * (zv as f64 - cv);
            }
        }
        loss += w * row_loss;
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineParams {
    pub epochs: usize,
    pub step_size: f64,
    /// Gradient norm ceiling; larger gradients are rescaled to this norm.
    pub grad_clip: f64,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams { epochs: 5, step_size: 1e-2, grad_clip: 10.0 }
    }
}

/// Self-training refinement of the centroids by plain gradient descent.
pub fn refine(
    state: &ClusterState,
    emb: EmbeddingView<'_>,
    labels: &[bool],
    params: RefineParams,
) -> Result<ClusterState> {
    state.validate(emb.rows())?;
    if state.dim != emb.dim() {
        return Err(Error::invalid(format!(
            "state dim {} differs from embedding dim {}",
            state.dim,
            emb.dim()
        )));
    }
    if params.epochs == 0 {
        return Ok(state.clone());
    }
    let target = target_distribution(&soft_assign(emb, labels, &state.centroids)?);
    let mut centroids = state.centroids.clone();
    for e in 0..params.epochs {
        let step = state.epoch + e;
        let (loss, mut grad) = kl_loss_and_gradient(emb, labels, &centroids, &target)?;
        if !loss.is_finite() {
            return Err(Error::Numerical { stage: "wdec", step, detail: format!("loss = {}", loss) });
        }
        let norm = math::sqrt(grad.iter().map(|g| g * g).sum());
        if !norm.is_finite() {
            return Err(Error::Numerical { stage: "wdec", step, detail: format!("gradient norm = {}", norm) });
        }
        if norm > params.grad_clip {
            let scale = params.grad_clip / norm;
            grad.iter_mut().for_each(|g| *g *= scale);
        }
        for (c, g) in centroids.iter_mut().zip(&grad) {
            *c -= params.step_size * g;
        }
    }
    round_to_f32(&mut centroids);
    let assignments = hard_assignments(emb, &centroids);
    Ok(ClusterState {
        centroids,
        k: state.k,
        dim: state.dim,
        assignments,
        epoch: state.epoch + params.epochs,
        interval: state.interval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn view(data: &[f32], dim: usize) -> EmbeddingView<'_> {
        EmbeddingView::new(data, dim).unwrap()
    }

    fn random_instance(seed: u64, n: usize, dim: usize, k: usize) -> (Vec<f32>, Vec<bool>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = (0..n * dim).map(|_| rng.random_range(-2.0..2.0f32)).collect();
        let y = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let c = (0..k * dim).map(|_| rng.random_range(-2.0..2.0f64)).collect();
        (z, y, c)
    }

    #[test]
    fn single_cluster_assigns_everything() {
        let (z, y, _) = random_instance(1, 7, 3, 1);
        let q = soft_assign(view(&z, 3), &y, &[0.3, -0.1, 2.0]).unwrap();
        assert!(q.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn equidistant_point_splits_evenly_for_either_label() {
        let z = [0.0f32, 0.0];
        let c = [1.0, 0.0, -1.0, 0.0];
        for y in [true, false] {
            let q = soft_assign(view(&z, 2), &[y], &c).unwrap();
            assert_eq!(q.row(0), &[0.5, 0.5]);
        }
    }

    #[test]
    fn student_t_scalar_oracle() {
        // distance 0 to mu_0 and 3 to mu_1: q_0 = 1 / (1 + 1/10) = 10/11.
        let z = [1.0f32, 2.0];
        let c = [1.0, 2.0, 1.0, 5.0];
        for y in [true, false] {
            let q = soft_assign(view(&z, 2), &[y], &c).unwrap();
            assert!((q.row(0)[0] - 10.0 / 11.0).abs() < 1e-15);
            assert!((q.row(0)[1] - 1.0 / 11.0).abs() < 1e-15);
        }
    }

    #[test]
    fn target_sharpens_and_fixes_uniform() {
        let q = AssignmentMatrix::from_rows(2, vec![0.9, 0.1, 0.1, 0.9]).unwrap();
        let p = target_distribution(&q);
        assert!(p.row(0)[0] > 0.9 && p.row(1)[1] > 0.9);

        let u = AssignmentMatrix::from_rows(3, vec![1.0 / 3.0; 12]).unwrap();
        let pu = target_distribution(&u);
        for v in pu.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn target_two_by_two_oracle() {
        // f = (1.1, 0.9); row 0: (0.81/1.1, 0.01/0.9); row 1: (0.04/1.1, 0.64/0.9).
        let q = AssignmentMatrix::from_rows(2, vec![0.9, 0.1, 0.2, 0.8]).unwrap();
        let p = target_distribution(&q);
        let r0 = [0.81 / 1.1, 0.01 / 0.9];
        let r1 = [0.04 / 1.1, 0.64 / 0.9];
        let s0 = r0[0] + r0[1];
        let s1 = r1[0] + r1[1];
        let expect = [r0[0] / s0, r0[1] / s0, r1[0] / s1, r1[1] / s1];
        for (a, b) in p.as_slice().iter().zip(expect) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn kl_identity_and_label_linearity() {
        let q = AssignmentMatrix::from_rows(2, vec![0.7, 0.3, 0.4, 0.6]).unwrap();
        assert_eq!(kl_loss(&q, &q, &[true, false]).unwrap(), 0.0);

        let p = target_distribution(&q);
        let pos = kl_loss(&p, &q, &[true, true]).unwrap();
        let neg = kl_loss(&p, &q, &[false, false]).unwrap();
        assert!(pos > 0.0);
        assert!((neg - pos / 2.0).abs() < 1e-15);
    }

    #[test]
    fn kl_term_by_term_oracle() {
        let p = AssignmentMatrix::from_rows(2, vec![0.8, 0.2, 0.25, 0.75]).unwrap();
        let q = AssignmentMatrix::from_rows(2, vec![0.6, 0.4, 0.5, 0.5]).unwrap();
        let expect = 1.0 * (0.8 * (0.8f64 / 0.6).ln() + 0.2 * (0.2f64 / 0.4).ln())
            + 0.5 * (0.25 * (0.25f64 / 0.5).ln() + 0.75 * (0.75f64 / 0.5).ln());
        let got = kl_loss(&p, &q, &[true, false]).unwrap();
        assert!((got - expect).abs() <= 1e-12 * expect.abs());
    }

    #[test]
    fn kl_rejects_shape_mismatch() {
        let p = AssignmentMatrix::from_rows(2, vec![0.5; 4]).unwrap();
        let q = AssignmentMatrix::from_rows(2, vec![0.5; 2]).unwrap();
        assert!(kl_loss(&p, &q, &[true, true]).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (z, y, c) = random_instance(42, 10, 3, 2);
        let emb = view(&z, 3);
        let target = target_distribution(&soft_assign(emb, &y, &c).unwrap());
        let (_, grad) = kl_loss_and_gradient(emb, &y, &c, &target).unwrap();
        let h = 1e-4;
        let loss_at = |cc: &[f64]| kl_loss(&target, &soft_assign(emb, &y, cc).unwrap(), &y).unwrap();
        let mut worst = 0.0f64;
        for idx in 0..c.len() {
            let mut plus = c.clone();
            let mut minus = c.clone();
            plus[idx] += h;
            minus[idx] -= h;
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let rel = (fd - grad[idx]).abs() / fd.abs().max(grad[idx].abs()).max(1e-7);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-4, "max relative error {}", worst);
    }

    #[test]
    fn zero_epochs_is_identity() {
        let (z, y, _) = random_instance(3, 40, 4, 3);
        let emb = view(&z, 4);
        let state = ClusterState::initialize(emb, 3, 9, 5).unwrap();
        let params = RefineParams { epochs: 0, ..RefineParams::default() };
        assert_eq!(refine(&state, emb, &y, params).unwrap(), state);
    }

    #[test]
    fn refine_descends_on_random_instances() {
        for seed in 0..20 {
            let (z, y, _) = random_instance(100 + seed, 60, 4, 3);
            let emb = view(&z, 4);
            let state = ClusterState::initialize(emb, 3, seed, 5).unwrap();
            let target = target_distribution(&soft_assign(emb, &y, &state.centroids).unwrap());
            let before = kl_loss(&target, &soft_assign(emb, &y, &state.centroids).unwrap(), &y).unwrap();
            let params = RefineParams { epochs: 5, step_size: 1e-3, grad_clip: 10.0 };
            let next = refine(&state, emb, &y, params).unwrap();
            let after = kl_loss(&target, &soft_assign(emb, &y, &next.centroids).unwrap(), &y).unwrap();
            assert!(after <= before, "seed {}: {} -> {}", seed, before, after);
            assert_eq!(next.epoch, 5);
        }
    }

    #[test]
    fn refine_is_deterministic() {
        let (z, y, _) = random_instance(5, 50, 4, 4);
        let emb = view(&z, 4);
        let run = || {
            let s = ClusterState::initialize(emb, 4, 11, 5).unwrap();
            refine(&s, emb, &y, RefineParams::default()).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn seeding_with_k_equal_n_returns_the_inputs() {
        let (z, _, _) = random_instance(8, 6, 3, 1);
        let c = init_centroids(view(&z, 3), 6, 1).unwrap();
        let mut rows: Vec<Vec<f64>> = c.chunks(3).map(|r| r.to_vec()).collect();
        let mut inputs: Vec<Vec<f64>> = z.chunks(3).map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let key = |v: &Vec<f64>| (v[0] * 1e6) as i64;
        rows.sort_by_key(key);
        inputs.sort_by_key(key);
        assert_eq!(rows, inputs);
    }

    #[test]
    fn seeding_rejects_too_few_points() {
        let z = [0.0f32; 6];
        assert!(matches!(init_centroids(view(&z, 2), 4, 0), Err(Error::InvalidInput(_))));
    }

    /// Exhaustive 2-means: minimum-SSE centroids over every bipartition.
    fn exhaustive_two_means(z: &[f32], dim: usize) -> [Vec<f64>; 2] {
        let n = z.len() / dim;
        let mut best = (f64::INFINITY, [vec![], vec![]]);
        for mask in 1u32..(1 << (n - 1)) {
            let mut sums = [vec![0.0; dim], vec![0.0; dim]];
            let mut counts = [0usize; 2];
            for i in 0..n {
                let side = ((mask >> i) & 1) as usize;
                counts[side] += 1;
                for d in 0..dim {
                    sums[side][d] += z[i * dim + d] as f64;
                }
            }
            if counts[0] == 0 || counts[1] == 0 {
                continue;
            }
            let means = [0, 1].map(|s| sums[s].iter().map(|v| v / counts[s] as f64).collect::<Vec<f64>>());
            let sse: f64 = (0..n)
                .map(|i| {
                    let side = ((mask >> i) & 1) as usize;
                    (0..dim).map(|d| (z[i * dim + d] as f64 - means[side][d]).powi(2)).sum::<f64>()
                })
                .sum();
            if sse < best.0 {
                best = (sse, means);
            }
        }
        best.1
    }

    #[test]
    fn two_separated_blobs_match_exhaustive_two_means() {
        let spread = 0.3f64;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut z = Vec::new();
        for i in 0..20 {
            let cx = if i < 10 { -5.0 } else { 5.0 };
            let n1: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            let n2: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            z.push((cx + spread * n1) as f32);
            z.push((spread * n2) as f32);
        }
        let oracle = exhaustive_two_means(&z, 2);
        let got = init_centroids(view(&z, 2), 2, 3).unwrap();
        for c in got.chunks(2) {
            let dist = oracle
                .iter()
                .map(|m| ((c[0] - m[0]).powi(2) + (c[1] - m[1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(dist <= 0.5 * spread, "centroid {:?} is {} from the optimum", c, dist);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn soft_assignment_rows_are_stochastic(seed in any::<u64>(), n in 1usize..6, k in 1usize..6) {
            let (z, y, c) = random_instance(seed, n, 3, k);
            let q = soft_assign(view(&z, 3), &y, &c).unwrap();
            for i in 0..n {
                let s: f64 = q.row(i).iter().sum();
                prop_assert!((s - 1.0).abs() <= 1e-6);
                prop_assert!(q.row(i).iter().all(|&v| v > 0.0 && v <= 1.0));
            }
            let p = target_distribution(&q);
            for i in 0..n {
                let s: f64 = p.row(i).iter().sum();
                prop_assert!((s - 1.0).abs() <= 1e-6);
                prop_assert!(p.row(i).iter().all(|&v| v > 0.0));
            }
        }

        #[test]
        fn label_weights_cancel(seed in any::<u64>(), k in 1usize..6) {
            let (z, y, c) = random_instance(seed, 8, 3, k);
            let emb = view(&z, 3);
            let weighted = soft_assign(emb, &y, &c).unwrap();
            let unweighted = soft_assign(emb, &[true; 8], &c).unwrap();
            for (a, b) in weighted.as_slice().iter().zip(unweighted.as_slice()) {
                prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON);
            }
        }

        #[test]
        fn kl_is_nonnegative(seed in any::<u64>(), k in 2usize..5) {
            let (z, y, c) = random_instance(seed, 6, 2, k);
            let q = soft_assign(view(&z, 2), &y, &c).unwrap();
            let p = target_distribution(&q);
            prop_assert!(kl_loss(&p, &q, &y).unwrap() >= 0.0);
        }
    }
}
