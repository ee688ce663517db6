//! Fully connected classifier: ReLU + dropout on hidden layers, softmax output.
//!
//! All parameters live in one flat buffer, laid out per layer as the weight
//! matrix (`inputs x outputs`, row-major) followed by the bias.

use crate::error::{Error, Result};
use crate::math;
use crate::rng::StreamRng;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerShape {
    inputs: usize,
    outputs: usize,
    weights: usize,
    bias: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    shapes: Vec<LayerShape>,
    params: Vec<f64>,
}

/// Per-hidden-layer dropout multipliers, each `0` or `1 / keep`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub scales: Vec<Vec<f64>>,
}

impl DropoutMasks {
    pub fn sample(mlp: &Mlp, rows: usize, keep: f64, rng: &mut StreamRng) -> Self {
        let scale = 1.0 / keep;
        let scales = mlp.dims[1..mlp.dims.len() - 1]
            .iter()
            .map(|&w| (0..rows * w).map(|_| if rng.random_bool(keep) { scale } else { 0.0 }).collect())
            .collect();
        DropoutMasks { scales }
    }
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    rows: usize,
    /// Input followed by every post-activation hidden layer.
    activations: Vec<Vec<f64>>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl ForwardPass {
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn hidden(&self, layer: usize) -> &[f64] {
        &self.activations[layer + 1]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

/// `c = a · b + beta · c` with explicit strides; `a` is `m x k`, `b` is `k x n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    let extent = |rows: usize, cols: usize, (rs, cs): (usize, usize)| (rows - 1) * rs + (cols - 1) * cs + 1;
    assert!(k == 0 || a.len() >= extent(m, k, a_strides));
    assert!(k == 0 || b.len() >= extent(k, n, b_strides));
    assert!(c.len() >= m * n);
    // SAFETY: the extents asserted above keep every strided access inside the slices,
    // and `c` does not alias `a` or `b` because it is borrowed mutably.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Mlp {
    /// Layer widths from input to output; the output width is the class count.
    pub fn new(dims: &[usize], rng: &mut StreamRng) -> Result<Self> {
        let mut mlp = Self::zeros(dims)?;
        for s in mlp.shapes.clone() {
            let bound = 1.0 / math::sqrt(s.inputs as f64);
            for p in &mut mlp.params[s.weights..s.bias + s.outputs] {
                *p = rng.random_range(-bound..bound) as f32 as f64;
            }
        }
        Ok(mlp)
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::invalid(format!("invalid layer widths {:?}", dims)));
        }
        let mut shapes = Vec::with_capacity(dims.len() - 1);
        let mut offset = 0;
        for w in dims.windows(2) {
            let weights = offset;
            let bias = weights + w[0] * w[1];
            offset = bias + w[1];
            shapes.push(LayerShape { inputs: w[0], outputs: w[1], weights, bias });
        }
        Ok(Mlp { dims: dims.to_vec(), shapes, params: vec![0.0; offset] })
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut mlp = Self::zeros(dims)?;
        if params.len() != mlp.params.len() {
            return Err(Error::validation(format!(
                "expected {} parameters for widths {:?}, got {}",
                mlp.params.len(),
                dims,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::validation("non-finite detector parameter"));
        }
        mlp.params = params;
        Ok(mlp)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn classes(&self) -> usize {
        *self.dims.last().expect("at least two widths")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn forward_pass(&self, x: &[f32], masks: Option<&DropoutMasks>) -> Result<ForwardPass> {
        let d = self.input_dim();
        if !x.len().is_multiple_of(d) {
            return Err(Error::invalid(format!(
                "input of length {} is not a multiple of the input width {}",
                x.len(),
                d
            )));
        }
        let rows = x.len() / d;
        let mut activations = Vec::with_capacity(self.shapes.len());
        activations.push(x.iter().map(|&v| v as f64).collect::<Vec<f64>>());
        let last = self.shapes.len() - 1;
        let mut logits = Vec::new();
        for (l, s) in self.shapes.iter().enumerate() {
            let mut z = Vec::with_capacity(rows * s.outputs);
            let bias = &self.params[s.bias..s.bias + s.outputs];
            for _ in 0..rows {
                z.extend_from_slice(bias);
            }
            gemm(
                rows,
                s.inputs,
                s.outputs,
                &activations[l],
                (s.inputs, 1),
                &self.params[s.weights..s.bias],
                (s.outputs, 1),
                1.0,
                &mut z,
            );
            if l == last {
                logits = z;
            } else {
                match masks {
                    Some(m) => {
                        let scale = &m.scales[l];
                        if scale.len() != z.len() {
                            return Err(Error::invalid("dropout mask shape does not match the batch"));
                        }
                        for (v, &s) in z.iter_mut().zip(scale) {
                            *v = v.max(0.0) * s;
                        }
                    }
                    None => z.iter_mut().for_each(|v| *v = v.max(0.0)),
                }
                activations.push(z);
            }
        }
        let classes = self.classes();
        let mut probs = vec![0.0; logits.len()];
        for (l, p) in logits.chunks_exact(classes).zip(probs.chunks_exact_mut(classes)) {
            math::softmax_into(l, p);
        }
        Ok(ForwardPass { rows, activations, logits, probs })
    }

    /// Class probabilities in evaluation mode.
    pub fn predict(&self, x: &[f32]) -> Result<Vec<f64>> {
        Ok(self.forward_pass(x, None)?.probs)
    }

    /// Mean cross-entropy of a forward pass against class indices.
    pub fn cross_entropy(&self, pass: &ForwardPass, targets: &[usize]) -> Result<f64> {
        let classes = self.classes();
        if targets.len() != pass.rows || targets.iter().any(|&t| t >= classes) {
            return Err(Error::invalid("targets do not match the batch"));
        }
        let mut total = 0.0;
        for (l, &t) in pass.logits.chunks_exact(classes).zip(targets) {
            let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + math::ln(l.iter().map(|v| math::exp(v - max)).sum());
            total += lse - l[t];
        }
        Ok(total / pass.rows as f64)
    }

    /// Backpropagates the mean cross-entropy; gradients share the parameter layout.
    pub fn backward(&self, pass: &ForwardPass, targets: &[usize], masks: Option<&DropoutMasks>) -> Result<Vec<f64>> {
        let classes = self.classes();
        if targets.len() != pass.rows {
            return Err(Error::invalid("targets do not match the batch"));
        }
        let rows = pass.rows;
        let inv = 1.0 / rows as f64;
        let mut delta: Vec<f64> = pass.probs.clone();
        for (row, &t) in delta.chunks_exact_mut(classes).zip(targets) {
            row[t] -= 1.0;
            row.iter_mut().for_each(|v| *v *= inv);
        }
        let mut grads = vec![0.0; self.params.len()];
        for l in (0..self.shapes.len()).rev() {
            let s = self.shapes[l];
            let input = &pass.activations[l];
            // dW = inputᵀ · delta
            gemm(s.inputs, rows, s.outputs, input, (1, s.inputs), &delta, (s.outputs, 1), 0.0, &mut grads[s.weights..s.bias]);
            let db = &mut grads[s.bias..s.bias + s.outputs];
            for row in delta.chunks_exact(s.outputs) {
                for (g, &v) in db.iter_mut().zip(row) {
                    *g += v;
                }
            }
            if l == 0 {
                break;
            }
            // delta_prev = delta · Wᵀ, gated by the ReLU and dropout of layer l-1.
            let mut prev = vec![0.0; rows * s.inputs];
            gemm(rows, s.outputs, s.inputs, &delta, (s.outputs, 1), &self.params[s.weights..s.bias], (1, s.outputs), 0.0, &mut prev);
            let act = input;
            match masks {
                Some(m) => {
                    for ((v, &a), &sc) in prev.iter_mut().zip(act).zip(&m.scales[l - 1]) {
                        *v = if a > 0.0 { *v * sc } else { 0.0 };
                    }
                }
                None => {
                    for (v, &a) in prev.iter_mut().zip(act) {
                        if a <= 0.0 {
                            *v = 0.0;
                        }
                    }
                }
            }
            delta = prev;
        }
        Ok(grads)
    }

    /// Rounds every parameter to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        self.params.iter_mut().for_each(|p| *p = *p as f32 as f64);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Stage};
    use alloc::vec::Vec;

    fn small_net(seed: u64) -> Mlp {
        Mlp::new(&[8, 16, 16, 2], &mut rng::stream(seed, Stage::DetectorInit, &[])).unwrap()
    }

    fn batch(seed: u64, rows: usize, d: usize) -> Vec<f32> {
        let mut r = rng::stream(seed, Stage::SynthFrame, &[]);
        (0..rows * d).map(|_| r.random_range(-1.5..1.5f32)).collect()
    }

    #[test]
    fn rows_are_probability_vectors() {
        let net = small_net(1);
        let p = net.predict(&batch(2, 5, 8)).unwrap();
        for row in p.chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_parameters_give_even_odds() {
        let net = Mlp::zeros(&[8, 16, 16, 2]).unwrap();
        let p = net.predict(&batch(3, 4, 8)).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn matches_layer_by_layer_oracle() {
        let net = small_net(4);
        let x = batch(5, 3, 8);
        let got = net.predict(&x).unwrap();
        // Plain triple loops over the flat layout.
        let p = net.params();
        let mut h: Vec<Vec<f64>> = x.chunks(8).map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let mut offset = 0;
        let dims = [8, 16, 16, 2];
        for l in 0..3 {
            let (ni, no) = (dims[l], dims[l + 1]);
            let w = &p[offset..offset + ni * no];
            let b = &p[offset + ni * no..offset + ni * no + no];
            offset += ni * no + no;
            h = h
                .iter()
                .map(|row| {
                    (0..no)
                        .map(|o| {
                            let z = b[o] + (0..ni).map(|i| row[i] * w[i * no + o]).sum::<f64>();
                            if l < 2 { z.max(0.0) } else { z }
                        })
                        .collect()
                })
                .collect();
        }
        for (r, row) in h.iter().enumerate() {
            let e0 = row[0].exp();
            let e1 = row[1].exp();
            assert!((got[2 * r] - e0 / (e0 + e1)).abs() < 1e-6);
            assert!((got[2 * r + 1] - e1 / (e0 + e1)).abs() < 1e-6);
        }
    }

    fn gradient_check(masks: Option<&DropoutMasks>) -> f64 {
        let mut net = small_net(6);
        let x = batch(7, 4, 8);
        let targets = [0usize, 1, 1, 0];
        let pass = net.forward_pass(&x, masks).unwrap();
        let grads = net.backward(&pass, &targets, masks).unwrap();
        let h = 1e-4;
        let mut worst = 0.0f64;
        for idx in 0..net.parameter_count() {
            let orig = net.params()[idx];
            net.params_mut()[idx] = orig + h;
            let up = net.cross_entropy(&net.forward_pass(&x, masks).unwrap(), &targets).unwrap();
            net.params_mut()[idx] = orig - h;
            let down = net.cross_entropy(&net.forward_pass(&x, masks).unwrap(), &targets).unwrap();
            net.params_mut()[idx] = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - grads[idx]).abs() / fd.abs().max(grads[idx].abs()).max(1e-7);
            worst = worst.max(rel);
        }
        worst
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let worst = gradient_check(None);
        assert!(worst <= 1e-4, "max relative error {}", worst);
    }

    #[test]
    fn backprop_with_dropout_matches_finite_differences() {
        let net = small_net(6);
        let masks = DropoutMasks::sample(&net, 4, 0.8, &mut rng::stream(1, Stage::DetectorDropout, &[]));
        let worst = gradient_check(Some(&masks));
        assert!(worst <= 1e-4, "max relative error {}", worst);
    }

    #[test]
    fn dropout_preserves_expected_activation() {
        let net = small_net(8);
        let x = batch(9, 1, 8);
        let eval = net.forward_pass(&x, None).unwrap();
        let trials = 10_000;
        let mut rng = rng::stream(2, Stage::DetectorDropout, &[]);
        let mut sums = [0.0; 16];
        for _ in 0..trials {
            let masks = DropoutMasks::sample(&net, 1, 0.8, &mut rng);
            let pass = net.forward_pass(&x, Some(&masks)).unwrap();
            for (s, v) in sums.iter_mut().zip(pass.hidden(0)) {
                *s += v;
            }
        }
        for (s, &e) in sums.iter().zip(eval.hidden(0)) {
            let mean = s / trials as f64;
            if e > 1e-3 {
                assert!((mean - e).abs() <= 0.02 * e, "mean {} vs eval {}", mean, e);
            } else {
                assert!(mean.abs() < 1e-3);
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Mlp::zeros(&[4]).is_err());
        assert!(Mlp::zeros(&[4, 0, 2]).is_err());
        let net = small_net(1);
        assert!(net.predict(&[0.0; 7]).is_err());
        assert!(Mlp::from_params(&[8, 16, 16, 2], vec![0.0; 3]).is_err());
    }
}
