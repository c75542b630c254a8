//! Central finite-difference checks of the prediction head.

use hxr_core::head::{HeadConfig, PostHead, PredictionHead};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-6;
/// Gradients smaller than this are compared absolutely.
pub const FLOOR: f64 = 1e-4;

/// `|a − b| / max(|a|, |b|, FLOOR)`
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Report {
    pub checked: usize,
    pub max_rel: f64,
}

impl Report {
    fn add(&mut self, analytic: f64, numeric: f64) {
        self.checked += 1;
        self.max_rel = self.max_rel.max(rel_err(analytic, numeric));
    }

    pub fn merge(&mut self, other: Report) {
        self.checked += other.checked;
        self.max_rel = self.max_rel.max(other.max_rel);
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect()
}

#[derive(Debug, Clone)]
pub struct ChainCase {
    pub head: PredictionHead,
    pub batch: Vec<Vec<Vec<f64>>>,
    /// Loss weights: `L = Σ_b Σ_i c_bi · P_bi`.
    pub weights: Vec<Vec<f64>>,
}

/// A random small head with perturbed batch-norm affine parameters.
pub fn random_case(seed: u64) -> ChainCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernel = rng.random_range(1..=4);
    let cfg = HeadConfig {
        kernel,
        stride: kernel,
        hidden_dim: rng.random_range(1..=5),
        head_dim: rng.random_range(1..=6),
        pred_len: rng.random_range(1..=5),
        ..HeadConfig::default()
    };
    let in_width = rng.random_range(1..=3);
    let mut head = PredictionHead::new(&cfg, in_width, seed).expect("valid head config");
    let h = cfg.hidden_dim;
    head.projection.bn.gamma = (0..h).map(|_| 0.5 + rng.random::<f64>()).collect();
    head.projection.bn.beta = uniform(&mut rng, h, 0.5);
    let steps = rng.random_range(kernel..=4 * kernel + 3);
    let b = rng.random_range(2..=3);
    let batch = (0..b)
        .map(|_| (0..steps).map(|_| uniform(&mut rng, in_width, 1.0)).collect())
        .collect();
    let weights = (0..b).map(|_| uniform(&mut rng, cfg.pred_len, 1.0)).collect();
    ChainCase { head, batch, weights }
}

fn loss(head: &PredictionHead, batch: &[Vec<Vec<f64>>], weights: &[Vec<f64>]) -> f64 {
    let (preds, _) = head.forward_chain(batch).expect("forward");
    let mut total = 0.0;
    for (p, c) in preds.iter().zip(weights) {
        for (a, b) in p.iter().zip(c) {
            total += a * b;
        }
    }
    total
}

fn central<F: FnMut(f64) -> f64>(x0: f64, mut f: F) -> f64 {
    (f(x0 + STEP) - f(x0 - STEP)) / (2.0 * STEP)
}

type Accessor = fn(&mut PredictionHead) -> &mut Vec<f64>;

const TENSORS: [(&str, Accessor); 8] = [
    ("projection.conv.weight", |h| &mut h.projection.conv.weight.data),
    ("projection.conv.bias", |h| &mut h.projection.conv.bias),
    ("projection.bn.gamma", |h| &mut h.projection.bn.gamma),
    ("projection.bn.beta", |h| &mut h.projection.bn.beta),
    ("post.w1.weight", |h| &mut h.post.w1.weight.data),
    ("post.w1.bias", |h| &mut h.post.w1.bias),
    ("post.w2.weight", |h| &mut h.post.w2.weight.data),
    ("post.w2.bias", |h| &mut h.post.w2.bias),
];

/// Every parameter and every input of the conv → BN → GELU → post-head
/// chain (batch-norm in training mode) against finite differences.
pub fn check_chain(case: &ChainCase) -> Report {
    let mut report = Report::default();
    let (_, cache) = case.head.forward_chain(&case.batch).expect("forward");
    let (grads, d_input, _) = case.head.backward_chain(&cache, &case.weights);
    let analytic: [&[f64]; 8] = [
        &grads.projection.conv.weight.data,
        &grads.projection.conv.bias,
        &grads.projection.gamma,
        &grads.projection.beta,
        &grads.post.w1.weight.data,
        &grads.post.w1.bias,
        &grads.post.w2.weight.data,
        &grads.post.w2.bias,
    ];
    let mut head = case.head.clone();
    for ((_, access), g) in TENSORS.iter().zip(analytic) {
        for (idx, &gi) in g.iter().enumerate() {
            let x0 = access(&mut head)[idx];
            let numeric = central(x0, |x| {
                access(&mut head)[idx] = x;
                loss(&head, &case.batch, &case.weights)
            });
            access(&mut head)[idx] = x0;
            report.add(gi, numeric);
        }
    }
    let mut batch = case.batch.clone();
    for b in 0..batch.len() {
        for t in 0..batch[b].len() {
            for c in 0..batch[b][t].len() {
                let x0 = batch[b][t][c];
                let numeric = central(x0, |x| {
                    batch[b][t][c] = x;
                    loss(&case.head, &batch, &case.weights)
                });
                batch[b][t][c] = x0;
                report.add(d_input[b][t][c], numeric);
            }
        }
    }
    report
}

/// `∂P_i/∂e_j` of the post head against finite differences, for every
/// step `i` and token `j`.
pub fn check_token_gradients(post: &PostHead, states: &[Vec<f64>]) -> Report {
    let mut report = Report::default();
    let (_, cache) = post.forward(states).expect("forward");
    let mut perturbed = states.to_vec();
    for i in 0..post.pred_len() {
        for j in 0..states.len() {
            let analytic = post.input_gradient(&cache, i, j);
            for c in 0..states[j].len() {
                let x0 = perturbed[j][c];
                let numeric = central(x0, |x| {
                    perturbed[j][c] = x;
                    post.forward(&perturbed).expect("forward").0[i]
                });
                perturbed[j][c] = x0;
                report.add(analytic[c], numeric);
            }
        }
    }
    report
}

/// Random post head and reservoir states for [`check_token_gradients`].
pub fn random_token_case(seed: u64) -> (PostHead, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
    let cfg = HeadConfig {
        hidden_dim: rng.random_range(1..=6),
        head_dim: rng.random_range(1..=6),
        pred_len: rng.random_range(1..=5),
        ..HeadConfig::default()
    };
    let post = PostHead::new(&cfg, seed).expect("valid head config");
    let k = rng.random_range(1..=6);
    let states = (0..k).map(|_| uniform(&mut rng, cfg.hidden_dim, 1.0)).collect();
    (post, states)
}
