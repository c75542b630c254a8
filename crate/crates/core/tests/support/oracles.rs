//! Brute-force reference metrics, written from the definitions without the
//! library's helpers.

/// `Σ |p − g|` in index order.
pub fn sum_abs_ref(pred: &[f64], gt: &[f64]) -> f64 {
    assert_eq!(pred.len(), gt.len());
    let mut total = 0.0;
    for i in 0..pred.len() {
        total += (pred[i] - gt[i]).abs();
    }
    total
}

/// Values below `floor` count as zero in both sequences.
pub fn cae_ref(pred: &[f64], gt: &[f64], floor: f64) -> f64 {
    assert_eq!(pred.len(), gt.len());
    let mut total = 0.0;
    for i in 0..pred.len() {
        let p = if pred[i] < floor { 0.0 } else { pred[i] };
        let g = if gt[i] < floor { 0.0 } else { gt[i] };
        total += (p - g).abs();
    }
    total
}

/// Mean of the `m = clamp(⌊frac·N⌋, 1, N)` largest pooled absolute errors,
/// summed from the largest down.
pub fn top_fraction_ref(preds: &[Vec<f64>], gts: &[Vec<f64>], frac: f64) -> f64 {
    let mut errors = Vec::new();
    for (p, g) in preds.iter().zip(gts) {
        for i in 0..p.len() {
            errors.push((p[i] - g[i]).abs());
        }
    }
    let n = errors.len();
    let mut m = (frac * n as f64 + 1e-9).floor() as usize;
    if m < 1 {
        m = 1;
    }
    if m > n {
        m = n;
    }
    errors.sort_by(|a, b| b.partial_cmp(a).expect("finite errors"));
    let mut total = 0.0;
    for e in &errors[..m] {
        total += e;
    }
    total / m as f64
}

/// Random prediction/ground-truth pair with values clustered around the
/// floor, exact floor hits, zeros, and negative predictions.
pub fn random_pair<R: rand::Rng>(rng: &mut R, floor: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(1..=600);
    let mut draw = |signed: bool| -> f64 {
        match rng.random_range(0..6) {
            0 => 0.0,
            1 => floor,
            2 => floor + (rng.random::<f64>() - 0.5) * 1e-9,
            3 => rng.random::<f64>() * 3.0 * floor,
            4 if signed => -rng.random::<f64>(),
            _ => rng.random::<f64>() * 5.0,
        }
    };
    let pred = (0..n).map(|_| draw(true)).collect();
    let gt = (0..n).map(|_| draw(false)).collect();
    (pred, gt)
}
