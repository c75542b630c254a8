//! Training loss and evaluation metrics: cumulative absolute error (CAE)
//! with a nullification floor, and top-fraction MAE over pooled errors.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// Default CAE floor: values below it are treated as zero.
pub const DEFAULT_FLOOR: f64 = 0.03;

/// Set-level metric summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cae: f64,
    pub top1_mae: f64,
    pub top5_mae: f64,
    pub n_shots: usize,
    pub pooled_steps: usize,
}

fn check_lengths(pred: &[f64], gt: &[f64]) -> Result<()> {
    if pred.len() != gt.len() {
        bail!(
            Argument,
            "length mismatch: prediction {} vs ground truth {}",
            pred.len(),
            gt.len()
        );
    }
    Ok(())
}

/// `Σ |pred_n − gt_n|`, summed in index order.
pub fn sum_abs_loss(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_lengths(pred, gt)?;
    Ok(pred.iter().zip(gt).map(|(p, g)| (p - g).abs()).sum())
}

/// Cumulative absolute error after zeroing every value below `floor` in
/// both sequences.
pub fn cae(pred: &[f64], gt: &[f64], floor: f64) -> Result<f64> {
    check_lengths(pred, gt)?;
    if !(floor >= 0.0) {
        bail!(Argument, "CAE floor must be non-negative, got {floor}");
    }
    let null = |v: f64| if v < floor { 0.0 } else { v };
    Ok(pred.iter().zip(gt).map(|(&p, &g)| (null(p) - null(g)).abs()).sum())
}

/// Number of pooled errors averaged by [`top_fraction_mae`].
pub fn top_count(frac: f64, pooled: usize) -> usize {
    let m = libm::floor(frac * pooled as f64 + 1e-9) as usize;
    m.clamp(1, pooled.max(1))
}

/// Mean of the largest `max(1, ⌊frac · N⌋)` absolute errors pooled over all
/// steps of all shots.
pub fn top_fraction_mae(preds: &[Vec<f64>], gts: &[Vec<f64>], frac: f64) -> Result<f64> {
    if !(frac > 0.0 && frac <= 1.0) {
        bail!(Argument, "top fraction must lie in (0, 1], got {frac}");
    }
    if preds.len() != gts.len() {
        bail!(Argument, "shot count mismatch: {} vs {}", preds.len(), gts.len());
    }
    let mut errors = Vec::new();
    for (p, g) in preds.iter().zip(gts) {
        check_lengths(p, g)?;
        errors.extend(p.iter().zip(g).map(|(a, b)| (a - b).abs()));
    }
    if errors.is_empty() {
        bail!(Argument, "top-fraction MAE of an empty error pool");
    }
    let m = top_count(frac, errors.len());
    // Partition so the m largest sit in front, then order them descending so
    // the sum is taken in a canonical order.
    if m < errors.len() {
        errors.select_nth_unstable_by(m - 1, |a, b| b.total_cmp(a));
    }
    let top = &mut errors[..m];
    top.sort_by(|a, b| b.total_cmp(a));
    Ok(top.iter().sum::<f64>() / m as f64)
}

/// Mean per-shot CAE plus pooled top-1% and top-5% MAE.
pub fn evaluate_set(preds: &[Vec<f64>], gts: &[Vec<f64>], floor: f64) -> Result<MetricReport> {
    if preds.len() != gts.len() {
        bail!(Argument, "shot count mismatch: {} vs {}", preds.len(), gts.len());
    }
    if preds.is_empty() {
        bail!(Argument, "cannot evaluate an empty set");
    }
    let mut total = 0.0;
    for (p, g) in preds.iter().zip(gts) {
        total += cae(p, g, floor)?;
    }
    Ok(MetricReport {
        cae: total / preds.len() as f64,
        top1_mae: top_fraction_mae(preds, gts, 0.01)?,
        top5_mae: top_fraction_mae(preds, gts, 0.05)?,
        n_shots: preds.len(),
        pooled_steps: preds.iter().map(Vec::len).sum(),
    })
}

/// 1-based ranks with ties sharing their mean rank.
fn mean_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = alloc::vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; `None` when either input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        bail!(Argument, "spearman: {} vs {} samples", a.len(), b.len());
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        bail!(Numeric, "spearman: non-finite sample");
    }
    let (ra, rb) = (mean_ranks(a), mean_ranks(b));
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean) * (y - mean);
        va += (x - mean) * (x - mean);
        vb += (y - mean) * (y - mean);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(None);
    }
    Ok(Some(cov / libm::sqrt(va * vb)))
}
