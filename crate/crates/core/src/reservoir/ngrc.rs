//! Polynomial delay-tap feature map (next-generation reservoir computing).

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NgrcConfig {
    /// Number of delay taps `d`.
    pub taps: usize,
    /// 1 or 2.
    pub degree: usize,
    pub ridge: f64,
}

impl Default for NgrcConfig {
    fn default() -> Self {
        Self {
            taps: 8,
            degree: 2,
            ridge: 1e-6,
        }
    }
}

impl NgrcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 {
            bail!(Config, "ngrc.taps must be positive");
        }
        if !(1..=2).contains(&self.degree) {
            bail!(Config, "ngrc.degree must be 1 or 2, got {}", self.degree);
        }
        if !(self.ridge >= 0.0) {
            bail!(Config, "ngrc.ridge must be non-negative");
        }
        Ok(())
    }
}

/// `1 + d·m` for degree 1, plus `C(d·m + 1, 2)` quadratic terms for degree 2.
pub fn feature_len(taps: usize, channels: usize, degree: usize) -> usize {
    let lin = taps * channels;
    1 + lin + if degree >= 2 { lin * (lin + 1) / 2 } else { 0 }
}

/// Feature vector `[1, x…, x_i·x_j (i ≤ j)…]` where `x` is the window
/// flattened in the order given (tap-major, channel-minor) and the quadratic
/// monomials are listed lexicographically in `(i, j)`.
pub fn ngrc_features(window: &[Vec<f64>], taps: usize, degree: usize) -> Result<Vec<f64>> {
    if window.len() < taps {
        bail!(Argument, "ngrc window has {} taps, {} required", window.len(), taps);
    }
    if !(1..=2).contains(&degree) {
        bail!(Argument, "ngrc degree must be 1 or 2");
    }
    let window = &window[window.len() - taps..];
    let channels = window.first().map_or(0, Vec::len);
    if window.iter().any(|w| w.len() != channels) {
        bail!(Argument, "ngrc window rows have unequal widths");
    }
    let lin: Vec<f64> = window.iter().flatten().copied().collect();
    let mut out = Vec::with_capacity(feature_len(taps, channels, degree));
    out.push(1.0);
    out.extend_from_slice(&lin);
    if degree == 2 {
        for i in 0..lin.len() {
            for j in i..lin.len() {
                out.push(lin[i] * lin[j]);
            }
        }
    }
    Ok(out)
}

/// Features at every step of a scalar series; the window is left-padded
/// with the first sample so the output has one row per step.
pub fn series_features(series: &[f64], config: &NgrcConfig) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    let Some(&first) = series.first() else {
        bail!(Argument, "ngrc features of an empty series");
    };
    let pad = config.taps - 1;
    let padded: Vec<Vec<f64>> = core::iter::repeat_n(first, pad)
        .chain(series.iter().copied())
        .map(|v| alloc::vec![v])
        .collect();
    (0..series.len())
        .map(|t| ngrc_features(&padded[t..t + config.taps], config.taps, config.degree))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn single_tap_two_channels() {
        let (a, b) = (1.5, -2.0);
        let f = ngrc_features(&[vec![a, b]], 1, 2).unwrap();
        assert_eq!(f, vec![1.0, a, b, a * a, a * b, b * b]);
    }

    #[test]
    fn zero_window() {
        let f = ngrc_features(&[vec![0.0, 0.0], vec![0.0, 0.0]], 2, 2).unwrap();
        assert_eq!(f[0], 1.0);
        assert!(f[1..].iter().all(|&x| x == 0.0));
        assert_eq!(f.len(), feature_len(2, 2, 2));
    }

    #[test]
    fn degree_one_is_taps_only() {
        let f = ngrc_features(&[vec![1.0], vec![2.0], vec![3.0]], 3, 1).unwrap();
        assert_eq!(f, vec![1.0, 1.0, 2.0, 3.0]);
        assert_eq!(f.len(), 1 + 3);
    }

    #[test]
    fn short_window_is_rejected() {
        assert!(ngrc_features(&[vec![1.0]], 2, 2).is_err());
    }

    #[test]
    fn series_rows_match_length() {
        let cfg = NgrcConfig::default();
        let rows = series_features(&[0.1, 0.2, 0.3], &cfg).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.len() == feature_len(cfg.taps, 1, 2)));
    }
}
