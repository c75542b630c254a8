//! Shot data model, the synthetic laser/HXR generator, splitting,
//! normalization and summary statistics.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// Sampling interval of every generated shot, in nanoseconds.
pub const DEFAULT_DT_NS: f64 = 0.025;
/// Time steps per generated shot.
pub const DEFAULT_STEPS: usize = 400;

/// One shot: a laser intensity profile and the hard-X-ray signal it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub shot_id: String,
    pub dt_ns: f64,
    pub target_size_um: f64,
    pub phase_plate: String,
    pub laser: Vec<f64>,
    pub hxr: Vec<f64>,
}

impl Shot {
    pub fn len(&self) -> usize {
        self.laser.len()
    }

    pub fn is_empty(&self) -> bool {
        self.laser.is_empty()
    }

    /// Checks the per-shot schema invariants.
    pub fn validate(&self) -> Result<()> {
        if self.laser.len() != self.hxr.len() {
            bail!(
                Argument,
                "shot {}: laser has {} steps but hxr has {}",
                self.shot_id,
                self.laser.len(),
                self.hxr.len()
            );
        }
        if !(self.dt_ns > 0.0 && self.dt_ns.is_finite()) {
            bail!(Argument, "shot {}: dt_ns must be positive", self.shot_id);
        }
        if !(self.target_size_um > 0.0 && self.target_size_um.is_finite()) {
            bail!(Argument, "shot {}: target_size_um must be positive", self.shot_id);
        }
        if self.laser.iter().chain(&self.hxr).any(|v| !v.is_finite()) {
            bail!(Argument, "shot {}: non-finite sample", self.shot_id);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
    Unsplit,
}

/// An ordered collection of shots with unique ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotSet {
    pub shots: Vec<Shot>,
    pub split_tag: SplitTag,
}

impl ShotSet {
    pub fn new(shots: Vec<Shot>, split_tag: SplitTag) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &shots {
            if !seen.insert(s.shot_id.as_str()) {
                bail!(Argument, "duplicate shot_id {}", s.shot_id);
            }
        }
        Ok(Self { shots, split_tag })
    }

    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Shot> {
        self.shots.iter()
    }
}

/// Closed interval `[lo, hi]` a generator parameter is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.lo + (self.hi - self.lo) * u
    }

    fn check(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            bail!(Config, "{name}: interval [{}, {}] is not ordered", self.lo, self.hi);
        }
        Ok(())
    }
}

/// Parameters of the synthetic laser-plasma generator.
///
/// Times and widths are in steps. The laser is a Gaussian picket, a linear
/// ramp to `ramp_level · peak_amplitude`, a Gaussian rise into the main peak
/// and an exponential trailing edge. The HXR signal is a causal triangular
/// kernel applied to `max(0, laser − lpi_threshold)^lpi_exponent`, plus
/// Gaussian noise clipped at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_shots: usize,
    pub steps: usize,
    pub seed: u64,
    pub dt_ns: f64,
    pub picket_amplitude: Interval,
    pub picket_time: f64,
    pub picket_width: f64,
    pub ramp_start: f64,
    pub ramp_duration: Interval,
    pub ramp_level: f64,
    pub peak_amplitude: Interval,
    pub peak_time: Interval,
    pub peak_rise_width: f64,
    pub trailing_decay: Interval,
    pub lpi_threshold: f64,
    pub lpi_exponent: f64,
    pub response_kernel_width: usize,
    pub hxr_gain: f64,
    pub noise_std: f64,
    pub target_size_um: Interval,
    pub phase_plates: Vec<String>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_shots: 100,
            steps: DEFAULT_STEPS,
            seed: 7,
            dt_ns: DEFAULT_DT_NS,
            picket_amplitude: Interval::new(0.05, 0.3),
            picket_time: 20.0,
            picket_width: 6.0,
            ramp_start: 40.0,
            ramp_duration: Interval::new(60.0, 140.0),
            ramp_level: 0.3,
            peak_amplitude: Interval::new(0.5, 1.2),
            peak_time: Interval::new(180.0, 300.0),
            peak_rise_width: 20.0,
            trailing_decay: Interval::new(15.0, 60.0),
            lpi_threshold: 0.45,
            lpi_exponent: 2.0,
            response_kernel_width: 12,
            hxr_gain: 1.0,
            noise_std: 0.004,
            target_size_um: Interval::new(850.0, 1000.0),
            phase_plates: vec![String::from("SG4"), String::from("SG5")],
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_shots == 0 {
            bail!(Config, "n_shots must be positive");
        }
        if self.steps == 0 {
            bail!(Config, "steps must be positive");
        }
        if !(self.dt_ns > 0.0 && self.dt_ns.is_finite()) {
            bail!(Config, "dt_ns must be positive");
        }
        for (name, iv) in [
            ("picket_amplitude", &self.picket_amplitude),
            ("ramp_duration", &self.ramp_duration),
            ("peak_amplitude", &self.peak_amplitude),
            ("peak_time", &self.peak_time),
            ("trailing_decay", &self.trailing_decay),
            ("target_size_um", &self.target_size_um),
        ] {
            iv.check(name)?;
        }
        if self.picket_amplitude.lo < 0.0 || self.peak_amplitude.lo < 0.0 {
            bail!(Config, "pulse amplitudes must be non-negative");
        }
        if self.ramp_duration.lo <= 0.0 || self.trailing_decay.lo <= 0.0 {
            bail!(Config, "ramp_duration and trailing_decay must be positive");
        }
        if self.target_size_um.lo <= 0.0 {
            bail!(Config, "target_size_um must be positive");
        }
        if !(self.picket_width > 0.0 && self.peak_rise_width > 0.0) {
            bail!(Config, "pulse widths must be positive");
        }
        if !(self.ramp_level >= 0.0 && self.hxr_gain >= 0.0) {
            bail!(Config, "ramp_level and hxr_gain must be non-negative");
        }
        if !(self.lpi_threshold > 0.0 && self.lpi_threshold.is_finite()) {
            bail!(Config, "lpi_threshold must be positive");
        }
        if !(self.lpi_exponent >= 1.0 && self.lpi_exponent.is_finite()) {
            bail!(Config, "lpi_exponent must be >= 1");
        }
        if self.response_kernel_width == 0 {
            bail!(Config, "response_kernel_width must be positive");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            bail!(Config, "noise_std must be non-negative");
        }
        if self.phase_plates.is_empty() {
            bail!(Config, "phase_plates must not be empty");
        }
        Ok(())
    }
}

/// Pulse parameters drawn for one shot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    pub picket_amplitude: f64,
    pub ramp_duration: f64,
    pub peak_amplitude: f64,
    pub peak_time: f64,
    pub trailing_decay: f64,
    pub target_size_um: f64,
    pub phase_plate: String,
}

/// Per-shot RNG: stream `index` of the ChaCha generator keyed by `seed`.
fn shot_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Draws the pulse parameters for shot `index`.
pub fn sample_pulse(config: &GeneratorConfig, index: usize) -> PulseParams {
    let mut rng = shot_rng(config.seed, index);
    pulse_from_rng(config, &mut rng)
}

fn pulse_from_rng<R: Rng + ?Sized>(config: &GeneratorConfig, rng: &mut R) -> PulseParams {
    let plate = rng.random_range(0..config.phase_plates.len());
    PulseParams {
        picket_amplitude: config.picket_amplitude.sample(rng),
        ramp_duration: config.ramp_duration.sample(rng),
        peak_amplitude: config.peak_amplitude.sample(rng),
        peak_time: config.peak_time.sample(rng),
        trailing_decay: config.trailing_decay.sample(rng),
        target_size_um: config.target_size_um.sample(rng),
        phase_plate: config.phase_plates[plate].clone(),
    }
}

/// Laser intensity profile for the given pulse.
pub fn laser_profile(config: &GeneratorConfig, p: &PulseParams) -> Vec<f64> {
    let ramp_amp = config.ramp_level * p.peak_amplitude;
    (0..config.steps)
        .map(|n| {
            let t = n as f64;
            let z = (t - config.picket_time) / config.picket_width;
            let picket = p.picket_amplitude * libm::exp(-0.5 * z * z);
            let ramp = if t < config.ramp_start {
                0.0
            } else {
                ramp_amp * ((t - config.ramp_start) / p.ramp_duration).min(1.0)
            };
            let (main, envelope) = if t <= p.peak_time {
                let z = (t - p.peak_time) / config.peak_rise_width;
                (p.peak_amplitude * libm::exp(-0.5 * z * z), 1.0)
            } else {
                let decay = libm::exp(-(t - p.peak_time) / p.trailing_decay);
                (p.peak_amplitude * decay, decay)
            };
            picket + ramp * envelope + main
        })
        .collect()
}

/// Normalized causal triangular kernel of the given width.
pub fn response_kernel(width: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..width).map(|j| (j + 1).min(width - j) as f64).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// HXR response of a laser profile; `noise` holds one standard-normal draw
/// per step and is scaled by `noise_std`.
pub fn hxr_response(config: &GeneratorConfig, laser: &[f64], noise: &[f64]) -> Vec<f64> {
    debug_assert_eq!(laser.len(), noise.len());
    let kernel = response_kernel(config.response_kernel_width);
    let drive: Vec<f64> = laser
        .iter()
        .map(|&l| libm::pow((l - config.lpi_threshold).max(0.0), config.lpi_exponent))
        .collect();
    (0..laser.len())
        .map(|n| {
            let conv: f64 = kernel
                .iter()
                .enumerate()
                .take(n + 1)
                .map(|(j, k)| k * drive[n - j])
                .sum();
            (config.hxr_gain * conv + config.noise_std * noise[n]).max(0.0)
        })
        .collect()
}

/// Generates shot `index` of the configured synthetic campaign.
///
/// Bit-identical for equal `(config, index)`; no shared RNG state.
pub fn synth_shot(config: &GeneratorConfig, index: usize) -> Result<Shot> {
    config.validate()?;
    if index >= config.n_shots {
        bail!(Argument, "index {index} out of range for {} shots", config.n_shots);
    }
    let mut rng = shot_rng(config.seed, index);
    let pulse = pulse_from_rng(config, &mut rng);
    let noise: Vec<f64> = (0..config.steps).map(|_| rng.sample(StandardNormal)).collect();
    let laser = laser_profile(config, &pulse);
    let hxr = hxr_response(config, &laser, &noise);
    Ok(Shot {
        shot_id: format!("synth-{}-{:04}", config.seed, index),
        dt_ns: config.dt_ns,
        target_size_um: pulse.target_size_um,
        phase_plate: pulse.phase_plate,
        laser,
        hxr,
    })
}

/// Generates the whole campaign as an unsplit set.
pub fn synth_set(config: &GeneratorConfig) -> Result<ShotSet> {
    let shots = (0..config.n_shots)
        .map(|i| synth_shot(config, i))
        .collect::<Result<Vec<_>>>()?;
    ShotSet::new(shots, SplitTag::Unsplit)
}

/// Sizes of a `(train, val, test)` split of `n` items: validation and test
/// sizes are floored, the remainder goes to train.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<(usize, usize, usize)> {
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        bail!(Argument, "split ratios must be finite and non-negative");
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        bail!(Argument, "split ratios sum to {sum}, expected 1");
    }
    // The small slack keeps products such as 0.29 · 100 from flooring one short.
    let floor = |r: f64| libm::floor(n as f64 * r + 1e-9) as usize;
    let val = floor(ratios[1]).min(n);
    let test = floor(ratios[2]).min(n - val);
    Ok((n - val - test, val, test))
}

/// Deterministic shuffled split into train/val/test sets.
pub fn split_shots(set: &ShotSet, ratios: [f64; 3], seed: u64) -> Result<(ShotSet, ShotSet, ShotSet)> {
    if set.is_empty() {
        bail!(Argument, "cannot split an empty shot set");
    }
    let (n_train, n_val, _) = split_sizes(set.len(), ratios)?;
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize], tag| ShotSet {
        shots: idx.iter().map(|&i| set.shots[i].clone()).collect(),
        split_tag: tag,
    };
    Ok((
        pick(&order[..n_train], SplitTag::Train),
        pick(&order[n_train..n_train + n_val], SplitTag::Val),
        pick(&order[n_train + n_val..], SplitTag::Test),
    ))
}

/// Summary statistics quoted in the input descriptor of the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputStats {
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

/// Exact min/max/median; even lengths use the mean of the central pair.
pub fn input_stats(series: &[f64]) -> Result<InputStats> {
    if series.is_empty() {
        bail!(Argument, "input_stats of an empty series");
    }
    if series.iter().any(|v| !v.is_finite()) {
        bail!(Argument, "input_stats of a non-finite series");
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Ok(InputStats {
        min: sorted[0],
        max: sorted[n - 1],
        median,
    })
}

/// `normalized = (raw − offset) / scale`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub scale: f64,
    pub offset: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine {
        scale: 1.0,
        offset: 0.0,
    };

    /// Min-max parameters; a constant channel gets scale 1 and offset min.
    pub fn min_max<'a>(values: impl IntoIterator<Item = &'a f64>) -> Self {
        let (lo, hi) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let span = hi - lo;
        Self {
            scale: if span > 0.0 { span } else { 1.0 },
            offset: lo,
        }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.offset) / self.scale
    }

    #[inline]
    pub fn invert(&self, y: f64) -> f64 {
        y * self.scale + self.offset
    }

    pub fn apply_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.apply(x)).collect()
    }

    pub fn invert_all(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.invert(y)).collect()
    }
}

/// Per-channel normalization parameters, fitted on a training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub laser: Affine,
    pub hxr: Affine,
}

impl NormParams {
    pub fn fit(set: &ShotSet) -> Result<Self> {
        if set.is_empty() {
            bail!(Argument, "cannot normalize an empty shot set");
        }
        Ok(Self {
            laser: Affine::min_max(set.iter().flat_map(|s| &s.laser)),
            hxr: Affine::min_max(set.iter().flat_map(|s| &s.hxr)),
        })
    }

    pub fn apply(&self, set: &ShotSet) -> ShotSet {
        self.map(set, Affine::apply_all)
    }

    pub fn invert(&self, set: &ShotSet) -> ShotSet {
        self.map(set, Affine::invert_all)
    }

    fn map(&self, set: &ShotSet, f: fn(&Affine, &[f64]) -> Vec<f64>) -> ShotSet {
        let shots = set
            .iter()
            .map(|s| Shot {
                laser: f(&self.laser, &s.laser),
                hxr: f(&self.hxr, &s.hxr),
                ..s.clone()
            })
            .collect();
        ShotSet {
            shots,
            split_tag: set.split_tag,
        }
    }
}

/// Min-max scales both channels of `set` to `[0, 1]` using its own extrema.
pub fn normalize(set: &ShotSet) -> Result<(ShotSet, NormParams)> {
    let params = NormParams::fit(set)?;
    Ok((params.apply(set), params))
}
