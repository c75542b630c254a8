//! Training and forecasting pipelines for the three reservoirs, plus the
//! reference baselines.
//!
//! The language-model pipeline runs the signal channels and the input
//! projection at their seeded initialization: the remote reservoir exposes
//! no Jacobian, so only the post head (after the reservoir) is trained.
//! Batch norm is calibrated once on the training inputs and then used in
//! eval mode, which makes every shot's reservoir output fixed and lets it be
//! computed once per run.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::confidence;
use crate::data::{input_stats, NormParams, Shot, ShotSet};
use crate::error::{bail, Error, Result};
use crate::head::{
    add_linear, l1_loss_grad, post_grads, post_params_mut, HeadConfig, PostGrads, PostHead, PredictionHead,
};
use crate::metrics::sum_abs_loss;
use crate::optim::{Adam, AdamConfig};
use crate::prompt::{FusionPrompt, PromptBuilder};
use crate::reservoir::{llm_reservoir_run, EsnConfig, EsnForecaster, NgrcConfig, NgrcForecaster, ReservoirKind};
use crate::sdc::{default_context_terms, PatchConfig, SignalChannels};
use crate::service::{ReservoirOutput, ReservoirService, DEFAULT_LAST_K};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 100,
            batch_size: 5,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            bail!(Config, "train.epochs and train.batch_size must be positive");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            bail!(Config, "train.lr must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            bail!(Config, "adam betas must lie in [0, 1) and eps be positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub patch: PatchConfig,
    pub head: HeadConfig,
    pub train: TrainConfig,
    /// Trailing reservoir positions read by the head and the scanner.
    pub k: usize,
    pub context_terms: Vec<String>,
    /// Seeds the channel and head initialization.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            patch: PatchConfig::default(),
            head: HeadConfig::default(),
            train: TrainConfig::default(),
            k: DEFAULT_LAST_K,
            context_terms: default_context_terms(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.patch.validate()?;
        self.head.validate()?;
        self.train.validate()?;
        if self.k == 0 {
            bail!(Config, "k must be positive");
        }
        if self.context_terms.is_empty() || self.context_terms.iter().any(|t| t.trim().is_empty()) {
            bail!(Config, "context_terms must be non-empty strings");
        }
        if self.head.pred_len != self.patch.horizon {
            bail!(
                Config,
                "head.pred_len {} differs from patch.horizon {}",
                self.head.pred_len,
                self.patch.horizon
            );
        }
        if self.head.kernel != self.patch.patch_size {
            bail!(
                Config,
                "head.kernel {} differs from patch.patch_size {}",
                self.head.kernel,
                self.patch.patch_size
            );
        }
        Ok(())
    }
}

/// One row of the training trace. Losses are mean per-shot `Σ|p − y|` on
/// normalized targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Reservoir states and normalized target of one shot.
pub type HeadExample = (Vec<Vec<f64>>, Vec<f64>);

fn mean_loss(post: &PostHead, examples: &[HeadExample]) -> Result<f64> {
    let mut total = 0.0;
    for (states, target) in examples {
        let (pred, _) = post.forward(states)?;
        total += sum_abs_loss(&pred, target)?;
    }
    Ok(total / examples.len() as f64)
}

/// Mini-batch Adam on the post head with an L1 loss. Keeps the parameters
/// of the epoch with the lowest validation loss (training loss when there
/// is no validation data).
pub fn fit_post_head(
    initial: &PostHead,
    train: &[HeadExample],
    val: &[HeadExample],
    cfg: &TrainConfig,
) -> Result<(PostHead, TrainTrace)> {
    cfg.validate()?;
    if train.is_empty() {
        bail!(Argument, "training set is empty");
    }
    let mut post = initial.clone();
    let mut adam = Adam::new(cfg.adam());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, post.clone(), 1);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = PostGrads {
                w1: post.w1.zeros_like(),
                w2: post.w2.zeros_like(),
            };
            let mut batch_loss = 0.0;
            for &i in chunk {
                let (states, target) = &train[i];
                let (pred, cache) = post.forward(states)?;
                let (loss, d_pred) = l1_loss_grad(&pred, target)?;
                let (g, _) = post.backward(&cache, &d_pred);
                add_linear(&mut grads.w1, &g.w1);
                add_linear(&mut grads.w2, &g.w2);
                batch_loss += loss;
            }
            if !batch_loss.is_finite() {
                bail!(Numeric, "loss is {batch_loss} at epoch {epoch}, batch {}", b + 1);
            }
            let inv = 1.0 / chunk.len() as f64;
            for t in [&mut grads.w1, &mut grads.w2] {
                t.weight.scale(inv);
                t.bias.iter_mut().for_each(|v| *v *= inv);
            }
            adam.step(&mut post_params_mut(&mut post), &post_grads(&grads))
                .map_err(|e| Error::Numeric(format!("epoch {epoch}, batch {}: {e}", b + 1)))?;
            epoch_loss += batch_loss;
        }
        let train_loss = epoch_loss / train.len() as f64;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(mean_loss(&post, val)?)
        };
        let score = val_loss.unwrap_or(train_loss);
        if score < best.0 {
            best = (score, post.clone(), epoch);
        }
        trace.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
    }
    Ok((
        best.1,
        TrainTrace {
            epochs: trace,
            best_epoch: best.2,
        },
    ))
}

/// Trained language-model pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmModel {
    pub config: PipelineConfig,
    pub prompt: PromptBuilder,
    pub norm: NormParams,
    pub channels: SignalChannels,
    pub head: PredictionHead,
    /// Context-term embeddings fetched from the service at initialization.
    pub term_vectors: Vec<Vec<f64>>,
    pub model_id: String,
}

impl LlmModel {
    /// Seeded, untrained pipeline sized for `service`.
    pub fn init<S: ReservoirService + ?Sized>(
        service: &S,
        config: &PipelineConfig,
        prompt: &PromptBuilder,
        norm: NormParams,
    ) -> Result<Self> {
        config.validate()?;
        let info = service.info()?;
        info.check_compatible()?;
        let term_vectors = service
            .embed_terms(&config.context_terms)
            .map_err(|source| Error::ServiceContext {
                context: "embedding context terms".into(),
                source,
            })?;
        let channels = SignalChannels::new(config.patch.clone(), info.hidden_dim, config.seed)?;
        let head_cfg = HeadConfig {
            hidden_dim: info.hidden_dim,
            ..config.head.clone()
        };
        let in_width = 1 + 2 * config.patch.d_tmp;
        let head = PredictionHead::new(&head_cfg, in_width, config.seed.wrapping_add(2))?;
        Ok(Self {
            config: PipelineConfig {
                head: head_cfg,
                ..config.clone()
            },
            prompt: prompt.clone(),
            norm,
            channels,
            head,
            term_vectors,
            model_id: info.model_id,
        })
    }

    fn check_shot(&self, shot: &Shot) -> Result<()> {
        if shot.laser.len() != self.config.patch.window_len {
            bail!(
                Argument,
                "shot {} has {} steps, the pipeline expects {}",
                shot.shot_id,
                shot.laser.len(),
                self.config.patch.window_len
            );
        }
        Ok(())
    }

    /// Per-step conv input `[laser_t ; Ė of the patch containing t]`.
    pub fn step_inputs(&self, laser_norm: &[f64]) -> Result<Vec<Vec<f64>>> {
        let aug = self.channels.encode(laser_norm, &self.term_vectors)?;
        let patch = &self.channels.patch;
        let pad = patch.left_pad(laser_norm.len());
        Ok(laser_norm
            .iter()
            .enumerate()
            .map(|(t, &x)| {
                let token = &aug.tokens[((t + pad) / patch.stride).min(aug.tokens.len() - 1)];
                core::iter::once(x).chain(token.iter().copied()).collect()
            })
            .collect())
    }

    /// Reservoir input tokens of one normalized laser series.
    pub fn project(&self, laser_norm: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.head.projection.forward_eval(&self.step_inputs(laser_norm)?)
    }

    pub fn prompt_for(&self, shot: &Shot) -> Result<FusionPrompt> {
        self.prompt.for_series(
            &input_stats(&shot.laser)?,
            shot.laser.len(),
            self.config.head.pred_len,
            &shot.phase_plate,
        )
    }

    pub fn reservoir<S: ReservoirService + ?Sized>(&self, service: &S, shot: &Shot) -> Result<ReservoirOutput> {
        self.check_shot(shot)?;
        let projected = self.project(&self.norm.laser.apply_all(&shot.laser))?;
        let prompt = self.prompt_for(shot)?;
        llm_reservoir_run(
            service,
            &prompt,
            &projected,
            self.config.k,
            &format!("shot {}", shot.shot_id),
        )
    }

    /// Prediction in raw HXR units.
    pub fn forecast<S: ReservoirService + ?Sized>(&self, service: &S, shot: &Shot) -> Result<Vec<f64>> {
        let out = self.reservoir(service, shot)?;
        let (pred, _) = self.head.post.forward(&out.states)?;
        Ok(self.norm.hxr.invert_all(&pred))
    }

    /// Raw prediction and per-step confidence.
    pub fn forecast_with_confidence<S: ReservoirService + ?Sized>(
        &self,
        service: &S,
        shot: &Shot,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = self.reservoir(service, shot)?;
        let (pred, conf) = confidence::scan(&out, &self.head.post, self.config.k)?;
        Ok((self.norm.hxr.invert_all(&pred), conf))
    }
}

/// Trains the language-model pipeline: normalization and batch-norm
/// statistics from `train`, then the post head on cached reservoir outputs.
pub fn train_llm<S: ReservoirService + ?Sized>(
    service: &S,
    train: &ShotSet,
    val: &ShotSet,
    config: &PipelineConfig,
    prompt: &PromptBuilder,
) -> Result<(LlmModel, TrainTrace)> {
    if train.is_empty() {
        bail!(Argument, "training set is empty");
    }
    let norm = NormParams::fit(train)?;
    let mut model = LlmModel::init(service, config, prompt, norm)?;
    for shot in train.iter().chain(val.iter()) {
        model.check_shot(shot)?;
        if shot.hxr.len() != model.config.head.pred_len {
            bail!(
                Argument,
                "shot {} has {} hxr steps, pred_len is {}",
                shot.shot_id,
                shot.hxr.len(),
                model.config.head.pred_len
            );
        }
    }
    let inputs: Vec<Vec<Vec<f64>>> = train
        .iter()
        .map(|s| model.step_inputs(&norm.laser.apply_all(&s.laser)))
        .collect::<Result<_>>()?;
    model.head.projection.calibrate(&inputs)?;
    let examples = |set: &ShotSet| -> Result<Vec<HeadExample>> {
        set.iter()
            .map(|s| Ok((model.reservoir(service, s)?.states, norm.hxr.apply_all(&s.hxr))))
            .collect()
    };
    let train_ex = examples(train)?;
    let val_ex = examples(val)?;
    let (post, trace) = fit_post_head(&model.head.post, &train_ex, &val_ex, &config.train)?;
    model.head.post = post;
    Ok((model, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Forecaster {
    Esn(EsnForecaster),
    Ngrc(NgrcForecaster),
}

/// Classical reservoir with a ridge readout, fitted on normalized data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalModel {
    pub norm: NormParams,
    pub forecaster: Forecaster,
}

impl ClassicalModel {
    pub fn kind(&self) -> ReservoirKind {
        match self.forecaster {
            Forecaster::Esn(_) => ReservoirKind::Esn,
            Forecaster::Ngrc(_) => ReservoirKind::Ngrc,
        }
    }

    /// Prediction in raw HXR units.
    pub fn forecast(&self, laser: &[f64]) -> Result<Vec<f64>> {
        let x = self.norm.laser.apply_all(laser);
        let y = match &self.forecaster {
            Forecaster::Esn(f) => f.forecast(&x)?,
            Forecaster::Ngrc(f) => f.forecast(&x)?,
        };
        Ok(self.norm.hxr.invert_all(&y))
    }
}

impl ClassicalModel {
    /// In-sample reproduction of a training shot in raw units.
    pub fn reproduce(&self, shot: &Shot) -> Result<Vec<f64>> {
        let x = self.norm.laser.apply_all(&shot.laser);
        let y = match &self.forecaster {
            Forecaster::Esn(f) => f.reproduce(&x, &self.norm.hxr.apply_all(&shot.hxr))?,
            Forecaster::Ngrc(f) => f.forecast(&x)?,
        };
        Ok(self.norm.hxr.invert_all(&y))
    }

    /// Mean per-shot `Σ|p − y|` of the in-sample reproduction, raw units.
    pub fn train_loss(&self, train: &ShotSet) -> Result<f64> {
        if train.is_empty() {
            bail!(Argument, "training set is empty");
        }
        let mut total = 0.0;
        for shot in train.iter() {
            total += sum_abs_loss(&self.reproduce(shot)?, &shot.hxr)?;
        }
        Ok(total / train.len() as f64)
    }
}

type SeriesPairs = Vec<(Vec<f64>, Vec<f64>)>;

fn normalized_pairs(train: &ShotSet) -> Result<(NormParams, SeriesPairs)> {
    if train.is_empty() {
        bail!(Argument, "training set is empty");
    }
    let norm = NormParams::fit(train)?;
    let pairs = train
        .iter()
        .map(|s| (norm.laser.apply_all(&s.laser), norm.hxr.apply_all(&s.hxr)))
        .collect();
    Ok((norm, pairs))
}

pub fn train_esn(train: &ShotSet, config: &EsnConfig) -> Result<ClassicalModel> {
    let (norm, pairs) = normalized_pairs(train)?;
    let refs: Vec<(&[f64], &[f64])> = pairs.iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
    let mut f = EsnForecaster::new(config.clone())?;
    f.fit(&refs)?;
    Ok(ClassicalModel {
        norm,
        forecaster: Forecaster::Esn(f),
    })
}

pub fn train_ngrc(train: &ShotSet, config: &NgrcConfig) -> Result<ClassicalModel> {
    let (norm, pairs) = normalized_pairs(train)?;
    let refs: Vec<(&[f64], &[f64])> = pairs.iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
    let mut f = NgrcForecaster::new(config.clone())?;
    f.fit(&refs)?;
    Ok(ClassicalModel {
        norm,
        forecaster: Forecaster::Ngrc(f),
    })
}

/// Any trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase")]
#[allow(clippy::large_enum_variant)]
pub enum Model {
    Classical(ClassicalModel),
    Llm(LlmModel),
}

impl Model {
    pub fn kind(&self) -> ReservoirKind {
        match self {
            Model::Classical(m) => m.kind(),
            Model::Llm(_) => ReservoirKind::Llm,
        }
    }

    pub fn norm(&self) -> &NormParams {
        match self {
            Model::Classical(m) => &m.norm,
            Model::Llm(m) => &m.norm,
        }
    }

    /// Raw prediction; the service is only consulted by the language-model
    /// pipeline.
    pub fn forecast(&self, shot: &Shot, service: Option<&dyn ReservoirService>) -> Result<Vec<f64>> {
        match self {
            Model::Classical(m) => m.forecast(&shot.laser),
            Model::Llm(m) => m.forecast(require(service)?, shot),
        }
    }

    pub fn forecast_with_confidence(
        &self,
        shot: &Shot,
        service: Option<&dyn ReservoirService>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            Model::Classical(m) => Err(Error::Argument(format!(
                "confidence scanning needs the llm reservoir, this model uses {}",
                m.kind()
            ))),
            Model::Llm(m) => m.forecast_with_confidence(require(service)?, shot),
        }
    }
}

fn require(service: Option<&dyn ReservoirService>) -> Result<&dyn ReservoirService> {
    service.ok_or_else(|| Error::Argument("the llm reservoir needs a service endpoint".into()))
}

/// Per-step mean of the raw training HXR.
pub fn train_mean_baseline(train: &ShotSet) -> Result<Vec<f64>> {
    let Some(first) = train.shots.first() else {
        bail!(Argument, "training set is empty");
    };
    let n = first.hxr.len();
    if train.iter().any(|s| s.hxr.len() != n) {
        bail!(Argument, "training shots differ in length");
    }
    let mut mean = alloc::vec![0.0; n];
    for s in train.iter() {
        for (m, v) in mean.iter_mut().zip(&s.hxr) {
            *m += v;
        }
    }
    let count = train.len() as f64;
    mean.iter_mut().for_each(|m| *m /= count);
    Ok(mean)
}

/// The laser profile itself, mapped through the normalizations: the
/// normalized laser is read as a normalized HXR series.
pub fn copy_laser_baseline(norm: &NormParams, laser: &[f64]) -> Vec<f64> {
    norm.hxr.invert_all(&norm.laser.apply_all(laser))
}
