//! Mini-batch proximal gradient training of Cox risk models, plus the
//! experiment drivers built on it: random hyperparameter search, depth and
//! sparsity sweeps, and k-fold cross-validation.
//!
//! Each optimizer step runs a Softplus forward pass over the batch, the
//! in-batch Cox loss (mean over the batch's events), backpropagation, a
//! gradient step, and finally soft-thresholding of the split weights at
//! `learning_rate * lambda`, the proximal map of the scaled L1 penalty.
//! Validation C-index is computed after every epoch with the configured
//! inference activation and the best epoch's parameters are kept.

use std::time::Instant;

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cox::{cox_nll_batch, CoxBatch};
use crate::error::{Error, Result};
use crate::ingest::standardize;
use crate::metrics::concordance_index;
use crate::net::{Activation, NsoTreeParams};
use crate::survival::{Standardization, SurvivalDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "nsotree")]
    NsoTree,
    #[serde(rename = "linear")]
    LinearCph,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::NsoTree => "nsotree",
            ModelKind::LinearCph => "linear",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nsotree" => Ok(ModelKind::NsoTree),
            "linear" => Ok(ModelKind::LinearCph),
            other => Err(Error::InvalidInput(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(Error::InvalidInput(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub depth: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub lambda: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Activation used for the training forward pass.
    pub activation: Activation,
    /// Activation used to score the validation set.
    pub eval_activation: Activation,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::NsoTree,
            depth: 30,
            hidden: 1,
            learning_rate: 0.1,
            batch_size: 1024,
            lambda: 1e-4,
            max_epochs: 2000,
            patience: 300,
            seed: 0,
            activation: Activation::Softplus,
            eval_activation: Activation::Relu,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn linear() -> Self {
        Self {
            model: ModelKind::LinearCph,
            depth: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate must be > 0, got {}", self.learning_rate));
        }
        if self.batch_size < 2 {
            return bad(format!("batch size must be >= 2, got {}", self.batch_size));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.patience < 1 {
            return bad("patience must be >= 1".into());
        }
        if self.model == ModelKind::NsoTree && (self.depth == 0 || self.hidden == 0) {
            return bad(format!("tree depth and width must be >= 1, got L={} d_h={}", self.depth, self.hidden));
        }
        Ok(())
    }

    pub fn init_params(&self, input_dim: usize) -> Result<NsoTreeParams> {
        match self.model {
            ModelKind::NsoTree => NsoTreeParams::init(input_dim, self.depth, self.hidden, self.seed),
            ModelKind::LinearCph => NsoTreeParams::linear(input_dim, self.seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_cindex: f64,
    pub sparsity: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept; 0 means the initialization.
    pub best_epoch: usize,
    pub best_valid_cindex: f64,
    pub params: NsoTreeParams,
    pub skipped_batches: usize,
    pub wall_seconds: f64,
}

/// Serializable part of a report: everything except wall-clock time, so
/// reruns produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub version: u32,
    pub config: TrainConfig,
    pub best_epoch: usize,
    pub best_valid_cindex: f64,
    pub final_sparsity: f64,
    pub skipped_batches: usize,
    pub loss_reduction: String,
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn record(&self) -> ReportRecord {
        ReportRecord {
            version: 1,
            config: self.config.clone(),
            best_epoch: self.best_epoch,
            best_valid_cindex: self.best_valid_cindex,
            final_sparsity: self.params.sparsity(),
            skipped_batches: self.skipped_batches,
            loss_reduction: "sum over in-batch events divided by the batch event count".into(),
            epochs: self.epochs.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.record())?)
    }
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for ((w, g), (m, v)) in theta.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Validation C-index of `params` on `data`.
pub fn evaluate_cindex(params: &NsoTreeParams, data: &SurvivalDataset, mode: Activation) -> Result<f64> {
    let scores = params.scores(data.covariates(), mode)?;
    concordance_index(&scores, data.times(), data.events())
}

/// Mean in-batch Cox loss over the full dataset treated as one batch.
pub fn full_batch_loss(params: &NsoTreeParams, data: &SurvivalDataset, mode: Activation) -> Result<f64> {
    let scores = params.scores(data.covariates(), mode)?;
    let r = cox_nll_batch(&CoxBatch::new(&scores, data.times(), data.events())?)?;
    Ok(r.loss / r.n_events as f64)
}

/// Scratch buffers reused across batches.
struct BatchWork {
    features: Vec<f64>,
    pre: Vec<f64>,
    scores: Vec<f64>,
    times: Vec<f64>,
    events: Vec<bool>,
    grad: Vec<f64>,
    feature_grad: Vec<f64>,
}

pub fn train(train_set: &SurvivalDataset, valid: &SurvivalDataset, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    train_set.require_events("training set")?;
    if valid.is_empty() {
        return Err(Error::InvalidInput("validation set is empty".into()));
    }
    if valid.dim() != train_set.dim() {
        return Err(Error::DimensionMismatch {
            expected: train_set.dim(),
            got: valid.dim(),
        });
    }
    let start = Instant::now();
    let mut params = config.init_params(train_set.dim())?;
    let n_params = params.theta().len();
    let feat_len = params.feature_len();
    let units = params.num_units();

    let mut best_params = params.clone();
    let mut best_epoch = 0;
    let mut best_cindex = if config.max_epochs == 0 {
        evaluate_cindex(&params, valid, config.eval_activation).unwrap_or(f64::NAN)
    } else {
        f64::NEG_INFINITY
    };
    let mut epochs = Vec::new();
    let mut skipped = 0;
    let mut since_best = 0;
    let mut adam = (config.optimizer == Optimizer::Adam).then(|| AdamState::new(n_params));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_0F5A_11B4_7C4E);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut work = BatchWork {
        features: Vec::new(),
        pre: Vec::new(),
        scores: Vec::new(),
        times: Vec::new(),
        events: Vec::new(),
        grad: vec![0.0; n_params],
        feature_grad: Vec::with_capacity(feat_len),
    };
    let mut f = Vec::with_capacity(feat_len);
    let mut z = Vec::with_capacity(units);

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            work.features.clear();
            work.pre.clear();
            work.scores.clear();
            work.times.clear();
            work.events.clear();
            for &i in batch {
                let s = params.forward_into(train_set.row(i), config.activation, &mut f, &mut z);
                work.features.extend_from_slice(&f);
                work.pre.extend_from_slice(&z);
                work.scores.push(s);
                work.times.push(train_set.times()[i]);
                work.events.push(train_set.events()[i]);
            }
            if !work.events.iter().any(|&e| e) {
                warn!("epoch {epoch}, batch {b}: no events, skipping");
                skipped += 1;
                continue;
            }
            let cox = cox_nll_batch(&CoxBatch::new(&work.scores, &work.times, &work.events)?)?;
            let scale = 1.0 / cox.n_events as f64;
            let loss = cox.loss * scale;
            if !loss.is_finite() || cox.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            work.grad.iter_mut().for_each(|g| *g = 0.0);
            for (k, g) in cox.grad.iter().enumerate() {
                params.accumulate_gradient(
                    &work.features[k * feat_len..(k + 1) * feat_len],
                    &work.pre[k * units..(k + 1) * units],
                    g * scale,
                    config.activation,
                    &mut work.grad,
                    &mut work.feature_grad,
                );
            }
            match adam.as_mut() {
                Some(state) => state.step(params.theta_mut(), &work.grad, config.learning_rate),
                None => {
                    for (w, g) in params.theta_mut().iter_mut().zip(&work.grad) {
                        *w -= config.learning_rate * g;
                    }
                }
            }
            if params.theta().iter().any(|w| !w.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            params.prox_in_place(config.learning_rate * config.lambda)?;
            loss_sum += loss;
            batches += 1;
        }

        let cindex = evaluate_cindex(&params, valid, config.eval_activation)?;
        let record = EpochRecord {
            epoch,
            train_loss: if batches > 0 { loss_sum / batches as f64 } else { f64::NAN },
            valid_cindex: cindex,
            sparsity: params.sparsity(),
        };
        debug!("epoch {epoch}: loss {:.6}, valid C {:.4}, sparsity {:.4}", record.train_loss, cindex, record.sparsity);
        epochs.push(record);
        if cindex > best_cindex {
            best_cindex = cindex;
            best_epoch = epoch;
            best_params = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    Ok(TrainReport {
        config: config.clone(),
        epochs,
        best_epoch,
        best_valid_cindex: best_cindex,
        params: best_params,
        skipped_batches: skipped,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// One dimension of a search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Range<T> {
    Fixed(T),
    /// Inclusive bounds.
    Between(T, T),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub depth: Range<usize>,
    pub hidden: Range<usize>,
    /// Sampled log-uniformly.
    pub learning_rate: Range<f64>,
    /// Sampled log-uniformly; `Fixed(0.0)` disables the prox step.
    pub lambda: Range<f64>,
    pub batch_size: Vec<usize>,
    /// Remaining fields are copied from here.
    pub base: TrainConfig,
}

impl SearchSpace {
    pub fn fixed(config: &TrainConfig) -> Self {
        Self {
            depth: Range::Fixed(config.depth),
            hidden: Range::Fixed(config.hidden),
            learning_rate: Range::Fixed(config.learning_rate),
            lambda: Range::Fixed(config.lambda),
            batch_size: vec![config.batch_size],
            base: config.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        let empty = |what: &str| Err(Error::InvalidConfig(format!("search space for {what} is empty")));
        if let Range::Between(lo, hi) = self.depth {
            if lo > hi {
                return empty("depth");
            }
        }
        if let Range::Between(lo, hi) = self.hidden {
            if lo > hi {
                return empty("hidden");
            }
        }
        for (name, r) in [("learning_rate", &self.learning_rate), ("lambda", &self.lambda)] {
            if let Range::Between(lo, hi) = *r {
                if !(lo > 0.0 && lo <= hi) {
                    return empty(name);
                }
            }
        }
        if self.batch_size.is_empty() {
            return empty("batch_size");
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> TrainConfig {
        let int = |r: &Range<usize>, rng: &mut ChaCha8Rng| match *r {
            Range::Fixed(v) => v,
            Range::Between(lo, hi) => rng.gen_range(lo..=hi),
        };
        let log = |r: &Range<f64>, rng: &mut ChaCha8Rng| match *r {
            Range::Fixed(v) => v,
            Range::Between(lo, hi) if lo == hi => lo,
            Range::Between(lo, hi) => rng.gen_range(lo.ln()..=hi.ln()).exp(),
        };
        TrainConfig {
            depth: int(&self.depth, rng),
            hidden: int(&self.hidden, rng),
            learning_rate: log(&self.learning_rate, rng),
            lambda: log(&self.lambda, rng),
            batch_size: *self.batch_size.choose(rng).unwrap(),
            ..self.base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub config: TrainConfig,
    pub valid_cindex: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: TrainConfig,
    pub best_index: usize,
    pub trials: Vec<Trial>,
}

/// Random search maximizing validation C-index. Trials run in parallel but
/// configs are drawn up front, so results depend only on `seed`.
pub fn random_search(
    train_set: &SurvivalDataset,
    valid: &SurvivalDataset,
    space: &SearchSpace,
    n_trials: usize,
    seed: u64,
) -> Result<SearchResult> {
    space.validate()?;
    if n_trials == 0 {
        return Err(Error::InvalidConfig("random search needs n_trials >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let configs: Vec<TrainConfig> = (0..n_trials).map(|_| space.sample(&mut rng)).collect();
    let trials = configs
        .into_par_iter()
        .map(|config| {
            let report = train(train_set, valid, &config)?;
            Ok(Trial {
                config,
                valid_cindex: report.best_valid_cindex,
                best_epoch: report.best_epoch,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best_index = trials
        .iter()
        .enumerate()
        .fold(0, |best, (i, t)| if t.valid_cindex > trials[best].valid_cindex { i } else { best });
    Ok(SearchResult {
        best: trials[best_index].config.clone(),
        best_index,
        trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub depth: usize,
    pub lambda: f64,
    pub sparsity: f64,
    pub valid_cindex: f64,
    pub test_cindex: f64,
    pub best_epoch: usize,
}

fn sweep(
    train_set: &SurvivalDataset,
    valid: &SurvivalDataset,
    test: &SurvivalDataset,
    configs: Vec<TrainConfig>,
) -> Result<Vec<SweepRow>> {
    if configs.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one value".into()));
    }
    configs
        .into_par_iter()
        .map(|config| {
            let report = train(train_set, valid, &config)?;
            Ok(SweepRow {
                depth: config.depth,
                lambda: config.lambda,
                sparsity: report.params.sparsity(),
                valid_cindex: report.best_valid_cindex,
                test_cindex: evaluate_cindex(&report.params, test, config.eval_activation)?,
                best_epoch: report.best_epoch,
            })
        })
        .collect()
}

/// One training run per depth, all sharing the seed in `config`.
pub fn depth_sweep(
    train_set: &SurvivalDataset,
    valid: &SurvivalDataset,
    test: &SurvivalDataset,
    depths: &[usize],
    config: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    let configs = depths
        .iter()
        .map(|&depth| TrainConfig {
            depth,
            ..config.clone()
        })
        .collect();
    sweep(train_set, valid, test, configs)
}

/// One training run per prox strength, all sharing the seed in `config`.
pub fn lambda_sweep(
    train_set: &SurvivalDataset,
    valid: &SurvivalDataset,
    test: &SurvivalDataset,
    lambdas: &[f64],
    config: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    let configs = lambdas
        .iter()
        .map(|&lambda| TrainConfig {
            lambda,
            ..config.clone()
        })
        .collect();
    sweep(train_set, valid, test, configs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub cindex: f64,
    pub best_epoch: usize,
    pub standardization: Standardization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: Vec<FoldResult>,
    pub mean: f64,
    pub std: f64,
}

/// Share of each training fold held out for early stopping.
pub const EARLY_STOP_FRACTION: f64 = 0.2;

/// Deterministic shuffled assignment of `n` records to `k` folds.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; n];
    for (pos, &i) in idx.iter().enumerate() {
        folds[i] = pos * k / n;
    }
    folds
}

/// k-fold cross-validation with shuffled fold assignment.
pub fn cross_validate(dataset: &SurvivalDataset, k: usize, config: &TrainConfig) -> Result<CrossValidation> {
    if k < 2 || k > dataset.len() {
        return Err(Error::InvalidConfig(format!("need 2 <= k <= n, got k={k}")));
    }
    let folds = fold_assignment(dataset.len(), k, config.seed);
    cross_validate_with_folds(dataset, &folds, config)
}

/// Cross-validation over an explicit fold assignment. Standardization is
/// fitted on the training folds only; a fixed share of the training folds
/// (drawn with the config seed) drives early stopping.
pub fn cross_validate_with_folds(dataset: &SurvivalDataset, folds: &[usize], config: &TrainConfig) -> Result<CrossValidation> {
    config.validate()?;
    if folds.len() != dataset.len() {
        return Err(Error::DimensionMismatch {
            expected: dataset.len(),
            got: folds.len(),
        });
    }
    let k = folds.iter().copied().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(Error::InvalidConfig("cross-validation needs >= 2 folds".into()));
    }
    let mut parts = Vec::with_capacity(k);
    for fold in 0..k {
        let held: Vec<usize> = (0..dataset.len()).filter(|&i| folds[i] == fold).collect();
        let rest: Vec<usize> = (0..dataset.len()).filter(|&i| folds[i] != fold).collect();
        let test = dataset.subset(&held);
        if test.n_events() == 0 {
            return Err(Error::NoEvents(format!("fold {fold}")));
        }
        parts.push((fold, dataset.subset(&rest), test));
    }

    let results = parts
        .into_par_iter()
        .map(|(fold, train_part, test)| {
            let mut idx: Vec<usize> = (0..train_part.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed ^ 0xF01D));
            let n_stop = ((train_part.len() as f64) * EARLY_STOP_FRACTION).round() as usize;
            let n_stop = n_stop.clamp(1, train_part.len() - 1);
            let stop_part = train_part.subset(&idx[..n_stop]);
            let fit_part = train_part.subset(&idx[n_stop..]);
            let std = standardize(&fit_part, &[stop_part, test])?;
            let report = train(&std.train, &std.others[0], config)?;
            Ok(FoldResult {
                fold,
                train_size: std.train.len(),
                test_size: std.others[1].len(),
                cindex: evaluate_cindex(&report.params, &std.others[1], config.eval_activation)?,
                best_epoch: report.best_epoch,
                standardization: std.stats,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = results.len() as f64;
    let mean = results.iter().map(|r| r.cindex).sum::<f64>() / n;
    let var = results.iter().map(|r| (r.cindex - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(CrossValidation {
        folds: results,
        mean,
        std: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, seed: u64) -> SurvivalDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut times = Vec::new();
        let mut events = Vec::new();
        for _ in 0..n {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let rate = (x[0] + 2.0 * x[1]).exp();
            times.push(-(1.0 - rng.gen::<f64>()).ln() / rate);
            events.push(rng.gen::<f64>() < 0.7);
            rows.push(x);
        }
        SurvivalDataset::new(rows, times, events).unwrap()
    }

    fn small(model: ModelKind) -> TrainConfig {
        TrainConfig {
            model,
            depth: if model == ModelKind::LinearCph { 0 } else { 3 },
            batch_size: 64,
            max_epochs: 20,
            patience: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            TrainConfig { learning_rate: 0.0, ..ok.clone() },
            TrainConfig { batch_size: 1, ..ok.clone() },
            TrainConfig { lambda: -1.0, ..ok.clone() },
            TrainConfig { patience: 0, ..ok.clone() },
            TrainConfig { depth: 0, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        }
        assert!(TrainConfig::linear().validate().is_ok());
    }

    #[test]
    fn training_is_deterministic() {
        let tr = toy(300, 1);
        let va = toy(100, 2);
        let cfg = small(ModelKind::NsoTree);
        let a = train(&tr, &va, &cfg).unwrap();
        let b = train(&tr, &va, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.record(), b.record());
    }

    #[test]
    fn best_epoch_has_the_best_validation_score() {
        let tr = toy(300, 3);
        let va = toy(100, 4);
        let r = train(&tr, &va, &small(ModelKind::NsoTree)).unwrap();
        let best = r.epochs.iter().map(|e| e.valid_cindex).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.best_valid_cindex, best);
        assert!(r.best_epoch >= 1 && r.best_epoch <= r.epochs.len());
        let again = evaluate_cindex(&r.params, &va, Activation::Relu).unwrap();
        assert_eq!(again, best);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let tr = toy(50, 5);
        let cfg = TrainConfig {
            max_epochs: 0,
            ..small(ModelKind::NsoTree)
        };
        let r = train(&tr, &tr, &cfg).unwrap();
        assert_eq!(r.params, cfg.init_params(3).unwrap());
        assert!(r.epochs.is_empty());
        assert_eq!(r.best_epoch, 0);
    }

    #[test]
    fn huge_lambda_zeroes_every_split_weight() {
        let tr = toy(200, 6);
        let cfg = TrainConfig {
            lambda: 10.0,
            max_epochs: 1,
            ..small(ModelKind::NsoTree)
        };
        let r = train(&tr, &tr, &cfg).unwrap();
        assert_eq!(r.epochs[0].sparsity, 1.0);
    }

    #[test]
    fn rejects_event_free_training_data() {
        let rows = vec![vec![0.0, 1.0]; 5];
        let d = SurvivalDataset::new(rows, vec![1.0; 5], vec![false; 5]).unwrap();
        assert!(matches!(train(&d, &d, &TrainConfig::default()), Err(Error::NoEvents(_))));
    }

    #[test]
    fn event_free_batches_are_skipped() {
        let mut rows = Vec::new();
        for i in 0..8 {
            rows.push(vec![i as f64 * 0.1, 1.0 - i as f64 * 0.1]);
        }
        let events = vec![true, false, false, false, false, false, false, false];
        let times = (1..=8).map(f64::from).collect();
        let d = SurvivalDataset::new(rows, times, events).unwrap();
        let cfg = TrainConfig {
            batch_size: 2,
            max_epochs: 1,
            depth: 1,
            ..TrainConfig::default()
        };
        let r = train(&d, &d, &cfg).unwrap();
        assert_eq!(r.skipped_batches, 3);
    }

    #[test]
    fn point_search_space_returns_the_point() {
        let tr = toy(200, 7);
        let va = toy(80, 8);
        let cfg = small(ModelKind::LinearCph);
        let res = random_search(&tr, &va, &SearchSpace::fixed(&cfg), 2, 0).unwrap();
        assert_eq!(res.best, cfg);
        assert_eq!(res.trials.len(), 2);

        let mut space = SearchSpace::fixed(&cfg);
        space.batch_size.clear();
        assert!(random_search(&tr, &va, &space, 1, 0).is_err());
        let mut space = SearchSpace::fixed(&cfg);
        space.learning_rate = Range::Between(0.1, 0.01);
        assert!(random_search(&tr, &va, &space, 1, 0).is_err());
    }

    #[test]
    fn single_trial_returns_its_config() {
        let tr = toy(200, 9);
        let va = toy(80, 10);
        let mut space = SearchSpace::fixed(&small(ModelKind::NsoTree));
        space.learning_rate = Range::Between(1e-3, 1e-1);
        space.depth = Range::Between(1, 4);
        let res = random_search(&tr, &va, &space, 1, 3).unwrap();
        assert_eq!(res.trials.len(), 1);
        assert_eq!(res.best, res.trials[0].config);
        let lr = res.best.learning_rate;
        assert!((1e-3..=1e-1).contains(&lr));
    }

    #[test]
    fn fold_assignment_is_balanced_and_deterministic() {
        let f = fold_assignment(23, 5, 1);
        assert_eq!(f, fold_assignment(23, 5, 1));
        for k in 0..5 {
            let c = f.iter().filter(|&&v| v == k).count();
            assert!(c == 4 || c == 5);
        }
    }

    #[test]
    fn symmetric_folds_give_equal_scores() {
        let half = toy(150, 11);
        let idx: Vec<usize> = (0..half.len()).chain(0..half.len()).collect();
        let doubled = half.subset(&idx);
        let folds: Vec<usize> = (0..doubled.len()).map(|i| usize::from(i >= half.len())).collect();
        let cv = cross_validate_with_folds(&doubled, &folds, &small(ModelKind::LinearCph)).unwrap();
        assert_eq!(cv.folds[0].cindex, cv.folds[1].cindex);
        assert_eq!(cv.std, 0.0);
    }

    #[test]
    fn fold_standardization_uses_training_folds_only() {
        // asymmetric: the first half is shifted
        let mut rows = Vec::new();
        let base = toy(200, 12);
        for (i, r) in base.rows().enumerate() {
            let shift = if i < 100 { 5.0 } else { 0.0 };
            rows.push(r.iter().map(|v| v + shift).collect());
        }
        let d = SurvivalDataset::new(rows, base.times().to_vec(), base.events().to_vec()).unwrap();
        let folds: Vec<usize> = (0..200).map(|i| usize::from(i >= 100)).collect();
        let cv = cross_validate_with_folds(&d, &folds, &small(ModelKind::LinearCph)).unwrap();
        let m0 = cv.folds[0].standardization.mean[0];
        let m1 = cv.folds[1].standardization.mean[0];
        assert!((m0 - m1).abs() > 4.0, "fold means {m0} and {m1}");
        assert!(cv.std >= 0.0);
    }
}
