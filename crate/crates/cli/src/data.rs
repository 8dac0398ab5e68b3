//! Dataset loading shared by the commands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use nsotree_core::ingest::{
    apply_named_standardization, load_csv_with_levels, read_header, select_features, CategoryLevels, Schema,
};
use nsotree_core::survival::SurvivalDataset;
use nsotree_core::{Activation, Checkpoint, ModelKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::config::required;
use crate::CliError;

fn schema_for(path: &Path, schema: Option<&Path>) -> Result<Schema> {
    Ok(match schema {
        Some(s) => Schema::from_toml_file(s)?,
        None => Schema::numeric_with_defaults(&read_header(path)?)?,
    })
}

/// Loads a CSV. Without a schema file, `time` and `event` are the outcome
/// columns and every other column is a numeric feature.
pub fn load(path: &Path, schema: Option<&Path>, levels: Option<&CategoryLevels>) -> Result<(SurvivalDataset, CategoryLevels)> {
    let schema = schema_for(path, schema)?;
    let loaded = load_csv_with_levels(path, &schema, levels).with_context(|| format!("loading {}", path.display()))?;
    if loaded.dropped_rows > 0 {
        log::warn!("{}: dropped {} rows with missing values", path.display(), loaded.dropped_rows);
    }
    Ok((loaded.dataset, loaded.levels))
}

/// Reference to the data a checkpoint was trained on.
pub struct TrainingReference {
    pub train: SurvivalDataset,
    pub levels: CategoryLevels,
    pub schema: Option<PathBuf>,
}

/// Reloads the training data recorded in a checkpoint (or the override),
/// with the checkpoint's feature selection and scaling applied.
pub fn training_reference(ckpt: &Checkpoint, override_path: Option<&Path>) -> Result<(PathBuf, TrainingReference)> {
    let path = match (override_path, &ckpt.train_data) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => bail!("checkpoint records no training data; pass --train-data to fit the baseline hazard"),
    };
    if !path.exists() {
        bail!("training data {} (needed for the baseline hazard) does not exist", path.display());
    }
    let schema = ckpt.schema.as_ref().map(PathBuf::from);
    let (raw, levels) = load(&path, schema.as_deref(), None)?;
    let train = prepare(ckpt, &raw)?;
    Ok((path, TrainingReference { train, levels, schema }))
}

/// Applies the checkpoint's feature order and standardization.
pub fn prepare(ckpt: &Checkpoint, data: &SurvivalDataset) -> Result<SurvivalDataset> {
    let out = match &ckpt.standardization {
        Some(stats) => apply_named_standardization(data, &ckpt.feature_names, stats)?,
        None => select_features(data, &ckpt.feature_names)?,
    };
    Ok(out)
}

/// Loads an evaluation CSV encoded like the training data.
pub fn load_like_training(path: &Path, ckpt: &Checkpoint, reference: &TrainingReference) -> Result<SurvivalDataset> {
    let (raw, _) = load(path, reference.schema.as_deref(), Some(&reference.levels))?;
    prepare(ckpt, &raw)
}

/// Model and optimizer flags shared by train, sweep and crossval.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelArgs {
    /// Model kind: nsotree or linear
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Number of layers L
    #[arg(long)]
    pub depth: Option<usize>,
    /// Units per layer d_h
    #[arg(long)]
    pub dh: Option<usize>,
    /// Learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Mini-batch size
    #[arg(long)]
    pub batch: Option<usize>,
    /// Prox (L1) strength
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Maximum number of epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Early-stopping patience in epochs
    #[arg(long)]
    pub patience: Option<usize>,
    /// Random seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// sgd or adam
    #[arg(long)]
    pub optimizer: Option<nsotree_core::train::Optimizer>,
    /// Activation for scoring validation data: relu or softplus
    #[arg(long)]
    pub eval_activation: Option<Activation>,
}

impl ModelArgs {
    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let model = self.model.unwrap_or(ModelKind::NsoTree);
        let base = match model {
            ModelKind::NsoTree => TrainConfig::default(),
            ModelKind::LinearCph => TrainConfig::linear(),
        };
        if model == ModelKind::LinearCph && self.depth.is_some_and(|d| d != 0) {
            return Err(CliError::Usage("--depth does not apply to --model linear".into()));
        }
        let cfg = TrainConfig {
            depth: self.depth.unwrap_or(base.depth),
            hidden: self.dh.unwrap_or(base.hidden),
            learning_rate: self.lr.unwrap_or(base.learning_rate),
            batch_size: self.batch.unwrap_or(base.batch_size),
            lambda: self.lambda.unwrap_or(base.lambda),
            max_epochs: self.epochs.unwrap_or(base.max_epochs),
            patience: self.patience.unwrap_or(base.patience),
            seed: self.seed.unwrap_or(base.seed),
            optimizer: self.optimizer.unwrap_or(base.optimizer),
            eval_activation: self.eval_activation.unwrap_or(base.eval_activation),
            ..base
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

pub fn path_arg(value: &Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    required(value.clone(), flag)
}
