use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use nsotree_core::ingest::standardize;
use nsotree_core::train::{train, TrainReport};
use nsotree_core::{Activation, Checkpoint};
use serde::{Deserialize, Serialize};

use crate::data::{self, path_arg, ModelArgs};
use crate::manifest::{output_dir, Output, RunManifest};
use crate::CliError;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    /// Training CSV
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Validation CSV (early stopping)
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Column-role schema (TOML); default: `time`, `event`, numeric rest
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Standardize features with training-set statistics
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub standardize: Option<bool>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let train_path = path_arg(&args.train, "train")?;
    let valid_path = path_arg(&args.valid, "valid")?;
    let config = args.model.train_config()?;
    let mut out = Output::create(output_dir(args.out.clone(), "train"))?;
    execute(&args, train_path, valid_path, config, &mut out).map_err(CliError::Runtime)
}

fn execute(
    args: &TrainArgs,
    train_path: PathBuf,
    valid_path: PathBuf,
    config: nsotree_core::TrainConfig,
    out: &mut Output,
) -> Result<()> {
    let (train_raw, levels) = data::load(&train_path, args.schema.as_deref(), None)?;
    let (valid_raw, _) = data::load(&valid_path, args.schema.as_deref(), Some(&levels))?;
    let (train_set, valid_set, stats) = if args.standardize.unwrap_or(false) {
        let s = standardize(&train_raw, &[valid_raw])?;
        let [valid] = <[_; 1]>::try_from(s.others).expect("one extra split");
        (s.train, valid, Some(s.stats))
    } else {
        (train_raw, valid_raw, None)
    };

    let report = train(&train_set, &valid_set, &config)?;
    let checkpoint = Checkpoint {
        model: config.model,
        activation: Activation::Softplus,
        params: report.params.clone(),
        feature_names: train_set.feature_names().to_vec(),
        standardization: stats,
        train_data: Some(train_path.display().to_string()),
        schema: args.schema.as_ref().map(|p| p.display().to_string()),
    };
    checkpoint.save(&out.record("model.ckpt"))?;
    out.text("report.json", &(report.to_json()? + "\n"))?;
    out.text("epochs.csv", &epochs_csv(&report))?;

    let mut manifest = RunManifest::new("train", &serde_json::json!({"flags": args, "resolved": config}), config.seed)?;
    manifest.input("train", &train_path)?;
    manifest.input("valid", &valid_path)?;
    if let Some(s) = &args.schema {
        manifest.input("schema", s)?;
    }
    manifest.write(out)?;
    println!(
        "trained {} (L={}, d_h={}): best epoch {} of {}, validation C-index {:.4}, sparsity {:.4} -> {}",
        config.model.name(),
        config.depth,
        config.hidden,
        report.best_epoch,
        report.epochs.len(),
        report.best_valid_cindex,
        report.params.sparsity(),
        out.dir.display()
    );
    Ok(())
}

fn epochs_csv(report: &TrainReport) -> String {
    let mut s = String::from("epoch,train_loss,valid_cindex,sparsity\n");
    for e in &report.epochs {
        let _ = writeln!(s, "{},{},{},{}", e.epoch, e.train_loss, e.valid_cindex, e.sparsity);
    }
    s
}
