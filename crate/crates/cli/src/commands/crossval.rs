use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use nsotree_core::train::{cross_validate, CrossValidation};
use nsotree_core::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::data::{self, path_arg, ModelArgs};
use crate::manifest::{output_dir, Output, RunManifest};
use crate::CliError;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CrossvalArgs {
    /// Full dataset CSV
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of folds
    #[arg(long)]
    pub k: Option<usize>,
    /// Column-role schema (TOML)
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: CrossvalArgs) -> Result<(), CliError> {
    let data_path = path_arg(&args.data, "data")?;
    let k = args.k.unwrap_or(5);
    if k < 2 {
        return Err(CliError::Usage("--k must be at least 2".into()));
    }
    let config = args.model.train_config()?;
    let mut out = Output::create(output_dir(args.out.clone(), "crossval"))?;
    execute(&args, &data_path, k, &config, &mut out).map_err(CliError::Runtime)
}

fn execute(args: &CrossvalArgs, data_path: &Path, k: usize, config: &TrainConfig, out: &mut Output) -> Result<()> {
    let (dataset, _) = data::load(data_path, args.schema.as_deref(), None)?;
    let cv = cross_validate(&dataset, k, config)?;
    out.text("folds.csv", &folds_csv(&cv))?;

    let mut manifest = RunManifest::new(
        "crossval",
        &serde_json::json!({"flags": args, "resolved": config, "k": k}),
        config.seed,
    )?;
    manifest.input("data", data_path)?;
    if let Some(s) = &args.schema {
        manifest.input("schema", s)?;
    }
    manifest.write(out)?;
    println!("{k}-fold C-index {:.4} ± {:.4} -> {}", cv.mean, cv.std, out.dir.display());
    Ok(())
}

/// One row per fold, then a `mean` row whose spread column holds the
/// sample standard deviation across folds.
fn folds_csv(cv: &CrossValidation) -> String {
    let mut s = String::from("fold,train_size,test_size,cindex,std,best_epoch\n");
    for f in &cv.folds {
        let _ = writeln!(s, "{},{},{},{},,{}", f.fold, f.train_size, f.test_size, f.cindex, f.best_epoch);
    }
    let _ = writeln!(s, "mean,,,{},{},", cv.mean, cv.std);
    s
}
