use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use nsotree_core::train::{depth_sweep, lambda_sweep, SweepRow};
use nsotree_core::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::data::{self, path_arg, ModelArgs};
use crate::manifest::{output_dir, Output, RunManifest};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepOver {
    Depth,
    Lambda,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SweepArgs {
    /// Hyperparameter to vary
    #[arg(long, value_enum)]
    pub over: Option<SweepOver>,
    /// Values: a comma list (`0,1e-6,1e-4`) or an inclusive range `start:end:step`
    #[arg(long)]
    pub values: Option<String>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
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

/// Parses `a,b,c` or the inclusive range `start:end:step`.
pub fn parse_values(text: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(':').collect();
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number"));
    let values = match parts.as_slice() {
        [start, end, step] => {
            let (start, end, step) = (num(start)?, num(end)?, num(step)?);
            if !(step > 0.0) || end < start {
                return Err("range needs start <= end and a positive step".into());
            }
            let count = ((end - start) / step + 1e-9).floor() as usize + 1;
            (0..count).map(|i| start + step * i as f64).collect()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err("expected a comma list or start:end:step".into()),
    };
    if values.is_empty() {
        return Err("no values given".into());
    }
    Ok(values)
}

pub fn run(args: SweepArgs) -> Result<(), CliError> {
    let over = args
        .over
        .ok_or_else(|| CliError::Usage("missing required --over (flag or config key)".into()))?;
    let text = args
        .values
        .clone()
        .ok_or_else(|| CliError::Usage("missing required --values (flag or config key)".into()))?;
    let values = parse_values(&text).map_err(|e| CliError::Usage(format!("--values: {e}")))?;
    if over == SweepOver::Depth && values.iter().any(|v| v.fract() != 0.0 || *v < 0.0) {
        return Err(CliError::Usage("--values for a depth sweep must be nonnegative integers".into()));
    }
    if over == SweepOver::Lambda && values.iter().any(|v| *v < 0.0) {
        return Err(CliError::Usage("--values for a lambda sweep must be nonnegative".into()));
    }
    let paths = [
        path_arg(&args.train, "train")?,
        path_arg(&args.valid, "valid")?,
        path_arg(&args.test, "test")?,
    ];
    let config = args.model.train_config()?;
    let mut out = Output::create(output_dir(args.out.clone(), "sweep"))?;
    execute(&args, over, &values, &paths, &config, &mut out).map_err(CliError::Runtime)
}

fn execute(
    args: &SweepArgs,
    over: SweepOver,
    values: &[f64],
    paths: &[PathBuf; 3],
    config: &TrainConfig,
    out: &mut Output,
) -> Result<()> {
    let schema = args.schema.as_deref();
    let (train, levels) = data::load(&paths[0], schema, None)?;
    let (valid, _) = data::load(&paths[1], schema, Some(&levels))?;
    let (test, _) = data::load(&paths[2], schema, Some(&levels))?;
    let rows = match over {
        SweepOver::Depth => {
            let depths: Vec<usize> = values.iter().map(|&v| v as usize).collect();
            depth_sweep(&train, &valid, &test, &depths, config)?
        }
        SweepOver::Lambda => lambda_sweep(&train, &valid, &test, values, config)?,
    };
    out.text("sweep.csv", &sweep_csv(&rows))?;

    let mut manifest = RunManifest::new(
        "sweep",
        &serde_json::json!({"flags": args, "resolved": config, "values": values}),
        config.seed,
    )?;
    for (role, path) in ["train", "valid", "test"].iter().zip(paths) {
        manifest.input(role, path)?;
    }
    if let Some(s) = schema {
        manifest.input("schema", s)?;
    }
    manifest.write(out)?;
    println!("swept {} values -> {}", rows.len(), out.dir.display());
    Ok(())
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("depth,lambda,sparsity,valid_cindex,test_cindex,best_epoch\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.depth, r.lambda, r.sparsity, r.valid_cindex, r.test_cindex, r.best_epoch
        );
    }
    s
}
