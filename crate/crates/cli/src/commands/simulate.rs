use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use nsotree_core::ingest::write_csv;
use nsotree_core::sim::{simulate, RiskKind, SimConfig};
use serde::{Deserialize, Serialize};

use crate::manifest::{output_dir, Output, RunManifest};
use crate::CliError;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulateArgs {
    /// True risk: linear or gaussian
    #[arg(long)]
    pub risk: Option<RiskKind>,
    /// Training rows
    #[arg(long)]
    pub n: Option<usize>,
    /// Validation rows
    #[arg(long)]
    pub n_valid: Option<usize>,
    /// Test rows
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Number of covariates
    #[arg(long)]
    pub dim: Option<usize>,
    /// Target censored fraction in [0, 1)
    #[arg(long)]
    pub censor_frac: Option<f64>,
    /// Peak hazard ratio of the gaussian risk
    #[arg(long)]
    pub lambda_max: Option<f64>,
    /// Width of the gaussian risk
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: SimulateArgs) -> Result<(), CliError> {
    let risk = args.risk.unwrap_or(RiskKind::Linear);
    let base = SimConfig::new(risk, args.seed.unwrap_or(0));
    let cfg = SimConfig {
        n_train: args.n.unwrap_or(base.n_train),
        n_valid: args.n_valid.unwrap_or(base.n_valid),
        n_test: args.n_test.unwrap_or(base.n_test),
        dim: args.dim.unwrap_or(base.dim),
        censor_fraction: args.censor_frac.unwrap_or(base.censor_fraction),
        lambda_max: args.lambda_max.unwrap_or(base.lambda_max),
        radius: args.radius.unwrap_or(base.radius),
        ..base
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut out = Output::create(output_dir(args.out.clone(), "simulate"))?;
    write(&cfg, &mut out).map_err(CliError::Runtime)
}

fn write(cfg: &SimConfig, out: &mut Output) -> Result<()> {
    let sim = simulate(cfg)?;
    for (name, split) in [("train.csv", &sim.train), ("valid.csv", &sim.valid), ("test.csv", &sim.test)] {
        write_csv(&split.data, &out.record(name))?;
    }
    let sidecar = sim.sidecar();
    out.json("truth.json", &sidecar)?;
    let manifest = RunManifest::new("simulate", cfg, cfg.seed)?;
    manifest.write(out)?;
    println!(
        "simulated {} risk: {}/{}/{} rows, censored fraction {:.4}/{:.4}/{:.4} -> {}",
        serde_json::to_value(cfg.risk)?.as_str().unwrap_or("?"),
        cfg.n_train,
        cfg.n_valid,
        cfg.n_test,
        sidecar.observed_censored_fraction[0],
        sidecar.observed_censored_fraction[1],
        sidecar.observed_censored_fraction[2],
        out.dir.display()
    );
    Ok(())
}
