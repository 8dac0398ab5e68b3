use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use nsotree_core::metrics::{bootstrap_ci, concordance_index, default_ibs_grid, pearson_correlation, BrierScorer, MetricResult};
use nsotree_core::sim::SimSidecar;
use nsotree_core::survival::{breslow_from, survival_curve, StepFunction};
use nsotree_core::{Activation, Checkpoint};
use serde::{Deserialize, Serialize};

use crate::data::{self, path_arg};
use crate::manifest::{output_dir, Output, RunManifest};
use crate::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthSplit {
    Train,
    Valid,
    #[default]
    Test,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalArgs {
    /// Model checkpoint written by `train`
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Evaluation CSV
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Training CSV for the baseline hazard (default: path recorded in the checkpoint)
    #[arg(long)]
    pub train_data: Option<PathBuf>,
    /// Bootstrap resamples for percentile intervals; 0 reports point estimates only
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Bootstrap seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of Brier time points
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Simulation sidecar (truth.json) with the true risk per row
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Split of the sidecar that matches --test
    #[arg(long, value_enum)]
    pub truth_split: Option<TruthSplit>,
    /// Scoring activation: relu or softplus
    #[arg(long)]
    pub activation: Option<Activation>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Metrics {
    checkpoint: String,
    test: String,
    activation: Activation,
    n: usize,
    n_events: usize,
    bootstrap: usize,
    cindex: Summary,
    ibs: Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pearson_true_risk: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Summary {
    point: f64,
    lower: Option<f64>,
    upper: Option<f64>,
}

impl From<MetricResult> for Summary {
    fn from(m: MetricResult) -> Self {
        Self {
            point: m.point,
            lower: m.interval.map(|i| i.0),
            upper: m.interval.map(|i| i.1),
        }
    }
}

pub fn run(args: EvalArgs) -> Result<(), CliError> {
    let checkpoint = path_arg(&args.checkpoint, "checkpoint")?;
    let test = path_arg(&args.test, "test")?;
    if args.bootstrap == Some(1) {
        return Err(CliError::Usage("--bootstrap needs 0 or at least 2 resamples".into()));
    }
    if args.grid_points.is_some_and(|g| g < 2) {
        return Err(CliError::Usage("--grid-points must be at least 2".into()));
    }
    let mut out = Output::create(output_dir(args.out.clone(), "eval"))?;
    execute(&args, &checkpoint, &test, &mut out).map_err(CliError::Runtime)
}

fn execute(args: &EvalArgs, ckpt_path: &Path, test_path: &Path, out: &mut Output) -> Result<()> {
    let ckpt = Checkpoint::load(ckpt_path)?;
    let (train_path, reference) = data::training_reference(&ckpt, args.train_data.as_deref())?;
    let test = data::load_like_training(test_path, &ckpt, &reference)?;
    let mode = args.activation.unwrap_or(Activation::Relu);
    let resamples = args.bootstrap.unwrap_or(0);
    let seed = args.seed.unwrap_or(0);

    let train_scores = ckpt.params.scores(reference.train.covariates(), mode)?;
    let baseline = breslow_from(reference.train.times(), reference.train.events(), &train_scores)?;
    let scores = ckpt.params.scores(test.covariates(), mode)?;
    let curves: Vec<StepFunction> = scores.iter().map(|&s| survival_curve(&baseline, s)).collect();
    let times = test.times();
    let events = test.events();
    let grid = default_ibs_grid(times, args.grid_points.unwrap_or(100))?;

    let cindex_on = |idx: &[usize]| {
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let t: Vec<f64> = idx.iter().map(|&i| times[i]).collect();
        let e: Vec<bool> = idx.iter().map(|&i| events[i]).collect();
        concordance_index(&s, &t, &e)
    };
    let ibs_on = |idx: &[usize]| {
        let c: Vec<StepFunction> = idx.iter().map(|&i| curves[i].clone()).collect();
        let t: Vec<f64> = idx.iter().map(|&i| times[i]).collect();
        let e: Vec<bool> = idx.iter().map(|&i| events[i]).collect();
        BrierScorer::new(&t, &e)?.integrated(&c, &grid)
    };
    let (cindex, ibs) = if resamples == 0 {
        let all: Vec<usize> = (0..test.len()).collect();
        (MetricResult::point(cindex_on(&all)?), MetricResult::point(ibs_on(&all)?))
    } else {
        (
            bootstrap_ci(cindex_on, test.len(), resamples, seed)?,
            bootstrap_ci(ibs_on, test.len(), resamples, seed)?,
        )
    };

    let scorer = BrierScorer::new(times, events)?;
    let brier = scorer.curve(&curves, &grid)?;
    let mut brier_csv = String::from("time,brier\n");
    for (t, b) in grid.iter().zip(&brier) {
        writeln!(brier_csv, "{t},{b}")?;
    }

    let pearson = match &args.truth {
        Some(path) => Some(pearson_with_truth(path, args.truth_split.unwrap_or_default(), &scores)?),
        None => None,
    };

    let metrics = Metrics {
        checkpoint: ckpt_path.display().to_string(),
        test: test_path.display().to_string(),
        activation: mode,
        n: test.len(),
        n_events: test.n_events(),
        bootstrap: resamples,
        cindex: cindex.into(),
        ibs: ibs.into(),
        pearson_true_risk: pearson,
    };
    out.json("metrics.json", &metrics)?;
    out.text("brier.csv", &brier_csv)?;
    out.text("scores.csv", &scores_csv(&scores))?;

    let mut manifest = RunManifest::new(
        "eval",
        &serde_json::json!({
            "flags": args,
            "resolved": {
                "activation": mode,
                "bootstrap": resamples,
                "seed": seed,
                "grid-points": grid.len(),
                "truth-split": args.truth_split.unwrap_or_default(),
            },
        }),
        seed,
    )?;
    manifest.input("checkpoint", ckpt_path)?;
    manifest.input("test", test_path)?;
    manifest.input("train", &train_path)?;
    if let Some(t) = &args.truth {
        manifest.input("truth", t)?;
    }
    manifest.write(out)?;

    let interval = |s: &Summary| match (s.lower, s.upper) {
        (Some(lo), Some(hi)) => format!(" ({lo:.4}, {hi:.4})"),
        _ => String::new(),
    };
    let mut line = format!(
        "C-index {:.4}{}, IBS {:.4}{}",
        metrics.cindex.point,
        interval(&metrics.cindex),
        metrics.ibs.point,
        interval(&metrics.ibs)
    );
    if let Some(r) = pearson {
        write!(line, ", Pearson r vs true risk {r:.4}")?;
    }
    println!("{line} -> {}", out.dir.display());
    Ok(())
}

fn pearson_with_truth(path: &Path, split: TruthSplit, scores: &[f64]) -> Result<f64> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let sidecar: SimSidecar = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let truth = match split {
        TruthSplit::Train => &sidecar.true_risk_train,
        TruthSplit::Valid => &sidecar.true_risk_valid,
        TruthSplit::Test => &sidecar.true_risk_test,
    };
    if truth.len() != scores.len() {
        bail!(
            "truth sidecar has {} rows for the {:?} split but the evaluation data has {}",
            truth.len(),
            split,
            scores.len()
        );
    }
    Ok(pearson_correlation(scores, truth)?)
}

fn scores_csv(scores: &[f64]) -> String {
    let mut s = String::from("row,score\n");
    for (i, v) in scores.iter().enumerate() {
        let _ = writeln!(s, "{i},{v}");
    }
    s
}
