use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Args, ValueEnum};
use nsotree_core::tree::MAX_EXPANDED_LEVELS;
use nsotree_core::{extract_tree, Checkpoint, ObliqueTree};
use serde::{Deserialize, Serialize};

use crate::data::{self, path_arg};
use crate::manifest::{output_dir, Output, RunManifest};
use crate::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeFormat {
    /// Graphviz DOT
    #[default]
    Dot,
    /// Versioned JSON document that round-trips
    #[value(alias = "structured-text")]
    #[serde(alias = "structured-text")]
    Json,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExtractArgs {
    /// Model checkpoint written by `train`
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Data for per-split log-rank annotation (optional)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Show only the first K layers in the drawing and split table
    #[arg(long)]
    pub layers: Option<usize>,
    /// Tree export format: dot or json
    #[arg(long, value_enum)]
    pub format: Option<TreeFormat>,
    /// Training CSV used to encode categorical columns of --data
    #[arg(long)]
    pub train_data: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: ExtractArgs) -> Result<(), CliError> {
    let checkpoint = path_arg(&args.checkpoint, "checkpoint")?;
    if args.layers == Some(0) {
        return Err(CliError::Usage("--layers must be at least 1".into()));
    }
    let mut out = Output::create(output_dir(args.out.clone(), "extract"))?;
    execute(&args, &checkpoint, &mut out).map_err(CliError::Runtime)
}

fn execute(args: &ExtractArgs, ckpt_path: &Path, out: &mut Output) -> Result<()> {
    let ckpt = Checkpoint::load(ckpt_path)?;
    let mut tree = extract_tree(&ckpt.params, &ckpt.feature_names)?;
    let mut manifest_inputs = vec![("checkpoint", ckpt_path.to_path_buf())];
    if let Some(data_path) = &args.data {
        let (_, reference) = data::training_reference(&ckpt, args.train_data.as_deref())?;
        let dataset = data::load_like_training(data_path, &ckpt, &reference)?;
        tree = tree.annotate(&dataset)?;
        manifest_inputs.push(("data", data_path.clone()));
    }

    let shown = args.layers.map_or(tree.depth, |k| k.min(tree.depth));
    match args.format.unwrap_or_default() {
        TreeFormat::Dot => out.text("tree.dot", &tree.to_dot(args.layers))?,
        TreeFormat::Json => out.text("tree.json", &(tree.to_structured_text()? + "\n"))?,
    };
    out.text("splits.csv", &splits_csv(&tree, shown))?;
    if tree.num_splits() <= MAX_EXPANDED_LEVELS && tree.num_splits() > 0 {
        out.json("expanded.json", &tree.expand()?)?;
    }

    let mut manifest = RunManifest::new(
        "extract",
        &serde_json::json!({
            "flags": args,
            "resolved": {"format": args.format.unwrap_or_default(), "layers": shown},
        }),
        0,
    )?;
    for (role, path) in &manifest_inputs {
        manifest.input(role, path)?;
    }
    manifest.write(out)?;
    println!(
        "extracted {} splits over {} layers ({} shown, {} nonzero split weights) -> {}",
        tree.num_splits(),
        tree.depth,
        shown * tree.hidden,
        tree.nonzero_split_weights(),
        out.dir.display()
    );
    Ok(())
}

/// One row per split: position, test, nonzero weights and the annotation.
fn splits_csv(tree: &ObliqueTree, layers: usize) -> String {
    let mut s = String::from(
        "layer,unit,threshold,nonzero_weights,weights,n_on,n_off,events_on,events_off,log_rank,p_value\n",
    );
    for split in tree.splits.iter().take(layers * tree.hidden) {
        let names = tree.input_names(split.layer);
        let terms: Vec<String> = names
            .iter()
            .zip(&split.weights)
            .filter(|(_, &w)| w != 0.0)
            .map(|(n, w)| format!("{n}={w}"))
            .collect();
        let _ = write!(
            s,
            "{},{},{},{},{}",
            split.layer,
            split.unit,
            split.threshold(),
            terms.len(),
            terms.join(";")
        );
        match &split.annotation {
            Some(a) => {
                let _ = write!(s, ",{},{},{},{}", a.n_on, a.n_off, a.events_on, a.events_off);
                match &a.log_rank {
                    Some(lr) => {
                        let _ = writeln!(s, ",{},{}", lr.statistic, lr.p_value);
                    }
                    None => s.push_str(",,\n"),
                }
            }
            None => s.push_str(",,,,,,\n"),
        }
    }
    s
}
