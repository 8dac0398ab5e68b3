//! Explicit oblique-tree view of a network.
//!
//! Every hidden unit is one oblique split `w·input + b >= 0` over the raw
//! covariates and the activations of all earlier units. Since every path
//! shares the downstream hyperplanes, the tree is stored as a chain with one
//! level per unit; the activation pattern is the path and the linear head is
//! the leaf model. [`ObliqueTree::expand`] builds the explicit binary tree for
//! small networks.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Activation, NsoTreeParams};
use crate::survival::{log_rank_test, LogRankResult, SurvivalDataset};

pub const TREE_FORMAT_VERSION: u32 = 1;

/// Largest `L · d_h` for which [`ObliqueTree::expand`] is allowed.
pub const MAX_EXPANDED_LEVELS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAnnotation {
    pub n_on: usize,
    pub n_off: usize,
    pub events_on: usize,
    pub events_off: usize,
    /// `None` for degenerate splits (an empty branch, or no events at all).
    pub log_rank: Option<LogRankResult>,
}

impl SplitAnnotation {
    pub fn is_degenerate(&self) -> bool {
        self.log_rank.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObliqueSplit {
    /// 1-based network layer.
    pub layer: usize,
    /// 0-based unit within the layer.
    pub unit: usize,
    /// Weights over `[x, a(1), ..., a(layer-1)]`.
    pub weights: Vec<f64>,
    /// The split is "on" when `weights · input + bias >= 0`.
    pub bias: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<SplitAnnotation>,
}

impl ObliqueSplit {
    /// Right-hand side `b` of the equivalent test `weights · input >= b`.
    pub fn threshold(&self) -> f64 {
        -self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObliqueTree {
    pub version: u32,
    pub input_dim: usize,
    pub depth: usize,
    pub hidden: usize,
    pub feature_names: Vec<String>,
    /// Layer-major: all units of layer 1, then layer 2, ...
    pub splits: Vec<ObliqueSplit>,
    /// Leaf model over `[x, a(1), ..., a(L)]`.
    pub leaf_weights: Vec<f64>,
    pub leaf_bias: f64,
}

/// Path and leaf value of one routed sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub pattern: Vec<bool>,
    pub leaf_value: f64,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Default feature names `x0, x1, ...`.
pub fn default_feature_names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

pub fn extract_tree(params: &NsoTreeParams, feature_names: &[String]) -> Result<ObliqueTree> {
    if feature_names.len() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            got: feature_names.len(),
        });
    }
    let mut splits = Vec::with_capacity(params.num_units());
    for l in 0..params.depth() {
        for j in 0..params.hidden() {
            splits.push(ObliqueSplit {
                layer: l + 1,
                unit: j,
                weights: params.unit_weights(l, j).to_vec(),
                bias: params.layer_bias(l)[j],
                annotation: None,
            });
        }
    }
    Ok(ObliqueTree {
        version: TREE_FORMAT_VERSION,
        input_dim: params.input_dim(),
        depth: params.depth(),
        hidden: params.hidden(),
        feature_names: feature_names.to_vec(),
        splits,
        leaf_weights: params.head_weights().to_vec(),
        leaf_bias: params.head_bias(),
    })
}

impl ObliqueTree {
    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("malformed tree: {m}")));
        if self.version != TREE_FORMAT_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        if self.feature_names.len() != self.input_dim {
            return bad("feature name count differs from input_dim".into());
        }
        if self.splits.len() != self.depth * self.hidden {
            return bad(format!("expected {} splits, found {}", self.depth * self.hidden, self.splits.len()));
        }
        for (u, s) in self.splits.iter().enumerate() {
            let (l, j) = (u / self.hidden.max(1), u % self.hidden.max(1));
            if s.layer != l + 1 || s.unit != j {
                return bad(format!("split {u} is labelled layer {} unit {}", s.layer, s.unit));
            }
            if s.weights.len() != self.input_dim + l * self.hidden {
                return bad(format!("split {u} has {} weights", s.weights.len()));
            }
        }
        if self.leaf_weights.len() != self.input_dim + self.splits.len() {
            return bad("leaf weight count".into());
        }
        Ok(())
    }

    pub fn num_splits(&self) -> usize {
        self.splits.len()
    }

    pub fn nonzero_split_weights(&self) -> usize {
        self.splits.iter().flat_map(|s| &s.weights).filter(|&&w| w != 0.0).count()
    }

    /// Names of the inputs seen by splits in 1-based `layer`.
    pub fn input_names(&self, layer: usize) -> Vec<String> {
        let mut names = self.feature_names.clone();
        for l in 1..layer {
            for j in 0..self.hidden {
                names.push(format!("a{l}.{j}"));
            }
        }
        names
    }

    /// Routes `x` through the splits. Uses the network's ReLU-mode arithmetic
    /// in the same order, so results match the forward pass bit for bit.
    pub fn route(&self, x: &[f64]) -> Result<Route> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let mut features = Vec::with_capacity(self.leaf_weights.len());
        features.extend_from_slice(x);
        let mut pattern = Vec::with_capacity(self.splits.len());
        for l in 0..self.depth {
            let in_len = self.input_dim + l * self.hidden;
            for s in &self.splits[l * self.hidden..(l + 1) * self.hidden] {
                let z = dot(&s.weights, &features[..in_len]) + s.bias;
                pattern.push(z >= 0.0);
                features.push(Activation::Relu.apply(z));
            }
        }
        Ok(Route {
            pattern,
            leaf_value: dot(&self.leaf_weights, &features) + self.leaf_bias,
        })
    }

    /// Attaches a log-rank comparison of the two branches of every split,
    /// partitioning `dataset` by each sample's routed pattern.
    pub fn annotate(&self, dataset: &SurvivalDataset) -> Result<ObliqueTree> {
        if dataset.dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: dataset.dim(),
            });
        }
        if dataset.is_empty() {
            return Err(Error::InvalidInput("cannot annotate splits with an empty dataset".into()));
        }
        let patterns = dataset
            .rows()
            .map(|x| self.route(x).map(|r| r.pattern))
            .collect::<Result<Vec<_>>>()?;
        let mut out = self.clone();
        for (u, split) in out.splits.iter_mut().enumerate() {
            let (mut on_t, mut on_e, mut off_t, mut off_e) = (vec![], vec![], vec![], vec![]);
            for (i, p) in patterns.iter().enumerate() {
                let (t, e) = if p[u] { (&mut on_t, &mut on_e) } else { (&mut off_t, &mut off_e) };
                t.push(dataset.times()[i]);
                e.push(dataset.events()[i]);
            }
            let count = |e: &[bool]| e.iter().filter(|&&v| v).count();
            let log_rank = if on_t.is_empty() || off_t.is_empty() {
                None
            } else {
                log_rank_test(&on_t, &on_e, &off_t, &off_e).ok()
            };
            split.annotation = Some(SplitAnnotation {
                n_on: on_t.len(),
                n_off: off_t.len(),
                events_on: count(&on_e),
                events_off: count(&off_e),
                log_rank,
            });
        }
        Ok(out)
    }

    /// Versioned JSON document holding every field.
    pub fn to_structured_text(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_structured_text(text: &str) -> Result<ObliqueTree> {
        let tree: ObliqueTree = serde_json::from_str(text)?;
        tree.check()?;
        Ok(tree)
    }

    /// Graphviz rendering of the split chain. `layers` keeps only the first
    /// `k` layers (`k · d_h` split nodes) and omits the leaf.
    pub fn to_dot(&self, layers: Option<usize>) -> String {
        let shown = layers.map_or(self.depth, |k| k.min(self.depth));
        let n = shown * self.hidden;
        let mut out = String::from("digraph nsotree {\n  rankdir=TB;\n  node [shape=box, fontname=\"monospace\"];\n");
        for (u, s) in self.splits[..n].iter().enumerate() {
            let names = self.input_names(s.layer);
            let mut label = format!("layer {} unit {}\\n", s.layer, s.unit);
            let mut bars = Vec::new();
            for (name, &w) in names.iter().zip(&s.weights) {
                if w != 0.0 {
                    let _ = write!(label, "{name}: {w:.4}\\l");
                    bars.push(format!("{name}={w:e}"));
                }
            }
            let _ = write!(label, ">= {:.4}\\l", s.threshold());
            if let Some(a) = &s.annotation {
                match &a.log_rank {
                    Some(lr) => {
                        let _ = write!(label, "log-rank {:.3}, p={:.3e}\\l", lr.statistic, lr.p_value);
                    }
                    None => label.push_str("degenerate\\l"),
                }
                let _ = write!(label, "on {} / off {}\\l", a.n_on, a.n_off);
            }
            let _ = writeln!(out, "  s{u} [label=\"{}\", weights=\"{}\"];", escape(&label), bars.join(";"));
        }
        let full = n == self.splits.len();
        if full {
            let _ = writeln!(out, "  leaf [shape=ellipse, label=\"leaf: linear head over {} inputs\"];", self.leaf_weights.len());
        }
        for u in 0..n {
            let target = if u + 1 < n {
                format!("s{}", u + 1)
            } else if full {
                "leaf".to_string()
            } else {
                continue;
            };
            let _ = writeln!(out, "  s{u} -> {target} [label=\"on\"];");
            let _ = writeln!(out, "  s{u} -> {target} [label=\"off\", style=dashed];");
        }
        out.push_str("}\n");
        out
    }

    /// Explicit binary tree with every split and leaf written as an affine
    /// function of the raw covariates along its path.
    pub fn expand(&self) -> Result<ExpandedTree> {
        let levels = self.splits.len();
        if levels > MAX_EXPANDED_LEVELS {
            return Err(Error::InvalidInput(format!(
                "full expansion needs L * d_h <= {MAX_EXPANDED_LEVELS}, got {levels}"
            )));
        }
        let d = self.input_dim;
        let mut nodes = Vec::new();
        let mut leaves = Vec::new();
        // each input feature as an affine map of x: (coefficients, constant)
        let mut base: Vec<(Vec<f64>, f64)> = (0..d)
            .map(|j| {
                let mut c = vec![0.0; d];
                c[j] = 1.0;
                (c, 0.0)
            })
            .collect();
        self.expand_from(0, &mut Vec::new(), &mut base, &mut nodes, &mut leaves);
        Ok(ExpandedTree { nodes, leaves })
    }

    fn expand_from(
        &self,
        u: usize,
        path: &mut Vec<bool>,
        inputs: &mut Vec<(Vec<f64>, f64)>,
        nodes: &mut Vec<ExpandedNode>,
        leaves: &mut Vec<ExpandedLeaf>,
    ) {
        let d = self.input_dim;
        let combine = |w: &[f64], bias: f64, inputs: &[(Vec<f64>, f64)]| {
            let mut coef = vec![0.0; d];
            let mut c = bias;
            for (wk, (ck, bk)) in w.iter().zip(inputs) {
                for (a, b) in coef.iter_mut().zip(ck) {
                    *a += wk * b;
                }
                c += wk * bk;
            }
            (coef, c)
        };
        if u == self.splits.len() {
            let (weights, offset) = combine(&self.leaf_weights, self.leaf_bias, inputs);
            leaves.push(ExpandedLeaf {
                path: path.clone(),
                weights,
                offset,
            });
            return;
        }
        let s = &self.splits[u];
        let (weights, offset) = combine(&s.weights, s.bias, &inputs[..s.weights.len()]);
        nodes.push(ExpandedNode {
            path: path.clone(),
            layer: s.layer,
            unit: s.unit,
            weights: weights.clone(),
            offset,
        });
        for on in [true, false] {
            path.push(on);
            inputs.push(if on { (weights.clone(), offset) } else { (vec![0.0; d], 0.0) });
            self.expand_from(u + 1, path, inputs, nodes, leaves);
            inputs.pop();
            path.pop();
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('"', "\\\"")
}

/// Internal node of an expanded tree: test `weights · x + offset >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedNode {
    /// Branches taken from the root (`true` = on).
    pub path: Vec<bool>,
    pub layer: usize,
    pub unit: usize,
    pub weights: Vec<f64>,
    pub offset: f64,
}

/// Leaf of an expanded tree: risk `weights · x + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedLeaf {
    pub path: Vec<bool>,
    pub weights: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedTree {
    pub nodes: Vec<ExpandedNode>,
    pub leaves: Vec<ExpandedLeaf>,
}

impl ExpandedTree {
    pub fn leaf(&self, pattern: &[bool]) -> Option<&ExpandedLeaf> {
        self.leaves.iter().find(|l| l.path == pattern)
    }
}

/// Two-layer, one-unit-per-layer network on two covariates whose splits sit
/// on `x0 + 2 x1 + 1 = 0` and `x0 + 2 x1 - 1 = 0` and whose ReLU-mode output
/// is exactly `x0 + 2 x1`.
pub fn linear_hazard_construction() -> NsoTreeParams {
    NsoTreeParams::from_parts(
        2,
        1,
        &[(vec![1.0, 2.0], vec![1.0]), (vec![1.0, 2.0, 0.0], vec![-1.0])],
        &[1.0, 2.0, 0.0, 0.0],
        0.0,
    )
    .expect("construction dimensions are consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tree(d: usize, depth: usize, hidden: usize, seed: u64) -> (NsoTreeParams, ObliqueTree) {
        let p = NsoTreeParams::init(d, depth, hidden, seed).unwrap();
        let t = extract_tree(&p, &default_feature_names(d)).unwrap();
        (p, t)
    }

    fn random_biases(p: &mut NsoTreeParams, rng: &mut ChaCha8Rng) {
        let n = p.theta().len();
        for w in p.theta_mut()[..n].iter_mut() {
            if *w == 0.0 {
                *w = rng.gen_range(-0.5..0.5);
            }
        }
    }

    #[test]
    fn depth_one_tree_has_one_split() {
        let (p, t) = tree(3, 1, 1, 0);
        assert_eq!(t.num_splits(), 1);
        assert_eq!(t.splits[0].weights, p.unit_weights(0, 0));
        assert_eq!(t.leaf_weights, p.head_weights());
    }

    #[test]
    fn split_count_is_depth_times_width() {
        let (_, t) = tree(4, 5, 3, 1);
        assert_eq!(t.num_splits(), 15);
        assert_eq!(t.splits[14].weights.len(), 4 + 4 * 3);
        assert_eq!(t.input_names(3)[5], "a1.1");
    }

    #[test]
    fn routing_matches_forward_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mut p, _) = tree(5, 4, 2, 2);
        random_biases(&mut p, &mut rng);
        let t = extract_tree(&p, &default_feature_names(5)).unwrap();
        for _ in 0..500 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let r = t.route(&x).unwrap();
            let f = p.forward(&x, Activation::Relu).unwrap();
            assert_eq!(r.pattern, f.pattern);
            assert_eq!(r.leaf_value.to_bits(), f.score.to_bits());
        }
        assert!(t.route(&[0.0; 4]).is_err());
    }

    #[test]
    fn zero_input_with_zero_biases_is_all_on() {
        let (_, t) = tree(3, 3, 2, 3);
        assert!(t.route(&[0.0; 3]).unwrap().pattern.iter().all(|&b| b));
    }

    #[test]
    fn construction_splits_and_output() {
        let p = linear_hazard_construction();
        let t = extract_tree(&p, &default_feature_names(2)).unwrap();
        assert_eq!(t.num_splits(), 2);
        // x0 + 2 x1 >= -1, then x0 + 2 x1 >= 1
        assert_eq!(t.splits[0].weights, vec![1.0, 2.0]);
        assert_eq!(t.splits[0].threshold(), -1.0);
        assert_eq!(t.splits[1].weights[..2], [1.0, 2.0]);
        assert_eq!(t.splits[1].threshold(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let s = p.score(&x, Activation::Relu).unwrap();
            assert!((s - (x[0] + 2.0 * x[1])).abs() <= 1e-9);
        }
    }

    #[test]
    fn structured_text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut p, _) = tree(3, 3, 2, 5);
        random_biases(&mut p, &mut rng);
        let t = extract_tree(&p, &default_feature_names(3)).unwrap();
        let rows: Vec<Vec<f64>> = (0..60).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let times = (0..60).map(|i| 1.0 + (i * 7 % 13) as f64).collect();
        let events = (0..60).map(|i| i % 3 != 0).collect();
        let annotated = t.annotate(&SurvivalDataset::new(rows, times, events).unwrap()).unwrap();
        for tr in [t, annotated] {
            let back = ObliqueTree::from_structured_text(&tr.to_structured_text().unwrap()).unwrap();
            assert_eq!(back, tr);
        }
    }

    #[test]
    fn structured_text_rejects_other_versions() {
        let (_, t) = tree(2, 1, 1, 0);
        let text = t.to_structured_text().unwrap().replace("\"version\": 1", "\"version\": 2");
        assert!(ObliqueTree::from_structured_text(&text).is_err());
    }

    #[test]
    fn dot_export_shapes() {
        let (_, t) = tree(2, 1, 1, 0);
        let dot = t.to_dot(None);
        assert_eq!(dot.matches("[label=\"layer").count(), 1);
        assert_eq!(dot.matches(" -> leaf").count(), 2);

        let (_, t) = tree(4, 6, 2, 1);
        let dot = t.to_dot(Some(3));
        assert_eq!(dot.matches("[label=\"layer").count(), 6);
        assert!(!dot.contains("leaf"));
    }

    #[test]
    fn split_sending_everyone_one_way_is_degenerate() {
        let p = NsoTreeParams::from_parts(1, 1, &[(vec![0.0], vec![1.0])], &[1.0, 0.0], 0.0).unwrap();
        let t = extract_tree(&p, &default_feature_names(1)).unwrap();
        let d = SurvivalDataset::new(vec![vec![0.3], vec![-0.2]], vec![1.0, 2.0], vec![true, true]).unwrap();
        let a = t.annotate(&d).unwrap();
        let ann = a.splits[0].annotation.as_ref().unwrap();
        assert!(ann.is_degenerate());
        assert_eq!((ann.n_on, ann.n_off), (2, 0));
        assert_eq!(a.splits[0].weights, t.splits[0].weights);
    }

    #[test]
    fn identical_branches_give_p_near_one() {
        let p = NsoTreeParams::from_parts(1, 1, &[(vec![1.0], vec![0.0])], &[1.0, 0.0], 0.0).unwrap();
        let t = extract_tree(&p, &default_feature_names(1)).unwrap();
        let rows = vec![vec![1.0], vec![1.0], vec![-1.0], vec![-1.0]];
        let d = SurvivalDataset::new(rows, vec![1.0, 2.0, 1.0, 2.0], vec![true; 4]).unwrap();
        let lr = t.annotate(&d).unwrap().splits[0].annotation.clone().unwrap().log_rank.unwrap();
        assert!(lr.statistic.abs() < 1e-12);
        assert!((lr.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expansion_matches_routing() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (mut p, _) = tree(3, 3, 2, 6);
        random_biases(&mut p, &mut rng);
        let t = extract_tree(&p, &default_feature_names(3)).unwrap();
        let e = t.expand().unwrap();
        assert_eq!(e.nodes.len(), 63);
        assert_eq!(e.leaves.len(), 64);
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = t.route(&x).unwrap();
            let leaf = e.leaf(&r.pattern).unwrap();
            let v = dot(&leaf.weights, &x) + leaf.offset;
            assert!((v - r.leaf_value).abs() < 1e-9);
        }
        let (_, big) = tree(2, 13, 1, 0);
        assert!(big.expand().is_err());
    }
}
