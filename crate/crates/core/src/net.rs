//! The neural survival oblique tree network.
//!
//! Layer `l` (1-based) sees the raw covariates followed by every earlier
//! layer's activations, so its input length is `d + (l - 1) * d_h`. The risk
//! score is a linear head over `[x, a(1), ..., a(L)]`. With ReLU activations
//! each unit is an oblique split `w·input + b >= 0` and the activation
//! pattern picks the path through the tree.
//!
//! All parameters live in one flat vector, laid out layer by layer as
//! `[W(l) row-major, b(l)]`, then `[head weights, head bias]`. Gradients use
//! the same layout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softplus,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z >= 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Softplus => softplus(z),
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(z),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Softplus => "softplus",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "softplus" => Ok(Activation::Softplus),
            other => Err(Error::InvalidInput(format!("unknown activation `{other}`"))),
        }
    }
}

/// `log(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn soft_threshold(w: f64, lambda: f64) -> f64 {
    let shrunk = w.abs() - lambda;
    if shrunk > 0.0 {
        shrunk.copysign(w)
    } else {
        0.0
    }
}

/// Network parameters. `depth == 0` is the linear Cox model.
#[derive(Debug, Clone, PartialEq)]
pub struct NsoTreeParams {
    input_dim: usize,
    depth: usize,
    hidden: usize,
    theta: Vec<f64>,
}

impl NsoTreeParams {
    pub fn num_params_for(input_dim: usize, depth: usize, hidden: usize) -> usize {
        let layers: usize = (0..depth).map(|l| hidden * (input_dim + l * hidden) + hidden).sum();
        layers + input_dim + depth * hidden + 1
    }

    /// Uniform fan-in initialization on `[-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// with zero biases.
    pub fn init(input_dim: usize, depth: usize, hidden: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || depth == 0 || hidden == 0 {
            return Err(Error::InvalidInput(format!(
                "invalid dimensions d={input_dim}, L={depth}, d_h={hidden}; all must be >= 1"
            )));
        }
        Ok(Self::init_unchecked(input_dim, depth, hidden, seed))
    }

    /// Linear Cox model: a head over `x` alone.
    pub fn linear(input_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidInput("input dimension must be >= 1".into()));
        }
        Ok(Self::init_unchecked(input_dim, 0, 1, seed))
    }

    fn init_unchecked(input_dim: usize, depth: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self {
            input_dim,
            depth,
            hidden,
            theta: vec![0.0; Self::num_params_for(input_dim, depth, hidden)],
        };
        for l in 0..depth {
            let bound = 1.0 / (p.layer_input_len(l) as f64).sqrt();
            for w in p.layer_weights_mut(l) {
                *w = rng.gen_range(-bound..bound);
            }
        }
        let bound = 1.0 / (p.feature_len() as f64).sqrt();
        for w in p.head_weights_mut() {
            *w = rng.gen_range(-bound..bound);
        }
        p
    }

    /// Build from explicit per-layer weights (row-major, `d_h` rows) and biases.
    pub fn from_parts(
        input_dim: usize,
        hidden: usize,
        layers: &[(Vec<f64>, Vec<f64>)],
        head_weights: &[f64],
        head_bias: f64,
    ) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::InvalidInput("input dimension and width must be >= 1".into()));
        }
        let depth = layers.len();
        let mut theta = Vec::with_capacity(Self::num_params_for(input_dim, depth, hidden));
        for (l, (w, b)) in layers.iter().enumerate() {
            let in_len = input_dim + l * hidden;
            if w.len() != hidden * in_len {
                return Err(Error::DimensionMismatch {
                    expected: hidden * in_len,
                    got: w.len(),
                });
            }
            if b.len() != hidden {
                return Err(Error::DimensionMismatch {
                    expected: hidden,
                    got: b.len(),
                });
            }
            theta.extend_from_slice(w);
            theta.extend_from_slice(b);
        }
        let feat = input_dim + depth * hidden;
        if head_weights.len() != feat {
            return Err(Error::DimensionMismatch {
                expected: feat,
                got: head_weights.len(),
            });
        }
        theta.extend_from_slice(head_weights);
        theta.push(head_bias);
        Self::from_flat(input_dim, depth, hidden, theta)
    }

    pub fn from_flat(input_dim: usize, depth: usize, hidden: usize, theta: Vec<f64>) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::InvalidInput("input dimension and width must be >= 1".into()));
        }
        let expected = Self::num_params_for(input_dim, depth, hidden);
        if theta.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("parameters must be finite".into()));
        }
        Ok(Self {
            input_dim,
            depth,
            hidden,
            theta,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Input length of 0-based layer `l`.
    pub fn layer_input_len(&self, l: usize) -> usize {
        self.input_dim + l * self.hidden
    }

    /// Length of `[x, a(1), ..., a(L)]`, the head input.
    pub fn feature_len(&self) -> usize {
        self.input_dim + self.depth * self.hidden
    }

    pub fn num_units(&self) -> usize {
        self.depth * self.hidden
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn layer_offset(&self, l: usize) -> usize {
        (0..l).map(|k| self.hidden * self.layer_input_len(k) + self.hidden).sum()
    }

    fn layer_weight_range(&self, l: usize) -> std::ops::Range<usize> {
        let start = self.layer_offset(l);
        start..start + self.hidden * self.layer_input_len(l)
    }

    fn layer_bias_range(&self, l: usize) -> std::ops::Range<usize> {
        let end = self.layer_weight_range(l).end;
        end..end + self.hidden
    }

    fn head_offset(&self) -> usize {
        self.layer_offset(self.depth)
    }

    pub fn layer_weights(&self, l: usize) -> &[f64] {
        &self.theta[self.layer_weight_range(l)]
    }

    pub fn layer_weights_mut(&mut self, l: usize) -> &mut [f64] {
        let r = self.layer_weight_range(l);
        &mut self.theta[r]
    }

    /// Weights of unit `j` in 0-based layer `l`.
    pub fn unit_weights(&self, l: usize, j: usize) -> &[f64] {
        let n = self.layer_input_len(l);
        &self.layer_weights(l)[j * n..(j + 1) * n]
    }

    pub fn layer_bias(&self, l: usize) -> &[f64] {
        &self.theta[self.layer_bias_range(l)]
    }

    pub fn head_weights(&self) -> &[f64] {
        let o = self.head_offset();
        &self.theta[o..o + self.feature_len()]
    }

    pub fn head_weights_mut(&mut self) -> &mut [f64] {
        let o = self.head_offset();
        let n = self.feature_len();
        &mut self.theta[o..o + n]
    }

    pub fn head_bias(&self) -> f64 {
        self.theta[self.theta.len() - 1]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Fills `features` with `[x, a(1), ..., a(L)]` and `pre` with every
    /// unit's pre-activation; returns the score.
    pub(crate) fn forward_into(&self, x: &[f64], mode: Activation, features: &mut Vec<f64>, pre: &mut Vec<f64>) -> f64 {
        features.clear();
        features.extend_from_slice(x);
        pre.clear();
        let mut offset = 0;
        for l in 0..self.depth {
            let in_len = self.layer_input_len(l);
            let w = &self.theta[offset..offset + self.hidden * in_len];
            let b = &self.theta[offset + self.hidden * in_len..offset + self.hidden * in_len + self.hidden];
            for j in 0..self.hidden {
                let row = &w[j * in_len..(j + 1) * in_len];
                let z = dot(row, &features[..in_len]) + b[j];
                pre.push(z);
                features.push(mode.apply(z));
            }
            offset += self.hidden * in_len + self.hidden;
        }
        let head = &self.theta[offset..offset + features.len()];
        dot(head, features) + self.theta[offset + features.len()]
    }

    pub fn score(&self, x: &[f64], mode: Activation) -> Result<f64> {
        self.check_input(x)?;
        let mut f = Vec::with_capacity(self.feature_len());
        let mut z = Vec::with_capacity(self.num_units());
        Ok(self.forward_into(x, mode, &mut f, &mut z))
    }

    pub fn forward(&self, x: &[f64], mode: Activation) -> Result<ActivationTrace> {
        self.check_input(x)?;
        let mut features = Vec::with_capacity(self.feature_len());
        let mut pre = Vec::with_capacity(self.num_units());
        let score = self.forward_into(x, mode, &mut features, &mut pre);
        let pattern = pre.iter().map(|&z| z >= 0.0).collect();
        let activations = features[self.input_dim..].to_vec();
        Ok(ActivationTrace {
            hidden: self.hidden,
            pre_activations: pre,
            activations,
            pattern,
            score,
        })
    }

    /// Scores for every row of a row-major covariate block.
    pub fn scores(&self, covariates: &[f64], mode: Activation) -> Result<Vec<f64>> {
        if covariates.len() % self.input_dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: covariates.len() % self.input_dim,
            });
        }
        let mut f = Vec::with_capacity(self.feature_len());
        let mut z = Vec::with_capacity(self.num_units());
        Ok(covariates
            .chunks_exact(self.input_dim)
            .map(|x| self.forward_into(x, mode, &mut f, &mut z))
            .collect())
    }

    /// Adds `upstream * d score / d theta` into `grad`, given the cached
    /// forward pass for one sample.
    pub(crate) fn accumulate_gradient(
        &self,
        features: &[f64],
        pre: &[f64],
        upstream: f64,
        mode: Activation,
        grad: &mut [f64],
        feature_grad: &mut Vec<f64>,
    ) {
        if upstream == 0.0 {
            return;
        }
        let head = self.head_offset();
        let feat_len = self.feature_len();
        feature_grad.clear();
        feature_grad.extend(self.theta[head..head + feat_len].iter().map(|w| w * upstream));
        for (g, f) in grad[head..head + feat_len].iter_mut().zip(features) {
            *g += upstream * f;
        }
        grad[head + feat_len] += upstream;

        for l in (0..self.depth).rev() {
            let in_len = self.layer_input_len(l);
            let w_range = self.layer_weight_range(l);
            let b_start = w_range.end;
            for j in 0..self.hidden {
                let unit = l * self.hidden + j;
                let dz = feature_grad[self.input_dim + unit] * mode.derivative(pre[unit]);
                if dz == 0.0 {
                    continue;
                }
                let row_start = w_range.start + j * in_len;
                let row = &self.theta[row_start..row_start + in_len];
                for ((g, f), (fg, w)) in grad[row_start..row_start + in_len]
                    .iter_mut()
                    .zip(&features[..in_len])
                    .zip(feature_grad[..in_len].iter_mut().zip(row))
                {
                    *g += dz * f;
                    *fg += dz * w;
                }
                grad[b_start + j] += dz;
            }
        }
    }

    /// Gradient of `Σ_n upstream[n] * score(x_n)` with respect to every
    /// parameter, in the flat layout.
    pub fn backward(&self, covariates: &[f64], upstream: &[f64], mode: Activation) -> Result<Vec<f64>> {
        if covariates.len() != upstream.len() * self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: upstream.len() * self.input_dim,
                got: covariates.len(),
            });
        }
        if let Some(i) = upstream.iter().position(|g| !g.is_finite()) {
            return Err(Error::InvalidInput(format!("upstream gradient {i} is not finite")));
        }
        let mut grad = vec![0.0; self.theta.len()];
        let mut f = Vec::with_capacity(self.feature_len());
        let mut z = Vec::with_capacity(self.num_units());
        let mut fg = Vec::with_capacity(self.feature_len());
        for (x, &u) in covariates.chunks_exact(self.input_dim).zip(upstream) {
            self.forward_into(x, mode, &mut f, &mut z);
            self.accumulate_gradient(&f, &z, u, mode, &mut grad, &mut fg);
        }
        Ok(grad)
    }

    /// Soft-thresholds every layer weight in place. Biases and the head are
    /// left untouched.
    pub fn prox_in_place(&mut self, lambda: f64) -> Result<()> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidInput(format!("prox strength must be >= 0, got {lambda}")));
        }
        if lambda == 0.0 {
            return Ok(());
        }
        for l in 0..self.depth {
            for w in self.layer_weights_mut(l) {
                *w = soft_threshold(*w, lambda);
            }
        }
        Ok(())
    }

    pub fn prox_step(&self, lambda: f64) -> Result<Self> {
        let mut out = self.clone();
        out.prox_in_place(lambda)?;
        Ok(out)
    }

    pub fn layer_weight_count(&self) -> usize {
        (0..self.depth).map(|l| self.hidden * self.layer_input_len(l)).sum()
    }

    pub fn nonzero_layer_weights(&self) -> usize {
        (0..self.depth)
            .map(|l| self.layer_weights(l).iter().filter(|&&w| w != 0.0).count())
            .sum()
    }

    /// Fraction of layer weights that are exactly zero.
    pub fn sparsity(&self) -> f64 {
        let total = self.layer_weight_count();
        if total == 0 {
            return 0.0;
        }
        (total - self.nonzero_layer_weights()) as f64 / total as f64
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Forward-pass record for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    hidden: usize,
    /// Pre-activations of every unit, layer-major.
    pub pre_activations: Vec<f64>,
    pub activations: Vec<f64>,
    /// `pattern[u] == (pre_activations[u] >= 0)`.
    pub pattern: Vec<bool>,
    pub score: f64,
}

impl ActivationTrace {
    pub fn layer_pattern(&self, l: usize) -> &[bool] {
        &self.pattern[l * self.hidden..(l + 1) * self.hidden]
    }

    pub fn layer_pre_activations(&self, l: usize) -> &[f64] {
        &self.pre_activations[l * self.hidden..(l + 1) * self.hidden]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_dimensions() {
        let p = NsoTreeParams::init(10, 1, 1, 0).unwrap();
        assert_eq!(p.layer_weights(0).len(), 10);
        assert_eq!(p.layer_bias(0).len(), 1);
        assert_eq!(p.head_weights().len(), 11);
        assert_eq!(p.theta().len(), 10 + 1 + 11 + 1);

        let p = NsoTreeParams::init(10, 3, 1, 0).unwrap();
        let lens: Vec<usize> = (0..3).map(|l| p.layer_input_len(l)).collect();
        assert_eq!(lens, vec![10, 11, 12]);
        assert_eq!(p.head_weights().len(), 13);

        let p = NsoTreeParams::init(4, 3, 2, 0).unwrap();
        assert_eq!(p.layer_weights(2).len(), 2 * 8);
        assert_eq!(p.head_weights().len(), 10);
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(NsoTreeParams::init(0, 1, 1, 0).is_err());
        assert!(NsoTreeParams::init(3, 0, 1, 0).is_err());
        assert!(NsoTreeParams::init(3, 1, 0, 0).is_err());
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = NsoTreeParams::init(5, 4, 2, 17).unwrap();
        let b = NsoTreeParams::init(5, 4, 2, 17).unwrap();
        assert_eq!(a, b);
        assert!(a.theta().iter().zip(b.theta()).all(|(x, y)| x.to_bits() == y.to_bits()));
        for l in 0..4 {
            let bound = 1.0 / (a.layer_input_len(l) as f64).sqrt();
            assert!(a.layer_weights(l).iter().all(|w| w.abs() <= bound));
            assert!(a.layer_bias(l).iter().all(|&b| b == 0.0));
        }
        assert_ne!(a, NsoTreeParams::init(5, 4, 2, 18).unwrap());
    }

    #[test]
    fn from_parts_rejects_wrong_layer_width() {
        let err = NsoTreeParams::from_parts(3, 1, &[(vec![1.0; 3], vec![0.0]), (vec![1.0; 3], vec![0.0])], &[0.0; 5], 0.0);
        assert!(matches!(err, Err(Error::DimensionMismatch { expected: 4, got: 3 })));
    }

    #[test]
    fn forward_hand_example() {
        let mut w = vec![0.0; 10];
        w[0] = 1.0;
        w[1] = 2.0;
        let mut head = vec![0.0; 11];
        head[10] = 1.0;
        let p = NsoTreeParams::from_parts(10, 1, &[(w, vec![0.0])], &head, 0.0).unwrap();
        let mut x = vec![0.0; 10];
        x[0] = 1.0;
        x[1] = 1.0;
        let relu = p.forward(&x, Activation::Relu).unwrap();
        assert_eq!(relu.score, 3.0);
        assert_eq!(relu.pattern, vec![true]);
        let sp = p.forward(&x, Activation::Softplus).unwrap();
        assert!((sp.score - (1.0 + 3f64.exp()).ln()).abs() < 1e-14);
        assert!((sp.score - 3.048_587_351_573_742).abs() < 1e-12);
    }

    #[test]
    fn forward_rejects_wrong_length() {
        let p = NsoTreeParams::init(3, 2, 1, 0).unwrap();
        assert!(matches!(p.forward(&[1.0, 2.0], Activation::Relu), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn softplus_values() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        for z in [-1e4, -700.0, -30.0, 0.0, 29.9, 30.1, 700.0, 1e4] {
            let s = softplus(z);
            assert!(s.is_finite());
            let relu = z.max(0.0);
            assert!((s - relu).abs() <= std::f64::consts::LN_2 + 1e-15);
        }
    }

    #[test]
    fn soft_threshold_examples() {
        assert!((soft_threshold(0.5, 0.2) - 0.3).abs() < 1e-15);
        assert_eq!(soft_threshold(-0.1, 0.2), 0.0);
        assert!((soft_threshold(-0.7, 0.2) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn prox_only_touches_layer_weights() {
        let p = NsoTreeParams::from_parts(
            2,
            1,
            &[(vec![0.5, -0.1], vec![0.05]), (vec![0.3, 0.15, -0.9], vec![-0.01])],
            &[0.01, 0.02, 0.03, 0.04],
            0.1,
        )
        .unwrap();
        let q = p.prox_step(0.2).unwrap();
        assert!((q.layer_weights(0)[0] - 0.3).abs() < 1e-15);
        assert_eq!(q.layer_weights(0)[1], 0.0);
        assert_eq!(q.layer_weights(1)[1], 0.0);
        assert!((q.layer_weights(1)[2] + 0.7).abs() < 1e-15);
        assert_eq!(q.layer_bias(0), p.layer_bias(0));
        assert_eq!(q.layer_bias(1), p.layer_bias(1));
        assert_eq!(q.head_weights(), p.head_weights());
        assert_eq!(q.head_bias(), p.head_bias());
        assert_eq!(p.prox_step(0.0).unwrap(), p);
        assert!(p.prox_step(-1.0).is_err());
    }

    #[test]
    fn sparsity_counts() {
        assert_eq!(NsoTreeParams::init(5, 3, 1, 0).unwrap().sparsity(), 0.0);
        let p = NsoTreeParams::init(5, 3, 1, 0).unwrap();
        assert_eq!(p.prox_step(10.0).unwrap().sparsity(), 1.0);
        // 3 layers over d=3: 3 + 4 + 5 = 12 weights, 3 of them zero
        let p = NsoTreeParams::from_parts(
            3,
            1,
            &[
                (vec![0.0, 1.0, 1.0], vec![0.0]),
                (vec![1.0, 0.0, 1.0, 1.0], vec![0.0]),
                (vec![1.0, 1.0, 1.0, 1.0, 0.0], vec![0.0]),
            ],
            &[0.0; 6],
            0.0,
        )
        .unwrap();
        assert_eq!(p.sparsity(), 0.25);
        assert_eq!(NsoTreeParams::linear(3, 0).unwrap().sparsity(), 0.0);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let p = NsoTreeParams::init(3, 2, 2, 1).unwrap();
        let x = [0.1, -0.4, 0.9, 0.3, 0.3, -0.2];
        let g = p.backward(&x, &[0.0, 0.0], Activation::Softplus).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_accumulates_linearly() {
        let p = NsoTreeParams::init(3, 2, 1, 4).unwrap();
        let x = [0.2, -0.7, 0.5];
        let one = p.backward(&x, &[1.0], Activation::Softplus).unwrap();
        let twice: Vec<f64> = x.iter().chain(&x).copied().collect();
        let two = p.backward(&twice, &[1.0, 1.0], Activation::Softplus).unwrap();
        for (a, b) in one.iter().zip(&two) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut p = NsoTreeParams::init(3, 2, 1, 9).unwrap();
        for (i, b) in [0.3, -0.2].iter().enumerate() {
            let r = p.layer_bias_range(i);
            p.theta_mut()[r.start] = *b;
        }
        let x = [0.4, -0.3, 0.8];
        let g = p.backward(&x, &[1.0], Activation::Softplus).unwrap();
        let h = 1e-5;
        for k in 0..p.theta().len() {
            let mut plus = p.clone();
            plus.theta_mut()[k] += h;
            let mut minus = p.clone();
            minus.theta_mut()[k] -= h;
            let fd = (plus.score(&x, Activation::Softplus).unwrap() - minus.score(&x, Activation::Softplus).unwrap()) / (2.0 * h);
            let denom = fd.abs().max(g[k].abs()).max(1e-8);
            assert!((fd - g[k]).abs() / denom < 1e-5, "param {k}: fd {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn trace_pattern_matches_sign_and_relu() {
        let p = NsoTreeParams::init(4, 3, 2, 3).unwrap();
        let t = p.forward(&[0.5, -1.0, 0.25, 0.0], Activation::Relu).unwrap();
        for (u, &z) in t.pre_activations.iter().enumerate() {
            assert_eq!(t.pattern[u], z >= 0.0);
            assert_eq!(t.activations[u], if z >= 0.0 { z } else { 0.0 });
        }
        assert_eq!(t.layer_pattern(1).len(), 2);
    }

    #[test]
    fn zero_input_zero_bias_is_all_on() {
        let p = NsoTreeParams::init(3, 4, 1, 0).unwrap();
        let t = p.forward(&[0.0; 3], Activation::Relu).unwrap();
        assert!(t.pattern.iter().all(|&o| o));
    }
}
