//! Right-censored survival data and the classical estimators built on it:
//! risk sets, Kaplan-Meier, the Breslow cumulative baseline hazard, survival
//! curves under proportional hazards, and the two-sample log-rank test.
//!
//! Ties follow the Breslow convention throughout: every subject whose
//! recorded time is `>= t` is at risk at `t`, so a subject censored at `t` is
//! still counted in the risk set of events at `t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::chi_square_sf;

/// Per-feature mean and standard deviation used to standardize covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn apply(&self, row: &[f64], out: &mut [f64]) {
        for ((o, &v), (m, s)) in out.iter_mut().zip(row).zip(self.mean.iter().zip(&self.std)) {
            *o = (v - m) / s;
        }
    }
}

/// `N` records of `(x, time, event)` with a shared covariate dimension.
///
/// Covariates are stored row-major. When `standardization` is present the
/// stored covariates are already standardized.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    x: Vec<f64>,
    dim: usize,
    times: Vec<f64>,
    events: Vec<bool>,
    feature_names: Vec<String>,
    standardization: Option<Standardization>,
}

impl SurvivalDataset {
    pub fn new(rows: Vec<Vec<f64>>, times: Vec<f64>, events: Vec<bool>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        let x = rows.into_iter().flatten().collect();
        Self::from_flat(x, dim, times, events)
    }

    pub fn from_flat(x: Vec<f64>, dim: usize, times: Vec<f64>, events: Vec<bool>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("covariate dimension must be >= 1".into()));
        }
        if x.len() != dim * times.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * times.len(),
                got: x.len(),
            });
        }
        if times.len() != events.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: events.len(),
            });
        }
        if let Some((i, t)) = times.iter().enumerate().find(|(_, t)| !(**t >= 0.0) || !t.is_finite()) {
            return Err(Error::InvalidInput(format!("time at record {i} is {t}; times must be finite and >= 0")));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite covariate at record {}", i / dim)));
        }
        let feature_names = (0..dim).map(|j| format!("x{j}")).collect();
        Ok(Self {
            x,
            dim,
            times,
            events,
            feature_names,
            standardization: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: names.len(),
            });
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.dim)
    }

    pub fn covariates(&self) -> &[f64] {
        &self.x
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    pub fn censored_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        1.0 - self.n_events() as f64 / self.len() as f64
    }

    /// Records at `indices`, in that order. Indices may repeat.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut x = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            x.extend_from_slice(self.row(i));
        }
        Self {
            x,
            dim: self.dim,
            times: indices.iter().map(|&i| self.times[i]).collect(),
            events: indices.iter().map(|&i| self.events[i]).collect(),
            feature_names: self.feature_names.clone(),
            standardization: self.standardization.clone(),
        }
    }

    pub fn require_events(&self, what: &str) -> Result<()> {
        if self.n_events() == 0 {
            return Err(Error::NoEvents(what.to_string()));
        }
        Ok(())
    }

    pub(crate) fn covariates_mut(&mut self) -> &mut [f64] {
        &mut self.x
    }

    pub(crate) fn set_standardization(&mut self, s: Option<Standardization>) {
        self.standardization = s;
    }

    pub(crate) fn drop_features(&mut self, keep: &[usize]) {
        let mut x = Vec::with_capacity(self.len() * keep.len());
        for row in self.x.chunks_exact(self.dim) {
            x.extend(keep.iter().map(|&j| row[j]));
        }
        self.feature_names = keep.iter().map(|&j| self.feature_names[j].clone()).collect();
        self.x = x;
        self.dim = keep.len();
    }
}

/// Risk scores `g(x_n)` aligned with a dataset's record order.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskScores(Vec<f64>);

impl RiskScores {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidInput(format!("risk score {i} is not finite")));
        }
        Ok(Self(scores))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Right-continuous piecewise-constant function of time.
///
/// `f(t) = initial` for `t < knots[0]`, `values[i]` on `[knots[i], knots[i+1])`,
/// and the last value is held beyond the last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    knots: Vec<f64>,
    values: Vec<f64>,
    initial: f64,
}

impl StepFunction {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, initial: f64) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: knots.len(),
                got: values.len(),
            });
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("step function knots must be strictly increasing".into()));
        }
        Ok(Self { knots, values, initial })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            knots: Vec::new(),
            values: Vec::new(),
            initial: value,
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.knots.partition_point(|&k| k <= t) {
            0 => self.initial,
            i => self.values[i - 1],
        }
    }

    /// `f(t⁻)`: the value on the interval ending just before `t`.
    pub fn left_limit(&self, t: f64) -> f64 {
        match self.knots.partition_point(|&k| k < t) {
            0 => self.initial,
            i => self.values[i - 1],
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            knots: self.knots.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            initial: f(self.initial),
        }
    }
}

/// Indices of all records still at risk at `t` (recorded time `>= t`).
pub fn risk_set(dataset: &SurvivalDataset, t: f64) -> Vec<usize> {
    dataset
        .times()
        .iter()
        .enumerate()
        .filter(|(_, &ti)| ti >= t)
        .map(|(i, _)| i)
        .collect()
}

/// What the Kaplan-Meier estimator counts as an "event".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KmTarget {
    /// Observed events: the usual survival curve.
    Survival,
    /// Censorings: the censoring distribution `G(t)` used for IPCW weights.
    Censoring,
}

/// Per-distinct-time counts: `(time, at_risk, n_target)`, ascending in time.
fn event_table(times: &[f64], hits: impl Fn(usize) -> bool) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut table = Vec::new();
    let mut at_risk = times.len();
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let mut j = i;
        let mut hits_here = 0;
        while j < order.len() && times[order[j]] == t {
            if hits(order[j]) {
                hits_here += 1;
            }
            j += 1;
        }
        table.push((t, at_risk, hits_here));
        at_risk -= j - i;
        i = j;
    }
    table
}

pub fn kaplan_meier(dataset: &SurvivalDataset, target: KmTarget) -> Result<StepFunction> {
    kaplan_meier_from(dataset.times(), dataset.events(), target)
}

/// Product-limit estimate `S(t) = Π_{t_i <= t} (1 - d_i / n_i)`.
pub fn kaplan_meier_from(times: &[f64], events: &[bool], target: KmTarget) -> Result<StepFunction> {
    if times.is_empty() {
        return Err(Error::InvalidInput("kaplan_meier on empty dataset".into()));
    }
    if times.len() != events.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: events.len(),
        });
    }
    let table = event_table(times, |i| match target {
        KmTarget::Survival => events[i],
        KmTarget::Censoring => !events[i],
    });
    let mut knots = Vec::new();
    let mut values = Vec::new();
    let mut s = 1.0;
    for (t, n, d) in table {
        if d == 0 {
            continue;
        }
        s *= 1.0 - d as f64 / n as f64;
        knots.push(t);
        values.push(s);
    }
    StepFunction::new(knots, values, 1.0)
}

/// Breslow estimate of the cumulative baseline hazard
/// `H_0(t) = Σ_{t_i <= t} d_i / Σ_{k: T_k >= t_i} exp(score_k)`.
pub fn breslow_baseline(dataset: &SurvivalDataset, scores: &RiskScores) -> Result<StepFunction> {
    breslow_from(dataset.times(), dataset.events(), scores.as_slice())
}

pub fn breslow_from(times: &[f64], events: &[bool], scores: &[f64]) -> Result<StepFunction> {
    if scores.len() != times.len() || events.len() != times.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: scores.len(),
        });
    }
    if !events.iter().any(|&e| e) {
        return Err(Error::NoEvents("breslow baseline".into()));
    }
    let shift = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));

    // Walk from the latest time backwards, accumulating the risk-set sum.
    let mut groups: Vec<(f64, usize, f64)> = Vec::new();
    let mut risk_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let mut d = 0;
        while i < order.len() && times[order[i]] == t {
            risk_sum += (scores[order[i]] - shift).exp();
            if events[order[i]] {
                d += 1;
            }
            i += 1;
        }
        if d > 0 {
            groups.push((t, d, risk_sum));
        }
    }
    groups.reverse();

    let scale = (-shift).exp();
    let mut h = 0.0;
    let mut knots = Vec::with_capacity(groups.len());
    let mut values = Vec::with_capacity(groups.len());
    for (t, d, denom) in groups {
        h += d as f64 / denom * scale;
        knots.push(t);
        values.push(h);
    }
    StepFunction::new(knots, values, 0.0)
}

/// `S(t | x) = exp(-H_0(t) exp(score))`.
pub fn survival_curve(baseline: &StepFunction, score: f64) -> StepFunction {
    let rel = score.exp();
    baseline.map(|h| (-h * rel).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRankResult {
    pub statistic: f64,
    pub p_value: f64,
    pub observed_a: f64,
    pub expected_a: f64,
    pub variance: f64,
}

/// Two-sample log-rank test (chi-square, one degree of freedom).
pub fn log_rank_test(times_a: &[f64], events_a: &[bool], times_b: &[f64], events_b: &[bool]) -> Result<LogRankResult> {
    if times_a.is_empty() || times_b.is_empty() {
        return Err(Error::InvalidInput("log-rank test needs two nonempty groups".into()));
    }
    if times_a.len() != events_a.len() || times_b.len() != events_b.len() {
        return Err(Error::DimensionMismatch {
            expected: times_a.len() + times_b.len(),
            got: events_a.len() + events_b.len(),
        });
    }
    let n_a = times_a.len();
    let times: Vec<f64> = times_a.iter().chain(times_b).copied().collect();
    let events: Vec<bool> = events_a.iter().chain(events_b).copied().collect();
    if !events.iter().any(|&e| e) {
        return Err(Error::NoEvents("pooled log-rank sample".into()));
    }

    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut at_risk = times.len() as f64;
    let mut at_risk_a = n_a as f64;
    let (mut observed, mut expected, mut variance) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let (mut d, mut d_a, mut leaving, mut leaving_a) = (0.0, 0.0, 0.0, 0.0);
        while i < order.len() && times[order[i]] == t {
            let k = order[i];
            let in_a = k < n_a;
            if events[k] {
                d += 1.0;
                if in_a {
                    d_a += 1.0;
                }
            }
            leaving += 1.0;
            if in_a {
                leaving_a += 1.0;
            }
            i += 1;
        }
        if d > 0.0 {
            let frac = at_risk_a / at_risk;
            observed += d_a;
            expected += d * frac;
            if at_risk > 1.0 {
                variance += d * frac * (1.0 - frac) * (at_risk - d) / (at_risk - 1.0);
            }
        }
        at_risk -= leaving;
        at_risk_a -= leaving_a;
    }

    let diff = observed - expected;
    let statistic = if variance > 0.0 {
        diff * diff / variance
    } else {
        0.0
    };
    Ok(LogRankResult {
        statistic,
        p_value: chi_square_sf(statistic, 1.0),
        observed_a: observed,
        expected_a: expected,
        variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(times: &[f64], events: &[bool]) -> SurvivalDataset {
        let rows = times.iter().map(|_| vec![0.0]).collect();
        SurvivalDataset::new(rows, times.to_vec(), events.to_vec()).unwrap()
    }

    #[test]
    fn risk_set_examples() {
        let d = ds(&[1.0, 2.0, 3.0], &[true, true, true]);
        assert_eq!(risk_set(&d, 2.0), vec![1, 2]);
        assert_eq!(risk_set(&d, 0.0), vec![0, 1, 2]);
        let d = ds(&[5.0, 5.0, 1.0], &[true, false, true]);
        assert_eq!(risk_set(&d, 5.0), vec![0, 1]);
        assert!(risk_set(&d, 6.0).is_empty());
    }

    #[test]
    fn km_all_censored_is_one() {
        let d = ds(&[1.0, 2.0, 3.0], &[false, false, false]);
        let km = kaplan_meier(&d, KmTarget::Survival).unwrap();
        for t in [0.0, 1.0, 2.5, 10.0] {
            assert_eq!(km.eval(t), 1.0);
        }
    }

    #[test]
    fn km_hand_cases() {
        let d = ds(&[1.0, 2.0, 3.0], &[true, false, true]);
        let km = kaplan_meier(&d, KmTarget::Survival).unwrap();
        assert!((km.eval(0.5) - 1.0).abs() < 1e-15);
        assert!((km.eval(1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((km.eval(2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((km.eval(3.0)).abs() < 1e-15);

        let d = ds(&[1.0, 1.0, 2.0, 2.0], &[true, true, true, false]);
        let km = kaplan_meier(&d, KmTarget::Survival).unwrap();
        assert!((km.eval(1.0) - 0.5).abs() < 1e-15);
        assert!((km.eval(2.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn km_censoring_mode_counts_censorings() {
        // censorings at 2 (n=2 at risk) -> G(2) = 1/2
        let d = ds(&[1.0, 2.0, 3.0], &[true, false, true]);
        let g = kaplan_meier(&d, KmTarget::Censoring).unwrap();
        assert_eq!(g.eval(1.5), 1.0);
        assert!((g.eval(2.0) - 0.5).abs() < 1e-15);
        assert!((g.left_limit(2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn km_rejects_empty() {
        assert!(kaplan_meier_from(&[], &[], KmTarget::Survival).is_err());
    }

    #[test]
    fn breslow_hand_cases() {
        let d = ds(&[1.0], &[true]);
        let h = breslow_baseline(&d, &RiskScores::new(vec![0.0]).unwrap()).unwrap();
        assert!((h.eval(1.0) - 1.0).abs() < 1e-15);
        assert_eq!(h.eval(0.5), 0.0);

        let d = ds(&[1.0, 2.0], &[true, true]);
        let h = breslow_baseline(&d, &RiskScores::new(vec![0.0, 0.0]).unwrap()).unwrap();
        assert!((h.eval(1.0) - 0.5).abs() < 1e-15);
        assert!((h.eval(2.0) - 1.5).abs() < 1e-15);
        assert!((h.eval(100.0) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn breslow_tied_events_share_risk_set() {
        let d = ds(&[1.0, 1.0, 2.0], &[true, true, false]);
        let h = breslow_baseline(&d, &RiskScores::new(vec![0.0; 3]).unwrap()).unwrap();
        assert!((h.eval(1.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn breslow_requires_events() {
        let d = ds(&[1.0, 2.0], &[false, false]);
        assert!(matches!(
            breslow_baseline(&d, &RiskScores::new(vec![0.0, 0.0]).unwrap()),
            Err(Error::NoEvents(_))
        ));
    }

    #[test]
    fn breslow_shift_scales_baseline_and_keeps_curves() {
        let times = [0.3, 1.2, 1.2, 2.0, 3.5, 4.1];
        let events = [true, false, true, true, false, true];
        let scores = [0.2, -0.4, 1.1, 0.0, 0.7, -1.3];
        let c = 2.5;
        let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
        let h = breslow_from(&times, &events, &scores).unwrap();
        let hs = breslow_from(&times, &events, &shifted).unwrap();
        for &t in &times {
            assert!((hs.eval(t) - h.eval(t) * (-c).exp()).abs() < 1e-12);
            for (&s, &ss) in scores.iter().zip(&shifted) {
                let a = survival_curve(&h, s).eval(t);
                let b = survival_curve(&hs, ss).eval(t);
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn survival_curve_examples() {
        let zero = StepFunction::constant(0.0);
        assert_eq!(survival_curve(&zero, 3.0).eval(5.0), 1.0);

        let n = 100_000;
        let knots: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64 * 2.0).collect();
        let values = knots.clone();
        let h = StepFunction::new(knots, values, 0.0).unwrap();
        let s = survival_curve(&h, 0.0);
        assert!((s.eval(1.0) - (-1.0f64).exp()).abs() < 1e-4);

        let s = survival_curve(&h, 50.0);
        assert!(s.eval(0.5) < 1e-12);
    }

    #[test]
    fn step_function_holds_last_value() {
        let f = StepFunction::new(vec![1.0, 2.0], vec![0.5, 0.25], 1.0).unwrap();
        assert_eq!(f.eval(0.0), 1.0);
        assert_eq!(f.eval(1.0), 0.5);
        assert_eq!(f.left_limit(1.0), 1.0);
        assert_eq!(f.eval(1e9), 0.25);
        assert!(StepFunction::new(vec![2.0, 1.0], vec![0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn log_rank_identical_groups() {
        let t = [1.0, 2.0, 3.0, 4.0];
        let e = [true, false, true, true];
        let r = log_rank_test(&t, &e, &t, &e).unwrap();
        assert!(r.statistic.abs() < 1e-15);
        assert!((r.p_value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn log_rank_hand_table() {
        // t=1: n=4,n_a=2,d=1 -> E=1/2, V=1/4; t=2: n=3,n_a=1,d=1 -> E=1/3, V=2/9
        // O_a=2, O-E=7/6, V=17/36 -> stat = 49/17
        let r = log_rank_test(&[1.0, 2.0], &[true, true], &[3.0, 4.0], &[true, true]).unwrap();
        assert!((r.observed_a - 2.0).abs() < 1e-15);
        assert!((r.expected_a - 5.0 / 6.0).abs() < 1e-15);
        assert!((r.variance - 17.0 / 36.0).abs() < 1e-15);
        assert!((r.statistic - 49.0 / 17.0).abs() < 1e-10);
        let swapped = log_rank_test(&[3.0, 4.0], &[true, true], &[1.0, 2.0], &[true, true]).unwrap();
        assert!((swapped.statistic - r.statistic).abs() < 1e-12);
        assert!((swapped.p_value - r.p_value).abs() < 1e-12);
    }

    #[test]
    fn log_rank_errors() {
        assert!(log_rank_test(&[], &[], &[1.0], &[true]).is_err());
        assert!(matches!(
            log_rank_test(&[1.0], &[false], &[2.0], &[false]),
            Err(Error::NoEvents(_))
        ));
    }
}
