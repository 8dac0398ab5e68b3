//! Evaluation metrics for fitted risk models.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::{kaplan_meier_from, KmTarget, StepFunction};

/// Harrell's concordance index.
///
/// A pair `(i, j)` is comparable when `T_i < T_j` and `i` had an event; it is
/// concordant when `score_i > score_j`. Tied scores count one half.
pub fn concordance_index(scores: &[f64], times: &[f64], events: &[bool]) -> Result<f64> {
    if scores.len() != times.len() || times.len() != events.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: times.len().min(events.len()),
        });
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let sorted_scores: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
    let sorted_times: Vec<f64> = order.iter().map(|&i| times[i]).collect();

    let mut concordant = 0.0;
    let mut comparable = 0u64;
    for (pos, &i) in order.iter().enumerate() {
        if !events[i] {
            continue;
        }
        let t = times[i];
        let s = scores[i];
        let first_later = pos + sorted_times[pos..].partition_point(|&tj| tj <= t);
        let later = &sorted_scores[first_later..];
        comparable += later.len() as u64;
        for &sj in later {
            if s > sj {
                concordant += 1.0;
            } else if s == sj {
                concordant += 0.5;
            }
        }
    }
    if comparable == 0 {
        return Err(Error::InvalidInput("no comparable pairs for the concordance index".into()));
    }
    Ok(concordant / comparable as f64)
}

/// Inverse-probability-of-censoring weighted Brier score at one time point.
#[derive(Debug, Clone)]
pub struct BrierScorer<'a> {
    times: &'a [f64],
    events: &'a [bool],
    censoring: StepFunction,
}

impl<'a> BrierScorer<'a> {
    /// Fits the censoring distribution `G` on the evaluation sample.
    pub fn new(times: &'a [f64], events: &'a [bool]) -> Result<Self> {
        let censoring = kaplan_meier_from(times, events, KmTarget::Censoring)?;
        Ok(Self { times, events, censoring })
    }

    pub fn censoring(&self) -> &StepFunction {
        &self.censoring
    }

    /// `predicted[i]` is `Ŝ(t | x_i)`.
    pub fn score(&self, predicted: &[f64], t: f64) -> Result<f64> {
        if predicted.len() != self.times.len() {
            return Err(Error::DimensionMismatch {
                expected: self.times.len(),
                got: predicted.len(),
            });
        }
        if !(t >= 0.0) {
            return Err(Error::InvalidInput(format!("brier time must be >= 0, got {t}")));
        }
        let g_t = self.censoring.eval(t);
        let mut total = 0.0;
        let mut counted = 0usize;
        let mut dropped = 0usize;
        for ((&ti, &ei), &s) in self.times.iter().zip(self.events).zip(predicted) {
            let term = if ti <= t && ei {
                let g = self.censoring.left_limit(ti);
                if g <= 0.0 {
                    dropped += 1;
                    continue;
                }
                s * s / g
            } else if ti > t {
                if g_t <= 0.0 {
                    dropped += 1;
                    continue;
                }
                (1.0 - s) * (1.0 - s) / g_t
            } else {
                0.0
            };
            total += term;
            counted += 1;
        }
        if dropped > 0 {
            warn!("brier score at t={t}: dropped {dropped} subjects with zero censoring survival");
        }
        if counted == 0 {
            return Err(Error::InvalidInput(format!("no usable subjects for the brier score at t={t}")));
        }
        Ok(total / counted as f64)
    }

    pub fn score_curves(&self, curves: &[StepFunction], t: f64) -> Result<f64> {
        let predicted: Vec<f64> = curves.iter().map(|c| c.eval(t)).collect();
        self.score(&predicted, t)
    }

    /// Brier score at every grid point.
    pub fn curve(&self, curves: &[StepFunction], grid: &[f64]) -> Result<Vec<f64>> {
        grid.iter().map(|&t| self.score_curves(curves, t)).collect()
    }

    /// Trapezoidal integral of the Brier score over `grid`, divided by the
    /// grid span.
    pub fn integrated(&self, curves: &[StepFunction], grid: &[f64]) -> Result<f64> {
        check_grid(grid)?;
        let values = self.curve(curves, grid)?;
        Ok(trapezoid_mean(grid, &values))
    }
}

pub fn brier_score(curves: &[StepFunction], times: &[f64], events: &[bool], t: f64) -> Result<f64> {
    BrierScorer::new(times, events)?.score_curves(curves, t)
}

pub fn integrated_brier(curves: &[StepFunction], times: &[f64], events: &[bool], grid: &[f64]) -> Result<f64> {
    BrierScorer::new(times, events)?.integrated(curves, grid)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("integration grid needs >= 2 strictly increasing points".into()));
    }
    Ok(())
}

fn trapezoid_mean(grid: &[f64], values: &[f64]) -> f64 {
    let area: f64 = grid
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| (t[1] - t[0]) * (v[0] + v[1]) * 0.5)
        .sum();
    area / (grid[grid.len() - 1] - grid[0])
}

/// 100 equally spaced points between the 5th and 95th percentiles of the
/// observed times.
pub fn default_ibs_grid(times: &[f64], points: usize) -> Result<Vec<f64>> {
    if times.is_empty() || points < 2 {
        return Err(Error::InvalidInput("grid needs observed times and >= 2 points".into()));
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = percentile_sorted(&sorted, 5.0);
    let hi = percentile_sorted(&sorted, 95.0);
    if !(hi > lo) {
        return Err(Error::InvalidInput("observed times have no spread".into()));
    }
    Ok((0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect())
}

/// Pearson correlation coefficient.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidInput("pearson correlation needs >= 2 points".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::InvalidInput("pearson correlation of a zero-variance vector".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Linear-interpolated percentile (`q` in 0..=100) of an ascending slice.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub point: f64,
    pub interval: Option<(f64, f64)>,
    pub samples: Option<Vec<f64>>,
}

impl MetricResult {
    pub fn point(point: f64) -> Self {
        Self {
            point,
            interval: None,
            samples: None,
        }
    }

    pub fn contains_point(&self) -> bool {
        self.interval.map_or(true, |(lo, hi)| lo <= self.point && self.point <= hi)
    }
}

/// Seed for resample `index`, attempt `attempt`, derived from the master seed.
fn resample_seed(master: u64, index: u64, attempt: u64) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = master
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(attempt.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const MAX_REDRAWS: u64 = 100;

/// Percentile bootstrap over `n` evaluation records.
///
/// `metric` receives resampled record indices; the model stays fixed. A
/// resample on which the metric fails is redrawn.
pub fn bootstrap_ci<F>(metric: F, n: usize, resamples: usize, seed: u64) -> Result<MetricResult>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    if resamples < 2 {
        return Err(Error::InvalidInput("bootstrap needs >= 2 resamples".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("bootstrap over an empty sample".into()));
    }
    let identity: Vec<usize> = (0..n).collect();
    let point = metric(&identity)?;

    let draws: Vec<Result<(f64, u64)>> = (0..resamples as u64)
        .into_par_iter()
        .map(|b| {
            let mut idx = vec![0usize; n];
            for attempt in 0..MAX_REDRAWS {
                let mut rng = ChaCha8Rng::seed_from_u64(resample_seed(seed, b, attempt));
                for slot in idx.iter_mut() {
                    *slot = rng.gen_range(0..n);
                }
                if let Ok(v) = metric(&idx) {
                    return Ok((v, attempt));
                }
            }
            Err(Error::InvalidInput(format!(
                "bootstrap resample {b} failed {MAX_REDRAWS} times"
            )))
        })
        .collect();

    let mut values = Vec::with_capacity(resamples);
    let mut redrawn = 0;
    for d in draws {
        let (v, attempts) = d?;
        redrawn += attempts;
        values.push(v);
    }
    if redrawn > 0 {
        warn!("bootstrap: {redrawn} resamples redrawn after metric failure");
    }
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(MetricResult {
        point,
        interval: Some((percentile_sorted(&sorted, 2.5), percentile_sorted(&sorted, 97.5))),
        samples: Some(values),
    })
}
