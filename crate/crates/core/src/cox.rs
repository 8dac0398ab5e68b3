//! Negative Cox partial log-likelihood and its gradient with respect to the
//! risk scores.
//!
//! The risk set of an event at `T_n` is every sample with time `>= T_n`
//! (Breslow ties). Losses are unnormalized sums over event anchors; callers
//! that want a per-event mean divide by [`CoxLoss::n_events`].

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CoxLoss {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub n_events: usize,
}

/// Scores, times and events of one mini-batch. The risk set of each event is
/// restricted to the batch.
#[derive(Debug, Clone, Copy)]
pub struct CoxBatch<'a> {
    pub scores: &'a [f64],
    pub times: &'a [f64],
    pub events: &'a [bool],
}

impl<'a> CoxBatch<'a> {
    pub fn new(scores: &'a [f64], times: &'a [f64], events: &'a [bool]) -> Result<Self> {
        if scores.len() != times.len() || times.len() != events.len() {
            return Err(Error::DimensionMismatch {
                expected: scores.len(),
                got: times.len().min(events.len()),
            });
        }
        Ok(Self { scores, times, events })
    }
}

/// Streaming log-sum-exp that rescales when a new maximum arrives.
#[derive(Debug, Clone, Copy)]
struct RunningLse {
    max: f64,
    sum: f64,
}

impl RunningLse {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    fn push(&mut self, v: f64) {
        if v > self.max {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.sum += (v - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

/// `-Σ_{n: E_n} (g_n - log Σ_{k: T_k >= T_n} exp(g_k))` over the whole sample.
pub fn cox_nll_full(scores: &[f64], times: &[f64], events: &[bool]) -> Result<CoxLoss> {
    cox_nll_batch(&CoxBatch::new(scores, times, events)?)
}

/// `Σ_{n in batch: E_n} log Σ_{k in batch: T_k >= T_n} exp(g_k - g_n)`.
pub fn cox_nll_batch(batch: &CoxBatch<'_>) -> Result<CoxLoss> {
    let CoxBatch { scores, times, events } = *batch;
    let n = scores.len();
    let n_events = events.iter().filter(|&&e| e).count();
    if n_events == 0 {
        return Err(Error::NoEvents("cox batch".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));

    // Descending time: risk sets grow. Record each event's log-denominator.
    let mut lse = RunningLse::new();
    let mut log_denom = vec![0.0; n];
    let mut loss = 0.0;
    let mut i = 0;
    while i < n {
        let t = times[order[i]];
        let start = i;
        while i < n && times[order[i]] == t {
            lse.push(scores[order[i]]);
            i += 1;
        }
        let value = lse.value();
        for &k in &order[start..i] {
            if events[k] {
                log_denom[k] = value;
                loss += value - scores[k];
            }
        }
    }

    // Ascending time: accumulate log Σ_{n: E_n, T_n <= T_k} exp(-logdenom_n).
    let mut grad = vec![0.0; n];
    let mut acc = RunningLse::new();
    let mut i = n;
    while i > 0 {
        let t = times[order[i - 1]];
        let end = i;
        while i > 0 && times[order[i - 1]] == t {
            let k = order[i - 1];
            if events[k] {
                acc.push(-log_denom[k]);
            }
            i -= 1;
        }
        let a = acc.value();
        for &k in &order[i..end] {
            let inflow = if a.is_finite() { (scores[k] + a).exp() } else { 0.0 };
            grad[k] = inflow - if events[k] { 1.0 } else { 0.0 };
        }
    }

    Ok(CoxLoss { loss, grad, n_events })
}
