//! Synthetic right-censored data from an exponential Cox model.
//!
//! Covariates are i.i.d. `U[-1, 1)`. The latent event time of a subject with
//! true risk `h(x)` is exponential with rate `λ0 · exp(h(x))`. Censoring
//! times are exponential with a rate solved by bisection so that the expected
//! censored fraction matches the target.

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::SurvivalDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskKind {
    Linear,
    Gaussian,
}

impl std::str::FromStr for RiskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(RiskKind::Linear),
            "gaussian" => Ok(RiskKind::Gaussian),
            other => Err(Error::InvalidInput(format!("unknown risk kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub dim: usize,
    pub risk: RiskKind,
    pub lambda_max: f64,
    pub radius: f64,
    pub baseline_rate: f64,
    pub censor_fraction: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(risk: RiskKind, seed: u64) -> Self {
        Self {
            n_train: 4000,
            n_valid: 1000,
            n_test: 1000,
            dim: 10,
            risk,
            lambda_max: 5.0,
            radius: 0.5,
            baseline_rate: 1.0,
            censor_fraction: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_train == 0 || self.n_valid == 0 || self.n_test == 0 {
            return bad("every split needs n >= 1".into());
        }
        if self.dim < 2 {
            return bad(format!("dim must be >= 2, got {}", self.dim));
        }
        if !(self.lambda_max > 1.0) {
            return bad(format!("lambda_max must be > 1, got {}", self.lambda_max));
        }
        if !(self.radius > 0.0) {
            return bad(format!("radius must be > 0, got {}", self.radius));
        }
        if !(self.baseline_rate > 0.0) {
            return bad(format!("baseline rate must be > 0, got {}", self.baseline_rate));
        }
        if !(0.0..1.0).contains(&self.censor_fraction) {
            return bad(format!("censor fraction must be in [0, 1), got {}", self.censor_fraction));
        }
        Ok(())
    }

    /// True log-risk of a covariate vector; only `x[0]` and `x[1]` matter.
    pub fn true_risk(&self, x: &[f64]) -> f64 {
        true_risk(x, self.risk, self.lambda_max, self.radius)
    }
}

pub fn true_risk(x: &[f64], kind: RiskKind, lambda_max: f64, radius: f64) -> f64 {
    match kind {
        RiskKind::Linear => x[0] + 2.0 * x[1],
        RiskKind::Gaussian => {
            lambda_max.ln() * (-(x[0] * x[0] + x[1] * x[1]) / (2.0 * radius * radius)).exp()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimSplit {
    pub data: SurvivalDataset,
    pub true_risk: Vec<f64>,
    pub death_times: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub config: SimConfig,
    /// Exponential censoring rate; zero when no censoring was requested.
    pub censoring_rate: f64,
    pub train: SimSplit,
    pub valid: SimSplit,
    pub test: SimSplit,
}

const CALIBRATION_SAMPLES: usize = 200_000;

/// Censoring rate `c` with `E[c / (c + λ(x))] = target` over `x ~ U[-1,1)^d`.
pub fn calibrate_censoring_rate(config: &SimConfig) -> Result<f64> {
    config.validate()?;
    if config.censor_fraction == 0.0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xC0FF_EE00_D15E_A5E5);
    let mut x = [0.0; 2];
    let rates: Vec<f64> = (0..CALIBRATION_SAMPLES)
        .map(|_| {
            x[0] = rng.gen_range(-1.0..1.0);
            x[1] = rng.gen_range(-1.0..1.0);
            config.baseline_rate * config.true_risk(&x).exp()
        })
        .collect();
    let frac = |c: f64| rates.iter().map(|r| c / (c + r)).sum::<f64>() / rates.len() as f64;

    let target = config.censor_fraction;
    let (mut lo, mut hi) = (1e-12f64, 1.0f64);
    while frac(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if frac(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-13 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}

fn draw_split(config: &SimConfig, n: usize, censoring_rate: f64, stream: u64) -> Result<SimSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let d = config.dim;
    let mut x = Vec::with_capacity(n * d);
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    let mut risks = Vec::with_capacity(n);
    let mut deaths = Vec::with_capacity(n);
    for _ in 0..n {
        let start = x.len();
        for _ in 0..d {
            x.push(rng.gen_range(-1.0..1.0));
        }
        let risk = config.true_risk(&x[start..]);
        let rate = config.baseline_rate * risk.exp();
        // 1 - U lies in (0, 1], so the log is finite
        let death = -(1.0 - rng.gen::<f64>()).ln() / rate;
        let censor = if censoring_rate > 0.0 {
            -(1.0 - rng.gen::<f64>()).ln() / censoring_rate
        } else {
            f64::INFINITY
        };
        times.push(death.min(censor));
        events.push(death <= censor);
        risks.push(risk);
        deaths.push(death);
    }
    Ok(SimSplit {
        data: SurvivalDataset::from_flat(x, d, times, events)?,
        true_risk: risks,
        death_times: deaths,
    })
}

/// Draws train, validation and test splits.
pub fn simulate(config: &SimConfig) -> Result<SimulatedData> {
    config.validate()?;
    let censoring_rate = calibrate_censoring_rate(config)?;
    let train = draw_split(config, config.n_train, censoring_rate, 1)?;
    let valid = draw_split(config, config.n_valid, censoring_rate, 2)?;
    let test = draw_split(config, config.n_test, censoring_rate, 3)?;
    info!(
        "simulated {:?} risk: exponential censoring rate {:.6} for target fraction {}, observed train fraction {:.4}",
        config.risk,
        censoring_rate,
        config.censor_fraction,
        train.data.censored_fraction()
    );
    Ok(SimulatedData {
        config: config.clone(),
        censoring_rate,
        train,
        valid,
        test,
    })
}

/// Sidecar metadata written next to generated CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSidecar {
    pub version: u32,
    pub config: SimConfig,
    pub censoring_mechanism: String,
    pub censoring_rate: f64,
    pub observed_censored_fraction: [f64; 3],
    pub true_risk_train: Vec<f64>,
    pub true_risk_valid: Vec<f64>,
    pub true_risk_test: Vec<f64>,
}

impl SimulatedData {
    pub fn sidecar(&self) -> SimSidecar {
        SimSidecar {
            version: 1,
            config: self.config.clone(),
            censoring_mechanism: if self.censoring_rate > 0.0 {
                "exponential, rate calibrated by bisection to the target fraction".into()
            } else {
                "none".into()
            },
            censoring_rate: self.censoring_rate,
            observed_censored_fraction: [
                self.train.data.censored_fraction(),
                self.valid.data.censored_fraction(),
                self.test.data.censored_fraction(),
            ],
            true_risk_train: self.train.true_risk.clone(),
            true_risk_valid: self.valid.true_risk.clone(),
            true_risk_test: self.test.true_risk.clone(),
        }
    }
}
