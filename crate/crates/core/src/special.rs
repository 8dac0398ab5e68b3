//! Chi-square tail probabilities for log-rank p-values.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Survival function of the chi-square distribution.
pub fn chi_square_sf(statistic: f64, dof: f64) -> f64 {
    if statistic.is_nan() {
        return f64::NAN;
    }
    let dist = ChiSquared::new(dof).expect("degrees of freedom must be positive");
    dist.sf(statistic.max(0.0))
}
