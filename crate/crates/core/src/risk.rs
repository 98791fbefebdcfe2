//! Upper-tail risk measures on e0 samples and the reverse stress test.
//!
//! Longevity risk is adverse when lifetimes are longer, so both VaR and ES
//! read the right tail.

use serde::{Deserialize, Serialize};

use crate::actuarial::{e0_of, reconstruct_surface};
use crate::error::{Error, Result};
use crate::lilee::LiLeeParams;
use crate::stats;

pub const VAR_LEVEL: f64 = 0.995;
pub const ES_LEVEL: f64 = 0.99;
pub const SHOCK_GRID: [f64; 4] = [0.05, 0.10, 0.15, 0.20];

fn check_sample(sample: &[f64]) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::InvalidArgument("risk measure on an empty sample".into()));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in risk sample".into()));
    }
    Ok(())
}

/// Linear-interpolation quantile at `level`.
pub fn value_at_risk(sample: &[f64], level: f64) -> Result<f64> {
    check_sample(sample)?;
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::InvalidArgument(format!("level {level} outside [0, 1]")));
    }
    Ok(stats::quantile(sample, level))
}

/// Size of the upper tail used by [`expected_shortfall`]: `ceil(n (1 - level))`.
pub fn tail_size(n: usize, level: f64) -> usize {
    // guard against 1000 * (1 - 0.99) = 10.000000000000009
    (n as f64 * (1.0 - level) - 1e-9).ceil().max(0.0) as usize
}

/// Mean of the `ceil(n (1 - level))` largest values.
pub fn expected_shortfall(sample: &[f64], level: f64) -> Result<f64> {
    check_sample(sample)?;
    let k = tail_size(sample.len(), level);
    if k == 0 || k > sample.len() {
        return Err(Error::InvalidArgument(format!(
            "ES tail at level {level} is empty for n = {}",
            sample.len()
        )));
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s[s.len() - k..].iter().sum::<f64>() / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScrReport {
    pub mean_e0: f64,
    pub var_99_5: f64,
    pub es_99_0: f64,
    pub scr_var: f64,
    pub scr_es: f64,
}

/// Tail measures of a terminal-horizon e0 sample relative to its mean.
pub fn scr(sample: &[f64]) -> Result<ScrReport> {
    let mean_e0 = stats::mean(sample);
    let var_99_5 = value_at_risk(sample, VAR_LEVEL)?;
    let es_99_0 = expected_shortfall(sample, ES_LEVEL)?;
    Ok(ScrReport {
        mean_e0,
        var_99_5,
        es_99_0,
        scr_var: var_99_5 - mean_e0,
        scr_es: es_99_0 - mean_e0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressPoint {
    pub shock: f64,
    pub delta_e0: f64,
    /// `delta_e0 / shock`, years per unit shock.
    pub sensitivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReverseStress {
    pub baseline_e0: f64,
    pub points: Vec<StressPoint>,
    pub sensitivity: f64,
    pub sensitivity_cv: f64,
    /// Uniform rate reduction that uses up the whole SCR.
    pub delta_star: f64,
}

/// Reverse stress on an explicit baseline rate vector.
pub fn reverse_stress_rates(baseline: &[f64], scr_es: f64, shocks: &[f64]) -> Result<ReverseStress> {
    if !(scr_es > 0.0) {
        return Err(Error::Degenerate(format!("SCR must be positive for a reverse stress, got {scr_es}")));
    }
    if shocks.len() < 2 || shocks.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
        return Err(Error::InvalidArgument("shock grid needs at least 2 values in (0, 1)".into()));
    }
    let baseline_e0 = e0_of(baseline)?;
    let points = shocks
        .iter()
        .map(|&d| {
            let shocked: Vec<f64> = baseline.iter().map(|m| (1.0 - d) * m).collect();
            let delta_e0 = e0_of(&shocked)? - baseline_e0;
            Ok(StressPoint {
                shock: d,
                delta_e0,
                sensitivity: delta_e0 / d,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sens: Vec<f64> = points.iter().map(|p| p.sensitivity).collect();
    let sensitivity = stats::mean(&sens);
    if !(sensitivity > 0.0) {
        return Err(Error::Degenerate(format!("non-positive e0 sensitivity {sensitivity}")));
    }
    Ok(ReverseStress {
        baseline_e0,
        sensitivity_cv: stats::sample_sd(&sens) / sensitivity,
        sensitivity,
        delta_star: scr_es / sensitivity,
        points,
    })
}

/// Reverse stress around the reconstructed surface at the mean terminal
/// common factor.
pub fn reverse_stress(
    params: &LiLeeParams,
    mean_k_terminal: f64,
    country: usize,
    scr_es: f64,
    shocks: &[f64],
) -> Result<ReverseStress> {
    reverse_stress_rates(&reconstruct_surface(params, country, mean_k_terminal), scr_es, shocks)
}
