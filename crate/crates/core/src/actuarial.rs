//! Period life tables from reconstructed common-factor surfaces.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::ForecastEnsemble;
use crate::lilee::LiLeeParams;

/// Rates above this give `q > 1` under the midpoint approximation.
pub const Q_CLAMP_RATE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifeTable {
    pub ages: Vec<u32>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub l: Vec<f64>,
    pub e0: f64,
}

/// `m_x = exp(alpha_{x,i} + B_x K)`; the specific term is left out.
pub fn reconstruct_surface(params: &LiLeeParams, country: usize, k_value: f64) -> Vec<f64> {
    params
        .alpha
        .row(country)
        .iter()
        .zip(params.common_age.iter())
        .map(|(a, b)| (a + b * k_value).exp())
        .collect()
}

/// Closed table over the given rates, ages `0..m.len()`:
/// `q = m / (1 + m/2)`, `l_0 = 1`, `e0 = sum l_x - 1/2`.
pub fn life_table(m: &[f64]) -> Result<LifeTable> {
    if m.is_empty() {
        return Err(Error::InvalidArgument("life table needs at least one age".into()));
    }
    if let Some(x) = m.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!("rate {} at age {x} is not a finite non-negative number", m[x])));
    }
    let mut clamped = Vec::new();
    let q: Vec<f64> = m
        .iter()
        .enumerate()
        .map(|(x, &v)| {
            if v > Q_CLAMP_RATE {
                clamped.push(x);
                1.0
            } else {
                v / (1.0 + 0.5 * v)
            }
        })
        .collect();
    if !clamped.is_empty() {
        log::warn!("q clamped to 1 at ages {clamped:?} (m > {Q_CLAMP_RATE})");
    }
    let p: Vec<f64> = q.iter().map(|q| 1.0 - q).collect();
    let mut l = Vec::with_capacity(m.len());
    let mut surv = 1.0;
    for pv in &p {
        l.push(surv);
        surv *= pv;
    }
    let e0 = l.iter().sum::<f64>() - 0.5;
    Ok(LifeTable {
        ages: (0..m.len() as u32).collect(),
        q,
        p,
        l,
        e0,
    })
}

pub fn e0_of(m: &[f64]) -> Result<f64> {
    Ok(life_table(m)?.e0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Monotonicity {
    Pass,
    /// First age `x` with `m_{x+1} < m_x`.
    Fail { age: u32 },
}

/// Non-decreasing rates over `[from, to]`, checked pairwise from `from` up to
/// `to - 1`. `m` is indexed by age.
pub fn monotonicity_check(m: &[f64], from: u32, to: u32) -> Result<Monotonicity> {
    if to as usize >= m.len() || from >= to {
        return Err(Error::InvalidArgument(format!(
            "age range [{from}, {to}] not covered by {} rates",
            m.len()
        )));
    }
    for x in from..to {
        if m[x as usize + 1] < m[x as usize] {
            return Ok(Monotonicity::Fail { age: x });
        }
    }
    Ok(Monotonicity::Pass)
}

/// e0 for every path and horizon of the common factor (column 0).
pub fn e0_paths(ensemble: &ForecastEnsemble, params: &LiLeeParams, country: usize) -> Result<Array2<f64>> {
    if country >= params.n_countries() {
        return Err(Error::InvalidArgument(format!("country index {country} out of range")));
    }
    let (s, h, _) = ensemble.levels.dim();
    let rows: Vec<Vec<f64>> = (0..s)
        .into_par_iter()
        .map(|p| {
            (0..h)
                .map(|t| e0_of(&reconstruct_surface(params, country, ensemble.levels[[p, t, 0]])))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(Array2::from_shape_vec((s, h), rows.concat()).expect("shape"))
}

/// Summary row per country: reconstructed e0 at the origin and the
/// ensemble distribution at the final horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E0Summary {
    pub country: String,
    pub origin_year: i32,
    pub e0_origin: f64,
    pub e0_observed: Option<f64>,
    pub end_year: i32,
    pub e0_median: f64,
    pub e0_lower: f64,
    pub e0_upper: f64,
    pub net_gain: f64,
}

/// Origin e0 comes from the common factor at the origin; `observed` is
/// the life table of the raw final-year rates when available.
pub fn e0_summary(
    ensemble: &ForecastEnsemble,
    params: &LiLeeParams,
    country: usize,
    observed_rates: Option<&[f64]>,
    band: f64,
) -> Result<E0Summary> {
    let paths = e0_paths(ensemble, params, country)?;
    let last = paths.column(paths.ncols() - 1).to_vec();
    let e0_origin = e0_of(&reconstruct_surface(params, country, ensemble.origin[0]))?;
    let e0_median = crate::stats::quantile(&last, 0.5);
    Ok(E0Summary {
        country: params.countries[country].clone(),
        origin_year: ensemble.origin_year,
        e0_origin,
        e0_observed: observed_rates.map(e0_of).transpose()?,
        end_year: ensemble.origin_year + ensemble.horizon() as i32,
        e0_median,
        e0_lower: crate::stats::quantile(&last, (1.0 - band) / 2.0),
        e0_upper: crate::stats::quantile(&last, (1.0 + band) / 2.0),
        net_gain: e0_median - e0_origin,
    })
}
