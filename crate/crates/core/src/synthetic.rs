//! Ground-truth scenario generator for oracle tests and the `synth` command.
//!
//! Scenarios are parameterized by a regime for the common index and one for
//! the country-specific indices. Age profiles follow a Gompertz-Makeham shape
//! with a small infant term. Every generated parameter set is already
//! normalized (loadings sum to one, indices centred in time) so a fit on
//! noise-free data can be compared against it directly.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{synthesize_cluster, ClusterDataset};
use crate::lilee::LiLeeParams;

/// Dynamics of one latent index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorRegime {
    /// Integrated process whose drift wanders slowly:
    /// `k_t = k_{t-1} + drift + amplitude * sin(2 pi t / period + phase) + N(0, sd^2)`.
    UnitRoot {
        drift: f64,
        amplitude: f64,
        period: f64,
        sd: f64,
    },
    /// Zero-mean AR(1): `k_t = phi k_{t-1} + N(0, sd^2)`.
    Stationary { phi: f64, sd: f64 },
    /// Straight line plus a zero-mean AR(1) deviation: `k_t = slope t + u_t`.
    TrendStationary { slope: f64, phi: f64, sd: f64 },
    /// Identically zero.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub countries: Vec<String>,
    pub first_year: i32,
    pub n_years: usize,
    pub age_max: u32,
    pub common: FactorRegime,
    pub specific: FactorRegime,
    /// Shared specific loadings and indices that sum to zero across
    /// countries, so the cross-country mean carries only the common term.
    pub coherent: bool,
    /// Gaussian noise on log rates.
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            countries: ["CHE", "SWE", "NOR", "NLD", "DEUTW", "JPN"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            first_year: 1956,
            n_years: 65,
            age_max: 90,
            common: FactorRegime::UnitRoot {
                drift: -1.5,
                amplitude: 0.6,
                period: 36.0,
                sd: 0.4,
            },
            specific: FactorRegime::UnitRoot {
                drift: 0.3,
                amplitude: 0.8,
                period: 30.0,
                sd: 0.15,
            },
            coherent: false,
            noise_sd: 0.01,
            seed: 2024,
        }
    }
}

impl ScenarioConfig {
    /// Near-linear specific factors: a straight trend with small
    /// mean-reverting deviations.
    pub fn near_stationary(seed: u64) -> Self {
        Self {
            specific: FactorRegime::TrendStationary {
                slope: 0.3,
                phi: 0.5,
                sd: 0.1,
            },
            seed,
            ..Self::default()
        }
    }

    pub fn unit_root(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    fn check(&self) -> Result<()> {
        if self.countries.len() < 2 {
            return Err(Error::InvalidArgument("a scenario needs at least 2 countries".into()));
        }
        if self.n_years < 3 {
            return Err(Error::InvalidArgument("a scenario needs at least 3 years".into()));
        }
        for r in [self.common, self.specific] {
            let ok = match r {
                FactorRegime::UnitRoot { period, sd, .. } => period > 0.0 && sd >= 0.0,
                FactorRegime::Stationary { phi, sd } | FactorRegime::TrendStationary { phi, sd, .. } => {
                    phi.abs() < 1.0 && sd >= 0.0
                }
                FactorRegime::Zero => true,
            };
            if !ok {
                return Err(Error::InvalidArgument(format!("invalid factor regime {r:?}")));
            }
        }
        Ok(())
    }
}

/// Gompertz-Makeham central rates with an infant term:
/// `makeham + a exp(b x) + infant exp(-1.5 x)`.
pub fn gompertz_makeham(ages: &[u32], a: f64, b: f64, makeham: f64, infant: f64) -> Vec<f64> {
    ages.iter()
        .map(|&x| {
            let x = x as f64;
            makeham + a * (b * x).exp() + infant * (-1.5 * x).exp()
        })
        .collect()
}

fn simulate(regime: FactorRegime, n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    match regime {
        FactorRegime::Zero => out.resize(n, 0.0),
        FactorRegime::Stationary { phi, sd } => {
            let mut k = sd / (1.0 - phi * phi).sqrt() * rng.sample::<f64, _>(StandardNormal);
            for _ in 0..n {
                out.push(k);
                k = phi * k + sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
        FactorRegime::TrendStationary { slope, phi, sd } => {
            let mut u = sd / (1.0 - phi * phi).sqrt() * rng.sample::<f64, _>(StandardNormal);
            for t in 0..n {
                out.push(slope * scale * t as f64 + u);
                u = phi * u + sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
        FactorRegime::UnitRoot {
            drift,
            amplitude,
            period,
            sd,
        } => {
            let drift = drift * scale;
            let amplitude = amplitude * rng.gen_range(0.75..1.25);
            let period = period * rng.gen_range(0.85..1.15);
            let phase = rng.gen_range(0.0..2.0 * PI);
            let mut k = 0.0;
            for t in 0..n {
                out.push(k);
                let wave = amplitude * (2.0 * PI * (t + 1) as f64 / period + phase).sin();
                k += drift + wave + sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    out
}

fn centre(v: &mut [f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
    m
}

/// Normalized ground-truth parameters for a scenario.
pub fn scenario_params(cfg: &ScenarioConfig) -> Result<LiLeeParams> {
    cfg.check()?;
    let n = cfg.countries.len();
    let ages: Vec<u32> = (0..=cfg.age_max).collect();
    let years: Vec<i32> = (0..cfg.n_years as i32).map(|t| cfg.first_year + t).collect();
    let (nx, nt) = (ages.len(), years.len());

    let mut shape_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shape_rng.set_stream(1);
    let mut common_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    common_rng.set_stream(2);
    let mut specific_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    specific_rng.set_stream(3);

    // common loading: heavier at young ages, strictly positive
    let raw: Vec<f64> = ages.iter().map(|&x| (-(x as f64) / 40.0).exp() + 0.3).collect();
    let total: f64 = raw.iter().sum();
    let common_age = Array1::from_iter(raw.iter().map(|v| v / total));

    let mut alpha = Array2::zeros((n, nx));
    for i in 0..n {
        let a = 2e-5 * shape_rng.gen_range(-0.25f64..0.25).exp();
        let b = 0.095 * shape_rng.gen_range(0.97..1.03);
        let rates = gompertz_makeham(&ages, a, b, 2e-4, 5e-3);
        for x in 0..nx {
            alpha[[i, x]] = rates[x].ln();
        }
    }

    let specific_profile = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let peak = rng.gen_range(45.0..75.0);
        let raw: Vec<f64> = ages
            .iter()
            .map(|&x| 0.4 + (-((x as f64 - peak) / 25.0).powi(2)).exp())
            .collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|v| v / s).collect()
    };
    let mut specific_age = Array2::zeros((n, nx));
    if cfg.coherent {
        let shared = specific_profile(&mut shape_rng);
        for i in 0..n {
            specific_age.row_mut(i).assign(&Array1::from(shared.clone()));
        }
    } else {
        for i in 0..n {
            specific_age
                .row_mut(i)
                .assign(&Array1::from(specific_profile(&mut shape_rng)));
        }
    }

    let mut k_common = simulate(cfg.common, nt, 1.0, &mut common_rng);
    let mut k_specific = Array2::zeros((nt, n));
    for i in 0..n {
        let scale = if specific_rng.gen_bool(0.5) { 1.0 } else { -1.0 } * specific_rng.gen_range(0.5..1.5);
        let path = simulate(cfg.specific, nt, scale, &mut specific_rng);
        for t in 0..nt {
            k_specific[[t, i]] = path[t];
        }
    }
    if cfg.coherent {
        for t in 0..nt {
            let m = k_specific.row(t).sum() / n as f64;
            k_specific.row_mut(t).iter_mut().for_each(|v| *v -= m);
        }
    }

    // fold the time means into alpha
    let mk = centre(&mut k_common);
    for i in 0..n {
        let mut col = k_specific.column(i).to_vec();
        let ms = centre(&mut col);
        for t in 0..nt {
            k_specific[[t, i]] = col[t];
        }
        for x in 0..nx {
            alpha[[i, x]] += common_age[x] * mk + specific_age[[i, x]] * ms;
        }
    }

    let params = LiLeeParams {
        countries: cfg.countries.clone(),
        ages,
        years,
        alpha,
        common_age,
        common_index: Array1::from(k_common),
        specific_age,
        specific_index: k_specific,
    };
    params.check_dims()?;
    Ok(params)
}

/// Ground truth plus the noisy observed cluster.
pub fn generate(cfg: &ScenarioConfig) -> Result<(LiLeeParams, ClusterDataset)> {
    let params = scenario_params(cfg)?;
    let data = synthesize_cluster(&params, cfg.noise_sd, cfg.seed)?;
    Ok((params, data))
}
