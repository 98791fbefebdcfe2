//! Two-step SVD Li-Lee decomposition and the linear benchmark forecasters.
//!
//! Normalization follows the Lee-Carter convention for both the common pair
//! and every specific pair: age loadings sum to one and the time index sums to
//! zero over the fitting window.

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ClusterDataset;
use crate::stats;

pub const PARAMS_FORMAT: &str = "hybridlift/lilee-params";
pub const PARAMS_VERSION: u32 = 1;

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 10_000;
/// A centered matrix whose Frobenius norm is below this fraction of the raw
/// surface norm is treated as identically zero.
const ZERO_REL_TOL: f64 = 1e-10;

/// Parameters of `y[x,t,i] = alpha[i,x] + B[x] K[t] + b[i,x] k[t,i] + eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiLeeParams {
    pub countries: Vec<String>,
    pub ages: Vec<u32>,
    pub years: Vec<i32>,
    /// countries x ages
    pub alpha: Array2<f64>,
    /// `B_x`, length ages
    pub common_age: Array1<f64>,
    /// `K_t`, length years
    pub common_index: Array1<f64>,
    /// `b_{x,i}`, countries x ages
    pub specific_age: Array2<f64>,
    /// `k_{t,i}`, years x countries
    pub specific_index: Array2<f64>,
}

impl LiLeeParams {
    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    pub fn check_dims(&self) -> Result<()> {
        let (n, x, t) = (self.countries.len(), self.ages.len(), self.years.len());
        let ok = self.alpha.dim() == (n, x)
            && self.common_age.len() == x
            && self.common_index.len() == t
            && self.specific_age.dim() == (n, x)
            && self.specific_index.dim() == (t, n);
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "parameter shapes inconsistent with {n} countries, {x} ages, {t} years"
            )))
        }
    }

    pub fn country_index(&self, country: &str) -> Option<usize> {
        self.countries.iter().position(|c| c == country)
    }

    /// `alpha + B K + b k` for one country, ages x years.
    pub fn fitted_log_rates(&self, country: usize) -> Array2<f64> {
        let (x, t) = (self.ages.len(), self.years.len());
        Array2::from_shape_fn((x, t), |(a, y)| {
            self.alpha[[country, a]]
                + self.common_age[a] * self.common_index[y]
                + self.specific_age[[country, a]] * self.specific_index[[y, country]]
        })
    }

    pub fn factor_panel(&self) -> FactorPanel {
        let t = self.years.len();
        let n = self.countries.len();
        let mut values = Array2::zeros((t, n + 1));
        values.column_mut(0).assign(&self.common_index);
        for i in 0..n {
            values.column_mut(i + 1).assign(&self.specific_index.column(i));
        }
        let mut labels = vec!["K".to_string()];
        labels.extend(self.countries.iter().map(|c| format!("k_{c}")));
        FactorPanel {
            years: self.years.clone(),
            labels,
            values,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            format: &'a str,
            version: u32,
            params: &'a LiLeeParams,
        }
        Ok(serde_json::to_string_pretty(&Doc {
            format: PARAMS_FORMAT,
            version: PARAMS_VERSION,
            params: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            format: String,
            version: u32,
            params: LiLeeParams,
        }
        let doc: Doc = serde_json::from_str(text)?;
        if doc.format != PARAMS_FORMAT || doc.version != PARAMS_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported parameter document {} v{}",
                doc.format, doc.version
            )));
        }
        doc.params.check_dims()?;
        Ok(doc.params)
    }
}

/// Latent factor levels over years; column 0 is `K_t`, column `1 + i` is
/// `k_{t,i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorPanel {
    pub years: Vec<i32>,
    pub labels: Vec<String>,
    /// years x (N + 1)
    pub values: Array2<f64>,
}

impl FactorPanel {
    pub fn new(years: Vec<i32>, labels: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (years.len(), labels.len()) {
            return Err(Error::Dimension(format!(
                "panel values {:?} vs {} years x {} labels",
                values.dim(),
                years.len(),
                labels.len()
            )));
        }
        if years.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::Structure("panel years must be contiguous".into()));
        }
        Ok(Self { years, labels, values })
    }

    pub fn n_factors(&self) -> usize {
        self.values.ncols()
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    pub fn last_year(&self) -> i32 {
        *self.years.last().expect("non-empty panel")
    }

    pub fn last_row(&self) -> Vec<f64> {
        self.values.row(self.len() - 1).to_vec()
    }

    /// Rows with `year <= last`.
    pub fn until(&self, last: i32) -> Result<Self> {
        let n = self.years.iter().take_while(|&&y| y <= last).count();
        if n == 0 {
            return Err(Error::InvalidArgument(format!("no panel rows up to {last}")));
        }
        Ok(Self {
            years: self.years[..n].to_vec(),
            labels: self.labels.clone(),
            values: self.values.slice(ndarray::s![..n, ..]).to_owned(),
        })
    }

    /// Appends forecast rows (h x factors) continuing the year sequence.
    pub fn extended(&self, rows: &Array2<f64>) -> Self {
        let mut values = self.values.clone();
        for r in rows.rows() {
            values.push_row(r).expect("matching width");
        }
        let start = self.last_year() + 1;
        let mut years = self.years.clone();
        years.extend((0..rows.nrows() as i32).map(|h| start + h));
        Self {
            years,
            labels: self.labels.clone(),
            values,
        }
    }
}

/// Leading singular triple `M ~ s u v'` with unit `u`, `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularPair {
    pub u: Array1<f64>,
    pub s: f64,
    pub v: Array1<f64>,
}

/// Leading singular pair by power iteration on `M'M`. Sign is fixed so that
/// `sum(u) >= 0`.
pub fn leading_singular_pair(m: ArrayView2<f64>) -> Result<SingularPair> {
    let (rows, cols) = m.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::Rank("empty matrix".into()));
    }
    let fro = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    if fro == 0.0 || !fro.is_finite() {
        return Err(Error::Rank(format!("matrix norm is {fro}")));
    }
    let gram = m.t().dot(&m);

    // Start from the largest-norm row: it lies in the row space, so it has a
    // component along the leading right singular vector.
    let start = (0..rows)
        .max_by(|&a, &b| {
            let na: f64 = m.row(a).iter().map(|v| v * v).sum();
            let nb: f64 = m.row(b).iter().map(|v| v * v).sum();
            na.total_cmp(&nb)
        })
        .unwrap();
    let mut v = m.row(start).to_owned();
    normalize(&mut v);

    let mut last_delta = f64::INFINITY;
    let mut converged = false;
    for _ in 0..POWER_MAX_ITER {
        let mut next = gram.dot(&v);
        if normalize(&mut next) == 0.0 {
            return Err(Error::Rank("iterate collapsed to zero".into()));
        }
        last_delta = (&next - &v).iter().map(|d| d * d).sum::<f64>().sqrt();
        v = next;
        if last_delta <= POWER_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Iteration {
            iterations: POWER_MAX_ITER,
            last_delta,
        });
    }
    let mut u = m.dot(&v);
    let s = normalize(&mut u);
    if s == 0.0 {
        return Err(Error::Rank("leading singular value is zero".into()));
    }
    if u.sum() < 0.0 {
        u.mapv_inplace(|x| -x);
        v.mapv_inplace(|x| -x);
    }
    Ok(SingularPair { u, s, v })
}

fn normalize(v: &mut Array1<f64>) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.mapv_inplace(|x| x / n);
    }
    n
}

/// Rank-1 factor pair of a row-centered matrix under the sum-to-one /
/// sum-to-zero normalization. A numerically zero matrix yields a uniform age
/// loading and a zero index.
fn normalized_pair(centered: ArrayView2<f64>, reference_norm: f64) -> Result<(Array1<f64>, Array1<f64>)> {
    let (rows, cols) = centered.dim();
    let fro = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
    if fro <= ZERO_REL_TOL * reference_norm.max(1.0) {
        return Ok((Array1::from_elem(rows, 1.0 / rows as f64), Array1::zeros(cols)));
    }
    let pair = leading_singular_pair(centered)?;
    let total = pair.u.sum();
    if total.abs() < 1e-8 {
        return Err(Error::Degenerate(
            "age loading sums to zero; sum-to-one normalization undefined".into(),
        ));
    }
    let age = pair.u.mapv(|x| x / total);
    let mut index = pair.v.mapv(|x| x * pair.s * total);
    let mean = index.mean().unwrap();
    index.mapv_inplace(|k| k - mean);
    Ok((age, index))
}

#[derive(Debug, Clone)]
pub struct LiLeeFit {
    pub params: LiLeeParams,
    /// Per-country residual `eps`, ages x years.
    pub residuals: Vec<Array2<f64>>,
}

/// Fits the decomposition by two rank-1 SVD steps: the common pair from the
/// cross-country mean of centered log rates, then one specific pair per
/// country from what the common pair leaves behind.
pub fn fit_lilee(data: &ClusterDataset) -> Result<LiLeeFit> {
    let ages = data.ages().to_vec();
    let years = data.years().to_vec();
    if years.len() < 3 {
        return Err(Error::Rank(format!("need at least 3 years, got {}", years.len())));
    }
    if ages.len() < 2 {
        return Err(Error::Rank(format!("need at least 2 ages, got {}", ages.len())));
    }
    let n = data.n_countries();
    let (nx, nt) = (ages.len(), years.len());

    let mut alpha = Array2::zeros((n, nx));
    let mut centered: Vec<Array2<f64>> = Vec::with_capacity(n);
    let mut raw_norm: f64 = 0.0;
    for (i, s) in data.surfaces.iter().enumerate() {
        let a = s.log_m.mean_axis(Axis(1)).unwrap();
        let c = &s.log_m - &a.view().insert_axis(Axis(1));
        raw_norm = raw_norm.max(s.log_m.iter().map(|v| v * v).sum::<f64>().sqrt());
        alpha.row_mut(i).assign(&a);
        centered.push(c);
    }

    let mut mean_surface = Array2::<f64>::zeros((nx, nt));
    for c in &centered {
        mean_surface += c;
    }
    mean_surface /= n as f64;
    let (common_age, common_index) = normalized_pair(mean_surface.view(), raw_norm)?;
    let common = outer(&common_age, &common_index);

    let step2: Vec<(Array1<f64>, Array1<f64>, Array2<f64>)> = centered
        .par_iter()
        .map(|c| {
            let r = c - &common;
            let (b, k) = normalized_pair(r.view(), raw_norm)?;
            let eps = &r - &outer(&b, &k);
            Ok((b, k, eps))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut specific_age = Array2::zeros((n, nx));
    let mut specific_index = Array2::zeros((nt, n));
    let mut residuals = Vec::with_capacity(n);
    for (i, (b, k, eps)) in step2.into_iter().enumerate() {
        specific_age.row_mut(i).assign(&b);
        specific_index.column_mut(i).assign(&k);
        residuals.push(eps);
    }

    Ok(LiLeeFit {
        params: LiLeeParams {
            countries: data.countries(),
            ages,
            years,
            alpha,
            common_age,
            common_index,
            specific_age,
            specific_index,
        },
        residuals,
    })
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

/// Random walk with drift fitted to first differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomWalkDrift {
    pub drift: f64,
    pub sigma: f64,
}

pub fn fit_rwd(series: &[f64]) -> Result<RandomWalkDrift> {
    if series.len() < 3 {
        return Err(Error::InsufficientHistory(format!(
            "random walk fit needs 3 points, got {}",
            series.len()
        )));
    }
    let diffs: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(RandomWalkDrift {
        drift: stats::mean(&diffs),
        sigma: stats::sample_sd(&diffs),
    })
}

/// Zero-mean AR(1), `k_t = phi k_{t-1} + xi_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1 {
    pub phi: f64,
    pub xi_sd: f64,
}

pub fn fit_ar1(series: &[f64]) -> Result<Ar1> {
    if series.len() < 3 {
        return Err(Error::InsufficientHistory(format!(
            "AR(1) fit needs 3 points, got {}",
            series.len()
        )));
    }
    let lagged = &series[..series.len() - 1];
    let current = &series[1..];
    let sxx: f64 = lagged.iter().map(|x| x * x).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("AR(1) regressor has zero variance".into()));
    }
    let sxy: f64 = lagged.iter().zip(current).map(|(x, y)| x * y).sum();
    let phi = sxy / sxx;
    let resid: Vec<f64> = lagged.iter().zip(current).map(|(x, y)| y - phi * x).collect();
    let dof = (resid.len() - 1) as f64;
    let xi_sd = (resid.iter().map(|e| e * e).sum::<f64>() / dof).sqrt();
    Ok(Ar1 { phi, xi_sd })
}

/// RWD on `K_t` plus one AR(1) per specific factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearForecaster {
    pub common: RandomWalkDrift,
    pub specific: Vec<Ar1>,
}

impl LinearForecaster {
    /// Fits on all rows of `panel` (callers slice the training window first).
    pub fn fit(panel: &FactorPanel) -> Result<Self> {
        let common = fit_rwd(&panel.values.column(0).to_vec())?;
        let specific = (1..panel.n_factors())
            .map(|j| fit_ar1(&panel.values.column(j).to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { common, specific })
    }

    pub fn n_factors(&self) -> usize {
        self.specific.len() + 1
    }

    /// One-step conditional mean of the next first difference given the
    /// current levels.
    pub fn predicted_step(&self, levels: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_factors());
        out.push(self.common.drift);
        for (ar, &k) in self.specific.iter().zip(&levels[1..]) {
            out.push((ar.phi - 1.0) * k);
        }
        out
    }

    /// Central projection: `K_T + h d` and `phi^h k_T`; rows are horizons 1..=H.
    pub fn forecast_central(&self, last: &[f64], horizon: usize) -> Array2<f64> {
        let mut out = Array2::zeros((horizon, self.n_factors()));
        for h in 0..horizon {
            let steps = (h + 1) as f64;
            out[[h, 0]] = last[0] + steps * self.common.drift;
            for (j, ar) in self.specific.iter().enumerate() {
                out[[h, j + 1]] = ar.phi.powi(h as i32 + 1) * last[j + 1];
            }
        }
        out
    }

    /// Simulated paths with Gaussian innovations; `sims x horizon x factors`.
    /// Path `s` draws from stream `s` of the seeded generator.
    pub fn forecast_stochastic(&self, last: &[f64], horizon: usize, n_sims: usize, seed: u64) -> Array3<f64> {
        let d = self.n_factors();
        let mut out = Array3::zeros((n_sims, horizon, d));
        for s in 0..n_sims {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let mut level = last.to_vec();
            for h in 0..horizon {
                let z: f64 = StandardNormal.sample(&mut rng);
                level[0] += self.common.drift + self.common.sigma * z;
                for (j, ar) in self.specific.iter().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    level[j + 1] = ar.phi * level[j + 1] + ar.xi_sd * z;
                }
                for j in 0..d {
                    out[[s, h, j]] = level[j];
                }
            }
        }
        out
    }
}

/// Frobenius norm of a stack of residual surfaces.
pub fn residual_norm(residuals: &[Array2<f64>]) -> f64 {
    residuals
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}
