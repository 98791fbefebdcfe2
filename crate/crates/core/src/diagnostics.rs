//! Unit-root (ADF) and stationarity (KPSS) tests, and the verdict table that
//! combines them.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg;

/// Deterministic terms in the ADF regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdfRegression {
    #[default]
    Constant,
    ConstantTrend,
}

/// MacKinnon (1994) response-surface coefficients for one deterministic
/// specification with a single series.
struct MacKinnon {
    max: f64,
    min: f64,
    star: f64,
    small_p: [f64; 3],
    large_p: [f64; 4],
}

const MACKINNON_C: MacKinnon = MacKinnon {
    max: 2.74,
    min: -18.83,
    star: -1.61,
    small_p: [2.1659, 1.4412, 0.038269],
    large_p: [1.7339, 0.93202, -0.12745, -0.010368],
};

const MACKINNON_CT: MacKinnon = MacKinnon {
    max: 0.7,
    min: -16.18,
    star: -2.89,
    small_p: [3.2512, 1.6047, 0.049588],
    large_p: [2.5261, 0.61654, -0.37956, -0.060285],
};

/// Approximate p-value of an ADF tau statistic.
pub fn mackinnon_p(stat: f64, regression: AdfRegression) -> f64 {
    let c = match regression {
        AdfRegression::Constant => &MACKINNON_C,
        AdfRegression::ConstantTrend => &MACKINNON_CT,
    };
    if stat > c.max {
        return 1.0;
    }
    if stat < c.min {
        return 0.0;
    }
    let z = if stat <= c.star {
        c.small_p[0] + c.small_p[1] * stat + c.small_p[2] * stat * stat
    } else {
        c.large_p[0] + c.large_p[1] * stat + c.large_p[2] * stat * stat + c.large_p[3] * stat.powi(3)
    };
    Normal::new(0.0, 1.0).unwrap().cdf(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub stat: f64,
    pub p_value: f64,
    pub lags: usize,
    pub nobs: usize,
}

/// Default ADF lag ceiling, `floor(12 (n / 100)^(1/4))`.
pub fn default_max_lag(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Row-major design for `dy_t` on deterministics, `y_{t-1}` and `lags`
/// lagged differences, using observations `t >= first` (index into `dy`).
fn adf_design(y: &[f64], lags: usize, first: usize, regression: AdfRegression) -> (Vec<f64>, Vec<f64>, usize, usize) {
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let det = match regression {
        AdfRegression::Constant => 1,
        AdfRegression::ConstantTrend => 2,
    };
    let cols = 1 + det + lags;
    let rows = dy.len() - first;
    let mut x = Vec::with_capacity(rows * cols);
    let mut target = Vec::with_capacity(rows);
    for t in first..dy.len() {
        // dy[t] = y[t+1] - y[t], so the lagged level is y[t].
        x.push(y[t]);
        x.push(1.0);
        if det == 2 {
            x.push((t + 1) as f64);
        }
        for l in 1..=lags {
            x.push(dy[t - l]);
        }
        target.push(dy[t]);
    }
    (x, target, rows, cols)
}

/// Augmented Dickey-Fuller test. The lag order is chosen by AIC over
/// `0..=max_lag` on a common sample, then the chosen regression is re-estimated
/// on every available observation. The statistic is the t-ratio on `y_{t-1}`.
pub fn adf_test(series: &[f64], max_lag: usize, regression: AdfRegression) -> Result<AdfResult> {
    let n = series.len();
    if n < max_lag + 10 {
        return Err(Error::InsufficientHistory(format!(
            "ADF with max_lag {max_lag} needs at least {} observations, got {n}",
            max_lag + 10
        )));
    }
    let mut best: Option<(usize, f64)> = None;
    for lag in 0..=max_lag {
        let (x, y, rows, cols) = adf_design(series, lag, max_lag, regression);
        let Some(fit) = linalg::ols(&x, &y, rows, cols) else {
            continue;
        };
        if fit.rss <= 0.0 {
            continue;
        }
        let aic = rows as f64 * (fit.rss / rows as f64).ln() + 2.0 * cols as f64;
        if best.is_none_or(|(_, b)| aic < b) {
            best = Some((lag, aic));
        }
    }
    let (lags, _) = best.ok_or_else(|| Error::Regression("no lag order gave a non-singular fit".into()))?;

    let (x, y, rows, cols) = adf_design(series, lags, lags, regression);
    let fit = linalg::ols(&x, &y, rows, cols)
        .ok_or_else(|| Error::Regression("singular ADF design matrix".into()))?;
    let dof = rows as f64 - cols as f64;
    if dof <= 0.0 {
        return Err(Error::Regression("no residual degrees of freedom".into()));
    }
    let sigma2 = fit.rss / dof;
    let se = (sigma2 * fit.xtx_inv[0]).sqrt();
    if !(se > 0.0 && se.is_finite()) {
        return Err(Error::Regression(format!("standard error of the level term is {se}")));
    }
    let stat = fit.coef[0] / se;
    Ok(AdfResult {
        stat,
        p_value: mackinnon_p(stat, regression),
        lags,
        nobs: rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpssResult {
    pub stat: f64,
    pub p_value: f64,
    pub bandwidth: usize,
}

/// Level-stationarity critical values at 10%, 5%, 2.5% and 1%.
pub const KPSS_CRITICAL: [(f64, f64); 4] = [(0.347, 0.10), (0.463, 0.05), (0.574, 0.025), (0.739, 0.01)];

fn kpss_p(stat: f64) -> f64 {
    let (first, last) = (KPSS_CRITICAL[0], KPSS_CRITICAL[3]);
    if stat <= first.0 {
        return first.1;
    }
    if stat >= last.0 {
        return last.1;
    }
    for w in KPSS_CRITICAL.windows(2) {
        let ((c0, p0), (c1, p1)) = (w[0], w[1]);
        if stat <= c1 {
            return p0 + (stat - c0) / (c1 - c0) * (p1 - p0);
        }
    }
    last.1
}

/// KPSS test for level stationarity with a Bartlett-kernel long-run variance.
/// The p-value is interpolated in the critical table and clamped to
/// `[0.01, 0.10]`.
pub fn kpss_test(series: &[f64], bandwidth: Bandwidth) -> Result<KpssResult> {
    let n = series.len();
    if n < 10 {
        return Err(Error::InsufficientHistory(format!("KPSS needs 10 observations, got {n}")));
    }
    let bw = match bandwidth {
        Bandwidth::Auto => (4.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize,
        Bandwidth::Fixed(b) => b,
    }
    .min(n - 1);
    let mean = series.iter().sum::<f64>() / n as f64;
    let e: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let mut partial = 0.0;
    let mut eta = 0.0;
    for v in &e {
        partial += v;
        eta += partial * partial;
    }
    eta /= (n * n) as f64;
    let mut lrv = e.iter().map(|v| v * v).sum::<f64>() / n as f64;
    for lag in 1..=bw {
        let gamma: f64 = (lag..n).map(|t| e[t] * e[t - lag]).sum::<f64>() / n as f64;
        lrv += 2.0 * (1.0 - lag as f64 / (bw as f64 + 1.0)) * gamma;
    }
    if !(lrv > 1e-300) {
        return Err(Error::Degenerate(format!("long-run variance is {lrv}")));
    }
    let stat = eta / lrv;
    Ok(KpssResult {
        stat,
        p_value: kpss_p(stat),
        bandwidth: bw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Stationary,
    UnitRoot,
    /// ADF rejects the unit root but KPSS rejects stationarity.
    ConflictPersistent,
    /// Neither test rejects its null.
    ConflictInertial,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Stationary => "Stationary (Both PASS)",
            Verdict::UnitRoot => "Unit Root (Both FAIL)",
            Verdict::ConflictPersistent => "Persistent Drift (Conflict)",
            Verdict::ConflictInertial => "Inertial (Conflict)",
        }
    }
}

pub const SIGNIFICANCE: f64 = 0.05;

/// ADF passes when it rejects a unit root, KPSS passes when it fails to reject
/// stationarity.
pub fn classify(adf_p: f64, kpss_p: f64) -> Verdict {
    let adf_pass = adf_p < SIGNIFICANCE;
    let kpss_pass = kpss_p > SIGNIFICANCE;
    match (adf_pass, kpss_pass) {
        (true, true) => Verdict::Stationary,
        (false, false) => Verdict::UnitRoot,
        (true, false) => Verdict::ConflictPersistent,
        (false, true) => Verdict::ConflictInertial,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub series: String,
    pub adf_stat: f64,
    pub adf_p: f64,
    pub adf_lags: usize,
    pub kpss_stat: f64,
    pub kpss_p: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    /// `None` uses [`default_max_lag`].
    pub max_lag: Option<usize>,
    pub regression: AdfRegression,
    pub bandwidth: Bandwidth,
}

pub fn stationarity_report(name: &str, series: &[f64], cfg: &DiagnosticsConfig) -> Result<StationarityReport> {
    let max_lag = cfg
        .max_lag
        .unwrap_or_else(|| default_max_lag(series.len()))
        .min(series.len().saturating_sub(10));
    let adf = adf_test(series, max_lag, cfg.regression)?;
    let kpss = kpss_test(series, cfg.bandwidth)?;
    Ok(StationarityReport {
        series: name.to_string(),
        adf_stat: adf.stat,
        adf_p: adf.p_value,
        adf_lags: adf.lags,
        kpss_stat: kpss.stat,
        kpss_p: kpss.p_value,
        verdict: classify(adf.p_value, kpss.p_value),
    })
}

/// Table layout: `Country,ADF_p,KPSS_p,Interpretation`.
pub fn reports_to_csv(reports: &[StationarityReport]) -> String {
    let mut out = String::from("country,adf_stat,adf_p,kpss_stat,kpss_p,interpretation\n");
    for r in reports {
        out.push_str(&format!(
            "{},{:.6},{:.4},{:.6},{:.4},{}\n",
            r.series,
            r.adf_stat,
            r.adf_p,
            r.kpss_stat,
            r.kpss_p,
            r.verdict.label()
        ));
    }
    out
}
