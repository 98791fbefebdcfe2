//! Mean-bias correction and recursive projection of the factor panel.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lilee::FactorPanel;
use crate::nn::{train, DropoutMode, NetworkParams, TrainConfig, TrainingTrace};
use crate::stats;
use crate::tensor::{difference, fit_scaler_rows, make_windows, ScalerParams, WindowedDataset};

pub const MODEL_FORMAT: &str = "hybridlift/hybrid-model";
pub const MODEL_VERSION: u32 = 1;

/// What the network sees and predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// First differences of the factor levels.
    #[default]
    Differences,
    /// The levels themselves (ablation only).
    Levels,
}

/// Additive correction in the network's (scaled) output space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MbcVector {
    pub values: Vec<f64>,
}

impl MbcVector {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }
}

/// Mean of `target - prediction` over validation windows, using
/// deterministic forward passes.
pub fn compute_mbc(network: &NetworkParams, val: &WindowedDataset) -> Result<MbcVector> {
    if val.is_empty() {
        return Err(Error::InsufficientHistory("bias correction needs validation windows".into()));
    }
    let d = val.n_features();
    let mut acc = vec![0.0; d];
    for s in 0..val.len() {
        let p = network.predict(val.sample(s))?;
        for j in 0..d {
            acc[j] += val.targets[[s, j]] - p[j];
        }
    }
    let n = val.len() as f64;
    Ok(MbcVector {
        values: acc.into_iter().map(|v| v / n).collect(),
    })
}

/// Trained network plus everything needed to run it on raw factor levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridModel {
    pub labels: Vec<String>,
    pub representation: Representation,
    pub lookback: usize,
    /// Last year whose rows count as training data.
    pub split_year: i32,
    pub scaler: ScalerParams,
    pub network: NetworkParams,
    pub mbc: MbcVector,
}

/// Scaled windows of a factor panel in the chosen representation, with the
/// scaler fitted on rows up to `split_year`.
pub fn prepare_windows(
    panel: &FactorPanel,
    representation: Representation,
    split_year: i32,
    lookback: usize,
) -> Result<(ScalerParams, WindowedDataset)> {
    let (years, values) = match representation {
        Representation::Differences => {
            let d = difference(panel)?;
            (d.years, d.values)
        }
        Representation::Levels => (panel.years.clone(), panel.values.clone()),
    };
    let scaler = fit_scaler_rows(values.view(), &years, split_year)?;
    let scaled = scaler.transform(values.view());
    let windows = make_windows(scaled.view(), &years, lookback)?;
    Ok((scaler, windows))
}

impl HybridModel {
    /// Trains on windows whose target year is `<= split_year`, early-stops and
    /// calibrates the bias correction on the remaining windows.
    pub fn fit(
        panel: &FactorPanel,
        representation: Representation,
        split_year: i32,
        lookback: usize,
        config: &TrainConfig,
    ) -> Result<(Self, TrainingTrace)> {
        let (scaler, windows) = prepare_windows(panel, representation, split_year, lookback)?;
        let (tr, va) = windows.split(split_year);
        let (network, trace) = train(&tr, &va, config)?;
        let mbc = compute_mbc(&network, &va)?;
        Ok((
            Self {
                labels: panel.labels.clone(),
                representation,
                lookback,
                split_year,
                scaler,
                network,
                mbc,
            },
            trace,
        ))
    }

    pub fn n_factors(&self) -> usize {
        self.scaler.mean.len()
    }

    pub fn without_mbc(&self) -> Self {
        Self {
            mbc: MbcVector::zeros(self.n_factors()),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            format: &'a str,
            version: u32,
            model: &'a HybridModel,
        }
        Ok(serde_json::to_string(&Doc {
            format: MODEL_FORMAT,
            version: MODEL_VERSION,
            model: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            format: String,
            version: u32,
            model: HybridModel,
        }
        let doc: Doc = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported model document {} v{}",
                doc.format, doc.version
            )));
        }
        let m = doc.model;
        m.network.validate()?;
        let d = m.network.arch.input;
        if m.network.arch.output != d || m.scaler.mean.len() != d || m.scaler.sd.len() != d || m.mbc.values.len() != d
        {
            return Err(Error::Dimension("model components disagree on the factor count".into()));
        }
        Ok(m)
    }

    /// Raw-space step taken by the model from the given raw rows: a first
    /// difference or a level depending on the representation.
    fn step<R: rand::Rng>(&self, rows: &[Vec<f64>], mode: DropoutMode<'_, R>) -> Result<Vec<f64>> {
        let d = self.n_factors();
        let mut x = Array2::zeros((self.lookback, d));
        for (t, row) in rows[rows.len() - self.lookback..].iter().enumerate() {
            for (j, v) in self.scaler.transform_row(row).into_iter().enumerate() {
                x[[t, j]] = v;
            }
        }
        let mut z = self.network.forward(x.view(), mode)?;
        for (v, b) in z.iter_mut().zip(&self.mbc.values) {
            *v += b;
        }
        Ok(self.scaler.inverse_row(&z))
    }

    /// Raw rows of the chosen representation from a level history.
    fn seed_rows(&self, history: &FactorPanel) -> Result<Vec<Vec<f64>>> {
        let need = match self.representation {
            Representation::Differences => self.lookback + 1,
            Representation::Levels => self.lookback,
        };
        if history.len() < need {
            return Err(Error::InsufficientHistory(format!(
                "forecasting needs {need} history rows, got {}",
                history.len()
            )));
        }
        if history.n_factors() != self.n_factors() {
            return Err(Error::Dimension(format!(
                "history has {} factors, model expects {}",
                history.n_factors(),
                self.n_factors()
            )));
        }
        let v = &history.values;
        let rows = match self.representation {
            Representation::Differences => (v.nrows() - self.lookback..v.nrows())
                .map(|t| (&v.row(t) - &v.row(t - 1)).to_vec())
                .collect(),
            Representation::Levels => (v.nrows() - self.lookback..v.nrows())
                .map(|t| v.row(t).to_vec())
                .collect(),
        };
        Ok(rows)
    }

    /// Runs `horizon` recursive steps; `noise` returns the level-space shock
    /// added at each step.
    fn recurse<R: rand::Rng>(
        &self,
        history: &FactorPanel,
        horizon: usize,
        rng: Option<&mut R>,
        sigma: Option<&[f64]>,
    ) -> Result<Array2<f64>> {
        let d = self.n_factors();
        let mut rows = self.seed_rows(history)?;
        let mut level = history.last_row();
        let mut out = Array2::zeros((horizon, d));
        let mut rng = rng;
        for h in 0..horizon {
            let mode = match rng.as_deref_mut() {
                Some(r) => DropoutMode::Sampled(r),
                None => DropoutMode::Deterministic,
            };
            let mut step = self.step(&rows, mode)?;
            if let (Some(r), Some(s)) = (rng.as_deref_mut(), sigma) {
                for j in 0..d {
                    let z: f64 = StandardNormal.sample(r);
                    step[j] += s[j] * z;
                }
            }
            let next: Vec<f64> = match self.representation {
                Representation::Differences => level.iter().zip(&step).map(|(l, s)| l + s).collect(),
                Representation::Levels => step.clone(),
            };
            let realized = match self.representation {
                Representation::Differences => step,
                Representation::Levels => next.clone(),
            };
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("forecast diverged at horizon {}", h + 1)));
            }
            out.row_mut(h).assign(&ndarray::ArrayView1::from(&next[..]));
            rows.remove(0);
            rows.push(realized);
            level = next;
        }
        Ok(out)
    }

    /// Bias-corrected point forecast of the next `horizon` levels (rows are
    /// horizons 1..=H). No dropout, no noise.
    pub fn forecast_deterministic(&self, history: &FactorPanel, horizon: usize) -> Result<Array2<f64>> {
        self.recurse::<ChaCha8Rng>(history, horizon, None, None)
    }

    /// One path per stream of `seed`: dropout-masked prediction, bias
    /// correction, Gaussian shock with sd `sigma` in level space. Every path
    /// feeds back its own realized increments.
    pub fn forecast_stochastic(
        &self,
        history: &FactorPanel,
        horizon: usize,
        n_paths: usize,
        sigma: &[f64],
        seed: u64,
    ) -> Result<ForecastEnsemble> {
        if sigma.len() != self.n_factors() || sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidArgument("sigma must be non-negative, one per factor".into()));
        }
        let paths: Vec<Array2<f64>> = (0..n_paths)
            .into_par_iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(s as u64);
                self.recurse(history, horizon, Some(&mut rng), Some(sigma))
            })
            .collect::<Result<_>>()?;
        let d = self.n_factors();
        let mut levels = Array3::zeros((n_paths, horizon, d));
        for (s, p) in paths.iter().enumerate() {
            levels.index_axis_mut(Axis(0), s).assign(p);
        }
        Ok(ForecastEnsemble {
            labels: history.labels.clone(),
            origin_year: history.last_year(),
            origin: history.last_row(),
            levels,
            sigma: sigma.to_vec(),
            seed,
        })
    }

    /// Bias-corrected one-step predictions for each window, mapped back to
    /// raw units of the representation.
    pub fn one_step(&self, windows: &WindowedDataset) -> Result<Array2<f64>> {
        let d = self.n_factors();
        let mut out = Array2::zeros((windows.len(), d));
        for s in 0..windows.len() {
            let mut z = self.network.predict(windows.sample(s))?;
            for (v, b) in z.iter_mut().zip(&self.mbc.values) {
                *v += b;
            }
            out.row_mut(s).assign(&ndarray::Array1::from(self.scaler.inverse_row(&z)));
        }
        Ok(out)
    }
}

/// Per-feature sd of first differences over the whole panel.
pub fn sigma_from_history(panel: &FactorPanel) -> Result<Vec<f64>> {
    let d = difference(panel)?;
    if d.len() < 2 {
        return Err(Error::InsufficientHistory("sigma needs at least 3 levels".into()));
    }
    Ok(d.values
        .columns()
        .into_iter()
        .map(|c| stats::sample_sd(&c.to_vec()))
        .collect())
}

/// Stochastic level paths: `paths x horizons x factors`, horizon index 0 is
/// one step past `origin_year`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastEnsemble {
    pub labels: Vec<String>,
    pub origin_year: i32,
    pub origin: Vec<f64>,
    pub levels: Array3<f64>,
    pub sigma: Vec<f64>,
    pub seed: u64,
}

impl ForecastEnsemble {
    pub fn n_paths(&self) -> usize {
        self.levels.dim().0
    }

    pub fn horizon(&self) -> usize {
        self.levels.dim().1
    }

    pub fn n_factors(&self) -> usize {
        self.levels.dim().2
    }

    pub fn years(&self) -> Vec<i32> {
        (1..=self.horizon() as i32).map(|h| self.origin_year + h).collect()
    }

    /// `paths x horizons` slice for one factor.
    pub fn factor(&self, j: usize) -> ArrayView2<'_, f64> {
        self.levels.index_axis(Axis(2), j)
    }
}

/// Quantiles per horizon and factor: `levels x horizons x factors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBands {
    pub levels: Vec<f64>,
    pub values: Array3<f64>,
}

pub fn ensemble_quantiles(ensemble: &ForecastEnsemble, levels: &[f64]) -> Result<QuantileBands> {
    if ensemble.n_paths() < 2 {
        return Err(Error::InvalidArgument("quantiles need at least 2 paths".into()));
    }
    if levels.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(Error::InvalidArgument("quantile levels must lie in [0, 1]".into()));
    }
    let (_, h, d) = ensemble.levels.dim();
    let mut values = Array3::zeros((levels.len(), h, d));
    for t in 0..h {
        for j in 0..d {
            let mut cell: Vec<f64> = ensemble.levels.slice(ndarray::s![.., t, j]).to_vec();
            cell.sort_by(f64::total_cmp);
            for (q, &lv) in levels.iter().enumerate() {
                values[[q, t, j]] = stats::quantile_sorted(&cell, lv);
            }
        }
    }
    Ok(QuantileBands {
        levels: levels.to_vec(),
        values,
    })
}
