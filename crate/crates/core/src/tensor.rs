//! First differences, train-only standardization and sliding windows.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lilee::FactorPanel;

/// First differences of a factor panel; `years[t]` is the year of the later
/// level in each pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffPanel {
    pub years: Vec<i32>,
    /// (T - 1) x (N + 1)
    pub values: Array2<f64>,
}

impl DiffPanel {
    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }
}

pub fn difference(panel: &FactorPanel) -> Result<DiffPanel> {
    if panel.len() < 2 {
        return Err(Error::InsufficientHistory("differencing needs at least 2 rows".into()));
    }
    let v = &panel.values;
    let values = &v.slice(ndarray::s![1.., ..]) - &v.slice(ndarray::s![..-1, ..]);
    Ok(DiffPanel {
        years: panel.years[1..].to_vec(),
        values,
    })
}

/// Cumulative sum of `diffs` starting from `origin`; returns the levels
/// including the origin row.
pub fn integrate(diffs: ArrayView2<f64>, origin: &[f64]) -> Array2<f64> {
    let (t, d) = diffs.dim();
    let mut out = Array2::zeros((t + 1, d));
    out.row_mut(0).assign(&ndarray::ArrayView1::from(origin));
    for r in 0..t {
        for c in 0..d {
            out[[r + 1, c]] = out[[r, c]] + diffs[[r, c]];
        }
    }
    out
}

/// Per-feature standardization fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl ScalerParams {
    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn inverse_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(z, (m, s))| z * s + m)
            .collect()
    }

    pub fn transform(&self, values: ArrayView2<f64>) -> Array2<f64> {
        let mut out = values.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.sd[j];
            }
        }
        out
    }
}

/// Mean and sample sd (n - 1) of each column over the rows of `values` whose
/// year is at most `train_end_year`.
pub fn fit_scaler_rows(values: ArrayView2<f64>, years: &[i32], train_end_year: i32) -> Result<ScalerParams> {
    let idx: Vec<usize> = years
        .iter()
        .enumerate()
        .filter(|(_, &y)| y <= train_end_year)
        .map(|(i, _)| i)
        .collect();
    if idx.len() < 2 {
        return Err(Error::InsufficientHistory(format!(
            "scaler needs at least 2 training rows up to {train_end_year}, got {}",
            idx.len()
        )));
    }
    let train = values.select(Axis(0), &idx);
    let n = idx.len() as f64;
    let mut mean = Vec::with_capacity(values.ncols());
    let mut sd = Vec::with_capacity(values.ncols());
    for (j, col) in train.columns().into_iter().enumerate() {
        let m = col.sum() / n;
        let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Scaling { feature: j });
        }
        mean.push(m);
        sd.push(s);
    }
    Ok(ScalerParams { mean, sd })
}

pub fn fit_scaler(diffs: &DiffPanel, train_end_year: i32) -> Result<ScalerParams> {
    fit_scaler_rows(diffs.values.view(), &diffs.years, train_end_year)
}

/// Chronological sliding windows. Sample `s` takes rows `s..s+L` as input and
/// row `s+L` as target; `target_years[s]` is the year of that target row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedDataset {
    /// samples x L x features
    pub inputs: Array3<f64>,
    /// samples x features
    pub targets: Array2<f64>,
    pub target_years: Vec<i32>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.targets.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookback(&self) -> usize {
        self.inputs.dim().1
    }

    pub fn n_features(&self) -> usize {
        self.inputs.dim().2
    }

    /// Samples whose target year satisfies `keep`.
    pub fn filter_years(&self, keep: impl Fn(i32) -> bool) -> Self {
        let idx: Vec<usize> = self
            .target_years
            .iter()
            .enumerate()
            .filter(|(_, &y)| keep(y))
            .map(|(i, _)| i)
            .collect();
        Self {
            inputs: self.inputs.select(Axis(0), &idx),
            targets: self.targets.select(Axis(0), &idx),
            target_years: idx.iter().map(|&i| self.target_years[i]).collect(),
        }
    }

    /// Splits by target year: training targets `<= split_year`, validation
    /// targets after it. Validation inputs may reach back into training years.
    pub fn split(&self, split_year: i32) -> (Self, Self) {
        (
            self.filter_years(|y| y <= split_year),
            self.filter_years(|y| y > split_year),
        )
    }

    pub fn sample(&self, s: usize) -> ArrayView2<'_, f64> {
        self.inputs.index_axis(Axis(0), s)
    }

    /// Flattens each window row-major as `lag * features + feature`.
    pub fn flattened(&self) -> Array2<f64> {
        let (s, l, d) = self.inputs.dim();
        self.inputs.to_shape((s, l * d)).expect("contiguous").to_owned()
    }

    pub fn from_flattened(flat: &Array2<f64>, lookback: usize, targets: Array2<f64>, target_years: Vec<i32>) -> Result<Self> {
        let (s, w) = flat.dim();
        if lookback == 0 || w % lookback != 0 {
            return Err(Error::Dimension(format!("width {w} is not a multiple of lookback {lookback}")));
        }
        let inputs = flat
            .to_shape((s, lookback, w / lookback))
            .map_err(|e| Error::Dimension(e.to_string()))?
            .to_owned();
        Ok(Self {
            inputs,
            targets,
            target_years,
        })
    }
}

/// Builds `rows - L` windows from (already scaled) rows.
pub fn make_windows(values: ArrayView2<f64>, years: &[i32], lookback: usize) -> Result<WindowedDataset> {
    let (t, d) = values.dim();
    if lookback == 0 {
        return Err(Error::InvalidArgument("lookback must be positive".into()));
    }
    if t <= lookback {
        return Err(Error::InsufficientHistory(format!(
            "{t} rows cannot form a window of length {lookback} plus a target"
        )));
    }
    let samples = t - lookback;
    let mut inputs = Array3::zeros((samples, lookback, d));
    let mut targets = Array2::zeros((samples, d));
    for s in 0..samples {
        inputs
            .index_axis_mut(Axis(0), s)
            .assign(&values.slice(ndarray::s![s..s + lookback, ..]));
        targets.row_mut(s).assign(&values.row(s + lookback));
    }
    Ok(WindowedDataset {
        inputs,
        targets,
        target_years: years[lookback..].to_vec(),
    })
}
