//! Out-of-sample comparison of the linear benchmark and the hybrid model,
//! ablations and the lookback sweep.

use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{prepare_windows, HybridModel, Representation};
use crate::lilee::{fit_lilee, FactorPanel, LinearForecaster};
use crate::nn::{TrainConfig, TrainingTrace};
use crate::synthetic::{generate, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RmseTarget {
    /// One row per country on its specific index.
    #[default]
    SpecificFactors,
    /// A single row on the common index.
    CommonFactor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMode {
    /// Both models run from the last training year without seeing
    /// validation levels.
    #[default]
    Recursive,
    /// Each validation year is predicted from the observed previous years.
    OneStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub split_year: i32,
    pub lookback: usize,
    pub train: TrainConfig,
    pub rmse_target: RmseTarget,
    pub mode: ValidationMode,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            split_year: 2011,
            lookback: 10,
            train: TrainConfig::default(),
            rmse_target: RmseTarget::SpecificFactors,
            mode: ValidationMode::Recursive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub label: String,
    pub rmse_lilee: f64,
    pub rmse_hybrid: f64,
    pub improvement_pct: f64,
}

pub fn improvement_pct(rmse_lilee: f64, rmse_hybrid: f64) -> f64 {
    (rmse_lilee - rmse_hybrid) / rmse_lilee * 100.0
}

/// RWD / AR(1) benchmark with its own additive bias correction on first
/// differences, calibrated on the validation years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBenchmark {
    pub forecaster: LinearForecaster,
    pub mbc: Vec<f64>,
}

impl LinearBenchmark {
    /// Fits on rows up to `split_year`; the correction is the mean of
    /// `actual diff - predicted diff` over later years, each prediction made
    /// from the observed previous level.
    pub fn fit(panel: &FactorPanel, split_year: i32) -> Result<Self> {
        let train = panel.until(split_year)?;
        let forecaster = LinearForecaster::fit(&train)?;
        let d = panel.n_factors();
        let mut mbc = vec![0.0; d];
        let mut n = 0usize;
        for t in train.len()..panel.len() {
            let prev = panel.values.row(t - 1).to_vec();
            let pred = forecaster.predicted_step(&prev);
            for j in 0..d {
                mbc[j] += panel.values[[t, j]] - prev[j] - pred[j];
            }
            n += 1;
        }
        if n > 0 {
            mbc.iter_mut().for_each(|v| *v /= n as f64);
        }
        Ok(Self { forecaster, mbc })
    }

    pub fn without_mbc(&self) -> Self {
        Self {
            mbc: vec![0.0; self.mbc.len()],
            ..self.clone()
        }
    }

    fn step(&self, level: &[f64]) -> Vec<f64> {
        self.forecaster
            .predicted_step(level)
            .iter()
            .zip(&self.mbc)
            .zip(level)
            .map(|((p, b), l)| l + p + b)
            .collect()
    }

    /// Central recursion from `last`; rows are horizons 1..=H.
    pub fn forecast(&self, last: &[f64], horizon: usize) -> Array2<f64> {
        let mut out = Array2::zeros((horizon, last.len()));
        let mut level = last.to_vec();
        for h in 0..horizon {
            level = self.step(&level);
            out.row_mut(h).assign(&ndarray::ArrayView1::from(&level[..]));
        }
        out
    }
}

/// Forecast paths and scores over the validation years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub years: Vec<i32>,
    pub actual: Array2<f64>,
    pub lilee: Array2<f64>,
    pub hybrid: Array2<f64>,
    pub rows: Vec<BenchmarkRow>,
}

fn target_columns(panel: &FactorPanel, target: RmseTarget) -> Vec<usize> {
    match target {
        RmseTarget::SpecificFactors => (1..panel.n_factors()).collect(),
        RmseTarget::CommonFactor => vec![0],
    }
}

fn column_rmse(a: &Array2<f64>, b: &Array2<f64>, j: usize) -> f64 {
    crate::stats::rmse(&a.column(j).to_vec(), &b.column(j).to_vec())
}

fn validation_rows(panel: &FactorPanel, split_year: i32) -> Result<(FactorPanel, Vec<i32>, Array2<f64>)> {
    let history = panel.until(split_year)?;
    let start = history.len();
    if start >= panel.len() {
        return Err(Error::InsufficientHistory(format!("no years after {split_year} to validate on")));
    }
    let years = panel.years[start..].to_vec();
    let actual = panel.values.slice(s![start.., ..]).to_owned();
    Ok((history, years, actual))
}

/// Hybrid point forecasts over the validation years for an already trained
/// model, recursive or one-step.
pub fn hybrid_validation_path(
    panel: &FactorPanel,
    model: &HybridModel,
    mode: ValidationMode,
) -> Result<Array2<f64>> {
    let (history, years, _) = validation_rows(panel, model.split_year)?;
    match mode {
        ValidationMode::Recursive => model.forecast_deterministic(&history, years.len()),
        ValidationMode::OneStep => {
            let (_, windows) = prepare_windows(panel, model.representation, model.split_year, model.lookback)?;
            let (_, val) = windows.split(model.split_year);
            let steps = model.one_step(&val)?;
            let start = history.len();
            let mut out = Array2::zeros(steps.dim());
            for (h, row) in steps.rows().into_iter().enumerate() {
                for j in 0..row.len() {
                    out[[h, j]] = match model.representation {
                        Representation::Differences => panel.values[[start + h - 1, j]] + row[j],
                        Representation::Levels => row[j],
                    };
                }
            }
            Ok(out)
        }
    }
}

fn lilee_validation_path(
    panel: &FactorPanel,
    bench: &LinearBenchmark,
    split_year: i32,
    mode: ValidationMode,
) -> Result<Array2<f64>> {
    let (history, years, _) = validation_rows(panel, split_year)?;
    Ok(match mode {
        ValidationMode::Recursive => bench.forecast(&history.last_row(), years.len()),
        ValidationMode::OneStep => {
            let start = history.len();
            let mut out = Array2::zeros((years.len(), panel.n_factors()));
            for h in 0..years.len() {
                let prev = panel.values.row(start + h - 1).to_vec();
                out.row_mut(h).assign(&ndarray::Array1::from(bench.step(&prev)));
            }
            out
        }
    })
}

/// Scores a trained hybrid model against the bias-corrected linear benchmark.
pub fn validate_with(panel: &FactorPanel, model: &HybridModel, cfg: &HarnessConfig) -> Result<Validation> {
    let (_, years, actual) = validation_rows(panel, model.split_year)?;
    let bench = LinearBenchmark::fit(panel, model.split_year)?;
    let lilee = lilee_validation_path(panel, &bench, model.split_year, cfg.mode)?;
    let hybrid = hybrid_validation_path(panel, model, cfg.mode)?;
    let rows = target_columns(panel, cfg.rmse_target)
        .into_iter()
        .map(|j| {
            let rl = column_rmse(&actual, &lilee, j);
            let rh = column_rmse(&actual, &hybrid, j);
            BenchmarkRow {
                label: panel.labels[j].clone(),
                rmse_lilee: rl,
                rmse_hybrid: rh,
                improvement_pct: improvement_pct(rl, rh),
            }
        })
        .collect();
    Ok(Validation {
        years,
        actual,
        lilee,
        hybrid,
        rows,
    })
}

/// Trains the hybrid on differences and scores it.
pub fn validate(panel: &FactorPanel, cfg: &HarnessConfig) -> Result<(Validation, HybridModel, TrainingTrace)> {
    let (model, trace) = HybridModel::fit(
        panel,
        Representation::Differences,
        cfg.split_year,
        cfg.lookback,
        &cfg.train,
    )?;
    let v = validate_with(panel, &model, cfg)?;
    Ok((v, model, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    NoMbc,
    NoDifferences,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::NoMbc => "no_mbc",
            Variant::NoDifferences => "no_differences",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub rmse: f64,
    pub degradation_pct: f64,
}

pub fn degradation_pct(variant: f64, baseline: f64) -> f64 {
    (variant - baseline) / baseline * 100.0
}

/// Common-factor RMSE of the baseline, the baseline without bias correction,
/// and a model retrained on levels with otherwise identical settings.
pub fn ablate(panel: &FactorPanel, cfg: &HarnessConfig, variants: &[Variant]) -> Result<Vec<AblationRow>> {
    let (base, _) = HybridModel::fit(panel, Representation::Differences, cfg.split_year, cfg.lookback, &cfg.train)?;
    let (_, _, actual) = validation_rows(panel, cfg.split_year)?;
    let score = |m: &HybridModel| -> Result<f64> {
        let path = hybrid_validation_path(panel, m, cfg.mode)?;
        Ok(column_rmse(&actual, &path, 0))
    };
    let base_rmse = score(&base)?;
    variants
        .par_iter()
        .map(|&v| {
            let rmse = match v {
                Variant::Baseline => base_rmse,
                Variant::NoMbc => score(&base.without_mbc())?,
                Variant::NoDifferences => {
                    let (lv, _) =
                        HybridModel::fit(panel, Representation::Levels, cfg.split_year, cfg.lookback, &cfg.train)?;
                    score(&lv)?
                }
            };
            Ok(AblationRow {
                variant: v,
                rmse,
                degradation_pct: degradation_pct(rmse, base_rmse),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lookback: usize,
    pub n_train: usize,
    pub n_val: usize,
    /// Pooled RMSE over the target columns and validation years.
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    pub skipped: Vec<usize>,
}

/// Retrains for each lookback with the same seed; lookbacks that leave no
/// training or validation windows are skipped with a notice.
pub fn lookback_sweep(panel: &FactorPanel, cfg: &HarnessConfig, lookbacks: &[usize]) -> Result<Sweep> {
    let (_, _, actual) = validation_rows(panel, cfg.split_year)?;
    let cols = target_columns(panel, cfg.rmse_target);
    let results: Vec<Option<SweepRow>> = lookbacks
        .par_iter()
        .map(|&l| {
            let windows = match prepare_windows(panel, Representation::Differences, cfg.split_year, l) {
                Ok((_, w)) => w,
                Err(Error::InsufficientHistory(msg)) => {
                    log::info!("lookback {l} skipped: {msg}");
                    return Ok(None);
                }
                Err(e) => return Err(e),
            };
            let (tr, va) = windows.split(cfg.split_year);
            if tr.is_empty() || va.is_empty() {
                log::info!("lookback {l} skipped: no training or validation windows");
                return Ok(None);
            }
            let (model, _) = HybridModel::fit(panel, Representation::Differences, cfg.split_year, l, &cfg.train)?;
            let path = hybrid_validation_path(panel, &model, cfg.mode)?;
            let mut se = 0.0;
            for &j in &cols {
                for h in 0..actual.nrows() {
                    se += (actual[[h, j]] - path[[h, j]]).powi(2);
                }
            }
            Ok(Some(SweepRow {
                lookback: l,
                n_train: tr.len(),
                n_val: va.len(),
                rmse: (se / (cols.len() * actual.nrows()) as f64).sqrt(),
            }))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (l, r) in lookbacks.iter().zip(results) {
        match r {
            Some(r) => rows.push(r),
            None => skipped.push(*l),
        }
    }
    Ok(Sweep { rows, skipped })
}

/// Generates a scenario, decomposes it and benchmarks both models.
pub fn synthetic_benchmark(scenario: &ScenarioConfig, cfg: &HarnessConfig) -> Result<Validation> {
    let (_, data) = generate(scenario)?;
    let panel = fit_lilee(&data)?.params.factor_panel();
    Ok(validate(&panel, cfg)?.0)
}

/// Generates a scenario, decomposes it and runs every ablation variant.
pub fn synthetic_ablation(scenario: &ScenarioConfig, cfg: &HarnessConfig) -> Result<Vec<AblationRow>> {
    let (_, data) = generate(scenario)?;
    let panel = fit_lilee(&data)?.params.factor_panel();
    ablate(
        &panel,
        cfg,
        &[Variant::Baseline, Variant::NoMbc, Variant::NoDifferences],
    )
}
