//! TOML run configuration, validation, seeds and the config hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hybridlift::harness::{HarnessConfig, RmseTarget, ValidationMode};
use hybridlift::ingest::{HmdSource, MissingPolicy};
use hybridlift::nn::TrainConfig;
use hybridlift::risk::SHOCK_GRID;
use hybridlift::synthetic::{FactorRegime, ScenarioConfig};
use hybridlift::xai::ShapMode;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Stream ids of the single config seed, one per randomized stage.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    Synth = 0,
    Train = 1,
    Forecast = 2,
    Explain = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    #[default]
    Synthetic,
    Csv,
    Hmd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub common: FactorRegime,
    pub specific: FactorRegime,
    pub coherent: bool,
    pub noise_sd: f64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let s = ScenarioConfig::default();
        Self {
            common: s.common,
            specific: s.specific,
            coherent: s.coherent,
            noise_sd: s.noise_sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub kind: DataKind,
    pub countries: Vec<String>,
    pub first_year: i32,
    pub last_year: i32,
    pub age_max: u32,
    pub missing: MissingPolicy,
    /// Cluster CSV for `kind = "csv"`.
    pub path: Option<PathBuf>,
    /// HMD directory for `kind = "hmd"`.
    pub dir: Option<PathBuf>,
    pub source: HmdSource,
    /// Per-country rate files overriding `dir` (rates source only).
    pub files: BTreeMap<String, PathBuf>,
    pub synthetic: SyntheticSection,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            kind: DataKind::Synthetic,
            countries: ScenarioConfig::default().countries,
            first_year: 1956,
            last_year: 2020,
            age_max: 90,
            missing: MissingPolicy::Reject,
            path: None,
            dir: None,
            source: HmdSource::Rates,
            files: BTreeMap::new(),
            synthetic: SyntheticSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub split_year: i32,
    pub lookback: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub dropout: f64,
    pub rmse_target: RmseTarget,
    pub validation_mode: ValidationMode,
}

impl Default for ModelSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            split_year: 2011,
            lookback: 10,
            hidden1: t.hidden1,
            hidden2: t.hidden2,
            dropout: t.dropout_rate,
            rmse_target: RmseTarget::SpecificFactors,
            validation_mode: ValidationMode::Recursive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: Option<usize>,
    pub clip_norm: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            max_epochs: t.max_epochs,
            patience: t.patience,
            batch_size: t.batch_size,
            clip_norm: t.clip_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    pub paths: usize,
    pub horizon: usize,
    /// Gaussian level noise with the historical sd of first differences.
    pub process_noise: bool,
    /// Central coverage of the reported e0 interval.
    pub band: f64,
}

impl Default for ForecastSection {
    fn default() -> Self {
        Self {
            paths: 1000,
            horizon: 30,
            process_noise: true,
            band: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StressSection {
    pub shocks: Vec<f64>,
    pub monotonicity_from: u32,
    pub monotonicity_to: u32,
}

impl Default for StressSection {
    fn default() -> Self {
        Self {
            shocks: SHOCK_GRID.to_vec(),
            monotonicity_from: 30,
            monotonicity_to: 90,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapKind {
    Exact,
    #[default]
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    pub shap: ShapKind,
    /// Coalition budget for sampled SHAP; `2 d + 2048` when absent.
    pub n_coalitions: Option<usize>,
    pub lookbacks: Vec<usize>,
}

impl Default for ExplainSection {
    fn default() -> Self {
        Self {
            shap: ShapKind::Sampled,
            n_coalitions: None,
            lookbacks: vec![5, 10, 15],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Not part of the hash, so a run can be relocated.
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub forecast: ForecastSection,
    pub stress: StressSection,
    pub explain: ExplainSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: None,
            data: DataSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            forecast: ForecastSection::default(),
            stress: StressSection::default(),
            explain: ExplainSection::default(),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl RunConfig {
    /// Parses a config file; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.data.path.as_mut().map(resolve);
        cfg.data.dir.as_mut().map(resolve);
        cfg.data.files.values_mut().for_each(resolve);
        cfg.out_dir.as_mut().map(resolve);
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let d = &self.data;
        if d.countries.len() < 2 {
            return Err(usage("data.countries needs at least two countries"));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = d.countries.iter().find(|c| !seen.insert(*c)) {
            return Err(usage(format!("country {dup} listed twice")));
        }
        if d.last_year <= d.first_year {
            return Err(usage("data.last_year must come after data.first_year"));
        }
        match d.kind {
            DataKind::Csv if d.path.is_none() => return Err(usage("data.kind = \"csv\" needs data.path")),
            DataKind::Hmd if d.dir.is_none() && d.files.is_empty() => {
                return Err(usage("data.kind = \"hmd\" needs data.dir or data.files"))
            }
            _ => {}
        }
        if !d.files.is_empty() && d.source != HmdSource::Rates {
            return Err(usage("data.files only applies to the rates source"));
        }
        if let Some(c) = d.files.keys().find(|c| !d.countries.contains(c)) {
            return Err(usage(format!("data.files names {c}, which is not in data.countries")));
        }
        let m = &self.model;
        if !(d.first_year..d.last_year).contains(&m.split_year) {
            return Err(usage("model.split_year must fall inside the data years, before the last one"));
        }
        if m.lookback == 0 || m.hidden1 == 0 || m.hidden2 == 0 {
            return Err(usage("model.lookback and hidden sizes must be positive"));
        }
        if !(0.0..1.0).contains(&m.dropout) {
            return Err(usage("model.dropout must lie in [0, 1)"));
        }
        let t = &self.train;
        if !(t.learning_rate > 0.0) || !(t.clip_norm > 0.0) || t.max_epochs == 0 || t.patience == 0 {
            return Err(usage("train settings must be positive"));
        }
        if t.batch_size == Some(0) {
            return Err(usage("train.batch_size must be positive"));
        }
        let f = &self.forecast;
        if f.paths < 2 || f.horizon == 0 {
            return Err(usage("forecast.paths must be at least 2 and forecast.horizon positive"));
        }
        if !(f.band > 0.0 && f.band < 1.0) {
            return Err(usage("forecast.band must lie in (0, 1)"));
        }
        let s = &self.stress;
        if s.shocks.len() < 2 || s.shocks.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(usage("stress.shocks needs at least two values in (0, 1)"));
        }
        if s.monotonicity_from >= s.monotonicity_to || s.monotonicity_to > d.age_max {
            return Err(usage("stress monotonicity range must be increasing and within data.age_max"));
        }
        if self.explain.lookbacks.contains(&0) {
            return Err(usage("explain.lookbacks must be positive"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form; the output directory is excluded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }

    /// Seed for one stage: first draw of stream `stream` of the config seed.
    pub fn stage_seed(&self, stream: Stream) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream as u64);
        rng.next_u64()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            hidden1: self.model.hidden1,
            hidden2: self.model.hidden2,
            dropout_rate: self.model.dropout,
            learning_rate: self.train.learning_rate,
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            batch_size: self.train.batch_size,
            clip_norm: self.train.clip_norm,
            seed: self.stage_seed(Stream::Train),
        }
    }

    pub fn harness_config(&self) -> HarnessConfig {
        HarnessConfig {
            split_year: self.model.split_year,
            lookback: self.model.lookback,
            train: self.train_config(),
            rmse_target: self.model.rmse_target,
            mode: self.model.validation_mode,
        }
    }

    pub fn scenario(&self) -> ScenarioConfig {
        let d = &self.data;
        ScenarioConfig {
            countries: d.countries.clone(),
            first_year: d.first_year,
            n_years: (d.last_year - d.first_year + 1) as usize,
            age_max: d.age_max,
            common: d.synthetic.common,
            specific: d.synthetic.specific,
            coherent: d.synthetic.coherent,
            noise_sd: d.synthetic.noise_sd,
            seed: self.stage_seed(Stream::Synth),
        }
    }

    pub fn shap_mode(&self, n_inputs: usize) -> ShapMode {
        match (self.explain.shap, self.explain.n_coalitions) {
            (ShapKind::Exact, _) => ShapMode::Exact,
            (ShapKind::Sampled, Some(n)) => ShapMode::Sampled { n_coalitions: n },
            (ShapKind::Sampled, None) => ShapMode::default_sampled(n_inputs),
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
