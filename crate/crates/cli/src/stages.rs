//! One function per subcommand. Each reads its upstream artifacts through
//! the manifests, runs the library and writes its own artifacts.

use std::io::Read;

use flate2::read::GzDecoder;
use hybridlift::actuarial::{e0_paths, e0_summary, monotonicity_check, reconstruct_surface, Monotonicity};
use hybridlift::diagnostics::{reports_to_csv, stationarity_report, DiagnosticsConfig};
use hybridlift::forecast::{ensemble_quantiles, prepare_windows, sigma_from_history, ForecastEnsemble, HybridModel, Representation};
use hybridlift::harness::{ablate, lookback_sweep, validate_with, Variant};
use hybridlift::ingest::{
    build_surface, hmd_file_name, load_hmd_cluster, parse_hmd_file, read_cluster_csv, write_cluster_csv, ClusterDataset,
    TableKind,
};
use hybridlift::lilee::{fit_lilee, FactorPanel, LiLeeParams};
use hybridlift::risk::{reverse_stress, scr};
use hybridlift::stats;
use hybridlift::synthetic::generate;
use hybridlift::xai::{kernel_shap, temporal_saliency};
use hybridlift::{actuarial, Error};
use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::artifacts::{Manifest, OutDir};
use crate::config::{DataKind, RunConfig, Stream};
use crate::error::{CliError, CliResult};

pub const STAGES: [&str; 8] = ["synth", "fit", "train", "forecast", "validate", "explain", "stress", "ablate"];

pub const PARAMS: &str = "lilee_params.json";
pub const MODEL: &str = "model.json";
pub const ENSEMBLE: &str = "ensemble.csv.gz";
const ENSEMBLE_META: &str = "ensemble_meta.json";
const OBSERVED: &str = "observed_e0.csv";
const FAN_LEVELS: [f64; 7] = [0.025, 0.05, 0.25, 0.5, 0.75, 0.95, 0.975];
const FAN_HEADER: [&str; 7] = ["q025", "q050", "q250", "q500", "q750", "q950", "q975"];

fn f(v: f64) -> String {
    v.to_string()
}

fn read_file(path: &std::path::Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
        .into()
    })
}

pub fn load_data(cfg: &RunConfig) -> CliResult<ClusterDataset> {
    let d = &cfg.data;
    let range = (d.first_year, d.last_year);
    let data = match d.kind {
        DataKind::Synthetic => generate(&cfg.scenario())?.1,
        DataKind::Csv => {
            let path = d.path.as_ref().expect("validated");
            let text = read_file(path)?;
            read_cluster_csv(text.as_bytes(), d.age_max)?
                .reordered(&d.countries)?
                .slice_years(d.first_year, d.last_year)?
        }
        DataKind::Hmd if d.files.is_empty() => {
            let dir = d.dir.as_ref().expect("validated");
            load_hmd_cluster(dir, &d.countries, d.source, range, d.age_max, d.missing)?
        }
        DataKind::Hmd => {
            let surfaces = d
                .countries
                .iter()
                .map(|c| {
                    let path = match (d.files.get(c), &d.dir) {
                        (Some(p), _) => p.clone(),
                        (None, Some(dir)) => dir.join(hmd_file_name(c, TableKind::Rates)),
                        (None, None) => {
                            return Err(CliError::Usage(format!("no rate file configured for {c}")));
                        }
                    };
                    let table = parse_hmd_file(&read_file(&path)?, TableKind::Rates)?;
                    Ok(build_surface(c, &table, None, range, d.age_max, d.missing)?)
                })
                .collect::<CliResult<Vec<_>>>()?;
            ClusterDataset::new(surfaces)?
        }
    };
    Ok(data)
}

fn load_params(out: &OutDir, fit: &Manifest) -> CliResult<LiLeeParams> {
    Ok(LiLeeParams::from_json(&out.read_string(fit, PARAMS)?)?)
}

fn load_model(out: &OutDir, train: &Manifest) -> CliResult<HybridModel> {
    Ok(HybridModel::from_json(&out.read_string(train, MODEL)?)?)
}

fn factor_rows(panel: &FactorPanel) -> impl Iterator<Item = Vec<String>> + '_ {
    panel.years.iter().zip(panel.values.rows()).map(|(y, r)| {
        std::iter::once(y.to_string()).chain(r.iter().map(|v| f(*v))).collect()
    })
}

pub fn synth(cfg: &RunConfig, out: &OutDir) -> CliResult<()> {
    let mut w = out.stage("synth");
    let (truth, data) = generate(&cfg.scenario())?;
    let mut buf = Vec::new();
    write_cluster_csv(&data, &mut buf)?;
    w.bytes("synthetic_cluster.csv", &buf)?;
    w.text("synthetic_truth.json", &truth.to_json()?)?;
    w.finish()?;
    log::info!(
        "synth: {} countries x {} years x {} ages written to {}",
        data.n_countries(),
        data.years().len(),
        data.ages().len(),
        out.path("synthetic_cluster.csv").display()
    );
    Ok(())
}

pub fn fit(cfg: &RunConfig, out: &OutDir) -> CliResult<()> {
    let data = load_data(cfg)?;
    let mut w = out.stage("fit");
    let params = fit_lilee(&data)?.params;
    let panel = params.factor_panel();
    w.text(PARAMS, &params.to_json()?)?;

    let mut header = vec!["year"];
    header.extend(panel.labels.iter().map(String::as_str));
    w.csv("factors.csv", &header, factor_rows(&panel))?;

    let diag = DiagnosticsConfig::default();
    let reports = panel
        .labels
        .iter()
        .enumerate()
        .map(|(j, label)| stationarity_report(label, &panel.values.column(j).to_vec(), &diag))
        .collect::<hybridlift::Result<Vec<_>>>()?;
    w.text("table1_stationarity.csv", &reports_to_csv(&reports))?;

    let observed = data
        .surfaces
        .iter()
        .map(|s| {
            let last = s.n_years() - 1;
            let e0 = actuarial::e0_of(&s.m.column(last).to_vec())?;
            Ok(vec![s.country.clone(), s.years[last].to_string(), f(e0)])
        })
        .collect::<hybridlift::Result<Vec<_>>>()?;
    w.csv(OBSERVED, &["country", "year", "e0"], observed)?;
    w.finish()?;
    for r in &reports {
        log::info!("fit: {} {}", r.series, r.verdict.label());
    }
    Ok(())
}

pub fn train(cfg: &RunConfig, out: &OutDir) -> CliResult<()> {
    let fit = out.require("fit")?;
    let panel = load_params(out, &fit)?.factor_panel();
    let mut w = out.stage("train");
    w.depends_on(&fit);
    let (model, trace) = HybridModel::fit(
        &panel,
        Representation::Differences,
        cfg.model.split_year,
        cfg.model.lookback,
        &cfg.train_config(),
    )?;
    w.text(MODEL, &model.to_json()?)?;
    w.csv(
        "training_trace.csv",
        &["epoch", "train_loss", "val_loss"],
        trace.epochs.iter().map(|e| vec![e.epoch.to_string(), f(e.train_loss), f(e.val_loss)]),
    )?;
    w.finish()?;
    log::info!(
        "train: best validation loss {:.5} at epoch {} of {}",
        trace.best_val_loss,
        trace.best_epoch,
        trace.epochs.len()
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct EnsembleMeta {
    labels: Vec<String>,
    origin_year: i32,
    origin: Vec<f64>,
    sigma: Vec<f64>,
    seed: u64,
    paths: usize,
    horizon: usize,
}

fn read_ensemble(out: &OutDir, forecast: &Manifest) -> CliResult<ForecastEnsemble> {
    let meta: EnsembleMeta =
        serde_json::from_str(&out.read_string(forecast, ENSEMBLE_META)?).map_err(Error::from)?;
    let gz = out.read(forecast, ENSEMBLE)?;
    let mut text = String::new();
    GzDecoder::new(gz.as_slice())
        .read_to_string(&mut text)
        .map_err(|e| CliError::Data(format!("{ENSEMBLE}: {e}")))?;
    let d = meta.labels.len();
    let mut levels = Array3::from_elem((meta.paths, meta.horizon, d), f64::NAN);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    for (i, rec) in rdr.deserialize::<(usize, i32, String, f64)>().enumerate() {
        let bad = |msg: String| CliError::Data(format!("{ENSEMBLE} row {}: {msg}", i + 2));
        let (path, year, factor, value) = rec.map_err(|e| bad(e.to_string()))?;
        let h = (year - meta.origin_year - 1) as usize;
        let j = meta.labels.iter().position(|l| *l == factor).ok_or_else(|| bad(format!("unknown factor {factor}")))?;
        if path >= meta.paths || h >= meta.horizon {
            return Err(bad("path or year out of range".into()));
        }
        levels[[path, h, j]] = value;
    }
    if levels.iter().any(|v| v.is_nan()) {
        return Err(CliError::Data(format!("{ENSEMBLE} is incomplete")));
    }
    Ok(ForecastEnsemble {
        labels: meta.labels,
        origin_year: meta.origin_year,
        origin: meta.origin,
        levels,
        sigma: meta.sigma,
        seed: meta.seed,
    })
}

fn read_observed(out: &OutDir, fit: &Manifest) -> CliResult<Vec<(String, f64)>> {
    let text = out.read_string(fit, OBSERVED)?;
    csv::Reader::from_reader(text.as_bytes())
        .deserialize::<(String, i32, f64)>()
        .map(|r| r.map(|(c, _, e)| (c, e)).map_err(|e| CliError::Data(format!("{OBSERVED}: {e}"))))
        .collect()
}

pub fn forecast(cfg: &RunConfig, out: &OutDir) -> CliResult<()> {
    let fit = out.require("fit")?;
    let trained = out.require("train")?;
    let params = load_params(out, &fit)?;
    let model = load_model(out, &trained)?;
    let observed = read_observed(out, &fit)?;
    let panel = params.factor_panel();
    let mut w = out.stage("forecast");
    w.depends_on(&fit);
    w.depends_on(&trained);

    let fc = &cfg.forecast;
    let sigma = if fc.process_noise {
        sigma_from_history(&panel)?
    } else {
        vec![0.0; panel.n_factors()]
    };
    let seed = cfg.stage_seed(Stream::Forecast);
    let ens = model.forecast_stochastic(&panel, fc.horizon, fc.paths, &sigma, seed)?;
    let years = ens.years();

    let rows = (0..ens.n_paths()).flat_map(|s| {
        let ens = &ens;
        let years = &years;
        (0..ens.horizon()).flat_map(move |h| {
            (0..ens.n_factors()).map(move |j| {
                vec![s.to_string(), years[h].to_string(), ens.labels[j].clone(), f(ens.levels[[s, h, j]])]
            })
        })
    });
    w.csv_gz(ENSEMBLE, &["path", "year", "factor", "value"], rows)?;
    let meta = EnsembleMeta {
        labels: ens.labels.clone(),
        origin_year: ens.origin_year,
        origin: ens.origin.clone(),
        sigma: sigma.clone(),
        seed,
        paths: ens.n_paths(),
        horizon: ens.horizon(),
    };
    w.text(ENSEMBLE_META, &serde_json::to_string_pretty(&meta).map_err(Error::from)?)?;

    let mut header = vec!["factor", "year"];
    header.extend(FAN_HEADER);
    let q = ensemble_quantiles(&ens, &FAN_LEVELS)?;
    let fan = (0..ens.n_factors()).flat_map(|j| {
        let q = &q;
        let (labels, years) = (&ens.labels, &years);
        (0..ens.horizon()).map(move |h| {
            let mut r = vec![labels[j].clone(), years[h].to_string()];
            r.extend((0..FAN_LEVELS.len()).map(|k| f(q.values[[k, h, j]])));
            r
        })
    });
    w.csv("fan_quantiles.csv", &header, fan)?;

    let mut header = vec!["country", "year"];
    header.extend(FAN_HEADER);
    let mut e0_fan = Vec::new();
    let mut table3 = Vec::new();
    for (i, country) in params.countries.iter().enumerate() {
        let paths = e0_paths(&ens, &params, i)?;
        for (h, col) in paths.columns().into_iter().enumerate() {
            let mut cell = col.to_vec();
            cell.sort_by(f64::total_cmp);
            let mut r = vec![country.clone(), years[h].to_string()];
            r.extend(FAN_LEVELS.iter().map(|lv| f(stats::quantile_sorted(&cell, *lv))));
            e0_fan.push(r);
        }
        let obs = observed.iter().find(|(c, _)| c == country).map(|(_, e)| *e);
        let s = e0_summary(&ens, &params, i, None, fc.band)?;
        log::info!("forecast: {country} e0 {} -> {:.2} in {}", s.origin_year, s.e0_median, s.end_year);
        table3.push(vec![
            country.clone(),
            s.origin_year.to_string(),
            f(s.e0_origin),
            obs.map(f).unwrap_or_default(),
            s.end_year.to_string(),
            f(s.e0_median),
            f(s.e0_lower),
            f(s.e0_upper),
            f(s.net_gain),
        ]);
    }
    w.csv("e0_fan.csv", &header, e0_fan)?;
    w.csv(
        "table3_e0.csv",
        &[
            "country",
            "origin_year",
            "e0_origin",
            "e0_observed",
            "end_year",
            "e0_median",
            "e0_lower",
            "e0_upper",
            "net_gain",
        ],
        table3,
    )?;
    w.finish()?;
    Ok(())
}

pub fn validate(cfg: &RunConfig, out: &OutDir) -> CliResult<()> {
    let fit = out.require("fit")?;
    let trained = out.require("train")?;
    let panel = load_params(out, &fit)?.factor_panel();
    let model = load_model(out, &trained)?;
    let mut w = out.stage("validate");
    w.depends_on(&fit);
    w.depends_on(&trained);
    let v = validate_with(&panel, &model, &cfg.harness_config())?;
    w.csv(
        "table2_benchmark.csv",
        &["series", "rmse_lilee", "rmse_hybrid", "improvement_pct"],
        v.rows
            .iter()
            .map(|r| vec![r.label.clone(), f(r.rmse_lilee), f(r.rmse_hybrid), f(r.improvement_pct)]),
    )?;
    let mut paths = Vec::new();
    for (t, year) in v.years.iter().enumerate() {
        for (j, label) in panel.labels.iter().enumerate() {
            paths.push(vec![
                year.to_string(),
                label.clone(),
                f(v.actual[[t, j]]),
                f(v.lilee[[t, j]]),
                f(v.hybrid[[t, j]]),
            ]);
        }
    }
    w.csv("validation_paths.csv", &["year", "factor", "actual", "lilee", "hybrid"], paths)?;
    w.finish()?;
    for r in &v.rows {
        log::info!("validate: {} improvement {:+.1}%", r.label, r.improvement_pct);
    }
    Ok(())
}

pub fn explain(cfg: &RunConfig, out: &OutDir) -> CliResult<()> {
    let fit = out.require("fit")?;
    let trained = out.require("train")?;
    let panel = load_params(out, &fit)?.factor_panel();
    let model = load_model(out, &trained)?;
    let mut w = out.stage("explain");
    w.depends_on(&fit);
    w.depends_on(&trained);

    let (_, windows) = prepare_windows(&panel, model.representation, model.split_year, model.lookback)?;
    let (background, test) = windows.split(model.split_year);
    let l = model.lookback;
    let labels = &panel.labels;

    let profiles = (0..labels.len())
        .map(|j| temporal_saliency(&model.network, &windows, j))
        .collect::<hybridlift::Result<Vec<_>>>()?;
    let mut header = vec!["lag"];
    header.extend(labels.iter().map(String::as_str));
    w.csv(
        "saliency.csv",
        &header,
        (0..l).map(|k| {
            let mut r = vec![format!("t-{}", l - k)];
            r.extend(profiles.iter().map(|p| f(p.importance[k])));
            r
        }),
    )?;

    let seed = cfg.stage_seed(Stream::Explain);
    let mode = cfg.shap_mode(l * labels.len());
    let mut rows = Vec::new();
    for (j, target) in labels.iter().enumerate() {
        let report = kernel_shap(&model.network, &background, &test, j, mode, seed)?;
        let total: f64 = report.scores.iter().sum();
        for (k, source) in labels.iter().enumerate() {
            let share = if total > 0.0 { 100.0 * report.scores[k] / total } else { 0.0 };
            rows.push(vec![target.clone(), source.clone(), f(report.scores[k]), f(share)]);
        }
    }
    w.csv("influence.csv", &["target", "source", "mean_abs_shap", "share_pct"], rows)?;

    let sweep = lookback_sweep(&panel, &cfg.harness_config(), &cfg.explain.lookbacks)?;
    for l in &sweep.skipped {
        log::warn!("explain: lookback {l} skipped, not enough history");
    }
    w.csv(
        "lookback_sweep.csv",
        &["lookback", "n_train", "n_val", "rmse"],
        sweep
            .rows
            .iter()
            .map(|r| vec![r.lookback.to_string(), r.n_train.to_string(), r.n_val.to_string(), f(r.rmse)]),
    )?;
    w.finish()?;
    let peak = profiles[0]
        .importance
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, v)| (l - k, *v))
        .unwrap_or((0, 0.0));
    log::info!("explain: saliency of {} peaks at t-{} ({:.1}%)", labels[0], peak.0, peak.1);
    Ok(())
}

pub fn stress(cfg: &RunConfig, out: &OutDir) -> CliResult<()> {
    let fit = out.require("fit")?;
    let fc = out.require("forecast")?;
    let params = load_params(out, &fit)?;
    let ens = read_ensemble(out, &fc)?;
    let mut w = out.stage("stress");
    w.depends_on(&fit);
    w.depends_on(&fc);

    let last = ens.horizon() - 1;
    let mean_k = stats::mean(&ens.factor(0).column(last).to_vec());
    let st = &cfg.stress;
    let mut table = Vec::new();
    let mut points = Vec::new();
    for (i, country) in params.countries.iter().enumerate() {
        let terminal = e0_paths(&ens, &params, i)?.column(last).to_vec();
        let r = scr(&terminal)?;
        let rs = reverse_stress(&params, mean_k, i, r.scr_es, &st.shocks).map_err(|e| match e {
            Error::Degenerate(msg) => Error::Degenerate(format!("{country}: {msg}")),
            other => other,
        })?;
        let mono = match monotonicity_check(
            &reconstruct_surface(&params, i, mean_k),
            st.monotonicity_from,
            st.monotonicity_to,
        )? {
            Monotonicity::Pass => "PASS".to_string(),
            Monotonicity::Fail { age } => format!("FAIL at age {age}"),
        };
        log::info!(
            "stress: {country} SCR_ES {:+.3} years, delta* {:.1}%, monotonicity {mono}",
            r.scr_es,
            100.0 * rs.delta_star
        );
        table.push(vec![
            country.clone(),
            f(r.mean_e0),
            f(r.var_99_5),
            f(r.es_99_0),
            f(r.scr_var),
            f(r.scr_es),
            f(rs.delta_star),
            f(rs.sensitivity),
            f(rs.sensitivity_cv),
            mono,
        ]);
        points.extend(
            rs.points
                .iter()
                .map(|p| vec![country.clone(), f(p.shock), f(p.delta_e0), f(p.sensitivity)]),
        );
    }
    w.csv(
        "table4_risk.csv",
        &[
            "country",
            "mean_e0",
            "var_99_5",
            "es_99_0",
            "scr_var",
            "scr_es",
            "delta_star",
            "sensitivity",
            "sensitivity_cv",
            "monotonicity",
        ],
        table,
    )?;
    w.csv("stress_points.csv", &["country", "shock", "delta_e0", "sensitivity"], points)?;
    w.finish()?;
    Ok(())
}

pub fn ablate_stage(cfg: &RunConfig, out: &OutDir) -> CliResult<()> {
    let fit = out.require("fit")?;
    let panel = load_params(out, &fit)?.factor_panel();
    let mut w = out.stage("ablate");
    w.depends_on(&fit);
    let rows = ablate(
        &panel,
        &cfg.harness_config(),
        &[Variant::Baseline, Variant::NoMbc, Variant::NoDifferences],
    )?;
    w.csv(
        "table5_ablation.csv",
        &["variant", "rmse_k", "degradation_pct"],
        rows.iter()
            .map(|r| vec![r.variant.label().to_string(), f(r.rmse), f(r.degradation_pct)]),
    )?;
    w.finish()?;
    for r in &rows {
        log::info!("ablate: {} RMSE {:.4} ({:+.1}%)", r.variant.label(), r.rmse, r.degradation_pct);
    }
    Ok(())
}
