use hybridlift::forecast::{HybridModel, MbcVector, Representation};
use hybridlift::harness::*;
use hybridlift::lilee::{fit_lilee, FactorPanel};
use hybridlift::nn::{grid_search, Architecture, GridCandidate, NetworkParams, TrainConfig};
use hybridlift::synthetic::{generate, ScenarioConfig};
use hybridlift::tensor::ScalerParams;
use ndarray::Array2;

fn quick() -> TrainConfig {
    TrainConfig {
        hidden1: 8,
        hidden2: 4,
        max_epochs: 40,
        ..TrainConfig::default()
    }
}

fn synthetic_panel(seed: u64) -> FactorPanel {
    let scenario = ScenarioConfig {
        countries: vec!["A".into(), "B".into(), "C".into()],
        ..ScenarioConfig::unit_root(seed)
    };
    let (_, data) = generate(&scenario).unwrap();
    fit_lilee(&data).unwrap().params.factor_panel()
}

fn cfg() -> HarnessConfig {
    HarnessConfig {
        train: quick(),
        ..HarnessConfig::default()
    }
}

#[test]
fn improvement_formula_and_sign_flip() {
    assert_eq!(improvement_pct(2.0, 1.5), 25.0);
    assert_eq!(improvement_pct(1.0, 1.0), 0.0);
    for (a, b) in [(0.3, 0.7), (2.0, 1.1), (5.0, 5.5)] {
        assert!(improvement_pct(a, b).signum() == -improvement_pct(b, a).signum());
    }
    assert!((degradation_pct(1.486, 1.0) - 48.6).abs() < 1e-12);
    assert_eq!(degradation_pct(2.0, 2.0), 0.0);
}

/// A hybrid whose network is silent and whose scaler mean equals the
/// benchmark's corrected drift walks the same common-factor path.
#[test]
fn identical_forecasters_score_zero() {
    let panel = synthetic_panel(1);
    let bench = LinearBenchmark::fit(&panel, 2011).unwrap();
    let d = panel.n_factors();
    let mut mean = vec![0.0; d];
    mean[0] = bench.forecaster.common.drift + bench.mbc[0];
    let model = HybridModel {
        labels: panel.labels.clone(),
        representation: Representation::Differences,
        lookback: 10,
        split_year: 2011,
        scaler: ScalerParams { mean, sd: vec![1.0; d] },
        network: NetworkParams::zeros(Architecture { input: d, hidden1: 3, hidden2: 2, output: d }, 0.2),
        mbc: MbcVector::zeros(d),
    };
    let c = HarnessConfig {
        rmse_target: RmseTarget::CommonFactor,
        ..cfg()
    };
    let v = validate_with(&panel, &model, &c).unwrap();
    assert_eq!(v.rows.len(), 1);
    assert!(v.rows[0].improvement_pct.abs() < 1e-9, "{:?}", v.rows);
    // without the correction the silent model loses its drift and falls apart
    assert_eq!(hybrid_validation_path(&panel, &model.without_mbc(), ValidationMode::Recursive).unwrap(),
               hybrid_validation_path(&panel, &model, ValidationMode::Recursive).unwrap());
}

#[test]
fn three_year_rmse_by_hand() {
    // levels: K falls by 1 a year, two specific factors
    let n = 25;
    let values = Array2::from_shape_fn((n, 3), |(t, j)| match j {
        0 => -(t as f64) + 0.3 * (t as f64 * 1.7).cos(),
        1 => 0.8f64.powi(t as i32) * 3.0 + if t >= 22 { 0.5 } else { 0.0 },
        _ => ((t as f64) * 0.9).sin(),
    });
    let panel = FactorPanel::new((1996..1996 + n as i32).collect(), vec!["K".into(), "a".into(), "b".into()], values).unwrap();
    let c = HarnessConfig {
        split_year: 2017,
        lookback: 4,
        train: TrainConfig { max_epochs: 5, hidden1: 4, hidden2: 3, ..TrainConfig::default() },
        ..HarnessConfig::default()
    };
    let (v, _, _) = validate(&panel, &c).unwrap();
    assert_eq!(v.years, vec![2018, 2019, 2020]);
    for (i, j) in [1usize, 2].iter().enumerate() {
        let brute = |p: &Array2<f64>| {
            let se: f64 = (0..3).map(|h| (v.actual[[h, *j]] - p[[h, *j]]).powi(2)).sum();
            (se / 3.0).sqrt()
        };
        assert!((v.rows[i].rmse_lilee - brute(&v.lilee)).abs() < 1e-12);
        assert!((v.rows[i].rmse_hybrid - brute(&v.hybrid)).abs() < 1e-12);
        let imp = (v.rows[i].rmse_lilee - v.rows[i].rmse_hybrid) / v.rows[i].rmse_lilee * 100.0;
        assert!((v.rows[i].improvement_pct - imp).abs() < 1e-12);
    }
}

#[test]
fn benchmark_correction_uses_observed_previous_levels() {
    let panel = synthetic_panel(2);
    let b = LinearBenchmark::fit(&panel, 2011).unwrap();
    let start = panel.until(2011).unwrap().len();
    let mut want = vec![0.0; panel.n_factors()];
    for t in start..panel.len() {
        let prev = panel.values.row(t - 1).to_vec();
        let step = b.forecaster.predicted_step(&prev);
        for j in 0..want.len() {
            want[j] += (panel.values[[t, j]] - prev[j] - step[j]) / (panel.len() - start) as f64;
        }
    }
    for (a, w) in b.mbc.iter().zip(&want) {
        assert!((a - w).abs() < 1e-12);
    }
    let plain = b.without_mbc().forecast(&panel.last_row(), 3);
    let central = b.forecaster.forecast_central(&panel.last_row(), 3);
    for (x, y) in plain.iter().zip(central.iter()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn one_step_mode_scores_both_models() {
    let panel = synthetic_panel(3);
    let c = HarnessConfig { mode: ValidationMode::OneStep, ..cfg() };
    let (v, model, _) = validate(&panel, &c).unwrap();
    assert_eq!(v.hybrid.nrows(), 9);
    let first = hybrid_validation_path(&panel, &model, ValidationMode::OneStep).unwrap();
    let rec = hybrid_validation_path(&panel, &model, ValidationMode::Recursive).unwrap();
    // the first validation year is the same one-step prediction either way
    for j in 0..panel.n_factors() {
        assert!((first[[0, j]] - rec[[0, j]]).abs() < 1e-12);
    }
}

#[test]
fn ablation_baseline_is_zero_and_variants_are_reported() {
    let panel = synthetic_panel(4);
    let rows = ablate(&panel, &cfg(), &[Variant::Baseline, Variant::NoMbc, Variant::NoDifferences]).unwrap();
    assert_eq!(rows[0].degradation_pct, 0.0);
    assert_eq!(rows.iter().map(|r| r.variant).collect::<Vec<_>>(), vec![Variant::Baseline, Variant::NoMbc, Variant::NoDifferences]);
    assert!(rows.iter().all(|r| r.rmse.is_finite() && r.rmse >= 0.0));
}

#[test]
fn lookback_sweep_counts_and_determinism() {
    let panel = synthetic_panel(5);
    let c = cfg();
    let s = lookback_sweep(&panel, &c, &[5, 10, 15, 60]).unwrap();
    assert_eq!(s.skipped, vec![60]);
    let n: Vec<usize> = s.rows.iter().map(|r| r.n_train).collect();
    assert_eq!(n[0] - n[1], 5);
    assert_eq!(n[1] - n[2], 5);
    assert!(s.rows.iter().all(|r| r.n_val == 9));
    assert_eq!(s, lookback_sweep(&panel, &c, &[5, 10, 15, 60]).unwrap());
}

#[test]
fn validation_is_reproducible() {
    let panel = synthetic_panel(6);
    let (a, ma, _) = validate(&panel, &cfg()).unwrap();
    let (b, mb, _) = validate(&panel, &cfg()).unwrap();
    assert_eq!(a, b);
    assert_eq!(ma, mb);
}

#[test]
fn grid_search_contracts() {
    let panel = synthetic_panel(7);
    let (_, w) = hybridlift::forecast::prepare_windows(&panel, Representation::Differences, 2011, 10).unwrap();
    let (tr, va) = w.split(2011);
    let base = quick();
    let champ = GridCandidate { hidden1: base.hidden1, hidden2: base.hidden2, learning_rate: base.learning_rate };
    let one = grid_search(&tr, &va, &base, std::slice::from_ref(&champ)).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].candidate, champ);
    let (_, trace) = hybridlift::nn::train(&tr, &va, &base).unwrap();
    assert_eq!(one[0].val_loss, trace.best_val_loss);

    let other = GridCandidate { hidden1: 4, hidden2: 2, learning_rate: 3e-3 };
    let res = grid_search(&tr, &va, &base, &[champ.clone(), other.clone(), champ.clone()]).unwrap();
    let dup: Vec<_> = res.iter().filter(|r| r.candidate == champ).collect();
    assert_eq!(dup.len(), 2);
    assert_eq!(dup[0].val_loss, dup[1].val_loss);
    assert!(dup[0].index < dup[1].index);
    assert!(res.windows(2).all(|w| w[0].val_loss <= w[1].val_loss));
}
