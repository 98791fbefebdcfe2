//! Gradient saliency over lags and Shapley attribution over window cells.

use ndarray::Array2;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::nn::NetworkParams;
use crate::tensor::WindowedDataset;

/// Largest input size accepted by the exact enumeration.
pub const EXACT_MAX_FEATURES: usize = 20;
const RIDGE: f64 = 1e-8;

/// Share of input-gradient magnitude per lag, in percent. Index 0 is the
/// oldest lag in the window, the last index is the most recent year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyProfile {
    pub importance: Vec<f64>,
}

/// Per sample, mean |d y_j / d x| over features at each lag; averaged over
/// samples and normalized to sum to 100.
pub fn temporal_saliency(
    network: &NetworkParams,
    windows: &WindowedDataset,
    output_index: usize,
) -> Result<SaliencyProfile> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("saliency needs at least one window".into()));
    }
    let (l, d) = (windows.lookback(), windows.n_features());
    let grads: Vec<Array2<f64>> = (0..windows.len())
        .into_par_iter()
        .map(|s| network.input_gradient(windows.sample(s), output_index))
        .collect::<Result<_>>()?;
    let mut acc = vec![0.0; l];
    for g in &grads {
        for (lag, row) in g.rows().into_iter().enumerate() {
            acc[lag] += row.iter().map(|v| v.abs()).sum::<f64>() / d as f64;
        }
    }
    let total: f64 = acc.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("input gradient vanishes on every window".into()));
    }
    Ok(SaliencyProfile {
        importance: acc.iter().map(|v| 100.0 * v / total).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ShapMode {
    /// All `2^d` coalitions, classic Shapley formula.
    Exact,
    /// Kernel SHAP with a budget of coalitions besides the empty and full ones.
    Sampled { n_coalitions: usize },
}

impl ShapMode {
    /// Default budget `2 d + 2048`.
    pub fn default_sampled(d: usize) -> Self {
        ShapMode::Sampled {
            n_coalitions: 2 * d + 2048,
        }
    }
}

/// Attribution of one prediction: `base + sum(phi) = f(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub base: f64,
    pub fx: f64,
    pub phi: Vec<f64>,
}

fn masked(x: &[f64], background: &[f64], mask: &[bool], buf: &mut [f64]) {
    for k in 0..x.len() {
        buf[k] = if mask[k] { x[k] } else { background[k] };
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact Shapley values of the game `v(S) = f(x_S, background_rest)`.
pub fn shapley_exact<F>(f: &F, x: &[f64], background: &[f64]) -> Result<ShapExplanation>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let d = x.len();
    if d == 0 || d > EXACT_MAX_FEATURES {
        return Err(Error::InvalidArgument(format!(
            "exact Shapley values need 1..={EXACT_MAX_FEATURES} features, got {d}"
        )));
    }
    let n_sets = 1usize << d;
    let values: Vec<f64> = (0..n_sets)
        .into_par_iter()
        .map(|bits| {
            let mask: Vec<bool> = (0..d).map(|k| bits >> k & 1 == 1).collect();
            let mut buf = vec![0.0; d];
            masked(x, background, &mask, &mut buf);
            f(&buf)
        })
        .collect();
    // |S|! (d - |S| - 1)! / d!
    let weight: Vec<f64> = (0..d).map(|s| 1.0 / (d as f64 * binomial(d - 1, s))).collect();
    let mut phi = vec![0.0; d];
    for bits in 0..n_sets {
        let size = (bits as u64).count_ones() as usize;
        for (j, p) in phi.iter_mut().enumerate() {
            if bits >> j & 1 == 0 {
                *p += weight[size] * (values[bits | 1 << j] - values[bits]);
            }
        }
    }
    Ok(ShapExplanation {
        base: values[0],
        fx: values[n_sets - 1],
        phi,
    })
}

/// Kernel-weighted coalitions in the style of the reference KernelExplainer:
/// subset sizes are enumerated completely, smallest first (paired with their
/// complements), while the budget allows; the rest of the budget is drawn at
/// random by size according to the remaining kernel weight.
fn coalitions(d: usize, budget: usize, rng: &mut ChaCha8Rng) -> Vec<(Vec<bool>, f64)> {
    // ceil((d - 1) / 2) sizes, floor((d - 1) / 2) of them paired
    let n_sizes = d.saturating_sub(1).div_ceil(2);
    let n_paired = (d.saturating_sub(1)) / 2;
    let mut weights: Vec<f64> = (1..=n_sizes)
        .map(|s| (d - 1) as f64 / (s * (d - s)) as f64)
        .collect();
    for w in weights.iter_mut().take(n_paired) {
        *w *= 2.0;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let mut out: Vec<(Vec<bool>, f64)> = Vec::new();
    let mut left = budget as f64;
    let mut remaining = weights.clone();
    let mut full = 0;
    for s in 1..=n_sizes {
        let paired = s <= n_paired;
        let count = binomial(d, s) * if paired { 2.0 } else { 1.0 };
        if left * remaining[s - 1] / count < 1.0 - 1e-8 {
            break;
        }
        full += 1;
        left -= count;
        if remaining[s - 1] < 1.0 {
            let r = 1.0 - remaining[s - 1];
            remaining.iter_mut().for_each(|w| *w /= r);
        }
        let w = weights[s - 1] / binomial(d, s) / if paired { 2.0 } else { 1.0 };
        for combo in combinations(d, s) {
            let mut mask = vec![false; d];
            combo.iter().for_each(|&k| mask[k] = true);
            if paired {
                out.push((mask.iter().map(|m| !m).collect(), w));
            }
            out.push((mask, w));
        }
    }
    let left = left.max(0.0) as usize;
    if full < n_sizes && left > 0 {
        let tail = &weights[full..];
        let tail_total: f64 = tail.iter().sum();
        let fixed = out.len();
        let mut sampled: std::collections::HashMap<Vec<bool>, f64> = std::collections::HashMap::new();
        let mut order: Vec<Vec<bool>> = Vec::new();
        let mut drawn = 0;
        while drawn < left {
            let u: f64 = rng.gen::<f64>() * tail_total;
            let mut acc = 0.0;
            let mut s = full + tail.len();
            for (k, w) in tail.iter().enumerate() {
                acc += w;
                if u < acc {
                    s = full + k + 1;
                    break;
                }
            }
            let mut mask = vec![false; d];
            for k in sample_indices(rng, d, s) {
                mask[k] = true;
            }
            let mut add = |m: Vec<bool>| {
                if let Some(w) = sampled.get_mut(&m) {
                    *w += 1.0;
                } else {
                    order.push(m.clone());
                    sampled.insert(m, 1.0);
                }
            };
            add(mask.clone());
            drawn += 1;
            if s <= n_paired && drawn < left {
                add(mask.iter().map(|m| !m).collect());
                drawn += 1;
            }
        }
        let weight_left = 1.0 - weights[..full].iter().sum::<f64>();
        let count: f64 = sampled.values().sum();
        for m in order {
            let w = sampled[&m] * weight_left / count;
            out.push((m, w));
        }
        debug_assert!(out.len() > fixed);
    }
    out
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Kernel SHAP: weighted least squares over sampled coalitions with the
/// empty and full coalitions imposed as exact constraints, so that
/// `base + sum(phi) = f(x)` holds by construction.
pub fn kernel_shap_fn<F>(
    f: &F,
    x: &[f64],
    background: &[f64],
    n_coalitions: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ShapExplanation>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let d = x.len();
    if d == 0 || background.len() != d {
        return Err(Error::Dimension(format!(
            "input has {d} features, background {}",
            background.len()
        )));
    }
    let base = f(background);
    let fx = f(x);
    let gap = fx - base;
    if d == 1 {
        return Ok(ShapExplanation { base, fx, phi: vec![gap] });
    }
    let coal = coalitions(d, n_coalitions, rng);
    if coal.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "coalition budget {n_coalitions} is too small for {d} features"
        )));
    }
    let evals: Vec<f64> = coal
        .par_iter()
        .map(|(mask, _)| {
            let mut buf = vec![0.0; d];
            masked(x, background, mask, &mut buf);
            f(&buf)
        })
        .collect();
    // eliminate the last feature via the efficiency constraint
    let p = d - 1;
    let mut xtwx = vec![0.0; p * p];
    let mut xtwy = vec![0.0; p];
    let mut row = vec![0.0; p];
    for ((mask, w), v) in coal.iter().zip(&evals) {
        let zl = if mask[p] { 1.0 } else { 0.0 };
        let y = v - base - zl * gap;
        for j in 0..p {
            row[j] = f64::from(u8::from(mask[j])) - zl;
        }
        for a in 0..p {
            if row[a] == 0.0 {
                continue;
            }
            xtwy[a] += w * row[a] * y;
            for b in 0..p {
                xtwx[a * p + b] += w * row[a] * row[b];
            }
        }
    }
    let solved = match linalg::solve(&xtwx, &xtwy, p, 1e-13) {
        Some(s) => s,
        None => {
            log::warn!("kernel SHAP system is singular, adding ridge {RIDGE}");
            for a in 0..p {
                xtwx[a * p + a] += RIDGE;
            }
            linalg::solve(&xtwx, &xtwy, p, 0.0)
                .ok_or_else(|| Error::Numeric("kernel SHAP system unsolvable after ridge".into()))?
        }
    };
    let mut phi = solved;
    let rest: f64 = phi.iter().sum();
    phi.push(gap - rest);
    Ok(ShapExplanation { base, fx, phi })
}

/// Attributions for every test window, flattened as `lag * features + feature`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapReport {
    pub output_index: usize,
    pub lookback: usize,
    pub n_features: usize,
    pub base_value: f64,
    /// samples x (lookback * features)
    pub phi: Array2<f64>,
    pub fx: Vec<f64>,
    /// Mean |phi| per factor over samples and lags.
    pub scores: Vec<f64>,
}

/// Explains output `output_index` of the network on each test window, with
/// absent cells replaced by the mean background window.
pub fn kernel_shap(
    network: &NetworkParams,
    background: &WindowedDataset,
    test: &WindowedDataset,
    output_index: usize,
    mode: ShapMode,
    seed: u64,
) -> Result<ShapReport> {
    if background.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument("SHAP needs background and test windows".into()));
    }
    if output_index >= network.arch.output {
        return Err(Error::InvalidArgument(format!("output index {output_index} out of range")));
    }
    let (l, nf) = (test.lookback(), test.n_features());
    if background.lookback() != l || background.n_features() != nf {
        return Err(Error::Dimension("background and test windows differ in shape".into()));
    }
    let bg_flat = background.flattened();
    let bg_mean: Vec<f64> = bg_flat.columns().into_iter().map(|c| c.mean().unwrap_or(0.0)).collect();
    let f = |v: &[f64]| -> f64 {
        let w = ndarray::ArrayView2::from_shape((l, nf), v).expect("window shape");
        network.predict(w).map(|p| p[output_index]).unwrap_or(f64::NAN)
    };
    let flat = test.flattened();
    let expl: Vec<ShapExplanation> = (0..test.len())
        .into_par_iter()
        .map(|s| {
            let x = flat.row(s).to_vec();
            match mode {
                ShapMode::Exact => shapley_exact(&f, &x, &bg_mean),
                ShapMode::Sampled { n_coalitions } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(s as u64);
                    kernel_shap_fn(&f, &x, &bg_mean, n_coalitions, &mut rng)
                }
            }
        })
        .collect::<Result<_>>()?;
    if expl.iter().any(|e| !e.fx.is_finite() || e.phi.iter().any(|p| !p.is_finite())) {
        return Err(Error::Numeric("non-finite SHAP attribution".into()));
    }
    let mut phi = Array2::zeros((test.len(), l * nf));
    for (s, e) in expl.iter().enumerate() {
        phi.row_mut(s).assign(&ndarray::Array1::from(e.phi.clone()));
    }
    let scores = aggregate_influence(&phi, l, nf)?;
    Ok(ShapReport {
        output_index,
        lookback: l,
        n_features: nf,
        base_value: expl[0].base,
        fx: expl.iter().map(|e| e.fx).collect(),
        phi,
        scores,
    })
}

/// Mean over samples and lags of |phi| for each factor.
pub fn aggregate_influence(phi: &Array2<f64>, lookback: usize, n_features: usize) -> Result<Vec<f64>> {
    let (s, w) = phi.dim();
    if w != lookback * n_features || s == 0 {
        return Err(Error::Dimension(format!(
            "attribution matrix {s}x{w} does not match {lookback} lags x {n_features} factors"
        )));
    }
    let mut scores = vec![0.0; n_features];
    for row in phi.rows() {
        for (k, v) in row.iter().enumerate() {
            scores[k % n_features] += v.abs();
        }
    }
    let norm = (s * lookback) as f64;
    Ok(scores.into_iter().map(|v| v / norm).collect())
}
