use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NETWORK_FORMAT: &str = "hybridlift/lstm-network";
pub const NETWORK_VERSION: u32 = 1;

/// Layer sizes. Gate blocks inside every LSTM kernel are ordered
/// input, forget, cell, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub output: usize,
}

impl Architecture {
    /// 32/16 hidden units on `features` inputs and outputs.
    pub fn champion(features: usize) -> Self {
        Self {
            input: features,
            hidden1: 32,
            hidden2: 16,
            output: features,
        }
    }

    pub fn n_params(&self) -> usize {
        self.layout().total
    }

    fn layout(&self) -> Layout {
        let (i, h1, h2, o) = (self.input, self.hidden1, self.hidden2, self.output);
        let mut off = 0;
        let mut take = |n: usize| {
            let r = off..off + n;
            off += n;
            r
        };
        let l1 = LayerLayout {
            w: take(4 * h1 * i),
            u: take(4 * h1 * h1),
            b: take(4 * h1),
            input: i,
            hidden: h1,
        };
        let l2 = LayerLayout {
            w: take(4 * h2 * h1),
            u: take(4 * h2 * h2),
            b: take(4 * h2),
            input: h1,
            hidden: h2,
        };
        let head_w = take(o * h2);
        let head_b = take(o);
        Layout {
            l1,
            l2,
            head_w,
            head_b,
            total: off,
        }
    }
}

#[derive(Debug, Clone)]
struct LayerLayout {
    w: std::ops::Range<usize>,
    u: std::ops::Range<usize>,
    b: std::ops::Range<usize>,
    input: usize,
    hidden: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    l1: LayerLayout,
    l2: LayerLayout,
    head_w: std::ops::Range<usize>,
    head_b: std::ops::Range<usize>,
    total: usize,
}

/// All trainable weights in one flat vector plus the dropout rate applied to
/// first-layer outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub arch: Architecture,
    pub dropout_rate: f64,
    pub theta: Vec<f64>,
}

/// Gradient buffer shaped like [`NetworkParams::theta`].
pub type ParamGradients = Vec<f64>;

pub enum DropoutMode<'a, R: Rng> {
    Deterministic,
    /// Fresh inverted-dropout mask per time step and unit, drawn from `rng`.
    Sampled(&'a mut R),
}

impl NetworkParams {
    pub fn zeros(arch: Architecture, dropout_rate: f64) -> Self {
        Self {
            arch,
            dropout_rate,
            theta: vec![0.0; arch.n_params()],
        }
    }

    /// Xavier-uniform kernels (input and recurrent), forget-gate bias 1, all
    /// other biases 0.
    pub fn init<R: Rng>(arch: Architecture, dropout_rate: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch, dropout_rate);
        let lay = arch.layout();
        let mut fill = |theta: &mut [f64], fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in theta.iter_mut() {
                *v = rng.gen_range(-limit..limit);
            }
        };
        for l in [&lay.l1, &lay.l2] {
            fill(&mut p.theta[l.w.clone()], l.input, 4 * l.hidden);
            fill(&mut p.theta[l.u.clone()], l.hidden, 4 * l.hidden);
            let b = &mut p.theta[l.b.clone()];
            b[l.hidden..2 * l.hidden].iter_mut().for_each(|v| *v = 1.0);
        }
        fill(&mut p.theta[lay.head_w.clone()], arch.hidden2, arch.output);
        p
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.len() != self.arch.n_params() {
            return Err(Error::Dimension(format!(
                "network has {} weights, architecture {:?} needs {}",
                self.theta.len(),
                self.arch,
                self.arch.n_params()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite network weight".into()));
        }
        Ok(())
    }

    /// Mutable views used by tests and constructed networks:
    /// (layer-1 W, U, b), (layer-2 W, U, b), (head W, head b).
    pub fn layer1_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64]) {
        let l = self.arch.layout().l1;
        split3(&mut self.theta, l.w, l.u, l.b)
    }

    pub fn layer2_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64]) {
        let l = self.arch.layout().l2;
        split3(&mut self.theta, l.w, l.u, l.b)
    }

    pub fn head_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        let lay = self.arch.layout();
        let (a, b) = self.theta.split_at_mut(lay.head_b.start);
        (&mut a[lay.head_w], b)
    }

    pub fn head_bias(&self) -> &[f64] {
        &self.theta[self.arch.layout().head_b]
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            format: &'a str,
            version: u32,
            network: &'a NetworkParams,
        }
        Ok(serde_json::to_string(&Doc {
            format: NETWORK_FORMAT,
            version: NETWORK_VERSION,
            network: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            format: String,
            version: u32,
            network: NetworkParams,
        }
        let doc: Doc = serde_json::from_str(text)?;
        if doc.format != NETWORK_FORMAT || doc.version != NETWORK_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported network document {} v{}",
                doc.format, doc.version
            )));
        }
        doc.network.validate()?;
        Ok(doc.network)
    }

    /// Prediction for one window (`L x input`).
    pub fn forward<R: Rng>(&self, x: ArrayView2<f64>, mode: DropoutMode<'_, R>) -> Result<Vec<f64>> {
        let x = window_slice(x, self.arch.input)?;
        let steps = x.len() / self.arch.input;
        let mask = match mode {
            DropoutMode::Sampled(rng) if self.dropout_rate > 0.0 => Some(self.sample_mask(steps, rng)),
            _ => None,
        };
        let cache = self.forward_cached(&x, steps, mask);
        let y = cache.output;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("network output is not finite".into()));
        }
        Ok(y)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.forward::<rand_chacha::ChaCha8Rng>(x, DropoutMode::Deterministic)
    }

    pub(crate) fn sample_mask<R: Rng>(&self, steps: usize, rng: &mut R) -> Vec<f64> {
        let keep = 1.0 - self.dropout_rate;
        let scale = 1.0 / keep;
        (0..steps * self.arch.hidden1)
            .map(|_| if rng.gen::<f64>() < keep { scale } else { 0.0 })
            .collect()
    }

    pub(crate) fn forward_cached(&self, x: &[f64], steps: usize, mask: Option<Vec<f64>>) -> ForwardCache {
        let lay = self.arch.layout();
        let l1 = run_layer(&self.theta, &lay.l1, x, steps);
        let mut l2_in = l1.h.clone();
        if let Some(m) = &mask {
            for (v, s) in l2_in.iter_mut().zip(m) {
                *v *= s;
            }
        }
        let l2 = run_layer(&self.theta, &lay.l2, &l2_in, steps);
        let h2 = &l2.h[(steps - 1) * lay.l2.hidden..];
        let vw = &self.theta[lay.head_w.clone()];
        let vb = &self.theta[lay.head_b.clone()];
        let output = (0..self.arch.output)
            .map(|o| vb[o] + dot(&vw[o * lay.l2.hidden..(o + 1) * lay.l2.hidden], h2))
            .collect();
        ForwardCache {
            x: x.to_vec(),
            steps,
            mask,
            l1,
            l2_in,
            l2,
            output,
        }
    }

    /// Reverse pass for one cached forward. Adds `d loss / d theta` into
    /// `grad` when given and returns `d loss / d x` (`L x input`, row-major)
    /// when `want_input` is set.
    pub(crate) fn backward(
        &self,
        cache: &ForwardCache,
        d_out: &[f64],
        grad: Option<&mut [f64]>,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let lay = self.arch.layout();
        let steps = cache.steps;
        let (h1, h2) = (lay.l1.hidden, lay.l2.hidden);
        let vw = &self.theta[lay.head_w.clone()];

        let mut dh2_ext = vec![0.0; steps * h2];
        let last = &mut dh2_ext[(steps - 1) * h2..];
        for (o, &g) in d_out.iter().enumerate() {
            let row = &vw[o * h2..(o + 1) * h2];
            for k in 0..h2 {
                last[k] += g * row[k];
            }
        }

        let mut grad = grad;
        if let Some(g) = grad.as_deref_mut() {
            let h2_last = &cache.l2.h[(steps - 1) * h2..];
            for (o, &go) in d_out.iter().enumerate() {
                let gw = &mut g[lay.head_w.start + o * h2..lay.head_w.start + (o + 1) * h2];
                for k in 0..h2 {
                    gw[k] += go * h2_last[k];
                }
                g[lay.head_b.start + o] += go;
            }
        }

        let mut d_l2_in = vec![0.0; steps * h1];
        backprop_layer(
            &self.theta,
            &lay.l2,
            &cache.l2_in,
            &cache.l2,
            &dh2_ext,
            grad.as_deref_mut(),
            Some(&mut d_l2_in),
        );
        if let Some(m) = &cache.mask {
            for (d, s) in d_l2_in.iter_mut().zip(m) {
                *d *= s;
            }
        }
        let mut dx = if want_input {
            Some(vec![0.0; steps * lay.l1.input])
        } else {
            None
        };
        backprop_layer(&self.theta, &lay.l1, &cache.x, &cache.l1, &d_l2_in, grad, dx.as_deref_mut());
        dx
    }

    /// `d prediction[j] / d x` for a deterministic forward pass, `L x input`.
    pub fn input_gradient(&self, x: ArrayView2<f64>, output_index: usize) -> Result<Array2<f64>> {
        if output_index >= self.arch.output {
            return Err(Error::InvalidArgument(format!(
                "output index {output_index} out of range {}",
                self.arch.output
            )));
        }
        let flat = window_slice(x, self.arch.input)?;
        let steps = flat.len() / self.arch.input;
        let cache = self.forward_cached(&flat, steps, None);
        let mut d_out = vec![0.0; self.arch.output];
        d_out[output_index] = 1.0;
        let dx = self.backward(&cache, &d_out, None, true).unwrap();
        Ok(Array2::from_shape_vec((steps, self.arch.input), dx).expect("shape"))
    }

    /// Mean over samples of the squared error norm, and optionally its
    /// gradient, for a batch of windows. With `rng` set, each sample gets its
    /// own dropout mask.
    pub fn batch_loss<R: Rng>(
        &self,
        inputs: &[Vec<f64>],
        targets: &[Vec<f64>],
        steps: usize,
        mut rng: Option<&mut R>,
        grad: Option<&mut [f64]>,
    ) -> f64 {
        let n = inputs.len() as f64;
        let mut loss = 0.0;
        let mut grad = grad;
        for (x, y) in inputs.iter().zip(targets) {
            let mask = match rng.as_deref_mut() {
                Some(r) if self.dropout_rate > 0.0 => Some(self.sample_mask(steps, r)),
                _ => None,
            };
            let cache = self.forward_cached(x, steps, mask);
            let mut d_out = Vec::with_capacity(y.len());
            for (p, t) in cache.output.iter().zip(y) {
                let e = p - t;
                loss += e * e;
                d_out.push(2.0 * e / n);
            }
            if let Some(g) = grad.as_deref_mut() {
                self.backward(&cache, &d_out, Some(g), false);
            }
        }
        loss / n
    }
}

fn split3(
    theta: &mut [f64],
    w: std::ops::Range<usize>,
    u: std::ops::Range<usize>,
    b: std::ops::Range<usize>,
) -> (&mut [f64], &mut [f64], &mut [f64]) {
    let (_, rest) = theta.split_at_mut(w.start);
    let (wv, rest) = rest.split_at_mut(w.len());
    let (uv, rest) = rest.split_at_mut(u.len());
    let (bv, _) = rest.split_at_mut(b.len());
    (wv, uv, bv)
}

pub(crate) fn window_slice(x: ArrayView2<f64>, input: usize) -> Result<Vec<f64>> {
    let (steps, width) = x.dim();
    if width != input || steps == 0 {
        return Err(Error::Dimension(format!(
            "window is {steps}x{width}, network expects Lx{input}"
        )));
    }
    let flat: Vec<f64> = x.iter().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite network input".into()));
    }
    Ok(flat)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Per-step activations of one LSTM layer, all `steps x ...` row-major.
#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    /// activated gates, `steps x 4H` (i, f, g, o)
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    pub(crate) h: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    x: Vec<f64>,
    steps: usize,
    mask: Option<Vec<f64>>,
    l1: LayerCache,
    l2_in: Vec<f64>,
    l2: LayerCache,
    pub(crate) output: Vec<f64>,
}

fn run_layer(theta: &[f64], lay: &LayerLayout, xs: &[f64], steps: usize) -> LayerCache {
    let (ni, nh) = (lay.input, lay.hidden);
    let w = &theta[lay.w.clone()];
    let u = &theta[lay.u.clone()];
    let b = &theta[lay.b.clone()];
    let mut cache = LayerCache {
        gates: vec![0.0; steps * 4 * nh],
        c: vec![0.0; steps * nh],
        tanh_c: vec![0.0; steps * nh],
        h: vec![0.0; steps * nh],
    };
    let zero = vec![0.0; nh];
    for t in 0..steps {
        let x = &xs[t * ni..(t + 1) * ni];
        let (h_prev, c_prev) = if t == 0 {
            (&zero[..], &zero[..])
        } else {
            (
                &cache.h[(t - 1) * nh..t * nh],
                &cache.c[(t - 1) * nh..t * nh],
            )
        };
        let mut z = vec![0.0; 4 * nh];
        for r in 0..4 * nh {
            z[r] = b[r] + dot(&w[r * ni..(r + 1) * ni], x) + dot(&u[r * nh..(r + 1) * nh], h_prev);
        }
        let mut c_new = vec![0.0; nh];
        let mut tc_new = vec![0.0; nh];
        let mut h_new = vec![0.0; nh];
        let gates = &mut cache.gates[t * 4 * nh..(t + 1) * 4 * nh];
        for k in 0..nh {
            let i = sigmoid(z[k]);
            let f = sigmoid(z[nh + k]);
            let g = z[2 * nh + k].tanh();
            let o = sigmoid(z[3 * nh + k]);
            gates[k] = i;
            gates[nh + k] = f;
            gates[2 * nh + k] = g;
            gates[3 * nh + k] = o;
            let c = f * c_prev[k] + i * g;
            let tc = c.tanh();
            c_new[k] = c;
            tc_new[k] = tc;
            h_new[k] = o * tc;
        }
        cache.c[t * nh..(t + 1) * nh].copy_from_slice(&c_new);
        cache.tanh_c[t * nh..(t + 1) * nh].copy_from_slice(&tc_new);
        cache.h[t * nh..(t + 1) * nh].copy_from_slice(&h_new);
    }
    cache
}

fn backprop_layer(
    theta: &[f64],
    lay: &LayerLayout,
    xs: &[f64],
    cache: &LayerCache,
    dh_ext: &[f64],
    mut grad: Option<&mut [f64]>,
    mut dx: Option<&mut [f64]>,
) {
    let (ni, nh) = (lay.input, lay.hidden);
    let steps = xs.len() / ni;
    let w = &theta[lay.w.clone()];
    let u = &theta[lay.u.clone()];
    let mut dh_next = vec![0.0; nh];
    let mut dc_next = vec![0.0; nh];
    let mut dz = vec![0.0; 4 * nh];
    let zero = vec![0.0; nh];
    for t in (0..steps).rev() {
        let gates = &cache.gates[t * 4 * nh..(t + 1) * 4 * nh];
        let tc = &cache.tanh_c[t * nh..(t + 1) * nh];
        let (c_prev, h_prev) = if t == 0 {
            (&zero[..], &zero[..])
        } else {
            (
                &cache.c[(t - 1) * nh..t * nh],
                &cache.h[(t - 1) * nh..t * nh],
            )
        };
        for k in 0..nh {
            let dh = dh_ext[t * nh + k] + dh_next[k];
            let (i, f, g, o) = (gates[k], gates[nh + k], gates[2 * nh + k], gates[3 * nh + k]);
            let d_o = dh * tc[k];
            let dc = dc_next[k] + dh * o * (1.0 - tc[k] * tc[k]);
            dz[k] = dc * g * i * (1.0 - i);
            dz[nh + k] = dc * c_prev[k] * f * (1.0 - f);
            dz[2 * nh + k] = dc * i * (1.0 - g * g);
            dz[3 * nh + k] = d_o * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        let x = &xs[t * ni..(t + 1) * ni];
        if let Some(g) = grad.as_deref_mut() {
            for r in 0..4 * nh {
                let d = dz[r];
                if d == 0.0 {
                    continue;
                }
                let gw = &mut g[lay.w.start + r * ni..lay.w.start + (r + 1) * ni];
                for (gv, xv) in gw.iter_mut().zip(x) {
                    *gv += d * xv;
                }
                if t > 0 {
                    let gu = &mut g[lay.u.start + r * nh..lay.u.start + (r + 1) * nh];
                    for (gv, hv) in gu.iter_mut().zip(h_prev) {
                        *gv += d * hv;
                    }
                }
                g[lay.b.start + r] += d;
            }
        }
        if let Some(dxs) = dx.as_deref_mut() {
            let dxt = &mut dxs[t * ni..(t + 1) * ni];
            for r in 0..4 * nh {
                let d = dz[r];
                if d == 0.0 {
                    continue;
                }
                for (dv, wv) in dxt.iter_mut().zip(&w[r * ni..(r + 1) * ni]) {
                    *dv += d * wv;
                }
            }
        }
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        if t > 0 {
            for r in 0..4 * nh {
                let d = dz[r];
                if d == 0.0 {
                    continue;
                }
                for (dv, uv) in dh_next.iter_mut().zip(&u[r * nh..(r + 1) * nh]) {
                    *dv += d * uv;
                }
            }
        }
    }
}
