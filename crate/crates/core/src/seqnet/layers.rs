use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dropout::CellMasks;
use super::params::{Gradients, ParamId, ParameterStore};
use crate::error::{Error, Result};

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)`, computed without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Derivative of [`softplus`], the logistic sigmoid.
#[inline]
pub fn softplus_grad(x: f64) -> f64 {
    sigmoid(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Softplus,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Softplus => softplus(x),
        }
    }

    pub fn grad(self, x: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Softplus => softplus_grad(x),
        }
    }
}

/// Affine layer `W x + b` with `W` stored `output x input`, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new<R: Rng>(store: &mut ParameterStore, prefix: &str, input: usize, output: usize, rng: &mut R) -> Result<Self> {
        let w = store.add_uniform(format!("{prefix}/w"), &[output, input], input, rng)?;
        let b = store.add_uniform(format!("{prefix}/b"), &[output], input, rng)?;
        Ok(Self { w, b, input, output })
    }

    /// Zero-initialized layer (constant output `0` until trained).
    pub fn zeros(store: &mut ParameterStore, prefix: &str, input: usize, output: usize) -> Result<Self> {
        let w = store.add(format!("{prefix}/w"), &[output, input], vec![0.0; output * input])?;
        let b = store.add(format!("{prefix}/b"), &[output], vec![0.0; output])?;
        Ok(Self { w, b, input, output })
    }

    pub fn forward(&self, store: &ParameterStore, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input {
            return Err(Error::ShapeMismatch(format!("dense input {} vs {}", x.len(), self.input)));
        }
        let (w, b) = (store.value(self.w), store.value(self.b));
        Ok((0..self.output).map(|r| b[r] + dot(&w[r * self.input..(r + 1) * self.input], x)).collect())
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&self, store: &ParameterStore, grads: &mut Gradients, x: &[f64], dy: &[f64]) -> Vec<f64> {
        let w = store.value(self.w);
        let mut dx = vec![0.0; self.input];
        {
            let gw = grads.get_mut(self.w);
            for r in 0..self.output {
                let d = dy[r];
                if d == 0.0 {
                    continue;
                }
                let row = r * self.input..(r + 1) * self.input;
                axpy(d, x, &mut gw[row.clone()]);
                axpy(d, &w[row], &mut dx);
            }
        }
        let gb = grads.get_mut(self.b);
        for r in 0..self.output {
            gb[r] += dy[r];
        }
        dx
    }
}

/// Trainable lookup table of `cardinality` vectors of length `dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub table: ParamId,
    pub cardinality: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<R: Rng>(store: &mut ParameterStore, name: &str, cardinality: usize, dim: usize, rng: &mut R) -> Result<Self> {
        let table = store.add_uniform(format!("{name}/table"), &[cardinality, dim], dim, rng)?;
        Ok(Self { table, cardinality, dim })
    }

    pub fn lookup<'a>(&self, store: &'a ParameterStore, index: usize) -> Result<&'a [f64]> {
        if index >= self.cardinality {
            return Err(Error::IndexOutOfRange { index, cardinality: self.cardinality });
        }
        Ok(&store.value(self.table)[index * self.dim..(index + 1) * self.dim])
    }

    pub fn backward(&self, grads: &mut Gradients, index: usize, dy: &[f64]) {
        let row = &mut grads.get_mut(self.table)[index * self.dim..(index + 1) * self.dim];
        for (g, d) in row.iter_mut().zip(dy) {
            *g += d;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self { h: vec![0.0; hidden], c: vec![0.0; hidden] }
    }
}

/// Values saved by [`LstmCell::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    /// Masked input followed by masked previous hidden state.
    xh: Vec<f64>,
    /// Gate activations laid out `[i, f, g, o]`.
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Standard (non-peephole) LSTM cell.
///
/// Gates are `i, f, o = sigmoid(.)` and `g = tanh(.)` of one affine map over
/// `[x, h_prev]`; `c = f * c_prev + i * g`, `h = o * tanh(c)`. The weight
/// matrix is `4H x (I + H)` with gate blocks in the order `i, f, g, o`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    /// Uniform `±1/sqrt(I + H)` weights; forget-gate bias starts at 1.
    pub fn new<R: Rng>(store: &mut ParameterStore, prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let fan_in = input + hidden;
        let w = store.add_uniform(format!("{prefix}/w"), &[4 * hidden, fan_in], fan_in, rng)?;
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
        let b = store.add(format!("{prefix}/b"), &[4 * hidden], bias)?;
        Ok(Self { w, b, input, hidden })
    }

    pub fn forward(
        &self,
        store: &ParameterStore,
        x: &[f64],
        prev: &LstmState,
        masks: Option<&CellMasks>,
    ) -> Result<(LstmState, LstmCache)> {
        let (ni, nh) = (self.input, self.hidden);
        if x.len() != ni || prev.h.len() != nh || prev.c.len() != nh {
            return Err(Error::ShapeMismatch(format!(
                "lstm expects input {ni}/hidden {nh}, got {}/{}",
                x.len(),
                prev.h.len()
            )));
        }
        let mut xh = Vec::with_capacity(ni + nh);
        match masks {
            Some(m) => {
                xh.extend(x.iter().zip(&m.input).map(|(a, b)| a * b));
                xh.extend(prev.h.iter().zip(&m.state).map(|(a, b)| a * b));
            }
            None => {
                xh.extend_from_slice(x);
                xh.extend_from_slice(&prev.h);
            }
        }
        let (w, b) = (store.value(self.w), store.value(self.b));
        let width = ni + nh;
        let mut gates = Vec::with_capacity(4 * nh);
        for r in 0..4 * nh {
            let a = b[r] + dot(&w[r * width..(r + 1) * width], &xh);
            gates.push(if (2 * nh..3 * nh).contains(&r) { a.tanh() } else { sigmoid(a) });
        }
        let mut c = vec![0.0; nh];
        let mut h = vec![0.0; nh];
        let mut tanh_c = vec![0.0; nh];
        for k in 0..nh {
            let (i, f, g, o) = (gates[k], gates[nh + k], gates[2 * nh + k], gates[3 * nh + k]);
            c[k] = f * prev.c[k] + i * g;
            tanh_c[k] = c[k].tanh();
            h[k] = o * tanh_c[k];
        }
        let cache = LstmCache { xh, gates, c_prev: prev.c.clone(), tanh_c };
        Ok((LstmState { h, c }, cache))
    }

    /// Given `dL/dh` and `dL/dc` at the cell output, accumulates parameter
    /// gradients and returns `(dL/dx, dL/dh_prev, dL/dc_prev)`.
    pub fn backward(
        &self,
        store: &ParameterStore,
        grads: &mut Gradients,
        cache: &LstmCache,
        masks: Option<&CellMasks>,
        dh: &[f64],
        dc: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (ni, nh) = (self.input, self.hidden);
        let width = ni + nh;
        let g = &cache.gates;
        let mut da = vec![0.0; 4 * nh];
        let mut dc_prev = vec![0.0; nh];
        for k in 0..nh {
            let (i, f, gg, o) = (g[k], g[nh + k], g[2 * nh + k], g[3 * nh + k]);
            let tc = cache.tanh_c[k];
            let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
            da[k] = dct * gg * i * (1.0 - i);
            da[nh + k] = dct * cache.c_prev[k] * f * (1.0 - f);
            da[2 * nh + k] = dct * i * (1.0 - gg * gg);
            da[3 * nh + k] = dh[k] * tc * o * (1.0 - o);
            dc_prev[k] = dct * f;
        }
        let w = store.value(self.w);
        let mut dxh = vec![0.0; width];
        {
            let gw = grads.get_mut(self.w);
            for r in 0..4 * nh {
                let d = da[r];
                if d == 0.0 {
                    continue;
                }
                let row = r * width..(r + 1) * width;
                axpy(d, &cache.xh, &mut gw[row.clone()]);
                axpy(d, &w[row], &mut dxh);
            }
        }
        let gb = grads.get_mut(self.b);
        for r in 0..4 * nh {
            gb[r] += da[r];
        }
        let mut dh_prev = dxh.split_off(ni);
        let mut dx = dxh;
        if let Some(m) = masks {
            dx.iter_mut().zip(&m.input).for_each(|(d, k)| *d *= k);
            dh_prev.iter_mut().zip(&m.state).for_each(|(d, k)| *d *= k);
        }
        (dx, dh_prev, dc_prev)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
