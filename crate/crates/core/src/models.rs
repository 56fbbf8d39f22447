//! Encoder-decoder base regressor with an optional meta decoder, the
//! training recipes of every system variant, and bounded prediction.
//!
//! All training happens in standardized output space; [`predict`] returns
//! bands and base predictions in original units.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SplitDataset;
use crate::error::{Error, Result};
use crate::seqnet::{
    clip_grad_norm, l2_penalty, loss_asymmetric, loss_frobenius, loss_gaussian_nll, loss_joint, sample_variational_masks,
    softplus, softplus_grad, Activation, AdamState, CellMasks, Checkpoint, Dense, DropoutMask, DropoutRates, Embedding,
    Gradients, LstmCache, LstmCell, LstmState, MaskShape, ParamId, ParameterStore,
};
use crate::types::{restore_band, restore_units, BoundedPrediction, Matrix, SequenceSample, Standardization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Jms,
    Jma,
    Wbms,
    Bbms,
    Jmv,
    Doms,
    Constant,
}

impl Variant {
    pub const ALL: [Variant; 7] =
        [Variant::Jms, Variant::Jma, Variant::Wbms, Variant::Bbms, Variant::Jmv, Variant::Doms, Variant::Constant];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Jms => "jms",
            Variant::Jma => "jma",
            Variant::Wbms => "wbms",
            Variant::Bbms => "bbms",
            Variant::Jmv => "jmv",
            Variant::Doms => "doms",
            Variant::Constant => "constant",
        }
    }

    pub fn is_asymmetric(self) -> bool {
        self == Variant::Jma
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

/// A categorical input column holding integer indices, embedded as `dim`
/// trainable values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub name: String,
    pub column: usize,
    pub cardinality: usize,
    pub dim: usize,
}

/// Early stopping and optimizer plumbing shared by all phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    pub max_epochs: usize,
    /// Non-improving epochs tolerated in the two base stages and JMV's final phase.
    pub patience: usize,
    /// Non-improving epochs tolerated in the "while it improves" phases.
    pub phase_patience: usize,
    pub min_rel_improvement: f64,
    pub grad_clip: Option<f64>,
    /// Samples per gradient work unit.
    pub grad_chunk: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { max_epochs: 200, patience: 5, phase_patience: 1, min_rel_improvement: 1e-4, grad_clip: Some(5.0), grad_chunk: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchitectureConfig {
    /// Raw input columns per time step, categorical ones included.
    pub input_features: usize,
    pub output_dim: usize,
    pub encoder_units: usize,
    pub decoder_units: usize,
    pub meta_units: usize,
    pub embeddings: Vec<EmbeddingSpec>,
    /// Loss weights of the base stages, the joint phase and the final meta phase.
    pub betas: [f64; 3],
    pub lr_stage1: f64,
    pub lr_stage2: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub doms_l2: f64,
    pub dropout: DropoutRates,
    pub doms_runs: usize,
    pub schedule: Schedule,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            input_features: 1,
            output_dim: 1,
            encoder_units: 32,
            decoder_units: 32,
            meta_units: 16,
            embeddings: vec![],
            betas: [1.0, 0.5, 0.0],
            lr_stage1: 0.001,
            lr_stage2: 0.0002,
            batch_size: 100,
            l2: 1e-4,
            doms_l2: 0.0,
            dropout: DropoutRates { input: 0.25, state: 0.1, output: 0.25 },
            doms_runs: 10,
            schedule: Schedule::default(),
        }
    }
}

impl ArchitectureConfig {
    pub fn new(input_features: usize, output_dim: usize) -> Self {
        Self { input_features, output_dim, ..Self::default() }
    }

    /// Width of one encoder input vector after embedding.
    pub fn embedded_width(&self) -> usize {
        let dims: usize = self.embeddings.iter().map(|e| e.dim).sum();
        dims + self.input_features - self.embeddings.len()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_features", self.input_features),
            ("output_dim", self.output_dim),
            ("encoder_units", self.encoder_units),
            ("decoder_units", self.decoder_units),
            ("meta_units", self.meta_units),
            ("batch_size", self.batch_size),
            ("doms_runs", self.doms_runs),
            ("grad_chunk", self.schedule.grad_chunk),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::ConfigMismatch(format!("{name} must be positive")));
        }
        if self.encoder_units != self.decoder_units {
            return Err(Error::ConfigMismatch("encoder and decoder must share their hidden width".into()));
        }
        if let Some(b) = self.betas.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return Err(Error::BetaOutOfRange(*b));
        }
        if !(self.lr_stage1 > 0.0 && self.lr_stage2 > 0.0) {
            return Err(Error::ConfigMismatch("learning rates must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.doms_l2 >= 0.0) {
            return Err(Error::ConfigMismatch("L2 coefficients must be nonnegative".into()));
        }
        self.dropout.validate()?;
        let mut seen = vec![false; self.input_features];
        for e in &self.embeddings {
            if e.column >= self.input_features || seen[e.column] || e.cardinality == 0 || e.dim == 0 {
                return Err(Error::ConfigMismatch(format!("bad embedding spec '{}'", e.name)));
            }
            seen[e.column] = true;
        }
        Ok(())
    }

    fn check_sample(&self, s: &SequenceSample) -> Result<()> {
        if s.inputs.cols() != self.input_features || s.targets.rows() != self.output_dim {
            return Err(Error::ConfigMismatch(format!(
                "sample has {} features / {} outputs, model expects {} / {}",
                s.inputs.cols(),
                s.targets.rows(),
                self.input_features,
                self.output_dim
            )));
        }
        Ok(())
    }
}

/// How decoder inputs are chosen after the start step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// Ground truth `y[t-1]` at every step.
    TeacherForced,
    /// Ground truth for the first `observed_steps` inputs, then the model's
    /// own previous prediction.
    Emulation { observed_steps: usize },
}

impl DecodeMode {
    fn feeds_truth(self, t: usize) -> bool {
        match self {
            DecodeMode::TeacherForced => true,
            DecodeMode::Emulation { observed_steps } => t <= observed_steps,
        }
    }
}

/// What the extra heads of a network predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    /// Base regressor only.
    Base,
    /// Base regressor plus a meta decoder with `outputs` softplus rows.
    Meta { outputs: usize },
    /// Base regressor plus a log-variance head.
    Variance,
    /// Softplus-output regressor for residual magnitudes.
    Residual,
}

#[derive(Debug, Clone)]
struct MetaDecoder {
    fcn: Dense,
    cell: LstmCell,
    head: Dense,
}

/// The encoder-decoder network with its optional heads. Parameter handles
/// point into an external [`ParameterStore`].
#[derive(Debug, Clone)]
pub struct Network {
    embeddings: Vec<(usize, Embedding)>,
    real_cols: Vec<usize>,
    encoder: LstmCell,
    decoder: LstmCell,
    head: Dense,
    head_act: Activation,
    meta: Option<MetaDecoder>,
    var_head: Option<Dense>,
    output_dim: usize,
    base_ids: Vec<ParamId>,
    meta_ids: Vec<ParamId>,
    var_ids: Vec<ParamId>,
}

/// Forward-pass record needed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    categories: Vec<Vec<usize>>,
    enc_caches: Vec<LstmCache>,
    handoff: Vec<f64>,
    fed_back: Vec<bool>,
    dec_caches: Vec<LstmCache>,
    head_in: Vec<Vec<f64>>,
    head_pre: Vec<Vec<f64>>,
    meta_caches: Vec<LstmCache>,
    meta_h: Vec<Vec<f64>>,
    meta_pre: Vec<Vec<f64>>,
    /// `D x M` base prediction.
    pub yhat: Matrix,
    /// `K x M` meta output (`K = D` symmetric, `2D` lower then upper).
    pub meta_out: Option<Matrix>,
    /// `D x M` predicted log-variance.
    pub log_var: Option<Matrix>,
}

fn ids_since(store: &ParameterStore, start: usize) -> Vec<ParamId> {
    (start..store.len()).map(ParamId).collect()
}

fn mask_mul(v: &mut [f64], mask: Option<&[f64]>) {
    if let Some(m) = mask {
        v.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
    }
}

impl Network {
    pub fn build<R: rand::Rng>(
        store: &mut ParameterStore,
        prefix: &str,
        config: &ArchitectureConfig,
        kind: NetKind,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let start = store.len();
        let mut embeddings = Vec::new();
        for e in &config.embeddings {
            embeddings.push((e.column, Embedding::new(store, &format!("{prefix}emb/{}", e.name), e.cardinality, e.dim, rng)?));
        }
        let real_cols =
            (0..config.input_features).filter(|c| !config.embeddings.iter().any(|e| e.column == *c)).collect();
        let d = config.output_dim;
        let hidden = config.decoder_units;
        let encoder = LstmCell::new(store, &format!("{prefix}encoder"), config.embedded_width(), config.encoder_units, rng)?;
        let decoder = LstmCell::new(store, &format!("{prefix}decoder"), d, hidden, rng)?;
        let head = Dense::new(store, &format!("{prefix}head"), hidden, d, rng)?;
        let base_ids = ids_since(store, start);
        let head_act = if kind == NetKind::Residual { Activation::Softplus } else { Activation::Linear };
        let meta_start = store.len();
        let meta = match kind {
            NetKind::Meta { outputs } => {
                let mu = config.meta_units;
                Some(MetaDecoder {
                    fcn: Dense::new(store, &format!("{prefix}meta/fcn"), config.encoder_units, 2 * mu, rng)?,
                    cell: LstmCell::new(store, &format!("{prefix}meta/decoder"), d + hidden, mu, rng)?,
                    head: Dense::new(store, &format!("{prefix}meta/head"), mu, outputs, rng)?,
                })
            }
            _ => None,
        };
        let meta_ids = ids_since(store, meta_start);
        let var_start = store.len();
        let var_head =
            if kind == NetKind::Variance { Some(Dense::zeros(store, &format!("{prefix}variance"), hidden, d)?) } else { None };
        let var_ids = ids_since(store, var_start);
        Ok(Self { embeddings, real_cols, encoder, decoder, head, head_act, meta, var_head, output_dim: d, base_ids, meta_ids, var_ids })
    }

    pub fn base_params(&self) -> &[ParamId] {
        &self.base_ids
    }

    pub fn meta_params(&self) -> &[ParamId] {
        &self.meta_ids
    }

    pub fn variance_params(&self) -> &[ParamId] {
        &self.var_ids
    }

    pub fn has_meta(&self) -> bool {
        self.meta.is_some()
    }

    /// Shapes of the dropout-capable cells: encoder, then decoder.
    pub fn mask_shapes(&self) -> [MaskShape; 2] {
        [
            MaskShape { input: self.encoder.input, hidden: self.encoder.hidden },
            MaskShape { input: self.decoder.input, hidden: self.decoder.hidden },
        ]
    }

    fn embed(&self, store: &ParameterStore, row: &[f64]) -> Result<(Vec<f64>, Vec<usize>)> {
        let mut out = Vec::with_capacity(self.encoder.input);
        let mut cats = Vec::with_capacity(self.embeddings.len());
        for (col, emb) in &self.embeddings {
            let v = row[*col];
            if !(v >= 0.0 && v.fract() == 0.0) {
                return Err(Error::IndexOutOfRange { index: v.max(0.0) as usize, cardinality: emb.cardinality });
            }
            let idx = v as usize;
            out.extend_from_slice(emb.lookup(store, idx)?);
            cats.push(idx);
        }
        out.extend(self.real_cols.iter().map(|&c| row[c]));
        Ok((out, cats))
    }

    /// Runs encoder, decoder and, when `with_meta`, the meta decoder.
    pub fn forward(
        &self,
        store: &ParameterStore,
        sample: &SequenceSample,
        mode: DecodeMode,
        masks: Option<&DropoutMask>,
        with_meta: bool,
    ) -> Result<Trace> {
        let (enc_mask, dec_mask) = split_masks(masks);
        let d = self.output_dim;
        let m = sample.targets.cols();
        if sample.targets.rows() != d {
            return Err(Error::ConfigMismatch(format!("sample has {} outputs, network {d}", sample.targets.rows())));
        }
        let mut categories = Vec::with_capacity(sample.inputs.rows());
        let mut enc_caches = Vec::with_capacity(sample.inputs.rows());
        let mut state = LstmState::zeros(self.encoder.hidden);
        for r in 0..sample.inputs.rows() {
            let (x, cats) = self.embed(store, sample.inputs.row(r))?;
            let (next, cache) = self.encoder.forward(store, &x, &state, enc_mask)?;
            state = next;
            categories.push(cats);
            enc_caches.push(cache);
        }
        let mut handoff = state.h.clone();
        mask_mul(&mut handoff, enc_mask.map(|k| k.output.as_slice()));
        let mut dstate = LstmState { h: handoff.clone(), c: state.c };

        let mut yhat = Matrix::zeros(d, m);
        let mut log_var = self.var_head.map(|_| Matrix::zeros(d, m));
        let mut fed_back = Vec::with_capacity(m);
        let mut dec_caches = Vec::with_capacity(m);
        let mut head_in = Vec::with_capacity(m);
        let mut head_pre = Vec::with_capacity(m);
        for t in 0..m {
            let (x, fb) = if t == 0 {
                (vec![0.0; d], false)
            } else if mode.feeds_truth(t) {
                (sample.targets.column(t - 1), false)
            } else {
                (yhat.column(t - 1), true)
            };
            let (next, cache) = self.decoder.forward(store, &x, &dstate, dec_mask)?;
            let mut hin = next.h.clone();
            mask_mul(&mut hin, dec_mask.map(|k| k.output.as_slice()));
            let pre = self.head.forward(store, &hin)?;
            for k in 0..d {
                yhat.set(k, t, self.head_act.apply(pre[k]));
            }
            if let (Some(vh), Some(lv)) = (&self.var_head, log_var.as_mut()) {
                for (k, v) in vh.forward(store, &hin)?.into_iter().enumerate() {
                    lv.set(k, t, v);
                }
            }
            dstate = next;
            fed_back.push(fb);
            dec_caches.push(cache);
            head_in.push(hin);
            head_pre.push(pre);
        }

        let mut trace = Trace {
            categories,
            enc_caches,
            handoff,
            fed_back,
            dec_caches,
            head_in,
            head_pre,
            meta_caches: vec![],
            meta_h: vec![],
            meta_pre: vec![],
            yhat,
            meta_out: None,
            log_var,
        };
        if let (Some(meta), true) = (&self.meta, with_meta) {
            let mu = meta.cell.hidden;
            let init = meta.fcn.forward(store, &trace.handoff)?;
            let mut ms = LstmState { h: init[..mu].to_vec(), c: init[mu..].to_vec() };
            let outputs = meta.head.output;
            let mut out = Matrix::zeros(outputs, m);
            for t in 0..m {
                let mut x = trace.yhat.column(t);
                x.extend_from_slice(&trace.head_in[t]);
                let (next, cache) = meta.cell.forward(store, &x, &ms, None)?;
                let pre = meta.head.forward(store, &next.h)?;
                for k in 0..outputs {
                    out.set(k, t, softplus(pre[k]));
                }
                trace.meta_h.push(next.h.clone());
                trace.meta_caches.push(cache);
                trace.meta_pre.push(pre);
                ms = next;
            }
            trace.meta_out = Some(out);
        }
        Ok(trace)
    }

    /// Back-propagates output gradients through the whole unrolled network.
    /// With `base_grads` false only meta-decoder gradients are produced.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        store: &ParameterStore,
        grads: &mut Gradients,
        trace: &Trace,
        d_yhat: &Matrix,
        d_meta: Option<&Matrix>,
        d_log_var: Option<&Matrix>,
        masks: Option<&DropoutMask>,
        base_grads: bool,
    ) {
        let (enc_mask, dec_mask) = split_masks(masks);
        let d = self.output_dim;
        let m = trace.yhat.cols();
        let hd = self.decoder.hidden;
        let mut d_yhat = d_yhat.clone();
        let mut d_head_in = vec![vec![0.0; hd]; m];
        let mut d_handoff = vec![0.0; hd];

        if let (Some(meta), Some(dm), false) = (&self.meta, d_meta, trace.meta_caches.is_empty()) {
            let mu = meta.cell.hidden;
            let mut dh = vec![0.0; mu];
            let mut dc = vec![0.0; mu];
            for t in (0..m).rev() {
                let dpre: Vec<f64> =
                    (0..meta.head.output).map(|k| dm.get(k, t) * softplus_grad(trace.meta_pre[t][k])).collect();
                let dhh = meta.head.backward(store, grads, &trace.meta_h[t], &dpre);
                dh.iter_mut().zip(&dhh).for_each(|(a, b)| *a += b);
                let (dx, dhp, dcp) = meta.cell.backward(store, grads, &trace.meta_caches[t], None, &dh, &dc);
                if base_grads {
                    for k in 0..d {
                        d_yhat.add_at(k, t, dx[k]);
                    }
                    d_head_in[t].iter_mut().zip(&dx[d..]).for_each(|(a, b)| *a += b);
                }
                dh = dhp;
                dc = dcp;
            }
            let mut dinit = dh;
            dinit.extend_from_slice(&dc);
            let dx = meta.fcn.backward(store, grads, &trace.handoff, &dinit);
            if base_grads {
                d_handoff.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
            }
        }
        if !base_grads {
            return;
        }

        let mut dh = vec![0.0; hd];
        let mut dc = vec![0.0; hd];
        for t in (0..m).rev() {
            let dpre: Vec<f64> = (0..d).map(|k| d_yhat.get(k, t) * self.head_act.grad(trace.head_pre[t][k])).collect();
            let mut dhin = self.head.backward(store, grads, &trace.head_in[t], &dpre);
            dhin.iter_mut().zip(&d_head_in[t]).for_each(|(a, b)| *a += b);
            if let (Some(vh), Some(dv)) = (&self.var_head, d_log_var) {
                let dvt = dv.column(t);
                let extra = vh.backward(store, grads, &trace.head_in[t], &dvt);
                dhin.iter_mut().zip(&extra).for_each(|(a, b)| *a += b);
            }
            mask_mul(&mut dhin, dec_mask.map(|k| k.output.as_slice()));
            dh.iter_mut().zip(&dhin).for_each(|(a, b)| *a += b);
            let (dx, dhp, dcp) = self.decoder.backward(store, grads, &trace.dec_caches[t], dec_mask, &dh, &dc);
            if trace.fed_back[t] {
                for k in 0..d {
                    d_yhat.add_at(k, t - 1, dx[k]);
                }
            }
            dh = dhp;
            dc = dcp;
        }

        d_handoff.iter_mut().zip(&dh).for_each(|(a, b)| *a += b);
        mask_mul(&mut d_handoff, enc_mask.map(|k| k.output.as_slice()));
        let mut dh = d_handoff;
        for r in (0..trace.enc_caches.len()).rev() {
            let (dx, dhp, dcp) = self.encoder.backward(store, grads, &trace.enc_caches[r], enc_mask, &dh, &dc);
            let mut offset = 0;
            for ((_, emb), &idx) in self.embeddings.iter().zip(&trace.categories[r]) {
                emb.backward(grads, idx, &dx[offset..offset + emb.dim]);
                offset += emb.dim;
            }
            dh = dhp;
            dc = dcp;
        }
    }
}

fn split_masks(masks: Option<&DropoutMask>) -> (Option<&CellMasks>, Option<&CellMasks>) {
    match masks {
        Some(m) => (m.cells.first(), m.cells.get(1)),
        None => (None, None),
    }
}

/// Training objective of one phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// `beta * |yhat - y|^2 + (1 - beta) * |zhat - |yhat - y||^2`.
    Joint(f64),
    /// Same weighting with separate lower/upper meta targets.
    Asymmetric(f64),
    /// Gaussian negative log-likelihood with a log-variance head.
    Nll,
}

impl Objective {
    fn needs_meta(self) -> bool {
        match self {
            Objective::Joint(b) | Objective::Asymmetric(b) => b < 1.0,
            Objective::Nll => false,
        }
    }

    fn beta(self) -> Option<f64> {
        match self {
            Objective::Joint(b) | Objective::Asymmetric(b) => Some(b),
            Objective::Nll => None,
        }
    }
}

/// Loss of one sample under `objective`; accumulates parameter gradients
/// into `grads` when given.
#[allow(clippy::too_many_arguments)]
pub fn sample_objective(
    net: &Network,
    store: &ParameterStore,
    sample: &SequenceSample,
    mode: DecodeMode,
    objective: Objective,
    masks: Option<&DropoutMask>,
    grads: Option<&mut Gradients>,
    base_grads: bool,
) -> Result<f64> {
    let with_meta = objective.needs_meta() && net.has_meta();
    let trace = net.forward(store, sample, mode, masks, with_meta)?;
    let y = &sample.targets;
    let (value, d_yhat, d_meta, d_log_var) = match objective {
        Objective::Joint(beta) => match &trace.meta_out {
            Some(z) => {
                let j = loss_joint(&trace.yhat, y, z, beta)?;
                (j.value, j.d_yhat, Some(j.d_zhat), None)
            }
            None => {
                let (v, g) = loss_frobenius(&trace.yhat, y)?;
                (v, g, None, None)
            }
        },
        Objective::Asymmetric(beta) => {
            let (base, g) = loss_frobenius(&trace.yhat, y)?;
            match &trace.meta_out {
                Some(z) => {
                    let d = y.rows();
                    let delta = trace.yhat.zip_map(y, |a, b| a - b)?;
                    let a = loss_asymmetric(&z.slice_rows(0, d), &z.slice_rows(d, 2 * d), &delta)?;
                    let d_yhat = g.zip_map(&a.d_delta, |gb, gd| beta * gb + (1.0 - beta) * gd)?;
                    let mut d_meta = Matrix::zeros(2 * d, y.cols());
                    for k in 0..d {
                        for t in 0..y.cols() {
                            d_meta.set(k, t, (1.0 - beta) * a.d_zl.get(k, t));
                            d_meta.set(d + k, t, (1.0 - beta) * a.d_zu.get(k, t));
                        }
                    }
                    (beta * base + (1.0 - beta) * a.value, d_yhat, Some(d_meta), None)
                }
                None => (base, g, None, None),
            }
        }
        Objective::Nll => {
            let zeros;
            let lv = match &trace.log_var {
                Some(lv) => lv,
                None => {
                    zeros = Matrix::zeros(y.rows(), y.cols());
                    &zeros
                }
            };
            let n = loss_gaussian_nll(&trace.yhat, y, lv)?;
            let dlv = trace.log_var.as_ref().map(|_| n.d_log_var);
            (n.value, n.d_yhat, None, dlv)
        }
    };
    if let Some(g) = grads {
        net.backward(store, g, &trace, &d_yhat, d_meta.as_ref(), d_log_var.as_ref(), masks, base_grads);
    }
    Ok(value)
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub phase: String,
    pub beta: Option<f64>,
    pub epoch: usize,
    pub train_loss: f64,
    pub monitor_loss: f64,
}

struct Phase<'a> {
    label: &'static str,
    lr: f64,
    mode: Mode,
    objective: Objective,
    trainable: Vec<bool>,
    train: &'a [SequenceSample],
    monitor: &'a [SequenceSample],
    patience: usize,
    dropout: Option<DropoutRates>,
    l2: f64,
    base_grads: bool,
}

/// Decode mode of a phase, resolved per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    TeacherForced,
    Emulation,
}

impl Mode {
    fn for_sample(self, s: &SequenceSample) -> DecodeMode {
        match self {
            Mode::TeacherForced => DecodeMode::TeacherForced,
            Mode::Emulation => DecodeMode::Emulation { observed_steps: s.observed_steps },
        }
    }
}

/// SplitMix64 finalizer over a sequence of words, for deriving sub-seeds.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

struct Trainer<'a> {
    net: &'a Network,
    config: &'a ArchitectureConfig,
    seed: u64,
    phase_index: u64,
    log: Vec<EpochLog>,
}

impl Trainer<'_> {
    fn masks_for(&self, rates: Option<DropoutRates>, parts: &[u64]) -> Result<Option<DropoutMask>> {
        match rates {
            Some(r) if !r.is_zero() => Ok(Some(sample_variational_masks(&self.net.mask_shapes(), r, mix_seed(parts))?)),
            _ => Ok(None),
        }
    }

    fn mean_loss(&self, store: &ParameterStore, phase: &Phase, set: &[SequenceSample]) -> Result<f64> {
        let losses: Vec<f64> = set
            .par_iter()
            .map(|s| sample_objective(self.net, store, s, phase.mode.for_sample(s), phase.objective, None, None, false))
            .collect::<Result<_>>()?;
        Ok(losses.iter().sum::<f64>() / set.len().max(1) as f64)
    }

    fn run(&mut self, store: &mut ParameterStore, phase: Phase) -> Result<()> {
        if phase.train.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        self.phase_index += 1;
        let sched = &self.config.schedule;
        let mut adam = AdamState::with_mask(store, phase.lr, phase.trainable.clone())?;
        let mut best = self.mean_loss(store, &phase, phase.monitor)?;
        let mut best_store = store.clone();
        let mut bad = 0;
        log::info!(
            "phase {} (beta {:?}, lr {}): {} train / {} monitor sequences, initial monitor loss {best:.6}",
            phase.label,
            phase.objective.beta(),
            phase.lr,
            phase.train.len(),
            phase.monitor.len()
        );
        let mut order: Vec<usize> = (0..phase.train.len()).collect();
        for epoch in 0..sched.max_epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[self.seed, self.phase_index, epoch as u64]));
            order.shuffle(&mut rng);
            let mut train_sum = 0.0;
            for batch in order.chunks(self.config.batch_size) {
                let parts: Vec<(f64, Gradients)> = batch
                    .par_chunks(sched.grad_chunk)
                    .map(|chunk| -> Result<(f64, Gradients)> {
                        let mut g = store.new_gradients();
                        let mut l = 0.0;
                        for &i in chunk {
                            let s = &phase.train[i];
                            let masks =
                                self.masks_for(phase.dropout, &[self.seed, self.phase_index, epoch as u64, i as u64])?;
                            l += sample_objective(
                                self.net,
                                store,
                                s,
                                phase.mode.for_sample(s),
                                phase.objective,
                                masks.as_ref(),
                                Some(&mut g),
                                phase.base_grads,
                            )?;
                        }
                        Ok((l, g))
                    })
                    .collect::<Result<_>>()?;
                store.zero_grads();
                for (l, g) in &parts {
                    train_sum += l;
                    store.accumulate(g, 1.0 / batch.len() as f64);
                }
                l2_penalty(store, phase.l2, Some(&phase.trainable))?;
                if let Some(c) = sched.grad_clip {
                    clip_grad_norm(store, c, Some(&phase.trainable));
                }
                adam.step(store);
            }
            let train_loss = train_sum / phase.train.len() as f64;
            let monitor_loss = self.mean_loss(store, &phase, phase.monitor)?;
            if !train_loss.is_finite() || !monitor_loss.is_finite() {
                return Err(Error::NumericalFailure(format!("non-finite loss in phase {} epoch {epoch}", phase.label)));
            }
            log::debug!("{} epoch {epoch}: train {train_loss:.6} monitor {monitor_loss:.6}", phase.label);
            self.log.push(EpochLog {
                phase: phase.label.to_string(),
                beta: phase.objective.beta(),
                epoch,
                train_loss,
                monitor_loss,
            });
            if monitor_loss < best - sched.min_rel_improvement * best.abs() {
                best = monitor_loss;
                best_store.copy_values_from(store);
                bad = 0;
            } else {
                bad += 1;
                if bad > phase.patience {
                    break;
                }
            }
        }
        store.copy_values_from(&best_store);
        log::info!("phase {} done, best monitor loss {best:.6}", phase.label);
        Ok(())
    }
}

fn mask_of(store: &ParameterStore, groups: &[&[ParamId]]) -> Vec<bool> {
    let mut m = vec![false; store.len()];
    for g in groups {
        for id in *g {
            m[id.0] = true;
        }
    }
    m
}

/// A trained system: variant tag, parameters, configuration, standardization
/// statistics and training log.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub variant: Variant,
    pub config: ArchitectureConfig,
    pub stats: Standardization,
    pub store: ParameterStore,
    pub log: Vec<EpochLog>,
    base: Option<Network>,
    residual: Option<Network>,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    variant: Variant,
    config: ArchitectureConfig,
    stats: Standardization,
    log: Vec<EpochLog>,
    params: Checkpoint,
}

const BASE_PREFIX: &str = "base/";
const RESIDUAL_PREFIX: &str = "resid/";

fn build_networks(
    variant: Variant,
    config: &ArchitectureConfig,
    store: &mut ParameterStore,
    seed: u64,
) -> Result<(Option<Network>, Option<Network>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.output_dim;
    let kind = match variant {
        Variant::Constant => return Ok((None, None)),
        Variant::Jms | Variant::Wbms => NetKind::Meta { outputs: d },
        Variant::Jma => NetKind::Meta { outputs: 2 * d },
        Variant::Jmv => NetKind::Variance,
        Variant::Bbms | Variant::Doms => NetKind::Base,
    };
    let base = Network::build(store, BASE_PREFIX, config, kind, &mut rng)?;
    let residual = if variant == Variant::Bbms {
        Some(Network::build(store, RESIDUAL_PREFIX, config, NetKind::Residual, &mut rng)?)
    } else {
        None
    };
    Ok((Some(base), residual))
}

impl TrainedModel {
    /// Freshly initialized, untrained model.
    pub fn init(variant: Variant, config: ArchitectureConfig, stats: Standardization, seed: u64) -> Result<Self> {
        config.validate()?;
        if stats.output_mean.len() != config.output_dim || stats.input_mean.len() != config.input_features {
            return Err(Error::ConfigMismatch("standardization statistics do not match the configuration".into()));
        }
        let mut store = ParameterStore::new();
        let (base, residual) = build_networks(variant, &config, &mut store, mix_seed(&[seed, 0x1717]))?;
        Ok(Self { variant, config, stats, store, log: vec![], base, residual })
    }

    pub fn network(&self) -> Option<&Network> {
        self.base.as_ref()
    }

    pub fn residual_network(&self) -> Option<&Network> {
        self.residual.as_ref()
    }

    pub fn to_json(&self) -> Result<String> {
        let env = Envelope {
            variant: self.variant,
            config: self.config.clone(),
            stats: self.stats.clone(),
            log: self.log.clone(),
            params: self.store.to_checkpoint(),
        };
        Ok(serde_json::to_string(&env)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let env: Envelope = serde_json::from_str(s)?;
        let mut model = Self::init(env.variant, env.config, env.stats, 0)?;
        let loaded = ParameterStore::from_checkpoint(&env.params)?;
        let names_match = loaded.len() == model.store.len()
            && model.store.ids().all(|id| loaded.name(id) == model.store.name(id) && loaded.shape(id) == model.store.shape(id));
        if !names_match {
            return Err(Error::ConfigMismatch("checkpoint parameters do not match the architecture".into()));
        }
        model.store = loaded;
        model.log = env.log;
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn check_data(config: &ArchitectureConfig, data: &SplitDataset) -> Result<()> {
    if data.train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    for s in data.train.iter().chain(&data.dev) {
        config.check_sample(s)?;
    }
    Ok(())
}

fn base_stages(
    trainer: &mut Trainer,
    store: &mut ParameterStore,
    objective: Objective,
    trainable: Vec<bool>,
    data: (&[SequenceSample], &[SequenceSample]),
    dropout: Option<DropoutRates>,
    l2: f64,
) -> Result<()> {
    let c = trainer.config;
    for (label, lr, mode) in [("stage1", c.lr_stage1, Mode::TeacherForced), ("stage2", c.lr_stage2, Mode::Emulation)] {
        trainer.run(
            store,
            Phase {
                label,
                lr,
                mode,
                objective,
                trainable: trainable.clone(),
                train: data.0,
                monitor: data.1,
                patience: c.schedule.patience,
                dropout,
                l2,
                base_grads: true,
            },
        )?;
    }
    Ok(())
}

/// Teacher-forced base training at the stage-1 learning rate with early
/// stopping on DEV. Meta and variance heads stay frozen.
pub fn train_stage1(model: &mut TrainedModel, data: &SplitDataset, seed: u64) -> Result<()> {
    train_base_stage(model, data, seed, "stage1")
}

/// Emulation-mode base training at the stage-2 learning rate.
pub fn train_stage2(model: &mut TrainedModel, data: &SplitDataset, seed: u64) -> Result<()> {
    train_base_stage(model, data, seed, "stage2")
}

fn train_base_stage(model: &mut TrainedModel, data: &SplitDataset, seed: u64, label: &'static str) -> Result<()> {
    check_data(&model.config, data)?;
    let Some(net) = model.base.as_ref() else { return Ok(()) };
    let c = &model.config;
    let (lr, mode) = if label == "stage1" { (c.lr_stage1, Mode::TeacherForced) } else { (c.lr_stage2, Mode::Emulation) };
    let (objective, dropout, l2) = match model.variant {
        Variant::Jmv => (Objective::Nll, None, c.l2),
        Variant::Doms => (Objective::Joint(1.0), Some(c.dropout), c.doms_l2),
        _ => (Objective::Joint(1.0), None, c.l2),
    };
    let trainable = mask_of(&model.store, &[net.base_params()]);
    let mut trainer = Trainer { net, config: c, seed, phase_index: if label == "stage1" { 0 } else { 1 }, log: vec![] };
    trainer.run(
        &mut model.store,
        Phase {
            label,
            lr,
            mode,
            objective,
            trainable,
            train: &data.train,
            monitor: &data.dev,
            patience: c.schedule.patience,
            dropout,
            l2,
            base_grads: true,
        },
    )?;
    model.log.extend(trainer.log);
    Ok(())
}

/// Runs the full training recipe of `variant`.
pub fn train_variant(variant: Variant, data: &SplitDataset, config: &ArchitectureConfig, seed: u64) -> Result<TrainedModel> {
    let mut model = TrainedModel::init(variant, config.clone(), data.stats.clone(), seed)?;
    if variant == Variant::Constant {
        return Ok(model);
    }
    check_data(config, data)?;
    let base = model.base.clone().expect("non-constant variants have a base network");
    let store = &mut model.store;
    let mut trainer = Trainer { net: &base, config, seed, phase_index: 0, log: vec![] };
    let tv = (data.train.as_slice(), data.dev.as_slice());
    let base_only = mask_of(store, &[base.base_params()]);
    let all = vec![true; store.len()];
    let [b0, b1, b2] = config.betas;
    let sched = &config.schedule;
    let later = |objective, trainable, train, monitor, patience, base_grads| Phase {
        label: "",
        lr: config.lr_stage2,
        mode: Mode::Emulation,
        objective,
        trainable,
        train,
        monitor,
        patience,
        dropout: None,
        l2: config.l2,
        base_grads,
    };
    match variant {
        Variant::Jms | Variant::Jma => {
            let obj = |b| if variant == Variant::Jma { Objective::Asymmetric(b) } else { Objective::Joint(b) };
            let first = if b0 < 1.0 { all.clone() } else { base_only.clone() };
            base_stages(&mut trainer, store, obj(b0), first, tv, None, config.l2)?;
            trainer.run(store, Phase { label: "joint", ..later(obj(b1), all.clone(), tv.0, tv.1, sched.phase_patience, true) })?;
            trainer.run(store, Phase { label: "meta", ..later(obj(b2), all.clone(), tv.1, tv.0, sched.phase_patience, true) })?;
        }
        Variant::Wbms => {
            base_stages(&mut trainer, store, Objective::Joint(1.0), base_only, tv, None, config.l2)?;
            let meta_only = mask_of(store, &[base.meta_params()]);
            trainer.run(
                store,
                Phase { label: "meta", ..later(Objective::Joint(0.0), meta_only, tv.1, tv.0, sched.phase_patience, false) },
            )?;
        }
        Variant::Jmv => {
            base_stages(&mut trainer, store, Objective::Nll, base_only, tv, None, config.l2)?;
            trainer.run(store, Phase { label: "variance", ..later(Objective::Nll, all, tv.0, tv.1, sched.patience, true) })?;
        }
        Variant::Doms => {
            base_stages(&mut trainer, store, Objective::Joint(1.0), base_only, tv, Some(config.dropout), config.doms_l2)?;
        }
        Variant::Bbms => {
            base_stages(&mut trainer, store, Objective::Joint(1.0), base_only, tv, None, config.l2)?;
            let resid = model.residual.clone().expect("bbms has a residual network");
            let dev_z = residual_samples(&base, store, &data.dev)?;
            let train_z = residual_samples(&base, store, &data.train)?;
            let resid_only = mask_of(store, &[resid.base_params()]);
            let mut rt = Trainer { net: &resid, config, seed, phase_index: trainer.phase_index, log: vec![] };
            base_stages(&mut rt, store, Objective::Joint(1.0), resid_only, (&dev_z, &train_z), None, config.l2)?;
            trainer.log.extend(rt.log.into_iter().map(|mut e| {
                e.phase = format!("residual-{}", e.phase);
                e
            }));
        }
        Variant::Constant => unreachable!(),
    }
    model.log = trainer.log;
    Ok(model)
}

/// Samples whose targets are the base model's absolute emulation residuals.
fn residual_samples(base: &Network, store: &ParameterStore, set: &[SequenceSample]) -> Result<Vec<SequenceSample>> {
    set.par_iter()
        .map(|s| {
            let tr = base.forward(store, s, DecodeMode::Emulation { observed_steps: s.observed_steps }, None, false)?;
            let z = tr.yhat.zip_map(&s.targets, |a, b| (a - b).abs())?;
            Ok(SequenceSample { inputs: s.inputs.clone(), targets: z, observed_steps: s.observed_steps })
        })
        .collect()
}

/// Network outputs in standardized space.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub yhat: Matrix,
    pub meta: Option<Matrix>,
    pub log_var: Option<Matrix>,
}

/// Single forward pass of the base network (with all heads) in standardized space.
pub fn forward_pass(
    model: &TrainedModel,
    sample: &SequenceSample,
    mode: DecodeMode,
    masks: Option<&DropoutMask>,
) -> Result<ForwardOutput> {
    model.config.check_sample(sample)?;
    let net = model.base.as_ref().ok_or_else(|| Error::ConfigMismatch("constant band has no network".into()))?;
    let tr = net.forward(&model.store, sample, mode, masks, true)?;
    Ok(ForwardOutput { yhat: tr.yhat, meta: tr.meta_out, log_var: tr.log_var })
}

/// Unit band around `yhat`, the uncalibrated naive reference.
pub fn constant_band(yhat: &Matrix) -> BoundedPrediction {
    BoundedPrediction::symmetric(yhat.clone(), Matrix::filled(yhat.rows(), yhat.cols(), 1.0))
}

/// Bounded prediction in original units. Decoding uses the sample's
/// `observed_steps`; `runs > 1` is only valid for DOMS.
pub fn predict(model: &TrainedModel, sample: &SequenceSample, runs: usize, seed: u64) -> Result<BoundedPrediction> {
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    if runs > 1 && model.variant != Variant::Doms {
        return Err(Error::RunsForNonDropoutVariant);
    }
    model.config.check_sample(sample)?;
    let stats = &model.stats;
    let mode = DecodeMode::Emulation { observed_steps: sample.observed_steps };
    let (d, m) = sample.targets.shape();
    if model.variant == Variant::Constant {
        let yhat = restore_units(&Matrix::zeros(d, m), stats)?;
        return Ok(constant_band(&yhat));
    }
    let net = model.base.as_ref().expect("non-constant variants have a base network");
    let store = &model.store;
    let p = match model.variant {
        Variant::Jms | Variant::Wbms => {
            let tr = net.forward(store, sample, mode, None, true)?;
            let z = restore_band(tr.meta_out.as_ref().expect("meta output"), stats)?;
            BoundedPrediction::symmetric(restore_units(&tr.yhat, stats)?, z)
        }
        Variant::Jma => {
            let tr = net.forward(store, sample, mode, None, true)?;
            let z = tr.meta_out.expect("meta output");
            BoundedPrediction {
                yhat: restore_units(&tr.yhat, stats)?,
                z_lower: restore_band(&z.slice_rows(0, d), stats)?,
                z_upper: restore_band(&z.slice_rows(d, 2 * d), stats)?,
            }
        }
        Variant::Jmv => {
            let tr = net.forward(store, sample, mode, None, false)?;
            let sigma = tr.log_var.expect("variance head").map(|s| (s / 2.0).exp());
            BoundedPrediction::symmetric(restore_units(&tr.yhat, stats)?, restore_band(&sigma, stats)?)
        }
        Variant::Bbms => {
            let tr = net.forward(store, sample, mode, None, false)?;
            let resid = model.residual.as_ref().expect("bbms has a residual network");
            let rs = SequenceSample {
                inputs: sample.inputs.clone(),
                targets: tr.yhat.zip_map(&sample.targets, |a, b| (a - b).abs())?,
                observed_steps: sample.observed_steps,
            };
            let z = resid.forward(store, &rs, mode, None, false)?.yhat;
            BoundedPrediction::symmetric(restore_units(&tr.yhat, stats)?, restore_band(&z, stats)?)
        }
        Variant::Doms => {
            let mut outs = Vec::with_capacity(runs);
            for r in 0..runs {
                let masks = if model.config.dropout.is_zero() {
                    None
                } else {
                    Some(sample_variational_masks(&net.mask_shapes(), model.config.dropout, mix_seed(&[seed, r as u64]))?)
                };
                outs.push(restore_units(&net.forward(store, sample, mode, masks.as_ref(), false)?.yhat, stats)?);
            }
            let (mean, sd) = mean_and_population_std(&outs);
            BoundedPrediction::symmetric(mean, sd)
        }
        Variant::Constant => unreachable!(),
    };
    if let Some((row, col)) = p.yhat.first_non_finite().or(p.z_lower.first_non_finite()).or(p.z_upper.first_non_finite()) {
        return Err(Error::NumericalFailure(format!("non-finite prediction at ({row}, {col})")));
    }
    Ok(p)
}

/// Predicts every sample; sample `i` uses seed `mix_seed([seed, i])`.
pub fn predict_all(model: &TrainedModel, samples: &[SequenceSample], runs: usize, seed: u64) -> Result<Vec<BoundedPrediction>> {
    samples.par_iter().enumerate().map(|(i, s)| predict(model, s, runs, mix_seed(&[seed, i as u64]))).collect()
}

/// Elementwise mean and population standard deviation over equally shaped matrices.
pub fn mean_and_population_std(runs: &[Matrix]) -> (Matrix, Matrix) {
    let (rows, cols) = runs[0].shape();
    let n = runs.len() as f64;
    let mut mean = Matrix::zeros(rows, cols);
    let mut sd = Matrix::zeros(rows, cols);
    for k in 0..rows * cols {
        let first = runs[0].as_slice()[k];
        let mu = first + runs.iter().map(|r| r.as_slice()[k] - first).sum::<f64>() / n;
        let var = runs.iter().map(|r| (r.as_slice()[k] - mu).powi(2)).sum::<f64>() / n;
        mean.as_mut_slice()[k] = mu;
        sd.as_mut_slice()[k] = var.sqrt();
    }
    (mean, sd)
}

/// Agreement between the dominant band side and the sign of the residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationReport {
    /// Fraction of evaluated pairs where `z_lower > z_upper` iff `yhat > y`.
    pub accuracy: f64,
    pub evaluated: usize,
    /// Pairs above the noise floor with `z_lower == z_upper`.
    pub ties: usize,
    /// Pairs with `|yhat - y| <= noise_floor`.
    pub filtered: usize,
}

pub fn orientation_accuracy(preds: &[BoundedPrediction], ys: &[Matrix], noise_floor: f64) -> Result<OrientationReport> {
    if preds.len() != ys.len() {
        return Err(Error::LengthMismatch(preds.len(), ys.len()));
    }
    let (mut hits, mut evaluated, mut ties, mut filtered) = (0usize, 0usize, 0usize, 0usize);
    for (p, y) in preds.iter().zip(ys) {
        if p.is_symmetric() {
            return Err(Error::SymmetricInput);
        }
        crate::types::validate_bounded_prediction(p, y)?;
        for k in 0..y.as_slice().len() {
            let delta = p.yhat.as_slice()[k] - y.as_slice()[k];
            if delta.abs() <= noise_floor {
                filtered += 1;
                continue;
            }
            let (zl, zu) = (p.z_lower.as_slice()[k], p.z_upper.as_slice()[k]);
            if zl == zu {
                ties += 1;
                continue;
            }
            evaluated += 1;
            if (zl > zu) == (delta > 0.0) {
                hits += 1;
            }
        }
    }
    let accuracy = if evaluated == 0 { 0.0 } else { hits as f64 / evaluated as f64 };
    Ok(OrientationReport { accuracy, evaluated, ties, filtered })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ArchitectureConfig {
        ArchitectureConfig {
            input_features: 3,
            output_dim: 2,
            encoder_units: 4,
            decoder_units: 4,
            meta_units: 3,
            embeddings: vec![EmbeddingSpec { name: "c".into(), column: 0, cardinality: 3, dim: 2 }],
            ..ArchitectureConfig::default()
        }
    }

    fn tiny_sample(m: usize) -> SequenceSample {
        let inputs = Matrix::from_rows(&[vec![1.0, 0.3, -0.2], vec![2.0, -0.1, 0.5], vec![0.0, 0.7, 0.1]]).unwrap();
        let targets = Matrix::from_vec(2, m, (0..2 * m).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        SequenceSample::new(inputs, targets, 1.min(m)).unwrap()
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!(matches!("nope".parse::<Variant>(), Err(Error::UnknownVariant(_))));
    }

    #[test]
    fn defaults_match_hyperparameter_table() {
        let c = ArchitectureConfig::default();
        assert_eq!((c.encoder_units, c.decoder_units, c.meta_units), (32, 32, 16));
        assert_eq!((c.lr_stage1, c.lr_stage2, c.batch_size), (0.001, 0.0002, 100));
        assert_eq!((c.l2, c.doms_l2), (1e-4, 0.0));
        assert_eq!(c.betas, [1.0, 0.5, 0.0]);
        assert_eq!((c.dropout.input, c.dropout.state, c.dropout.output), (0.25, 0.1, 0.25));
        assert_eq!(c.doms_runs, 10);
    }

    #[test]
    fn meta_decoder_input_width() {
        let c = ArchitectureConfig::new(4, 1);
        let mut store = ParameterStore::new();
        let net = Network::build(&mut store, "", &c, NetKind::Meta { outputs: 1 }, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(net.meta.as_ref().unwrap().cell.input, 1 + 32);
    }

    #[test]
    fn single_step_modes_coincide() {
        let c = tiny_config();
        let mut store = ParameterStore::new();
        let net = Network::build(&mut store, "", &c, NetKind::Meta { outputs: 2 }, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let s = tiny_sample(1);
        let a = net.forward(&store, &s, DecodeMode::TeacherForced, None, true).unwrap();
        let b = net.forward(&store, &s, DecodeMode::Emulation { observed_steps: 0 }, None, true).unwrap();
        assert_eq!(a.yhat, b.yhat);
        assert_eq!(a.meta_out, b.meta_out);
    }

    #[test]
    fn full_observation_equals_teacher_forcing() {
        let c = tiny_config();
        let mut store = ParameterStore::new();
        let net = Network::build(&mut store, "", &c, NetKind::Base, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let s = tiny_sample(5);
        let a = net.forward(&store, &s, DecodeMode::TeacherForced, None, false).unwrap();
        let b = net.forward(&store, &s, DecodeMode::Emulation { observed_steps: 5 }, None, false).unwrap();
        let e = net.forward(&store, &s, DecodeMode::Emulation { observed_steps: 0 }, None, false).unwrap();
        assert_eq!(a.yhat, b.yhat);
        assert_ne!(a.yhat, e.yhat);
    }

    #[test]
    fn bad_category_is_rejected() {
        let c = tiny_config();
        let mut store = ParameterStore::new();
        let net = Network::build(&mut store, "", &c, NetKind::Base, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut s = tiny_sample(2);
        s.inputs.set(0, 0, 3.0);
        assert!(matches!(
            net.forward(&store, &s, DecodeMode::TeacherForced, None, false),
            Err(Error::IndexOutOfRange { index: 3, cardinality: 3 })
        ));
    }

    #[test]
    fn population_std_of_two_runs() {
        let (m, s) = mean_and_population_std(&[Matrix::row_vector(&[1.0]), Matrix::row_vector(&[3.0])]);
        assert_eq!(m.get(0, 0), 2.0);
        assert_eq!(s.get(0, 0), 1.0);
    }

    #[test]
    fn orientation_examples() {
        let y = Matrix::row_vector(&[0.0, 0.0]);
        let p = BoundedPrediction {
            yhat: Matrix::row_vector(&[1.0, 2.0]),
            z_lower: Matrix::row_vector(&[2.0, 3.0]),
            z_upper: Matrix::row_vector(&[1.0, 0.5]),
        };
        let r = orientation_accuracy(std::slice::from_ref(&p), std::slice::from_ref(&y), 0.0).unwrap();
        assert_eq!((r.accuracy, r.evaluated), (1.0, 2));
        let flipped = BoundedPrediction { yhat: p.yhat.clone(), z_lower: p.z_upper.clone(), z_upper: p.z_lower.clone() };
        assert_eq!(orientation_accuracy(&[flipped], std::slice::from_ref(&y), 0.0).unwrap().accuracy, 0.0);
        let r = orientation_accuracy(std::slice::from_ref(&p), std::slice::from_ref(&y), 1.5).unwrap();
        assert_eq!((r.evaluated, r.filtered), (1, 1));
        let sym = BoundedPrediction::symmetric(p.yhat.clone(), p.z_lower.clone());
        assert!(matches!(orientation_accuracy(&[sym], &[y], 0.0), Err(Error::SymmetricInput)));
    }
}
