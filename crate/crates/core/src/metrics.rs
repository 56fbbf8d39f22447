//! Interval quality metrics: missrate, bandwidth, excess and deficit, plus
//! base error, relative gains, minimum excess-deficit cost and the paired
//! permutation test used to compare systems.
//!
//! All four interval metrics treat the interval `[yhat - z_lower, yhat + z_upper]`
//! as closed: an observation lying exactly on a bound is covered.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{candidate_scales, scale_bands};
use crate::error::{Error, Result};
use crate::types::{validate_bounded_prediction, BoundedPrediction, Matrix};

/// Missrate, bandwidth, excess and deficit for one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CoreMetrics {
    pub missrate: f64,
    pub bandwidth: f64,
    pub excess: f64,
    pub deficit: f64,
}

impl CoreMetrics {
    /// Half the sum of excess and deficit.
    pub fn cost(&self) -> f64 {
        0.5 * (self.excess + self.deficit)
    }

    fn weighted_sum(parts: &[CoreMetrics], weights: &[f64]) -> CoreMetrics {
        let total: f64 = weights.iter().sum();
        let mut out = CoreMetrics::default();
        for (m, w) in parts.iter().zip(weights) {
            let w = w / total;
            out.missrate += w * m.missrate;
            out.bandwidth += w * m.bandwidth;
            out.excess += w * m.excess;
            out.deficit += w * m.deficit;
        }
        out
    }
}

/// Which metric a calibration search targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Missrate,
    Bandwidth,
    Excess,
    Deficit,
}

impl MetricKind {
    pub fn pick(self, m: &CoreMetrics) -> f64 {
        match self {
            MetricKind::Missrate => m.missrate,
            MetricKind::Bandwidth => m.bandwidth,
            MetricKind::Excess => m.excess,
            MetricKind::Deficit => m.deficit,
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "missrate" => Ok(MetricKind::Missrate),
            "bandwidth" => Ok(MetricKind::Bandwidth),
            "excess" => Ok(MetricKind::Excess),
            "deficit" => Ok(MetricKind::Deficit),
            other => Err(Error::InvalidArgument(format!("unknown metric '{other}'"))),
        }
    }
}

/// Per-row metric sums: (covered count, width sum, excess sum, deficit sum).
fn row_sums(p: &BoundedPrediction, y: &Matrix, d: usize) -> (usize, f64, f64, f64) {
    let (yh, zl, zu, yr) = (p.yhat.row(d), p.z_lower.row(d), p.z_upper.row(d), y.row(d));
    let mut covered = 0usize;
    let (mut width, mut excess, mut deficit) = (0.0, 0.0, 0.0);
    for t in 0..yr.len() {
        let lo = yh[t] - zl[t];
        let hi = yh[t] + zu[t];
        let obs = yr[t];
        width += hi - lo;
        if lo <= obs && obs <= hi {
            covered += 1;
            excess += (obs - lo).min(hi - obs);
        } else {
            deficit += (obs - lo).abs().min((obs - hi).abs());
        }
    }
    (covered, width, excess, deficit)
}

/// Metrics for a single output dimension `d`.
pub fn dimension_metrics(p: &BoundedPrediction, y: &Matrix, d: usize) -> CoreMetrics {
    let m = y.cols() as f64;
    let (covered, width, excess, deficit) = row_sums(p, y, d);
    CoreMetrics {
        missrate: 1.0 - covered as f64 / m,
        bandwidth: width / (2.0 * m),
        excess: excess / m,
        deficit: deficit / m,
    }
}

/// All four metrics with uniform averaging over `(d, t)`.
pub fn core_metrics(p: &BoundedPrediction, y: &Matrix) -> Result<CoreMetrics> {
    validate_bounded_prediction(p, y)?;
    let (rows, cols) = y.shape();
    let n = (rows * cols) as f64;
    let mut acc = (0usize, 0.0, 0.0, 0.0);
    for d in 0..rows {
        let s = row_sums(p, y, d);
        acc = (acc.0 + s.0, acc.1 + s.1, acc.2 + s.2, acc.3 + s.3);
    }
    Ok(CoreMetrics {
        missrate: 1.0 - acc.0 as f64 / n,
        bandwidth: acc.1 / (2.0 * n),
        excess: acc.2 / n,
        deficit: acc.3 / n,
    })
}

/// Metrics averaged over dimensions with the given nonnegative weights.
///
/// Uniform weights reproduce [`core_metrics`] up to rounding.
pub fn weighted_metrics(p: &BoundedPrediction, y: &Matrix, weights: &[f64]) -> Result<CoreMetrics> {
    validate_bounded_prediction(p, y)?;
    if weights.len() != y.rows() {
        return Err(Error::LengthMismatch(weights.len(), y.rows()));
    }
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidArgument("dimension weights must be nonnegative with a positive sum".into()));
    }
    let parts: Vec<CoreMetrics> = (0..y.rows()).map(|d| dimension_metrics(p, y, d)).collect();
    Ok(CoreMetrics::weighted_sum(&parts, weights))
}

pub fn missrate(p: &BoundedPrediction, y: &Matrix) -> Result<f64> {
    core_metrics(p, y).map(|m| m.missrate)
}

pub fn bandwidth(p: &BoundedPrediction) -> Result<f64> {
    // bandwidth does not look at observations; validate against yhat's shape
    core_metrics(p, &p.yhat).map(|m| m.bandwidth)
}

pub fn excess(p: &BoundedPrediction, y: &Matrix) -> Result<f64> {
    core_metrics(p, y).map(|m| m.excess)
}

pub fn deficit(p: &BoundedPrediction, y: &Matrix) -> Result<f64> {
    core_metrics(p, y).map(|m| m.deficit)
}

/// How metrics over many sequences are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Every `(sequence, d, t)` triple weighs the same.
    #[default]
    Pooled,
    /// Metrics are computed per sequence, then averaged.
    PerSequence,
}

pub fn aggregate_metrics(
    preds: &[BoundedPrediction],
    ys: &[Matrix],
    aggregation: Aggregation,
) -> Result<CoreMetrics> {
    if preds.len() != ys.len() {
        return Err(Error::LengthMismatch(preds.len(), ys.len()));
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("no sequences to aggregate".into()));
    }
    match aggregation {
        Aggregation::Pooled => {
            let p = BoundedPrediction::hconcat(preds)?;
            let refs: Vec<&Matrix> = ys.iter().collect();
            core_metrics(&p, &Matrix::hconcat(&refs)?)
        }
        Aggregation::PerSequence => {
            let parts = preds
                .iter()
                .zip(ys)
                .map(|(p, y)| core_metrics(p, y))
                .collect::<Result<Vec<_>>>()?;
            Ok(CoreMetrics::weighted_sum(&parts, &vec![1.0; parts.len()]))
        }
    }
}

/// Relative L1 error of the base predictor, averaged over output dimensions.
pub fn base_error(yhat: &Matrix, y: &Matrix) -> Result<f64> {
    yhat.check_same_shape(y, "base_error")?;
    let mut total = 0.0;
    for d in 0..y.rows() {
        let norm: f64 = y.row(d).iter().map(|v| v.abs()).sum();
        if norm == 0.0 {
            return Err(Error::ZeroNormRow(d));
        }
        let err: f64 = yhat.row(d).iter().zip(y.row(d)).map(|(a, b)| (a - b).abs()).sum();
        total += err / norm;
    }
    Ok(total / y.rows() as f64)
}

/// Percent improvement of `m_system` over the reference `m_fixed`.
pub fn relative_gain(m_system: f64, m_fixed: f64) -> Result<f64> {
    if !(m_fixed > 0.0) {
        return Err(Error::NonPositiveReference(m_fixed));
    }
    Ok(100.0 * (m_fixed - m_system) / m_fixed)
}

/// Minimum of `0.5 * (excess + deficit)` over the given scales and every
/// candidate scale that puts one observation exactly on a bound.
///
/// Returns `(cost, scale)`; ties keep the first scale probed (grid order,
/// then candidates).
pub fn min_cost(p: &BoundedPrediction, y: &Matrix, scale_grid: &[f64]) -> Result<(f64, f64)> {
    if scale_grid.is_empty() {
        return Err(Error::InvalidArgument("scale grid is empty".into()));
    }
    validate_bounded_prediction(p, y)?;
    let mut scales: Vec<f64> = scale_grid.to_vec();
    scales.extend(candidate_scales(y, p));
    let mut best: Option<(f64, f64)> = None;
    for &s in &scales {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::InvalidArgument(format!("invalid scale {s}")));
        }
        let cost = core_metrics(&scale_bands(p, s), y)?.cost();
        if best.map_or(true, |(c, _)| cost < c) {
            best = Some((cost, s));
        }
    }
    Ok(best.expect("nonempty scale list"))
}

/// Two-sided paired permutation (sign-flip) test on the mean difference of
/// `costs_a - costs_b`.
///
/// The p-value is `(1 + #{|stat_perm| >= |stat_obs|}) / (1 + resamples)`.
pub fn paired_permutation_test(costs_a: &[f64], costs_b: &[f64], resamples: usize, seed: u64) -> Result<f64> {
    if costs_a.len() != costs_b.len() {
        return Err(Error::LengthMismatch(costs_a.len(), costs_b.len()));
    }
    if costs_a.is_empty() || resamples == 0 {
        return Err(Error::InvalidArgument("permutation test needs data and at least one resample".into()));
    }
    let diffs: Vec<f64> = costs_a.iter().zip(costs_b).map(|(a, b)| a - b).collect();
    let n = diffs.len() as f64;
    let observed = (diffs.iter().sum::<f64>() / n).abs();
    let tol = 1e-12 * observed.max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..resamples {
        let s: f64 = diffs.iter().map(|&d| if rng.random::<bool>() { d } else { -d }).sum();
        if (s / n).abs() >= observed - tol {
            extreme += 1;
        }
    }
    Ok((1 + extreme) as f64 / (1 + resamples) as f64)
}

/// Operating point: metrics measured after scaling bands to hit a target missrate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub target_missrate: f64,
    /// Effective multiplier per output dimension (per-dimension times global).
    pub scale: Vec<f64>,
    pub missrate: f64,
    pub bandwidth: f64,
    pub excess: f64,
    pub deficit: f64,
}

impl OperatingPoint {
    pub fn cost(&self) -> f64 {
        0.5 * (self.excess + self.deficit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinCostEntry {
    pub cost: f64,
    pub scale: f64,
}

/// Metrics at each target missrate plus the minimum excess-deficit cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPointTable {
    pub points: Vec<OperatingPoint>,
    pub min_cost: MinCostEntry,
    /// `"self"` when scales were searched on the evaluated set, otherwise the
    /// name of the calibration split.
    pub calibration_set: String,
}

impl OperatingPointTable {
    /// Mean of `0.5 * (excess + deficit)` over the operating points.
    pub fn excess_deficit_average(&self) -> f64 {
        self.points.iter().map(OperatingPoint::cost).sum::<f64>() / self.points.len() as f64
    }

    pub fn bandwidth_average(&self) -> f64 {
        self.points.iter().map(|p| p.bandwidth).sum::<f64>() / self.points.len() as f64
    }
}

/// Report row for one system under one evaluation condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub missrate: f64,
    pub bandwidth: f64,
    pub excess: f64,
    pub deficit: f64,
    pub e_base: f64,
    pub gain_pct: Option<f64>,
    pub per_dimension: Vec<CoreMetrics>,
}

impl MetricReport {
    pub const CSV_COLUMNS: [&'static str; 6] = ["missrate", "bandwidth", "excess", "deficit", "e_base", "gain_pct"];

    pub fn new(p: &BoundedPrediction, y: &Matrix, gain_pct: Option<f64>) -> Result<Self> {
        let m = core_metrics(p, y)?;
        Ok(Self {
            missrate: m.missrate,
            bandwidth: m.bandwidth,
            excess: m.excess,
            deficit: m.deficit,
            e_base: base_error(&p.yhat, y)?,
            gain_pct,
            per_dimension: (0..y.rows()).map(|d| dimension_metrics(p, y, d)).collect(),
        })
    }

    pub fn csv_header() -> String {
        Self::CSV_COLUMNS.join(",")
    }

    pub fn csv_row(&self) -> String {
        let gain = self.gain_pct.map(|g| format!("{g}")).unwrap_or_default();
        format!("{},{},{},{},{},{}", self.missrate, self.bandwidth, self.excess, self.deficit, self.e_base, gain)
    }
}
