//! Band-scale calibration.
//!
//! Two mechanisms establish operating points:
//!
//! * quantile scaling: per output dimension, the empirical quantile of the
//!   absolute standardized residuals `|y - yhat| / z` on a held-out set;
//! * candidate search: every scale that places one observation exactly on a
//!   bound is a candidate, the metric is evaluated at each candidate over the
//!   whole set, and the candidate closest to the target value wins. This is
//!   quadratic in the number of `(d, t)` pairs.
//!
//! The upper bound is always `yhat + scale * z_upper`. Asymmetric predictions
//! share one scale for both bands.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{core_metrics, min_cost, MetricKind, MinCostEntry, OperatingPoint, OperatingPointTable};
use crate::types::{validate_bounded_prediction, BoundedPrediction, Matrix};

/// Band floor applied before dividing residuals by predicted bands.
pub const DEFAULT_BAND_FLOOR: f64 = 1e-6;
/// Lower clamp for a zero quantile so scales stay positive.
pub const MIN_SCALE: f64 = 1e-12;
/// Target missrates of the reported operating points.
pub const DEFAULT_TARGETS: [f64; 3] = [0.1, 0.05, 0.01];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationScale {
    pub per_dimension_scale: Vec<f64>,
    pub global_scale: f64,
    pub target_description: String,
}

impl CalibrationScale {
    pub fn uniform(dims: usize, global_scale: f64, target_description: impl Into<String>) -> Self {
        Self {
            per_dimension_scale: vec![1.0; dims],
            global_scale,
            target_description: target_description.into(),
        }
    }

    /// Per-dimension multiplier actually applied to the bands.
    pub fn effective(&self) -> Vec<f64> {
        self.per_dimension_scale.iter().map(|s| s * self.global_scale).collect()
    }

    fn validate(&self) -> Result<()> {
        let ok = |s: f64| s.is_finite() && s > 0.0;
        if !ok(self.global_scale) || !self.per_dimension_scale.iter().all(|&s| ok(s)) {
            return Err(Error::InvalidArgument(format!("calibration scales must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Standardized residuals `(y - yhat) / max(z, floor)`, dimension-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScores {
    pub z: Matrix,
}

pub fn z_scores(y: &Matrix, p: &BoundedPrediction, floor: f64) -> Result<ZScores> {
    validate_bounded_prediction(p, y)?;
    if !p.is_symmetric() {
        return Err(Error::AsymmetricInput);
    }
    let mut z = Matrix::zeros(y.rows(), y.cols());
    for d in 0..y.rows() {
        for t in 0..y.cols() {
            let band = p.z_lower.get(d, t).max(floor);
            z.set(d, t, (y.get(d, t) - p.yhat.get(d, t)) / band);
        }
    }
    Ok(ZScores { z })
}

/// Smallest `s` per dimension such that at least a fraction `coverage` of the
/// absolute scores are `<= s`.
pub fn quantile_scale(z: &ZScores, coverage: f64) -> Result<CalibrationScale> {
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(Error::InvalidArgument(format!("coverage must lie in (0, 1), got {coverage}")));
    }
    let mut scales = Vec::with_capacity(z.z.rows());
    for d in 0..z.z.rows() {
        let mut abs: Vec<f64> = z.z.row(d).iter().map(|v| v.abs()).collect();
        if abs.is_empty() {
            return Err(Error::EmptyDimension(d));
        }
        abs.sort_by(f64::total_cmp);
        let n = abs.len();
        // guard against p * n landing a hair above an integer
        let k = ((coverage * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
        scales.push(abs[k - 1].max(MIN_SCALE));
    }
    Ok(CalibrationScale {
        per_dimension_scale: scales,
        global_scale: 1.0,
        target_description: format!("quantile coverage {coverage}"),
    })
}

/// Multiplies both bands by one scalar.
pub fn scale_bands(p: &BoundedPrediction, scale: f64) -> BoundedPrediction {
    BoundedPrediction {
        yhat: p.yhat.clone(),
        z_lower: p.z_lower.map(|v| v * scale),
        z_upper: p.z_upper.map(|v| v * scale),
    }
}

/// Multiplies row `d` of both bands by `per_dimension_scale[d] * global_scale`.
pub fn apply_scale(p: &BoundedPrediction, s: &CalibrationScale) -> Result<BoundedPrediction> {
    s.validate()?;
    let (rows, _) = p.shape();
    if s.per_dimension_scale.len() != rows {
        return Err(Error::LengthMismatch(s.per_dimension_scale.len(), rows));
    }
    let mut out = p.clone();
    for (d, k) in s.effective().into_iter().enumerate() {
        out.z_lower.row_mut(d).iter_mut().for_each(|v| *v *= k);
        out.z_upper.row_mut(d).iter_mut().for_each(|v| *v *= k);
    }
    Ok(out)
}

/// Scales at which one observation lies exactly on a bound, in `(d, t)` order.
///
/// Observations below `yhat` pair with the lower band and observations above
/// with the upper band; pairs whose relevant band is zero are skipped.
pub fn candidate_scales(y: &Matrix, p: &BoundedPrediction) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.rows() * y.cols());
    for d in 0..y.rows() {
        for t in 0..y.cols() {
            let delta = p.yhat.get(d, t) - y.get(d, t);
            let (num, band) = if delta >= 0.0 {
                (delta, p.z_lower.get(d, t))
            } else {
                (-delta, p.z_upper.get(d, t))
            };
            if band > 0.0 {
                // rounding can leave the point a hair outside; step up until it lies on the bound
                let (yh, obs) = (p.yhat.get(d, t), y.get(d, t));
                let mut s = num / band;
                while s.is_finite() && !covered(yh, band, s, delta >= 0.0, obs) {
                    s = s.next_up();
                }
                out.push(s);
            }
        }
    }
    out
}

fn covered(yhat: f64, band: f64, scale: f64, lower: bool, y: f64) -> bool {
    if lower {
        yhat - band * scale <= y
    } else {
        yhat + band * scale >= y
    }
}

/// Candidate-set search for the scale whose metric value is closest to `target`.
///
/// Ties go to the earliest candidate in `(d, t)` order.
pub fn find_scale_for_metric(
    y: &Matrix,
    p: &BoundedPrediction,
    metric: MetricKind,
    target: f64,
) -> Result<CalibrationScale> {
    validate_bounded_prediction(p, y)?;
    if y.rows() * y.cols() == 0 {
        return Err(Error::InvalidArgument("empty calibration set".into()));
    }
    let candidates = candidate_scales(y, p);
    if candidates.is_empty() {
        return Err(Error::AllZeroBands);
    }
    let values = evaluate_scales(y, p, metric, &candidates)?;
    let best = argmin_distance(&values, target);
    Ok(CalibrationScale::uniform(
        y.rows(),
        candidates[best].max(MIN_SCALE),
        format!("{metric:?} = {target}").to_lowercase(),
    ))
}

/// Like [`find_scale_for_metric`] but over an explicit grid of scales.
pub fn find_scale_on_grid(
    y: &Matrix,
    p: &BoundedPrediction,
    metric: MetricKind,
    target: f64,
    grid: &[f64],
) -> Result<CalibrationScale> {
    validate_bounded_prediction(p, y)?;
    if grid.is_empty() || grid.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidArgument("grid scales must be positive and finite".into()));
    }
    let values = evaluate_scales(y, p, metric, grid)?;
    let best = argmin_distance(&values, target);
    Ok(CalibrationScale::uniform(y.rows(), grid[best], format!("{metric:?} = {target} (grid)").to_lowercase()))
}

fn evaluate_scales(y: &Matrix, p: &BoundedPrediction, metric: MetricKind, scales: &[f64]) -> Result<Vec<f64>> {
    scales
        .par_iter()
        .map(|&s| core_metrics(&scale_bands(p, s), y).map(|m| metric.pick(&m)))
        .collect()
}

fn argmin_distance(values: &[f64], target: f64) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if (v - target).abs() < (values[best] - target).abs() {
            best = i;
        }
    }
    best
}

/// Full calibration for one target missrate on a calibration set.
///
/// Symmetric predictions are first equalized per dimension by quantile
/// scaling at coverage `1 - target`; the candidate search then fixes one
/// global scale on the flattened `(d, t)` pairs.
pub fn calibrate_missrate(y: &Matrix, p: &BoundedPrediction, target: f64, band_floor: f64) -> Result<CalibrationScale> {
    let dims = y.rows();
    let mut scale = if p.is_symmetric() && target > 0.0 && target < 1.0 {
        quantile_scale(&z_scores(y, p, band_floor)?, 1.0 - target)?
    } else {
        CalibrationScale::uniform(dims, 1.0, "")
    };
    let pre = apply_scale(p, &scale)?;
    let global = find_scale_for_metric(y, &pre, MetricKind::Missrate, target)?;
    scale.global_scale = global.global_scale;
    scale.target_description = format!("missrate = {target}");
    Ok(scale)
}

/// Operating-point table for `eval`, with scales searched on `calib`.
///
/// Passing the evaluated set as `calib` gives the optimistic (same-set)
/// convention; a held-out set gives the cross-validated one. The minimum-cost
/// scale is likewise chosen on `calib` and its cost reported on `eval`.
pub fn operating_point_table(
    eval: (&Matrix, &BoundedPrediction),
    calib: (&Matrix, &BoundedPrediction),
    targets: &[f64],
    grid: &[f64],
    calibration_set: &str,
) -> Result<OperatingPointTable> {
    let (y, p) = eval;
    let (cy, cp) = calib;
    validate_bounded_prediction(p, y)?;
    validate_bounded_prediction(cp, cy)?;
    if y.rows() != cy.rows() {
        return Err(Error::ShapeMismatch("calibration and evaluation dimensions differ".into()));
    }
    let mut points = Vec::with_capacity(targets.len());
    for &target in targets {
        let scale = calibrate_missrate(cy, cp, target, DEFAULT_BAND_FLOOR)?;
        let m = core_metrics(&apply_scale(p, &scale)?, y)?;
        points.push(OperatingPoint {
            target_missrate: target,
            scale: scale.effective(),
            missrate: m.missrate,
            bandwidth: m.bandwidth,
            excess: m.excess,
            deficit: m.deficit,
        });
    }
    let grid = if grid.is_empty() { &[1.0][..] } else { grid };
    let (_, scale) = min_cost(cp, cy, grid)?;
    let cost = core_metrics(&scale_bands(p, scale), y)?.cost();
    Ok(OperatingPointTable {
        points,
        min_cost: MinCostEntry { cost, scale },
        calibration_set: calibration_set.to_string(),
    })
}

/// Logarithmic grid of `n` scales between `lo` and `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}
