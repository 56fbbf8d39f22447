//! Report tables computed from prediction files alone.

use serde::{Deserialize, Serialize};
use uqseq::calibration::{calibrate_missrate, operating_point_table, DEFAULT_BAND_FLOOR};
use uqseq::data::{recombine, PredictionRecord, WindowSpec};
use uqseq::garch::{fit_mle, rolling_bands, GarchFit};
use uqseq::metrics::{base_error, core_metrics, paired_permutation_test, relative_gain, OperatingPointTable};
use uqseq::models::{constant_band, mix_seed, orientation_accuracy, OrientationReport};
use uqseq::{BoundedPrediction, Error, Matrix, Result};

use crate::config::{CalibrationSettings, EvaluationSettings};

/// Predictions cut into the pieces that metrics pool over and that the
/// permutation test resamples: one per sequence, or one per recombined
/// forecast block for windowed series.
#[derive(Debug, Clone)]
pub struct Units {
    pub preds: Vec<BoundedPrediction>,
    pub ys: Vec<Matrix>,
}

impl Units {
    pub fn from_records(records: &[PredictionRecord], window: Option<&WindowSpec>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidArgument("no predictions".into()));
        }
        let Some(w) = window else {
            return Ok(Self {
                preds: records.iter().map(|r| r.prediction.clone()).collect(),
                ys: records.iter().map(|r| r.y.clone()).collect(),
            });
        };
        let preds: Vec<BoundedPrediction> = records.iter().map(|r| r.prediction.clone()).collect();
        let truth: Vec<BoundedPrediction> = records
            .iter()
            .map(|r| BoundedPrediction::symmetric(r.y.clone(), Matrix::zeros(r.y.rows(), r.y.cols())))
            .collect();
        let p = recombine(&preds, w)?;
        let y = recombine(&truth, w)?.yhat;
        let blocks = p.yhat.cols() / w.forecast;
        let cut = |m: &Matrix, b: usize| m.slice_cols(b * w.forecast, (b + 1) * w.forecast);
        Ok(Self {
            preds: (0..blocks)
                .map(|b| BoundedPrediction { yhat: cut(&p.yhat, b), z_lower: cut(&p.z_lower, b), z_upper: cut(&p.z_upper, b) })
                .collect(),
            ys: (0..blocks).map(|b| cut(&y, b)).collect(),
        })
    }

    pub fn pooled(&self) -> Result<(BoundedPrediction, Matrix)> {
        let ys: Vec<&Matrix> = self.ys.iter().collect();
        Ok((BoundedPrediction::hconcat(&self.preds)?, Matrix::hconcat(&ys)?))
    }

    fn with_bands(&self, band: impl Fn(usize, &BoundedPrediction) -> Result<(Matrix, Matrix)>) -> Result<Self> {
        let preds = self
            .preds
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let (zl, zu) = band(i, p)?;
                Ok(BoundedPrediction { yhat: p.yhat.clone(), z_lower: zl, z_upper: zu })
            })
            .collect::<Result<_>>()?;
        Ok(Self { preds, ys: self.ys.clone() })
    }

    /// The same base predictions with a unit band.
    pub fn constant(&self) -> Self {
        let preds = self.preds.iter().map(|p| constant_band(&p.yhat)).collect();
        Self { preds, ys: self.ys.clone() }
    }

    fn residual_stream(&self) -> Result<Matrix> {
        let (p, y) = self.pooled()?;
        p.yhat.zip_map(&y, |a, b| b - a)
    }
}

/// Operating-point tables of one system under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemTables {
    pub condition: String,
    pub system: String,
    /// Scales searched on the evaluated set itself.
    pub star: OperatingPointTable,
    /// Scales searched on the calibration split.
    pub xval: OperatingPointTable,
}

/// One report line in the layout of the published comparison tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub condition: String,
    pub system: String,
    pub e_base: f64,
    pub ed_avg_star: f64,
    pub ed_avg_xval: f64,
    pub gain_star_pct: Option<f64>,
    pub gain_xval_pct: Option<f64>,
    pub min_cost_star: f64,
    pub min_cost_xval: f64,
    pub min_cost_gain_star_pct: Option<f64>,
    pub min_cost_gain_xval_pct: Option<f64>,
    pub bandwidth_avg_star: f64,
    pub bandwidth_avg_xval: f64,
    /// Paired permutation test of per-unit cost against the constant band.
    pub p_value_vs_constant: Option<f64>,
}

impl ReportRow {
    pub const CSV_COLUMNS: [&'static str; 14] = [
        "condition",
        "system",
        "e_base",
        "ed_avg_star",
        "ed_avg_xval",
        "gain_star_pct",
        "gain_xval_pct",
        "min_cost_star",
        "min_cost_xval",
        "min_cost_gain_star_pct",
        "min_cost_gain_xval_pct",
        "bandwidth_avg_star",
        "bandwidth_avg_xval",
        "p_value_vs_constant",
    ];

    fn csv_line(&self) -> String {
        let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.condition.clone(),
            self.system.clone(),
            self.e_base.to_string(),
            self.ed_avg_star.to_string(),
            self.ed_avg_xval.to_string(),
            o(self.gain_star_pct),
            o(self.gain_xval_pct),
            self.min_cost_star.to_string(),
            self.min_cost_xval.to_string(),
            o(self.min_cost_gain_star_pct),
            o(self.min_cost_gain_xval_pct),
            self.bandwidth_avg_star.to_string(),
            self.bandwidth_avg_xval.to_string(),
            o(self.p_value_vs_constant),
        ]
        .join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchSummary {
    pub order: (usize, usize),
    /// One fit per output dimension.
    pub fits: Vec<GarchFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionOrientation {
    pub condition: String,
    /// Median absolute base residual of the condition.
    pub noise_floor: f64,
    pub filtered: OrientationReport,
    pub unfiltered: OrientationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub variant: String,
    pub calibration_split: String,
    pub targets: Vec<f64>,
    pub rows: Vec<ReportRow>,
    pub tables: Vec<SystemTables>,
    pub garch: Vec<GarchSummary>,
    pub orientation: Vec<ConditionOrientation>,
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = ReportRow::CSV_COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }
}

fn tables(
    condition: &str,
    system: &str,
    eval: &Units,
    calib: &Units,
    settings: &CalibrationSettings,
) -> Result<SystemTables> {
    let (p, y) = eval.pooled()?;
    let (cp, cy) = calib.pooled()?;
    let grid = settings.grid();
    Ok(SystemTables {
        condition: condition.into(),
        system: system.into(),
        star: operating_point_table((&y, &p), (&y, &p), &settings.targets, &grid, "self")?,
        xval: operating_point_table((&y, &p), (&cy, &cp), &settings.targets, &grid, &settings.split)?,
    })
}

/// Cost of each unit averaged over the operating points of `table`.
pub fn unit_costs(units: &Units, table: &OperatingPointTable) -> Result<Vec<f64>> {
    units
        .preds
        .iter()
        .zip(&units.ys)
        .map(|(p, y)| {
            let mut total = 0.0;
            for op in &table.points {
                let scaled = scale_rows(p, &op.scale);
                total += core_metrics(&scaled, y)?.cost();
            }
            Ok(total / table.points.len() as f64)
        })
        .collect()
}

fn scale_rows(p: &BoundedPrediction, scale: &[f64]) -> BoundedPrediction {
    let mut out = p.clone();
    for (d, s) in scale.iter().enumerate() {
        out.z_lower.row_mut(d).iter_mut().for_each(|z| *z *= s);
        out.z_upper.row_mut(d).iter_mut().for_each(|z| *z *= s);
    }
    out
}

fn row(condition: &str, system: &str, e_base: f64, t: &SystemTables, reference: Option<&SystemTables>, p_value: Option<f64>) -> ReportRow {
    let gain = |a: f64, b: Option<f64>| b.and_then(|b| relative_gain(a, b).ok());
    ReportRow {
        condition: condition.into(),
        system: system.into(),
        e_base,
        ed_avg_star: t.star.excess_deficit_average(),
        ed_avg_xval: t.xval.excess_deficit_average(),
        gain_star_pct: gain(t.star.excess_deficit_average(), reference.map(|r| r.star.excess_deficit_average())),
        gain_xval_pct: gain(t.xval.excess_deficit_average(), reference.map(|r| r.xval.excess_deficit_average())),
        min_cost_star: t.star.min_cost.cost,
        min_cost_xval: t.xval.min_cost.cost,
        min_cost_gain_star_pct: gain(t.star.min_cost.cost, reference.map(|r| r.star.min_cost.cost)),
        min_cost_gain_xval_pct: gain(t.xval.min_cost.cost, reference.map(|r| r.xval.min_cost.cost)),
        bandwidth_avg_star: t.star.bandwidth_average(),
        bandwidth_avg_xval: t.xval.bandwidth_average(),
        p_value_vs_constant: p_value,
    }
}

fn median_abs_residual(units: &Units) -> Result<f64> {
    let mut r = units.residual_stream()?.as_slice().iter().map(|v| v.abs()).collect::<Vec<_>>();
    r.sort_by(f64::total_cmp);
    Ok(r[r.len() / 2])
}

/// Everything `evaluate` reports, from the calibration-split records and the
/// records of each evaluated condition.
pub fn build_report(
    variant: &str,
    calib: &[PredictionRecord],
    conditions: &[(String, Vec<PredictionRecord>)],
    window: Option<&WindowSpec>,
    calibration: &CalibrationSettings,
    evaluation: &EvaluationSettings,
    seed: u64,
) -> Result<Report> {
    let calib_units = Units::from_records(calib, window)?;
    let calib_const = calib_units.constant();
    let garch = match window {
        Some(_) => evaluation
            .garch_orders
            .iter()
            .map(|&(p, q)| {
                let resid = calib_units.residual_stream()?;
                let fits = (0..resid.rows())
                    .map(|d| fit_mle(resid.row(d), p, q, mix_seed(&[seed, p as u64, q as u64, d as u64])))
                    .collect::<Result<Vec<_>>>()?;
                if evaluation.strict && fits.iter().any(|f| !f.converged) {
                    return Err(Error::NumericalFailure(format!("GARCH({p},{q}) did not converge")));
                }
                Ok(GarchSummary { order: (p, q), fits })
            })
            .collect::<Result<Vec<_>>>()?,
        None => vec![],
    };
    let asymmetric = calib.first().is_some_and(|r| !r.prediction.is_symmetric());
    let mut rows = vec![];
    let mut all_tables = vec![];
    let mut orientation = vec![];
    for (ci, (condition, records)) in conditions.iter().enumerate() {
        let units = Units::from_records(records, window)?;
        let constant = units.constant();
        let (p, y) = units.pooled()?;
        let e_base = base_error(&p.yhat, &y)?;
        let const_tables = tables(condition, "constant", &constant, &calib_const, calibration)?;
        let const_costs = unit_costs(&constant, &const_tables.xval)?;
        let mut systems: Vec<(String, Units, Units)> = vec![(variant.to_string(), units.clone(), calib_units.clone())];
        for g in &garch {
            let block = window.expect("GARCH needs a window").forecast;
            let fit_resid = calib_units.residual_stream()?;
            let blocks = |z: Matrix, u: &Units| {
                u.with_bands(|i, _| {
                    let c = z.slice_cols(i * block, (i + 1) * block);
                    Ok((c.clone(), c))
                })
            };
            // the calibration stream only sees its own past
            let calib_z = rolling_bands(&g.fits, &Matrix::zeros(fit_resid.rows(), 0), &fit_resid, block)?;
            let eval_z = rolling_bands(&g.fits, &fit_resid, &units.residual_stream()?, block)?;
            let calib_bands = blocks(calib_z, &calib_units)?;
            let eval_bands = blocks(eval_z, &units)?;
            systems.push((format!("garch({},{})", g.order.0, g.order.1), eval_bands, calib_bands));
        }
        for (si, (name, eval_units, cal_units)) in systems.iter().enumerate() {
            let t = tables(condition, name, eval_units, cal_units, calibration)?;
            let costs = unit_costs(eval_units, &t.xval)?;
            let pv = paired_permutation_test(
                &costs,
                &const_costs,
                evaluation.permutation_resamples,
                mix_seed(&[seed, ci as u64, si as u64]),
            )?;
            rows.push(row(condition, name, e_base, &t, Some(&const_tables), Some(pv)));
            all_tables.push(t);
        }
        rows.push(row(condition, "constant", e_base, &const_tables, Some(&const_tables), None));
        all_tables.push(const_tables);
        if asymmetric {
            let floor = median_abs_residual(&units)?;
            orientation.push(ConditionOrientation {
                condition: condition.clone(),
                noise_floor: floor,
                filtered: orientation_accuracy(&units.preds, &units.ys, floor)?,
                unfiltered: orientation_accuracy(&units.preds, &units.ys, 0.0)?,
            });
        }
    }
    Ok(Report {
        variant: variant.into(),
        calibration_split: calibration.split.clone(),
        targets: calibration.targets.clone(),
        rows,
        tables: all_tables,
        garch,
        orientation,
    })
}

/// Per-target scales fitted on the calibration split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub split: String,
    pub scales: Vec<uqseq::calibration::CalibrationScale>,
    pub min_cost_scale: f64,
}

pub fn calibration_file(calib: &[PredictionRecord], window: Option<&WindowSpec>, settings: &CalibrationSettings) -> Result<CalibrationFile> {
    let (p, y) = Units::from_records(calib, window)?.pooled()?;
    let scales = settings
        .targets
        .iter()
        .map(|&t| calibrate_missrate(&y, &p, t, DEFAULT_BAND_FLOOR))
        .collect::<Result<Vec<_>>>()?;
    let (_, min_cost_scale) = uqseq::metrics::min_cost(&p, &y, &settings.grid())?;
    Ok(CalibrationFile { split: settings.split.clone(), scales, min_cost_scale })
}

/// Paired comparison of two systems evaluated on the same observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub condition: String,
    pub system_a: String,
    pub system_b: String,
    pub mean_cost_a: f64,
    pub mean_cost_b: f64,
    pub p_value: f64,
    pub resamples: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn pair_test(
    condition: &str,
    a: (&str, &[PredictionRecord], &[PredictionRecord]),
    b: (&str, &[PredictionRecord], &[PredictionRecord]),
    window: Option<&WindowSpec>,
    settings: &CalibrationSettings,
    resamples: usize,
    seed: u64,
) -> Result<PairTest> {
    let mut costs = vec![];
    let mut observations = vec![];
    for (name, eval, calib) in [a, b] {
        let units = Units::from_records(eval, window)?;
        let t = tables(condition, name, &units, &Units::from_records(calib, window)?, settings)?;
        costs.push(unit_costs(&units, &t.xval)?);
        observations.push(units.ys);
    }
    if observations[0] != observations[1] {
        return Err(Error::ShapeMismatch("the two systems were evaluated on different observations".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(PairTest {
        condition: condition.into(),
        system_a: a.0.into(),
        system_b: b.0.into(),
        mean_cost_a: mean(&costs[0]),
        mean_cost_b: mean(&costs[1]),
        p_value: paired_permutation_test(&costs[0], &costs[1], resamples, seed)?,
        resamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(n: usize, offset: f64) -> Vec<PredictionRecord> {
        (0..n)
            .map(|i| {
                let y = Matrix::row_vector(&[(i as f64 * 0.7).sin() + offset, (i as f64 * 1.3).cos()]);
                let yhat = Matrix::row_vector(&[0.1, -0.2]);
                let z = Matrix::row_vector(&[0.5 + 0.01 * i as f64, 0.4]);
                PredictionRecord { prediction: BoundedPrediction::symmetric(yhat, z), y }
            })
            .collect()
    }

    fn settings() -> (CalibrationSettings, EvaluationSettings) {
        (CalibrationSettings::default(), EvaluationSettings { permutation_resamples: 200, ..EvaluationSettings::default() })
    }

    #[test]
    fn constant_against_itself_gains_nothing() {
        let (c, e) = settings();
        let calib: Vec<PredictionRecord> = records(40, 0.0)
            .into_iter()
            .map(|mut r| {
                r.prediction = constant_band(&r.prediction.yhat);
                r
            })
            .collect();
        let eval = vec![("test".to_string(), calib.clone())];
        let report = build_report("constant", &calib, &eval, None, &c, &e, 0).unwrap();
        for r in &report.rows {
            assert_eq!(r.gain_star_pct, Some(0.0));
            assert_eq!(r.gain_xval_pct, Some(0.0));
        }
    }

    #[test]
    fn excess_deficit_average_is_mean_of_half_costs() {
        let (c, e) = settings();
        let calib = records(30, 0.0);
        let eval = vec![("test".to_string(), records(30, 0.3))];
        let report = build_report("jms", &calib, &eval, None, &c, &e, 1).unwrap();
        let t = &report.tables[0];
        let manual = t.xval.points.iter().map(|p| 0.5 * (p.excess + p.deficit)).sum::<f64>() / 3.0;
        assert_eq!(report.rows[0].ed_avg_xval, manual);
        assert_eq!(report.rows.len(), 2);
        assert!(report.to_csv().starts_with("condition,system,e_base,ed_avg_star,ed_avg_xval,gain_star_pct"));
    }

    #[test]
    fn windowed_units_follow_recombination() {
        let w = WindowSpec { length: 3, step: 1, observed: 1, forecast: 2 };
        let recs: Vec<PredictionRecord> = (0..5)
            .map(|i| {
                let y = Matrix::row_vector(&[i as f64, i as f64 + 1.0, i as f64 + 2.0]);
                PredictionRecord { prediction: constant_band(&y), y }
            })
            .collect();
        let u = Units::from_records(&recs, Some(&w)).unwrap();
        assert_eq!(u.ys.len(), 2);
        assert_eq!(u.ys[0].as_slice(), &[1.0, 2.0]);
        assert_eq!(u.ys[1].as_slice(), &[3.0, 4.0]);
    }
}
