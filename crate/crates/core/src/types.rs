//! Shared domain types: dense matrices, sequence samples, bounded predictions
//! and standardization statistics.
//!
//! Output matrices are dimension-major: `D` rows (output dimensions) by `M`
//! columns (time steps). Input matrices are time-major: `N` rows by `F`
//! feature columns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
///
/// Serializes as a nested array of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    /// Single-row matrix.
    pub fn row_vector(values: &[f64]) -> Self {
        Self { rows: 1, cols: values.len(), data: values.to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn add_at(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] += v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other, "zip_map")?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn check_same_shape(&self, other: &Matrix, context: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{context}: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    /// Columns `start..end` as a new matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Self {
        let width = end - start;
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..end]);
        }
        Self { rows: self.rows, cols: width, data }
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Concatenates matrices with equal row counts along the column axis.
    pub fn hconcat(parts: &[&Matrix]) -> Result<Self> {
        let rows = parts.first().map_or(0, |m| m.rows);
        if let Some(bad) = parts.iter().find(|m| m.rows != rows) {
            return Err(Error::ShapeMismatch(format!(
                "hconcat: {} rows vs {rows}",
                bad.rows
            )));
        }
        let cols: usize = parts.iter().map(|m| m.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for m in parts {
                data.extend_from_slice(m.row(r));
            }
        }
        Ok(Self { rows, cols, data })
    }

    /// Position of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|i| (i / self.cols.max(1), i % self.cols.max(1)))
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        (0..m.rows).map(|r| m.row(r).to_vec()).collect()
    }
}

/// One input sequence paired with its output sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSample {
    /// `N x F`, time-major.
    pub inputs: Matrix,
    /// `D x M`, dimension-major.
    pub targets: Matrix,
    /// Decoder steps with ground truth available at test time.
    pub observed_steps: usize,
}

impl SequenceSample {
    pub fn new(inputs: Matrix, targets: Matrix, observed_steps: usize) -> Result<Self> {
        let s = Self { inputs, targets, observed_steps };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.rows() == 0 || self.inputs.cols() == 0 {
            return Err(Error::ShapeMismatch("sample has no input steps or features".into()));
        }
        if self.targets.rows() == 0 || self.targets.cols() == 0 {
            return Err(Error::ShapeMismatch("sample has no output steps or dimensions".into()));
        }
        if self.observed_steps > self.targets.cols() {
            return Err(Error::ShapeMismatch(format!(
                "observed_steps {} exceeds horizon {}",
                self.observed_steps,
                self.targets.cols()
            )));
        }
        if let Some((row, col)) = self.inputs.first_non_finite() {
            return Err(Error::NonFiniteValue { what: "inputs", row, col });
        }
        if let Some((row, col)) = self.targets.first_non_finite() {
            return Err(Error::NonFiniteValue { what: "targets", row, col });
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.targets.rows()
    }

    pub fn horizon(&self) -> usize {
        self.targets.cols()
    }
}

/// Base prediction with nonnegative lower and upper band magnitudes.
///
/// The interval is `[yhat - z_lower, yhat + z_upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedPrediction {
    pub yhat: Matrix,
    pub z_lower: Matrix,
    pub z_upper: Matrix,
}

impl BoundedPrediction {
    pub fn symmetric(yhat: Matrix, z: Matrix) -> Self {
        Self { yhat, z_lower: z.clone(), z_upper: z }
    }

    pub fn is_symmetric(&self) -> bool {
        self.z_lower == self.z_upper
    }

    pub fn lower(&self) -> Matrix {
        self.yhat.zip_map(&self.z_lower, |y, z| y - z).expect("validated shape")
    }

    pub fn upper(&self) -> Matrix {
        self.yhat.zip_map(&self.z_upper, |y, z| y + z).expect("validated shape")
    }

    pub fn shape(&self) -> (usize, usize) {
        self.yhat.shape()
    }

    /// Concatenates predictions along the time axis.
    pub fn hconcat(parts: &[BoundedPrediction]) -> Result<Self> {
        let y: Vec<&Matrix> = parts.iter().map(|p| &p.yhat).collect();
        let l: Vec<&Matrix> = parts.iter().map(|p| &p.z_lower).collect();
        let u: Vec<&Matrix> = parts.iter().map(|p| &p.z_upper).collect();
        Ok(Self {
            yhat: Matrix::hconcat(&y)?,
            z_lower: Matrix::hconcat(&l)?,
            z_upper: Matrix::hconcat(&u)?,
        })
    }
}

/// Meta-model supervision target derived from base residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTarget {
    /// `|delta|` elementwise.
    pub z: Matrix,
    /// Signed residual `yhat - y`.
    pub delta: Matrix,
}

/// Checks that a prediction is well formed against observations `y`.
///
/// Returns the first violation found: shape, then finiteness, then band sign.
pub fn validate_bounded_prediction(p: &BoundedPrediction, y: &Matrix) -> Result<()> {
    p.yhat.check_same_shape(y, "yhat vs y")?;
    p.z_lower.check_same_shape(y, "z_lower vs y")?;
    p.z_upper.check_same_shape(y, "z_upper vs y")?;
    for (what, m) in [("yhat", &p.yhat), ("z_lower", &p.z_lower), ("z_upper", &p.z_upper), ("y", y)] {
        if let Some((row, col)) = m.first_non_finite() {
            return Err(Error::NonFiniteValue { what, row, col });
        }
    }
    for m in [&p.z_lower, &p.z_upper] {
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                let v = m.get(r, c);
                if v < 0.0 {
                    return Err(Error::NegativeBand { row: r, col: c, value: v });
                }
            }
        }
    }
    Ok(())
}

/// Mean and standard deviation per input feature and per output dimension,
/// fit on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub output_mean: Vec<f64>,
    pub output_std: Vec<f64>,
}

impl Standardization {
    /// Identity transform for `features` inputs and `outputs` dimensions.
    pub fn identity(features: usize, outputs: usize) -> Self {
        Self {
            input_mean: vec![0.0; features],
            input_std: vec![1.0; features],
            output_mean: vec![0.0; outputs],
            output_std: vec![1.0; outputs],
        }
    }

    /// Population mean/std of each row of `values` (dimension-major outputs).
    pub fn fit_rows(values: &Matrix) -> (Vec<f64>, Vec<f64>) {
        (0..values.rows())
            .map(|r| mean_std(values.row(r)))
            .unzip()
    }

    /// Population mean/std of each column of `values` (time-major inputs).
    pub fn fit_cols(values: &Matrix) -> (Vec<f64>, Vec<f64>) {
        (0..values.cols())
            .map(|c| mean_std(&values.column(c)))
            .unzip()
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len().max(1) as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn check_stats(mean: &[f64], std: &[f64], rows: usize) -> Result<()> {
    if mean.len() != rows || std.len() != rows {
        return Err(Error::ShapeMismatch(format!(
            "{} rows but statistics for {} dimensions",
            rows,
            mean.len()
        )));
    }
    if let Some(d) = std.iter().position(|&s| s == 0.0) {
        return Err(Error::ZeroStd(d));
    }
    Ok(())
}

/// `(values - mean) / std` per row of a dimension-major output matrix.
pub fn standardize(values: &Matrix, stats: &Standardization) -> Result<Matrix> {
    check_stats(&stats.output_mean, &stats.output_std, values.rows())?;
    let mut out = values.clone();
    for d in 0..out.rows() {
        let (m, s) = (stats.output_mean[d], stats.output_std[d]);
        out.row_mut(d).iter_mut().for_each(|v| *v = (*v - m) / s);
    }
    Ok(out)
}

/// Maps standardized outputs back to original units: `values * std + mean`.
pub fn restore_units(values: &Matrix, stats: &Standardization) -> Result<Matrix> {
    check_stats(&stats.output_mean, &stats.output_std, values.rows())?;
    let mut out = values.clone();
    for d in 0..out.rows() {
        let (m, s) = (stats.output_mean[d], stats.output_std[d]);
        out.row_mut(d).iter_mut().for_each(|v| *v = *v * s + m);
    }
    Ok(out)
}

/// Band magnitudes are deviations, so only the scale applies.
pub fn restore_band(values: &Matrix, stats: &Standardization) -> Result<Matrix> {
    check_stats(&stats.output_mean, &stats.output_std, values.rows())?;
    let mut out = values.clone();
    for d in 0..out.rows() {
        let s = stats.output_std[d];
        out.row_mut(d).iter_mut().for_each(|v| *v *= s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn zeros12() -> Matrix {
        Matrix::zeros(1, 2)
    }

    #[test]
    fn accepts_identity_case() {
        let p = BoundedPrediction::symmetric(zeros12(), zeros12());
        assert!(validate_bounded_prediction(&p, &zeros12()).is_ok());
    }

    #[test]
    fn rejects_negative_band() {
        let mut p = BoundedPrediction::symmetric(zeros12(), zeros12());
        p.z_lower.set(0, 1, -0.1);
        assert!(matches!(
            validate_bounded_prediction(&p, &zeros12()),
            Err(Error::NegativeBand { row: 0, col: 1, .. })
        ));
    }

    #[test]
    fn rejects_shape_mismatch() {
        let p = BoundedPrediction::symmetric(zeros12(), zeros12());
        assert!(matches!(
            validate_bounded_prediction(&p, &Matrix::zeros(1, 3)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn rejects_non_finite() {
        let mut p = BoundedPrediction::symmetric(zeros12(), zeros12());
        p.yhat.set(0, 0, f64::NAN);
        assert!(matches!(
            validate_bounded_prediction(&p, &zeros12()),
            Err(Error::NonFiniteValue { what: "yhat", .. })
        ));
    }

    fn stats1(mean: f64, std: f64) -> Standardization {
        Standardization {
            input_mean: vec![],
            input_std: vec![],
            output_mean: vec![mean],
            output_std: vec![std],
        }
    }

    #[test]
    fn restore_examples() {
        let r = restore_units(&Matrix::row_vector(&[0.0]), &stats1(5.0, 2.0)).unwrap();
        assert_eq!(r.get(0, 0), 5.0);
        let r = restore_units(&Matrix::row_vector(&[1.5]), &stats1(10.0, 4.0)).unwrap();
        assert_eq!(r.get(0, 0), 16.0);
        assert!(matches!(
            restore_units(&Matrix::row_vector(&[1.0]), &stats1(0.0, 0.0)),
            Err(Error::ZeroStd(0))
        ));
    }

    #[test]
    fn sample_invariants() {
        let x = Matrix::zeros(3, 2);
        assert!(SequenceSample::new(x.clone(), Matrix::zeros(1, 4), 4).is_ok());
        assert!(SequenceSample::new(x.clone(), Matrix::zeros(1, 4), 5).is_err());
        assert!(SequenceSample::new(x, Matrix::zeros(0, 4), 0).is_err());
    }

    #[test]
    fn matrix_json_is_nested_rows() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.5]]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, "[[1.0,2.0],[3.0,4.5]]");
        let back: Matrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<Matrix>("[[1.0],[2.0,3.0]]").is_err());
    }

    proptest! {
        #[test]
        fn standardize_restore_roundtrip(
            rows in 1usize..4,
            cols in 1usize..12,
            seed in prop::collection::vec(-1e3f64..1e3, 48),
            means in prop::collection::vec(-50.0f64..50.0, 4),
            stds in prop::collection::vec(0.01f64..20.0, 4),
        ) {
            let data: Vec<f64> = (0..rows * cols).map(|i| seed[i % seed.len()] * (1.0 + i as f64 * 0.01)).collect();
            let m = Matrix::from_vec(rows, cols, data).unwrap();
            let stats = Standardization {
                input_mean: vec![],
                input_std: vec![],
                output_mean: means[..rows].to_vec(),
                output_std: stds[..rows].to_vec(),
            };
            let back = restore_units(&standardize(&m, &stats).unwrap(), &stats).unwrap();
            for (a, b) in back.as_slice().iter().zip(m.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }

        #[test]
        fn accepted_predictions_are_ordered(
            vals in prop::collection::vec((-10.0f64..10.0, 0.0f64..5.0, 0.0f64..5.0), 1..20)
        ) {
            let n = vals.len();
            let yhat = Matrix::from_vec(1, n, vals.iter().map(|v| v.0).collect()).unwrap();
            let zl = Matrix::from_vec(1, n, vals.iter().map(|v| v.1).collect()).unwrap();
            let zu = Matrix::from_vec(1, n, vals.iter().map(|v| v.2).collect()).unwrap();
            let p = BoundedPrediction { yhat: yhat.clone(), z_lower: zl, z_upper: zu };
            prop_assert!(validate_bounded_prediction(&p, &yhat).is_ok());
            let (lo, hi) = (p.lower(), p.upper());
            for t in 0..n {
                prop_assert!(lo.get(0, t) <= yhat.get(0, t) && yhat.get(0, t) <= hi.get(0, t));
            }
        }
    }
}
