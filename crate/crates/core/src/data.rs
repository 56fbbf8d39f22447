//! Dataset ingestion: the MITV table layout, chronological partitions,
//! sliding windows, recombination of window predictions, JSON-lines files
//! and a synthetic heteroskedastic generator.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::EmbeddingSpec;
use crate::types::{standardize, BoundedPrediction, Matrix, SequenceSample, Standardization};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureKind {
    Categorical { cardinality: usize, embedding_dim: usize },
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalendarField {
    DayOfMonth,
    DayOfWeek,
    Month,
    FracYday,
}

/// Where a feature's value comes from in the raw table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "from", rename_all = "lowercase")]
pub enum FeatureSource {
    Numeric { column: String },
    Vocabulary { column: String, values: Vec<String> },
    Calendar { column: String, field: CalendarField },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub source: FeatureSource,
}

impl FeatureSpec {
    /// Width after embedding.
    pub fn final_dimension(&self) -> usize {
        match self.kind {
            FeatureKind::Categorical { embedding_dim, .. } => embedding_dim,
            FeatureKind::Real => 1,
        }
    }
}

/// Column layout of a raw CSV table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub features: Vec<FeatureSpec>,
    pub outputs: Vec<String>,
}

pub const MITV_WEATHER: [&str; 11] =
    ["Clear", "Clouds", "Rain", "Drizzle", "Mist", "Haze", "Fog", "Thunderstorm", "Snow", "Squall", "Smoke"];

pub const MITV_HOLIDAYS: [&str; 12] = [
    "None",
    "New Years Day",
    "Martin Luther King Jr Day",
    "Washingtons Birthday",
    "Memorial Day",
    "Independence Day",
    "State Fair",
    "Labor Day",
    "Columbus Day",
    "Veterans Day",
    "Thanksgiving Day",
    "Christmas Day",
];

impl TableSpec {
    /// Metro Interstate Traffic Volume layout: 10 raw features (20 after
    /// embedding) and one output.
    pub fn mitv() -> Self {
        let cat = |name: &str, cardinality: usize, source: FeatureSource| FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Categorical { cardinality, embedding_dim: 3 },
            source,
        };
        let cal = |field| FeatureSource::Calendar { column: "date_time".into(), field };
        let real = |name: &str, column: &str| FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Real,
            source: FeatureSource::Numeric { column: column.into() },
        };
        let vocab = |column: &str, values: &[&str]| FeatureSource::Vocabulary {
            column: column.into(),
            values: values.iter().map(|s| s.to_string()).collect(),
        };
        Self {
            features: vec![
                cat("day_of_month", 31, cal(CalendarField::DayOfMonth)),
                cat("day_of_week", 7, cal(CalendarField::DayOfWeek)),
                cat("month", 12, cal(CalendarField::Month)),
                FeatureSpec { name: "frac_yday".into(), kind: FeatureKind::Real, source: cal(CalendarField::FracYday) },
                cat("weather_type", MITV_WEATHER.len(), vocab("weather_main", &MITV_WEATHER)),
                cat("holiday_type", MITV_HOLIDAYS.len(), vocab("holiday", &MITV_HOLIDAYS)),
                real("temperature", "temp"),
                real("rain_1h", "rain_1h"),
                real("snow_1h", "snow_1h"),
                real("clouds_all", "clouds_all"),
            ],
            outputs: vec!["traffic_volume".into()],
        }
    }

    pub fn input_dimension(&self) -> usize {
        self.features.iter().map(FeatureSpec::final_dimension).sum()
    }

    pub fn embedding_specs(&self) -> Vec<EmbeddingSpec> {
        self.features
            .iter()
            .enumerate()
            .filter_map(|(column, f)| match f.kind {
                FeatureKind::Categorical { cardinality, embedding_dim } => {
                    Some(EmbeddingSpec { name: f.name.clone(), column, cardinality, dim: embedding_dim })
                }
                FeatureKind::Real => None,
            })
            .collect()
    }

    fn is_real(&self, col: usize) -> bool {
        self.features[col].kind == FeatureKind::Real
    }
}

/// Parsed table: `n x F` features (categorical columns hold indices) and
/// `D x n` outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub features: Matrix,
    pub targets: Matrix,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn slice(&self, start: usize, end: usize) -> RawTable {
        RawTable { features: self.features.slice_rows(start, end), targets: self.targets.slice_cols(start, end) }
    }
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M"))
        .ok()
}

/// Zero-based calendar value: Monday = 0, January = 0, first day of month = 0;
/// the day-of-year fraction is `ordinal / 365`.
pub fn calendar_value(ts: &NaiveDateTime, field: CalendarField) -> f64 {
    match field {
        CalendarField::DayOfMonth => ts.day0() as f64,
        CalendarField::DayOfWeek => ts.weekday().num_days_from_monday() as f64,
        CalendarField::Month => ts.month0() as f64,
        CalendarField::FracYday => ts.ordinal() as f64 / 365.0,
    }
}

pub fn load_table(path: &Path, spec: &TableSpec) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let sources: Vec<(usize, &FeatureSource)> = spec
        .features
        .iter()
        .map(|f| {
            let name = match &f.source {
                FeatureSource::Numeric { column } | FeatureSource::Vocabulary { column, .. } | FeatureSource::Calendar { column, .. } => column,
            };
            Ok((col(name)?, &f.source))
        })
        .collect::<Result<_>>()?;
    let outputs: Vec<usize> = spec.outputs.iter().map(|o| col(o)).collect::<Result<_>>()?;
    let mut feats = Vec::new();
    let mut outs: Vec<Vec<f64>> = vec![Vec::new(); outputs.len()];
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::UnparseableRow { row, reason: e.to_string() })?;
        let bad = |reason: String| Error::UnparseableRow { row, reason };
        let number = |c: usize| -> Result<f64> {
            let s = rec.get(c).unwrap_or("").trim();
            s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(format!("'{s}' is not a number")))
        };
        for (c, src) in &sources {
            let v = match src {
                FeatureSource::Numeric { .. } => number(*c)?,
                FeatureSource::Vocabulary { values, .. } => {
                    let s = rec.get(*c).unwrap_or("").trim();
                    values.iter().position(|v| v == s).ok_or_else(|| bad(format!("unknown category '{s}'")))? as f64
                }
                FeatureSource::Calendar { field, .. } => {
                    let s = rec.get(*c).unwrap_or("");
                    let ts = parse_timestamp(s).ok_or_else(|| bad(format!("unparseable timestamp '{s}'")))?;
                    calendar_value(&ts, *field)
                }
            };
            feats.push(v);
        }
        for (k, &c) in outputs.iter().enumerate() {
            outs[k].push(number(c)?);
        }
    }
    let n = outs.first().map_or(feats.len() / spec.features.len().max(1), Vec::len);
    Ok(RawTable {
        features: Matrix::from_vec(n, spec.features.len(), feats)?,
        targets: Matrix::from_rows(&outs)?,
    })
}

/// Train/dev/dev2/test sizes holding 10% each for the three held-out splits.
pub fn default_sizes(total: usize) -> [usize; 4] {
    let tenth = total / 10;
    [total - 3 * tenth, tenth, tenth, tenth]
}

/// Contiguous chronological splits in train, dev, dev2, test order.
pub fn partition(table: &RawTable, sizes: [usize; 4]) -> Result<[RawTable; 4]> {
    let requested: usize = sizes.iter().sum();
    if requested > table.len() {
        return Err(Error::SizesExceedTotal { requested, total: table.len() });
    }
    let mut start = 0;
    Ok(sizes.map(|n| {
        let part = table.slice(start, start + n);
        start += n;
        part
    }))
}

/// Statistics fit on the training rows; categorical columns keep mean 0 and
/// std 1, and constant real columns get std 1 so they standardize to zero.
pub fn fit_standardization(train: &RawTable, spec: &TableSpec) -> Standardization {
    let (mut input_mean, mut input_std) = Standardization::fit_cols(&train.features);
    for c in 0..input_mean.len() {
        if !spec.is_real(c) {
            input_mean[c] = 0.0;
            input_std[c] = 1.0;
        } else if input_std[c] == 0.0 {
            log::warn!("feature '{}' is constant on the training split; it carries no information", spec.features[c].name);
            input_std[c] = 1.0;
        }
    }
    let (output_mean, mut output_std) = Standardization::fit_rows(&train.targets);
    for (d, s) in output_std.iter_mut().enumerate() {
        if *s == 0.0 {
            log::warn!("output {d} is constant on the training split");
            *s = 1.0;
        }
    }
    Standardization { input_mean, input_std, output_mean, output_std }
}

/// Applies `stats` to a raw split.
pub fn standardize_table(t: &RawTable, stats: &Standardization) -> Result<RawTable> {
    let mut features = t.features.clone();
    if stats.input_mean.len() != features.cols() {
        return Err(Error::ShapeMismatch(format!("{} features vs {} statistics", features.cols(), stats.input_mean.len())));
    }
    for r in 0..features.rows() {
        for (c, v) in features.row_mut(r).iter_mut().enumerate() {
            *v = (*v - stats.input_mean[c]) / stats.input_std[c];
        }
    }
    Ok(RawTable { features, targets: standardize(&t.targets, stats)? })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length: usize,
    pub step: usize,
    pub observed: usize,
    pub forecast: usize,
}

impl WindowSpec {
    pub const MITV: WindowSpec = WindowSpec { length: 36, step: 1, observed: 12, forecast: 24 };

    pub fn validate(&self) -> Result<()> {
        if self.step == 0 || self.length == 0 || self.observed + self.forecast != self.length {
            return Err(Error::InvalidArgument(format!("inconsistent window spec {self:?}")));
        }
        Ok(())
    }
}

/// Sliding windows over one contiguous split: each window's inputs are its
/// rows of features and its targets are the matching outputs.
pub fn windows(split: &RawTable, spec: &WindowSpec) -> Result<Vec<SequenceSample>> {
    spec.validate()?;
    let n = split.len();
    if n < spec.length {
        return Err(Error::SplitTooShort { len: n, window: spec.length });
    }
    (0..=n - spec.length)
        .step_by(spec.step)
        .map(|s| {
            SequenceSample::new(
                split.features.slice_rows(s, s + spec.length),
                split.targets.slice_cols(s, s + spec.length),
                spec.observed,
            )
        })
        .collect()
}

/// Joins step-1 window predictions into one contiguous prediction: windows
/// `0, F, 2F, ...` (F = forecast length) each contribute their final `F`
/// steps. A trailing run of fewer than `F` windows is dropped.
pub fn recombine(window_predictions: &[BoundedPrediction], spec: &WindowSpec) -> Result<BoundedPrediction> {
    spec.validate()?;
    if spec.step != 1 {
        return Err(Error::InconsistentWindows("recombination expects step-1 windows".into()));
    }
    let blocks = window_predictions.len() / spec.forecast;
    if blocks == 0 {
        return Err(Error::InconsistentWindows(format!(
            "{} windows do not fill one block of {}",
            window_predictions.len(),
            spec.forecast
        )));
    }
    let d = window_predictions[0].shape().0;
    let parts: Vec<BoundedPrediction> = (0..blocks)
        .map(|b| {
            let p = &window_predictions[b * spec.forecast];
            if p.shape() != (d, spec.length) {
                return Err(Error::InconsistentWindows(format!("window {} has shape {:?}", b * spec.forecast, p.shape())));
            }
            let (lo, hi) = (spec.observed, spec.length);
            Ok(BoundedPrediction {
                yhat: p.yhat.slice_cols(lo, hi),
                z_lower: p.z_lower.slice_cols(lo, hi),
                z_upper: p.z_upper.slice_cols(lo, hi),
            })
        })
        .collect::<Result<_>>()?;
    BoundedPrediction::hconcat(&parts)
}

/// Ground-truth counterpart of [`recombine`].
pub fn recombine_targets(samples: &[SequenceSample], spec: &WindowSpec) -> Result<Matrix> {
    let as_pred: Vec<BoundedPrediction> = samples
        .iter()
        .map(|s| BoundedPrediction::symmetric(s.targets.clone(), Matrix::zeros(s.targets.rows(), s.targets.cols())))
        .collect();
    Ok(recombine(&as_pred, spec)?.yhat)
}

/// Copies with no observed prefix: the decoder runs on its own predictions
/// from the first step.
pub fn drift(samples: &[SequenceSample]) -> Vec<SequenceSample> {
    samples.iter().map(|s| SequenceSample { observed_steps: 0, ..s.clone() }).collect()
}

/// Standardized samples for every partition plus the training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<SequenceSample>,
    pub dev: Vec<SequenceSample>,
    pub dev2: Vec<SequenceSample>,
    pub test: Vec<SequenceSample>,
    pub test_drift: Option<Vec<SequenceSample>>,
    pub stats: Standardization,
}

impl SplitDataset {
    pub fn split(&self, name: &str) -> Option<&[SequenceSample]> {
        match name {
            "train" => Some(&self.train),
            "dev" => Some(&self.dev),
            "dev2" => Some(&self.dev2),
            "test" => Some(&self.test),
            "test_drift" => self.test_drift.as_deref(),
            _ => None,
        }
    }
}

pub const SPLIT_NAMES: [&str; 4] = ["train", "dev", "dev2", "test"];

/// Standardized contiguous splits of a single-series dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSeries {
    pub splits: [RawTable; 4],
    pub stats: Standardization,
    pub spec: TableSpec,
}

impl PreparedSeries {
    pub fn windowed(&self, window: &WindowSpec) -> Result<SplitDataset> {
        let w = |i: usize| windows(&self.splits[i], window);
        let test = w(3)?;
        Ok(SplitDataset {
            train: w(0)?,
            dev: w(1)?,
            dev2: w(2)?,
            test_drift: Some(drift(&test)),
            test,
            stats: self.stats.clone(),
        })
    }
}

/// Loads, partitions and standardizes a single-series table.
pub fn prepare_series(path: &Path, spec: &TableSpec, sizes: Option<[usize; 4]>) -> Result<PreparedSeries> {
    let table = load_table(path, spec)?;
    let sizes = sizes.unwrap_or_else(|| default_sizes(table.len()));
    let parts = partition(&table, sizes)?;
    let stats = fit_standardization(&parts[0], spec);
    let splits = [
        standardize_table(&parts[0], &stats)?,
        standardize_table(&parts[1], &stats)?,
        standardize_table(&parts[2], &stats)?,
        standardize_table(&parts[3], &stats)?,
    ];
    Ok(PreparedSeries { splits, stats, spec: spec.clone() })
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::UnparseableRow { row: i, reason: e.to_string() })?);
    }
    Ok(out)
}

pub fn write_samples(path: &Path, samples: &[SequenceSample]) -> Result<()> {
    write_jsonl(path, samples)
}

pub fn read_samples(path: &Path) -> Result<Vec<SequenceSample>> {
    let samples: Vec<SequenceSample> = read_jsonl(path)?;
    for s in &samples {
        s.validate()?;
    }
    Ok(samples)
}

/// One line of a predictions file: the bounded prediction and the
/// observation, both in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    #[serde(flatten)]
    pub prediction: BoundedPrediction,
    pub y: Matrix,
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let recs: Vec<PredictionRecord> = read_jsonl(path)?;
    for r in &recs {
        crate::types::validate_bounded_prediction(&r.prediction, &r.y)?;
    }
    Ok(recs)
}

/// How a prepared dataset directory is laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "lowercase")]
pub enum DatasetLayout {
    /// One contiguous sequence per split file, windowed at load time.
    Series { window: WindowSpec, table: TableSpec },
    /// One sample per line.
    Sequences,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub layout: DatasetLayout,
    pub stats: Standardization,
    pub input_features: usize,
    pub output_dim: usize,
    pub embeddings: Vec<EmbeddingSpec>,
    pub sizes: Vec<usize>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn split_file(dir: &Path, name: &str) -> std::path::PathBuf {
    dir.join(format!("{name}.jsonl"))
}

/// Writes a series dataset: each split as a single sample holding the whole
/// standardized series.
pub fn save_series(dir: &Path, prepared: &PreparedSeries, window: WindowSpec) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir)?;
    for (name, part) in SPLIT_NAMES.iter().zip(&prepared.splits) {
        let s = SequenceSample { inputs: part.features.clone(), targets: part.targets.clone(), observed_steps: 0 };
        write_samples(&split_file(dir, name), std::slice::from_ref(&s))?;
    }
    let manifest = DatasetManifest {
        layout: DatasetLayout::Series { window, table: prepared.spec.clone() },
        stats: prepared.stats.clone(),
        input_features: prepared.spec.features.len(),
        output_dim: prepared.spec.outputs.len(),
        embeddings: prepared.spec.embedding_specs(),
        sizes: prepared.splits.iter().map(RawTable::len).collect(),
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Writes a multi-sequence dataset.
pub fn save_sequences(dir: &Path, data: &SplitDataset, embeddings: Vec<EmbeddingSpec>) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir)?;
    let mut sizes = vec![];
    for name in SPLIT_NAMES {
        let split = data.split(name).expect("fixed split names");
        write_samples(&split_file(dir, name), split)?;
        sizes.push(split.len());
    }
    if let Some(d) = &data.test_drift {
        write_samples(&split_file(dir, "test_drift"), d)?;
    }
    let first = data.train.first().ok_or(Error::EmptyTrainingSet)?;
    let manifest = DatasetManifest {
        layout: DatasetLayout::Sequences,
        stats: data.stats.clone(),
        input_features: first.inputs.cols(),
        output_dim: first.targets.rows(),
        embeddings,
        sizes,
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Reads a prepared directory back into samples.
pub fn load_dataset(dir: &Path) -> Result<(SplitDataset, DatasetManifest)> {
    let manifest: DatasetManifest = serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let data = match &manifest.layout {
        DatasetLayout::Sequences => {
            let drift_path = split_file(dir, "test_drift");
            SplitDataset {
                train: read_samples(&split_file(dir, "train"))?,
                dev: read_samples(&split_file(dir, "dev"))?,
                dev2: read_samples(&split_file(dir, "dev2"))?,
                test: read_samples(&split_file(dir, "test"))?,
                test_drift: if drift_path.exists() { Some(read_samples(&drift_path)?) } else { None },
                stats: manifest.stats.clone(),
            }
        }
        DatasetLayout::Series { window, table } => {
            let mut parts = Vec::with_capacity(4);
            for name in SPLIT_NAMES {
                let mut s = read_samples(&split_file(dir, name))?;
                if s.len() != 1 {
                    return Err(Error::InconsistentWindows(format!("{name} should hold one series, found {}", s.len())));
                }
                let s = s.remove(0);
                parts.push(RawTable { features: s.inputs, targets: s.targets });
            }
            let splits: [RawTable; 4] = parts.try_into().expect("four splits");
            PreparedSeries { splits, stats: manifest.stats.clone(), spec: table.clone() }.windowed(window)?
        }
    };
    Ok((data, manifest))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    /// Half-normal noise that only ever pushes observations upward.
    OneSided,
}

/// Synthetic sequence generator settings.
///
/// Each sequence draws a noise level `u ~ U(0,1)`, a phase and an offset.
/// Inputs are `[sin, cos, u, offset]` per step; outputs continue the
/// sinusoid plus the offset, with noise scale `sigma(u) = sigma_min * ratio^u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthProfile {
    pub input_steps: usize,
    pub horizon: usize,
    pub period: f64,
    pub sigma_min: f64,
    pub sigma_ratio: f64,
    pub noise: NoiseKind,
    /// Sequences in each of dev, dev2 and test; defaults to a quarter of train.
    pub eval_size: Option<usize>,
    pub observed_steps: usize,
}

impl Default for SynthProfile {
    fn default() -> Self {
        Self {
            input_steps: 20,
            horizon: 20,
            period: 12.0,
            sigma_min: 0.1,
            sigma_ratio: 5.0,
            noise: NoiseKind::Gaussian,
            eval_size: None,
            observed_steps: 0,
        }
    }
}

impl SynthProfile {
    pub fn sigma(&self, u: f64) -> f64 {
        self.sigma_min * self.sigma_ratio.powf(u)
    }

    pub fn draw_noise<R: Rng>(&self, rng: &mut R) -> f64 {
        let e: f64 = StandardNormal.sample(rng);
        match self.noise {
            NoiseKind::Gaussian => e,
            NoiseKind::OneSided => e.abs(),
        }
    }
}

/// Known generating quantities of one synthetic sequence, original units.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    /// Noise-free outputs `g`.
    pub mean: Matrix,
    /// Noise scale per output step.
    pub sigma: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub dataset: SplitDataset,
    /// Truth for train, dev, dev2 and test, in that order.
    pub truth: [Vec<SynthTruth>; 4],
    pub profile: SynthProfile,
}

fn synth_sequence<R: Rng>(rng: &mut R, p: &SynthProfile) -> (Matrix, Matrix, SynthTruth) {
    let u: f64 = rng.random();
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    let offset = rng.random_range(-1.0..1.0);
    let w = std::f64::consts::TAU / p.period;
    let n = p.input_steps;
    let mut inputs = Vec::with_capacity(n * 4);
    for t in 0..n {
        let a = w * t as f64 + phase;
        inputs.extend_from_slice(&[a.sin(), a.cos(), u, offset]);
    }
    let sigma = p.sigma(u);
    let mut y = Vec::with_capacity(p.horizon);
    let mut g = Vec::with_capacity(p.horizon);
    for j in 0..p.horizon {
        let mean = offset + (w * (n + j) as f64 + phase).sin();
        g.push(mean);
        y.push(mean + sigma * p.draw_noise(rng));
    }
    let truth = SynthTruth { mean: Matrix::row_vector(&g), sigma: Matrix::filled(1, p.horizon, sigma) };
    (Matrix::from_vec(n, 4, inputs).expect("shape"), Matrix::row_vector(&y), truth)
}

/// Seeded heteroskedastic dataset with `n` training sequences.
pub fn synth_heteroskedastic(n: usize, seed: u64, profile: &SynthProfile) -> Result<SyntheticData> {
    if n < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 training sequences, got {n}")));
    }
    let eval = profile.eval_size.unwrap_or(n / 4).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw: Vec<Vec<(Matrix, Matrix)>> = vec![];
    let mut truth: Vec<Vec<SynthTruth>> = vec![];
    for count in [n, eval, eval, eval] {
        let mut r = Vec::with_capacity(count);
        let mut t = Vec::with_capacity(count);
        for _ in 0..count {
            let (x, y, tr) = synth_sequence(&mut rng, profile);
            r.push((x, y));
            t.push(tr);
        }
        raw.push(r);
        truth.push(t);
    }
    let all_x: Vec<Vec<f64>> = raw[0].iter().flat_map(|(x, _)| (0..x.rows()).map(|r| x.row(r).to_vec())).collect();
    let (input_mean, input_std) = Standardization::fit_cols(&Matrix::from_rows(&all_x)?);
    let all_y: Vec<f64> = raw[0].iter().flat_map(|(_, y)| y.as_slice().to_vec()).collect();
    let (output_mean, output_std) = Standardization::fit_rows(&Matrix::row_vector(&all_y));
    let input_std = input_std.into_iter().map(|s| if s == 0.0 { 1.0 } else { s }).collect::<Vec<_>>();
    let output_std = output_std.into_iter().map(|s| if s == 0.0 { 1.0 } else { s }).collect::<Vec<_>>();
    let stats = Standardization { input_mean, input_std, output_mean, output_std };
    let to_samples = |items: &[(Matrix, Matrix)]| -> Result<Vec<SequenceSample>> {
        items
            .iter()
            .map(|(x, y)| {
                let mut xs = x.clone();
                for r in 0..xs.rows() {
                    for (c, v) in xs.row_mut(r).iter_mut().enumerate() {
                        *v = (*v - stats.input_mean[c]) / stats.input_std[c];
                    }
                }
                SequenceSample::new(xs, standardize(y, &stats)?, profile.observed_steps)
            })
            .collect()
    };
    let dataset = SplitDataset {
        train: to_samples(&raw[0])?,
        dev: to_samples(&raw[1])?,
        dev2: to_samples(&raw[2])?,
        test: to_samples(&raw[3])?,
        test_drift: None,
        stats,
    };
    let [t0, t1, t2, t3]: [Vec<SynthTruth>; 4] = truth.try_into().expect("four splits");
    Ok(SyntheticData { dataset, truth: [t0, t1, t2, t3], profile: profile.clone() })
}
