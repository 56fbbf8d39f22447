use std::fs;
use std::path::{Path, PathBuf};

use uqseq::data::{
    drift, load_dataset, prepare_series, read_predictions, save_sequences, save_series, synth_heteroskedastic,
    write_predictions, DatasetLayout, DatasetManifest, PredictionRecord, SplitDataset, TableSpec, WindowSpec,
    MANIFEST_FILE,
};
use uqseq::models::{mix_seed, predict_all, train_variant, TrainedModel, Variant};
use uqseq::types::restore_units;

use crate::config::{DatasetSource, ExperimentConfig};
use crate::error::CliError;
use crate::plot;
use crate::report::{build_report, calibration_file, pair_test};

const SPLIT_ORDER: [&str; 5] = ["train", "dev", "dev2", "test", "test_drift"];

/// Exclusive claim on an output directory, released on drop.
pub struct OutputLock(PathBuf);

impl OutputLock {
    pub const FILE: &'static str = ".uqseq.lock";

    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(Self::FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                writeln!(f, "{}", std::process::id())?;
                Ok(Self(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Usage(format!(
                "{} is in use by another uqseq process (delete {} if none is running)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

pub fn checkpoint_path(config: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    explicit.map(Path::to_path_buf).unwrap_or_else(|| config.variant_dir(config.variant).join("checkpoint.json"))
}

fn predictions_path(config: &ExperimentConfig, variant: Variant, split: &str) -> PathBuf {
    config.variant_dir(variant).join("predictions").join(format!("{split}.jsonl"))
}

fn read_manifest(config: &ExperimentConfig) -> Result<DatasetManifest, CliError> {
    let path = config.data_dir().join(MANIFEST_FILE);
    Ok(serde_json::from_str(&fs::read_to_string(&path).map_err(|e| {
        CliError::Core(uqseq::Error::Io(std::io::Error::new(e.kind(), format!("{}: {e} (run prepare first)", path.display()))))
    })?)?)
}

fn window_of(manifest: &DatasetManifest) -> Option<WindowSpec> {
    match &manifest.layout {
        DatasetLayout::Series { window, .. } => Some(*window),
        DatasetLayout::Sequences => None,
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_effective_config(config: &ExperimentConfig, command: &str) -> Result<(), CliError> {
    write_json(&config.out.join(format!("config.{command}.json")), config)
}

pub fn cmd_prepare(config: &ExperimentConfig) -> Result<DatasetManifest, CliError> {
    let dir = config.data_dir();
    let manifest = match &config.dataset {
        DatasetSource::Mitv { csv, sizes, window } => {
            window.validate()?;
            let prepared = prepare_series(csv, &TableSpec::mitv(), *sizes)?;
            prepared.windowed(window)?;
            save_series(&dir, &prepared, *window)?
        }
        DatasetSource::Synthetic { train_sequences, profile } => {
            let data = synth_heteroskedastic(*train_sequences, config.seed, profile)?;
            save_sequences(&dir, &data.dataset, vec![])?
        }
    };
    log::info!("prepared {} with split sizes {:?}", dir.display(), manifest.sizes);
    Ok(manifest)
}

fn load_data(config: &ExperimentConfig) -> Result<(SplitDataset, DatasetManifest), CliError> {
    read_manifest(config)?;
    Ok(load_dataset(&config.data_dir())?)
}

pub fn cmd_train(config: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<PathBuf, CliError> {
    let (data, manifest) = load_data(config)?;
    let mut arch = config.architecture.clone();
    arch.input_features = manifest.input_features;
    arch.output_dim = manifest.output_dim;
    arch.embeddings = manifest.embeddings.clone();
    let model = train_variant(config.variant, &data, &arch, config.seed)?;
    let path = checkpoint_path(config, checkpoint);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    model.save(&path)?;
    let mut log = String::from("phase,beta,epoch,train_loss,monitor_loss\n");
    for e in &model.log {
        let beta = e.beta.map(|b| b.to_string()).unwrap_or_default();
        log.push_str(&format!("{},{beta},{},{},{}\n", e.phase, e.epoch, e.train_loss, e.monitor_loss));
    }
    let log_dir = config.variant_dir(config.variant);
    fs::create_dir_all(&log_dir)?;
    fs::write(log_dir.join("train_log.csv"), log)?;
    log::info!("wrote {} after {} epochs", path.display(), model.log.len());
    Ok(path)
}

fn split_samples(data: &SplitDataset, name: &str) -> Result<Vec<uqseq::SequenceSample>, CliError> {
    if name == "test_drift" {
        return Ok(data.test_drift.clone().unwrap_or_else(|| drift(&data.test)));
    }
    data.split(name).map(<[_]>::to_vec).ok_or_else(|| CliError::Usage(format!("unknown split '{name}'")))
}

/// Predicts a split, writes its prediction file and reads it back.
fn predict_split(
    config: &ExperimentConfig,
    model: &TrainedModel,
    data: &SplitDataset,
    split: &str,
) -> Result<Vec<PredictionRecord>, CliError> {
    let samples = split_samples(data, split)?;
    let runs = if model.variant == Variant::Doms { model.config.doms_runs } else { 1 };
    let index = SPLIT_ORDER.iter().position(|s| *s == split).unwrap_or(SPLIT_ORDER.len()) as u64;
    let preds = predict_all(model, &samples, runs, mix_seed(&[config.seed, index]))?;
    let records = preds
        .into_iter()
        .zip(&samples)
        .map(|(prediction, s)| Ok(PredictionRecord { prediction, y: restore_units(&s.targets, &data.stats)? }))
        .collect::<Result<Vec<_>, uqseq::Error>>()?;
    let path = predictions_path(config, model.variant, split);
    fs::create_dir_all(path.parent().expect("predictions directory"))?;
    write_predictions(&path, &records)?;
    Ok(read_predictions(&path)?)
}

fn load_model(config: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<TrainedModel, CliError> {
    let path = checkpoint_path(config, checkpoint);
    TrainedModel::load(&path).map_err(|e| match e {
        uqseq::Error::Io(io) => CliError::Core(uqseq::Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io} (run train first)", path.display()),
        ))),
        other => other.into(),
    })
}

pub fn cmd_evaluate(config: &ExperimentConfig, checkpoint: Option<&Path>, drift: bool) -> Result<PathBuf, CliError> {
    let model = load_model(config, checkpoint)?;
    let (data, manifest) = load_data(config)?;
    let calib = predict_split(config, &model, &data, &config.calibration.split)?;
    let mut conditions = vec![];
    for split in config.conditions(drift) {
        let records = predict_split(config, &model, &data, &split)?;
        conditions.push((split, records));
    }
    let window = window_of(&manifest);
    let report = build_report(
        model.variant.name(),
        &calib,
        &conditions,
        window.as_ref(),
        &config.calibration,
        &config.evaluation,
        config.seed,
    )?;
    let dir = config.variant_dir(model.variant);
    write_json(&dir.join("report.json"), &report)?;
    fs::write(dir.join("report.csv"), report.to_csv())?;
    for r in &report.rows {
        log::info!(
            "{} {}: E_base {:.4}, excess-deficit {:.4} (self) {:.4} ({}), gain {} / {}",
            r.condition,
            r.system,
            r.e_base,
            r.ed_avg_star,
            r.ed_avg_xval,
            report.calibration_split,
            pct(r.gain_star_pct),
            pct(r.gain_xval_pct)
        );
    }
    Ok(dir.join("report.json"))
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.2}%"))
}

pub fn cmd_calibrate(config: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<PathBuf, CliError> {
    let model = load_model(config, checkpoint)?;
    let (data, manifest) = load_data(config)?;
    let calib = predict_split(config, &model, &data, &config.calibration.split)?;
    let file = calibration_file(&calib, window_of(&manifest).as_ref(), &config.calibration)?;
    let path = config.variant_dir(model.variant).join("calibration.json");
    write_json(&path, &file)?;
    Ok(path)
}

pub fn cmd_plot(config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let settings = &config.plot;
    let source = predictions_path(config, config.variant, &settings.split);
    let records = read_predictions(&source).map_err(|e| CliError::Usage(format!("{}: {e} (run evaluate first)", source.display())))?;
    let end = (settings.first + settings.count).min(records.len());
    if settings.count == 0 || settings.first >= end {
        return Err(CliError::EmptyRange(format!(
            "records {}..{} of {} in {}",
            settings.first,
            settings.first + settings.count,
            records.len(),
            settings.split
        )));
    }
    let dir = config.variant_dir(config.variant).join("plots");
    fs::create_dir_all(&dir)?;
    let mut written = vec![];
    for (i, record) in records.iter().enumerate().take(end).skip(settings.first) {
        for d in 0..record.y.rows() {
            let title = format!("{} {} #{i} dim {d}", config.variant, settings.split);
            let svg = plot::render(record, d, settings.band_scale, settings.width, settings.height, &title)?;
            let path = dir.join(format!("{}_{i}_d{d}.svg", settings.split));
            fs::write(&path, svg)?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn cmd_permtest(config: &ExperimentConfig, against: &[Variant], drift: bool) -> Result<Vec<PathBuf>, CliError> {
    if against.is_empty() {
        return Err(CliError::Usage("permtest needs at least one variant to compare against".into()));
    }
    let window = window_of(&read_manifest(config)?);
    let a = config.variant;
    let read = |v: Variant, split: &str| read_predictions(&predictions_path(config, v, split));
    let mut written = vec![];
    for (bi, &b) in against.iter().enumerate() {
        let mut tests = vec![];
        for (ci, condition) in config.conditions(drift).iter().enumerate() {
            let (ea, ca) = (read(a, condition)?, read(a, &config.calibration.split)?);
            let (eb, cb) = (read(b, condition)?, read(b, &config.calibration.split)?);
            tests.push(pair_test(
                condition,
                (a.name(), &ea, &ca),
                (b.name(), &eb, &cb),
                window.as_ref(),
                &config.calibration,
                config.evaluation.permutation_resamples,
                mix_seed(&[config.seed, bi as u64, ci as u64]),
            )?);
        }
        let path = config.out.join("permtest").join(format!("{a}_vs_{b}.json"));
        write_json(&path, &tests)?;
        for t in &tests {
            log::info!("{}: {} {:.5} vs {} {:.5}, p = {:.4}", t.condition, t.system_a, t.mean_cost_a, t.system_b, t.mean_cost_b, t.p_value);
        }
        written.push(path);
    }
    Ok(written)
}
