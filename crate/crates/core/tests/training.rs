use uqseq::data::{synth_heteroskedastic, SplitDataset, SynthProfile};
use uqseq::models::*;
use uqseq::seqnet::DropoutRates;
use uqseq::types::validate_bounded_prediction;
use uqseq::Error;

fn small_data() -> SplitDataset {
    let profile = SynthProfile { input_steps: 6, horizon: 4, eval_size: Some(20), ..SynthProfile::default() };
    synth_heteroskedastic(100, 3, &profile).unwrap().dataset
}

fn small_config() -> ArchitectureConfig {
    let mut c = ArchitectureConfig::new(4, 1);
    c.encoder_units = 4;
    c.decoder_units = 4;
    c.meta_units = 3;
    c.batch_size = 25;
    c.schedule.max_epochs = 3;
    c
}

#[test]
fn every_variant_trains_and_predicts() {
    let data = small_data();
    for v in Variant::ALL {
        let model = train_variant(v, &data, &small_config(), 5).unwrap();
        let runs = if v == Variant::Doms { 3 } else { 1 };
        for s in &data.test {
            let p = predict(&model, s, runs, 1).unwrap();
            let y = uqseq::types::restore_units(&s.targets, &data.stats).unwrap();
            validate_bounded_prediction(&p, &y).unwrap();
            if !v.is_asymmetric() {
                assert_eq!(p.z_lower, p.z_upper, "{v}");
            }
        }
        if v != Variant::Constant && v != Variant::Doms {
            assert!(matches!(predict(&model, &data.test[0], 2, 0), Err(Error::RunsForNonDropoutVariant)));
        }
    }
}

#[test]
fn constant_variant_has_no_parameters() {
    let model = train_variant(Variant::Constant, &small_data(), &small_config(), 0).unwrap();
    assert_eq!(model.store.len(), 0);
    assert!(model.log.is_empty());
}

#[test]
fn training_is_bit_reproducible() {
    let data = small_data();
    let a = train_variant(Variant::Jms, &data, &small_config(), 8).unwrap();
    let b = train_variant(Variant::Jms, &data, &small_config(), 8).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let c = train_variant(Variant::Jms, &data, &small_config(), 9).unwrap();
    assert_ne!(a.to_json().unwrap(), c.to_json().unwrap());
}

#[test]
fn jms_phases_follow_the_beta_schedule() {
    let model = train_variant(Variant::Jms, &small_data(), &small_config(), 2).unwrap();
    let mut betas: Vec<f64> = model.log.iter().filter_map(|e| e.beta).collect();
    betas.dedup();
    assert_eq!(betas, vec![1.0, 0.5, 0.0]);
    let phases: Vec<&str> = model.log.iter().map(|e| e.phase.as_str()).collect();
    assert_eq!(phases.first(), Some(&"stage1"));
    assert_eq!(phases.last(), Some(&"meta"));
}

#[test]
fn wbms_base_is_frozen_after_stage_two() {
    let data = small_data();
    let config = small_config();
    let full = train_variant(Variant::Wbms, &data, &config, 4).unwrap();
    let mut staged = TrainedModel::init(Variant::Wbms, config, data.stats.clone(), 4).unwrap();
    train_stage1(&mut staged, &data, 4).unwrap();
    train_stage2(&mut staged, &data, 4).unwrap();
    let net = full.network().unwrap();
    for id in net.base_params() {
        let (a, b) = (full.store.value(*id), staged.store.value(*id));
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()), "{}", full.store.name(*id));
    }
    let meta_changed = net.meta_params().iter().any(|id| full.store.value(*id) != staged.store.value(*id));
    assert!(meta_changed);
}

#[test]
fn stage_one_stops_early_and_logs_each_epoch() {
    let data = small_data();
    let mut config = small_config();
    config.schedule.max_epochs = 50;
    config.schedule.patience = 0;
    config.lr_stage1 = 0.3;
    let mut model = TrainedModel::init(Variant::Jms, config, data.stats.clone(), 1).unwrap();
    train_stage1(&mut model, &data, 1).unwrap();
    assert!(!model.log.is_empty() && model.log.len() < 50);
    assert!(model.log.iter().enumerate().all(|(i, e)| e.epoch == i && e.phase == "stage1"));
}

#[test]
fn dropout_contract() {
    let data = small_data();
    let mut config = small_config();
    config.dropout = DropoutRates::NONE;
    let model = train_variant(Variant::Doms, &data, &config, 6).unwrap();
    let p = predict(&model, &data.test[0], 10, 3).unwrap();
    assert!(p.z_upper.as_slice().iter().all(|&z| z == 0.0));
    assert_eq!(p.yhat, predict(&model, &data.test[0], 1, 99).unwrap().yhat);

    let noisy = train_variant(Variant::Doms, &data, &small_config(), 6).unwrap();
    let a = predict_all(&noisy, &data.test, 10, 3).unwrap();
    let b = predict_all(&noisy, &data.test, 10, 3).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().any(|p| p.z_upper.as_slice().iter().any(|&z| z > 0.0)));
}

#[test]
fn checkpoint_round_trip() {
    let data = small_data();
    let dir = tempfile::tempdir().unwrap();
    for v in [Variant::Jma, Variant::Bbms, Variant::Jmv] {
        let model = train_variant(v, &data, &small_config(), 7).unwrap();
        let path = dir.path().join(format!("{v}.json"));
        model.save(&path).unwrap();
        let back = TrainedModel::load(&path).unwrap();
        assert_eq!(back.to_json().unwrap(), model.to_json().unwrap());
        for id in model.store.ids() {
            let same = model.store.value(id).iter().zip(back.store.value(id)).all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same);
        }
        assert_eq!(predict_all(&model, &data.test, 1, 0).unwrap(), predict_all(&back, &data.test, 1, 0).unwrap());
    }
}

#[test]
fn checkpoint_for_wrong_architecture_is_rejected() {
    let data = small_data();
    let model = train_variant(Variant::Jms, &data, &small_config(), 7).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&model.to_json().unwrap()).unwrap();
    v["variant"] = "jmv".into();
    assert!(TrainedModel::from_json(&v.to_string()).is_err());
}
