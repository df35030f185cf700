use adep::checkpoint::{load_model, save_model};
use adep::data::{
    expand_symmetric, gen_synthetic, stratified_kfold, Dataset, PairSample, SynthConfig,
};
use adep::model::{
    sample_fake_latent, AdepModel, AdversarialMode, ArchSize, FakeLatentStrategy, Subnet,
};
use adep::nn::{nll_loss, Adam, Matrix, Mode};
use adep::rng::{stream, Stream};
use adep::train::{
    evaluate, evaluate_pairs, predict_proba, run_ablation, run_cv, train, EvalOrdering,
    TrainConfig, Trainer, ROW_ADEP, ROW_NO_DISCRIMINATOR,
};
use adep::AdepError;
use rand::seq::SliceRandom;

fn small_data(classes: usize, pairs: usize, imbalance: f64) -> Dataset {
    gen_synthetic(&SynthConfig {
        drugs: 80,
        classes,
        pairs,
        widths: vec![16, 8],
        imbalance,
        density: 0.25,
        flip: 0.05,
        seed: 3,
    })
    .unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        arch: ArchSize::Scaled {
            hidden: 32,
            latent: 16,
        },
        epochs: 4,
        batch_size: 32,
        seed: 5,
        ..TrainConfig::default()
    }
}

fn bits(values: &[f64]) -> Vec<u64> {
    values.iter().map(|v| v.to_bits()).collect()
}

fn subnet_params(model: &mut AdepModel, which: &[Subnet]) -> Vec<u64> {
    model
        .params_of(which)
        .iter()
        .flat_map(|p| bits(p.value))
        .collect()
}

const GENERATOR: [Subnet; 3] = [Subnet::Encoder, Subnet::Decoder, Subnet::Classifier];

#[test]
fn logged_totals_recombine_and_loss_falls() {
    let data = small_data(4, 400, 1.0);
    let config = TrainConfig {
        epochs: 30,
        ..small_config()
    };
    let (_, history) = train(&config, &data, &data.pairs, None).unwrap();
    assert_eq!(history.epochs.len(), 30);
    assert!(history.max_recombination_error(&config.coefficients()) <= 1e-12);
    let (first, last) = (&history.epochs[0], &history.epochs[29]);
    assert!(
        last.total < first.total,
        "{} -> {}",
        first.total,
        last.total
    );
    assert!(last.train_acc > first.train_acc);
    let log = history.to_jsonl().unwrap();
    assert_eq!(log.lines().count(), 30);
    let first_line: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    for key in ["epoch", "ae_loss", "cls_loss", "adv_loss", "total"] {
        assert!(first_line.get(key).is_some(), "{key}");
    }
}

#[test]
fn modes_agree_when_gamma_is_zero() {
    let data = small_data(4, 200, 1.0);
    let mut models = Vec::new();
    for mode in [AdversarialMode::Joint, AdversarialMode::Alternating] {
        let config = TrainConfig {
            gamma: 0.0,
            adversarial_mode: mode,
            epochs: 3,
            ..small_config()
        };
        let (model, history) = train(&config, &data, &data.pairs, None).unwrap();
        models.push((model, history));
    }
    let (mut a, ha) = models.remove(0);
    let (mut b, hb) = models.remove(0);
    assert_eq!(
        subnet_params(&mut a, &Subnet::ALL),
        subnet_params(&mut b, &Subnet::ALL)
    );
    for (x, y) in ha.epochs.iter().zip(&hb.epochs) {
        assert_eq!(x.ae_loss.to_bits(), y.ae_loss.to_bits());
        assert_eq!(x.cls_loss.to_bits(), y.cls_loss.to_bits());
    }
}

#[test]
fn disabled_discriminator_matches_zero_gamma() {
    let data = small_data(4, 200, 1.0);
    let on = TrainConfig {
        gamma: 0.0,
        ..small_config()
    };
    let off = TrainConfig {
        discriminator_enabled: false,
        ..small_config()
    };
    let (mut m_on, h_on) = train(&on, &data, &data.pairs, None).unwrap();
    let (mut m_off, h_off) = train(&off, &data, &data.pairs, None).unwrap();
    for (x, y) in h_on.epochs.iter().zip(&h_off.epochs) {
        assert_eq!(x.ae_loss.to_bits(), y.ae_loss.to_bits());
        assert_eq!(x.cls_loss.to_bits(), y.cls_loss.to_bits());
        assert_eq!(x.total.to_bits(), y.total.to_bits());
        assert_eq!(y.adv_loss, 0.0);
    }
    assert_eq!(
        subnet_params(&mut m_on, &GENERATOR),
        subnet_params(&mut m_off, &GENERATOR)
    );
}

/// With alpha = gamma = 0 the encoder and classifier form a plain MLP. Train
/// one by hand from the same initial weights and random streams.
#[test]
fn classifier_only_training_is_a_plain_mlp() {
    let data = small_data(4, 200, 1.0);
    let config = TrainConfig {
        alpha: 0.0,
        gamma: 0.0,
        discriminator_enabled: false,
        epochs: 3,
        ..small_config()
    };
    let (mut trained, history) = train(&config, &data, &data.pairs, None).unwrap();

    let init = AdepModel::new(config.arch_for(&data).unwrap(), config.seed).unwrap();
    let mut encoder = init.subnet(Subnet::Encoder).clone();
    let mut classifier = init.subnet(Subnet::Classifier).clone();
    let (mut opt_e, mut opt_c) = (Adam::new(config.adam), Adam::new(config.adam));
    let mut shuffle = stream(config.seed, Stream::Shuffle);
    let mut drop_e = stream(config.seed, Stream::EncoderDropout);
    let mut drop_c = stream(config.seed, Stream::ClassifierDropout);
    let samples = expand_symmetric(&data.pairs);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut shuffle);
        let (mut sum, mut seen) = (0.0, 0usize);
        for idx in order.chunks(config.batch_size).filter(|c| c.len() >= 2) {
            let batch: Vec<PairSample> = idx.iter().map(|&i| samples[i].clone()).collect();
            let x = data.matrix(&batch).unwrap();
            let y = Dataset::labels(&batch);
            encoder.zero_grad();
            classifier.zero_grad();
            let z = encoder.forward(&x, Mode::Train, &mut drop_e).unwrap();
            let lp = classifier.forward(&z, Mode::Train, &mut drop_c).unwrap();
            let loss = nll_loss(&lp, &y).unwrap();
            let gz = classifier.backward(&loss.grad).unwrap();
            encoder.backward(&gz).unwrap();
            opt_e.step(&mut encoder.params()).unwrap();
            opt_c.step(&mut classifier.params()).unwrap();
            sum += loss.value * idx.len() as f64;
            seen += idx.len();
        }
        assert_eq!(
            (sum / seen as f64).to_bits(),
            history.epochs[epoch].cls_loss.to_bits(),
            "epoch {epoch}"
        );
    }
    let mlp: Vec<u64> = encoder
        .params()
        .iter()
        .chain(classifier.params().iter())
        .flat_map(|p| bits(p.value))
        .collect();
    assert_eq!(
        mlp,
        subnet_params(&mut trained, &[Subnet::Encoder, Subnet::Classifier])
    );
}

#[test]
fn untrained_model_is_at_chance() {
    let data = gen_synthetic(&SynthConfig {
        drugs: 120,
        classes: 8,
        pairs: 2400,
        imbalance: 0.0,
        widths: vec![32, 16],
        ..SynthConfig::default()
    })
    .unwrap();
    let model = AdepModel::new(small_config().arch_for(&data).unwrap(), 11).unwrap();
    let report = evaluate_pairs(&model, &data, &data.pairs, EvalOrdering::Both).unwrap();
    assert_eq!(report.samples, 4800);
    let acc = report.acc.unwrap();
    assert!((acc - 0.125).abs() < 0.05, "{acc}");
}

#[test]
fn memorized_toy_set_scores_perfectly() {
    let data = small_data(3, 60, 0.0);
    let config = TrainConfig {
        epochs: 60,
        batch_size: 16,
        adam: adep::nn::AdamConfig {
            lr: 3e-3,
            ..Default::default()
        },
        ..small_config()
    };
    let (model, _) = train(&config, &data, &data.pairs, None).unwrap();
    let report = evaluate_pairs(&model, &data, &data.pairs, EvalOrdering::Both).unwrap();
    assert_eq!(report.acc, Some(1.0));
    assert_eq!((report.fn_total, report.fp_total), (0, 0));
}

#[test]
fn training_is_deterministic_and_checkpoints_round_trip() {
    let data = small_data(4, 200, 1.0);
    let config = small_config();
    let dir = tempfile::tempdir().unwrap();
    let mut blobs = Vec::new();
    for run in 0..2 {
        let (mut model, _) = train(&config, &data, &data.pairs, None).unwrap();
        let sub = dir.path().join(run.to_string());
        save_model(&sub, "checkpoint", &mut model, config.seed, "h").unwrap();
        blobs.push((
            std::fs::read(sub.join("checkpoint.json")).unwrap(),
            std::fs::read(sub.join("checkpoint.bin")).unwrap(),
        ));
        let (loaded, _) = load_model(&sub, "checkpoint").unwrap();
        let x = data.matrix(&expand_symmetric(&data.pairs)).unwrap();
        assert_eq!(
            bits(predict_proba(&model, &x).unwrap().data()),
            bits(predict_proba(&loaded, &x).unwrap().data())
        );
        let y = Dataset::labels(&expand_symmetric(&data.pairs));
        let a = serde_json::to_string(&evaluate(&model, &x, &y).unwrap()).unwrap();
        let b = serde_json::to_string(&evaluate(&loaded, &x, &y).unwrap()).unwrap();
        assert_eq!(a, b);
    }
    assert!(blobs[0] == blobs[1], "same seed gave different checkpoints");

    let (mut other, _) =
        train(&TrainConfig { seed: 6, ..config }, &data, &data.pairs, None).unwrap();
    save_model(dir.path(), "other", &mut other, 6, "h").unwrap();
    assert_ne!(
        std::fs::read(dir.path().join("other.bin")).unwrap(),
        blobs[0].1
    );
}

#[test]
fn training_improves_reconstruction_and_discriminator_separates() {
    let data = small_data(4, 400, 1.0);
    let config = TrainConfig {
        epochs: 15,
        ..small_config()
    };
    let x = data.matrix(&expand_symmetric(&data.pairs)).unwrap();
    let untrained = AdepModel::new(config.arch_for(&data).unwrap(), config.seed).unwrap();
    let (model, _) = train(&config, &data, &data.pairs, None).unwrap();
    let mae = |m: &AdepModel| {
        let r = m.infer_reconstruction(&x).unwrap();
        r.data()
            .iter()
            .zip(x.data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / x.data().len() as f64
    };
    assert!(mae(&model) < mae(&untrained));

    let z = model.infer_latent(&x).unwrap();
    let fake = sample_fake_latent(
        FakeLatentStrategy::StandardNormal,
        z.rows(),
        z.cols(),
        None,
        &mut stream(99, Stream::FakeLatent),
    )
    .unwrap();
    let mean = |m: Matrix| m.data().iter().sum::<f64>() / m.rows() as f64;
    let real_p = mean(model.infer_discriminator(&z).unwrap());
    let fake_p = mean(model.infer_discriminator(&fake).unwrap());
    assert!(real_p > fake_p, "real {real_p} fake {fake_p}");
}

#[test]
fn non_finite_loss_reports_epoch_and_batch() {
    let data = small_data(4, 200, 1.0);
    let config = small_config();
    let mut model = AdepModel::new(config.arch_for(&data).unwrap(), config.seed).unwrap();
    model.state()[0].2[0] = f64::NAN;
    let mut trainer = Trainer::with_model(&config, &data, &data.pairs, model).unwrap();
    match trainer.run_epoch(None) {
        Err(AdepError::Divergence { epoch, batch, .. }) => assert_eq!((epoch, batch), (1, 0)),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn evaluation_checks_widths_and_orderings() {
    let data = small_data(4, 200, 1.0);
    let model = AdepModel::new(small_config().arch_for(&data).unwrap(), 1).unwrap();
    assert!(matches!(
        evaluate(&model, &Matrix::zeros(3, 7), &[0, 1, 2]),
        Err(AdepError::Dimension { .. })
    ));
    let both = evaluate_pairs(&model, &data, &data.pairs, EvalOrdering::Both).unwrap();
    let mean = evaluate_pairs(&model, &data, &data.pairs, EvalOrdering::PairMean).unwrap();
    assert_eq!((both.samples, mean.samples), (400, 200));
    let again = evaluate_pairs(&model, &data, &data.pairs, EvalOrdering::Both).unwrap();
    assert_eq!(
        serde_json::to_string(&both).unwrap(),
        serde_json::to_string(&again).unwrap()
    );
}

#[test]
fn early_stopping_keeps_the_best_epoch() {
    let data = small_data(4, 300, 1.0);
    let config = TrainConfig {
        epochs: 12,
        patience: Some(2),
        ..small_config()
    };
    let (_, history) = train(&config, &data, &data.pairs, None).unwrap();
    let best = history.best_epoch.unwrap();
    let scores: Vec<f64> = history
        .epochs
        .iter()
        .map(|e| e.val_metrics.as_ref().unwrap().f1_micro.unwrap())
        .collect();
    let top = scores.iter().cloned().fold(f64::MIN, f64::max);
    assert_eq!(scores[best - 1], top);
    assert!(history.epochs.len() == 12 || history.epochs.len() - best == 2);
}

#[test]
fn cross_validation_covers_every_pair_once() {
    let data = small_data(4, 200, 1.0);
    let config = TrainConfig {
        epochs: 2,
        ..small_config()
    };
    let serial = run_cv(&config, &data, 1, None).unwrap();
    assert_eq!(serial.folds.len(), 5);
    let held: usize = serial.folds.iter().map(|f| f.test_pairs).sum();
    assert_eq!(held, data.pairs.len());
    assert!(serial
        .folds
        .iter()
        .all(|f| f.train_pairs + f.test_pairs == data.pairs.len()));
    let mean_acc = serial
        .folds
        .iter()
        .map(|f| f.report.acc.unwrap())
        .sum::<f64>()
        / 5.0;
    assert!((serial.aggregate.acc.unwrap() - mean_acc).abs() <= 1e-12);
    let fn_sum: u64 = serial.folds.iter().map(|f| f.report.fn_total).sum();
    assert_eq!(serial.aggregate.fn_total, fn_sum);

    let parallel = run_cv(&config, &data, 3, None).unwrap();
    assert_eq!(
        serde_json::to_string(&serial.folds).unwrap(),
        serde_json::to_string(&parallel.folds).unwrap()
    );

    let split = stratified_kfold(&data.pairs, 5, config.seed).unwrap();
    let mut ids: Vec<usize> = (0..5)
        .flat_map(|f| split.partition(&data.pairs, f).unwrap().1)
        .map(|p| p.origin_pair)
        .collect();
    ids.sort_unstable();
    let mut all: Vec<usize> = data.pairs.iter().map(|p| p.origin_pair).collect();
    all.sort_unstable();
    assert_eq!(ids, all);
}

#[test]
fn ablation_has_six_rows_on_shared_folds() {
    let data = small_data(4, 200, 1.0);
    let mut config = TrainConfig {
        epochs: 2,
        ..small_config()
    };
    config.baseline.forest.trees = 5;
    config.baseline.logreg.iterations = 50;
    let result = run_ablation(&config, &data, Some(2), 2, None).unwrap();
    assert_eq!(result.folds_run, 2);
    let names: Vec<&str> = result.rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(
        names,
        [
            ROW_ADEP,
            ROW_NO_DISCRIMINATOR,
            "Latent+KNN",
            "Latent+LR",
            "Latent+DT",
            "Latent+RF"
        ]
    );
    for row in &result.rows {
        assert_eq!(row.folds.len(), 2);
        assert_eq!(row.folds[0].samples, row.folds[0].samples);
    }
    for [adep, no_disc, _] in &result.histories {
        assert!(no_disc.epochs.iter().all(|e| e.adv_loss == 0.0));
        assert!(adep.epochs.iter().all(|e| e.adv_loss > 0.0));
    }
    let samples: Vec<u64> = result.rows.iter().map(|r| r.folds[1].samples).collect();
    assert!(samples.windows(2).all(|w| w[0] == w[1]));
    let serial = run_ablation(&config, &data, Some(2), 1, None).unwrap();
    assert_eq!(
        serde_json::to_string(&serial.rows).unwrap(),
        serde_json::to_string(&result.rows).unwrap()
    );
}

#[test]
fn configs_load_strictly() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        TrainConfig::load(&dir.path().join("missing.json")),
        Err(AdepError::Config(_))
    ));
    let path = dir.path().join("c.json");
    std::fs::write(
        &path,
        r#"{"alpha": 0.5, "gamma": 2.0, "arch": {"kind": "mini"}}"#,
    )
    .unwrap();
    let c = TrainConfig::load(&path).unwrap();
    assert_eq!(
        (c.alpha, c.beta, c.gamma, c.arch),
        (0.5, 1.0, 2.0, ArchSize::Mini)
    );
    std::fs::write(&path, r#"{"alpah": 0.5}"#).unwrap();
    assert!(TrainConfig::load(&path).is_err());
    std::fs::write(&path, r#"{"batch_size": 1}"#).unwrap();
    assert!(matches!(
        TrainConfig::load(&path),
        Err(AdepError::Config(_))
    ));
    let json = serde_json::to_string(&TrainConfig::default()).unwrap();
    assert_eq!(
        serde_json::from_str::<TrainConfig>(&json).unwrap(),
        TrainConfig::default()
    );
}
