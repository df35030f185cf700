//! `adep` command line.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 runtime
//! failure (divergence, IO, failed gradient check).

mod args;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adep::baselines::fit_baseline;
use adep::checkpoint::{config_hash, save_model};
use adep::data::{
    expand_symmetric, gen_synthetic, modalities_of, stratified_kfold, Dataset, SynthConfig,
    DS1_MODALITIES, DS2_MODALITIES, DS3_MODALITIES,
};
use adep::metrics::{self, render_table, MetricsReport, TableColumns};
use adep::model::{check_adep_gradients, AdepArch, AdepModel, AdversarialMode, Subnet};
use adep::nn::{GradCheckOptions, Matrix};
use adep::rng::{stream, Stream};
use adep::train::{
    evaluate_pairs, run_ablation, run_cv, score_pairs, train_hooked, EpochRecord, TrainConfig,
    ROW_ADEP,
};
use adep::{AdepError, Result};
use clap::Parser;
use rand::Rng as _;
use serde::Serialize;

use args::*;
use run::*;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let json = cli.json;
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if e.is_validation() { 1 } else { 2 };
            if json {
                let kind = if code == 1 { "validation" } else { "runtime" };
                let body = serde_json::json!({"error": {"kind": kind, "message": e.to_string()}});
                eprintln!("{body}");
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::ValidateData(a) => validate_data(cli, a),
        Command::Train(a) => train_cmd(cli, a),
        Command::Cv(a) => cv_cmd(cli, a),
        Command::Ablate(a) => ablate_cmd(cli, a),
        Command::Baseline(a) => baseline_cmd(cli, a),
        Command::Gradcheck(a) => gradcheck_cmd(cli, a),
        Command::Report(a) => report_cmd(cli, a),
    }
}

fn emit<T: Serialize>(cli: &Cli, value: &T, text: impl FnOnce() -> String) -> Result<()> {
    if cli.json {
        println!("{}", serde_json::to_string(value)?);
    } else {
        print!("{}", text());
    }
    Ok(())
}

fn read_config<T: serde::de::DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let mut config: SynthConfig = read_config(cli.config.as_ref())?;
    a.apply(&mut config, cli.seed);
    config.validate()?;
    let out = cli
        .out
        .clone()
        .ok_or_else(|| usage("synth needs --out <dataset dir>"))?;
    let dataset = gen_synthetic(&config)?;
    dataset.save(&out, Some(&config))?;
    let summary = dataset.summary(true);
    emit(cli, &summary, || {
        format!(
            "wrote {}: {} drugs, {} pairs, {} classes, pair width {}\nclass counts {:?}\n",
            out.display(),
            summary.drugs,
            summary.pairs,
            summary.classes,
            summary.pair_width,
            summary.class_counts
        )
    })
}

fn validate_data(cli: &Cli, a: &ValidateArgs) -> Result<()> {
    let (dataset, checked) = Dataset::load_checked(&a.dir)?;
    if let Some(shape) = a.expect {
        let expected = modalities_of(match shape {
            Shape::Ds1 => &DS1_MODALITIES,
            Shape::Ds2 => &DS2_MODALITIES,
            Shape::Ds3 => &DS3_MODALITIES,
        });
        if dataset.table.modalities() != expected.as_slice() {
            return Err(usage(format!(
                "modalities {:?} do not match the expected layout {:?}",
                dataset.table.modalities(),
                expected
            )));
        }
    }
    let summary = dataset.summary(checked);
    emit(cli, &summary, || {
        format!(
            "ok: {} drugs, {} pairs, {} classes, pair width {}, manifest {}\n",
            summary.drugs,
            summary.pairs,
            summary.classes,
            summary.pair_width,
            if checked { "verified" } else { "absent" }
        )
    })
}

fn train_config(cli: &Cli, flags: &ModelFlags) -> Result<TrainConfig> {
    let mut config = match &cli.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    flags.apply(&mut config, cli.seed);
    config.validate()?;
    Ok(config)
}

fn load_data(flags: &RunFlags) -> Result<(Dataset, DataInfo)> {
    let (dataset, checked) = Dataset::load_checked(&flags.data)?;
    let info = DataInfo {
        dir: flags.data.clone(),
        manifest_checked: checked,
        classes: dataset.classes,
        pairs: dataset.pairs.len(),
        pair_width: dataset.pair_width(),
    };
    Ok((dataset, info))
}

fn run_dir(cli: &Cli, flags: &RunFlags, command: &str) -> Result<RunDir> {
    let parent = cli.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
    RunDir::create(parent.join(flags.name.as_deref().unwrap_or(command)))
}

fn epoch_line(label: &str, total_epochs: usize, e: &EpochRecord) {
    let prefix = if label.is_empty() {
        String::new()
    } else {
        format!("[{label}] ")
    };
    let val = e
        .val_metrics
        .as_ref()
        .and_then(|m| m.f1_micro)
        .map_or(String::new(), |f| format!(" val_f1 {f:.4}"));
    eprintln!(
        "{prefix}epoch {}/{total_epochs} total {:.5} ae {:.5} cls {:.5} adv {:.5} acc {:.4}{val} ({:.1}s)",
        e.epoch, e.total, e.ae_loss, e.cls_loss, e.adv_loss, e.train_acc, e.seconds
    );
}

fn history_line(
    mut value: serde_json::Value,
    extra: &[(&str, serde_json::Value)],
) -> Result<String> {
    if let Some(obj) = value.as_object_mut() {
        for (k, v) in extra {
            obj.insert(k.to_string(), v.clone());
        }
    }
    Ok(serde_json::to_string(&value)? + "\n")
}

fn row(method: &str, report: MetricsReport) -> MethodReport {
    MethodReport {
        method: method.to_string(),
        report,
    }
}

fn write_results(
    dir: &RunDir,
    metrics: &MetricsFile,
    table_rows: &[(String, MetricsReport)],
) -> Result<String> {
    dir.write_json(METRICS_FILE, metrics)?;
    let table = render_table(table_rows, TableColumns::default());
    dir.write_text(TABLE_FILE, &table)?;
    Ok(table)
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let config = train_config(cli, &a.model)?;
    let (dataset, info) = load_data(&a.run)?;
    let (train_pairs, test_pairs) = match a.fold {
        Some(f) => {
            let split = stratified_kfold(&dataset.pairs, config.folds, config.seed)?;
            if f >= split.k {
                return Err(usage(format!(
                    "fold {f} out of range for {} folds",
                    split.k
                )));
            }
            let (tr, te) = split.partition(&dataset.pairs, f)?;
            (tr, Some(te))
        }
        None => (dataset.pairs.clone(), None),
    };
    let dir = run_dir(cli, &a.run, "train")?;
    let hash = config_hash(&config)?;
    dir.write_json(CONFIG_FILE, &config)?;
    let hook = |label: &str, e: &EpochRecord| epoch_line(label, config.epochs, e);
    let (mut model, history) = train_hooked(
        &config,
        &dataset,
        &train_pairs,
        test_pairs.as_deref(),
        "",
        Some(&hook),
    )?;
    dir.write_text(HISTORY_FILE, &history.to_jsonl()?)?;
    save_model(&dir.path, CHECKPOINT_STEM, &mut model, config.seed, &hash)?;
    let (method, report) = match &test_pairs {
        Some(test) => (
            ROW_ADEP.to_string(),
            evaluate_pairs(&model, &dataset, test, config.eval_ordering)?,
        ),
        None => (
            format!("{ROW_ADEP} (train)"),
            evaluate_pairs(&model, &dataset, &train_pairs, config.eval_ordering)?,
        ),
    };
    let metrics = MetricsFile {
        command: "train".into(),
        rows: vec![row(&method, report)],
        folds: Vec::new(),
    };
    let table = write_results(&dir, &metrics, &metrics.table_rows())?;
    let seconds = history.epochs.iter().map(|e| e.seconds).collect();
    dir.finish(
        "train",
        config.seed,
        cli.threads,
        hash,
        Some(info),
        vec![("train".into(), seconds)],
    )?;
    emit(cli, &metrics, || {
        format!("{table}wrote {}\n", dir.path.display())
    })
}

fn cv_cmd(cli: &Cli, a: &CvArgs) -> Result<()> {
    let config = train_config(cli, &a.model)?;
    let (dataset, info) = load_data(&a.run)?;
    let dir = run_dir(cli, &a.run, "cv")?;
    let hash = config_hash(&config)?;
    dir.write_json(CONFIG_FILE, &config)?;
    let hook = |label: &str, e: &EpochRecord| epoch_line(label, config.epochs, e);
    let result = run_cv(&config, &dataset, cli.threads, Some(&hook))?;
    let mut history = String::new();
    let mut seconds = Vec::new();
    for f in &result.folds {
        for e in &f.history.epochs {
            history += &history_line(serde_json::to_value(e)?, &[("fold", f.fold.into())])?;
        }
        seconds.push((
            format!("fold {}", f.fold),
            f.history.epochs.iter().map(|e| e.seconds).collect(),
        ));
    }
    dir.write_text(HISTORY_FILE, &history)?;
    let metrics = MetricsFile {
        command: "cv".into(),
        rows: vec![row(ROW_ADEP, result.aggregate.clone())],
        folds: result
            .folds
            .iter()
            .map(|f| FoldReports {
                fold: f.fold,
                rows: vec![row(ROW_ADEP, f.report.clone())],
            })
            .collect(),
    };
    let mut table_rows: Vec<(String, MetricsReport)> = result
        .folds
        .iter()
        .map(|f| (format!("{ROW_ADEP} fold {}", f.fold), f.report.clone()))
        .collect();
    table_rows.push((format!("{ROW_ADEP} mean"), result.aggregate.clone()));
    let table = write_results(&dir, &metrics, &table_rows)?;
    dir.finish("cv", config.seed, cli.threads, hash, Some(info), seconds)?;
    emit(cli, &metrics, || {
        format!("{table}wrote {}\n", dir.path.display())
    })
}

fn ablate_cmd(cli: &Cli, a: &AblateArgs) -> Result<()> {
    let mut config = train_config(cli, &a.model)?;
    a.baseline.apply(&mut config);
    config.validate()?;
    let (dataset, info) = load_data(&a.run)?;
    let dir = run_dir(cli, &a.run, "ablate")?;
    let hash = config_hash(&config)?;
    dir.write_json(CONFIG_FILE, &config)?;
    let hook = |label: &str, e: &EpochRecord| epoch_line(label, config.epochs, e);
    let result = run_ablation(&config, &dataset, a.max_folds, cli.threads, Some(&hook))?;
    let variants = ["ADEP", "ADEP-discriminator", "autoencoder"];
    let mut history = String::new();
    let mut seconds = Vec::new();
    for (fold, runs) in result.histories.iter().enumerate() {
        for (variant, h) in variants.iter().zip(runs) {
            for e in &h.epochs {
                history += &history_line(
                    serde_json::to_value(e)?,
                    &[("fold", fold.into()), ("variant", (*variant).into())],
                )?;
            }
            seconds.push((
                format!("fold {fold} {variant}"),
                h.epochs.iter().map(|e| e.seconds).collect(),
            ));
        }
    }
    dir.write_text(HISTORY_FILE, &history)?;
    let metrics = MetricsFile {
        command: "ablate".into(),
        rows: result
            .rows
            .iter()
            .map(|r| row(&r.method, r.aggregate.clone()))
            .collect(),
        folds: (0..result.folds_run)
            .map(|fold| FoldReports {
                fold,
                rows: result
                    .rows
                    .iter()
                    .map(|r| row(&r.method, r.folds[fold].clone()))
                    .collect(),
            })
            .collect(),
    };
    let table = write_results(&dir, &metrics, &result.table_rows())?;
    dir.finish(
        "ablate",
        config.seed,
        cli.threads,
        hash,
        Some(info),
        seconds,
    )?;
    emit(cli, &metrics, || {
        format!(
            "{table}{} of {} folds; wrote {}\n",
            result.folds_run,
            result.k,
            dir.path.display()
        )
    })
}

fn baseline_cmd(cli: &Cli, a: &BaselineArgs) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(k) = a.folds {
        config.folds = k;
    }
    a.baseline.apply(&mut config);
    config.validate()?;
    let (dataset, info) = load_data(&a.run)?;
    let split = stratified_kfold(&dataset.pairs, config.folds, config.seed)?;
    let folds: Vec<usize> = match a.fold {
        Some(f) if f >= split.k => {
            return Err(usage(format!(
                "fold {f} out of range for {} folds",
                split.k
            )))
        }
        Some(f) => vec![f],
        None => (0..split.k).collect(),
    };
    let kinds = a.kind.kinds();
    let dir = run_dir(cli, &a.run, "baseline")?;
    let hash = config_hash(&config)?;
    dir.write_json(CONFIG_FILE, &config)?;
    let mut per_fold = Vec::new();
    for &fold in &folds {
        let (train_pairs, test_pairs) = split.partition(&dataset.pairs, fold)?;
        let samples = expand_symmetric(&train_pairs);
        let x = dataset.matrix(&samples)?;
        let y = Dataset::labels(&samples);
        let mut rows = Vec::new();
        for &kind in &kinds {
            let model = fit_baseline(
                kind,
                &x,
                &y,
                dataset.classes,
                &config.baseline,
                config.seed,
                cli.threads,
            )?;
            let score = |m: &Matrix| model.predict_proba(m);
            let (p, labels) = score_pairs(
                &dataset,
                &test_pairs,
                config.eval_ordering,
                dataset.classes,
                &score,
            )?;
            rows.push(row(kind.label(), metrics::evaluate_scores(&p, &labels)?));
            if a.fold.is_some() {
                let stem = if kinds.len() == 1 {
                    CHECKPOINT_STEM.to_string()
                } else {
                    format!("{CHECKPOINT_STEM}-{}", kind.name())
                };
                model.save(&dir.path, &stem, config.seed, &hash)?;
            }
            eprintln!("[fold {fold}] {} done", kind.label());
        }
        per_fold.push(FoldReports { fold, rows });
    }
    let mut rows = Vec::new();
    for (i, kind) in kinds.iter().enumerate() {
        let reports: Vec<MetricsReport> =
            per_fold.iter().map(|f| f.rows[i].report.clone()).collect();
        rows.push(row(kind.label(), metrics::aggregate(&reports)?));
    }
    let metrics = MetricsFile {
        command: "baseline".into(),
        rows,
        folds: per_fold,
    };
    let table = write_results(&dir, &metrics, &metrics.table_rows())?;
    dir.finish(
        "baseline",
        config.seed,
        cli.threads,
        hash,
        Some(info),
        Vec::new(),
    )?;
    emit(cli, &metrics, || {
        format!("{table}wrote {}\n", dir.path.display())
    })
}

#[derive(Serialize)]
struct GradcheckOutcome {
    mode: &'static str,
    max_rel_error: f64,
    worst_tensor: String,
    tensors: usize,
    passed: bool,
}

fn gradcheck_cmd(cli: &Cli, a: &GradcheckArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(1);
    if a.batch < 2 {
        return Err(usage("gradcheck needs --batch of at least 2"));
    }
    let arch = AdepArch::new(a.arch, a.input_dim, a.classes)?;
    let mut rng = stream(seed, Stream::Synth);
    let x = Matrix::from_fn(a.batch, a.input_dim, |_, _| {
        if rng.gen_bool(0.4) {
            1.0
        } else {
            0.0
        }
    });
    let labels: Vec<usize> = (0..a.batch).map(|i| i % a.classes).collect();
    let opts = GradCheckOptions {
        tolerance: a.tolerance,
        ..GradCheckOptions::default()
    };
    let modes: &[(AdversarialMode, &str)] = match a.mode {
        CheckMode::Joint => &[(AdversarialMode::Joint, "joint")],
        CheckMode::Alternating => &[(AdversarialMode::Alternating, "alternating")],
        CheckMode::Both => &[
            (AdversarialMode::Joint, "joint"),
            (AdversarialMode::Alternating, "alternating"),
        ],
    };
    let mut outcomes = Vec::new();
    for &(mode, name) in modes {
        let mut model = AdepModel::new(arch, seed)?;
        if let (Some(s), Some(layer)) = (a.flip_subnet, a.flip_layer) {
            let subnet = match s {
                SubnetArg::Encoder => Subnet::Encoder,
                SubnetArg::Decoder => Subnet::Decoder,
                SubnetArg::Classifier => Subnet::Classifier,
                SubnetArg::Discriminator => Subnet::Discriminator,
            };
            let layers = model.subnet(subnet).layers().len();
            if layer >= layers {
                return Err(usage(format!(
                    "{} has {layers} layers, got --flip-layer {layer}",
                    subnet.name()
                )));
            }
            model.subnet_mut(subnet).inject_sign_flip(Some(layer));
        }
        let report = check_adep_gradients(
            &mut model,
            &x,
            &labels,
            &Default::default(),
            mode,
            seed,
            &opts,
        )?;
        outcomes.push(GradcheckOutcome {
            mode: name,
            max_rel_error: report.max_rel_error,
            worst_tensor: report.worst_tensor,
            tensors: report.tensors.len(),
            passed: report.passed,
        });
    }
    emit(cli, &outcomes, || {
        outcomes
            .iter()
            .map(|o| {
                format!(
                    "{}: max relative error {:.3e} at {} over {} tensors: {}\n",
                    o.mode,
                    o.max_rel_error,
                    o.worst_tensor,
                    o.tensors,
                    if o.passed { "pass" } else { "FAIL" }
                )
            })
            .collect()
    })?;
    if outcomes.iter().all(|o| o.passed) {
        Ok(())
    } else {
        Err(AdepError::Numerical {
            location: format!("gradient check (tolerance {:e})", a.tolerance),
        })
    }
}

fn report_cmd(cli: &Cli, a: &ReportArgs) -> Result<()> {
    let columns = TableColumns {
        prf: a.prf.into(),
        auc: a.auc.into(),
    };
    let mut rows = Vec::new();
    for dir in &a.runs {
        let m = read_metrics(dir)?;
        let prefix = if a.runs.len() > 1 {
            run_label(dir)
        } else {
            String::new()
        };
        rows.extend(
            m.rows
                .into_iter()
                .map(|r| (format!("{prefix}{}", r.method), r.report)),
        );
    }
    let table = render_table(&rows, columns);
    let json: Vec<MethodReport> = rows
        .iter()
        .map(|(m, r)| MethodReport {
            method: m.clone(),
            report: r.clone(),
        })
        .collect();
    emit(cli, &json, || table)
}

fn run_label(dir: &Path) -> String {
    dir.file_name()
        .map_or(String::new(), |n| format!("{}/", n.to_string_lossy()))
}
