use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use serde::Serialize;

use interpnet::data::{
    load_dataset, sparsify as thin, split_validation, synthesize, write_dataset, Dataset, SynthConfig, Task,
};
use interpnet::eval::{ablation_suite, config_fingerprint, kfold_evaluate, predict_all, score_model, MetricReport};
use interpnet::interp::ChannelSelection;
use interpnet::predict::BaselineMode;
use interpnet::rng;
use interpnet::train::{fit_with, grad_check, random_instance, Checkpoint, LossWeights, TrainConfig};
use interpnet::{Error, Result};

use crate::{AblateArgs, EvalArgs, GradcheckArgs, ModelFlags, PredictArgs, SparsifyArgs, SynthArgs, TrainArgs};

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_task(s: &str) -> Result<Task> {
    s.parse()
}

pub fn synth(a: &SynthArgs) -> Result<ExitCode> {
    let mut config: SynthConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(mode) = &a.mode {
        config.label_mode = serde_json::from_value(serde_json::Value::String(mode.clone()))
            .map_err(|_| Error::config(format!("unknown label mode {mode:?}")))?;
    }
    if let Some(n) = a.samples {
        config.num_samples = n;
    }
    if let Some(t) = &a.task {
        config.task = parse_task(t)?;
    }
    config.validate()?;
    let ds = synthesize(&config, a.seed)?;
    write_dataset(&ds, &a.out)?;
    eprintln!(
        "wrote {} samples ({:?}, {}) to {}",
        ds.len(),
        config.label_mode,
        ds.task,
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// Base configuration from `--config`, then flag overrides, validated.
fn train_config(flags: &ModelFlags, seed: Option<u64>) -> Result<TrainConfig> {
    let mut c: TrainConfig = match &flags.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = &flags.channels {
        c.selection = ChannelSelection::parse(s)?;
    }
    if let Some(s) = &flags.baseline {
        c.baseline = BaselineMode::parse(s)?;
    }
    macro_rules! set {
        ($($flag:ident => $field:expr),* $(,)?) => {
            $(if let Some(v) = flags.$flag { $field = v; })*
        };
    }
    set! {
        refs => c.refs,
        hidden => c.hidden,
        epochs => c.epochs,
        batch => c.batch_size,
        lr => c.lr,
        delta_r => c.weights.delta_r,
        delta_i => c.weights.delta_i,
        delta_p => c.weights.delta_p,
        mask_frac => c.mask_fraction,
        patience => c.patience,
        kappa => c.kappa,
    }
    if let Some(b) = flags.bins {
        c.bins = Some(b);
    }
    if let Some(clip) = flags.clip {
        c.clip_norm = (clip > 0.0).then_some(clip);
    }
    if let Some(s) = seed {
        c.seed = s;
    }
    c.validate()?;
    Ok(c)
}

fn check_compatible(ck: &Checkpoint, ds: &Dataset) -> Result<()> {
    if ck.channel_names != ds.channel_names {
        return Err(Error::Checkpoint(format!(
            "checkpoint channels {:?} differ from dataset channels {:?}",
            ck.channel_names, ds.channel_names
        )));
    }
    if ck.model.task != ds.task {
        return Err(Error::Checkpoint(format!(
            "checkpoint task {} differs from dataset task {}",
            ck.model.task, ds.task
        )));
    }
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<ExitCode> {
    let config = train_config(&a.model, a.seed)?;
    let expected = a.task.as_deref().map(parse_task).transpose()?;
    let ds = load_dataset(&a.data)?;
    if let Some(t) = expected {
        if t != ds.task {
            return Err(Error::config(format!("--task {t} but the dataset is {}", ds.task)));
        }
    }
    let all: Vec<usize> = (0..ds.len()).collect();
    let (train_idx, val_idx) = split_validation(&ds, &all, config.val_fraction, rng::derive(config.seed, &[0x7a]))?;

    println!("epoch, train_loss, val_loss");
    let result = fit_with(&ds.subset(&train_idx), &ds.subset(&val_idx), &config, |log| {
        println!("{}, {:.6}, {:.6}", log.epoch, log.train_loss, log.val_loss);
    })?;
    if result.clip_events > 0 {
        eprintln!("gradient clipping fired on {} steps", result.clip_events);
    }
    result.checkpoint.save(&a.out)?;
    eprintln!(
        "best epoch {} with validation loss {:.6}; checkpoint written to {}",
        result.checkpoint.best_epoch,
        result.checkpoint.best_val_loss,
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn print_summary(report: &MetricReport) {
    for (k, m) in &report.mean {
        println!("{k:<12} {m:.4} ± {:.4}", report.std[k]);
    }
}

pub fn eval(a: &EvalArgs) -> Result<ExitCode> {
    if a.kfold.is_some_and(|k| k < 2) {
        return Err(Error::config("--kfold needs at least 2 folds"));
    }
    let ck = Checkpoint::load(&a.checkpoint)?;
    let ds = load_dataset(&a.data)?;
    check_compatible(&ck, &ds)?;
    let report = match a.kfold {
        Some(k) => kfold_evaluate(&ds, &ck.config, k, a.seed.unwrap_or(ck.config.seed))?,
        None => MetricReport::from_folds(
            ds.task,
            vec![score_model(&ck.model, &ds)?],
            config_fingerprint(&ck.config, 1, ck.config.seed),
        ),
    };
    let mut json = report.to_json()?;
    json.push('\n');
    write_text(&a.metrics, &json)?;
    print_summary(&report);
    Ok(ExitCode::SUCCESS)
}

pub fn ablate(a: &AblateArgs) -> Result<ExitCode> {
    let config = train_config(&a.model, a.seed)?;
    if config.baseline.is_some() {
        return Err(Error::config("--baseline cannot be combined with ablate"));
    }
    if a.kfold < 2 {
        return Err(Error::config("--kfold needs at least 2 folds"));
    }
    let datasets = a.data.iter().map(load_dataset).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Dataset> = datasets.iter().collect();
    let table = ablation_suite(&refs, &config, a.kfold, config.seed)?;
    print!("{}", table.to_text());
    if let Some(out) = &a.out {
        let mut json = serde_json::to_string_pretty(&table)?;
        json.push('\n');
        write_text(out, &json)?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<ExitCode> {
    if !(a.eps > 0.0) {
        return Err(Error::config("--eps must be positive"));
    }
    let tasks = match &a.task {
        Some(t) => vec![parse_task(t)?],
        None => vec![Task::Classification, Task::Regression],
    };
    println!("eps = {:e}", a.eps);
    let mut worst = 0.0f64;
    for task in tasks {
        let inst = random_instance(a.seed, task, 3, a.refs, a.hidden, 8, 4)?;
        let report = grad_check(&inst, &LossWeights::default(), a.eps)?;
        for (name, count, err) in &report.groups {
            println!("{:<15} {name:<16} {count:>6} {err:.3e}", task.to_string());
        }
        worst = worst.max(report.max_error);
    }
    let ok = worst < a.tolerance;
    println!(
        "max relative error {worst:.3e} ({} {:e})",
        if ok { "below" } else { "NOT below" },
        a.tolerance
    );
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    id: &'a str,
    prediction: f64,
}

pub fn predict(a: &PredictArgs) -> Result<ExitCode> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let ds = load_dataset(&a.data)?;
    if ck.channel_names != ds.channel_names {
        return Err(Error::Checkpoint(format!(
            "checkpoint channels {:?} differ from dataset channels {:?}",
            ck.channel_names, ds.channel_names
        )));
    }
    let preds = predict_all(&ck.model, &ds)?;
    let file = fs::File::create(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut w = BufWriter::new(file);
    for (s, p) in ds.samples.iter().zip(&preds) {
        let prediction = match ck.model.task {
            Task::Classification => p.value,
            // days, like the targets in dataset files
            Task::Regression => p.value.exp(),
        };
        let line = serde_json::to_string(&PredictionLine { id: &s.id, prediction })?;
        writeln!(w, "{line}").map_err(|e| Error::io(&a.out, e))?;
    }
    w.flush().map_err(|e| Error::io(&a.out, e))?;
    Ok(ExitCode::SUCCESS)
}

pub fn sparsify(a: &SparsifyArgs) -> Result<ExitCode> {
    let ds = load_dataset(&a.data)?;
    let before: usize = ds.samples.iter().map(|s| s.num_observations()).sum();
    let out = thin(&ds, a.fraction, a.seed)?;
    let after: usize = out.samples.iter().map(|s| s.num_observations()).sum();
    write_dataset(&out, &a.out)?;
    eprintln!("kept {after} of {before} observations; wrote {}", a.out.display());
    Ok(ExitCode::SUCCESS)
}
