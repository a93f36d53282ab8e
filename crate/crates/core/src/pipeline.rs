//! End-to-end training and evaluation runs over a dataset manifest.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::batch::PreparedSample;
use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::{load_dataset, load_samples, split_samples, DatasetManifest};
use crate::elements::DesignSample;
use crate::error::{Error, Result};
use crate::geometry::Layout;
use crate::metrics::{evaluate, MetricReport, SurrogateLayoutEncoder};
use crate::training::{StepLosses, Trainer};

pub const METRICS_LOG: &str = "metrics.ndjson";
pub const LAST_CHECKPOINT: &str = "last.ckpt";

/// Seed used for evaluation noise so repeated evaluations agree.
pub const EVAL_NOISE_SEED: u64 = 0x0e7a1;

pub fn checkpoint_name(step: u64) -> String {
    format!("step-{step:06}.ckpt")
}

/// Train and held-out samples of a manifest, split by its `split_seed`.
pub fn load_split(manifest_path: &Path) -> Result<(Vec<DesignSample>, Vec<DesignSample>)> {
    let manifest = load_dataset(manifest_path)?;
    split_manifest(&manifest, manifest_path.parent().unwrap_or(Path::new(".")))
}

pub fn split_manifest(manifest: &DatasetManifest, base: &Path) -> Result<(Vec<DesignSample>, Vec<DesignSample>)> {
    if manifest.records.is_empty() {
        return Err(Error::config("dataset is empty"));
    }
    let samples = load_samples(manifest, base)?;
    split_samples(&samples, manifest.split_seed)
}

pub fn prepare(cfg: &RunConfig, samples: &[DesignSample]) -> Result<Vec<PreparedSample>> {
    let enc = cfg.text_encoder()?;
    samples
        .iter()
        .map(|s| PreparedSample::from_sample(s, &cfg.embedder, &cfg.network, enc.as_ref()))
        .collect()
}

/// Generated layouts for `samples` next to their ground truth.
pub fn predict_with_truth(trainer: &Trainer, prepared: &[PreparedSample], seed: u64) -> Result<(Vec<Layout>, Vec<Layout>)> {
    let fake = trainer.predict_samples(prepared, seed)?;
    let real = prepared
        .iter()
        .map(|p| Layout::from_arrays(p.boxes.as_deref().unwrap_or_default()))
        .collect();
    Ok((fake, real))
}

pub fn evaluate_trainer(trainer: &Trainer, prepared: &[PreparedSample]) -> Result<MetricReport> {
    let (fake, real) = predict_with_truth(trainer, prepared, EVAL_NOISE_SEED)?;
    evaluate(&fake, &real, &SurrogateLayoutEncoder::default())
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub out_dir: PathBuf,
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub steps: u64,
    pub last: Option<StepLosses>,
    pub report: Option<MetricReport>,
    pub checkpoint: PathBuf,
}

fn step_record(l: &StepLosses, trainer: &Trainer) -> serde_json::Value {
    json!({
        "step": l.step,
        "generator": l.generator,
        "discriminator": l.discriminator,
        "details": l.details,
        "ema": trainer.state.ema,
    })
}

fn write_line(log: &mut BufWriter<File>, v: &serde_json::Value) -> Result<()> {
    serde_json::to_writer(&mut *log, v)?;
    log.write_all(b"\n")?;
    log.flush()?;
    Ok(())
}

/// Trains until `cfg.train.max_steps`, writing checkpoints and an NDJSON log
/// into `opts.out_dir`. With `max_steps = 0` only the initial checkpoint is
/// written.
pub fn run_training(
    cfg: &RunConfig,
    train: &[DesignSample],
    test: &[DesignSample],
    opts: &TrainOptions,
    mut on_step: impl FnMut(&StepLosses),
) -> Result<TrainSummary> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    fs::create_dir_all(&opts.out_dir)?;
    let mut trainer = match &opts.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.config.network != cfg.network || ck.config.embedder != cfg.embedder {
                return Err(Error::config("checkpoint architecture differs from the configuration"));
            }
            let mut t = ck.into_trainer()?;
            t.config.max_steps = cfg.train.max_steps;
            t
        }
        None => Trainer::new(&cfg.train, &cfg.network, &cfg.embedder, &cfg.weights)?,
    };
    let train_p = prepare(cfg, train)?;
    let test_p = prepare(cfg, test)?;
    let mut log = BufWriter::new(
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(opts.out_dir.join(METRICS_LOG))?,
    );
    let save = |trainer: &mut Trainer, name: &str| -> Result<PathBuf> {
        let path = opts.out_dir.join(name);
        Checkpoint::from_trainer(trainer, &cfg.encoders)?.save(&path)?;
        Ok(path)
    };

    let max = trainer.config.max_steps;
    let every_ck = trainer.config.checkpoint_every;
    let every_eval = trainer.config.eval_every;
    if trainer.state.step == 0 && max == 0 {
        save(&mut trainer, &checkpoint_name(0))?;
    }
    let mut last = None;
    let mut report = None;
    while trainer.state.step < max {
        let losses = trainer.step(&train_p)?;
        write_line(&mut log, &step_record(&losses, &trainer))?;
        on_step(&losses);
        let done = trainer.state.step;
        if every_ck > 0 && done % every_ck == 0 && done < max {
            save(&mut trainer, &checkpoint_name(done))?;
        }
        if every_eval > 0 && done % every_eval == 0 && done < max && !test_p.is_empty() {
            let r = evaluate_trainer(&trainer, &test_p)?;
            write_line(&mut log, &json!({ "step": done, "eval": r }))?;
        }
        last = Some(losses);
    }
    if max > 0 && !test_p.is_empty() {
        let r = evaluate_trainer(&trainer, &test_p)?;
        write_line(&mut log, &json!({ "step": trainer.state.step, "eval": r }))?;
        report = Some(r);
    }
    if max > 0 {
        let name = checkpoint_name(trainer.state.step);
        save(&mut trainer, &name)?;
    }
    let checkpoint = save(&mut trainer, LAST_CHECKPOINT)?;
    Ok(TrainSummary {
        steps: trainer.state.step,
        last,
        report,
        checkpoint,
    })
}

/// Evaluates a checkpoint on samples with ground truth.
pub fn evaluate_checkpoint(path: &Path, samples: &[DesignSample]) -> Result<MetricReport> {
    let ck = Checkpoint::load(path)?;
    let cfg = ck.config.clone();
    let trainer = ck.into_trainer()?;
    evaluate_trainer(&trainer, &prepare(&cfg, samples)?)
}
