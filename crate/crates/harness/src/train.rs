//! The training loop.
//!
//! Each optimizer step takes a batch of sample indices. Every sample is
//! processed independently (on worker threads): a clean forward pass that
//! also yields the cross-attention, the preference batch built from that
//! attention, one policy forward per negative, reference log-likelihoods, the
//! joint loss, and the gradient of that sample's loss. Per-sample gradients are
//! then summed in index order, so results do not depend on the thread count.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;
use signdpo_core::objectives::{
    joint_loss_with, lm_loss, LogProbPair, LogRatioInputs, LossReport, NegativeKind, ObjectivePlan,
};
use signdpo_core::perturb::build_preference_batch;
use signdpo_core::rng::stream;
use signdpo_core::{SkeletonSequence, TokenSequence, Vocabulary};
use signdpo_policy::{
    backward, load_checkpoint, save_checkpoint, snapshot_reference, AdamW, CosineSchedule, PolicyError,
    PolicyModel, ReferenceModel,
};

use crate::config::TrainConfig;
use crate::data::{align_negatives, encode_targets, load_corpus, read_negatives, vocab_from_corpus};
use crate::error::{HarnessError, Result};
use crate::eval::{evaluate, write_reports, EvalReport};

/// Stream index reserved for the per-epoch batch order.
const SHUFFLE_STREAM: u64 = u64::MAX;

/// Training pairs with their optional language negatives, aligned by index.
#[derive(Debug, Clone)]
pub struct TrainSet {
    pub samples: Vec<SkeletonSequence>,
    pub targets: Vec<TokenSequence>,
    pub language: Option<Vec<TokenSequence>>,
}

impl TrainSet {
    pub fn new(samples: Vec<SkeletonSequence>, vocab: &Vocabulary, language: Option<Vec<TokenSequence>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(HarnessError::Input("training split is empty".into()));
        }
        if language.as_ref().is_some_and(|l| l.len() != samples.len()) {
            return Err(HarnessError::Input("language negatives are not aligned with the samples".into()));
        }
        let targets = encode_targets(&samples, vocab);
        Ok(Self {
            samples,
            targets,
            language,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One row of the step log. Components a mode does not train are empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub spatial: Option<f64>,
    pub temporal: Option<f64>,
    pub language: Option<f64>,
    pub lm: Option<f64>,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: PolicyModel,
    pub steps: Vec<StepRecord>,
    /// Mean step loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Per-epoch checkpoint paths; empty without a checkpoint directory.
    pub checkpoints: Vec<PathBuf>,
    /// Dev reports as `(epoch, report)`.
    pub evals: Vec<(usize, EvalReport)>,
    /// Epoch with the highest dev B@4, ties to the earliest.
    pub best_epoch: Option<usize>,
}

impl TrainOutcome {
    pub fn best_checkpoint(&self) -> Option<&Path> {
        let e = self.best_epoch?;
        self.checkpoints.get(e).map(PathBuf::as_path)
    }
}

struct SampleOut {
    grad: Vec<f64>,
    report: LossReport,
}

fn numeric(epoch: usize, step: usize, sample: &str) -> impl FnOnce(PolicyError) -> HarnessError + '_ {
    move |e| match e {
        PolicyError::Numeric { message } => HarnessError::NonFinite {
            epoch,
            step,
            sample: sample.to_string(),
            message,
        },
        e => e.into(),
    }
}

struct StepContext<'a> {
    cfg: &'a TrainConfig,
    data: &'a TrainSet,
    reference: Option<&'a ReferenceModel>,
    plan: Option<ObjectivePlan>,
    epoch: usize,
    step: usize,
    /// Per-sample loss weight, `1 / batch length`.
    scale: f64,
}

impl StepContext<'_> {
    fn sample(&self, model: &PolicyModel, i: usize) -> Result<SampleOut> {
        let x = &self.data.samples[i];
        let y = &self.data.targets[i];
        let on_numeric = || numeric(self.epoch, self.step, &x.id);
        // clean pass; its attention picks the local windows
        let clean = model.forward(x, y)?;
        let (Some(plan), Some(reference)) = (self.plan, self.reference) else {
            let term = lm_loss(clean.log_likelihood());
            let grad = backward(model, &[(&clean, term.d_positive * self.scale)]).map_err(on_numeric())?;
            let report = LossReport {
                lm: Some(term.value),
                joint: term.value,
                ..Default::default()
            };
            return Ok(SampleOut { grad, report });
        };

        let kinds = plan.required_negatives();
        let batch = if kinds.iter().any(|k| k.is_input_level()) {
            let mut rng = stream(self.cfg.seed, &[i as u64, self.epoch as u64]);
            Some(build_preference_batch(
                x,
                &clean.attention,
                &self.data.samples,
                &mut rng,
                &self.cfg.perturb,
            )?)
        } else {
            None
        };
        let mut inputs = LogRatioInputs::new(LogProbPair::new(
            clean.log_likelihood(),
            reference.log_likelihood(x, y)?,
        ));
        let mut traces = Vec::with_capacity(kinds.len());
        for &kind in &kinds {
            let (xn, yn) = match (kind, &batch) {
                (NegativeKind::Language, _) => {
                    let negs = self.data.language.as_ref().ok_or_else(|| {
                        HarnessError::Config("the objective needs language negatives but none were loaded".into())
                    })?;
                    (x, &negs[i])
                }
                (NegativeKind::SpatialGlobal, Some(b)) => (&b.spatial_global, y),
                (NegativeKind::SpatialLocal, Some(b)) => (&b.spatial_local, y),
                (NegativeKind::TemporalGlobal, Some(b)) => (&b.temporal_global, y),
                (NegativeKind::TemporalLocal, Some(b)) => (&b.temporal_local, y),
                (_, None) => unreachable!("input-level kinds always build a batch"),
            };
            let trace = model.forward(xn, yn)?;
            inputs.set(kind, LogProbPair::new(trace.log_likelihood(), reference.log_likelihood(xn, yn)?));
            traces.push((kind, trace));
        }
        let finite_inputs = std::iter::once(inputs.positive)
            .chain(inputs.negatives.iter().flatten().copied())
            .all(|p| p.policy.is_finite() && p.reference.is_finite());
        let joint = if finite_inputs {
            Some(joint_loss_with(&inputs, &self.cfg.weights, &plan)?)
        } else {
            None
        };
        let Some(joint) = joint.filter(|j| j.term.value.is_finite()) else {
            return Err(HarnessError::NonFinite {
                epoch: self.epoch,
                step: self.step,
                sample: x.id.clone(),
                message: format!("joint loss is not finite; log-likelihoods {inputs:?}"),
            });
        };
        let mut terms = vec![(&clean, joint.term.d_positive * self.scale)];
        terms.extend(traces.iter().map(|(k, t)| (t, joint.term.d_negative(*k) * self.scale)));
        let grad = backward(model, &terms).map_err(on_numeric())?;
        Ok(SampleOut {
            grad,
            report: joint.report,
        })
    }
}

fn mean_component(reports: &[LossReport], get: impl Fn(&LossReport) -> Option<f64>) -> Option<f64> {
    let vals: Option<Vec<f64>> = reports.iter().map(get).collect();
    vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Fresh model shaped by `cfg` (inputs centred on `train` when enabled), or
/// the `init_checkpoint` when set.
pub fn initial_model(cfg: &TrainConfig, vocab: &Vocabulary, train: &[SkeletonSequence]) -> Result<PolicyModel> {
    let mut shape = cfg.model.clone();
    shape.vocab_size = vocab.len();
    match &cfg.init_checkpoint {
        Some(path) => {
            let model = load_checkpoint(path, None)?;
            if model.config().vocab_size != vocab.len() {
                return Err(HarnessError::Config(format!(
                    "checkpoint {} has vocabulary size {} but the vocabulary has {}",
                    path.display(),
                    model.config().vocab_size,
                    vocab.len()
                )));
            }
            Ok(model)
        }
        None => {
            let mut model = PolicyModel::new(shape, cfg.seed)?;
            if cfg.fit_input_centre {
                model.fit_input_centre(train)?;
            }
            Ok(model)
        }
    }
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start {threads} worker threads: {e}")))?;
    pool.install(f)
}

/// Trains `model` on `data`. With a checkpoint directory, writes
/// `epoch-NNN.ckpt` per epoch, `steps.csv`, `config.txt`, `vocab.txt`, and,
/// when dev reports exist, `eval.csv` and a `best` file naming the
/// checkpoint with the highest dev B@4.
pub fn train(
    cfg: &TrainConfig,
    model: PolicyModel,
    vocab: &Vocabulary,
    data: &TrainSet,
    dev: Option<&[SkeletonSequence]>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if model.config().vocab_size != vocab.len() {
        return Err(HarnessError::Config(format!(
            "model vocabulary size {} does not match the vocabulary ({})",
            model.config().vocab_size,
            vocab.len()
        )));
    }
    let plan = cfg.mode.plan();
    if plan.is_some_and(|p| p.language) && data.language.is_none() {
        return Err(HarnessError::Config(format!("mode {} needs language negatives", cfg.mode)));
    }
    with_threads(cfg.threads, || train_inner(cfg, model, vocab, data, dev, plan))
}

fn train_inner(
    cfg: &TrainConfig,
    mut model: PolicyModel,
    vocab: &Vocabulary,
    data: &TrainSet,
    dev: Option<&[SkeletonSequence]>,
    plan: Option<ObjectivePlan>,
) -> Result<TrainOutcome> {
    let dir = cfg.checkpoint_dir.as_deref();
    let mut log = match dir {
        Some(d) => {
            fs::create_dir_all(d).map_err(HarnessError::io(d))?;
            fs::write(d.join("config.txt"), cfg.to_text()).map_err(HarnessError::io(d.join("config.txt")))?;
            vocab.save(d.join("vocab.txt"))?;
            let p = d.join("steps.csv");
            Some((csv::Writer::from_path(&p).map_err(HarnessError::csv(&p))?, p))
        }
        None => None,
    };

    // frozen at step 0; never touched by the optimizer
    let reference = plan.map(|_| snapshot_reference(&model));
    let probe_ll = match &reference {
        Some(r) => Some(r.log_likelihood(&data.samples[0], &data.targets[0])?),
        None => None,
    };

    let n = data.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let schedule = CosineSchedule {
        base_lr: cfg.optimizer.lr,
        total_steps: cfg.epochs * steps_per_epoch,
    };
    let mut opt = AdamW::new(cfg.optimizer, model.num_params())?;
    let mut out = TrainOutcome {
        model: model.clone(),
        steps: Vec::new(),
        epoch_losses: Vec::new(),
        checkpoints: Vec::new(),
        evals: Vec::new(),
        best_epoch: None,
    };
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(cfg.seed, &[SHUFFLE_STREAM, epoch as u64]));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let ctx = StepContext {
                cfg,
                data,
                reference: reference.as_ref(),
                plan,
                epoch,
                step,
                scale: 1.0 / batch.len() as f64,
            };
            let outs: Vec<SampleOut> = batch
                .par_iter()
                .map(|&i| ctx.sample(&model, i))
                .collect::<Result<_>>()?;
            let mut grad = vec![0.0; model.num_params()];
            for o in &outs {
                for (g, v) in grad.iter_mut().zip(&o.grad) {
                    *g += v;
                }
            }
            let reports: Vec<LossReport> = outs.iter().map(|o| o.report).collect();
            let lr = schedule.lr(step);
            let rec = StepRecord {
                epoch,
                step,
                lr,
                loss: reports.iter().map(|r| r.joint).sum::<f64>() / reports.len() as f64,
                spatial: mean_component(&reports, |r| r.spatial),
                temporal: mean_component(&reports, |r| r.temporal),
                language: mean_component(&reports, |r| r.language),
                lm: mean_component(&reports, |r| r.lm),
                grad_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
            };
            opt.step(&mut model, &grad, lr)?;
            epoch_loss += rec.loss;
            if let Some((w, p)) = &mut log {
                w.serialize(&rec).map_err(HarnessError::csv(p.as_path()))?;
            }
            out.steps.push(rec);
            step += 1;
        }
        out.epoch_losses.push(epoch_loss / steps_per_epoch as f64);
        if let Some((w, p)) = &mut log {
            w.flush().map_err(HarnessError::io(p.as_path()))?;
        }
        log::info!("epoch {epoch}: mean loss {:.6}", epoch_loss / steps_per_epoch as f64);

        if let (Some(r), Some(expected)) = (&reference, probe_ll) {
            let now = r.log_likelihood(&data.samples[0], &data.targets[0])?;
            if now.to_bits() != expected.to_bits() {
                return Err(HarnessError::Invariant(format!(
                    "reference log-likelihood of the probe pair moved from {expected} to {now} by epoch {epoch}"
                )));
            }
        }

        let ckpt = dir.map(|d| d.join(format!("epoch-{:03}.ckpt", epoch + 1)));
        if let Some(p) = &ckpt {
            save_checkpoint(&model, p)?;
            out.checkpoints.push(p.clone());
        }
        let due = cfg.eval_every > 0 && ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs);
        if let (Some(dev), true) = (dev, due) {
            let mut report = evaluate(&model, vocab, dev, "dev")?;
            report.checkpoint = ckpt.as_ref().and_then(|p| p.file_name()).map(|f| f.to_string_lossy().into_owned());
            let best_b4 = out
                .best_epoch
                .and_then(|b| out.evals.iter().find(|(e, _)| *e == b))
                .map(|(_, r)| r.b4());
            if best_b4.is_none_or(|b| report.b4() > b) {
                out.best_epoch = Some(epoch);
            }
            out.evals.push((epoch, report));
            if let Some(d) = dir {
                let reports: Vec<EvalReport> = out.evals.iter().map(|(_, r)| r.clone()).collect();
                write_reports(d.join("eval.csv"), &reports)?;
                if let Some(best) = out.best_checkpoint() {
                    let name = best.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
                    fs::write(d.join("best"), format!("{name}\n")).map_err(HarnessError::io(d.join("best")))?;
                }
            }
        }
    }
    out.model = model;
    Ok(out)
}

/// Loads everything `cfg` names and trains. Used by the `train` subcommand.
pub fn run_training(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_path = cfg
        .train
        .as_ref()
        .ok_or_else(|| HarnessError::Config("no training corpus (set train = <file>)".into()))?;
    let samples = load_corpus(train_path)?;
    // a warm start reuses the vocabulary saved next to its checkpoint
    let sibling = cfg
        .init_checkpoint
        .as_ref()
        .and_then(|c| c.parent().map(|d| d.join("vocab.txt")))
        .filter(|p| p.is_file());
    let vocab = match cfg.vocab.as_ref().or(sibling.as_ref()) {
        Some(p) => Vocabulary::load(p)?,
        None => vocab_from_corpus(&samples)?,
    };
    let language = match &cfg.negatives {
        Some(p) if cfg.mode.needs_negatives() => Some(align_negatives(&samples, &read_negatives(p)?, &vocab)?),
        _ => None,
    };
    let dev = cfg.dev.as_ref().map(load_corpus).transpose()?;
    let model = initial_model(cfg, &vocab, &samples)?;
    let data = TrainSet::new(samples, &vocab, language)?;
    train(cfg, model, &vocab, &data, dev.as_deref())
}
