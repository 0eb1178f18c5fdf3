//! Joint adversarial training: schedules, optimizers, balanced batching,
//! validation-based checkpointing, and evaluation.
//!
//! One optimizer step per mini-batch updates every parameter. The domain
//! classifier descends its own cross-entropy while everything upstream of
//! the gradient-reversal node descends the full objective with the domain
//! term scaled by `-rho`; both come out of a single backward pass.
//!
//! The reference path is single-threaded and fully deterministic: all
//! randomness (validation split, batch order, resampling, dropout masks)
//! derives from the config seed, so equal seeds give byte-identical
//! checkpoints and metrics.

use crate::autodiff::{Mode, Tape};
use crate::checkpoint::Checkpoint;
use crate::corpus::{apply_rules, split_batches, AspectRuleSet, Document, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{
    encode_document, joint_loss, predict_probs, AanParameters, AspectPair, AssignmentPolicy,
    ForwardOptions, HyperParams, LossBreakdown, PreparedDoc,
};
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Adversarial-strength ramp: `rho_max * (2 / (1 + exp(-gamma p)) - 1)`.
/// Zero at the start of training, approaching `rho_max` as progress p -> 1.
pub fn rho_schedule(p: f64, rho_max: f64, gamma: f64) -> f64 {
    rho_max * (2.0 / (1.0 + (-gamma * p).exp()) - 1.0)
}

/// Learning-rate decay: `base / (1 + alpha p)^beta`.
pub fn lr_schedule(p: f64, base_lr: f64, alpha: f64, beta: f64) -> f64 {
    base_lr / (1.0 + alpha * p).powf(beta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// SGD with momentum 0.9.
    SgdMomentum,
    /// Adam with beta1 0.9, beta2 0.999, epsilon 1e-8.
    Adam,
}

/// Per-tensor moment state for either optimizer.
pub struct Optimizer {
    kind: OptimizerKind,
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
    t: u64,
}

const MOMENTUM: f64 = 0.9;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer {
            kind,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
            t: 0,
        }
    }

    /// Call once per optimizer step (drives Adam bias correction).
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    pub fn update(&mut self, name: &str, value: &mut Tensor, grad: &Tensor, lr: f64) {
        debug_assert!(value.same_shape(grad));
        match self.kind {
            OptimizerKind::SgdMomentum => {
                let vel = self
                    .first
                    .entry(name.to_string())
                    .or_insert_with(|| Tensor::zeros(value.dims().to_vec()));
                for i in 0..value.len() {
                    let v = MOMENTUM * vel.data()[i] + grad.data()[i];
                    vel.data_mut()[i] = v;
                    value.data_mut()[i] -= lr * v;
                }
            }
            OptimizerKind::Adam => {
                let m = self
                    .first
                    .entry(name.to_string())
                    .or_insert_with(|| Tensor::zeros(value.dims().to_vec()));
                let v = self
                    .second
                    .entry(name.to_string())
                    .or_insert_with(|| Tensor::zeros(value.dims().to_vec()));
                let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                for i in 0..value.len() {
                    let g = grad.data()[i];
                    let mi = ADAM_BETA1 * m.data()[i] + (1.0 - ADAM_BETA1) * g;
                    let vi = ADAM_BETA2 * v.data()[i] + (1.0 - ADAM_BETA2) * g * g;
                    m.data_mut()[i] = mi;
                    v.data_mut()[i] = vi;
                    let mhat = mi / bc1;
                    let vhat = vi / bc2;
                    value.data_mut()[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub lr_alpha: f64,
    pub lr_beta: f64,
    pub rho_max: f64,
    pub rho_gamma: f64,
    pub optimizer: OptimizerKind,
    pub hyper: HyperParams,
    pub policy: AssignmentPolicy,
    /// Run with adversarial strength pinned at zero (the no-adversary
    /// ablation; the domain head stays attached and keeps training).
    pub disable_adversary: bool,
    /// Uniform pooling weights, no relevance scorer or loss.
    pub disable_relevance: bool,
    /// Drop the reconstruction term.
    pub disable_reconstruction: bool,
    /// Remove the domain head from the graph entirely (diagnostic).
    pub detach_adversary: bool,
    /// Freeze the transformation at the identity (infinite-lambda surrogate).
    pub freeze_transform_identity: bool,
    /// Fraction of labeled source documents held out for validation.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            base_lr: 0.01,
            lr_alpha: 10.0,
            lr_beta: 0.75,
            rho_max: 1.0,
            rho_gamma: 10.0,
            optimizer: OptimizerKind::Adam,
            hyper: HyperParams::default(),
            policy: AssignmentPolicy::Paired,
            disable_adversary: false,
            disable_relevance: false,
            disable_reconstruction: false,
            detach_adversary: false,
            freeze_transform_identity: false,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 || self.batch_size % 2 != 0 {
            return Err(Error::Config("batch_size must be even and positive".into()));
        }
        if self.base_lr <= 0.0 {
            return Err(Error::Config("base_lr must be positive".into()));
        }
        if self.rho_max < 0.0 {
            return Err(Error::Config("rho_max must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("val_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Inputs to one training run. Documents must already be encoded against
/// `vocab`.
pub struct TrainInput<'a> {
    pub source_docs: &'a [Document],
    pub target_docs: &'a [Document],
    pub rules: &'a AspectRuleSet,
    pub vocab: &'a Vocabulary,
    pub source_aspect: &'a str,
    pub target_aspect: &'a str,
}

#[derive(Clone, Debug)]
pub struct MetricsRow {
    pub step: u64,
    pub epoch: usize,
    pub rho: f64,
    pub lr: f64,
    pub loss: Option<LossBreakdown>,
    pub val_accuracy: Option<f64>,
}

pub struct TrainOutcome {
    /// Best source-validation snapshot (final state when no validation split).
    pub checkpoint: Checkpoint,
    pub final_params: AanParameters,
    pub metrics: Vec<MetricsRow>,
    pub best_val_accuracy: Option<f64>,
    pub warnings: Vec<String>,
}

fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

const STREAM_VAL_SPLIT: u64 = 1;
const STREAM_BATCHES: u64 = 2;
const STREAM_DROPOUT: u64 = 3;

/// Run the joint training loop.
pub fn train(cfg: &TrainConfig, input: &TrainInput) -> Result<TrainOutcome> {
    cfg.validate()?;
    input.rules.validate()?;
    let aspects = input.rules.aspects.clone();
    let source_idx = input
        .rules
        .aspect_index(input.source_aspect)
        .ok_or_else(|| Error::Config(format!("unknown source aspect {:?}", input.source_aspect)))?;
    let target_idx = input
        .rules
        .aspect_index(input.target_aspect)
        .ok_or_else(|| Error::Config(format!("unknown target aspect {:?}", input.target_aspect)))?;
    if source_idx == target_idx {
        return Err(Error::Config(
            "source and target aspects must differ".into(),
        ));
    }
    let pair = AspectPair { source: source_idx, target: target_idx };

    let mut warnings = Vec::new();

    // Label relevance on private copies; training never mutates the caller's corpus.
    let mut source_docs: Vec<Document> = input.source_docs.to_vec();
    let mut target_docs: Vec<Document> = input.target_docs.to_vec();
    if !cfg.disable_relevance {
        for doc in source_docs.iter_mut().chain(target_docs.iter_mut()) {
            for aspect in &aspects {
                apply_rules(doc, input.rules, aspect)?;
            }
        }
    }

    let labeled: Vec<usize> = (0..source_docs.len())
        .filter(|&i| source_docs[i].labels.contains_key(input.source_aspect))
        .collect();
    if labeled.is_empty() {
        return Err(Error::Config(
            "no source documents labeled for the source aspect".into(),
        ));
    }
    if target_docs.is_empty() {
        return Err(Error::Config("no target documents".into()));
    }

    // Hold out labeled source documents for validation.
    let mut val_rng = stream(cfg.seed, STREAM_VAL_SPLIT);
    let mut shuffled = labeled.clone();
    use rand::seq::SliceRandom;
    shuffled.shuffle(&mut val_rng);
    let val_n = ((cfg.val_fraction * shuffled.len() as f64).round() as usize)
        .min(shuffled.len().saturating_sub(1));
    let (val_idx, train_idx) = shuffled.split_at(val_n);
    let val_docs: Vec<Document> = val_idx.iter().map(|&i| source_docs[i].clone()).collect();

    // Training pool: labeled source docs (minus validation) plus target docs.
    let mut pool: Vec<Document> = train_idx.iter().map(|&i| source_docs[i].clone()).collect();
    pool.extend(target_docs.iter().cloned());
    let prepared: Vec<PreparedDoc> = pool
        .iter()
        .map(|d| PreparedDoc::from_document(d, &aspects, input.source_aspect))
        .collect();

    let mut params = AanParameters::init(
        &cfg.hyper,
        input.vocab.size(),
        aspects.len(),
        cfg.seed,
    );
    let mut optimizer = Optimizer::new(cfg.optimizer);
    let dropout_seed = cfg.seed ^ 0xD0D0_0000_0000_0000 ^ STREAM_DROPOUT;

    // Fixed step budget for the schedules.
    let half = cfg.batch_size / 2;
    let n_src = train_idx.len().max(1);
    let batches_per_epoch = (n_src / half).max(target_docs.len() / half).max(1);
    let total_steps = (cfg.epochs * batches_per_epoch) as f64;

    let mut batch_rng = stream(cfg.seed, STREAM_BATCHES);
    let mut metrics: Vec<MetricsRow> = Vec::new();
    let mut step: u64 = 0;
    let mut best: Option<(f64, Checkpoint)> = None;
    let mut warned_unlabeled = false;

    for epoch in 0..cfg.epochs {
        let batches = split_batches(&pool, cfg.batch_size, true, &mut batch_rng)?;
        for batch_idx in batches {
            let p = step as f64 / total_steps;
            let rho = if cfg.disable_adversary {
                0.0
            } else {
                rho_schedule(p, cfg.rho_max, cfg.rho_gamma)
            };
            let lr = lr_schedule(p, cfg.base_lr, cfg.lr_alpha, cfg.lr_beta);

            let batch: Vec<PreparedDoc> =
                batch_idx.iter().map(|&i| prepared[i].clone()).collect();
            let opts = ForwardOptions {
                mode: Mode::Train,
                rho,
                policy: cfg.policy,
                aspect_pair: pair,
                detach_adversary: cfg.detach_adversary,
                disable_relevance: cfg.disable_relevance,
                disable_reconstruction: cfg.disable_reconstruction,
                freeze_transform: cfg.freeze_transform_identity,
                dropout_seed,
                step,
            };
            let mut tape = Tape::new();
            let fwd = joint_loss(&mut tape, &params, &cfg.hyper, &batch, &opts)?;

            if fwd.labeled_count == 0 && !warned_unlabeled {
                warnings.push(format!(
                    "step {step}: batch without labeled source documents; label loss contributed 0"
                ));
                warned_unlabeled = true;
            }
            guard_finite(&fwd.breakdown, step, &batch)?;

            tape.backward(fwd.loss)?;
            optimizer.begin_step();
            for (name, node) in fwd.params.entries() {
                if cfg.freeze_transform_identity && name == "transform" {
                    continue;
                }
                let grad = tape.grad(*node).clone();
                let value = params
                    .get_mut(name)
                    .expect("bound parameter exists in AanParameters");
                optimizer.update(name, value, &grad, lr);
            }
            if let Some(delta) = fwd.bn_delta {
                params.bn_running_mean = delta.running_mean;
                params.bn_running_var = delta.running_var;
            }

            metrics.push(MetricsRow {
                step,
                epoch,
                rho,
                lr,
                loss: Some(fwd.breakdown),
                val_accuracy: None,
            });
            step += 1;
        }

        if !val_docs.is_empty() {
            let report = evaluate(
                &params,
                &cfg.hyper,
                &val_docs,
                &aspects,
                input.source_aspect,
                cfg.disable_relevance,
            )?;
            metrics.push(MetricsRow {
                step: step.saturating_sub(1),
                epoch,
                rho: 0.0,
                lr: 0.0,
                loss: None,
                val_accuracy: Some(report.accuracy),
            });
            let better = match &best {
                Some((acc, _)) => report.accuracy > *acc,
                None => true,
            };
            if better {
                let mut ck = Checkpoint::from_params(
                    &params,
                    &cfg.hyper,
                    &aspects,
                    &input.vocab.content_hash(),
                );
                ck.uniform_pooling = cfg.disable_relevance;
                best = Some((report.accuracy, ck));
            }
        }
    }

    let (best_val_accuracy, checkpoint) = match best {
        Some((acc, ck)) => (Some(acc), ck),
        None => {
            let mut ck = Checkpoint::from_params(
                &params,
                &cfg.hyper,
                &aspects,
                &input.vocab.content_hash(),
            );
            ck.uniform_pooling = cfg.disable_relevance;
            (None, ck)
        }
    };
    Ok(TrainOutcome {
        checkpoint,
        final_params: params,
        metrics,
        best_val_accuracy,
        warnings,
    })
}

fn guard_finite(breakdown: &LossBreakdown, step: u64, batch: &[PreparedDoc]) -> Result<()> {
    for (name, v) in breakdown.components() {
        if !v.is_finite() {
            let ids: Vec<&str> = batch.iter().map(|d| d.id.as_str()).collect();
            return Err(Error::NonFinite(format!(
                "loss component {name} = {v} at step {step}; batch docs: {ids:?}"
            )));
        }
        if v < -1e-9 {
            return Err(Error::NonFinite(format!(
                "loss component {name} = {v} went negative at step {step}"
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// confusion[actual][predicted]
    pub confusion: Vec<Vec<usize>>,
}

/// Accuracy of the label head on documents encoded under `aspect`
/// (eval mode; ties argmax toward class 0).
pub fn evaluate(
    params: &AanParameters,
    hyper: &HyperParams,
    docs: &[Document],
    aspects: &[String],
    aspect: &str,
    disable_relevance: bool,
) -> Result<EvalReport> {
    let aspect_idx = aspects
        .iter()
        .position(|a| a == aspect)
        .ok_or_else(|| Error::Config(format!("unknown aspect {aspect:?}")))?;
    let missing: Vec<&str> = docs
        .iter()
        .filter(|d| !d.labels.contains_key(aspect))
        .map(|d| d.id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Contract(format!(
            "documents missing {aspect:?} labels: {missing:?}"
        )));
    }
    let m = hyper.num_classes;
    let mut confusion = vec![vec![0usize; m]; m];
    let mut correct = 0;
    for doc in docs {
        let actual = doc.labels[aspect];
        if actual >= m {
            return Err(Error::Contract(format!(
                "label {actual} out of range for {m} classes (doc {:?})",
                doc.id
            )));
        }
        let enc = encode_document(params, hyper, &doc.token_ids, aspect_idx, disable_relevance)?;
        let probs = predict_probs(params, &enc.transformed)?;
        let mut pred = 0;
        for (k, &p) in probs.iter().enumerate() {
            if p > probs[pred] {
                pred = k;
            }
        }
        confusion[actual][pred] += 1;
        if pred == actual {
            correct += 1;
        }
    }
    Ok(EvalReport {
        accuracy: correct as f64 / docs.len().max(1) as f64,
        correct,
        total: docs.len(),
        confusion,
    })
}

/// One CSV row per training step plus one per validation measurement.
pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "step,epoch,rho,lr,l_rec,l_rel,omega_tr,l_lab,l_dom,l_all,val_acc"
    )?;
    for row in rows {
        match (&row.loss, row.val_accuracy) {
            (Some(l), _) => writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},",
                row.step,
                row.epoch,
                row.rho,
                row.lr,
                l.reconstruction,
                l.relevance,
                l.transform,
                l.label,
                l.domain,
                l.overall()
            )?,
            (None, Some(acc)) => writeln!(
                w,
                "{},{},,,,,,,,,{acc}",
                row.step, row.epoch
            )?,
            (None, None) => {}
        }
    }
    Ok(())
}
