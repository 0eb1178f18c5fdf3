//! The adversarial aspect-transfer network: aspect-driven document encoder,
//! word reconstruction head, relevance scorer, transformation layer, shared
//! label classifier, and domain classifier, composed into one joint loss.
//!
//! The joint objective has five terms: word reconstruction, relevance
//! regression, the transformation regularizer, source-label cross-entropy,
//! and the domain cross-entropy. The adversarial min/max is realized
//! structurally: the domain head reads its input through a gradient-reversal
//! node, so one backward pass hands the head's own parameters the gradient
//! of `+L_dom` while every upstream parameter receives `-rho` times it.
//!
//! Sentence pipeline: embedding lookup -> word dropout -> centered
//! convolution -> batch norm -> ReLU -> pooling. Batch norm statistics are
//! taken over the pooled rows of every sentence in the mini-batch, not per
//! sentence, so short sentences are fine in train mode. Reconstruction reads
//! the raw convolution rows (pre-normalization) and regresses `tanh` of the
//! clean, pre-dropout embeddings.

use crate::autodiff::{BnDelta, Mode, NodeId, Tape};
use crate::corpus::{Document, Origin};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Pooling operator that turns per-position features into a sentence vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Max,
    Mean,
}

/// How documents are assigned to aspects for encoding and the domain loss.
///
/// `Paired` encodes every document under both designated aspects (aspect
/// transfer over shared documents); `ByOrigin` encodes each document only
/// under its corpus-of-origin aspect (cross-domain transfer over distinct
/// corpora).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentPolicy {
    Paired,
    ByOrigin,
}

/// Designated source/target aspects as indices into the rule set's order.
#[derive(Clone, Copy, Debug)]
pub struct AspectPair {
    pub source: usize,
    pub target: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HyperParams {
    /// Word embedding dimension.
    pub embed_dim: usize,
    /// Convolution window (odd).
    pub conv_window: usize,
    /// Convolution feature count = sentence/document vector dimension.
    /// The transformation layer is square over this dimension.
    pub conv_features: usize,
    /// Hidden width of the relevance, label, and domain feed-forward heads.
    pub hidden_size: usize,
    /// Number of document classes.
    pub num_classes: usize,
    /// Weight of the transformation regularizer.
    pub lambda_tr: f64,
    /// Dropout rate on word embeddings and classifier inputs.
    pub dropout: f64,
    pub pooling: Pooling,
    /// Clamp relevance scores to [0, 1] instead of using the raw ReLU output.
    pub clamp_relevance: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            embed_dim: 50,
            conv_window: 3,
            conv_features: 150,
            hidden_size: 150,
            num_classes: 2,
            lambda_tr: 0.1,
            dropout: 0.2,
            pooling: Pooling::Max,
            clamp_relevance: false,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.conv_window % 2 == 0 || self.conv_window == 0 {
            return Err(Error::Config("conv_window must be odd".into()));
        }
        if self.embed_dim == 0
            || self.conv_features == 0
            || self.hidden_size == 0
            || self.num_classes < 2
        {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} not in [0, 1)",
                self.dropout
            )));
        }
        if self.lambda_tr < 0.0 {
            return Err(Error::Config("lambda_tr must be non-negative".into()));
        }
        Ok(())
    }
}

/// Every learned tensor of the model, plus batch-norm running statistics.
#[derive(Clone, Debug)]
pub struct AanParameters {
    pub embedding: Tensor,
    pub conv_filters: Tensor,
    pub conv_bias: Tensor,
    pub bn_gamma: Tensor,
    pub bn_beta: Tensor,
    pub bn_running_mean: Tensor,
    pub bn_running_var: Tensor,
    pub recon_w: Tensor,
    pub recon_b: Tensor,
    pub rel_hidden_w: Tensor,
    pub rel_hidden_b: Tensor,
    /// One (weights, bias) output head per aspect.
    pub rel_heads: Vec<(Tensor, Tensor)>,
    /// Square transformation, initialized to the identity.
    pub transform: Tensor,
    pub label_hidden_w: Tensor,
    pub label_hidden_b: Tensor,
    pub label_out_w: Tensor,
    pub label_out_b: Tensor,
    pub dom_hidden_w: Tensor,
    pub dom_hidden_b: Tensor,
    pub dom_out_w: Tensor,
    pub dom_out_b: Tensor,
}

fn glorot(dims: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::uniform(dims, -bound, bound, rng)
}

impl AanParameters {
    pub fn init(hyper: &HyperParams, vocab_size: usize, num_aspects: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, f, h, m, w) = (
            hyper.embed_dim,
            hyper.conv_features,
            hyper.hidden_size,
            hyper.num_classes,
            hyper.conv_window,
        );
        AanParameters {
            embedding: Tensor::uniform(vec![vocab_size, d], -0.1, 0.1, &mut rng),
            conv_filters: glorot(vec![w * d, f], w * d, f, &mut rng),
            conv_bias: Tensor::zeros(vec![f]),
            bn_gamma: Tensor::filled(vec![f], 1.0),
            bn_beta: Tensor::zeros(vec![f]),
            bn_running_mean: Tensor::zeros(vec![f]),
            bn_running_var: Tensor::filled(vec![f], 1.0),
            recon_w: glorot(vec![f, d], f, d, &mut rng),
            recon_b: Tensor::zeros(vec![d]),
            rel_hidden_w: glorot(vec![f, h], f, h, &mut rng),
            rel_hidden_b: Tensor::zeros(vec![h]),
            rel_heads: (0..num_aspects)
                .map(|_| (glorot(vec![h, 1], h, 1, &mut rng), Tensor::zeros(vec![1])))
                .collect(),
            transform: Tensor::eye(f),
            label_hidden_w: glorot(vec![f, h], f, h, &mut rng),
            label_hidden_b: Tensor::zeros(vec![h]),
            label_out_w: glorot(vec![h, m], h, m, &mut rng),
            label_out_b: Tensor::zeros(vec![m]),
            dom_hidden_w: glorot(vec![f, h], f, h, &mut rng),
            dom_hidden_b: Tensor::zeros(vec![h]),
            dom_out_w: glorot(vec![h, 2], h, 2, &mut rng),
            dom_out_b: Tensor::zeros(vec![2]),
        }
    }

    pub fn num_aspects(&self) -> usize {
        self.rel_heads.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    /// All tensors by name, running statistics included.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("embedding".into(), &self.embedding),
            ("conv_filters".into(), &self.conv_filters),
            ("conv_bias".into(), &self.conv_bias),
            ("bn_gamma".into(), &self.bn_gamma),
            ("bn_beta".into(), &self.bn_beta),
            ("bn_running_mean".into(), &self.bn_running_mean),
            ("bn_running_var".into(), &self.bn_running_var),
            ("recon_w".into(), &self.recon_w),
            ("recon_b".into(), &self.recon_b),
            ("rel_hidden_w".into(), &self.rel_hidden_w),
            ("rel_hidden_b".into(), &self.rel_hidden_b),
            ("transform".into(), &self.transform),
            ("label_hidden_w".into(), &self.label_hidden_w),
            ("label_hidden_b".into(), &self.label_hidden_b),
            ("label_out_w".into(), &self.label_out_w),
            ("label_out_b".into(), &self.label_out_b),
            ("dom_hidden_w".into(), &self.dom_hidden_w),
            ("dom_hidden_b".into(), &self.dom_hidden_b),
            ("dom_out_w".into(), &self.dom_out_w),
            ("dom_out_b".into(), &self.dom_out_b),
        ];
        for (a, (w, b)) in self.rel_heads.iter().enumerate() {
            out.push((format!("rel_head_{a}_w"), w));
            out.push((format!("rel_head_{a}_b"), b));
        }
        out
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        match name {
            "embedding" => Some(&mut self.embedding),
            "conv_filters" => Some(&mut self.conv_filters),
            "conv_bias" => Some(&mut self.conv_bias),
            "bn_gamma" => Some(&mut self.bn_gamma),
            "bn_beta" => Some(&mut self.bn_beta),
            "bn_running_mean" => Some(&mut self.bn_running_mean),
            "bn_running_var" => Some(&mut self.bn_running_var),
            "recon_w" => Some(&mut self.recon_w),
            "recon_b" => Some(&mut self.recon_b),
            "rel_hidden_w" => Some(&mut self.rel_hidden_w),
            "rel_hidden_b" => Some(&mut self.rel_hidden_b),
            "transform" => Some(&mut self.transform),
            "label_hidden_w" => Some(&mut self.label_hidden_w),
            "label_hidden_b" => Some(&mut self.label_hidden_b),
            "label_out_w" => Some(&mut self.label_out_w),
            "label_out_b" => Some(&mut self.label_out_b),
            "dom_hidden_w" => Some(&mut self.dom_hidden_w),
            "dom_hidden_b" => Some(&mut self.dom_hidden_b),
            "dom_out_w" => Some(&mut self.dom_out_w),
            "dom_out_b" => Some(&mut self.dom_out_b),
            _ => {
                let rest = name.strip_prefix("rel_head_")?;
                let (idx, kind) = rest.split_once('_')?;
                let a: usize = idx.parse().ok()?;
                let head = self.rel_heads.get_mut(a)?;
                match kind {
                    "w" => Some(&mut head.0),
                    "b" => Some(&mut head.1),
                    _ => None,
                }
            }
        }
    }

    /// Domain-classifier parameters: the adversary's own weights.
    pub fn is_adversary(name: &str) -> bool {
        name.starts_with("dom_")
    }

    /// Batch-norm running statistics: checkpointed but never optimized.
    pub fn is_buffer(name: &str) -> bool {
        name.starts_with("bn_running_")
    }
}

/// A document prepared for the forward pass: encoded token ids, the source
/// label if available, and relevance entries per aspect index.
#[derive(Clone, Debug)]
pub struct PreparedDoc {
    pub id: String,
    pub origin: Origin,
    pub sentences: Vec<Vec<usize>>,
    pub source_label: Option<usize>,
    pub relevance: Vec<Vec<(usize, f64)>>,
}

impl PreparedDoc {
    /// Resolve a corpus document against the experiment's aspect list.
    /// `token_ids` must already be filled in by the vocabulary.
    pub fn from_document(doc: &Document, aspects: &[String], source_aspect: &str) -> Self {
        let relevance = aspects
            .iter()
            .map(|a| {
                doc.relevance
                    .get(a)
                    .map(|m| m.iter().map(|(&i, &r)| (i, r as f64)).collect())
                    .unwrap_or_default()
            })
            .collect();
        PreparedDoc {
            id: doc.id.clone(),
            origin: doc.origin,
            sentences: doc.token_ids.clone(),
            source_label: doc.labels.get(source_aspect).copied(),
            relevance,
        }
    }
}

/// Per-component loss values for one batch. `domain` is the adversary's own
/// cross-entropy; the reported overall objective subtracts `rho * domain`.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub relevance: f64,
    pub transform: f64,
    pub label: f64,
    pub domain: f64,
    pub rho: f64,
}

impl LossBreakdown {
    pub fn overall(&self) -> f64 {
        self.reconstruction + self.relevance + self.transform + self.label
            - self.rho * self.domain
    }

    pub fn components(&self) -> [(&'static str, f64); 5] {
        [
            ("reconstruction", self.reconstruction),
            ("relevance", self.relevance),
            ("transform", self.transform),
            ("label", self.label),
            ("domain", self.domain),
        ]
    }
}

/// Switches controlling one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOptions {
    pub mode: Mode,
    /// Adversarial strength fed to the gradient-reversal node.
    pub rho: f64,
    pub policy: AssignmentPolicy,
    pub aspect_pair: AspectPair,
    /// Remove the domain head from the graph entirely (diagnostic; the
    /// published ablation keeps the head and sets rho to zero instead).
    pub detach_adversary: bool,
    /// Uniform pooling weights and no relevance loss.
    pub disable_relevance: bool,
    /// Drop the reconstruction term.
    pub disable_reconstruction: bool,
    /// Keep the transformation frozen at the identity (the infinite-lambda
    /// surrogate: equivalent to removing the layer).
    pub freeze_transform: bool,
    /// Master seed for dropout mask derivation.
    pub dropout_seed: u64,
    /// Training step, mixed into dropout mask derivation.
    pub step: u64,
}

impl ForwardOptions {
    pub fn eval(aspect_pair: AspectPair, policy: AssignmentPolicy) -> Self {
        ForwardOptions {
            mode: Mode::Eval,
            rho: 0.0,
            policy,
            aspect_pair,
            detach_adversary: false,
            disable_relevance: false,
            disable_reconstruction: false,
            freeze_transform: false,
            dropout_seed: 0,
            step: 0,
        }
    }
}

/// Tape bindings for the parameters used by a forward pass.
pub struct ParamBinding {
    entries: Vec<(String, NodeId)>,
}

impl ParamBinding {
    pub fn entries(&self) -> &[(String, NodeId)] {
        &self.entries
    }

    pub fn node(&self, name: &str) -> Option<NodeId> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, id)| *id)
    }
}

/// Everything the trainer needs from one batch forward pass.
pub struct BatchForward {
    /// Scalar node to backpropagate: the structural joint objective.
    pub loss: NodeId,
    pub breakdown: LossBreakdown,
    /// Updated batch-norm running statistics (train mode only); commit
    /// happens at the optimizer step, never inside the forward pass.
    pub bn_delta: Option<BnDelta>,
    pub params: ParamBinding,
    /// Labeled source documents seen in this batch.
    pub labeled_count: usize,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-site dropout stream: a function of the master seed,
/// the step, and the site key only. Sites draw independently, so adding or
/// removing one site (e.g. detaching the domain head) never shifts the
/// masks of the others.
fn site_rng(seed: u64, step: u64, kind: u64, a: u64, b: u64) -> ChaCha8Rng {
    let k = splitmix64(seed ^ splitmix64(step ^ splitmix64(kind ^ splitmix64(a ^ splitmix64(b)))));
    ChaCha8Rng::seed_from_u64(k)
}

const SITE_WORDS: u64 = 1;
const SITE_LABEL: u64 = 2;
const SITE_DOMAIN: u64 = 3;

struct Bound {
    embedding: NodeId,
    conv_filters: NodeId,
    conv_bias: NodeId,
    bn_gamma: NodeId,
    bn_beta: NodeId,
    recon_w: NodeId,
    recon_b: NodeId,
    rel_hidden_w: NodeId,
    rel_hidden_b: NodeId,
    rel_heads: Vec<(NodeId, NodeId)>,
    transform: NodeId,
    label_hidden_w: NodeId,
    label_hidden_b: NodeId,
    label_out_w: NodeId,
    label_out_b: NodeId,
    dom: Option<(NodeId, NodeId, NodeId, NodeId)>,
    entries: Vec<(String, NodeId)>,
}

fn bind_params(
    tape: &mut Tape,
    params: &AanParameters,
    freeze_transform: bool,
    detach_adversary: bool,
) -> Bound {
    let mut entries = Vec::new();
    let mut bind = |tape: &mut Tape, name: &str, t: &Tensor, rg: bool| -> NodeId {
        let id = tape.leaf(t.clone(), rg);
        entries.push((name.to_string(), id));
        id
    };
    let embedding = bind(tape, "embedding", &params.embedding, true);
    let conv_filters = bind(tape, "conv_filters", &params.conv_filters, true);
    let conv_bias = bind(tape, "conv_bias", &params.conv_bias, true);
    let bn_gamma = bind(tape, "bn_gamma", &params.bn_gamma, true);
    let bn_beta = bind(tape, "bn_beta", &params.bn_beta, true);
    let recon_w = bind(tape, "recon_w", &params.recon_w, true);
    let recon_b = bind(tape, "recon_b", &params.recon_b, true);
    let rel_hidden_w = bind(tape, "rel_hidden_w", &params.rel_hidden_w, true);
    let rel_hidden_b = bind(tape, "rel_hidden_b", &params.rel_hidden_b, true);
    let rel_heads: Vec<(NodeId, NodeId)> = params
        .rel_heads
        .iter()
        .enumerate()
        .map(|(a, (w, b))| {
            (
                bind(tape, &format!("rel_head_{a}_w"), w, true),
                bind(tape, &format!("rel_head_{a}_b"), b, true),
            )
        })
        .collect();
    let transform = bind(tape, "transform", &params.transform, !freeze_transform);
    let label_hidden_w = bind(tape, "label_hidden_w", &params.label_hidden_w, true);
    let label_hidden_b = bind(tape, "label_hidden_b", &params.label_hidden_b, true);
    let label_out_w = bind(tape, "label_out_w", &params.label_out_w, true);
    let label_out_b = bind(tape, "label_out_b", &params.label_out_b, true);
    let dom = if detach_adversary {
        None
    } else {
        Some((
            bind(tape, "dom_hidden_w", &params.dom_hidden_w, true),
            bind(tape, "dom_hidden_b", &params.dom_hidden_b, true),
            bind(tape, "dom_out_w", &params.dom_out_w, true),
            bind(tape, "dom_out_b", &params.dom_out_b, true),
        ))
    };
    Bound {
        embedding,
        conv_filters,
        conv_bias,
        bn_gamma,
        bn_beta,
        recon_w,
        recon_b,
        rel_hidden_w,
        rel_hidden_b,
        rel_heads,
        transform,
        label_hidden_w,
        label_hidden_b,
        label_out_w,
        label_out_b,
        dom,
        entries,
    }
}

/// Word reconstruction: `tanh(h W + b)` applied to every convolution row.
pub fn reconstruct_rows(
    tape: &mut Tape,
    h: NodeId,
    recon_w: NodeId,
    recon_b: NodeId,
) -> Result<NodeId> {
    let lin = tape.matmul(h, recon_w)?;
    let aff = tape.add_bias(lin, recon_b)?;
    Ok(tape.tanh_op(aff))
}

/// Relevance scores for every row of `x_sen`: shared hidden layer, then the
/// aspect's output head, both ReLU. Returns an `[N x 1]` column.
pub fn relevance_scores(
    tape: &mut Tape,
    x_sen: NodeId,
    rel_hidden_w: NodeId,
    rel_hidden_b: NodeId,
    head: (NodeId, NodeId),
    clamp: bool,
) -> Result<NodeId> {
    let lin = tape.matmul(x_sen, rel_hidden_w)?;
    let aff = tape.add_bias(lin, rel_hidden_b)?;
    let hid = tape.relu(aff);
    let out_lin = tape.matmul(hid, head.0)?;
    let out_aff = tape.add_bias(out_lin, head.1)?;
    let score = tape.relu(out_aff);
    Ok(if clamp {
        tape.clamp_upper(score, 1.0)
    } else {
        score
    })
}

/// Joint forward pass over one mini-batch.
///
/// Labeled source documents feed the label loss; every document feeds
/// reconstruction and (through the policy's document/aspect pairs) the
/// domain loss; relevance entries of all aspects feed the relevance loss.
pub fn joint_loss(
    tape: &mut Tape,
    params: &AanParameters,
    hyper: &HyperParams,
    batch: &[PreparedDoc],
    opts: &ForwardOptions,
) -> Result<BatchForward> {
    hyper.validate()?;
    if batch.is_empty() {
        return Err(Error::Contract("joint_loss: empty batch".into()));
    }
    for doc in batch {
        if doc.sentences.is_empty() || doc.sentences.iter().any(|s| s.is_empty()) {
            return Err(Error::Contract(format!(
                "joint_loss: document {:?} has an empty sentence",
                doc.id
            )));
        }
    }
    let bound = bind_params(tape, params, opts.freeze_transform, opts.detach_adversary);

    // ---- sentence encoder over the whole batch ----
    let mut clean_embeds: Vec<NodeId> = Vec::new();
    let mut conv_rows: Vec<NodeId> = Vec::new();
    let mut sent_lens: Vec<usize> = Vec::new();
    let mut doc_sent_offset: Vec<usize> = Vec::new();
    let mut doc_token_offset: Vec<usize> = Vec::new();
    let mut sent_count = 0usize;
    let mut token_count = 0usize;
    for (di, doc) in batch.iter().enumerate() {
        doc_sent_offset.push(sent_count);
        doc_token_offset.push(token_count);
        for (si, sentence) in doc.sentences.iter().enumerate() {
            let clean = tape.embed(bound.embedding, sentence)?;
            let mut rng = site_rng(opts.dropout_seed, opts.step, SITE_WORDS, di as u64, si as u64);
            let dropped = tape.dropout(clean, hyper.dropout, opts.mode, &mut rng)?;
            let h = tape.conv1d_seq(dropped, bound.conv_filters, bound.conv_bias, hyper.conv_window)?;
            clean_embeds.push(clean);
            conv_rows.push(h);
            sent_lens.push(sentence.len());
            sent_count += 1;
            token_count += sentence.len();
        }
    }

    // Batch norm over every convolution row in the batch, then ReLU and
    // per-sentence pooling.
    let h_all = tape.concat_rows(&conv_rows)?;
    let (normed, bn_delta) = tape.batch_norm(
        h_all,
        bound.bn_gamma,
        bound.bn_beta,
        &params.bn_running_mean,
        &params.bn_running_var,
        opts.mode,
    )?;
    let activated = tape.relu(normed);
    let mut sent_vecs: Vec<NodeId> = Vec::with_capacity(sent_count);
    let mut row_at = 0usize;
    for &len in &sent_lens {
        let rows = tape.slice_rows(activated, row_at, len)?;
        let pooled = match hyper.pooling {
            Pooling::Max => tape.max_pool_rows(rows)?,
            Pooling::Mean => tape.mean_rows(rows)?,
        };
        sent_vecs.push(pooled);
        row_at += len;
    }

    // ---- reconstruction ----
    let mut breakdown = LossBreakdown {
        rho: opts.rho,
        ..Default::default()
    };
    let mut terms: Vec<NodeId> = Vec::new();
    if !opts.disable_reconstruction {
        let xhat_all = reconstruct_rows(tape, h_all, bound.recon_w, bound.recon_b)?;
        let clean_all = tape.concat_rows(&clean_embeds)?;
        let target_all = tape.tanh_op(clean_all);
        let mut doc_terms = Vec::with_capacity(batch.len());
        for (di, doc) in batch.iter().enumerate() {
            let n: usize = doc.sentences.iter().map(|s| s.len()).sum();
            let xh = tape.slice_rows(xhat_all, doc_token_offset[di], n)?;
            let tg = tape.slice_rows(target_all, doc_token_offset[di], n)?;
            let se = tape.squared_error(xh, tg)?;
            doc_terms.push(tape.scale(se, 1.0 / n as f64));
        }
        let rec = tape.sum_scalars(&doc_terms)?;
        breakdown.reconstruction = tape.value(rec).item();
        terms.push(rec);
    }

    // ---- relevance scoring ----
    let x_sen_all = tape.stack_rows(&sent_vecs)?;
    let mut rel_cols: Vec<NodeId> = Vec::new();
    if !opts.disable_relevance {
        let mut rel_terms: Vec<NodeId> = Vec::new();
        for (a, head) in bound.rel_heads.iter().enumerate() {
            let col = relevance_scores(
                tape,
                x_sen_all,
                bound.rel_hidden_w,
                bound.rel_hidden_b,
                *head,
                hyper.clamp_relevance,
            )?;
            rel_cols.push(col);
            // Gather this aspect's labeled sentences across the batch.
            let mut rows = Vec::new();
            let mut targets = Vec::new();
            for (di, doc) in batch.iter().enumerate() {
                if let Some(entries) = doc.relevance.get(a) {
                    for &(si, r) in entries {
                        if si >= doc.sentences.len() {
                            return Err(Error::Contract(format!(
                                "relevance entry for missing sentence {si} in {:?}",
                                doc.id
                            )));
                        }
                        rows.push(doc_sent_offset[di] + si);
                        targets.push(r);
                    }
                }
            }
            if !rows.is_empty() {
                let scores = tape.gather_rows(col, &rows)?;
                let t = Tensor::new(vec![targets.len(), 1], targets)?;
                let tnode = tape.constant(t);
                rel_terms.push(tape.squared_error(scores, tnode)?);
            }
        }
        if !rel_terms.is_empty() {
            let rel = tape.sum_scalars(&rel_terms)?;
            breakdown.relevance = tape.value(rel).item();
            terms.push(rel);
        }
    }

    // ---- document encodings per (document, aspect) pair ----
    let pair_aspects: Vec<Vec<usize>> = batch
        .iter()
        .map(|doc| match opts.policy {
            AssignmentPolicy::Paired => vec![opts.aspect_pair.source, opts.aspect_pair.target],
            AssignmentPolicy::ByOrigin => match doc.origin {
                Origin::Source => vec![opts.aspect_pair.source],
                Origin::Target => vec![opts.aspect_pair.target],
            },
        })
        .collect();

    let mut pair_index: Vec<(usize, usize)> = Vec::new(); // (doc, aspect)
    let mut doc_vecs: Vec<NodeId> = Vec::new();
    for (di, doc) in batch.iter().enumerate() {
        let s = doc.sentences.len();
        let x_d = tape.slice_rows(x_sen_all, doc_sent_offset[di], s)?;
        for &a in &pair_aspects[di] {
            let pooled = if opts.disable_relevance {
                tape.mean_rows(x_d)?
            } else {
                let col = tape.slice_rows(rel_cols[a], doc_sent_offset[di], s)?;
                let w = tape.reshape(col, vec![s])?;
                if tape.value(w).sum() < 1e-6 {
                    // All scores vanished: fall back to uniform weights.
                    tape.mean_rows(x_d)?
                } else {
                    tape.weighted_sum_rows(x_d, w)?
                }
            };
            pair_index.push((di, a));
            doc_vecs.push(pooled);
        }
    }
    let x_doc_all = tape.stack_rows(&doc_vecs)?;
    let x_tr_all = tape.matmul(x_doc_all, bound.transform)?;

    // ---- transformation regularizer ----
    let frob = tape.frob_dev_from_identity(bound.transform)?;
    let omega = tape.scale(frob, hyper.lambda_tr);
    breakdown.transform = tape.value(omega).item();
    terms.push(omega);

    // ---- label classifier on labeled source-aspect encodings ----
    let mut label_rows = Vec::new();
    let mut label_onehots = Vec::new();
    for (pi, &(di, a)) in pair_index.iter().enumerate() {
        if a != opts.aspect_pair.source {
            continue;
        }
        if let Some(y) = batch[di].source_label {
            if y >= hyper.num_classes {
                return Err(Error::Contract(format!(
                    "label {y} out of range for {} classes",
                    hyper.num_classes
                )));
            }
            label_rows.push(pi);
            label_onehots.push(y);
        }
    }
    let labeled_count = label_rows.len();
    if labeled_count > 0 {
        let x = tape.gather_rows(x_tr_all, &label_rows)?;
        let mut rng = site_rng(opts.dropout_seed, opts.step, SITE_LABEL, 0, 0);
        let x = tape.dropout(x, hyper.dropout, opts.mode, &mut rng)?;
        let h1 = tape.matmul(x, bound.label_hidden_w)?;
        let h1 = tape.add_bias(h1, bound.label_hidden_b)?;
        let h1 = tape.relu(h1);
        let o = tape.matmul(h1, bound.label_out_w)?;
        let o = tape.add_bias(o, bound.label_out_b)?;
        let p = tape.softmax_rows(o);
        let mut y = Tensor::zeros(vec![labeled_count, hyper.num_classes]);
        for (r, &cls) in label_onehots.iter().enumerate() {
            *y.at_mut(r, cls) = 1.0;
        }
        let lab = tape.cross_entropy(p, y)?;
        breakdown.label = tape.value(lab).item();
        terms.push(lab);
    }

    // ---- domain classifier behind gradient reversal ----
    if let Some((dw1, db1, dw2, db2)) = bound.dom {
        let rev = tape.grad_reverse(x_tr_all, opts.rho);
        let mut rng = site_rng(opts.dropout_seed, opts.step, SITE_DOMAIN, 0, 0);
        let x = tape.dropout(rev, hyper.dropout, opts.mode, &mut rng)?;
        let h1 = tape.matmul(x, dw1)?;
        let h1 = tape.add_bias(h1, db1)?;
        let h1 = tape.relu(h1);
        let o = tape.matmul(h1, dw2)?;
        let o = tape.add_bias(o, db2)?;
        let q = tape.softmax_rows(o);
        let mut y = Tensor::zeros(vec![pair_index.len(), 2]);
        for (r, &(_, a)) in pair_index.iter().enumerate() {
            let k = if a == opts.aspect_pair.source { 0 } else { 1 };
            *y.at_mut(r, k) = 1.0;
        }
        let dom = tape.cross_entropy(q, y)?;
        breakdown.domain = tape.value(dom).item();
        terms.push(dom);
    }

    let loss = tape.sum_scalars(&terms)?;
    Ok(BatchForward {
        loss,
        breakdown,
        bn_delta,
        params: ParamBinding { entries: bound.entries },
        labeled_count,
    })
}

/// Aspect-dependent evaluation encoding of one document (no dropout,
/// running batch-norm statistics).
#[derive(Clone, Debug)]
pub struct EncodedDocument {
    /// One row per sentence.
    pub sentence_vectors: Tensor,
    /// Relevance scores per sentence (empty when the scorer is disabled).
    pub relevance: Vec<f64>,
    pub doc_vector: Vec<f64>,
    pub transformed: Vec<f64>,
    /// True when all scores vanished and uniform pooling was used.
    pub uniform_fallback: bool,
}

/// Encode one document under the given aspect in eval mode.
pub fn encode_document(
    params: &AanParameters,
    hyper: &HyperParams,
    sentences: &[Vec<usize>],
    aspect: usize,
    disable_relevance: bool,
) -> Result<EncodedDocument> {
    if sentences.is_empty() || sentences.iter().any(|s| s.is_empty()) {
        return Err(Error::Contract("encode_document: empty document".into()));
    }
    if aspect >= params.num_aspects() {
        return Err(Error::Config(format!(
            "aspect index {aspect} out of range for {} heads",
            params.num_aspects()
        )));
    }
    let mut tape = Tape::new();
    let bound = bind_params(&mut tape, params, true, true);
    let mut sent_vecs = Vec::new();
    let mut lens = Vec::new();
    let mut rows = Vec::new();
    for sentence in sentences {
        let x = tape.embed(bound.embedding, sentence)?;
        let h = tape.conv1d_seq(x, bound.conv_filters, bound.conv_bias, hyper.conv_window)?;
        rows.push(h);
        lens.push(sentence.len());
    }
    let h_all = tape.concat_rows(&rows)?;
    let (normed, _) = tape.batch_norm(
        h_all,
        bound.bn_gamma,
        bound.bn_beta,
        &params.bn_running_mean,
        &params.bn_running_var,
        Mode::Eval,
    )?;
    let activated = tape.relu(normed);
    let mut at = 0;
    for &len in &lens {
        let slice = tape.slice_rows(activated, at, len)?;
        let pooled = match hyper.pooling {
            Pooling::Max => tape.max_pool_rows(slice)?,
            Pooling::Mean => tape.mean_rows(slice)?,
        };
        sent_vecs.push(pooled);
        at += len;
    }
    let x_sen = tape.stack_rows(&sent_vecs)?;

    let (relevance, pooled, fallback) = if disable_relevance {
        let m = tape.mean_rows(x_sen)?;
        (Vec::new(), m, true)
    } else {
        let col = relevance_scores(
            &mut tape,
            x_sen,
            bound.rel_hidden_w,
            bound.rel_hidden_b,
            bound.rel_heads[aspect],
            hyper.clamp_relevance,
        )?;
        let scores: Vec<f64> = tape.value(col).data().to_vec();
        if scores.iter().sum::<f64>() < 1e-6 {
            let m = tape.mean_rows(x_sen)?;
            (scores, m, true)
        } else {
            let w = tape.reshape(col, vec![sentences.len()])?;
            let p = tape.weighted_sum_rows(x_sen, w)?;
            (scores, p, false)
        }
    };
    let doc_vec = tape.value(pooled).data().to_vec();
    let doc_mat = tape.reshape(pooled, vec![1, hyper.conv_features])?;
    let tr = tape.matmul(doc_mat, bound.transform)?;
    let transformed = tape.value(tr).data().to_vec();
    Ok(EncodedDocument {
        sentence_vectors: tape.value(x_sen).clone(),
        relevance,
        doc_vector: doc_vec,
        transformed,
        uniform_fallback: fallback,
    })
}

/// Evaluate one sentence in eval mode; returns the pooled sentence vector
/// and the raw convolution rows.
pub fn encode_sentence(
    params: &AanParameters,
    hyper: &HyperParams,
    tokens: &[usize],
) -> Result<(Vec<f64>, Tensor)> {
    if tokens.is_empty() {
        return Err(Error::Contract("encode_sentence: empty sentence".into()));
    }
    let mut tape = Tape::new();
    let bound = bind_params(&mut tape, params, true, true);
    let x = tape.embed(bound.embedding, tokens)?;
    let h = tape.conv1d_seq(x, bound.conv_filters, bound.conv_bias, hyper.conv_window)?;
    let (normed, _) = tape.batch_norm(
        h,
        bound.bn_gamma,
        bound.bn_beta,
        &params.bn_running_mean,
        &params.bn_running_var,
        Mode::Eval,
    )?;
    let act = tape.relu(normed);
    let pooled = match hyper.pooling {
        Pooling::Max => tape.max_pool_rows(act)?,
        Pooling::Mean => tape.mean_rows(act)?,
    };
    Ok((tape.value(pooled).data().to_vec(), tape.value(h).clone()))
}

/// Class probabilities for a transformed document vector (eval mode).
pub fn predict_probs(params: &AanParameters, transformed: &[f64]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(1, transformed.len(), transformed.to_vec())?);
    let w1 = tape.constant(params.label_hidden_w.clone());
    let b1 = tape.constant(params.label_hidden_b.clone());
    let w2 = tape.constant(params.label_out_w.clone());
    let b2 = tape.constant(params.label_out_b.clone());
    let h = tape.matmul(x, w1)?;
    let h = tape.add_bias(h, b1)?;
    let h = tape.relu(h);
    let o = tape.matmul(h, w2)?;
    let o = tape.add_bias(o, b2)?;
    let p = tape.softmax_rows(o);
    Ok(tape.value(p).data().to_vec())
}

/// Domain probabilities for a transformed document vector (eval mode).
pub fn domain_probs(params: &AanParameters, transformed: &[f64]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(1, transformed.len(), transformed.to_vec())?);
    let w1 = tape.constant(params.dom_hidden_w.clone());
    let b1 = tape.constant(params.dom_hidden_b.clone());
    let w2 = tape.constant(params.dom_out_w.clone());
    let b2 = tape.constant(params.dom_out_b.clone());
    let h = tape.matmul(x, w1)?;
    let h = tape.add_bias(h, b1)?;
    let h = tape.relu(h);
    let o = tape.matmul(h, w2)?;
    let o = tape.add_bias(o, b2)?;
    let q = tape.softmax_rows(o);
    Ok(tape.value(q).data().to_vec())
}
