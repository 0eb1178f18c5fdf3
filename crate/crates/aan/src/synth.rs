//! Seeded synthetic aspect-transfer corpora.
//!
//! Every generated document talks about both aspects: for each aspect it
//! contains one sentence holding an aspect name token plus polarity tokens
//! drawn from that aspect's class vocabulary, and the remaining sentences
//! are filler. The aspect name tokens double as the keyword rules, so the
//! relevance ground truth of a generated corpus is recoverable from the
//! tokens alone.
//!
//! Two knobs shape the transfer problem:
//!
//! - `polarity_overlap` (omega): the fraction of each polarity vocabulary
//!   shared verbatim between the two aspects. Shared tokens are the anchors
//!   that make aligning the two aspects' encodings possible at all.
//! - `label_correlation` (kappa): Pearson correlation between the two
//!   aspects' document labels. Zero models aspects with unrelated answers;
//!   near one models review-style data where aspect labels mostly agree.
//!
//! Generation is a pure function of the seed.

use crate::corpus::{AspectRuleSet, Document, Origin};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Source-labeled training documents.
    pub train_docs: usize,
    /// Unlabeled documents (target origin).
    pub unlabeled_docs: usize,
    /// Held-out test documents, labeled on both aspects.
    pub test_docs: usize,
    /// Inclusive range of sentences per document; at least 2 (one per aspect).
    pub sentences_min: usize,
    pub sentences_max: usize,
    /// Name-token variants per aspect (these become the keyword rules).
    pub name_tokens: usize,
    /// Polarity tokens per (aspect, class) vocabulary.
    pub polarity_tokens: usize,
    /// Polarity tokens drawn into each aspect sentence.
    pub polarity_per_sentence: usize,
    /// Fraction of each polarity vocabulary shared across aspects (omega).
    pub polarity_overlap: f64,
    /// Distractor aspects: filler sentences each carry one distractor
    /// aspect's name token, so keyword rules give every sentence a
    /// relevance label (as in reports where most sentences mention some
    /// aspect). Zero means plain unlabeled filler.
    pub distractor_aspects: usize,
    /// Filler vocabulary size.
    pub filler_vocab: usize,
    /// Inclusive range of tokens per filler sentence.
    pub filler_len_min: usize,
    pub filler_len_max: usize,
    /// Pearson correlation between the two aspects' labels (kappa).
    pub label_correlation: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            train_docs: 2000,
            unlabeled_docs: 2000,
            test_docs: 500,
            sentences_min: 3,
            sentences_max: 6,
            name_tokens: 3,
            polarity_tokens: 10,
            polarity_per_sentence: 2,
            polarity_overlap: 0.3,
            distractor_aspects: 3,
            filler_vocab: 50,
            filler_len_min: 3,
            filler_len_max: 6,
            label_correlation: 0.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.polarity_overlap) {
            return Err(Error::Config(format!(
                "polarity overlap {} outside [0, 1]",
                self.polarity_overlap
            )));
        }
        if !(-1.0..=1.0).contains(&self.label_correlation) {
            return Err(Error::Config(format!(
                "label correlation {} outside [-1, 1]",
                self.label_correlation
            )));
        }
        if self.sentences_min < 2 || self.sentences_max < self.sentences_min {
            return Err(Error::Config(
                "need at least 2 sentences per document (one per aspect)".into(),
            ));
        }
        if self.train_docs == 0 || self.test_docs == 0 {
            return Err(Error::Config("need train and test documents".into()));
        }
        if self.name_tokens == 0 || self.polarity_tokens == 0 || self.polarity_per_sentence == 0 {
            return Err(Error::Config(
                "name/polarity token counts must be positive".into(),
            ));
        }
        if self.filler_vocab == 0 || self.filler_len_min == 0 {
            return Err(Error::Config("filler vocabulary must be non-empty".into()));
        }
        if self.filler_len_max < self.filler_len_min {
            return Err(Error::Config("filler length range is inverted".into()));
        }
        Ok(())
    }
}

/// Token pools for one generated corpus.
struct TokenPools {
    names: [Vec<String>; 2],
    /// Per aspect; shared tokens appear in both aspects' lists.
    positive: [Vec<String>; 2],
    negative: [Vec<String>; 2],
    distractor_names: Vec<Vec<String>>,
    filler: Vec<String>,
}

fn build_pools(spec: &SynthSpec) -> TokenPools {
    let p = spec.polarity_tokens;
    let shared = ((spec.polarity_overlap * p as f64).round() as usize).min(p);
    let specific = p - shared;

    let mk = |prefix: &str, n: usize| -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    };
    let shared_pos = mk("shared_pos", shared);
    let shared_neg = mk("shared_neg", shared);
    let mut positive = [Vec::new(), Vec::new()];
    let mut negative = [Vec::new(), Vec::new()];
    for a in 0..2 {
        positive[a] = shared_pos.clone();
        positive[a].extend(mk(&format!("aspect{a}_pos"), specific));
        negative[a] = shared_neg.clone();
        negative[a].extend(mk(&format!("aspect{a}_neg"), specific));
    }
    TokenPools {
        names: [
            mk("aspect0_name", spec.name_tokens),
            mk("aspect1_name", spec.name_tokens),
        ],
        positive,
        negative,
        distractor_names: (0..spec.distractor_aspects)
            .map(|d| mk(&format!("distractor{d}_name"), spec.name_tokens))
            .collect(),
        filler: mk("filler", spec.filler_vocab),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SynthSummary {
    pub train_docs: usize,
    pub unlabeled_docs: usize,
    pub test_docs: usize,
    /// Fraction of positive labels per aspect, over all generated documents.
    pub label_balance: [f64; 2],
    /// Empirical Pearson correlation between the two aspects' labels.
    pub measured_correlation: f64,
}

pub struct SynthCorpus {
    pub train: Vec<Document>,
    pub unlabeled: Vec<Document>,
    pub test: Vec<Document>,
    pub rules: AspectRuleSet,
    pub summary: SynthSummary,
}

/// Names of the two generated aspects, in rule-set order.
pub const ASPECTS: [&str; 2] = ["aspect0", "aspect1"];

fn gen_labels(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> (usize, usize) {
    let y0 = rng.gen_bool(0.5) as usize;
    let agree = (1.0 + spec.label_correlation) / 2.0;
    let y1 = if rng.gen_bool(agree) { y0 } else { 1 - y0 };
    (y0, y1)
}

fn gen_document(
    spec: &SynthSpec,
    pools: &TokenPools,
    id: String,
    origin: Origin,
    labels: BTreeMap<String, usize>,
    y: (usize, usize),
    rng: &mut ChaCha8Rng,
) -> Document {
    let ys = [y.0, y.1];
    let mut sentences: Vec<Vec<String>> = Vec::new();
    for a in 0..2 {
        let pool = if ys[a] == 1 {
            &pools.positive[a]
        } else {
            &pools.negative[a]
        };
        let mut toks = vec![pools.names[a].choose(rng).unwrap().clone()];
        for _ in 0..spec.polarity_per_sentence {
            toks.push(pool.choose(rng).unwrap().clone());
        }
        toks.shuffle(rng);
        sentences.push(toks);
    }
    let total = rng.gen_range(spec.sentences_min..=spec.sentences_max);
    for _ in 2..total {
        let len = rng.gen_range(spec.filler_len_min..=spec.filler_len_max);
        let mut toks: Vec<String> = (0..len)
            .map(|_| pools.filler.choose(rng).unwrap().clone())
            .collect();
        if !pools.distractor_names.is_empty() {
            let d = pools.distractor_names.choose(rng).unwrap();
            toks[0] = d.choose(rng).unwrap().clone();
            toks.shuffle(rng);
        }
        sentences.push(toks);
    }
    sentences.shuffle(rng);
    Document {
        id,
        origin,
        sentences,
        token_ids: Vec::new(),
        labels,
        relevance: BTreeMap::new(),
    }
}

/// Generate a synthetic corpus. Training documents carry labels for
/// `aspect0` only (the conventional source aspect); test documents carry
/// both aspects' labels so in-aspect and transfer accuracy are both
/// measurable; unlabeled documents carry none.
pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let pools = build_pools(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut all_labels: Vec<(usize, usize)> = Vec::new();
    let make_split = |n: usize,
                          prefix: &str,
                          origin: Origin,
                          label_mode: u8,
                          rng: &mut ChaCha8Rng,
                          all_labels: &mut Vec<(usize, usize)>|
     -> Vec<Document> {
        (0..n)
            .map(|i| {
                let y = gen_labels(spec, rng);
                all_labels.push(y);
                let labels = match label_mode {
                    1 => BTreeMap::from([(ASPECTS[0].to_string(), y.0)]),
                    2 => BTreeMap::from([
                        (ASPECTS[0].to_string(), y.0),
                        (ASPECTS[1].to_string(), y.1),
                    ]),
                    _ => BTreeMap::new(),
                };
                gen_document(
                    spec,
                    &pools,
                    format!("{prefix}-{i:05}"),
                    origin,
                    labels,
                    y,
                    rng,
                )
            })
            .collect()
    };

    let train = make_split(
        spec.train_docs,
        "train",
        Origin::Source,
        1,
        &mut rng,
        &mut all_labels,
    );
    let unlabeled = make_split(
        spec.unlabeled_docs,
        "unlab",
        Origin::Target,
        0,
        &mut rng,
        &mut all_labels,
    );
    let test = make_split(
        spec.test_docs,
        "test",
        Origin::Target,
        2,
        &mut rng,
        &mut all_labels,
    );

    let mut aspects: Vec<String> = ASPECTS.iter().map(|s| s.to_string()).collect();
    let mut keywords = BTreeMap::from([
        (ASPECTS[0].to_string(), pools.names[0].clone()),
        (ASPECTS[1].to_string(), pools.names[1].clone()),
    ]);
    for (d, names) in pools.distractor_names.iter().enumerate() {
        let name = format!("distractor{d}");
        aspects.push(name.clone());
        keywords.insert(name, names.clone());
    }
    let rules = AspectRuleSet { aspects, keywords };

    let summary = SynthSummary {
        train_docs: train.len(),
        unlabeled_docs: unlabeled.len(),
        test_docs: test.len(),
        label_balance: [
            mean(all_labels.iter().map(|y| y.0 as f64)),
            mean(all_labels.iter().map(|y| y.1 as f64)),
        ],
        measured_correlation: pearson(&all_labels),
    };

    Ok(SynthCorpus { train, unlabeled, test, rules, summary })
}

fn mean(vals: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in vals {
        s += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn pearson(pairs: &[(usize, usize)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let m0 = pairs.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let m1 = pairs.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut v0 = 0.0;
    let mut v1 = 0.0;
    for &(a, b) in pairs {
        let (da, db) = (a as f64 - m0, b as f64 - m1);
        cov += da * db;
        v0 += da * da;
        v1 += db * db;
    }
    if v0 == 0.0 || v1 == 0.0 {
        return 0.0;
    }
    cov / (v0 * v1).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::apply_rules;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            train_docs: 60,
            unlabeled_docs: 40,
            test_docs: 20,
            seed: 7,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = small_spec();
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        for (x, y) in a.train.iter().zip(b.train.iter()) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.sentences, y.sentences);
            assert_eq!(x.labels, y.labels);
        }
        assert_eq!(
            a.summary.measured_correlation,
            b.summary.measured_correlation
        );
    }

    #[test]
    fn labels_match_embedded_polarity_tokens() {
        // A decoder that only reads tokens must recover the labels.
        let corpus = generate(&small_spec()).unwrap();
        for doc in corpus.test.iter() {
            for (a, aspect) in ASPECTS.iter().enumerate() {
                let label = doc.labels[*aspect];
                let name_prefix = format!("aspect{a}_name");
                let sentence = doc
                    .sentences
                    .iter()
                    .find(|s| s.iter().any(|t| t.starts_with(&name_prefix)))
                    .expect("aspect sentence present");
                for tok in sentence.iter().filter(|t| !t.starts_with(&name_prefix)) {
                    let positive = tok.contains("_pos");
                    let negative = tok.contains("_neg");
                    assert!(positive ^ negative, "unexpected token {tok}");
                    assert_eq!(positive, label == 1, "token {tok} vs label {label}");
                }
            }
        }
    }

    #[test]
    fn every_document_has_a_relevant_sentence_per_aspect() {
        let corpus = generate(&small_spec()).unwrap();
        let rules = corpus.rules.clone();
        for mut doc in corpus.train.into_iter().take(30) {
            for aspect in ASPECTS {
                apply_rules(&mut doc, &rules, aspect).unwrap();
                let positives = doc.relevance[aspect].values().filter(|&&r| r == 1).count();
                assert!(positives >= 1, "doc {} lacks {aspect} sentence", doc.id);
            }
        }
    }

    #[test]
    fn label_splits_follow_the_contract() {
        let corpus = generate(&small_spec()).unwrap();
        assert!(corpus.train.iter().all(|d| d.labels.len() == 1
            && d.labels.contains_key(ASPECTS[0])
            && d.origin == Origin::Source));
        assert!(corpus
            .unlabeled
            .iter()
            .all(|d| d.labels.is_empty() && d.origin == Origin::Target));
        assert!(corpus
            .test
            .iter()
            .all(|d| d.labels.len() == 2 && d.origin == Origin::Target));
    }

    #[test]
    fn measured_correlation_tracks_spec() {
        for kappa in [0.0, 0.9, -0.5] {
            let spec = SynthSpec {
                train_docs: 1500,
                unlabeled_docs: 0,
                test_docs: 500,
                label_correlation: kappa,
                seed: 11,
                ..SynthSpec::default()
            };
            let corpus = generate(&spec).unwrap();
            assert!(
                (corpus.summary.measured_correlation - kappa).abs() < 0.08,
                "kappa {kappa} measured {}",
                corpus.summary.measured_correlation
            );
        }
    }

    #[test]
    fn full_overlap_gives_identical_polarity_vocabularies() {
        let spec = SynthSpec {
            polarity_overlap: 1.0,
            ..small_spec()
        };
        let pools = build_pools(&spec);
        assert_eq!(pools.positive[0], pools.positive[1]);
        assert_eq!(pools.negative[0], pools.negative[1]);
        // And zero overlap shares nothing.
        let none = build_pools(&SynthSpec {
            polarity_overlap: 0.0,
            ..small_spec()
        });
        assert!(none.positive[0]
            .iter()
            .all(|t| !none.positive[1].contains(t)));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut bad = small_spec();
        bad.polarity_overlap = 1.2;
        assert!(matches!(generate(&bad), Err(Error::Config(_))));

        let mut bad = small_spec();
        bad.label_correlation = -1.5;
        assert!(matches!(generate(&bad), Err(Error::Config(_))));

        let mut bad = small_spec();
        bad.sentences_min = 1;
        bad.sentences_max = 1;
        assert!(matches!(generate(&bad), Err(Error::Config(_))));
    }
}
