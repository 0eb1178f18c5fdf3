//! Corpus ingestion: JSON-lines documents, vocabulary, keyword-rule
//! relevance labeling, and balanced mini-batching.
//!
//! A corpus file is UTF-8 JSON lines, one object per document:
//! `{"id": str, "origin": "source"|"target", "sentences": [str],
//! "labels": {aspect: class}?}`. Sentence boundaries come from the input
//! records; tokenization lowercases and splits on non-word characters.
//!
//! Relevance labels are never stored in corpus files. They are derived from
//! an [`AspectRuleSet`] by [`apply_rules`]: a sentence containing a keyword
//! of the focal aspect is labeled 1 (even if other aspects' keywords are
//! also present), a sentence containing only other aspects' keywords is
//! labeled 0, and a sentence with no keywords gets no label at all.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Reserved vocabulary id for padding.
pub const PAD_ID: usize = 0;
/// Reserved vocabulary id for out-of-vocabulary tokens.
pub const UNK_ID: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Source,
    Target,
}

/// A tokenized document. `token_ids` is parallel to `sentences` and is
/// filled in by [`Vocabulary::encode`].
#[derive(Clone, Debug)]
pub struct Document {
    pub id: String,
    pub origin: Origin,
    pub sentences: Vec<Vec<String>>,
    pub token_ids: Vec<Vec<usize>>,
    /// Aspect name -> class index, for the aspects this document is labeled on.
    pub labels: BTreeMap<String, usize>,
    /// Aspect name -> sentence index -> binary relevance, derived from rules.
    pub relevance: BTreeMap<String, BTreeMap<usize, u8>>,
}

impl Document {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.len()).sum()
    }
}

/// Wire format for one corpus line.
#[derive(Serialize, Deserialize)]
struct DocumentRecord {
    id: String,
    origin: Origin,
    sentences: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<BTreeMap<String, usize>>,
}

/// Lowercase and split on any character that is not alphanumeric or '_'.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Token <-> id map with reserved padding/unknown slots. Ids are dense in
/// `[0, size)` and assigned in first-appearance order, so building from the
/// same documents always yields the same vocabulary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    #[serde(skip)]
    token_to_id: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn build<'a>(docs: impl IntoIterator<Item = &'a Document>) -> Self {
        let mut v = Vocabulary {
            id_to_token: vec!["<pad>".into(), "<unk>".into()],
            token_to_id: BTreeMap::new(),
        };
        for doc in docs {
            for sentence in &doc.sentences {
                for tok in sentence {
                    if !v.token_to_id.contains_key(tok) {
                        v.token_to_id.insert(tok.clone(), v.id_to_token.len());
                        v.id_to_token.push(tok.clone());
                    }
                }
            }
        }
        v
    }

    fn rebuild_index(&mut self) {
        self.token_to_id = self
            .id_to_token
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    /// Id of a token; unknown tokens map to [`UNK_ID`].
    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    /// Fill `token_ids` for every document.
    pub fn encode(&self, docs: &mut [Document]) {
        for doc in docs {
            doc.token_ids = doc
                .sentences
                .iter()
                .map(|s| s.iter().map(|t| self.id(t)).collect())
                .collect();
        }
    }

    /// Content hash of the vocabulary (order-sensitive).
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for tok in &self.id_to_token {
            hasher.update(tok.as_bytes());
            hasher.update([0u8]);
        }
        hex_digest(hasher)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        serde_json::to_writer(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let mut v: Vocabulary = serde_json::from_reader(BufReader::new(file))?;
        v.rebuild_index();
        Ok(v)
    }
}

fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// SHA-256 of a file's bytes, hex-encoded.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex_digest(hasher))
}

/// Result of loading one corpus file.
#[derive(Debug)]
pub struct LoadedCorpus {
    pub documents: Vec<Document>,
    /// Documents dropped because they had no non-empty sentences.
    pub skipped_empty: usize,
}

/// Parse a corpus file into tokenized documents (no ids assigned yet).
pub fn load_documents(path: &Path) -> Result<LoadedCorpus> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut documents: Vec<Document> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut skipped_empty = 0;

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DocumentRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::Parse {
                line: lineno,
                message: format!("duplicate document id {:?}", record.id),
            });
        }
        let sentences: Vec<Vec<String>> = record
            .sentences
            .iter()
            .map(|s| tokenize(s))
            .filter(|toks| !toks.is_empty())
            .collect();
        if sentences.is_empty() {
            skipped_empty += 1;
            continue;
        }
        documents.push(Document {
            id: record.id,
            origin: record.origin,
            sentences,
            token_ids: Vec::new(),
            labels: record.labels.unwrap_or_default(),
            relevance: BTreeMap::new(),
        });
    }
    Ok(LoadedCorpus { documents, skipped_empty })
}

/// Load a corpus and build its vocabulary from the same file. Use
/// [`load_documents`] plus [`Vocabulary::encode`] when the vocabulary must
/// come from a different (training) split.
pub fn load_corpus(path: &Path) -> Result<(Vec<Document>, Vocabulary, usize)> {
    let loaded = load_documents(path)?;
    let vocab = Vocabulary::build(&loaded.documents);
    let mut docs = loaded.documents;
    vocab.encode(&mut docs);
    Ok((docs, vocab, loaded.skipped_empty))
}

/// Write documents to a JSON-lines corpus file.
pub fn save_documents(path: &Path, docs: &[Document]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    for doc in docs {
        let record = DocumentRecord {
            id: doc.id.clone(),
            origin: doc.origin,
            sentences: doc.sentences.iter().map(|s| s.join(" ")).collect(),
            labels: if doc.labels.is_empty() {
                None
            } else {
                Some(doc.labels.clone())
            },
        };
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Aspect names and their keyword lists. Keywords may be multi-word
/// phrases; matching is case-insensitive on whole tokens.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AspectRuleSet {
    pub aspects: Vec<String>,
    pub keywords: BTreeMap<String, Vec<String>>,
}

impl AspectRuleSet {
    pub fn validate(&self) -> Result<()> {
        if self.aspects.is_empty() {
            return Err(Error::Config("rule set declares no aspects".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in &self.aspects {
            if !seen.insert(a) {
                return Err(Error::Config(format!("duplicate aspect {a:?}")));
            }
            if !self.keywords.contains_key(a) {
                return Err(Error::Config(format!("aspect {a:?} has no keyword list")));
            }
        }
        Ok(())
    }

    pub fn aspect_index(&self, name: &str) -> Option<usize> {
        self.aspects.iter().position(|a| a == name)
    }

    /// Tokenized keyword phrases for one aspect.
    fn phrases(&self, aspect: &str) -> Vec<Vec<String>> {
        self.keywords
            .get(aspect)
            .map(|kws| kws.iter().map(|k| tokenize(k)).collect())
            .unwrap_or_default()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let rules: AspectRuleSet = serde_json::from_reader(BufReader::new(file))?;
        rules.validate()?;
        Ok(rules)
    }
}

/// True when `phrase` occurs as a contiguous token run in `tokens`.
fn contains_phrase(tokens: &[String], phrase: &[String]) -> bool {
    if phrase.is_empty() || phrase.len() > tokens.len() {
        return false;
    }
    tokens
        .windows(phrase.len())
        .any(|w| w.iter().zip(phrase.iter()).all(|(a, b)| a == b))
}

/// Derive relevance labels for the focal aspect on one document.
///
/// Per sentence: any focal keyword present -> 1 (even when other aspects'
/// keywords are also present); only other aspects' keywords -> 0; no
/// keywords -> no label. Recomputes the focal aspect's entries from
/// scratch, so it is idempotent.
pub fn apply_rules(doc: &mut Document, rules: &AspectRuleSet, focal: &str) -> Result<()> {
    if rules.aspect_index(focal).is_none() {
        return Err(Error::Config(format!("unknown focal aspect {focal:?}")));
    }
    let focal_phrases = rules.phrases(focal);
    let other_phrases: Vec<Vec<String>> = rules
        .aspects
        .iter()
        .filter(|a| *a != focal)
        .flat_map(|a| rules.phrases(a))
        .collect();

    let mut entries = BTreeMap::new();
    for (i, sentence) in doc.sentences.iter().enumerate() {
        let has_focal = focal_phrases.iter().any(|p| contains_phrase(sentence, p));
        let has_other = other_phrases.iter().any(|p| contains_phrase(sentence, p));
        if has_focal {
            entries.insert(i, 1u8);
        } else if has_other {
            entries.insert(i, 0u8);
        }
    }
    doc.relevance.insert(focal.to_string(), entries);
    Ok(())
}

/// Mini-batch the documents, optionally balanced by origin.
///
/// Balanced batches hold `batch_size/2` source-origin and `batch_size/2`
/// target-origin documents each. Order is shuffled per call from `rng`;
/// the trailing remainder of the larger side is dropped, and if one side
/// runs out first it is resampled with replacement for the rest of the
/// epoch. Returns indices into `docs`.
pub fn split_batches<R: Rng>(
    docs: &[Document],
    batch_size: usize,
    balance: bool,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if !balance {
        let mut idx: Vec<usize> = (0..docs.len()).collect();
        idx.shuffle(rng);
        return Ok(idx
            .chunks_exact(batch_size)
            .map(|c| c.to_vec())
            .collect());
    }
    if batch_size % 2 != 0 {
        return Err(Error::Config(
            "balanced batching needs an even batch_size".into(),
        ));
    }
    let half = batch_size / 2;
    let mut source: Vec<usize> = (0..docs.len())
        .filter(|&i| docs[i].origin == Origin::Source)
        .collect();
    let mut target: Vec<usize> = (0..docs.len())
        .filter(|&i| docs[i].origin == Origin::Target)
        .collect();
    if source.is_empty() || target.is_empty() {
        return Err(Error::Config(
            "balanced batching needs documents of both origins".into(),
        ));
    }
    source.shuffle(rng);
    target.shuffle(rng);
    let n_batches = (source.len() / half).max(target.len() / half);
    if n_batches == 0 {
        return Ok(Vec::new());
    }
    let top_up = |side: &mut Vec<usize>, rng: &mut R| {
        let base = side.clone();
        while side.len() < n_batches * half {
            side.push(base[rng.gen_range(0..base.len())]);
        }
        side.truncate(n_batches * half);
    };
    top_up(&mut source, rng);
    top_up(&mut target, rng);

    let mut batches = Vec::with_capacity(n_batches);
    for b in 0..n_batches {
        let mut batch = source[b * half..(b + 1) * half].to_vec();
        batch.extend_from_slice(&target[b * half..(b + 1) * half]);
        batches.push(batch);
    }
    Ok(batches)
}
