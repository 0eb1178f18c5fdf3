//! Diagnostics over trained checkpoints: stacked document representations,
//! sparsity statistics, cosine nearest neighbors across domains, relevance
//! weight inspection, and keyword-count sensitivity sweeps.

use crate::corpus::{apply_rules, AspectRuleSet, Document};
use crate::error::{Error, Result};
use crate::model::{encode_document, AanParameters, HyperParams};
use crate::tensor::Tensor;
use crate::trainer::{evaluate, train, TrainConfig, TrainInput};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Transformed document vectors stacked into a matrix: source-origin rows
/// first (encoded under the source aspect), then target-origin rows
/// (encoded under the target aspect).
#[derive(Clone, Debug)]
pub struct RepresentationMatrix {
    pub rows: Tensor,
    pub source_rows: usize,
    pub doc_ids: Vec<String>,
}

#[allow(clippy::too_many_arguments)]
pub fn representation_matrix(
    params: &AanParameters,
    hyper: &HyperParams,
    source_docs: &[Document],
    target_docs: &[Document],
    source_aspect: usize,
    target_aspect: usize,
    disable_relevance: bool,
) -> Result<RepresentationMatrix> {
    if source_docs.is_empty() && target_docs.is_empty() {
        return Err(Error::Contract("no documents to encode".into()));
    }
    let f = hyper.conv_features;
    let total = source_docs.len() + target_docs.len();
    let mut rows = Tensor::zeros(vec![total, f]);
    let mut doc_ids = Vec::with_capacity(total);
    let mut r = 0;
    for (docs, aspect) in [(source_docs, source_aspect), (target_docs, target_aspect)] {
        for doc in docs {
            let enc = encode_document(params, hyper, &doc.token_ids, aspect, disable_relevance)?;
            for (c, &v) in enc.transformed.iter().enumerate() {
                *rows.at_mut(r, c) = v;
            }
            doc_ids.push(doc.id.clone());
            r += 1;
        }
    }
    Ok(RepresentationMatrix {
        rows,
        source_rows: source_docs.len(),
        doc_ids,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SparsityReport {
    /// Fraction of entries with magnitude below the threshold.
    pub fraction_small: f64,
    /// Population standard deviation over all entries.
    pub stddev: f64,
    /// Mean over the source-origin (top) rows.
    pub source_mean: f64,
    /// Mean over the target-origin (bottom) rows.
    pub target_mean: f64,
    pub threshold: f64,
}

pub fn sparsity_stats(matrix: &RepresentationMatrix, threshold: f64) -> SparsityReport {
    let data = matrix.rows.data();
    let n = data.len().max(1);
    let small = data.iter().filter(|v| v.abs() < threshold).count();
    let mean = data.iter().sum::<f64>() / n as f64;
    let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let cols = matrix.rows.cols().max(1);
    let split = matrix.source_rows * cols;
    let mean_of = |s: &[f64]| {
        if s.is_empty() {
            0.0
        } else {
            s.iter().sum::<f64>() / s.len() as f64
        }
    };
    SparsityReport {
        fraction_small: small as f64 / n as f64,
        stddev: var.sqrt(),
        source_mean: mean_of(&data[..split]),
        target_mean: mean_of(&data[split..]),
        threshold,
    }
}

/// Cosine similarity; defined as 0 when either vector is all zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Neighbor {
    pub doc_id: String,
    pub similarity: f64,
}

/// Top-k pool documents by cosine similarity of transformed representations.
/// The query is encoded under `query_aspect`, the pool under `pool_aspect`;
/// ties order by document id.
#[allow(clippy::too_many_arguments)]
pub fn nearest_neighbors(
    query: &Document,
    pool: &[Document],
    k: usize,
    params: &AanParameters,
    hyper: &HyperParams,
    query_aspect: usize,
    pool_aspect: usize,
    disable_relevance: bool,
) -> Result<Vec<Neighbor>> {
    if pool.is_empty() {
        return Err(Error::Contract("nearest_neighbors: empty pool".into()));
    }
    if k > pool.len() {
        return Err(Error::Config(format!(
            "k = {k} exceeds pool size {}",
            pool.len()
        )));
    }
    let q = encode_document(params, hyper, &query.token_ids, query_aspect, disable_relevance)?;
    let mut scored: Vec<Neighbor> = pool
        .iter()
        .map(|doc| {
            let enc =
                encode_document(params, hyper, &doc.token_ids, pool_aspect, disable_relevance)?;
            Ok(Neighbor {
                doc_id: doc.id.clone(),
                similarity: cosine(&q.transformed, &enc.transformed),
            })
        })
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| {
        b.similarity
            .partial_cmp(&a.similarity)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    scored.truncate(k);
    Ok(scored)
}

/// Normalized pooling mass landing on ground-truth focal sentences.
/// `scores` are the per-sentence relevance scores; an all-vanished score
/// vector means the encoder fell back to uniform weights.
pub fn focal_mass(scores: &[f64], focal: &[usize]) -> f64 {
    let s = scores.len();
    if s == 0 {
        return 0.0;
    }
    let total: f64 = scores.iter().sum();
    if total < 1e-6 {
        return focal.len() as f64 / s as f64;
    }
    focal
        .iter()
        .filter(|&&i| i < s)
        .map(|&i| scores[i] / total)
        .sum()
}

#[derive(Clone, Debug, Serialize)]
pub struct SentenceRelevance {
    pub doc_id: String,
    pub sentence: usize,
    pub score: f64,
    pub is_focal: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RelevanceInspection {
    pub rows: Vec<SentenceRelevance>,
    /// Mean normalized weight mass on ground-truth focal sentences, over
    /// documents that have at least one.
    pub mean_focal_mass: f64,
    pub docs_measured: usize,
}

/// Score every sentence under the focal aspect and measure how much pooling
/// weight lands on the sentences the keyword rules mark as relevant.
pub fn relevance_inspection(
    params: &AanParameters,
    hyper: &HyperParams,
    docs: &[Document],
    rules: &AspectRuleSet,
    focal: &str,
) -> Result<RelevanceInspection> {
    let aspect_idx = rules
        .aspect_index(focal)
        .ok_or_else(|| Error::Config(format!("unknown aspect {focal:?}")))?;
    let mut rows = Vec::new();
    let mut mass_sum = 0.0;
    let mut measured = 0;
    for doc in docs {
        let mut marked = doc.clone();
        apply_rules(&mut marked, rules, focal)?;
        let focal_sents: Vec<usize> = marked.relevance[focal]
            .iter()
            .filter(|(_, &r)| r == 1)
            .map(|(&i, _)| i)
            .collect();
        let enc = encode_document(params, hyper, &doc.token_ids, aspect_idx, false)?;
        for (i, &score) in enc.relevance.iter().enumerate() {
            rows.push(SentenceRelevance {
                doc_id: doc.id.clone(),
                sentence: i,
                score,
                is_focal: focal_sents.contains(&i),
            });
        }
        if !focal_sents.is_empty() {
            mass_sum += focal_mass(&enc.relevance, &focal_sents);
            measured += 1;
        }
    }
    Ok(RelevanceInspection {
        rows,
        mean_focal_mass: if measured == 0 {
            0.0
        } else {
            mass_sum / measured as f64
        },
        docs_measured: measured,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub fraction: f64,
    /// Keywords kept per aspect after subsetting.
    pub keywords_used: BTreeMap<String, usize>,
    /// True when an aspect lost all keywords; the point ran without the
    /// relevance scorer.
    pub degenerate: bool,
    pub target_accuracy: f64,
    pub source_val_accuracy: Option<f64>,
}

/// Retrain with random keyword subsets of the rule set, one point per
/// fraction, and report target accuracy on `test_docs`. Subsets are drawn
/// deterministically from the training seed.
pub fn keyword_sweep(
    cfg: &TrainConfig,
    input: &TrainInput,
    test_docs: &[Document],
    fractions: &[f64],
) -> Result<Vec<SweepPoint>> {
    if input
        .rules
        .keywords
        .values()
        .any(|k| k.len() < 2 && fractions.iter().any(|&f| f < 1.0))
    {
        return Err(Error::Config(
            "keyword sweep needs at least 2 keywords per aspect".into(),
        ));
    }
    let mut points = Vec::new();
    for (pi, &fraction) in fractions.iter().enumerate() {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Config(format!("fraction {fraction} outside [0, 1]")));
        }
        let mut sub = input.rules.clone();
        let mut keywords_used = BTreeMap::new();
        let mut degenerate = false;
        for (aspect, kws) in sub.keywords.iter_mut() {
            let keep = ((fraction * kws.len() as f64).round() as usize).min(kws.len());
            use rand::SeedableRng;
            let mut rng = ChaCha8Rng::seed_from_u64(
                cfg.seed ^ (pi as u64) << 32 ^ fxmix(aspect),
            );
            kws.shuffle(&mut rng);
            kws.truncate(keep);
            keywords_used.insert(aspect.clone(), keep);
            if keep == 0 {
                degenerate = true;
            }
        }
        let mut point_cfg = cfg.clone();
        if degenerate {
            point_cfg.disable_relevance = true;
        }
        let point_input = TrainInput {
            source_docs: input.source_docs,
            target_docs: input.target_docs,
            rules: &sub,
            vocab: input.vocab,
            source_aspect: input.source_aspect,
            target_aspect: input.target_aspect,
        };
        let outcome = train(&point_cfg, &point_input)?;
        let params = outcome.checkpoint.to_params()?;
        let report = evaluate(
            &params,
            &point_cfg.hyper,
            test_docs,
            &sub.aspects,
            input.target_aspect,
            point_cfg.disable_relevance,
        )?;
        points.push(SweepPoint {
            fraction,
            keywords_used,
            degenerate,
            target_accuracy: report.accuracy,
            source_val_accuracy: outcome.best_val_accuracy,
        });
    }
    Ok(points)
}

fn fxmix(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Raw representation matrix as CSV (one row per document).
pub fn write_matrix_csv(path: &Path, matrix: &RepresentationMatrix) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "doc_id,origin_half,values...")?;
    for r in 0..matrix.rows.rows() {
        let half = if r < matrix.source_rows { "source" } else { "target" };
        let vals: Vec<String> = matrix.rows.row(r).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{},{},{}", matrix.doc_ids[r], half, vals.join(","))?;
    }
    Ok(())
}

/// 8-bit grayscale PGM render, linearly clamped to +/- 3 standard
/// deviations around zero.
pub fn write_heatmap_pgm(path: &Path, matrix: &RepresentationMatrix) -> Result<()> {
    let report = sparsity_stats(matrix, 1e-6);
    let scale = 3.0 * report.stddev;
    let (rows, cols) = (matrix.rows.rows(), matrix.rows.cols());
    let mut bytes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let v = matrix.rows.at(r, c);
            let px = if scale == 0.0 {
                127.5
            } else {
                (v.clamp(-scale, scale) / scale + 1.0) * 127.5
            };
            bytes.push(px.round().clamp(0.0, 255.0) as u8);
        }
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(w, "P5\n{cols} {rows}\n255\n")?;
    w.write_all(&bytes)?;
    Ok(())
}

pub fn write_neighbors_json(path: &Path, neighbors: &[Neighbor]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), neighbors)?;
    Ok(())
}

/// Accuracy-vs-keyword-fraction curve as CSV.
pub fn write_sweep_csv(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "fraction,target_accuracy,source_val_accuracy,degenerate")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{}",
            p.fraction,
            p.target_accuracy,
            p.source_val_accuracy
                .map(|a| a.to_string())
                .unwrap_or_default(),
            p.degenerate
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_properties() {
        let v = vec![1.0, 2.0, -3.0];
        let scaled: Vec<f64> = v.iter().map(|x| 4.2 * x).collect();
        assert!((cosine(&v, &scaled) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 5.0]), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn sparsity_on_degenerate_matrices() {
        let zeros = RepresentationMatrix {
            rows: Tensor::zeros(vec![3, 4]),
            source_rows: 2,
            doc_ids: vec!["a".into(), "b".into(), "c".into()],
        };
        let r = sparsity_stats(&zeros, 1e-6);
        assert_eq!(r.fraction_small, 1.0);
        assert_eq!(r.stddev, 0.0);

        let ones = RepresentationMatrix {
            rows: Tensor::filled(vec![3, 4], 1.0),
            source_rows: 1,
            doc_ids: vec!["a".into(), "b".into(), "c".into()],
        };
        let r = sparsity_stats(&ones, 1e-6);
        assert_eq!(r.fraction_small, 0.0);
        assert_eq!(r.source_mean, 1.0);
    }

    #[test]
    fn sparsity_invariant_to_row_permutation() {
        let a = RepresentationMatrix {
            rows: Tensor::matrix(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap(),
            source_rows: 1,
            doc_ids: vec!["a".into(), "b".into()],
        };
        let b = RepresentationMatrix {
            rows: Tensor::matrix(2, 2, vec![2.0, 3.0, 0.0, 1.0]).unwrap(),
            source_rows: 1,
            doc_ids: vec!["b".into(), "a".into()],
        };
        let (ra, rb) = (sparsity_stats(&a, 0.5), sparsity_stats(&b, 0.5));
        assert_eq!(ra.fraction_small, rb.fraction_small);
        assert!((ra.stddev - rb.stddev).abs() < 1e-15);
    }

    #[test]
    fn focal_mass_arithmetic() {
        // One-hot scores on the focal sentence capture all the mass.
        assert!((focal_mass(&[0.0, 5.0, 0.0], &[1]) - 1.0).abs() < 1e-9);
        // Uniform scores spread mass evenly.
        assert!((focal_mass(&[1.0, 1.0, 1.0, 1.0], &[2]) - 0.25).abs() < 1e-12);
        // Vanished scores fall back to uniform weighting.
        assert!((focal_mass(&[0.0, 0.0], &[0]) - 0.5).abs() < 1e-12);
        // Mass always lands in [0, 1].
        assert!(focal_mass(&[0.3, 0.7], &[0, 1]) <= 1.0 + 1e-12);
    }
}
