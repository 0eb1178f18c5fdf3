//! The `aan` command line: corpus generation, training, evaluation, and
//! analysis as reproducible, manifest-tracked runs.
//!
//! Every command that writes artifacts takes an `--out` directory, refuses
//! to overwrite a non-empty one unless `--force` is given, and drops a
//! `manifest.json` recording the resolved configuration, the seed, and
//! content hashes of every input file.
//!
//! Exit codes: 0 success, 1 usage or validation failure, 2 numerical
//! failure during training.

use crate::checkpoint::Checkpoint;
use crate::corpus::{
    file_hash, load_documents, save_documents, AspectRuleSet, Document, Vocabulary,
};
use crate::error::{Error, Result};
use crate::model::{AssignmentPolicy, Pooling};
use crate::synth::{self, SynthSpec};
use crate::trainer::{
    evaluate, train, write_metrics_csv, OptimizerKind, TrainConfig, TrainInput,
};
use crate::analysis;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "aan",
    about = "Adversarial aspect-transfer text classification",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic aspect-transfer corpus.
    GenSynth(GenSynthArgs),
    /// Train a model on a corpus pair.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a labeled corpus.
    Eval(EvalArgs),
    /// Export representation matrices, heat maps, sparsity statistics, and
    /// optionally a relevance inspection.
    Analyze(AnalyzeArgs),
    /// Nearest neighbors of one document across domains.
    Neighbors(NeighborsArgs),
    /// Retrain over keyword-rule subsets and report the accuracy curve.
    SweepKeywords(SweepArgs),
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Labeled source training documents.
    #[arg(long, default_value_t = 2000)]
    docs: usize,
    /// Unlabeled documents (defaults to --docs).
    #[arg(long)]
    unlabeled: Option<usize>,
    #[arg(long, default_value_t = 500)]
    test: usize,
    /// Polarity-vocabulary overlap fraction omega in [0, 1].
    #[arg(long, default_value_t = 0.3)]
    overlap: f64,
    /// Label correlation kappa in [-1, 1].
    #[arg(long, default_value_t = 0.0)]
    correlation: f64,
    #[arg(long, default_value_t = 3)]
    sentences_min: usize,
    #[arg(long, default_value_t = 6)]
    sentences_max: usize,
    #[arg(long, default_value_t = 3)]
    name_tokens: usize,
    #[arg(long, default_value_t = 10)]
    polarity_tokens: usize,
    #[arg(long, default_value_t = 2)]
    polarity_per_sentence: usize,
    #[arg(long, default_value_t = 3)]
    distractor_aspects: usize,
    #[arg(long, default_value_t = 50)]
    filler_vocab: usize,
    #[arg(long, default_value_t = 3)]
    filler_len_min: usize,
    #[arg(long, default_value_t = 6)]
    filler_len_max: usize,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    seed: u64,
    /// JSON file with TrainConfig fields; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    unlabeled: PathBuf,
    #[arg(long)]
    rules: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the first aspect in the rules file.
    #[arg(long)]
    source_aspect: Option<String>,
    /// Defaults to the second aspect in the rules file.
    #[arg(long)]
    target_aspect: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    base_lr: Option<f64>,
    #[arg(long)]
    lr_alpha: Option<f64>,
    #[arg(long)]
    lr_beta: Option<f64>,
    #[arg(long)]
    rho_max: Option<f64>,
    #[arg(long)]
    rho_gamma: Option<f64>,
    #[arg(long, value_parser = parse_optimizer)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    lambda_tr: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    conv_window: Option<usize>,
    #[arg(long)]
    conv_features: Option<usize>,
    #[arg(long)]
    hidden_size: Option<usize>,
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long, value_parser = parse_pooling)]
    pooling: Option<Pooling>,
    #[arg(long)]
    clamp_relevance: bool,
    #[arg(long, value_parser = parse_policy)]
    policy: Option<AssignmentPolicy>,
    #[arg(long)]
    val_fraction: Option<f64>,
    #[arg(long)]
    disable_adversary: bool,
    #[arg(long)]
    disable_relevance: bool,
    #[arg(long)]
    disable_reconstruction: bool,
    #[arg(long)]
    detach_adversary: bool,
    #[arg(long)]
    freeze_transform_identity: bool,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    aspect: String,
    /// Write the full report as JSON here (stdout summary either way).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    source_corpus: PathBuf,
    #[arg(long)]
    target_corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Documents sampled from the head of each corpus.
    #[arg(long, default_value_t = 100)]
    sample: usize,
    #[arg(long, default_value_t = 1e-6)]
    threshold: f64,
    /// Rules file: when given, also emit a relevance inspection for the
    /// target aspect over the target corpus.
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct NeighborsArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    query_corpus: PathBuf,
    #[arg(long)]
    query_id: String,
    #[arg(long)]
    pool_corpus: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Defaults to the checkpoint's second aspect (the transfer target).
    #[arg(long)]
    query_aspect: Option<String>,
    /// Defaults to the checkpoint's first aspect.
    #[arg(long)]
    pool_aspect: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    unlabeled: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    rules: PathBuf,
    /// Comma-separated keyword fractions, e.g. "1.0,0.5,0.25,0.0".
    #[arg(long, default_value = "1.0,0.5,0.25")]
    fractions: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    source_aspect: Option<String>,
    #[arg(long)]
    target_aspect: Option<String>,
    #[arg(long)]
    force: bool,
}

fn parse_optimizer(s: &str) -> std::result::Result<OptimizerKind, String> {
    match s {
        "adam" => Ok(OptimizerKind::Adam),
        "sgd_momentum" => Ok(OptimizerKind::SgdMomentum),
        _ => Err(format!("unknown optimizer {s:?} (adam|sgd_momentum)")),
    }
}

fn parse_pooling(s: &str) -> std::result::Result<Pooling, String> {
    match s {
        "max" => Ok(Pooling::Max),
        "mean" => Ok(Pooling::Mean),
        _ => Err(format!("unknown pooling {s:?} (max|mean)")),
    }
}

fn parse_policy(s: &str) -> std::result::Result<AssignmentPolicy, String> {
    match s {
        "paired" => Ok(AssignmentPolicy::Paired),
        "by-origin" => Ok(AssignmentPolicy::ByOrigin),
        _ => Err(format!("unknown policy {s:?} (paired|by-origin)")),
    }
}

#[derive(Serialize)]
struct RunManifest {
    tool: String,
    command: String,
    seed: Option<u64>,
    config: serde_json::Value,
    /// Input path -> SHA-256 of its bytes.
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let file = std::fs::File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), manifest)?;
    Ok(())
}

fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = std::fs::read_dir(dir)?.next().is_some();
        if occupied && !force {
            return Err(Error::Config(format!(
                "output directory {} is not empty (use --force to overwrite)",
                dir.display()
            )));
        }
    } else {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn hash_inputs(paths: &[(&str, &Path)]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (_, p) in paths {
        out.insert(p.display().to_string(), file_hash(p)?);
    }
    Ok(out)
}

/// Load a training corpus pair, building the vocabulary from both files
/// (they are both training inputs; test corpora must be encoded separately
/// against this vocabulary).
fn load_training_pair(
    train: &Path,
    unlabeled: &Path,
) -> Result<(Vec<Document>, Vec<Document>, Vocabulary)> {
    let tr = load_documents(train)?;
    let un = load_documents(unlabeled)?;
    if tr.skipped_empty + un.skipped_empty > 0 {
        eprintln!(
            "warning: skipped {} empty documents",
            tr.skipped_empty + un.skipped_empty
        );
    }
    let vocab = Vocabulary::build(tr.documents.iter().chain(un.documents.iter()));
    let mut source = tr.documents;
    let mut target = un.documents;
    vocab.encode(&mut source);
    vocab.encode(&mut target);
    Ok((source, target, vocab))
}

fn load_with_vocab(path: &Path, vocab: &Vocabulary) -> Result<Vec<Document>> {
    let loaded = load_documents(path)?;
    let mut docs = loaded.documents;
    vocab.encode(&mut docs);
    Ok(docs)
}

fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)?
        }
        None => TrainConfig::default(),
    };
    cfg.seed = args.seed;
    macro_rules! over {
        ($field:expr, $opt:expr) => {
            if let Some(v) = $opt {
                $field = v;
            }
        };
    }
    over!(cfg.epochs, args.epochs);
    over!(cfg.batch_size, args.batch_size);
    over!(cfg.base_lr, args.base_lr);
    over!(cfg.lr_alpha, args.lr_alpha);
    over!(cfg.lr_beta, args.lr_beta);
    over!(cfg.rho_max, args.rho_max);
    over!(cfg.rho_gamma, args.rho_gamma);
    over!(cfg.optimizer, args.optimizer);
    over!(cfg.hyper.lambda_tr, args.lambda_tr);
    over!(cfg.hyper.dropout, args.dropout);
    over!(cfg.hyper.embed_dim, args.embed_dim);
    over!(cfg.hyper.conv_window, args.conv_window);
    over!(cfg.hyper.conv_features, args.conv_features);
    over!(cfg.hyper.hidden_size, args.hidden_size);
    over!(cfg.hyper.num_classes, args.num_classes);
    over!(cfg.hyper.pooling, args.pooling);
    over!(cfg.policy, args.policy);
    over!(cfg.val_fraction, args.val_fraction);
    if args.clamp_relevance {
        cfg.hyper.clamp_relevance = true;
    }
    if args.disable_adversary {
        cfg.disable_adversary = true;
    }
    if args.disable_relevance {
        cfg.disable_relevance = true;
    }
    if args.disable_reconstruction {
        cfg.disable_reconstruction = true;
    }
    if args.detach_adversary {
        cfg.detach_adversary = true;
    }
    if args.freeze_transform_identity {
        cfg.freeze_transform_identity = true;
    }
    Ok(cfg)
}

fn cmd_gen_synth(args: &GenSynthArgs) -> Result<()> {
    let spec = SynthSpec {
        train_docs: args.docs,
        unlabeled_docs: args.unlabeled.unwrap_or(args.docs),
        test_docs: args.test,
        sentences_min: args.sentences_min,
        sentences_max: args.sentences_max,
        name_tokens: args.name_tokens,
        polarity_tokens: args.polarity_tokens,
        polarity_per_sentence: args.polarity_per_sentence,
        polarity_overlap: args.overlap,
        distractor_aspects: args.distractor_aspects,
        filler_vocab: args.filler_vocab,
        filler_len_min: args.filler_len_min,
        filler_len_max: args.filler_len_max,
        label_correlation: args.correlation,
        seed: args.seed,
    };
    let corpus = synth::generate(&spec)?;
    prepare_out_dir(&args.out, args.force)?;
    save_documents(&args.out.join("train.jsonl"), &corpus.train)?;
    save_documents(&args.out.join("unlabeled.jsonl"), &corpus.unlabeled)?;
    save_documents(&args.out.join("test.jsonl"), &corpus.test)?;
    corpus.rules.save(&args.out.join("rules.json"))?;
    write_manifest(
        &args.out,
        &RunManifest {
            tool: tool_id(),
            command: "gen-synth".into(),
            seed: Some(args.seed),
            config: serde_json::to_value(&spec)?,
            inputs: BTreeMap::new(),
            outputs: vec![
                "train.jsonl".into(),
                "unlabeled.jsonl".into(),
                "test.jsonl".into(),
                "rules.json".into(),
            ],
        },
    )?;
    let s = &corpus.summary;
    println!(
        "generated {} train / {} unlabeled / {} test documents",
        s.train_docs, s.unlabeled_docs, s.test_docs
    );
    println!(
        "label balance: {}={:.3} {}={:.3}",
        synth::ASPECTS[0],
        s.label_balance[0],
        synth::ASPECTS[1],
        s.label_balance[1]
    );
    println!("measured label correlation: {:.4}", s.measured_correlation);
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = resolve_train_config(args)?;
    let rules = AspectRuleSet::load(&args.rules)?;
    if rules.aspects.len() < 2 {
        return Err(Error::Config("need at least two aspects".into()));
    }
    let source_aspect = args
        .source_aspect
        .clone()
        .unwrap_or_else(|| rules.aspects[0].clone());
    let target_aspect = args
        .target_aspect
        .clone()
        .unwrap_or_else(|| rules.aspects[1].clone());
    let (source_docs, target_docs, vocab) = load_training_pair(&args.train, &args.unlabeled)?;
    prepare_out_dir(&args.out, args.force)?;

    let input = TrainInput {
        source_docs: &source_docs,
        target_docs: &target_docs,
        rules: &rules,
        vocab: &vocab,
        source_aspect: &source_aspect,
        target_aspect: &target_aspect,
    };
    let outcome = match train(&cfg, &input) {
        Ok(o) => o,
        Err(e @ Error::NonFinite(_)) => {
            let diag = serde_json::json!({
                "error": e.to_string(),
                "config": serde_json::to_value(&cfg)?,
            });
            std::fs::write(
                args.out.join("diagnostics.json"),
                serde_json::to_vec_pretty(&diag)?,
            )?;
            eprintln!(
                "numerical failure; diagnostics at {}",
                args.out.join("diagnostics.json").display()
            );
            return Err(e);
        }
        Err(e) => return Err(e),
    };

    outcome.checkpoint.save(&args.out.join("checkpoint.json"))?;
    write_metrics_csv(&args.out.join("metrics.csv"), &outcome.metrics)?;
    vocab.save(&args.out.join("vocab.json"))?;
    std::fs::write(
        args.out.join("config.json"),
        serde_json::to_vec_pretty(&cfg)?,
    )?;
    write_manifest(
        &args.out,
        &RunManifest {
            tool: tool_id(),
            command: "train".into(),
            seed: Some(cfg.seed),
            config: serde_json::to_value(&cfg)?,
            inputs: hash_inputs(&[
                ("train", &args.train),
                ("unlabeled", &args.unlabeled),
                ("rules", &args.rules),
            ])?,
            outputs: vec![
                "checkpoint.json".into(),
                "metrics.csv".into(),
                "vocab.json".into(),
                "config.json".into(),
            ],
        },
    )?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    match outcome.best_val_accuracy {
        Some(acc) => println!("best source-validation accuracy: {acc:.4}"),
        None => println!("no validation split; checkpoint holds final parameters"),
    }
    Ok(())
}

fn load_checkpoint_and_vocab(
    checkpoint: &Path,
    vocab: &Path,
) -> Result<(Checkpoint, Vocabulary)> {
    let ck = Checkpoint::load(checkpoint)?;
    let vocab = Vocabulary::load(vocab)?;
    ck.verify_vocab(&vocab.content_hash())?;
    Ok((ck, vocab))
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let (ck, vocab) = load_checkpoint_and_vocab(&args.checkpoint, &args.vocab)?;
    let docs = load_with_vocab(&args.corpus, &vocab)?;
    let params = ck.to_params()?;
    let report = evaluate(
        &params,
        &ck.hyper,
        &docs,
        &ck.aspects,
        &args.aspect,
        ck.uniform_pooling,
    )?;
    println!(
        "accuracy {:.4} ({}/{} correct) on aspect {:?}",
        report.accuracy, report.correct, report.total, args.aspect
    );
    println!("confusion (rows actual, cols predicted):");
    for row in &report.confusion {
        println!(
            "  {}",
            row.iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        );
    }
    if let Some(out) = &args.out {
        std::fs::write(out, serde_json::to_vec_pretty(&report)?)?;
    }
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let (ck, vocab) = load_checkpoint_and_vocab(&args.checkpoint, &args.vocab)?;
    let params = ck.to_params()?;
    let source = load_with_vocab(&args.source_corpus, &vocab)?;
    let target = load_with_vocab(&args.target_corpus, &vocab)?;
    let src: Vec<Document> = source.into_iter().take(args.sample).collect();
    let tgt: Vec<Document> = target.into_iter().take(args.sample).collect();
    prepare_out_dir(&args.out, args.force)?;

    let matrix = analysis::representation_matrix(
        &params,
        &ck.hyper,
        &src,
        &tgt,
        0,
        1,
        ck.uniform_pooling,
    )?;
    analysis::write_matrix_csv(&args.out.join("representation.csv"), &matrix)?;
    analysis::write_heatmap_pgm(&args.out.join("heatmap.pgm"), &matrix)?;
    let report = analysis::sparsity_stats(&matrix, args.threshold);
    std::fs::write(
        args.out.join("sparsity.json"),
        serde_json::to_vec_pretty(&report)?,
    )?;
    println!(
        "representation matrix {} x {} ({} source rows)",
        matrix.rows.rows(),
        matrix.rows.cols(),
        matrix.source_rows
    );
    println!(
        "sparsity: {:.4} of entries below {:e}; stddev {:.6}",
        report.fraction_small, report.threshold, report.stddev
    );

    let mut outputs = vec![
        "representation.csv".into(),
        "heatmap.pgm".into(),
        "sparsity.json".into(),
    ];
    if let Some(rules_path) = &args.rules {
        let rules = AspectRuleSet::load(rules_path)?;
        let focal = ck
            .aspects
            .get(1)
            .cloned()
            .ok_or_else(|| Error::Config("checkpoint lists fewer than 2 aspects".into()))?;
        let inspection =
            analysis::relevance_inspection(&params, &ck.hyper, &tgt, &rules, &focal)?;
        std::fs::write(
            args.out.join("relevance.json"),
            serde_json::to_vec_pretty(&inspection)?,
        )?;
        println!(
            "mean focal relevance mass ({focal}): {:.4} over {} documents",
            inspection.mean_focal_mass, inspection.docs_measured
        );
        outputs.push("relevance.json".into());
    }
    write_manifest(
        &args.out,
        &RunManifest {
            tool: tool_id(),
            command: "analyze".into(),
            seed: None,
            config: serde_json::json!({
                "sample": args.sample,
                "threshold": args.threshold,
            }),
            inputs: hash_inputs(&[
                ("checkpoint", &args.checkpoint),
                ("source_corpus", &args.source_corpus),
                ("target_corpus", &args.target_corpus),
            ])?,
            outputs,
        },
    )?;
    Ok(())
}

fn cmd_neighbors(args: &NeighborsArgs) -> Result<()> {
    let (ck, vocab) = load_checkpoint_and_vocab(&args.checkpoint, &args.vocab)?;
    let params = ck.to_params()?;
    let queries = load_with_vocab(&args.query_corpus, &vocab)?;
    let pool = load_with_vocab(&args.pool_corpus, &vocab)?;
    let query = queries
        .iter()
        .find(|d| d.id == args.query_id)
        .ok_or_else(|| Error::Config(format!("query id {:?} not found", args.query_id)))?;
    let aspect_of = |name: &Option<String>, default: usize| -> Result<usize> {
        match name {
            Some(n) => ck
                .aspects
                .iter()
                .position(|a| a == n)
                .ok_or_else(|| Error::Config(format!("unknown aspect {n:?}"))),
            None => Ok(default),
        }
    };
    let query_aspect = aspect_of(&args.query_aspect, 1)?;
    let pool_aspect = aspect_of(&args.pool_aspect, 0)?;
    let neighbors = analysis::nearest_neighbors(
        query,
        &pool,
        args.k,
        &params,
        &ck.hyper,
        query_aspect,
        pool_aspect,
        ck.uniform_pooling,
    )?;
    for n in &neighbors {
        println!("{:.6}  {}", n.similarity, n.doc_id);
    }
    if let Some(out) = &args.out {
        analysis::write_neighbors_json(out, &neighbors)?;
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let fractions: Vec<f64> = args
        .fractions
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad fraction {s:?}: {e}")))
        })
        .collect::<Result<_>>()?;
    if fractions.is_empty() {
        return Err(Error::Config("no fractions given".into()));
    }
    let mut cfg: TrainConfig = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => TrainConfig::default(),
    };
    cfg.seed = args.seed;
    let rules = AspectRuleSet::load(&args.rules)?;
    let source_aspect = args
        .source_aspect
        .clone()
        .unwrap_or_else(|| rules.aspects[0].clone());
    let target_aspect = args
        .target_aspect
        .clone()
        .unwrap_or_else(|| rules.aspects[1].clone());
    let (source_docs, target_docs, vocab) = load_training_pair(&args.train, &args.unlabeled)?;
    let test_docs = load_with_vocab(&args.test, &vocab)?;
    prepare_out_dir(&args.out, args.force)?;

    let input = TrainInput {
        source_docs: &source_docs,
        target_docs: &target_docs,
        rules: &rules,
        vocab: &vocab,
        source_aspect: &source_aspect,
        target_aspect: &target_aspect,
    };
    let points = analysis::keyword_sweep(&cfg, &input, &test_docs, &fractions)?;
    analysis::write_sweep_csv(&args.out.join("sweep.csv"), &points)?;
    write_manifest(
        &args.out,
        &RunManifest {
            tool: tool_id(),
            command: "sweep-keywords".into(),
            seed: Some(args.seed),
            config: serde_json::to_value(&cfg)?,
            inputs: hash_inputs(&[
                ("train", &args.train),
                ("unlabeled", &args.unlabeled),
                ("test", &args.test),
                ("rules", &args.rules),
            ])?,
            outputs: vec!["sweep.csv".into()],
        },
    )?;
    for p in &points {
        println!(
            "fraction {:.2}: target accuracy {:.4}{}",
            p.fraction,
            p.target_accuracy,
            if p.degenerate { " (degenerate: no keywords, ran without relevance scorer)" } else { "" }
        );
    }
    Ok(())
}

fn tool_id() -> String {
    format!("aan {}", env!("CARGO_PKG_VERSION"))
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successful exits.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::GenSynth(args) => cmd_gen_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Neighbors(args) => cmd_neighbors(args),
        Command::SweepKeywords(args) => cmd_sweep(args),
    };
    match result {
        Ok(()) => 0,
        Err(Error::NonFinite(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
