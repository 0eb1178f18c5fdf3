//! Scratch calibration run (temporary).
use aan::corpus::Vocabulary;
use aan::model::HyperParams;
use aan::synth::{generate, SynthSpec, ASPECTS};
use aan::trainer::{evaluate, train, TrainConfig, TrainInput};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1);
    let variant = args.get(2).cloned().unwrap_or_else(|| "full".into());
    let epochs: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(8);
    let rho_max: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let lambda: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.1);
    let lr: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(0.01);

    let spec = SynthSpec { seed: 100 + seed, ..SynthSpec::default() };
    let corpus = generate(&spec).unwrap();
    let vocab = Vocabulary::build(corpus.train.iter().chain(corpus.unlabeled.iter()));
    let mut train_docs = corpus.train;
    let mut unlabeled = corpus.unlabeled;
    let mut test = corpus.test;
    vocab.encode(&mut train_docs);
    vocab.encode(&mut unlabeled);
    vocab.encode(&mut test);

    let mut cfg = TrainConfig {
        epochs,
        seed,
        rho_max,
        base_lr: lr,
        hyper: HyperParams {
            embed_dim: 16,
            conv_features: 24,
            hidden_size: 24,
            lambda_tr: lambda,
            ..HyperParams::default()
        },
        ..TrainConfig::default()
    };
    match variant.as_str() {
        "na" => cfg.disable_adversary = true,
        "nr" => cfg.disable_relevance = true,
        "norec" => cfg.disable_reconstruction = true,
        _ => {}
    }

    let input = TrainInput {
        source_docs: &train_docs,
        target_docs: &unlabeled,
        rules: &corpus.rules,
        vocab: &vocab,
        source_aspect: ASPECTS[0],
        target_aspect: ASPECTS[1],
    };
    let t0 = Instant::now();
    let outcome = train(&cfg, &input).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let params = outcome.checkpoint.to_params().unwrap();
    let aspects: Vec<String> = ASPECTS.iter().map(|s| s.to_string()).collect();
    let src = evaluate(&params, &cfg.hyper, &test, &aspects, ASPECTS[0], cfg.disable_relevance).unwrap();
    let tgt = evaluate(&params, &cfg.hyper, &test, &aspects, ASPECTS[1], cfg.disable_relevance).unwrap();
    println!(
        "{variant} seed={seed} epochs={epochs}: source={:.3} target={:.3} val={:?} time={elapsed:.1}s",
        src.accuracy, tgt.accuracy, outcome.best_val_accuracy
    );

    // Diagnostics: relevance focus, domain separability, sparsity.
    if variant == "full" || variant == "na" {
        use aan::analysis::{relevance_inspection, representation_matrix, sparsity_stats};
        use aan::model::domain_probs;
        for (ai, aspect) in ASPECTS.iter().enumerate() {
            let insp = relevance_inspection(&params, &cfg.hyper, &test[..100], &corpus.rules, aspect).unwrap();
            println!("  relevance mass {aspect} (idx {ai}): {:.3}", insp.mean_focal_mass);
        }
        let m = representation_matrix(&params, &cfg.hyper, &test[..100], &test[100..200], 0, 1, false).unwrap();
        let sp = sparsity_stats(&m, 1e-6);
        println!("  sparsity={:.3} stddev={:.4}", sp.fraction_small, sp.stddev);
        // Domain accuracy on eval encodings: how separable are the aspects?
        let mut correct = 0;
        for r in 0..m.rows.rows() {
            let q = domain_probs(&params, m.rows.row(r)).unwrap();
            let pred = if q[1] > q[0] { 1 } else { 0 };
            let actual = if r < m.source_rows { 0 } else { 1 };
            if pred == actual { correct += 1; }
        }
        println!("  adversary accuracy on eval encodings: {:.3}", correct as f64 / m.rows.rows() as f64);
        // Last metrics rows
        for row in outcome.metrics.iter().rev().take(3) {
            if let Some(l) = &row.loss {
                println!("  step {}: rec={:.3} rel={:.4} lab={:.4} dom={:.3} rho={:.2}", row.step, l.reconstruction, l.relevance, l.label, l.domain, l.rho);
            }
        }
    }
}
