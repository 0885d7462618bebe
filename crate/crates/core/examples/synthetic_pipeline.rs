//! Trains on the synthetic topical corpus, then reports retrieval quality
//! (joint vs k-means-only codebooks), the masking table and topic purity.
//!
//! cargo run --release --example synthetic_pipeline

use std::time::Instant;

use repmot::analysis::{most_populated_code, render_table, run_mask_eval, topic_report, MaskEvalConfig, TopicMode};
use repmot::attribution::AttributionConfig;
use repmot::cli::retrieve_all;
use repmot::quantizer::quantize_corpus;
use repmot::retrieval::evaluate;
use repmot::synthetic::{generate, topic_of, SynthConfig};
use repmot::{Model, ModelConfig, TrainConfig};

fn main() -> repmot::Result<()> {
    let data = generate(&SynthConfig::default())?;
    let model_cfg = ModelConfig::default();
    let train_cfg = TrainConfig::default();

    let t = Instant::now();
    let (model, outcome) = Model::train(&data.corpus, &data.queries, &data.qrels, &model_cfg, &train_cfg)?;
    println!("trained in {:.1?}", t.elapsed());
    let warm = outcome.epoch_means(repmot::trainer::Phase::Warmup);
    let joint = outcome.epoch_means(repmot::trainer::Phase::Joint);
    println!("warmup epoch loss: {:.4} -> {:.4}", warm[0], warm[warm.len() - 1]);
    println!("joint epoch loss:  {:.4} -> {:.4}", joint[0], joint[joint.len() - 1]);

    let unsup_cfg = TrainConfig { joint_epochs: 0, ..train_cfg.clone() };
    let (unsup, _) = Model::train(&data.corpus, &data.queries, &data.qrels, &model_cfg, &unsup_cfg)?;

    let ids: Vec<String> = data.corpus.iter().map(|d| d.id.clone()).collect();
    for (name, m) in [("joint", &model), ("k-means only", &unsup)] {
        let docs = data.corpus.tokenize(&m.vocab)?;
        let index = quantize_corpus(&m.encoder, &ids, &docs, &m.codebooks, false)?;
        let runs = retrieve_all(m, &data.queries, &index, 100, false)?;
        let metrics = evaluate(&runs, &data.qrels)?;
        println!("{name:>13}: MRR@10 {:.4}  R@100 {:.4}  NDCG@10 {:.4}", metrics.mrr_10, metrics.recall_100, metrics.ndcg_10);
    }

    let docs = data.corpus.tokenize(&model.vocab)?;
    let t = Instant::now();
    let report = run_mask_eval(&model, &ids, &docs, &MaskEvalConfig::default())?;
    println!("mask eval in {:.1?}", t.elapsed());
    print!("{}", render_table(&[&report]));
    for test in &report.tests {
        println!("MoT vs {:<8} t = {:>9.3}  p = {:.3e}", test.baseline.name(), test.t, test.p);
    }

    let index = quantize_corpus(&model.encoder, &ids, &docs, &model.codebooks, false)?;
    let mut coherent = 0;
    for pool in 0..model.num_subvectors() {
        let (code, n) = most_populated_code(&index, pool).expect("non-empty index");
        let r = topic_report(&model, &index, &docs, pool, code, 10, TopicMode::Frequency, &AttributionConfig::default())?;
        let mut counts = [0usize; 8];
        for w in &r.words {
            if let Some(t) = topic_of(&w.word) {
                counts[t] += 1;
            }
        }
        let best = *counts.iter().max().unwrap();
        coherent += usize::from(best >= 7);
        let words: Vec<&str> = r.words.iter().map(|w| w.word.as_str()).collect();
        println!("pool {pool} code {code:>2} ({n:>4} docs, purity {best}/10): {}", words.join(" "));
    }
    println!("coherent pools: {coherent}/8");
    Ok(())
}
