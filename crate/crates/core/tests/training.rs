mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use repmot::encoder::EncoderParams;
use repmot::quantizer::kmeans_init;
use repmot::synthetic::{generate, SynthConfig};
use repmot::trainer::{mse_loss, train_pairs, train_step, Pair, Phase, TrainState};
use repmot::{EncoderDims, Model, ModelConfig, TrainConfig};

use common::*;

fn dims() -> EncoderDims {
    EncoderDims { vocab_size: 12, d_emb: 6, hidden: 8, dim: 8, num_subvectors: 2 }
}

fn fixture(seed: u64) -> (TrainState<f64>, Vec<Vec<u32>>, Vec<Vec<u32>>) {
    let mut r = rng(seed);
    let encoder = EncoderParams::init(dims(), &mut r).unwrap();
    let docs: Vec<Vec<u32>> = (0..4).map(|i| vec![1 + 2 * i, 2 + 2 * i, 1 + 2 * i, 9]).collect();
    let queries: Vec<Vec<u32>> = (0..4).map(|i| vec![1 + 2 * i, 2 + 2 * i]).collect();
    let vecs: Vec<Vec<f64>> = docs.iter().chain(&queries).map(|d| encoder.encode(d)).collect();
    let codebooks = kmeans_init(&vecs, 2, 2, 10, seed).unwrap().codebooks;
    (TrainState { encoder, codebooks }, docs, queries)
}

fn batch<'a>(docs: &'a [Vec<u32>], queries: &'a [Vec<u32>]) -> Vec<Pair<'a>> {
    (0..docs.len()).map(|i| Pair { query: &queries[i], doc: &docs[i], doc_key: i }).collect()
}

#[test]
fn zero_learning_rates_leave_state_bit_exact() {
    let (mut state, docs, queries) = fixture(7);
    let before = state.clone();
    let cfg = TrainConfig { lr_encoder: 0.0, lr_codebook: 0.0, ..TrainConfig::default() };
    train_step(&mut state, &batch(&docs, &queries), &cfg).unwrap();
    assert_eq!(state, before);
}

#[test]
fn straight_through_moves_encoder_with_frozen_codebooks() {
    let (mut state, docs, queries) = fixture(7);
    let before = state.clone();
    let cfg = TrainConfig { lambda: 0.0, lr_codebook: 0.0, ..TrainConfig::default() };
    train_step(&mut state, &batch(&docs, &queries), &cfg).unwrap();
    assert_eq!(state.codebooks, before.codebooks);
    assert_ne!(state.encoder, before.encoder);
}

#[test]
fn without_straight_through_or_mse_encoder_is_fixed() {
    let (mut state, docs, queries) = fixture(7);
    let before = state.clone();
    let cfg = TrainConfig { lambda: 0.0, straight_through: false, ..TrainConfig::default() };
    train_step(&mut state, &batch(&docs, &queries), &cfg).unwrap();
    assert_eq!(state.encoder, before.encoder);
    assert_ne!(state.codebooks, before.codebooks);
}

#[test]
fn repeated_steps_on_fixed_batch_reduce_loss() {
    let (mut state, docs, queries) = fixture(7);
    let cfg = TrainConfig { lr_encoder: 0.05, lr_codebook: 0.2, lambda: 0.05, seed: 7, ..TrainConfig::default() };
    let b = batch(&docs, &queries);
    let losses: Vec<f64> = (0..50).map(|_| train_step(&mut state, &b, &cfg).unwrap().total).collect();
    assert!(losses[49] < losses[0], "{} -> {}", losses[0], losses[49]);
}

#[test]
fn total_is_weighted_sum() {
    let (mut state, docs, queries) = fixture(3);
    let cfg = TrainConfig { lambda: 0.37, ..TrainConfig::default() };
    let l = train_step(&mut state, &batch(&docs, &queries), &cfg).unwrap();
    assert_eq!(l.total, l.ranking + 0.37 * l.mse);
    assert!(l.ranking >= 0.0 && l.mse >= 0.0);
}

#[test]
fn batch_of_one_is_rejected() {
    let (mut state, docs, queries) = fixture(7);
    let b = batch(&docs, &queries);
    assert!(train_step(&mut state, &b[..1], &TrainConfig::default()).is_err());
}

#[test]
fn mse_matches_formula() {
    let mut r = rng(11);
    let v: Vec<Vec<f64>> = (0..4).map(|_| uniform_vec(&mut r, 6, 2.0)).collect();
    let m = mse_loss(&v[0], &v[1], &v[2], &v[3]).unwrap();
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    assert!((m.loss - 0.5 * (sq(&v[0], &v[1]) + sq(&v[2], &v[3]))).abs() < 1e-12);
}

#[test]
fn zero_epochs_give_initialization_plus_kmeans() {
    let data = generate(&SynthConfig { num_docs: 60, num_queries: 20, ..SynthConfig::default() }).unwrap();
    let mcfg = ModelConfig { num_centroids: 4, ..ModelConfig::default() };
    let tcfg = TrainConfig { warmup_epochs: 0, joint_epochs: 0, ..TrainConfig::default() };
    let (model, outcome) = Model::train(&data.corpus, &data.queries, &data.qrels, &mcfg, &tcfg).unwrap();
    assert!(outcome.history.is_empty());

    let mut r = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let init = EncoderParams::init(mcfg.dims(model.vocab.len()), &mut r).unwrap();
    assert_eq!(model.encoder, init);
}

#[test]
fn history_length_is_steps_times_epochs() {
    let data = generate(&SynthConfig { num_docs: 60, num_queries: 20, ..SynthConfig::default() }).unwrap();
    let mcfg = ModelConfig { num_centroids: 4, ..ModelConfig::default() };
    let tcfg = TrainConfig { warmup_epochs: 2, joint_epochs: 3, batch_size: 6, ..TrainConfig::default() };
    let (_, outcome) = Model::train(&data.corpus, &data.queries, &data.qrels, &mcfg, &tcfg).unwrap();
    assert_eq!(outcome.steps_per_epoch, 4);
    assert_eq!(outcome.history.len(), outcome.steps_per_epoch * 5);
    assert_eq!(outcome.epoch_means(Phase::Warmup).len(), 2);
    assert_eq!(outcome.epoch_means(Phase::Joint).len(), 3);
    let csv = repmot::trainer::loss_csv(&outcome.history);
    assert!(csv.starts_with("step,L_r,L_m,total\n"));
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn train_pairs_requires_two_pairs() {
    let (state, docs, queries) = fixture(1);
    let mut r = rng(1);
    assert!(train_pairs(state.encoder, &docs, &queries, &[(0, 0)], 2, &TrainConfig::default(), &mut r).is_err());
}
