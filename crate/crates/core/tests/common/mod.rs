#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repmot::encoder::EncoderParams;
use repmot::quantizer::Codebooks;
use repmot::{EncoderDims, Model, TokenSeq, Vocabulary};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Encoder with every tensor (biases included) drawn uniformly.
pub fn random_encoder(rng: &mut ChaCha8Rng, dims: EncoderDims, scale: f64) -> EncoderParams<f64> {
    let mut p = EncoderParams::<f64>::zeros(dims).unwrap();
    for t in [&mut p.embedding, &mut p.w1, &mut p.b1, &mut p.w2, &mut p.b2] {
        for v in t.iter_mut() {
            *v = rng.gen_range(-scale..scale);
        }
    }
    p
}

pub fn random_tokens(rng: &mut ChaCha8Rng, n: usize, vocab: usize) -> TokenSeq {
    TokenSeq::new((0..n).map(|_| rng.gen_range(0..vocab as u32)).collect()).unwrap()
}

pub fn random_codebooks(rng: &mut ChaCha8Rng, m: usize, k: usize, sub: usize, scale: f64) -> Codebooks<f64> {
    Codebooks::from_flat(m, k, sub, uniform_vec(rng, m * k * sub, scale)).unwrap()
}

/// Small random model over the vocabulary `w0 … w{v-1}` plus `<unk>`.
pub fn toy_model(seed: u64, words: usize, m: usize, k: usize) -> Model {
    let mut r = rng(seed);
    let vocab = Vocabulary::from_tokens((0..words).map(|i| format!("w{i}"))).unwrap();
    let dims = EncoderDims { vocab_size: vocab.len(), d_emb: 6, hidden: 8, dim: 2 * m, num_subvectors: m };
    let encoder = random_encoder(&mut r, dims, 0.8);
    let codebooks = random_codebooks(&mut r, m, k, 2, 1.0);
    Model::new(vocab, encoder, codebooks).unwrap()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, 1e-12)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-12)
}

/// Central finite differences of `f` with respect to every entry of `x`.
pub fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut xs = x.to_vec();
    (0..x.len())
        .map(|k| {
            let orig = xs[k];
            xs[k] = orig + h;
            let up = f(&xs);
            xs[k] = orig - h;
            let down = f(&xs);
            xs[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
