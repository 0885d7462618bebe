//! Joint optimization of the encoder and the codebooks.
//!
//! The ranking loss is a softmax cross-entropy over inner products of the
//! discrete query and document vectors with in-batch negatives; the
//! clustering loss pulls continuous and discrete vectors together:
//!
//! ```text
//! L_r = −log( e^⟨q̂,d̂⁺⟩ / (e^⟨q̂,d̂⁺⟩ + Σ e^⟨q̂,d̂⁻⟩) )
//! L_m = ½ (‖f(d) − d̂‖² + ‖f(q) − q̂‖²)
//! L   = L_r + λ·L_m
//! ```
//!
//! Centroids receive both gradients. Encoders receive the `L_m` gradient
//! and, through the straight-through estimator, the `L_r` gradient of the
//! discrete vectors.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{DenseVec, EncoderGrads, EncoderParams, Forward};
use crate::error::{Error, Result};
use crate::quantizer::{kmeans_init, Codebooks, DiscreteCode};
use crate::scalar::{axpy, dot, squared_distance, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight λ of the clustering loss.
    pub lambda: f64,
    pub lr_encoder: f64,
    pub lr_codebook: f64,
    pub batch_size: usize,
    pub warmup_epochs: usize,
    pub joint_epochs: usize,
    pub kmeans_iters: usize,
    pub seed: u64,
    /// Balanced (capacity-constrained) document assignment during joint training.
    pub balanced: bool,
    /// Route ranking-loss gradients of discrete vectors to the encoder outputs.
    pub straight_through: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            lr_encoder: 0.05,
            lr_codebook: 0.2,
            batch_size: 4,
            warmup_epochs: 10,
            joint_epochs: 20,
            kmeans_iters: 25,
            seed: 7,
            balanced: true,
            straight_through: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and ≥ 0, got {}", self.lambda)));
        }
        for (name, lr) in [("lr_encoder", self.lr_encoder), ("lr_codebook", self.lr_codebook)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and ≥ 0, got {lr}")));
            }
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2 for in-batch negatives".into()));
        }
        if self.kmeans_iters == 0 {
            return Err(Error::Config("kmeans_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown<T> {
    pub ranking: T,
    pub mse: T,
    pub total: T,
}

/// Ranking loss value with gradients for every input vector.
#[derive(Debug, Clone)]
pub struct RankingLoss<T> {
    pub loss: T,
    pub grad_query: Vec<T>,
    pub grad_positive: Vec<T>,
    pub grad_negatives: Vec<Vec<T>>,
}

/// Softmax cross-entropy of the positive against the negatives, computed
/// with max-subtraction.
pub fn ranking_loss<T: Scalar>(query: &[T], positive: &[T], negatives: &[&[T]]) -> Result<RankingLoss<T>> {
    if negatives.is_empty() {
        return Err(Error::Empty("ranking loss needs at least one negative".into()));
    }
    let dim = query.len();
    if positive.len() != dim || negatives.iter().any(|n| n.len() != dim) {
        return Err(Error::Dimension("ranking loss inputs differ in length".into()));
    }
    let mut scores = Vec::with_capacity(negatives.len() + 1);
    scores.push(dot(query, positive));
    scores.extend(negatives.iter().map(|n| dot(query, n)));
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = scores.iter().map(|&s| (s - max).exp()).collect();
    let denom: T = exps.iter().copied().sum();
    let loss = max + denom.ln() - scores[0];
    let probs: Vec<T> = exps.iter().map(|&e| e / denom).collect();

    let coef_pos = probs[0] - T::one();
    let mut grad_query: Vec<T> = positive.iter().map(|&p| coef_pos * p).collect();
    for (n, &p) in negatives.iter().zip(&probs[1..]) {
        axpy(p, n, &mut grad_query);
    }
    let grad_positive = query.iter().map(|&q| coef_pos * q).collect();
    let grad_negatives = probs[1..].iter().map(|&p| query.iter().map(|&q| p * q).collect()).collect();
    Ok(RankingLoss { loss, grad_query, grad_positive, grad_negatives })
}

/// Clustering loss with gradients with respect to the continuous vectors;
/// the gradients with respect to the discrete vectors are their negations.
#[derive(Debug, Clone)]
pub struct MseLoss<T> {
    pub loss: T,
    pub grad_doc: Vec<T>,
    pub grad_query: Vec<T>,
}

pub fn mse_loss<T: Scalar>(f_doc: &[T], doc_hat: &[T], f_query: &[T], query_hat: &[T]) -> Result<MseLoss<T>> {
    if f_doc.len() != doc_hat.len() || f_query.len() != query_hat.len() {
        return Err(Error::Dimension("clustering loss inputs differ in length".into()));
    }
    let half = T::lit(0.5);
    let loss = half * (squared_distance(f_doc, doc_hat) + squared_distance(f_query, query_hat));
    let diff = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| x - y).collect::<Vec<T>>();
    Ok(MseLoss { loss, grad_doc: diff(f_doc, doc_hat), grad_query: diff(f_query, query_hat) })
}

/// Mutable training state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub encoder: EncoderParams<T>,
    pub codebooks: Codebooks<T>,
}

/// One (query, positive document) training example. `doc_key` identifies the
/// document so that a batch never uses a query's own positive as a negative.
#[derive(Debug, Clone, Copy)]
pub struct Pair<'a> {
    pub query: &'a [u32],
    pub doc: &'a [u32],
    pub doc_key: usize,
}

fn batch_forward<T: Scalar>(encoder: &EncoderParams<T>, batch: &[Pair<'_>]) -> (Vec<Forward<T>>, Vec<Forward<T>>) {
    batch
        .par_iter()
        .map(|p| (encoder.forward(&encoder.embed(p.query)), encoder.forward(&encoder.embed(p.doc))))
        .unzip()
}

/// Mean loss with per-example query and document gradients.
type RankingGrads<T> = (T, Vec<Vec<T>>, Vec<Vec<T>>);

/// In-batch ranking loss over the given query/document vectors. Returns the
/// mean loss and per-example gradients (already divided by the number of
/// contributing queries).
fn in_batch_ranking<T: Scalar>(
    queries: &[DenseVec<T>],
    docs: &[DenseVec<T>],
    batch: &[Pair<'_>],
) -> Result<RankingGrads<T>> {
    let b = batch.len();
    let dim = queries[0].len();
    let mut grad_q = vec![vec![T::zero(); dim]; b];
    let mut grad_d = vec![vec![T::zero(); dim]; b];
    let contributing: Vec<(usize, Vec<usize>)> = (0..b)
        .map(|i| (i, (0..b).filter(|&j| j != i && batch[j].doc_key != batch[i].doc_key).collect::<Vec<_>>()))
        .filter(|(_, negs)| !negs.is_empty())
        .collect();
    if contributing.is_empty() {
        return Ok((T::zero(), grad_q, grad_d));
    }
    let scale = T::one() / T::from_usize(contributing.len()).unwrap();
    let mut total = T::zero();
    for (i, negs) in &contributing {
        let neg_refs: Vec<&[T]> = negs.iter().map(|&j| docs[j].as_slice()).collect();
        let rl = ranking_loss(&queries[*i], &docs[*i], &neg_refs)?;
        total += rl.loss;
        axpy(scale, &rl.grad_query, &mut grad_q[*i]);
        axpy(scale, &rl.grad_positive, &mut grad_d[*i]);
        for (&j, g) in negs.iter().zip(&rl.grad_negatives) {
            axpy(scale, g, &mut grad_d[j]);
        }
    }
    Ok((total * scale, grad_q, grad_d))
}

fn accumulate_encoder_grads<T: Scalar>(
    encoder: &EncoderParams<T>,
    batch: &[Pair<'_>],
    fq: &[Forward<T>],
    fd: &[Forward<T>],
    gq: &[Vec<T>],
    gd: &[Vec<T>],
) -> EncoderGrads<T> {
    let parts: Vec<(EncoderGrads<T>, EncoderGrads<T>)> = (0..batch.len())
        .into_par_iter()
        .map(|b| {
            (
                encoder.backprop_params_with(&fq[b], batch[b].query, &gq[b]),
                encoder.backprop_params_with(&fd[b], batch[b].doc, &gd[b]),
            )
        })
        .collect();
    let mut total = EncoderGrads::zeros(encoder.dims());
    for (q, d) in &parts {
        total.add_assign(q);
        total.add_assign(d);
    }
    total
}

/// One step of the continuous warmup: in-batch ranking loss on f(q), f(d).
pub fn warmup_step<T: Scalar>(encoder: &mut EncoderParams<T>, batch: &[Pair<'_>], config: &TrainConfig) -> Result<T> {
    if batch.len() < 2 {
        return Err(Error::Config(format!("batch of {} is too small for in-batch negatives", batch.len())));
    }
    let (fq, fd) = batch_forward(encoder, batch);
    let qv: Vec<DenseVec<T>> = fq.iter().map(|f| f.output.clone()).collect();
    let dv: Vec<DenseVec<T>> = fd.iter().map(|f| f.output.clone()).collect();
    let (loss, gq, gd) = in_batch_ranking(&qv, &dv, batch)?;
    if config.lr_encoder > 0.0 {
        let grads = accumulate_encoder_grads(encoder, batch, &fq, &fd, &gq, &gd);
        encoder.apply(&grads, -T::lit(config.lr_encoder));
    }
    Ok(loss)
}

/// One joint step on discrete representations.
pub fn train_step<T: Scalar>(state: &mut TrainState<T>, batch: &[Pair<'_>], config: &TrainConfig) -> Result<LossBreakdown<T>> {
    if batch.len() < 2 {
        return Err(Error::Config(format!("batch of {} is too small for in-batch negatives", batch.len())));
    }
    let b = batch.len();
    let lambda = T::lit(config.lambda);
    let (fq, fd) = batch_forward(&state.encoder, batch);
    let cb = &state.codebooks;

    let q_codes: Vec<DiscreteCode> = fq.iter().map(|f| cb.assign(&f.output)).collect::<Result<_>>()?;
    let d_codes: Vec<DiscreteCode> = if config.balanced {
        let dv: Vec<DenseVec<T>> = fd.iter().map(|f| f.output.clone()).collect();
        cb.balanced_assign(&dv)?
    } else {
        fd.iter().map(|f| cb.assign(&f.output)).collect::<Result<_>>()?
    };
    let q_hat: Vec<DenseVec<T>> = q_codes.iter().map(|c| cb.reconstruct(c)).collect::<Result<_>>()?;
    let d_hat: Vec<DenseVec<T>> = d_codes.iter().map(|c| cb.reconstruct(c)).collect::<Result<_>>()?;

    let (ranking, rank_gq, rank_gd) = in_batch_ranking(&q_hat, &d_hat, batch)?;

    let inv_b = T::one() / T::from_usize(b).unwrap();
    let mut mse = T::zero();
    // Per-example gradients on the continuous outputs (encoder side) and on
    // the discrete vectors (centroid side).
    let mut enc_gq = Vec::with_capacity(b);
    let mut enc_gd = Vec::with_capacity(b);
    let mut hat_gq = rank_gq;
    let mut hat_gd = rank_gd;
    for i in 0..b {
        let m = mse_loss(&fd[i].output, &d_hat[i], &fq[i].output, &q_hat[i])?;
        mse += m.loss * inv_b;
        let w = lambda * inv_b;
        let mut gq: Vec<T> = m.grad_query.iter().map(|&g| w * g).collect();
        let mut gd: Vec<T> = m.grad_doc.iter().map(|&g| w * g).collect();
        if config.straight_through {
            axpy(T::one(), &hat_gq[i], &mut gq);
            axpy(T::one(), &hat_gd[i], &mut gd);
        }
        axpy(-w, &m.grad_query, &mut hat_gq[i]);
        axpy(-w, &m.grad_doc, &mut hat_gd[i]);
        enc_gq.push(gq);
        enc_gd.push(gd);
    }

    if config.lr_codebook > 0.0 {
        let sub = cb.sub_dim();
        let mut cgrad = vec![T::zero(); cb.as_slice().len()];
        let k = cb.num_centroids();
        for i in 0..b {
            for (code, grad) in [(&q_codes[i], &hat_gq[i]), (&d_codes[i], &hat_gd[i])] {
                for pool in 0..cb.num_pools() {
                    let start = (pool * k + code.get(pool)) * sub;
                    axpy(T::one(), &grad[pool * sub..(pool + 1) * sub], &mut cgrad[start..start + sub]);
                }
            }
        }
        axpy(-T::lit(config.lr_codebook), &cgrad, state.codebooks.as_mut_slice());
    }
    if config.lr_encoder > 0.0 {
        let grads = accumulate_encoder_grads(&state.encoder, batch, &fq, &fd, &enc_gq, &enc_gd);
        state.encoder.apply(&grads, -T::lit(config.lr_encoder));
    }
    Ok(LossBreakdown { ranking, mse, total: ranking + lambda * mse })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    Warmup,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossRecord {
    pub step: usize,
    pub phase: Phase,
    pub ranking: f64,
    pub mse: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub state: TrainState<T>,
    pub history: Vec<LossRecord>,
    pub steps_per_epoch: usize,
}

impl<T> TrainOutcome<T> {
    /// Mean total loss of each epoch of the given phase.
    pub fn epoch_means(&self, phase: Phase) -> Vec<f64> {
        let recs: Vec<&LossRecord> = self.history.iter().filter(|r| r.phase == phase).collect();
        if self.steps_per_epoch == 0 {
            return Vec::new();
        }
        recs.chunks(self.steps_per_epoch)
            .map(|c| c.iter().map(|r| r.total).sum::<f64>() / c.len() as f64)
            .collect()
    }
}

/// Loss history as CSV: `step,L_r,L_m,total`.
pub fn loss_csv(history: &[LossRecord]) -> String {
    let mut out = String::from("step,L_r,L_m,total\n");
    for r in history {
        let _ = writeln!(out, "{},{},{},{}", r.step, r.ranking, r.mse, r.total);
    }
    out
}

fn epoch_batches<R: Rng>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
        .chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Three-phase training over pre-tokenized data.
///
/// 1. `warmup_epochs` of the continuous ranking loss on the encoder alone;
/// 2. k-means codebooks on all document encodings;
/// 3. `joint_epochs` of [`train_step`].
///
/// `pairs` holds (query index, document index). The encoder is taken as
/// given; `rng` drives batching and the k-means seed.
pub fn train_pairs<T: Scalar, R: Rng>(
    mut encoder: EncoderParams<T>,
    docs: &[Vec<u32>],
    queries: &[Vec<u32>],
    pairs: &[(usize, usize)],
    num_centroids: usize,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if docs.is_empty() {
        return Err(Error::Empty("corpus".into()));
    }
    if pairs.len() < 2 && config.warmup_epochs + config.joint_epochs > 0 {
        return Err(Error::Empty("training needs at least two query/document pairs".into()));
    }
    let to_pairs = |idx: &[usize]| -> Vec<Pair<'_>> {
        idx.iter()
            .map(|&p| {
                let (q, d) = pairs[p];
                Pair { query: &queries[q], doc: &docs[d], doc_key: d }
            })
            .collect()
    };

    let mut history = Vec::new();
    let mut steps_per_epoch = 0;
    for _ in 0..config.warmup_epochs {
        let batches = epoch_batches(pairs.len(), config.batch_size, rng);
        steps_per_epoch = batches.len();
        for idx in &batches {
            let loss = warmup_step(&mut encoder, &to_pairs(idx), config)?;
            history.push(LossRecord {
                step: history.len(),
                phase: Phase::Warmup,
                ranking: loss.as_f64(),
                mse: 0.0,
                total: loss.as_f64(),
            });
        }
    }

    let doc_vecs: Vec<DenseVec<T>> = docs.par_iter().map(|d| encoder.encode(d)).collect();
    let kmeans_seed: u64 = rng.gen();
    let fit = kmeans_init(&doc_vecs, encoder.num_subvectors(), num_centroids, config.kmeans_iters, kmeans_seed)?;
    let mut state = TrainState { encoder, codebooks: fit.codebooks };

    for _ in 0..config.joint_epochs {
        let batches = epoch_batches(pairs.len(), config.batch_size, rng);
        steps_per_epoch = batches.len();
        for idx in &batches {
            let l = train_step(&mut state, &to_pairs(idx), config)?;
            history.push(LossRecord {
                step: history.len(),
                phase: Phase::Joint,
                ranking: l.ranking.as_f64(),
                mse: l.mse.as_f64(),
                total: l.total.as_f64(),
            });
        }
    }
    if steps_per_epoch == 0 {
        steps_per_epoch = pairs.len() / config.batch_size + usize::from(pairs.len() % config.batch_size >= 2);
    }
    Ok(TrainOutcome { state, history, steps_per_epoch })
}
