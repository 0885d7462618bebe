//! Integrated Gradients over input word embeddings, with targets that
//! measure how close the encoder output stays to its selected codeword.
//!
//! For sub-vector `i` the target is `F(z) = −‖d̂_i − f_i(z)‖²`, where `d̂_i`
//! is the centroid chosen for the unmodified input and is held fixed while
//! differentiating. The path integral is approximated with the midpoint
//! rule at `α_s = (s − ½)/S`.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::{TokenSeq, UNK_ID};
use crate::encoder::{EncoderParams, InputEmbeddings};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::scalar::{dot, Scalar};

/// How the baseline input is built from the actual tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Every position becomes `<unk>`.
    #[default]
    AllUnk,
    /// Listed token ids (e.g. stop words) keep their identity; all others become `<unk>`.
    KeepTokens(BTreeSet<u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributionConfig {
    /// Number of quadrature steps S.
    pub steps: usize,
    pub baseline: BaselineMode,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        Self { steps: 64, baseline: BaselineMode::AllUnk }
    }
}

impl AttributionConfig {
    pub fn with_steps(steps: usize) -> Self {
        Self { steps, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("attribution steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// The all-`<unk>` sequence of the same length.
pub fn baseline_of(tokens: &TokenSeq) -> TokenSeq {
    TokenSeq::new(vec![UNK_ID; tokens.len()]).expect("token sequences are non-empty")
}

pub fn baseline_with(tokens: &TokenSeq, mode: &BaselineMode) -> TokenSeq {
    match mode {
        BaselineMode::AllUnk => baseline_of(tokens),
        BaselineMode::KeepTokens(keep) => TokenSeq::new(
            tokens
                .iter()
                .map(|t| if keep.contains(t) { *t } else { UNK_ID })
                .collect(),
        )
        .expect("token sequences are non-empty"),
    }
}

/// A scalar function of the input embeddings with its gradient.
pub trait AttributionTarget<T> {
    fn value(&self, x: &InputEmbeddings<T>) -> T;
    fn gradient(&self, x: &InputEmbeddings<T>) -> InputEmbeddings<T>;
}

/// Integrated Gradients attribution of `target` for each row of `x`
/// relative to `baseline`, using `steps` midpoint samples.
pub fn integrated_gradients<T: Scalar, F: AttributionTarget<T> + ?Sized>(
    target: &F,
    x: &InputEmbeddings<T>,
    baseline: &InputEmbeddings<T>,
    steps: usize,
) -> Result<Vec<T>> {
    if x.rows() != baseline.rows() || x.width() != baseline.width() {
        return Err(Error::Dimension(format!(
            "input {}x{} vs baseline {}x{}",
            x.rows(),
            x.width(),
            baseline.rows(),
            baseline.width()
        )));
    }
    if steps == 0 {
        return Err(Error::Config("attribution steps must be at least 1".into()));
    }
    let mut acc = InputEmbeddings::zeros(x.rows(), x.width());
    for s in 0..steps {
        let z = InputEmbeddings::interpolate(baseline, x, midpoint::<T>(s, steps));
        let g = target.gradient(&z);
        for (a, &v) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *a += v;
        }
    }
    Ok(finish(&acc, x, baseline, steps))
}

fn midpoint<T: Scalar>(s: usize, steps: usize) -> T {
    (T::from_usize(s).unwrap() + T::lit(0.5)) / T::from_usize(steps).unwrap()
}

fn finish<T: Scalar>(acc: &InputEmbeddings<T>, x: &InputEmbeddings<T>, baseline: &InputEmbeddings<T>, steps: usize) -> Vec<T> {
    let inv = T::one() / T::from_usize(steps).unwrap();
    (0..x.rows())
        .map(|j| {
            let delta: Vec<T> = x.row(j).iter().zip(baseline.row(j)).map(|(&a, &b)| a - b).collect();
            dot(&delta, acc.row(j)) * inv
        })
        .collect()
}

/// `F(z) = −‖anchor − f(z)[range]‖²` for a fixed anchor.
#[derive(Debug, Clone)]
pub struct CodewordDistanceTarget<'a, T> {
    pub encoder: &'a EncoderParams<T>,
    pub anchor: Vec<T>,
    pub range: Range<usize>,
}

impl<T: Scalar> CodewordDistanceTarget<'_, T> {
    fn out_grad(&self, output: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); output.len()];
        let two = T::lit(2.0);
        for (k, &a) in self.range.clone().zip(&self.anchor) {
            g[k] = two * (a - output[k]);
        }
        g
    }
}

impl<T: Scalar> AttributionTarget<T> for CodewordDistanceTarget<'_, T> {
    fn value(&self, x: &InputEmbeddings<T>) -> T {
        let out = self.encoder.encode_embeddings(x);
        -self
            .range
            .clone()
            .zip(&self.anchor)
            .map(|(k, &a)| (a - out[k]) * (a - out[k]))
            .sum::<T>()
    }

    fn gradient(&self, x: &InputEmbeddings<T>) -> InputEmbeddings<T> {
        let fwd = self.encoder.forward(x);
        self.encoder.backprop_input_with(&fwd, x.rows(), &self.out_grad(&fwd.output))
    }
}

/// n × M attribution scores; entry (j, i) is token j's attribution for sub-vector i.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributionMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> AttributionMatrix<T> {
    pub fn from_columns(columns: Vec<Vec<T>>) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = vec![T::zero(); rows * cols];
        for (i, col) in columns.iter().enumerate() {
            for (j, &v) in col.iter().enumerate() {
                data[j * cols + i] = v;
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, token: usize, subvector: usize) -> T {
        self.data[token * self.cols + subvector]
    }

    pub fn column(&self, subvector: usize) -> Vec<T> {
        (0..self.rows).map(|j| self.get(j, subvector)).collect()
    }

    pub fn row(&self, token: usize) -> &[T] {
        &self.data[token * self.cols..(token + 1) * self.cols]
    }

    pub fn to_nested(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|j| self.row(j).to_vec()).collect()
    }
}

/// Runs IG for several codeword-distance targets sharing one forward pass per
/// path point. Each column's arithmetic is independent of the others, so the
/// result for a target does not depend on which other targets ride along.
fn ig_codeword_targets<T: Scalar>(
    encoder: &EncoderParams<T>,
    tokens: &TokenSeq,
    baseline: &TokenSeq,
    targets: &[CodewordDistanceTarget<'_, T>],
    steps: usize,
) -> Result<Vec<Vec<T>>> {
    if steps == 0 {
        return Err(Error::Config("attribution steps must be at least 1".into()));
    }
    let x = encoder.embed(tokens);
    let xb = encoder.embed(baseline);
    let mut acc: Vec<InputEmbeddings<T>> = targets.iter().map(|_| InputEmbeddings::zeros(x.rows(), x.width())).collect();
    for s in 0..steps {
        let z = InputEmbeddings::interpolate(&xb, &x, midpoint::<T>(s, steps));
        let fwd = encoder.forward(&z);
        for (t, a) in targets.iter().zip(acc.iter_mut()) {
            let g = encoder.backprop_input_with(&fwd, z.rows(), &t.out_grad(&fwd.output));
            for (av, &gv) in a.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *av += gv;
            }
        }
    }
    Ok(acc.iter().map(|a| finish(a, &x, &xb, steps)).collect())
}

fn subvector_target<'a, T: Scalar>(model: &'a Model<T>, d_hat: &[T], i: usize) -> CodewordDistanceTarget<'a, T> {
    let s = model.encoder.sub_dim();
    CodewordDistanceTarget { encoder: &model.encoder, anchor: d_hat[i * s..(i + 1) * s].to_vec(), range: i * s..(i + 1) * s }
}

fn global_target<'a, T: Scalar>(model: &'a Model<T>, d_hat: &[T]) -> CodewordDistanceTarget<'a, T> {
    CodewordDistanceTarget { encoder: &model.encoder, anchor: d_hat.to_vec(), range: 0..d_hat.len() }
}

fn check_inputs<T: Scalar>(model: &Model<T>, tokens: &TokenSeq, config: &AttributionConfig) -> Result<()> {
    config.validate()?;
    model.encoder.check_tokens(tokens)
}

/// Attribution of every token to the selection of sub-vector `i` (0-based).
pub fn subvector_attribution<T: Scalar>(
    model: &Model<T>,
    tokens: &TokenSeq,
    i: usize,
    config: &AttributionConfig,
) -> Result<Vec<T>> {
    check_inputs(model, tokens, config)?;
    if i >= model.num_subvectors() {
        return Err(Error::OutOfRange(format!("sub-vector {i} of {}", model.num_subvectors())));
    }
    let d_hat = model.discrete(tokens);
    let baseline = baseline_with(tokens, &config.baseline);
    let mut cols = ig_codeword_targets(&model.encoder, tokens, &baseline, &[subvector_target(model, &d_hat, i)], config.steps)?;
    Ok(cols.pop().unwrap())
}

/// Attribution with respect to the full discrete reconstruction d̂.
pub fn global_attribution<T: Scalar>(model: &Model<T>, tokens: &TokenSeq, config: &AttributionConfig) -> Result<Vec<T>> {
    check_inputs(model, tokens, config)?;
    let d_hat = model.discrete(tokens);
    let baseline = baseline_with(tokens, &config.baseline);
    let mut cols = ig_codeword_targets(&model.encoder, tokens, &baseline, &[global_target(model, &d_hat)], config.steps)?;
    Ok(cols.pop().unwrap())
}

pub fn attribution_matrix<T: Scalar>(
    model: &Model<T>,
    tokens: &TokenSeq,
    config: &AttributionConfig,
) -> Result<AttributionMatrix<T>> {
    check_inputs(model, tokens, config)?;
    let d_hat = model.discrete(tokens);
    let baseline = baseline_with(tokens, &config.baseline);
    let targets: Vec<_> = (0..model.num_subvectors()).map(|i| subvector_target(model, &d_hat, i)).collect();
    let cols = ig_codeword_targets(&model.encoder, tokens, &baseline, &targets, config.steps)?;
    Ok(AttributionMatrix::from_columns(cols))
}

/// Per-sub-vector matrix and global attribution in one pass over the path.
pub fn attribution_with_global<T: Scalar>(
    model: &Model<T>,
    tokens: &TokenSeq,
    config: &AttributionConfig,
) -> Result<(AttributionMatrix<T>, Vec<T>)> {
    check_inputs(model, tokens, config)?;
    let d_hat = model.discrete(tokens);
    let baseline = baseline_with(tokens, &config.baseline);
    let mut targets: Vec<_> = (0..model.num_subvectors()).map(|i| subvector_target(model, &d_hat, i)).collect();
    targets.push(global_target(model, &d_hat));
    let mut cols = ig_codeword_targets(&model.encoder, tokens, &baseline, &targets, config.steps)?;
    let global = cols.pop().unwrap();
    Ok((AttributionMatrix::from_columns(cols), global))
}

/// Evaluates the codeword-distance target of sub-vector `i` (or the global
/// target when `i` is `None`) at the actual input and at the baseline.
pub fn target_endpoints<T: Scalar>(
    model: &Model<T>,
    tokens: &TokenSeq,
    i: Option<usize>,
    baseline: &BaselineMode,
) -> (T, T) {
    let d_hat = model.discrete(tokens);
    let target = match i {
        Some(i) => subvector_target(model, &d_hat, i),
        None => global_target(model, &d_hat),
    };
    let x = model.encoder.embed(tokens);
    let xb = model.encoder.embed(&baseline_with(tokens, baseline));
    (target.value(&x), target.value(&xb))
}

/// One document's attribution record, serialized as a JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub code: Vec<u32>,
}

impl AttributionReport {
    pub fn build<T: Scalar>(model: &Model<T>, doc_id: &str, tokens: &TokenSeq, config: &AttributionConfig) -> Result<Self> {
        let matrix = attribution_matrix(model, tokens, config)?;
        Ok(Self {
            doc_id: doc_id.to_string(),
            tokens: tokens.iter().map(|&t| model.vocab.token(t).unwrap_or("<unk>").to_string()).collect(),
            matrix: matrix.to_nested().into_iter().map(|r| r.into_iter().map(Scalar::as_f64).collect()).collect(),
            code: model.code(tokens).indices().to_vec(),
        })
    }

    pub fn to_json_line(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }
}
