//! The shared dual encoder: mean-pooled word embeddings, a tanh hidden
//! layer and a linear output layer,
//!
//! ```text
//! f(x) = W2 · tanh(W1 · mean(x) + b1) + b2
//! ```
//!
//! with exact gradients with respect to both the parameters and the input
//! embedding rows.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::scalar::{axpy, Scalar};

/// A D-dimensional (or D/M-dimensional) dense vector.
pub type DenseVec<T> = Vec<T>;

/// Encoder shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EncoderDims {
    pub vocab_size: usize,
    pub d_emb: usize,
    pub hidden: usize,
    /// Output dimension D.
    pub dim: usize,
    /// Number of sub-vectors M; must divide `dim`.
    pub num_subvectors: usize,
}

impl EncoderDims {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.d_emb == 0 || self.hidden == 0 || self.dim == 0 || self.num_subvectors == 0 {
            return Err(Error::Config(format!("encoder dimensions must be positive: {self:?}")));
        }
        if !self.dim.is_multiple_of(self.num_subvectors) {
            return Err(Error::Config(format!(
                "output dimension {} is not divisible by {} sub-vectors",
                self.dim, self.num_subvectors
            )));
        }
        Ok(())
    }

    pub fn sub_dim(&self) -> usize {
        self.dim / self.num_subvectors
    }
}

/// Input word embeddings, one row per token position.
#[derive(Debug, Clone, PartialEq)]
pub struct InputEmbeddings<T> {
    rows: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> InputEmbeddings<T> {
    pub fn new(rows: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::Empty("input embeddings".into()));
        }
        if data.len() != rows * width {
            return Err(Error::Dimension(format!("{} values for a {rows}x{width} matrix", data.len())));
        }
        Ok(Self { rows, width, data })
    }

    pub fn zeros(rows: usize, width: usize) -> Self {
        Self { rows, width, data: vec![T::zero(); rows * width] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, j: usize) -> &[T] {
        &self.data[j * self.width..(j + 1) * self.width]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.width..(j + 1) * self.width]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// `base + alpha · (self − base)`, row by row.
    pub fn interpolate(base: &Self, target: &Self, alpha: T) -> Self {
        debug_assert_eq!(base.data.len(), target.data.len());
        let data = base
            .data
            .iter()
            .zip(&target.data)
            .map(|(&b, &x)| b + alpha * (x - b))
            .collect();
        Self { rows: base.rows, width: base.width, data }
    }

    fn mean_row(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.width];
        for j in 0..self.rows {
            for (o, &v) in out.iter_mut().zip(self.row(j)) {
                *o += v;
            }
        }
        let inv = T::one() / T::from_usize(self.rows).unwrap();
        out.iter_mut().for_each(|v| *v *= inv);
        out
    }
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub pooled: Vec<T>,
    /// tanh(W1 · pooled + b1)
    pub activation: Vec<T>,
    pub output: DenseVec<T>,
}

/// All weights of the encoder. Matrices are row-major: `w1` is hidden × d_emb,
/// `w2` is D × hidden, `embedding` is V × d_emb.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    dims: EncoderDims,
    pub embedding: Vec<T>,
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: Vec<T>,
}

/// Gradient bundle with the same shapes as [`EncoderParams`]. Embedding
/// gradients are stored sparsely per token id; absent rows are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads<T> {
    pub embedding: BTreeMap<u32, Vec<T>>,
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: Vec<T>,
}

impl<T: Scalar> EncoderGrads<T> {
    pub fn zeros(dims: &EncoderDims) -> Self {
        Self {
            embedding: BTreeMap::new(),
            w1: vec![T::zero(); dims.hidden * dims.d_emb],
            b1: vec![T::zero(); dims.hidden],
            w2: vec![T::zero(); dims.dim * dims.hidden],
            b2: vec![T::zero(); dims.dim],
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (id, row) in &other.embedding {
            match self.embedding.get_mut(id) {
                Some(dst) => axpy(T::one(), row, dst),
                None => {
                    self.embedding.insert(*id, row.clone());
                }
            }
        }
        axpy(T::one(), &other.w1, &mut self.w1);
        axpy(T::one(), &other.b1, &mut self.b1);
        axpy(T::one(), &other.w2, &mut self.w2);
        axpy(T::one(), &other.b2, &mut self.b2);
    }

    /// Dense V × d_emb view of the embedding gradient.
    pub fn embedding_dense(&self, dims: &EncoderDims) -> Vec<T> {
        let mut out = vec![T::zero(); dims.vocab_size * dims.d_emb];
        for (&id, row) in &self.embedding {
            let start = id as usize * dims.d_emb;
            out[start..start + dims.d_emb].copy_from_slice(row);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        let z = |v: &[T]| v.iter().all(|x| x.is_zero());
        self.embedding.values().all(|r| z(r)) && z(&self.w1) && z(&self.b1) && z(&self.w2) && z(&self.b2)
    }
}

impl<T: Scalar> EncoderParams<T> {
    pub fn zeros(dims: EncoderDims) -> Result<Self> {
        dims.validate()?;
        Ok(Self {
            embedding: vec![T::zero(); dims.vocab_size * dims.d_emb],
            w1: vec![T::zero(); dims.hidden * dims.d_emb],
            b1: vec![T::zero(); dims.hidden],
            w2: vec![T::zero(); dims.dim * dims.hidden],
            b2: vec![T::zero(); dims.dim],
            dims,
        })
    }

    /// Embeddings ~ N(0, 0.1²), weights Glorot-uniform, biases zero.
    pub fn init<R: Rng + ?Sized>(dims: EncoderDims, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(dims)?;
        let normal = Normal::new(0.0, 0.1).expect("valid normal");
        for v in p.embedding.iter_mut() {
            *v = T::lit(normal.sample(rng));
        }
        let glorot = |fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Uniform::new_inclusive(-limit, limit)
        };
        let u1 = glorot(dims.d_emb, dims.hidden);
        for v in p.w1.iter_mut() {
            *v = T::lit(u1.sample(rng));
        }
        let u2 = glorot(dims.hidden, dims.dim);
        for v in p.w2.iter_mut() {
            *v = T::lit(u2.sample(rng));
        }
        Ok(p)
    }

    /// Assembles parameters from raw tensors, checking every shape.
    pub fn from_parts(
        dims: EncoderDims,
        embedding: Vec<T>,
        w1: Vec<T>,
        b1: Vec<T>,
        w2: Vec<T>,
        b2: Vec<T>,
    ) -> Result<Self> {
        dims.validate()?;
        let check = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::Dimension(format!("{name}: expected {want} values, got {got}")))
            }
        };
        check("embedding", embedding.len(), dims.vocab_size * dims.d_emb)?;
        check("w1", w1.len(), dims.hidden * dims.d_emb)?;
        check("b1", b1.len(), dims.hidden)?;
        check("w2", w2.len(), dims.dim * dims.hidden)?;
        check("b2", b2.len(), dims.dim)?;
        Ok(Self { dims, embedding, w1, b1, w2, b2 })
    }

    pub fn dims(&self) -> &EncoderDims {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.dim
    }

    pub fn num_subvectors(&self) -> usize {
        self.dims.num_subvectors
    }

    pub fn sub_dim(&self) -> usize {
        self.dims.sub_dim()
    }

    pub fn embedding_row(&self, id: u32) -> &[T] {
        let d = self.dims.d_emb;
        &self.embedding[id as usize * d..(id as usize + 1) * d]
    }

    pub fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::NoTokens);
        }
        match tokens.iter().find(|&&t| t as usize >= self.dims.vocab_size) {
            Some(t) => Err(Error::OutOfRange(format!("token id {t} ≥ vocabulary size {}", self.dims.vocab_size))),
            None => Ok(()),
        }
    }

    /// Materializes one embedding row per token.
    pub fn embed(&self, tokens: &[u32]) -> InputEmbeddings<T> {
        let d = self.dims.d_emb;
        let mut data = Vec::with_capacity(tokens.len() * d);
        for &t in tokens {
            data.extend_from_slice(self.embedding_row(t));
        }
        InputEmbeddings { rows: tokens.len(), width: d, data }
    }

    pub fn forward(&self, x: &InputEmbeddings<T>) -> Forward<T> {
        let pooled = x.mean_row();
        let (h, d, out_dim) = (self.dims.hidden, self.dims.d_emb, self.dims.dim);
        let mut activation = self.b1.clone();
        for (r, a) in activation.iter_mut().enumerate() {
            let row = &self.w1[r * d..(r + 1) * d];
            for (&w, &p) in row.iter().zip(&pooled) {
                *a += w * p;
            }
            *a = a.tanh();
        }
        let mut output = self.b2.clone();
        for (r, o) in output.iter_mut().enumerate().take(out_dim) {
            let row = &self.w2[r * h..(r + 1) * h];
            for (&w, &a) in row.iter().zip(&activation) {
                *o += w * a;
            }
        }
        Forward { pooled, activation, output }
    }

    pub fn encode_embeddings(&self, x: &InputEmbeddings<T>) -> DenseVec<T> {
        self.forward(x).output
    }

    pub fn encode(&self, tokens: &[u32]) -> DenseVec<T> {
        self.encode_embeddings(&self.embed(tokens))
    }

    /// Gradient of ⟨out_grad, f⟩ with respect to the pooled input and the
    /// pre-activation, given a cached forward pass.
    fn backprop_pooled(&self, fwd: &Forward<T>, out_grad: &[T]) -> (Vec<T>, Vec<T>) {
        let (h, d) = (self.dims.hidden, self.dims.d_emb);
        let mut grad_pre = vec![T::zero(); h];
        for (r, &g) in out_grad.iter().enumerate() {
            if g.is_zero() {
                continue;
            }
            axpy(g, &self.w2[r * h..(r + 1) * h], &mut grad_pre);
        }
        for (gp, &a) in grad_pre.iter_mut().zip(&fwd.activation) {
            *gp *= T::one() - a * a;
        }
        let mut grad_pooled = vec![T::zero(); d];
        for (r, &g) in grad_pre.iter().enumerate() {
            axpy(g, &self.w1[r * d..(r + 1) * d], &mut grad_pooled);
        }
        (grad_pooled, grad_pre)
    }

    /// Gradient of ⟨out_grad, f(x)⟩ with respect to every input row.
    pub fn backprop_input(&self, x: &InputEmbeddings<T>, out_grad: &[T]) -> InputEmbeddings<T> {
        let fwd = self.forward(x);
        self.backprop_input_with(&fwd, x.rows(), out_grad)
    }

    /// As [`backprop_input`](Self::backprop_input) but reusing a forward pass.
    pub fn backprop_input_with(&self, fwd: &Forward<T>, rows: usize, out_grad: &[T]) -> InputEmbeddings<T> {
        let (grad_pooled, _) = self.backprop_pooled(fwd, out_grad);
        let inv_n = T::one() / T::from_usize(rows).unwrap();
        let row: Vec<T> = grad_pooled.iter().map(|&g| g * inv_n).collect();
        let mut data = Vec::with_capacity(rows * row.len());
        for _ in 0..rows {
            data.extend_from_slice(&row);
        }
        InputEmbeddings { rows, width: self.dims.d_emb, data }
    }

    /// Gradient of ⟨out_grad, f(embed(tokens))⟩ with respect to every parameter.
    pub fn backprop_params(&self, tokens: &[u32], out_grad: &[T]) -> EncoderGrads<T> {
        let x = self.embed(tokens);
        let fwd = self.forward(&x);
        self.backprop_params_with(&fwd, tokens, out_grad)
    }

    pub fn backprop_params_with(&self, fwd: &Forward<T>, tokens: &[u32], out_grad: &[T]) -> EncoderGrads<T> {
        let (h, d) = (self.dims.hidden, self.dims.d_emb);
        let (grad_pooled, grad_pre) = self.backprop_pooled(fwd, out_grad);
        let mut grads = EncoderGrads::zeros(&self.dims);
        grads.b2.copy_from_slice(out_grad);
        for (r, &g) in out_grad.iter().enumerate() {
            for (w, &a) in grads.w2[r * h..(r + 1) * h].iter_mut().zip(&fwd.activation) {
                *w = g * a;
            }
        }
        grads.b1.copy_from_slice(&grad_pre);
        for (r, &g) in grad_pre.iter().enumerate() {
            for (w, &p) in grads.w1[r * d..(r + 1) * d].iter_mut().zip(&fwd.pooled) {
                *w = g * p;
            }
        }
        let inv_n = T::one() / T::from_usize(tokens.len()).unwrap();
        for &t in tokens {
            let row = grads.embedding.entry(t).or_insert_with(|| vec![T::zero(); d]);
            axpy(inv_n, &grad_pooled, row);
        }
        grads
    }

    /// `params += scale · grads`.
    pub fn apply(&mut self, grads: &EncoderGrads<T>, scale: T) {
        let d = self.dims.d_emb;
        for (&id, row) in &grads.embedding {
            let start = id as usize * d;
            axpy(scale, row, &mut self.embedding[start..start + d]);
        }
        axpy(scale, &grads.w1, &mut self.w1);
        axpy(scale, &grads.b1, &mut self.b1);
        axpy(scale, &grads.w2, &mut self.w2);
        axpy(scale, &grads.b2, &mut self.b2);
    }

    /// Converts to another scalar type (lossy for f64 → f32).
    pub fn cast<U: Scalar>(&self) -> EncoderParams<U> {
        let c = |v: &[T]| v.iter().map(|&x| U::lit(x.as_f64())).collect();
        EncoderParams {
            dims: self.dims,
            embedding: c(&self.embedding),
            w1: c(&self.w1),
            b1: c(&self.b1),
            w2: c(&self.w2),
            b2: c(&self.b2),
        }
    }
}

/// Contiguous slice `i` (0-based) of a D-dimensional vector split into `m` parts.
pub fn sub_vector<T>(vec: &[T], m: usize, i: usize) -> Result<&[T]> {
    if m == 0 || !vec.len().is_multiple_of(m) {
        return Err(Error::Dimension(format!("length {} not divisible into {m} sub-vectors", vec.len())));
    }
    if i >= m {
        return Err(Error::OutOfRange(format!("sub-vector {i} of {m}")));
    }
    let s = vec.len() / m;
    Ok(&vec[i * s..(i + 1) * s])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> EncoderDims {
        EncoderDims { vocab_size: 10, d_emb: 4, hidden: 5, dim: 6, num_subvectors: 3 }
    }

    fn random_params(seed: u64) -> EncoderParams<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = EncoderParams::init(dims(), &mut rng).unwrap();
        for b in p.b1.iter_mut().chain(p.b2.iter_mut()) {
            *b = rng.gen_range(-0.5..0.5);
        }
        p
    }

    #[test]
    fn rejects_indivisible_dims() {
        let mut d = dims();
        d.dim = 7;
        assert!(EncoderParams::<f64>::zeros(d).is_err());
    }

    #[test]
    fn embed_rows() {
        let p = random_params(1);
        let x = p.embed(&[0]);
        assert_eq!(x.rows(), 1);
        assert_eq!(x.row(0), p.embedding_row(0));
        let x = p.embed(&[3, 3]);
        assert_eq!(x.row(0), x.row(1));
        let x = p.embed(&[1, 2]);
        assert_eq!(x.row(0), p.embedding_row(1));
        assert_eq!(x.row(1), p.embedding_row(2));
    }

    #[test]
    fn zero_and_constant_encoders() {
        let p = EncoderParams::<f64>::zeros(dims()).unwrap();
        assert!(p.encode(&[1, 2, 3]).iter().all(|v| *v == 0.0));
        let mut p = random_params(2);
        p.w1.iter_mut().for_each(|v| *v = 0.0);
        p.b1.iter_mut().for_each(|v| *v = 0.0);
        p.w2.iter_mut().for_each(|v| *v = 0.0);
        let c = vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0];
        p.b2 = c.clone();
        assert_eq!(p.encode(&[4, 5]), c);
        assert_eq!(p.encode(&[7]), c);
    }

    #[test]
    fn mean_pooling_symmetries() {
        let p = random_params(3);
        assert_eq!(p.encode(&[5, 7]), p.encode(&[7, 5]));
        assert_eq!(p.encode(&[4, 4]), p.encode(&[4]));
        assert_eq!(p.encode(&[1, 2]).len(), 6);
        assert_eq!(p.encode(&[1, 2, 9]), p.encode_embeddings(&p.embed(&[1, 2, 9])));
    }

    #[test]
    fn sub_vector_slices() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(sub_vector(&v, 2, 0).unwrap(), &[1.0, 2.0]);
        assert_eq!(sub_vector(&v, 2, 1).unwrap(), &[3.0, 4.0]);
        let cat: Vec<f64> = (0..2).flat_map(|i| sub_vector(&v, 2, i).unwrap().to_vec()).collect();
        assert_eq!(cat, v);
        assert!(sub_vector(&v, 2, 2).is_err());
    }

    #[test]
    fn zero_out_grad_gives_zero_gradients() {
        let p = random_params(4);
        let g = p.backprop_input(&p.embed(&[1, 2]), &[0.0; 6]);
        assert!(g.as_slice().iter().all(|v| *v == 0.0));
        assert!(p.backprop_params(&[1, 2], &[0.0; 6]).is_zero());
    }

    #[test]
    fn bias_passthrough_and_sparse_embedding_grad() {
        let p = random_params(5);
        let og = [0.3, -1.0, 2.0, 0.0, 0.1, 0.7];
        let g = p.backprop_params(&[2, 8, 2], &og);
        assert_eq!(g.b2, og.to_vec());
        assert_eq!(g.embedding.keys().copied().collect::<Vec<_>>(), vec![2, 8]);
        let dense = g.embedding_dense(p.dims());
        for id in [0usize, 1, 3, 4, 5, 6, 7, 9] {
            assert!(dense[id * 4..(id + 1) * 4].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn repeated_tokens_share_input_gradient() {
        let p = random_params(6);
        let og = [0.3, -1.0, 2.0, 0.0, 0.1, 0.7];
        let g = p.backprop_input(&p.embed(&[3, 1, 3]), &og);
        assert_eq!(g.row(0), g.row(2));
    }

    #[test]
    fn stays_finite_on_large_inputs() {
        let p = random_params(7);
        let x = InputEmbeddings::new(2, 4, vec![1e3, -1e3, 5e2, 1e3, -1e3, 1e3, 0.0, 7.0]).unwrap();
        assert!(p.encode_embeddings(&x).iter().all(|v| v.is_finite()));
        assert!(p.backprop_input(&x, &[1.0; 6]).as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn runs_in_f32() {
        let p: EncoderParams<f32> = random_params(8).cast();
        let v = p.encode(&[1, 2, 3]);
        let v64 = random_params(8).encode(&[1, 2, 3]);
        for (a, b) in v.iter().zip(&v64) {
            assert!((*a as f64 - b).abs() < 1e-5);
        }
    }
}
