//! A complete trained model (vocabulary, encoder, codebooks), the
//! corpus-level training entry point and the binary model file.
//!
//! File layout (little-endian):
//!
//! ```text
//! "RMOT" | u32 version=1 | u32 V | u32 d_emb | u32 hidden | u32 D | u32 M | u32 K
//! V × (u32 byte length, UTF-8 token)            vocabulary in id order
//! f64 × V·d_emb                                 embedding table
//! f64 × hidden·d_emb | f64 × hidden             W1, b1
//! f64 × D·hidden     | f64 × D                  W2, b2
//! f64 × M·K·(D/M)                               codebooks
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocab, Corpus, Qrels, QuerySet, TokenSeq, Vocabulary};
use crate::encoder::{DenseVec, EncoderDims, EncoderParams};
use crate::error::{Error, Result};
use crate::quantizer::{Codebooks, DiscreteCode};
use crate::scalar::Scalar;
use crate::trainer::{train_pairs, TrainConfig, TrainOutcome};

pub const MAGIC: &[u8; 4] = b"RMOT";
pub const VERSION: u32 = 1;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_emb: usize,
    pub hidden: usize,
    /// Output dimension D.
    pub dim: usize,
    /// Sub-vectors per text (M).
    pub num_subvectors: usize,
    /// Centroids per pool (K).
    pub num_centroids: usize,
    pub min_count: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { d_emb: 32, hidden: 64, dim: 64, num_subvectors: 8, num_centroids: 16, min_count: 1 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_centroids == 0 {
            return Err(Error::Config("num_centroids must be positive".into()));
        }
        self.dims(1).validate()
    }

    pub fn dims(&self, vocab_size: usize) -> EncoderDims {
        EncoderDims {
            vocab_size,
            d_emb: self.d_emb,
            hidden: self.hidden,
            dim: self.dim,
            num_subvectors: self.num_subvectors,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub vocab: Vocabulary,
    pub encoder: EncoderParams<T>,
    pub codebooks: Codebooks<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(vocab: Vocabulary, encoder: EncoderParams<T>, codebooks: Codebooks<T>) -> Result<Self> {
        if vocab.len() != encoder.dims().vocab_size {
            return Err(Error::Dimension(format!(
                "vocabulary of {} tokens for an embedding table of {} rows",
                vocab.len(),
                encoder.dims().vocab_size
            )));
        }
        if codebooks.num_pools() != encoder.num_subvectors() || codebooks.sub_dim() != encoder.sub_dim() {
            return Err(Error::Dimension("codebooks do not match encoder sub-vector layout".into()));
        }
        Ok(Self { vocab, encoder, codebooks })
    }

    pub fn num_subvectors(&self) -> usize {
        self.codebooks.num_pools()
    }

    pub fn num_centroids(&self) -> usize {
        self.codebooks.num_centroids()
    }

    pub fn encode(&self, tokens: &[u32]) -> DenseVec<T> {
        self.encoder.encode(tokens)
    }

    /// Nearest-centroid code of a text (inference-time assignment).
    pub fn code(&self, tokens: &[u32]) -> DiscreteCode {
        self.codebooks
            .assign(&self.encode(tokens))
            .expect("encoder and codebooks share dimensions")
    }

    /// Discrete reconstruction d̂ of a text.
    pub fn discrete(&self, tokens: &[u32]) -> DenseVec<T> {
        self.codebooks
            .reconstruct(&self.code(tokens))
            .expect("assigned code is valid")
    }

    pub fn tokenize(&self, text: &str) -> Result<TokenSeq> {
        crate::corpus::tokenize(text, &self.vocab)
    }

    /// Trains a model end to end on a corpus, queries and relevance judgments.
    /// Every query must have at least one relevant (grade ≥ 1) document in
    /// the corpus.
    pub fn train(
        corpus: &Corpus,
        queries: &QuerySet,
        qrels: &Qrels,
        model_cfg: &ModelConfig,
        train_cfg: &TrainConfig,
    ) -> Result<(Self, TrainOutcome<T>)> {
        model_cfg.validate()?;
        train_cfg.validate()?;
        if corpus.is_empty() {
            return Err(Error::Empty("corpus".into()));
        }
        if queries.is_empty() {
            return Err(Error::Empty("queries".into()));
        }
        let vocab = build_vocab(corpus, model_cfg.min_count)?;
        let docs: Vec<Vec<u32>> = corpus.tokenize(&vocab)?.into_iter().map(TokenSeq::into_inner).collect();
        let query_tokens: Vec<Vec<u32>> = queries.tokenize(&vocab)?.into_iter().map(TokenSeq::into_inner).collect();

        let mut pairs = Vec::new();
        let mut unlinked = BTreeSet::new();
        for (qi, q) in queries.iter().enumerate() {
            let linked: Vec<usize> = qrels.relevant(&q.id).iter().filter_map(|d| corpus.position(d)).collect();
            if linked.is_empty() {
                unlinked.insert(q.id.clone());
            }
            pairs.extend(linked.into_iter().map(|d| (qi, d)));
        }
        if !unlinked.is_empty() {
            return Err(Error::UnlinkedQueries(unlinked.into_iter().collect()));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
        let encoder = EncoderParams::init(model_cfg.dims(vocab.len()), &mut rng)?;
        let outcome = train_pairs(encoder, &docs, &query_tokens, &pairs, model_cfg.num_centroids, train_cfg, &mut rng)?;
        let model = Self::new(vocab, outcome.state.encoder.clone(), outcome.state.codebooks.clone())?;
        Ok((model, outcome))
    }

    /// Serializes into the binary model format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.encoder.dims();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for v in [
            VERSION,
            d.vocab_size as u32,
            d.d_emb as u32,
            d.hidden as u32,
            d.dim as u32,
            d.num_subvectors as u32,
            self.codebooks.num_centroids() as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for tok in self.vocab.tokens() {
            out.extend_from_slice(&(tok.len() as u32).to_le_bytes());
            out.extend_from_slice(tok.as_bytes());
        }
        let e = &self.encoder;
        for arr in [&e.embedding, &e.w1, &e.b1, &e.w2, &e.b2] {
            put_floats(&mut out, arr);
        }
        put_floats(&mut out, self.codebooks.as_slice());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "header").map_err(|_| Error::BadMagic)? != MAGIC {
            return Err(Error::BadMagic);
        }
        let version = r.u32("header")?;
        if version != VERSION {
            return Err(Error::Version { found: version, expected: VERSION });
        }
        let mut header = [0usize; 6];
        for h in header.iter_mut() {
            *h = r.u32("header")? as usize;
        }
        let [vocab_size, d_emb, hidden, dim, m, k] = header;
        let dims = EncoderDims { vocab_size, d_emb, hidden, dim, num_subvectors: m };
        dims.validate().map_err(|e| Error::MalformedModel(e.to_string()))?;
        if k == 0 {
            return Err(Error::MalformedModel("K is zero".into()));
        }

        let mut tokens = Vec::with_capacity(vocab_size.min(1 << 20));
        for _ in 0..vocab_size {
            let len = r.u32("vocabulary")? as usize;
            let raw = r.take(len, "vocabulary")?;
            let tok = std::str::from_utf8(raw).map_err(|e| Error::MalformedModel(format!("vocabulary entry: {e}")))?;
            tokens.push(tok.to_string());
        }
        let vocab = Vocabulary::from_id_list(tokens).map_err(|e| Error::MalformedModel(e.to_string()))?;

        let embedding = r.floats(vocab_size * d_emb, "embedding")?;
        let w1 = r.floats(hidden * d_emb, "w1")?;
        let b1 = r.floats(hidden, "b1")?;
        let w2 = r.floats(dim * hidden, "w2")?;
        let b2 = r.floats(dim, "b2")?;
        let codebooks = r.floats(m * k * (dim / m), "codebooks")?;
        if r.pos != bytes.len() {
            return Err(Error::MalformedModel(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let encoder = EncoderParams::from_parts(dims, embedding, w1, b1, w2, b2)?;
        let codebooks = Codebooks::from_flat(m, k, dim / m, codebooks)?;
        Self::new(vocab, encoder, codebooks)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_floats<T: Scalar>(out: &mut Vec<u8>, values: &[T]) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, section: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated { section }),
        }
    }

    fn u32(&mut self, section: &'static str) -> Result<u32> {
        let b = self.take(4, section)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn floats<T: Scalar>(&mut self, n: usize, section: &'static str) -> Result<Vec<T>> {
        let len = n.checked_mul(8).ok_or(Error::Truncated { section })?;
        let raw = self.take(len, section)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_model(seed: u64) -> Model<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = Vocabulary::from_tokens(["alpha", "beta", "γάμμα", "delta"]).unwrap();
        let cfg = ModelConfig { d_emb: 3, hidden: 4, dim: 6, num_subvectors: 2, num_centroids: 3, min_count: 1 };
        let encoder = EncoderParams::init(cfg.dims(vocab.len()), &mut rng).unwrap();
        let cb: Vec<f64> = (0..2 * 3 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Model::new(vocab, encoder, Codebooks::from_flat(2, 3, 3, cb).unwrap()).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = random_model(1);
        let bytes = m.to_bytes();
        let back = Model::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = random_model(2).to_bytes();
        bytes[0] = b'X';
        assert_eq!(Model::<f64>::from_bytes(&bytes).unwrap_err().to_string(), "not a model file");
        assert!(matches!(Model::<f64>::from_bytes(b"RM"), Err(Error::BadMagic)));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = random_model(3).to_bytes();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(Model::<f64>::from_bytes(&bytes), Err(Error::Version { found: 2, expected: 1 })));
    }

    #[test]
    fn truncation_names_section() {
        let bytes = random_model(4).to_bytes();
        let cut = &bytes[..bytes.len() - 20];
        let err = Model::<f64>::from_bytes(cut).unwrap_err();
        assert!(matches!(err, Error::Truncated { section: "codebooks" }));
        assert_eq!(err.to_string(), "unexpected end of file in section codebooks");
        assert!(matches!(Model::<f64>::from_bytes(&bytes[..40]), Err(Error::Truncated { section: "vocabulary" })));
        let mut long = bytes.clone();
        long.push(0);
        assert!(Model::<f64>::from_bytes(&long).is_err());
    }

    #[test]
    fn train_rejects_unlinked_queries() {
        let corpus = Corpus::parse("d1\ta b c\nd2\tb c d\n").unwrap();
        let queries = Corpus::parse("q1\ta\nq2\tb\nq3\tc\n").unwrap();
        let qrels = Qrels::parse("q1 0 d1 1\nq2 0 d9 1\n").unwrap();
        let err = Model::<f64>::train(
            &corpus,
            &queries,
            &qrels,
            &ModelConfig { num_centroids: 2, ..Default::default() },
            &TrainConfig::default(),
        )
        .unwrap_err();
        match err {
            Error::UnlinkedQueries(ids) => assert_eq!(ids, vec!["q2".to_string(), "q3".to_string()]),
            e => panic!("unexpected {e}"),
        }
    }
}
