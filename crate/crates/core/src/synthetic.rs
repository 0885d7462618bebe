//! Synthetic topical corpus with known latent topics.
//!
//! Each document mixes a primary and a secondary topic plus a few shared
//! words. Topic words are drawn from a mild Zipf distribution. Each query
//! samples topic words from one document, which is its only relevant
//! document.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Qrels, QuerySet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_topics: usize,
    pub words_per_topic: usize,
    pub shared_words: usize,
    pub num_docs: usize,
    pub doc_len: usize,
    pub num_queries: usize,
    pub query_len: usize,
    /// Share of tokens drawn from the primary topic.
    pub primary_share: f64,
    /// Share of tokens drawn from the shared vocabulary.
    pub shared_share: f64,
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_topics: 8,
            words_per_topic: 40,
            shared_words: 20,
            num_docs: 2000,
            doc_len: 30,
            num_queries: 400,
            query_len: 4,
            primary_share: 0.8,
            shared_share: 0.1,
            zipf_exponent: 0.5,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.num_topics < 2 || self.words_per_topic == 0 {
            return bad("need at least two topics with at least one word each");
        }
        if self.num_docs == 0 || self.doc_len == 0 || self.query_len == 0 {
            return bad("document count and lengths must be positive");
        }
        if self.num_queries > self.num_docs {
            return bad("more queries than documents");
        }
        if !(0.0..=1.0).contains(&self.primary_share)
            || !(0.0..=1.0).contains(&self.shared_share)
            || self.primary_share + self.shared_share > 1.0
        {
            return bad("token shares must lie in [0, 1] and sum to at most 1");
        }
        if self.shared_share > 0.0 && self.shared_words == 0 {
            return bad("shared share requires shared words");
        }
        Ok(())
    }
}

pub fn topic_word(topic: usize, idx: usize) -> String {
    format!("t{topic}w{idx}")
}

pub fn shared_word(idx: usize) -> String {
    format!("s{idx}")
}

/// Generating topic of a word, `None` for shared or foreign words.
pub fn topic_of(word: &str) -> Option<usize> {
    let rest = word.strip_prefix('t')?;
    let (topic, idx) = rest.split_once('w')?;
    idx.parse::<usize>().ok()?;
    topic.parse().ok()
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub corpus: Corpus,
    pub queries: QuerySet,
    pub qrels: Qrels,
    /// (primary, secondary) topic of each document, in corpus order.
    pub doc_topics: Vec<(usize, usize)>,
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let zipf: Vec<f64> = (1..=config.words_per_topic).map(|r| (r as f64).powf(-config.zipf_exponent)).collect();
    let word_dist = WeightedIndex::new(&zipf).expect("positive weights");

    let mut docs = Vec::with_capacity(config.num_docs);
    let mut doc_topics = Vec::with_capacity(config.num_docs);
    for d in 0..config.num_docs {
        let primary = rng.gen_range(0..config.num_topics);
        let secondary = (primary + rng.gen_range(1..config.num_topics)) % config.num_topics;
        let words: Vec<String> = (0..config.doc_len)
            .map(|_| {
                let u: f64 = rng.gen();
                if u < config.shared_share {
                    shared_word(rng.gen_range(0..config.shared_words))
                } else if u < config.shared_share + config.primary_share {
                    topic_word(primary, word_dist.sample(&mut rng))
                } else {
                    topic_word(secondary, word_dist.sample(&mut rng))
                }
            })
            .collect();
        docs.push(Document { id: format!("d{d}"), text: words.join(" ") });
        doc_topics.push((primary, secondary));
    }

    let mut sources: Vec<usize> = (0..config.num_docs).collect();
    sources.shuffle(&mut rng);
    sources.truncate(config.num_queries);
    let mut queries = Vec::with_capacity(config.num_queries);
    let mut qrels = Qrels::new();
    for (q, &d) in sources.iter().enumerate() {
        let topical: Vec<&str> = docs[d].text.split(' ').filter(|w| topic_of(w).is_some()).collect();
        let pool: Vec<&str> = if topical.is_empty() { docs[d].text.split(' ').collect() } else { topical };
        let words: Vec<&str> = (0..config.query_len).map(|_| *pool.choose(&mut rng).expect("non-empty")).collect();
        let qid = format!("q{q}");
        qrels.insert(qid.clone(), docs[d].id.clone(), 1);
        queries.push(Document { id: qid, text: words.join(" ") });
    }

    Ok(SynthData { corpus: Corpus::new(docs)?, queries: Corpus::new(queries)?, qrels, doc_topics })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let cfg = SynthConfig { num_docs: 50, num_queries: 10, ..Default::default() };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.corpus.to_tsv(), b.corpus.to_tsv());
        assert_eq!(a.corpus.len(), 50);
        assert_eq!(a.queries.len(), 10);
        assert_eq!(a.qrels.len(), 10);
        for (doc, &(p, s)) in a.corpus.iter().zip(&a.doc_topics) {
            assert_ne!(p, s);
            let words: Vec<&str> = doc.text.split(' ').collect();
            assert_eq!(words.len(), 30);
            assert!(words.iter().all(|w| w.starts_with('s') || matches!(topic_of(w), Some(t) if t == p || t == s)));
        }
        for q in a.queries.iter() {
            let rel = a.qrels.relevant(&q.id);
            let doc = a.corpus.get(rel[0]).unwrap();
            assert!(q.text.split(' ').all(|w| doc.text.split(' ').any(|x| x == w)));
        }
    }

    #[test]
    fn topic_parsing() {
        assert_eq!(topic_of("t3w17"), Some(3));
        assert_eq!(topic_of("s4"), None);
        assert_eq!(topic_of("tw"), None);
    }
}
