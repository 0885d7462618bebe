//! Corpora, queries, relevance judgments, vocabulary and tokenization.
//!
//! Text is normalized by lowercasing, splitting on Unicode whitespace and
//! stripping leading/trailing ASCII punctuation. Token id 0 is reserved for
//! the unknown token, which also serves as the attribution baseline token
//! and the mask token.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Id of the unknown token.
pub const UNK_ID: u32 = 0;
/// Surface form of the unknown token.
pub const UNK_TOKEN: &str = "<unk>";

/// Splits text into normalized word tokens.
pub fn normalize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Dense token id assignment with `<unk>` at id 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    ids: HashMap<String, u32>,
    tokens: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<String>()).expect("empty vocabulary is valid")
    }
}

impl Vocabulary {
    /// Builds a vocabulary from tokens in id order, starting at id 1.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut list = vec![UNK_TOKEN.to_string()];
        let mut ids = HashMap::new();
        ids.insert(UNK_TOKEN.to_string(), UNK_ID);
        for tok in tokens {
            let tok = tok.into();
            if ids.contains_key(&tok) {
                return Err(Error::Config(format!("duplicate vocabulary entry {tok:?}")));
            }
            ids.insert(tok.clone(), list.len() as u32);
            list.push(tok);
        }
        Ok(Self { ids, tokens: list })
    }

    /// Rebuilds a vocabulary from the full id-ordered list (entry 0 must be `<unk>`).
    pub fn from_id_list(list: Vec<String>) -> Result<Self> {
        match list.first() {
            Some(first) if first == UNK_TOKEN => Self::from_tokens(list.into_iter().skip(1)),
            _ => Err(Error::Config("vocabulary must start with <unk>".into())),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// All tokens in id order, including `<unk>` at position 0.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Counts token frequencies over the corpus and keeps tokens seen at least
/// `min_count` times. Ids are assigned in lexicographic token order, so the
/// result does not depend on document order.
pub fn build_vocab(corpus: &Corpus, min_count: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus".into()));
    }
    let min_count = min_count.max(1);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus.iter() {
        for tok in normalize(&doc.text) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    Vocabulary::from_tokens(
        counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count)
            .map(|(t, _)| t),
    )
}

/// A non-empty sequence of token ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSeq(Vec<u32>);

impl TokenSeq {
    pub fn new(ids: Vec<u32>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::NoTokens);
        }
        Ok(Self(ids))
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<u32> {
        self.0
    }
}

impl std::ops::Deref for TokenSeq {
    type Target = [u32];
    fn deref(&self) -> &[u32] {
        &self.0
    }
}

/// Tokenizes text against a vocabulary; unknown words map to `<unk>`.
pub fn tokenize(text: &str, vocab: &Vocabulary) -> Result<TokenSeq> {
    let ids = normalize(text)
        .iter()
        .map(|t| vocab.id(t).unwrap_or(UNK_ID))
        .collect();
    TokenSeq::new(ids)
}

/// A document or query: external id plus raw text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub text: String,
}

/// Queries use the same record layout as documents.
pub type Query = Document;

/// An ordered collection of documents with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    docs: Vec<Document>,
    index: HashMap<String, usize>,
}

/// Queries share the corpus container.
pub type QuerySet = Corpus;

impl Corpus {
    pub fn new(docs: Vec<Document>) -> Result<Self> {
        let mut index = HashMap::with_capacity(docs.len());
        for (pos, doc) in docs.iter().enumerate() {
            if doc.text.is_empty() {
                return Err(Error::EmptyText { line: pos + 1 });
            }
            if index.insert(doc.id.clone(), pos).is_some() {
                return Err(Error::DuplicateId { id: doc.id.clone(), line: pos + 1 });
            }
        }
        Ok(Self { docs, index })
    }

    /// Parses `<id>\t<text>` records, one per line.
    pub fn parse(content: &str) -> Result<Self> {
        let mut docs = Vec::new();
        let mut index = HashMap::new();
        for (n, line) in content.lines().enumerate() {
            let line_no = n + 1;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 2 tab-separated fields, found {}", fields.len()),
                });
            }
            let (id, text) = (fields[0], fields[1]);
            if id.is_empty() {
                return Err(Error::Parse { line: line_no, message: "empty id".into() });
            }
            if text.is_empty() {
                return Err(Error::EmptyText { line: line_no });
            }
            if index.insert(id.to_string(), docs.len()).is_some() {
                return Err(Error::DuplicateId { id: id.to_string(), line: line_no });
            }
            docs.push(Document { id: id.to_string(), text: text.to_string() });
        }
        Ok(Self { docs, index })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.docs.iter()
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.index.get(id).map(|&i| &self.docs[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Tokenizes every document in corpus order.
    pub fn tokenize(&self, vocab: &Vocabulary) -> Result<Vec<TokenSeq>> {
        self.docs
            .iter()
            .map(|d| {
                tokenize(&d.text, vocab).map_err(|_| Error::Config(format!("document {:?} has no tokens", d.id)))
            })
            .collect()
    }

    /// Serializes back to the TSV layout.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for d in &self.docs {
            out.push_str(&d.id);
            out.push('\t');
            out.push_str(&d.text);
            out.push('\n');
        }
        out
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Document;
    type IntoIter = std::slice::Iter<'a, Document>;
    fn into_iter(self) -> Self::IntoIter {
        self.docs.iter()
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Corpus::parse(&content)
}

/// Relevance judgments: (query id, doc id) → grade.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    grades: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, qid: impl Into<String>, docid: impl Into<String>, grade: u32) {
        self.grades.entry(qid.into()).or_default().insert(docid.into(), grade);
    }

    /// Parses TREC qrels: `<qid> 0 <docid> <grade>`.
    pub fn parse(content: &str) -> Result<Self> {
        let mut qrels = Self::new();
        for (n, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    line: n + 1,
                    message: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            let grade: i64 = fields[3].parse().map_err(|_| Error::Parse {
                line: n + 1,
                message: format!("invalid grade {:?}", fields[3]),
            })?;
            if grade < 0 {
                return Err(Error::Parse { line: n + 1, message: format!("negative grade {grade}") });
            }
            qrels.insert(fields[0], fields[2], grade as u32);
        }
        Ok(qrels)
    }

    pub fn grade(&self, qid: &str, docid: &str) -> u32 {
        self.grades.get(qid).and_then(|m| m.get(docid)).copied().unwrap_or(0)
    }

    /// Judged documents of a query; unjudged documents count as grade 0.
    pub fn judgments(&self, qid: &str) -> Option<&BTreeMap<String, u32>> {
        self.grades.get(qid)
    }

    /// Documents with grade ≥ 1, in id order.
    pub fn relevant(&self, qid: &str) -> Vec<&str> {
        self.grades
            .get(qid)
            .map(|m| m.iter().filter(|(_, &g)| g >= 1).map(|(d, _)| d.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.grades.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.grades.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops judgments for documents absent from the corpus; returns the
    /// filtered qrels and the number of dropped entries.
    pub fn restrict_to(&self, corpus: &Corpus) -> (Qrels, usize) {
        let mut out = Qrels::new();
        let mut missing = 0;
        for (q, docs) in &self.grades {
            for (d, &g) in docs {
                if corpus.contains(d) {
                    out.insert(q.clone(), d.clone(), g);
                } else {
                    missing += 1;
                }
            }
        }
        (out, missing)
    }

    pub fn to_trec(&self) -> String {
        let mut out = String::new();
        for (q, docs) in &self.grades {
            for (d, g) in docs {
                out.push_str(&format!("{q} 0 {d} {g}\n"));
            }
        }
        out
    }
}

pub fn load_qrels(path: impl AsRef<Path>) -> Result<Qrels> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Qrels::parse(&content)
}

/// Token ids present in a set of sequences (used for vocabulary coverage checks).
pub fn distinct_ids<'a>(seqs: impl IntoIterator<Item = &'a TokenSeq>) -> HashSet<u32> {
    seqs.into_iter().flat_map(|s| s.ids().iter().copied()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus::new(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Document { id: format!("d{i}"), text: t.to_string() })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn parses_single_record() {
        let c = Corpus::parse("d1\thello world\n").unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.docs()[0], Document { id: "d1".into(), text: "hello world".into() });
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        assert!(Corpus::parse("").unwrap().is_empty());
    }

    #[test]
    fn empty_text_is_rejected_with_line() {
        let err = Corpus::parse("d1\t").unwrap_err();
        assert_eq!(err.to_string(), "empty text at line 1");
    }

    #[test]
    fn malformed_and_duplicate_lines() {
        match Corpus::parse("d1\ta\nd2 b\n").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(
            Corpus::parse("d1\ta\nd1\tb\n").unwrap_err(),
            Error::DuplicateId { line: 2, .. }
        ));
        assert!(matches!(Corpus::parse("d1\ta\tb\n").unwrap_err(), Error::Parse { line: 1, .. }));
    }

    #[test]
    fn vocab_min_count() {
        let v = build_vocab(&corpus(&["a b", "a c"]), 2).unwrap();
        assert_eq!(v.tokens(), &["<unk>".to_string(), "a".to_string()]);
        assert_eq!(v.id("b"), None);
        assert_eq!(tokenize("b c a", &v).unwrap().ids(), &[0, 0, 1]);

        let v = build_vocab(&corpus(&["a"]), 1).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.id("a"), Some(1));
    }

    #[test]
    fn vocab_rejects_empty_corpus() {
        assert!(build_vocab(&Corpus::default(), 1).is_err());
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize("Hello, WORLD"), vec!["hello", "world"]);
        assert_eq!(normalize("  \"quoted\"\t(x) ... "), vec!["quoted", "x"]);
        assert_eq!(normalize("don't"), vec!["don't"]);
    }

    #[test]
    fn tokenize_examples() {
        let v = Vocabulary::from_tokens(["a"]).unwrap();
        assert_eq!(tokenize("a b", &v).unwrap().ids(), &[1, 0]);
        assert_eq!(tokenize("A  a", &v).unwrap().ids(), &[1, 1]);
        assert!(matches!(tokenize("", &v), Err(Error::NoTokens)));
        assert!(matches!(tokenize(" ,; ", &v), Err(Error::NoTokens)));
    }

    #[test]
    fn vocab_is_order_invariant() {
        let a = build_vocab(&corpus(&["x y z", "y q", "r"]), 1).unwrap();
        let b = build_vocab(&corpus(&["r", "y q", "x y z"]), 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn qrels_parse_and_restrict() {
        let q = Qrels::parse("q1 0 d1 1\nq1 0 d9 2\nq2 0 d2 0\n").unwrap();
        assert_eq!(q.grade("q1", "d9"), 2);
        assert_eq!(q.grade("q1", "zz"), 0);
        assert_eq!(q.relevant("q2"), Vec::<&str>::new());
        let c = corpus(&["a", "b", "c"]);
        let (r, missing) = q.restrict_to(&Corpus::new(vec![
            Document { id: "d1".into(), text: "a".into() },
            Document { id: "d2".into(), text: "b".into() },
        ]).unwrap());
        assert_eq!(missing, 1);
        assert_eq!(r.len(), 2);
        assert!(c.contains("d0"));
        assert!(Qrels::parse("q1 0 d1 -1\n").is_err());
        assert!(Qrels::parse("q1 0 d1\n").is_err());
    }
}
