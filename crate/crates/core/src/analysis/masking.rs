//! Masking evaluation: keep a small fraction of the tokens of a document,
//! replace the rest with `<unk>`, and measure how far sub-vector `i` of the
//! masked encoding lands from the codeword chosen for the full document.
//! Smaller distances mean the kept tokens matter more for that codeword.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::stats::{paired_t_test, TTest};
use crate::attribution::{attribution_with_global, AttributionConfig, AttributionMatrix};
use crate::corpus::{TokenSeq, UNK_ID};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::scalar::{cmp_desc, squared_distance, Scalar};

/// Keep-set selection strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MaskMethod {
    Tail,
    Head,
    Rand,
    #[serde(rename = "IDF")]
    Idf,
    #[serde(rename = "TF")]
    Tf,
    #[serde(rename = "TF-IDF")]
    TfIdf,
    RandT,
    GlobalT,
    MoT,
}

impl MaskMethod {
    /// All methods in report order.
    pub const ALL: [MaskMethod; 9] = [
        MaskMethod::Tail,
        MaskMethod::Rand,
        MaskMethod::Head,
        MaskMethod::Idf,
        MaskMethod::Tf,
        MaskMethod::TfIdf,
        MaskMethod::RandT,
        MaskMethod::GlobalT,
        MaskMethod::MoT,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MaskMethod::Tail => "Tail",
            MaskMethod::Head => "Head",
            MaskMethod::Rand => "Rand",
            MaskMethod::Idf => "IDF",
            MaskMethod::Tf => "TF",
            MaskMethod::TfIdf => "TF-IDF",
            MaskMethod::RandT => "RandT",
            MaskMethod::GlobalT => "GlobalT",
            MaskMethod::MoT => "MoT",
        }
    }

    pub fn group(self) -> &'static str {
        match self {
            MaskMethod::Tail | MaskMethod::Head | MaskMethod::Rand => "Position-based",
            MaskMethod::Idf | MaskMethod::Tf | MaskMethod::TfIdf => "Frequency-based",
            MaskMethod::RandT | MaskMethod::GlobalT | MaskMethod::MoT => "Attribution-based",
        }
    }

    pub fn needs_attribution(self) -> bool {
        matches!(self, MaskMethod::RandT | MaskMethod::GlobalT | MaskMethod::MoT)
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|m| m.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for MaskMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaskMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name().chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::Config(format!("unknown mask method {s:?}; valid methods: {}", Self::valid_names())))
    }
}

/// Document frequencies over a tokenized corpus.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TermStats {
    pub num_docs: usize,
    pub df: HashMap<u32, usize>,
}

impl TermStats {
    pub fn new(docs: &[TokenSeq]) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::Empty("corpus".into()));
        }
        let mut df: HashMap<u32, usize> = HashMap::new();
        for d in docs {
            let mut ids: Vec<u32> = d.ids().to_vec();
            ids.sort_unstable();
            ids.dedup();
            for id in ids {
                *df.entry(id).or_default() += 1;
            }
        }
        Ok(Self { num_docs: docs.len(), df })
    }

    pub fn df(&self, id: u32) -> usize {
        self.df.get(&id).copied().unwrap_or(0)
    }

    /// `ln((N + 1)/(df + 1)) + 1`
    pub fn idf(&self, id: u32) -> f64 {
        ((self.num_docs as f64 + 1.0) / (self.df(id) as f64 + 1.0)).ln() + 1.0
    }
}

/// Raw in-document counts.
pub fn term_frequencies(tokens: &[u32]) -> HashMap<u32, usize> {
    let mut tf = HashMap::new();
    for &t in tokens {
        *tf.entry(t).or_default() += 1;
    }
    tf
}

/// Retained token positions, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KeepSet(Vec<usize>);

impl KeepSet {
    pub fn new(mut positions: Vec<usize>) -> Self {
        positions.sort_unstable();
        positions.dedup();
        Self(positions)
    }

    pub fn all(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn positions(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.0.binary_search(&pos).is_ok()
    }
}

/// `max(1, round(ρ·n))` with round-half-up, capped at `n`.
pub fn keep_size(n: usize, rho: f64) -> usize {
    ((rho * n as f64 + 0.5).floor() as usize).clamp(1, n.max(1))
}

/// Seed derived from `(seed, tag, doc_id, i)`; stable across runs and platforms.
pub fn derived_seed(seed: u64, tag: &str, doc_id: &str, i: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag.as_bytes());
    h.update((doc_id.len() as u64).to_le_bytes());
    h.update(doc_id.as_bytes());
    h.update((i as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Inputs some keep-set methods need.
#[derive(Debug, Clone, Copy)]
pub struct KeepContext<'a, T> {
    pub doc_id: &'a str,
    pub seed: u64,
    pub attributions: Option<&'a AttributionMatrix<T>>,
    pub global: Option<&'a [T]>,
    pub stats: Option<&'a TermStats>,
}

impl<'a, T> KeepContext<'a, T> {
    pub fn new(doc_id: &'a str, seed: u64) -> Self {
        Self { doc_id, seed, attributions: None, global: None, stats: None }
    }
}

fn top_k<T: Scalar>(scores: &[T], k: usize) -> KeepSet {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| cmp_desc(scores[a], scores[b]).then(a.cmp(&b)));
    order.truncate(k);
    KeepSet::new(order)
}

/// The sub-vector RandT borrows attributions from: uniform over the other pools.
pub fn randt_subvector(seed: u64, doc_id: &str, i: usize, m: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(seed, "RandT", doc_id, i));
    let r = rng.gen_range(0..m - 1);
    if r >= i {
        r + 1
    } else {
        r
    }
}

/// Chooses which token positions survive masking for sub-vector `i`.
/// Score ties always go to the lower position.
pub fn select_keep_set<T: Scalar>(
    method: MaskMethod,
    tokens: &TokenSeq,
    rho: f64,
    ctx: &KeepContext<'_, T>,
    i: usize,
) -> Result<KeepSet> {
    let n = tokens.len();
    let k = keep_size(n, rho);
    let missing = |what: &str| Error::MissingContext { method: method.name().into(), what: what.into() };
    let attributions = || ctx.attributions.ok_or_else(|| missing("attribution matrix"));
    let keep = match method {
        MaskMethod::Head => KeepSet::new((0..k).collect()),
        MaskMethod::Tail => KeepSet::new((n - k..n).collect()),
        MaskMethod::Rand => {
            let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(ctx.seed, "Rand", ctx.doc_id, 0));
            KeepSet::new(sample(&mut rng, n, k).into_vec())
        }
        MaskMethod::Tf | MaskMethod::Idf | MaskMethod::TfIdf => {
            let tf = term_frequencies(tokens);
            let stats = ctx.stats;
            let scores: Vec<f64> = tokens
                .iter()
                .map(|t| {
                    let tf = tf[t] as f64;
                    match method {
                        MaskMethod::Tf => Ok(tf),
                        MaskMethod::Idf => stats.map(|s| s.idf(*t)).ok_or_else(|| missing("term statistics")),
                        _ => stats.map(|s| tf * s.idf(*t)).ok_or_else(|| missing("term statistics")),
                    }
                })
                .collect::<Result<_>>()?;
            top_k(&scores, k)
        }
        MaskMethod::MoT => {
            let a = attributions()?;
            check_matrix(a, n, i)?;
            top_k(&a.column(i), k)
        }
        MaskMethod::RandT => {
            let a = attributions()?;
            check_matrix(a, n, i)?;
            if a.cols() < 2 {
                return Err(Error::Config("RandT needs at least two sub-vectors".into()));
            }
            top_k(&a.column(randt_subvector(ctx.seed, ctx.doc_id, i, a.cols())), k)
        }
        MaskMethod::GlobalT => {
            let g = ctx.global.ok_or_else(|| missing("global attributions"))?;
            if g.len() != n {
                return Err(Error::Dimension(format!("{} global attributions for {n} tokens", g.len())));
            }
            top_k(g, k)
        }
    };
    Ok(keep)
}

fn check_matrix<T: Scalar>(a: &AttributionMatrix<T>, n: usize, i: usize) -> Result<()> {
    if a.rows() != n {
        return Err(Error::Dimension(format!("attribution matrix has {} rows for {n} tokens", a.rows())));
    }
    if i >= a.cols() {
        return Err(Error::OutOfRange(format!("sub-vector {i} of {}", a.cols())));
    }
    Ok(())
}

/// Replaces every position outside `keep` with `<unk>`.
pub fn apply_mask(tokens: &TokenSeq, keep: &KeepSet) -> TokenSeq {
    TokenSeq::new(
        tokens
            .iter()
            .enumerate()
            .map(|(j, &t)| if keep.contains(j) { t } else { UNK_ID })
            .collect(),
    )
    .expect("masking preserves length")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// `‖d̂_i − f_i(mask(d))‖`
    #[default]
    Euclidean,
    /// `‖d̂_i − f_i(mask(d))‖²`
    Squared,
}

fn sub_distance<T: Scalar>(d_hat: &[T], masked_vec: &[T], i: usize, sub: usize, metric: DistanceMetric) -> f64 {
    let sq = squared_distance(&d_hat[i * sub..(i + 1) * sub], &masked_vec[i * sub..(i + 1) * sub]).as_f64();
    match metric {
        DistanceMetric::Euclidean => sq.sqrt(),
        DistanceMetric::Squared => sq,
    }
}

/// Distance between sub-vector `i` of the full document's discrete
/// reconstruction and sub-vector `i` of the masked document's encoding.
pub fn mask_distance<T: Scalar>(model: &Model<T>, tokens: &TokenSeq, keep: &KeepSet, i: usize, metric: DistanceMetric) -> Result<f64> {
    if i >= model.num_subvectors() {
        return Err(Error::OutOfRange(format!("sub-vector {i} of {}", model.num_subvectors())));
    }
    let d_hat = model.discrete(tokens);
    let masked = model.encode(&apply_mask(tokens, keep));
    Ok(sub_distance(&d_hat, &masked, i, model.encoder.sub_dim(), metric))
}

/// How the t-test pairs observations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestPairing {
    /// One pair per (document, sub-vector).
    #[default]
    PerEntry,
    /// One pair per document (mean over sub-vectors).
    PerDocument,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskEvalConfig {
    pub methods: Vec<MaskMethod>,
    /// Keep fraction ρ.
    pub rho: f64,
    pub seed: u64,
    pub metric: DistanceMetric,
    pub pairing: TestPairing,
    pub attribution: AttributionConfig,
}

impl Default for MaskEvalConfig {
    fn default() -> Self {
        Self {
            methods: MaskMethod::ALL.to_vec(),
            rho: 0.05,
            seed: 7,
            metric: DistanceMetric::Euclidean,
            pairing: TestPairing::PerEntry,
            attribution: AttributionConfig::default(),
        }
    }
}

impl MaskEvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::Config(format!("keep fraction must lie in (0, 1], got {}", self.rho)));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no mask methods selected".into()));
        }
        self.attribution.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodResult {
    pub method: MaskMethod,
    pub mean: f64,
    /// Distances indexed `[doc * M + i]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceTest {
    pub baseline: MaskMethod,
    pub t: f64,
    pub df: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskEvalReport {
    pub num_subvectors: usize,
    pub num_docs: usize,
    pub rho: f64,
    pub metric: DistanceMetric,
    pub pairing: TestPairing,
    pub methods: Vec<MethodResult>,
    /// MoT against every other method (empty when MoT was not evaluated).
    pub tests: Vec<SignificanceTest>,
}

impl MaskEvalReport {
    pub fn mean(&self, method: MaskMethod) -> Option<f64> {
        self.methods.iter().find(|r| r.method == method).map(|r| r.mean)
    }

    pub fn distances(&self, method: MaskMethod) -> Option<&[f64]> {
        self.methods.iter().find(|r| r.method == method).and_then(|r| r.distances.as_deref())
    }

    pub fn test(&self, baseline: MaskMethod) -> Option<&SignificanceTest> {
        self.tests.iter().find(|t| t.baseline == baseline)
    }

    /// MoT beats every evaluated baseline at `p < alpha` with a lower mean.
    pub fn mot_significant(&self, alpha: f64) -> bool {
        let Some(mot) = self.mean(MaskMethod::MoT) else { return false };
        !self.tests.is_empty()
            && self
                .tests
                .iter()
                .all(|t| t.p < alpha && self.mean(t.baseline).is_some_and(|m| mot < m))
    }

    /// Drops the full distance tensor (keeps means and tests).
    pub fn without_tensor(&self) -> Self {
        let mut r = self.clone();
        r.methods.iter_mut().for_each(|m| m.distances = None);
        r
    }

    pub fn to_json(&self, include_tensor: bool) -> Result<String> {
        let r = if include_tensor { self.clone() } else { self.without_tensor() };
        serde_json::to_string_pretty(&r).map_err(|e| Error::Serialize(e.to_string()))
    }
}

/// Runs every method for every document and sub-vector. Documents are
/// processed in parallel; results are merged in corpus order, so the report
/// does not depend on the worker count.
pub fn run_mask_eval<T: Scalar>(
    model: &Model<T>,
    doc_ids: &[String],
    docs: &[TokenSeq],
    config: &MaskEvalConfig,
) -> Result<MaskEvalReport> {
    config.validate()?;
    if docs.is_empty() {
        return Err(Error::Empty("corpus".into()));
    }
    if doc_ids.len() != docs.len() {
        return Err(Error::Dimension(format!("{} ids for {} documents", doc_ids.len(), docs.len())));
    }
    let m = model.num_subvectors();
    if config.methods.contains(&MaskMethod::RandT) && m < 2 {
        return Err(Error::Config("RandT needs at least two sub-vectors".into()));
    }
    let stats = TermStats::new(docs)?;
    let need_attr = config.methods.iter().any(|m| m.needs_attribution());
    let sub = model.encoder.sub_dim();

    let per_doc: Vec<Vec<Vec<f64>>> = docs
        .par_iter()
        .zip(doc_ids.par_iter())
        .map(|(tokens, id)| -> Result<Vec<Vec<f64>>> {
            model.encoder.check_tokens(tokens)?;
            let d_hat = model.discrete(tokens);
            let (matrix, global) = if need_attr {
                let (a, g) = attribution_with_global(model, tokens, &config.attribution)?;
                (Some(a), Some(g))
            } else {
                (None, None)
            };
            let ctx = KeepContext {
                doc_id: id,
                seed: config.seed,
                attributions: matrix.as_ref(),
                global: global.as_deref(),
                stats: Some(&stats),
            };
            let mut cache: HashMap<KeepSet, Vec<T>> = HashMap::new();
            config
                .methods
                .iter()
                .map(|&method| {
                    (0..m)
                        .map(|i| {
                            let keep = select_keep_set(method, tokens, config.rho, &ctx, i)?;
                            let enc = cache
                                .entry(keep.clone())
                                .or_insert_with(|| model.encode(&apply_mask(tokens, &keep)));
                            Ok(sub_distance(&d_hat, enc, i, sub, config.metric))
                        })
                        .collect()
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut methods = Vec::with_capacity(config.methods.len());
    for (mi, &method) in config.methods.iter().enumerate() {
        let tensor: Vec<f64> = per_doc.iter().flat_map(|d| d[mi].iter().copied()).collect();
        let mean = tensor.iter().sum::<f64>() / tensor.len() as f64;
        methods.push(MethodResult { method, mean, distances: Some(tensor) });
    }

    let paired = |v: &[f64]| -> Vec<f64> {
        match config.pairing {
            TestPairing::PerEntry => v.to_vec(),
            TestPairing::PerDocument => v.chunks(m).map(|c| c.iter().sum::<f64>() / m as f64).collect(),
        }
    };
    let mut tests = Vec::new();
    if let Some(mot) = methods.iter().find(|r| r.method == MaskMethod::MoT) {
        let mot_v = paired(mot.distances.as_deref().unwrap());
        if mot_v.len() >= 2 {
            for r in methods.iter().filter(|r| r.method != MaskMethod::MoT) {
                let TTest { t, df, p } = paired_t_test(&mot_v, &paired(r.distances.as_deref().unwrap()))?;
                tests.push(SignificanceTest { baseline: r.method, t, df, p });
            }
        }
    }

    Ok(MaskEvalReport {
        num_subvectors: m,
        num_docs: docs.len(),
        rho: config.rho,
        metric: config.metric,
        pairing: config.pairing,
        methods,
        tests,
    })
}

/// Plain-text table: one row per method grouped by family, one column per
/// report (labelled by its sub-vector count). MoT entries get a `*` when
/// they beat every baseline at p < 0.01.
pub fn render_table(reports: &[&MaskEvalReport]) -> String {
    let mut methods: Vec<MaskMethod> = Vec::new();
    for m in MaskMethod::ALL {
        if reports.iter().any(|r| r.mean(m).is_some()) {
            methods.push(m);
        }
    }
    let mut out = String::new();
    let _ = write!(out, "{:<20}", "Method");
    for r in reports {
        let _ = write!(out, "{:>10}", format!("M={}", r.num_subvectors));
    }
    out.push('\n');
    let mut group = "";
    for m in methods {
        if m.group() != group {
            group = m.group();
            let _ = writeln!(out, "{group}");
        }
        let _ = write!(out, "  {:<18}", m.name());
        for r in reports {
            let cell = match r.mean(m) {
                Some(v) => {
                    let star = if m == MaskMethod::MoT && r.mot_significant(0.01) { "*" } else { "" };
                    format!("{v:.4}{star}")
                }
                None => "-".into(),
            };
            let _ = write!(out, "{cell:>10}");
        }
        out.push('\n');
    }
    out
}
