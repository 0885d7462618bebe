//! Exhaustive quantized retrieval with per-pool lookup tables, and the
//! ranking metrics used to evaluate runs.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::Qrels;
use crate::error::{Error, Result};
use crate::quantizer::{Codebooks, DiscreteCode, QuantIndex};
use crate::scalar::{cmp_desc, dot, Scalar};

/// `M × K` inner products between the query's part in each pool and every
/// centroid of that pool.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable<T> {
    num_pools: usize,
    num_centroids: usize,
    data: Vec<T>,
}

impl<T: Scalar> ScoreTable<T> {
    /// Symmetric table: the query is itself quantized.
    pub fn symmetric(q_code: &DiscreteCode, codebooks: &Codebooks<T>) -> Result<Self> {
        check_code(q_code, codebooks)?;
        Ok(Self::build(codebooks, |pool| codebooks.centroid(pool, q_code.get(pool))))
    }

    /// Asymmetric table: the continuous query embedding against the centroids.
    pub fn asymmetric(query: &[T], codebooks: &Codebooks<T>) -> Result<Self> {
        if query.len() != codebooks.dim() {
            return Err(Error::Dimension(format!("query of length {} for dimension {}", query.len(), codebooks.dim())));
        }
        let sub = codebooks.sub_dim();
        Ok(Self::build(codebooks, |pool| &query[pool * sub..(pool + 1) * sub]))
    }

    fn build<'a>(codebooks: &'a Codebooks<T>, part: impl Fn(usize) -> &'a [T]) -> Self {
        let (m, k) = (codebooks.num_pools(), codebooks.num_centroids());
        let mut data = Vec::with_capacity(m * k);
        for pool in 0..m {
            let q = part(pool);
            data.extend((0..k).map(|j| dot(q, codebooks.centroid(pool, j))));
        }
        Self { num_pools: m, num_centroids: k, data }
    }

    pub fn num_pools(&self) -> usize {
        self.num_pools
    }

    pub fn num_centroids(&self) -> usize {
        self.num_centroids
    }

    pub fn get(&self, pool: usize, centroid: usize) -> T {
        self.data[pool * self.num_centroids + centroid]
    }

    pub fn row(&self, pool: usize) -> &[T] {
        &self.data[pool * self.num_centroids..(pool + 1) * self.num_centroids]
    }

    /// Score of a document code: one lookup per pool.
    pub fn score(&self, code: &DiscreteCode) -> T {
        (0..self.num_pools).map(|i| self.get(i, code.get(i))).sum()
    }
}

/// Symmetric score table for a query code.
pub fn score_table<T: Scalar>(q_code: &DiscreteCode, codebooks: &Codebooks<T>) -> Result<ScoreTable<T>> {
    ScoreTable::symmetric(q_code, codebooks)
}

fn check_code<T: Scalar>(code: &DiscreteCode, codebooks: &Codebooks<T>) -> Result<()> {
    if code.len() != codebooks.num_pools() {
        return Err(Error::Dimension(format!("code of length {} for {} pools", code.len(), codebooks.num_pools())));
    }
    if let Some(&c) = code.indices().iter().find(|&&c| c as usize >= codebooks.num_centroids()) {
        return Err(Error::OutOfRange(format!("code {c} of {}", codebooks.num_centroids())));
    }
    Ok(())
}

/// Top-k results for one query: score descending, ties by ascending doc id.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RunList {
    pub hits: Vec<(String, f64)>,
}

impl RunList {
    /// Sorts by the run order and truncates to `k`.
    pub fn from_scores(mut hits: Vec<(String, f64)>, k: usize) -> Self {
        hits.sort_by(|a, b| cmp_desc(a.1, b.1).then_with(|| a.0.cmp(&b.0)));
        hits.truncate(k);
        Self { hits }
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.hits.iter().map(|(d, _)| d.as_str())
    }
}

fn rank_index<T: Scalar>(index: &QuantIndex, k: usize, score: impl Fn(&DiscreteCode) -> T + Sync) -> Result<RunList> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if index.is_empty() {
        return Err(Error::Empty("index".into()));
    }
    let hits: Vec<(String, f64)> =
        index.entries.par_iter().map(|(id, code)| (id.clone(), score(code).as_f64())).collect();
    Ok(RunList::from_scores(hits, k))
}

/// Scores every indexed document by `M` table lookups and keeps the top `k`.
pub fn retrieve<T: Scalar>(q_code: &DiscreteCode, index: &QuantIndex, codebooks: &Codebooks<T>, k: usize) -> Result<RunList> {
    let table = ScoreTable::symmetric(q_code, codebooks)?;
    for (_, code) in &index.entries {
        check_code(code, codebooks)?;
    }
    rank_index(index, k, |code| table.score(code))
}

/// Like [`retrieve`] but with the continuous query embedding.
pub fn retrieve_asymmetric<T: Scalar>(query: &[T], index: &QuantIndex, codebooks: &Codebooks<T>, k: usize) -> Result<RunList> {
    let table = ScoreTable::asymmetric(query, codebooks)?;
    for (_, code) in &index.entries {
        check_code(code, codebooks)?;
    }
    rank_index(index, k, |code| table.score(code))
}

/// Reciprocal rank of the first document with grade ≥ 1 in the top `k`.
pub fn mrr_at(run: &RunList, qrels: &Qrels, qid: &str, k: usize) -> f64 {
    run.doc_ids()
        .take(k)
        .position(|d| qrels.grade(qid, d) >= 1)
        .map_or(0.0, |r| 1.0 / (r + 1) as f64)
}

/// Fraction of relevant documents found in the top `k`; `None` when the
/// query has no relevant document.
pub fn recall_at(run: &RunList, qrels: &Qrels, qid: &str, k: usize) -> Option<f64> {
    let relevant: HashSet<&str> = qrels.relevant(qid).into_iter().collect();
    if relevant.is_empty() {
        return None;
    }
    let found = run.doc_ids().take(k).filter(|d| relevant.contains(d)).count();
    Some(found as f64 / relevant.len() as f64)
}

/// NDCG@10 with gain `2^g − 1` and discount `log2(rank + 1)`; `None` when
/// the query has no positively graded document.
pub fn ndcg_at_10(run: &RunList, qrels: &Qrels, qid: &str) -> Option<f64> {
    let gain = |g: u32| 2f64.powi(g as i32) - 1.0;
    let discount = |r: usize| (r as f64 + 2.0).log2();
    let mut ideal: Vec<u32> = qrels.judgments(qid)?.values().copied().filter(|&g| g > 0).collect();
    if ideal.is_empty() {
        return None;
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal.iter().take(10).enumerate().map(|(r, &g)| gain(g) / discount(r)).sum();
    let dcg: f64 = run.doc_ids().take(10).enumerate().map(|(r, d)| gain(qrels.grade(qid, d)) / discount(r)).sum();
    Some(dcg / idcg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalMetrics {
    #[serde(rename = "MRR@10")]
    pub mrr_10: f64,
    #[serde(rename = "R@100")]
    pub recall_100: f64,
    #[serde(rename = "NDCG@10")]
    pub ndcg_10: f64,
    #[serde(rename = "MRR@100")]
    pub mrr_100: f64,
    /// Queries that contributed.
    pub num_queries: usize,
    /// Queries skipped for lacking relevant judgments.
    pub skipped: usize,
}

/// Uniform mean of per-query metrics over the queries with at least one
/// relevant judgment; the rest are tallied in `skipped`.
pub fn evaluate(runs: &BTreeMap<String, RunList>, qrels: &Qrels) -> Result<EvalMetrics> {
    let mut sums = [0.0f64; 4];
    let mut n = 0;
    let mut skipped = 0;
    for (qid, run) in runs {
        let (Some(r), Some(nd)) = (recall_at(run, qrels, qid, 100), ndcg_at_10(run, qrels, qid)) else {
            skipped += 1;
            continue;
        };
        sums[0] += mrr_at(run, qrels, qid, 10);
        sums[1] += r;
        sums[2] += nd;
        sums[3] += mrr_at(run, qrels, qid, 100);
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("no query has a relevant judgment".into()));
    }
    let mean = |s: f64| s / n as f64;
    Ok(EvalMetrics {
        mrr_10: mean(sums[0]),
        recall_100: mean(sums[1]),
        ndcg_10: mean(sums[2]),
        mrr_100: mean(sums[3]),
        num_queries: n,
        skipped,
    })
}

/// TREC run format: `<qid> Q0 <docid> <rank> <score> repmot`, ranks from 1.
pub fn to_trec_run(runs: &BTreeMap<String, RunList>) -> String {
    let mut out = String::new();
    for (qid, run) in runs {
        for (rank, (doc, score)) in run.hits.iter().enumerate() {
            let _ = writeln!(out, "{qid} Q0 {doc} {} {score} repmot", rank + 1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(ids: &[&str]) -> RunList {
        RunList { hits: ids.iter().enumerate().map(|(r, d)| (d.to_string(), -(r as f64))).collect() }
    }

    fn qrels(entries: &[(&str, &str, u32)]) -> Qrels {
        let mut q = Qrels::new();
        for &(qid, d, g) in entries {
            q.insert(qid, d, g);
        }
        q
    }

    #[test]
    fn mrr_examples() {
        let q = qrels(&[("q", "d4", 1)]);
        assert_eq!(mrr_at(&run(&["d4", "a"]), &q, "q", 10), 1.0);
        assert_eq!(mrr_at(&run(&["a", "b", "c", "d4"]), &q, "q", 10), 0.25);
        assert_eq!(mrr_at(&run(&["a", "b", "c", "d4"]), &q, "q", 3), 0.0);
    }

    #[test]
    fn recall_examples() {
        let q = qrels(&[("q", "a", 1), ("q", "b", 2), ("q", "z", 0)]);
        assert_eq!(recall_at(&run(&["b", "a"]), &q, "q", 10), Some(1.0));
        assert_eq!(recall_at(&run(&["a", "c"]), &q, "q", 10), Some(0.5));
        assert_eq!(recall_at(&run(&["c"]), &q, "q", 10), Some(0.0));
        assert_eq!(recall_at(&run(&["c"]), &q, "other", 10), None);
    }

    #[test]
    fn ndcg_examples() {
        let q = qrels(&[("q", "d1", 3), ("q", "d2", 1)]);
        assert_eq!(ndcg_at_10(&run(&["d1", "d2"]), &q, "q"), Some(1.0));
        let v = ndcg_at_10(&run(&["d2", "d1"]), &q, "q").unwrap();
        assert!((v - 0.70981).abs() < 1e-5, "{v}");
        assert_eq!(ndcg_at_10(&RunList::default(), &q, "q"), Some(0.0));
    }

    #[test]
    fn evaluate_means() {
        let q = qrels(&[("a", "x", 1), ("b", "y", 1)]);
        let mut runs = BTreeMap::new();
        runs.insert("a".to_string(), run(&["x"]));
        runs.insert("b".to_string(), run(&["x"]));
        runs.insert("c".to_string(), run(&["x"]));
        let m = evaluate(&runs, &q).unwrap();
        assert_eq!(m.mrr_10, 0.5);
        assert_eq!(m.num_queries, 2);
        assert_eq!(m.skipped, 1);
        assert!(evaluate(&BTreeMap::new(), &q).is_err());
    }

    #[test]
    fn table_matches_reconstruction() {
        let cb = Codebooks::from_nested(vec![
            vec![vec![1.0, 0.0], vec![0.5, -2.0]],
            vec![vec![3.0, 1.0], vec![-1.0, 0.25]],
        ])
        .unwrap();
        let q = DiscreteCode::new(vec![1, 0]);
        let t = score_table(&q, &cb).unwrap();
        let qv = cb.reconstruct(&q).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let d = DiscreteCode::new(vec![a, b]);
                let expect: f64 = qv.iter().zip(cb.reconstruct(&d).unwrap()).map(|(x, y)| x * y).sum();
                assert!((t.score(&d) - expect).abs() < 1e-12);
            }
        }
        assert_eq!(score_table(&q, &Codebooks::<f64>::zeros(2, 2, 2).unwrap()).unwrap().score(&q), 0.0);
    }

    #[test]
    fn retrieve_ties_and_boundaries() {
        let cb = Codebooks::from_nested(vec![vec![vec![1.0], vec![2.0]]]).unwrap();
        let index = QuantIndex {
            entries: vec![
                ("b".into(), DiscreteCode::new(vec![0])),
                ("a".into(), DiscreteCode::new(vec![0])),
                ("c".into(), DiscreteCode::new(vec![1])),
            ],
        };
        let r = retrieve(&DiscreteCode::new(vec![1]), &index, &cb, 10).unwrap();
        assert_eq!(r.doc_ids().collect::<Vec<_>>(), vec!["c", "a", "b"]);
        let r1 = retrieve(&DiscreteCode::new(vec![1]), &index, &cb, 1).unwrap();
        assert_eq!(r1.len(), 1);
        assert!(retrieve(&DiscreteCode::new(vec![1]), &index, &cb, 0).is_err());
    }

    #[test]
    fn trec_export() {
        let mut runs = BTreeMap::new();
        runs.insert("q1".to_string(), RunList { hits: vec![("d".into(), 1.5)] });
        assert_eq!(to_trec_run(&runs), "q1 Q0 d 1 1.5 repmot\n");
    }
}
