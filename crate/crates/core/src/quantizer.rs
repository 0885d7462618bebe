//! Product-quantization codebooks: nearest-centroid assignment,
//! reconstruction, Lloyd's k-means initialization and the
//! capacity-constrained (balanced) assignment used during training.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::TokenSeq;
use crate::encoder::{DenseVec, EncoderParams};
use crate::error::{Error, Result};
use crate::scalar::{cmp_asc, squared_distance, Scalar};

/// M pools of K centroids each, every centroid of dimension D/M.
/// Stored flat as `[pool][centroid][component]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebooks<T> {
    num_pools: usize,
    num_centroids: usize,
    sub_dim: usize,
    data: Vec<T>,
}

/// The chosen centroid index in each pool.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DiscreteCode(Vec<u32>);

impl DiscreteCode {
    pub fn new(indices: Vec<u32>) -> Self {
        Self(indices)
    }

    pub fn indices(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, pool: usize) -> usize {
        self.0[pool] as usize
    }
}

impl<T: Scalar> Codebooks<T> {
    pub fn zeros(num_pools: usize, num_centroids: usize, sub_dim: usize) -> Result<Self> {
        Self::from_flat(num_pools, num_centroids, sub_dim, vec![T::zero(); num_pools * num_centroids * sub_dim])
    }

    pub fn from_flat(num_pools: usize, num_centroids: usize, sub_dim: usize, data: Vec<T>) -> Result<Self> {
        if num_pools == 0 || num_centroids == 0 || sub_dim == 0 {
            return Err(Error::Config("codebooks need M, K and D/M all positive".into()));
        }
        if data.len() != num_pools * num_centroids * sub_dim {
            return Err(Error::Dimension(format!(
                "{} codebook values for {num_pools}x{num_centroids}x{sub_dim}",
                data.len()
            )));
        }
        Ok(Self { num_pools, num_centroids, sub_dim, data })
    }

    /// Builds codebooks from nested `[pool][centroid][component]` vectors.
    pub fn from_nested(pools: Vec<Vec<Vec<T>>>) -> Result<Self> {
        let m = pools.len();
        let k = pools.first().map_or(0, Vec::len);
        let s = pools.first().and_then(|p| p.first()).map_or(0, Vec::len);
        if pools.iter().any(|p| p.len() != k || p.iter().any(|c| c.len() != s)) {
            return Err(Error::Dimension("ragged codebooks".into()));
        }
        Self::from_flat(m, k, s, pools.into_iter().flatten().flatten().collect())
    }

    pub fn num_pools(&self) -> usize {
        self.num_pools
    }

    pub fn num_centroids(&self) -> usize {
        self.num_centroids
    }

    pub fn sub_dim(&self) -> usize {
        self.sub_dim
    }

    pub fn dim(&self) -> usize {
        self.num_pools * self.sub_dim
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn centroid(&self, pool: usize, idx: usize) -> &[T] {
        let start = (pool * self.num_centroids + idx) * self.sub_dim;
        &self.data[start..start + self.sub_dim]
    }

    pub fn centroid_mut(&mut self, pool: usize, idx: usize) -> &mut [T] {
        let start = (pool * self.num_centroids + idx) * self.sub_dim;
        &mut self.data[start..start + self.sub_dim]
    }

    fn check_dim(&self, vec: &[T]) -> Result<()> {
        if vec.len() != self.dim() {
            return Err(Error::Dimension(format!("vector of length {} against codebooks of dimension {}", vec.len(), self.dim())));
        }
        Ok(())
    }

    /// Index of the nearest centroid of `pool` to `sub`; ties go to the lowest index.
    pub fn nearest(&self, pool: usize, sub: &[T]) -> usize {
        let mut best = 0;
        let mut best_dist = T::infinity();
        for j in 0..self.num_centroids {
            let d = squared_distance(sub, self.centroid(pool, j));
            if d < best_dist {
                best = j;
                best_dist = d;
            }
        }
        best
    }

    /// Replaces each sub-vector by its nearest centroid index.
    pub fn assign(&self, vec: &[T]) -> Result<DiscreteCode> {
        self.check_dim(vec)?;
        Ok(DiscreteCode(
            vec.chunks(self.sub_dim)
                .enumerate()
                .map(|(i, sub)| self.nearest(i, sub) as u32)
                .collect(),
        ))
    }

    fn check_code(&self, code: &DiscreteCode) -> Result<()> {
        if code.len() != self.num_pools {
            return Err(Error::Dimension(format!("code of length {} for {} pools", code.len(), self.num_pools)));
        }
        if let Some(&bad) = code.0.iter().find(|&&c| c as usize >= self.num_centroids) {
            return Err(Error::OutOfRange(format!("code index {bad} ≥ K={}", self.num_centroids)));
        }
        Ok(())
    }

    /// Concatenation of the selected centroids.
    pub fn reconstruct(&self, code: &DiscreteCode) -> Result<DenseVec<T>> {
        self.check_code(code)?;
        let mut out = Vec::with_capacity(self.dim());
        for (i, &j) in code.0.iter().enumerate() {
            out.extend_from_slice(self.centroid(i, j as usize));
        }
        Ok(out)
    }

    /// Capacity-constrained assignment over a batch: in every pool each
    /// centroid takes at most `ceil(B/K)` vectors. Candidate (vector, centroid)
    /// pairs are visited in ascending distance order (ties by vector index,
    /// then centroid index) and a vector is placed at the first centroid
    /// that still has room.
    pub fn balanced_assign(&self, vecs: &[DenseVec<T>]) -> Result<Vec<DiscreteCode>> {
        for v in vecs {
            self.check_dim(v)?;
        }
        let b = vecs.len();
        let k = self.num_centroids;
        let capacity = b.div_ceil(k);
        let mut codes = vec![vec![0u32; self.num_pools]; b];
        let mut pairs: Vec<(T, usize, usize)> = Vec::with_capacity(b * k);
        for pool in 0..self.num_pools {
            pairs.clear();
            for (vi, v) in vecs.iter().enumerate() {
                let sub = &v[pool * self.sub_dim..(pool + 1) * self.sub_dim];
                for c in 0..k {
                    pairs.push((squared_distance(sub, self.centroid(pool, c)), vi, c));
                }
            }
            pairs.sort_by(|a, b| cmp_asc(a.0, b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut load = vec![0usize; k];
            let mut done = vec![false; b];
            let mut remaining = b;
            for &(_, vi, c) in &pairs {
                if remaining == 0 {
                    break;
                }
                if done[vi] || load[c] >= capacity {
                    continue;
                }
                done[vi] = true;
                load[c] += 1;
                remaining -= 1;
                codes[vi][pool] = c as u32;
            }
        }
        Ok(codes.into_iter().map(DiscreteCode).collect())
    }

    pub fn cast<U: Scalar>(&self) -> Codebooks<U> {
        Codebooks {
            num_pools: self.num_pools,
            num_centroids: self.num_centroids,
            sub_dim: self.sub_dim,
            data: self.data.iter().map(|&x| U::lit(x.as_f64())).collect(),
        }
    }
}

/// Result of k-means initialization: codebooks plus the per-pool history
/// of the quantization objective (sum of squared residuals) after each
/// Lloyd iteration.
#[derive(Debug, Clone)]
pub struct KMeansFit<T> {
    pub codebooks: Codebooks<T>,
    pub objective_history: Vec<Vec<T>>,
}

/// Fits codebooks with per-pool Lloyd's k-means.
///
/// Initial centroids are K distinct sub-vectors drawn by a seeded shuffle.
/// An empty cluster takes over the point farthest from its own centroid
/// (among clusters with more than one member). Iteration stops after
/// `iters` rounds or once assignments no longer change.
pub fn kmeans_init<T: Scalar>(
    vectors: &[DenseVec<T>],
    num_pools: usize,
    num_centroids: usize,
    iters: usize,
    seed: u64,
) -> Result<KMeansFit<T>> {
    if vectors.len() < num_centroids {
        return Err(Error::Config(format!(
            "k-means needs at least K={num_centroids} vectors, got {}",
            vectors.len()
        )));
    }
    if iters == 0 {
        return Err(Error::Config("k-means needs at least one iteration".into()));
    }
    let dim = vectors[0].len();
    if num_pools == 0 || !dim.is_multiple_of(num_pools) || vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::Dimension(format!("cannot split {dim}-dimensional vectors into {num_pools} pools")));
    }
    let sub_dim = dim / num_pools;
    let mut data = Vec::with_capacity(num_pools * num_centroids * sub_dim);
    let mut history = Vec::with_capacity(num_pools);
    for pool in 0..num_pools {
        let points: Vec<&[T]> = vectors.iter().map(|v| &v[pool * sub_dim..(pool + 1) * sub_dim]).collect();
        let pool_seed = seed.wrapping_add((pool as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let (centroids, objective) = lloyd(&points, num_centroids, iters, pool_seed);
        data.extend(centroids.into_iter().flatten());
        history.push(objective);
    }
    Ok(KMeansFit {
        codebooks: Codebooks::from_flat(num_pools, num_centroids, sub_dim, data)?,
        objective_history: history,
    })
}

fn nearest_in<T: Scalar>(centroids: &[Vec<T>], p: &[T]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn lloyd<T: Scalar>(points: &[&[T]], k: usize, iters: usize, seed: u64) -> (Vec<Vec<T>>, Vec<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut rng);

    // K distinct values where possible; duplicates only when the data has fewer than K distinct points.
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut centroids: Vec<Vec<T>> = Vec::with_capacity(k);
    for &i in &order {
        let key: Vec<u64> = points[i].iter().map(|v| v.as_f64().to_bits()).collect();
        if seen.insert(key) {
            centroids.push(points[i].to_vec());
            if centroids.len() == k {
                break;
            }
        }
    }
    let mut fill = order.iter().cycle();
    while centroids.len() < k {
        centroids.push(points[*fill.next().unwrap()].to_vec());
    }

    let sub_dim = points[0].len();
    let mut assignment = vec![usize::MAX; points.len()];
    let mut history = Vec::with_capacity(iters);
    for _ in 0..iters {
        let mut changed = false;
        let mut dist = vec![T::zero(); points.len()];
        for (pi, p) in points.iter().enumerate() {
            let (j, d) = nearest_in(&centroids, p);
            if assignment[pi] != j {
                changed = true;
                assignment[pi] = j;
            }
            dist[pi] = d;
        }
        let mut counts = vec![0usize; k];
        for &a in &assignment {
            counts[a] += 1;
        }
        for empty in 0..k {
            if counts[empty] != 0 {
                continue;
            }
            let victim = (0..points.len())
                .filter(|&pi| counts[assignment[pi]] > 1)
                .max_by(|&a, &b| cmp_asc(dist[a], dist[b]).then(b.cmp(&a)));
            if let Some(pi) = victim {
                counts[assignment[pi]] -= 1;
                assignment[pi] = empty;
                counts[empty] = 1;
                dist[pi] = T::zero();
                changed = true;
            }
        }
        let mut sums = vec![vec![T::zero(); sub_dim]; k];
        for (pi, p) in points.iter().enumerate() {
            for (s, &v) in sums[assignment[pi]].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        for (j, sum) in sums.into_iter().enumerate() {
            if counts[j] > 0 {
                let inv = T::one() / T::from_usize(counts[j]).unwrap();
                centroids[j] = sum.into_iter().map(|s| s * inv).collect();
            }
        }
        let objective: T = points
            .iter()
            .zip(&assignment)
            .map(|(p, &a)| squared_distance(p, &centroids[a]))
            .sum();
        history.push(objective);
        if !changed {
            break;
        }
    }
    (centroids, history)
}

/// Codes for every document of a corpus, in corpus order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantIndex {
    pub entries: Vec<(String, DiscreteCode)>,
}

impl QuantIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// TSV export: `<doc_id>\t<c_1>,<c_2>,…,<c_M>`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, code) in &self.entries {
            let codes: Vec<String> = code.indices().iter().map(u32::to_string).collect();
            let _ = writeln!(out, "{id}\t{}", codes.join(","));
        }
        out
    }

    pub fn parse_tsv(content: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in content.lines().enumerate() {
            let (id, codes) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: "expected <doc_id>\\t<codes>".into(),
            })?;
            let code = codes
                .split(',')
                .map(|c| c.parse::<u32>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse { line: n + 1, message: e.to_string() })?;
            entries.push((id.to_string(), DiscreteCode(code)));
        }
        Ok(Self { entries })
    }
}

/// Encodes every document and assigns codes. `balanced` applies the
/// capacity constraint over the whole collection instead of per-document
/// nearest-centroid assignment.
pub fn quantize_corpus<T: Scalar>(
    params: &EncoderParams<T>,
    doc_ids: &[String],
    docs: &[TokenSeq],
    codebooks: &Codebooks<T>,
    balanced: bool,
) -> Result<QuantIndex> {
    if docs.is_empty() {
        return Err(Error::Empty("corpus".into()));
    }
    if doc_ids.len() != docs.len() {
        return Err(Error::Dimension(format!("{} ids for {} documents", doc_ids.len(), docs.len())));
    }
    let vecs: Vec<DenseVec<T>> = docs.par_iter().map(|d| params.encode(d)).collect();
    let codes = if balanced {
        codebooks.balanced_assign(&vecs)?
    } else {
        vecs.par_iter().map(|v| codebooks.assign(v)).collect::<Result<Vec<_>>>()?
    };
    Ok(QuantIndex { entries: doc_ids.iter().cloned().zip(codes).collect() })
}
