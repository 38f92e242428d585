//! Divergence-based clustering of answer trees: Jensen-Shannon tree
//! distances, complete-link agglomeration, Calinski-Harabasz model selection
//! and rank-based cluster ordering.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::lm::{LanguageModel, TreeLm};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("cannot compare a {0:?} model with a {1:?} model")]
    KindMismatch(crate::lm::LmSide, crate::lm::LmSide),
    #[error("divergence of an empty distribution is undefined")]
    EmptyDistribution,
    #[error("need at least 2 items to cluster, got {0}")]
    Degenerate(usize),
    #[error("cluster count {k} is outside 2..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("no cluster count in [{k_min}, {k_max}] is valid for {n} items")]
    EmptyKRange {
        k_min: usize,
        k_max: usize,
        n: usize,
    },
    #[error("bad distance matrix: {0}")]
    BadMatrix(String),
    #[error("clustering covers {got} items, matrix has {expected}")]
    SizeMismatch { expected: usize, got: usize },
}

/// Base-2 Jensen-Shannon divergence. Terms absent from one side count as
/// zero probability there. The result lies in `[0, 1]`.
pub fn js_divergence(p: &LanguageModel, q: &LanguageModel) -> Result<f64, ClusterError> {
    if p.side() != q.side() {
        return Err(ClusterError::KindMismatch(p.side(), q.side()));
    }
    if p.is_empty() || q.is_empty() {
        return Err(ClusterError::EmptyDistribution);
    }
    let mut a = p.iter().peekable();
    let mut b = q.iter().peekable();
    let mut js = 0.0;
    // Both iterators are sorted by term, so one merge pass visits the union.
    loop {
        let (pi, qi) = match (a.peek(), b.peek()) {
            (None, None) => break,
            (Some(&(_, pv)), None) => {
                a.next();
                (pv, 0.0)
            }
            (None, Some(&(_, qv))) => {
                b.next();
                (0.0, qv)
            }
            (Some(&(ta, pv)), Some(&(tb, qv))) => match ta.cmp(tb) {
                std::cmp::Ordering::Less => {
                    a.next();
                    (pv, 0.0)
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                    (0.0, qv)
                }
                std::cmp::Ordering::Equal => {
                    a.next();
                    b.next();
                    (pv, qv)
                }
            },
        };
        let m = 0.5 * (pi + qi);
        let part = |x: f64| if x > 0.0 { x * (x / m).log2() } else { 0.0 };
        // A single commutative sum keeps JS(p, q) and JS(q, p) bit-identical.
        js += 0.5 * (part(pi) + part(qi));
    }
    Ok(js.clamp(0.0, 1.0))
}

/// `gamma * JS_entity + (1 - gamma) * JS_relationship`. When either tree has
/// no relationship model only the entity side counts.
pub fn tree_distance(a: &TreeLm, b: &TreeLm, gamma: f64) -> f64 {
    let entity = js_divergence(&a.entity, &b.entity).expect("entity models are never empty");
    if a.relationship.is_empty() || b.relationship.is_empty() {
        return entity;
    }
    let rel =
        js_divergence(&a.relationship, &b.relationship).expect("non-empty relationship models");
    gamma * entity + (1.0 - gamma) * rel
}

/// Symmetric pairwise distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn zeros(n: usize) -> Self {
        DistanceMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Fills the upper triangle from `f(i, j)` for `i < j` and mirrors it.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let values: Vec<f64> = pairs.par_iter().map(|&(i, j)| f(i, j)).collect();
        let mut m = DistanceMatrix::zeros(n);
        for (&(i, j), v) in pairs.iter().zip(values) {
            m.data[i * n + j] = v;
            m.data[j * n + i] = v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ClusterError> {
        let n = rows.len();
        let mut m = DistanceMatrix::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(ClusterError::BadMatrix(format!(
                    "row {i} has {} entries",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(ClusterError::BadMatrix(format!("entry ({i}, {j}) = {v}")));
                }
                m.data[i * n + j] = v;
            }
        }
        for i in 0..n {
            if m.get(i, i) != 0.0 {
                return Err(ClusterError::BadMatrix(format!(
                    "diagonal entry {i} is not 0"
                )));
            }
            for j in 0..i {
                if m.get(i, j) != m.get(j, i) {
                    return Err(ClusterError::BadMatrix(format!(
                        "({i}, {j}) is not symmetric"
                    )));
                }
            }
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.n.max(1))
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Same matrix with items reordered so that new item `k` is old
    /// `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        DistanceMatrix::from_fn(self.n, |i, j| self.get(perm[i], perm[j]))
    }
}

pub fn build_distance_matrix(trees: &[TreeLm], gamma: f64) -> DistanceMatrix {
    DistanceMatrix::from_fn(trees.len(), |i, j| {
        tree_distance(&trees[i], &trees[j], gamma)
    })
}

/// One agglomeration step. Leaves are ids `0..n`; the cluster created by
/// step `s` gets id `n + s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Partition after undoing the last `k - 1` merges. Cluster ids are
    /// assigned in order of each cluster's smallest member.
    pub fn cut(&self, k: usize) -> Vec<usize> {
        let n = self.leaves;
        assert!((1..=n).contains(&k), "cut size {k} outside 1..={n}");
        let mut parent: Vec<usize> = (0..n + self.merges.len()).collect();
        for (s, m) in self.merges.iter().take(n - k).enumerate() {
            parent[m.left] = n + s;
            parent[m.right] = n + s;
        }
        let find = |mut x: usize| {
            while parent[x] != x {
                x = parent[x];
            }
            x
        };
        let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
        (0..n)
            .map(|leaf| {
                let top = find(leaf);
                let next = ids.len();
                *ids.entry(top).or_insert(next)
            })
            .collect()
    }
}

/// Agglomerative complete-link clustering. Ties between equally close pairs
/// go to the pair with the smallest (first id, second id).
pub fn complete_link_dendrogram(m: &DistanceMatrix) -> Result<Dendrogram, ClusterError> {
    let n = m.len();
    if n < 2 {
        return Err(ClusterError::Degenerate(n));
    }
    // Active clusters as (id, members); linkage kept in a dense table keyed
    // by position in `active`.
    let mut active: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut link: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| m.get(i, j)).collect())
        .collect();
    let mut merges = Vec::with_capacity(n - 1);

    while active.len() > 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..active.len() {
            for b in a + 1..active.len() {
                let (ia, ib) = (active[a].0, active[b].0);
                let key = (link[a][b], ia.min(ib), ia.max(ib));
                let better = match best {
                    None => true,
                    Some((d, lo, hi, _, _)) => {
                        key.0 < d || (key.0 == d && (key.1, key.2) < (lo, hi))
                    }
                };
                if better {
                    best = Some((key.0, key.1, key.2, a, b));
                }
            }
        }
        let (height, left, right, a, b) = best.expect("at least two active clusters");

        let mut members = std::mem::take(&mut active[a].1);
        members.extend(std::mem::take(&mut active[b].1));
        let size = members.len();
        merges.push(Merge {
            left,
            right,
            height,
            size,
        });

        // Complete linkage: distance to the union is the larger of the two.
        #[allow(clippy::needless_range_loop)]
        for c in 0..active.len() {
            let d = link[a][c].max(link[b][c]);
            link[a][c] = d;
            link[c][a] = d;
        }
        link[a][a] = 0.0;
        active[a] = (n + merges.len() - 1, members);
        active.remove(b);
        link.remove(b);
        for row in &mut link {
            row.remove(b);
        }
    }
    Ok(Dendrogram { leaves: n, merges })
}

/// A hard partition with contiguous ids `0..k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    pub assignment: Vec<usize>,
    /// CH index of this cut. `+inf` when within-cluster scatter is zero and
    /// NaN when the index is undefined for the cut.
    pub ch_value: f64,
}

impl Clustering {
    /// Renumbers arbitrary labels into contiguous ids by first occurrence.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut ids = BTreeMap::new();
        let mut order = Vec::new();
        let assignment = labels
            .iter()
            .map(|&l| {
                *ids.entry(l).or_insert_with(|| {
                    order.push(l);
                    order.len() - 1
                })
            })
            .collect();
        Clustering {
            k: order.len(),
            assignment,
            ch_value: f64::NAN,
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Member indices of every cluster, each list ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

/// Serialises the CH value as a number, `"inf"` or `null`.
pub fn serialize_ch<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_nan() {
        s.serialize_none()
    } else if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

/// Within- and between-cluster scatter in pairwise-divergence form.
fn scatter(m: &DistanceMatrix, assignment: &[usize]) -> (f64, f64) {
    let mut within = 0.0;
    let mut between = 0.0;
    for i in 0..assignment.len() {
        for j in i + 1..assignment.len() {
            if assignment[i] == assignment[j] {
                within += m.get(i, j);
            } else {
                between += m.get(i, j);
            }
        }
    }
    (within, between)
}

/// `CH(K) = (N - K) * B(K) / ((K - 1) * W(K))`. Defined for `2 <= K <= N-1`;
/// returns `+inf` when every cluster is internally at distance zero.
pub fn ch_index(m: &DistanceMatrix, c: &Clustering) -> Result<f64, ClusterError> {
    let n = m.len();
    if c.len() != n {
        return Err(ClusterError::SizeMismatch {
            expected: n,
            got: c.len(),
        });
    }
    if c.k < 2 || c.k + 1 > n {
        return Err(ClusterError::KOutOfRange {
            k: c.k,
            max: n.saturating_sub(1),
        });
    }
    let (within, between) = scatter(m, &c.assignment);
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((n - c.k) as f64 * between / ((c.k - 1) as f64 * within))
}

/// Cuts the complete-link dendrogram at every `K` in
/// `[max(2, k_min), min(k_max, n - 1)]` and keeps the cut with the highest
/// CH index, smallest `K` on ties.
///
/// Two items always form two clusters. A matrix of all zeros yields a single
/// cluster whatever the range.
pub fn select_clustering(
    m: &DistanceMatrix,
    k_min: usize,
    k_max: usize,
) -> Result<Clustering, ClusterError> {
    let n = m.len();
    if n < 2 {
        return Err(ClusterError::Degenerate(n));
    }
    if m.data.iter().all(|&d| d == 0.0) {
        return Ok(Clustering {
            k: 1,
            assignment: vec![0; n],
            ch_value: f64::NAN,
        });
    }
    if n == 2 {
        return Ok(Clustering {
            k: 2,
            assignment: vec![0, 1],
            ch_value: f64::NAN,
        });
    }
    let lo = k_min.max(2);
    let hi = k_max.min(n - 1);
    if lo > hi {
        return Err(ClusterError::EmptyKRange { k_min, k_max, n });
    }
    let dendrogram = complete_link_dendrogram(m)?;
    let mut best: Option<Clustering> = None;
    for k in lo..=hi {
        let assignment = dendrogram.cut(k);
        let mut c = Clustering {
            k,
            assignment,
            ch_value: f64::NAN,
        };
        c.ch_value = ch_index(m, &c)?;
        if best.as_ref().is_none_or(|b| c.ch_value > b.ch_value) {
            best = Some(c);
        }
    }
    Ok(best.expect("non-empty K range"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Heuristic {
    Best,
    Worst,
    #[serde(rename = "avg")]
    Average,
    #[serde(rename = "size")]
    LargestSize,
}

impl Heuristic {
    pub const ALL: [Heuristic; 4] = [
        Heuristic::Best,
        Heuristic::Worst,
        Heuristic::Average,
        Heuristic::LargestSize,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Heuristic::Best => "best",
            Heuristic::Worst => "worst",
            Heuristic::Average => "avg",
            Heuristic::LargestSize => "size",
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Heuristic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "best" => Ok(Heuristic::Best),
            "worst" => Ok(Heuristic::Worst),
            "avg" | "average" => Ok(Heuristic::Average),
            "size" | "largest" | "largest_size" => Ok(Heuristic::LargestSize),
            other => Err(format!("unknown heuristic `{other}` (best|worst|avg|size)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterRanking {
    pub heuristic: Heuristic,
    /// Cluster ids, best first.
    pub order: Vec<usize>,
    /// Per cluster id: index of its best-ranked tree.
    pub representatives: Vec<usize>,
}

/// Orders clusters from per-tree search ranks (1 = best) and node counts.
///
/// * `Best`: ascending by the best member rank.
/// * `Worst`: ascending by the worst member rank.
/// * `Average`: ascending by the mean member rank.
/// * `LargestSize`: ascending by the largest member tree, so the cluster
///   holding the biggest tree comes last.
///
/// Ties fall back to ascending cluster id.
pub fn rank_clusters(
    c: &Clustering,
    tree_ranks: &[usize],
    tree_sizes: &[usize],
    heuristic: Heuristic,
) -> ClusterRanking {
    let members = c.members();
    let representatives: Vec<usize> = members
        .iter()
        .map(|ms| {
            *ms.iter()
                .min_by_key(|&&i| tree_ranks[i])
                .expect("non-empty cluster")
        })
        .collect();
    let key = |ms: &[usize]| -> f64 {
        match heuristic {
            Heuristic::Best => ms.iter().map(|&i| tree_ranks[i]).min().unwrap_or(0) as f64,
            Heuristic::Worst => ms.iter().map(|&i| tree_ranks[i]).max().unwrap_or(0) as f64,
            Heuristic::Average => {
                ms.iter().map(|&i| tree_ranks[i] as f64).sum::<f64>() / ms.len() as f64
            }
            Heuristic::LargestSize => ms.iter().map(|&i| tree_sizes[i]).max().unwrap_or(0) as f64,
        }
    };
    let keys: Vec<f64> = members.iter().map(|ms| key(ms)).collect();
    let mut order: Vec<usize> = (0..c.k).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
    ClusterRanking {
        heuristic,
        order,
        representatives,
    }
}
