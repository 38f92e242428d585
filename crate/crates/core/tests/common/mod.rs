//! Independent reference implementations and generators shared by the
//! integration tests. Nothing here calls into the code under test except to
//! build inputs.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use klustree_core::baseline::LabeledTree;
use klustree_core::cluster::DistanceMatrix;
use klustree_core::graph::{Graph, Term, Triple};
use klustree_core::lm::{LanguageModel, LmSide};
use rand::Rng;

pub fn fixture_path(name: &str) -> String {
    format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(name: &str) -> Graph {
    Graph::load_path(fixture_path(name)).unwrap()
}

/// A random graph with at most `max_triples` triples over a small label
/// pool, so that labels repeat and documents overlap.
pub fn random_graph(rng: &mut impl Rng, max_triples: usize) -> Graph {
    let nodes = rng.gen_range(2..=12);
    let preds = rng.gen_range(1..=4);
    let count = rng.gen_range(1..=max_triples);
    let mut triples = Vec::with_capacity(count);
    while triples.len() < count {
        let s = rng.gen_range(0..nodes);
        let o = rng.gen_range(0..nodes);
        if s == o {
            continue;
        }
        let p = rng.gen_range(0..preds);
        triples.push(Triple::new(
            format!("n{s}"),
            format!("p{p}"),
            format!("n{o}"),
        ));
    }
    Graph::from_triples(triples).unwrap()
}

/// A distribution over a random subset of a 30-term vocabulary.
pub fn random_sparse_lm(rng: &mut impl Rng) -> LanguageModel {
    let support = rng.gen_range(1..=8);
    let mut weights = BTreeMap::new();
    for _ in 0..support {
        let term = Term::Unigram(format!("w{}", rng.gen_range(0..30)));
        weights.insert(term, rng.gen_range(0.01..1.0));
    }
    let total: f64 = weights.values().sum();
    weights.values_mut().for_each(|w| *w /= total);
    LanguageModel::from_weights(LmSide::Entity, weights)
}

pub fn random_matrix(rng: &mut impl Rng, n: usize) -> DistanceMatrix {
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = rng.gen_range(0.0..1.0);
            rows[i][j] = d;
            rows[j][i] = d;
        }
    }
    DistanceMatrix::from_rows(&rows).unwrap()
}

/// Block matrix for a planted partition of `k` blocks of `size` items in
/// shuffled order: every within-block distance is one `eps` drawn from
/// `(0, 0.1]`, across-block distances are drawn from `[0.9, 1]`.
pub fn planted_matrix(rng: &mut impl Rng, k: usize, size: usize) -> (DistanceMatrix, Vec<usize>) {
    let n = k * size;
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    for i in (1..n).rev() {
        labels.swap(i, rng.gen_range(0..=i));
    }
    let eps = rng.gen_range(0.001..=0.1);
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = if labels[i] == labels[j] {
                eps
            } else {
                rng.gen_range(0.9..=1.0)
            };
            rows[i][j] = d;
            rows[j][i] = d;
        }
    }
    (DistanceMatrix::from_rows(&rows).unwrap(), labels)
}

/// Same partition, compared up to relabelling.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len()
        && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

/// All set partitions of `0..n` as label vectors (restricted growth strings).
pub fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let next = prefix.iter().max().map_or(0, |m| m + 1);
        for l in 0..=next {
            prefix.push(l);
            grow(prefix, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    grow(&mut Vec::new(), n, &mut out);
    out
}

/// CH straight from the scatter definitions: halved triple sums over
/// clusters and ordered member pairs.
pub fn brute_force_ch(m: &DistanceMatrix, labels: &[usize]) -> f64 {
    let n = labels.len();
    let k = labels.iter().collect::<BTreeSet<_>>().len();
    let mut w = 0.0;
    let mut b = 0.0;
    for c in 0..k {
        for i in 0..n {
            for j in 0..n {
                if labels[i] == c && labels[j] == c {
                    w += m.get(i, j);
                }
                if labels[i] == c && labels[j] != c {
                    b += m.get(i, j);
                }
            }
        }
    }
    w *= 0.5;
    b *= 0.5;
    if w == 0.0 {
        return f64::INFINITY;
    }
    (n - k) as f64 * b / ((k - 1) as f64 * w)
}

/// Every ordered unlabelled tree shape with exactly `n` nodes.
pub fn ordered_shapes(n: usize) -> Vec<LabeledTree> {
    forests(n - 1)
        .into_iter()
        .map(|children| LabeledTree::node("", children))
        .collect()
}

/// Every ordered forest with exactly `n` nodes.
fn forests(n: usize) -> Vec<Vec<LabeledTree>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 1..=n {
        for head in ordered_shapes(first) {
            for rest in forests(n - first) {
                let mut f = vec![head.clone()];
                f.extend(rest);
                out.push(f);
            }
        }
    }
    out
}

/// Every labelling of `shape` over `alphabet`.
pub fn labelings(shape: &LabeledTree, alphabet: &[&str]) -> Vec<LabeledTree> {
    let mut out = Vec::new();
    for label in alphabet {
        let mut child_options: Vec<Vec<LabeledTree>> = vec![Vec::new()];
        for c in &shape.children {
            let mut next = Vec::new();
            for prefix in &child_options {
                for lc in labelings(c, alphabet) {
                    let mut p = prefix.clone();
                    p.push(lc);
                    next.push(p);
                }
            }
            child_options = next;
        }
        for children in child_options {
            out.push(LabeledTree::node(*label, children));
        }
    }
    out
}

/// Isomorphism of unlabelled rooted unordered trees by trying every
/// matching of children.
pub fn isomorphic_by_permutation(a: &LabeledTree, b: &LabeledTree) -> bool {
    if a.children.len() != b.children.len() {
        return false;
    }
    fn assign(a: &[LabeledTree], b: &[LabeledTree], used: &mut Vec<bool>, i: usize) -> bool {
        if i == a.len() {
            return true;
        }
        for j in 0..b.len() {
            if !used[j] && isomorphic_by_permutation(&a[i], &b[j]) {
                used[j] = true;
                if assign(a, b, used, i + 1) {
                    return true;
                }
                used[j] = false;
            }
        }
        false
    }
    assign(
        &a.children,
        &b.children,
        &mut vec![false; b.children.len()],
        0,
    )
}

/// A node of an ordered labelled forest used by the edit-search oracle.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FNode(String, Vec<FNode>);

fn to_forest(t: &LabeledTree) -> Vec<FNode> {
    fn conv(t: &LabeledTree) -> FNode {
        FNode(t.label.clone(), t.children.iter().map(conv).collect())
    }
    vec![conv(t)]
}

fn forest_size(f: &[FNode]) -> usize {
    f.iter().map(|n| 1 + forest_size(&n.1)).sum()
}

/// Every forest one unit-cost edit away: relabel a node, delete a node
/// (its children take its place), or insert a node above a run of
/// consecutive siblings (possibly empty).
fn neighbours(f: &[FNode], alphabet: &[&str], max_nodes: usize) -> Vec<Vec<FNode>> {
    let mut out = Vec::new();
    let size = forest_size(f);
    // Insertions at this level.
    if size < max_nodes {
        for start in 0..=f.len() {
            for end in start..=f.len() {
                for l in alphabet {
                    let mut g = f[..start].to_vec();
                    g.push(FNode(l.to_string(), f[start..end].to_vec()));
                    g.extend_from_slice(&f[end..]);
                    out.push(g);
                }
            }
        }
    }
    for i in 0..f.len() {
        // Relabel.
        for l in alphabet {
            if *l != f[i].0 {
                let mut g = f.to_vec();
                g[i].0 = l.to_string();
                out.push(g);
            }
        }
        // Delete.
        let mut g = f[..i].to_vec();
        g.extend_from_slice(&f[i].1);
        g.extend_from_slice(&f[i + 1..]);
        out.push(g);
        // Edits inside the subtree.
        for sub in neighbours(&f[i].1, alphabet, max_nodes + forest_size(&f[i].1) - size) {
            let mut g = f.to_vec();
            g[i].1 = sub;
            out.push(g);
        }
    }
    out
}

/// Unit-cost edit distances from `source` to every forest reachable within
/// `max_nodes` nodes, by breadth-first search over single edits.
pub fn edit_distances_from(
    source: &LabeledTree,
    alphabet: &[&str],
    max_nodes: usize,
) -> BTreeMap<Vec<FNode>, usize> {
    let start = to_forest(source);
    let mut dist = BTreeMap::from([(start.clone(), 0usize)]);
    let mut queue = VecDeque::from([start]);
    while let Some(f) = queue.pop_front() {
        let d = dist[&f];
        for g in neighbours(&f, alphabet, max_nodes) {
            if !dist.contains_key(&g) {
                dist.insert(g.clone(), d + 1);
                queue.push_back(g);
            }
        }
    }
    dist
}

pub fn forest_key(t: &LabeledTree) -> Vec<FNode> {
    to_forest(t)
}
