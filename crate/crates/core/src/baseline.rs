//! Comparison clusterers: structural isomorphism and tree edit distance.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::cluster::{select_clustering, ClusterError, Clustering, DistanceMatrix};
use crate::search::AnswerTree;

/// A rooted, ordered, labelled tree.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabeledTree {
    pub label: String,
    pub children: Vec<LabeledTree>,
}

impl LabeledTree {
    pub fn leaf(label: impl Into<String>) -> Self {
        LabeledTree {
            label: label.into(),
            children: Vec::new(),
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<LabeledTree>) -> Self {
        LabeledTree {
            label: label.into(),
            children,
        }
    }

    /// Hangs the answer tree from its root. A child's label is
    /// `predicate:node`, folding the edge label into the node below it.
    pub fn from_answer(t: &AnswerTree) -> Self {
        let adj = t.neighbours();
        fn build(
            adj: &BTreeMap<&str, Vec<(&str, &crate::graph::Triple)>>,
            at: &str,
            parent: Option<&str>,
            label: String,
        ) -> LabeledTree {
            let children = adj[at]
                .iter()
                .filter(|(n, _)| Some(*n) != parent)
                .map(|(n, e)| build(adj, n, Some(at), format!("{}:{}", e.predicate, n)))
                .collect();
            LabeledTree { label, children }
        }
        build(&adj, &t.root, None, t.root.clone())
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(LabeledTree::size).sum::<usize>()
    }

    /// Label-aware encoding; equal iff the ordered labelled trees are equal.
    fn encoding(&self) -> String {
        let mut s = format!("{}:{}(", self.label.len(), self.label);
        for c in &self.children {
            s.push_str(&c.encoding());
        }
        s.push(')');
        s
    }

    /// Fixes child order by recursively sorting on (label, encoding), so
    /// trees equal as unordered trees become equal as ordered trees.
    pub fn canonicalized(&self) -> Self {
        let mut children: Vec<(String, LabeledTree)> = self
            .children
            .iter()
            .map(|c| {
                let c = c.canonicalized();
                (c.encoding(), c)
            })
            .collect();
        children.sort_by(|(ea, a), (eb, b)| a.label.cmp(&b.label).then_with(|| ea.cmp(eb)));
        LabeledTree {
            label: self.label.clone(),
            children: children.into_iter().map(|(_, c)| c).collect(),
        }
    }
}

/// Label-free encoding of a rooted unordered tree.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CanonicalForm(pub String);

impl fmt::Display for CanonicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// AHU encoding: a node is `(` + its children's encodings, sorted, + `)`.
pub fn shape_form(t: &LabeledTree) -> CanonicalForm {
    fn enc(t: &LabeledTree) -> String {
        let mut kids: Vec<String> = t.children.iter().map(enc).collect();
        kids.sort();
        format!("({})", kids.concat())
    }
    CanonicalForm(enc(t))
}

pub fn canonical_form(t: &AnswerTree) -> CanonicalForm {
    shape_form(&LabeledTree::from_answer(t))
}

/// Groups trees with identical canonical forms. Cluster ids follow first
/// occurrence in the input order.
pub fn isomorphism_clusters(trees: &[AnswerTree]) -> Clustering {
    let mut ids: BTreeMap<CanonicalForm, usize> = BTreeMap::new();
    let labels: Vec<usize> = trees
        .iter()
        .map(|t| {
            let next = ids.len();
            *ids.entry(canonical_form(t)).or_insert(next)
        })
        .collect();
    Clustering::from_labels(&labels)
}

/// 0 for isomorphic pairs, 1 otherwise.
pub fn isomorphism_distance_matrix(trees: &[AnswerTree]) -> DistanceMatrix {
    let forms: Vec<CanonicalForm> = trees.iter().map(canonical_form).collect();
    DistanceMatrix::from_fn(
        trees.len(),
        |i, j| if forms[i] == forms[j] { 0.0 } else { 1.0 },
    )
}

/// Post-order view of an ordered tree for Zhang-Shasha.
struct PostOrder<'t> {
    labels: Vec<&'t str>,
    /// Post-order index of each node's leftmost leaf descendant.
    leftmost: Vec<usize>,
    keyroots: Vec<usize>,
}

impl<'t> PostOrder<'t> {
    fn new(t: &'t LabeledTree) -> Self {
        fn walk<'t>(
            t: &'t LabeledTree,
            labels: &mut Vec<&'t str>,
            leftmost: &mut Vec<usize>,
        ) -> usize {
            let mut first = None;
            for c in &t.children {
                let l = walk(c, labels, leftmost);
                first.get_or_insert(l);
            }
            let idx = labels.len();
            labels.push(&t.label);
            let lm = first.unwrap_or(idx);
            leftmost.push(lm);
            lm
        }
        let mut labels = Vec::new();
        let mut leftmost = Vec::new();
        walk(t, &mut labels, &mut leftmost);
        // A keyroot is the highest node for each distinct leftmost leaf.
        let mut seen = BTreeSet::new();
        let mut keyroots: Vec<usize> = (0..labels.len())
            .rev()
            .filter(|&i| seen.insert(leftmost[i]))
            .collect();
        keyroots.sort_unstable();
        PostOrder {
            labels,
            leftmost,
            keyroots,
        }
    }
}

/// Unit-cost ordered tree edit distance (Zhang-Shasha).
pub fn ordered_ted(a: &LabeledTree, b: &LabeledTree) -> usize {
    let a = PostOrder::new(a);
    let b = PostOrder::new(b);
    let (n, m) = (a.labels.len(), b.labels.len());
    let mut tree_dist = vec![vec![0usize; m]; n];
    let mut forest = vec![vec![0usize; m + 1]; n + 1];

    for &i in &a.keyroots {
        for &j in &b.keyroots {
            let (li, lj) = (a.leftmost[i], b.leftmost[j]);
            // forest[x][y]: distance between a[li..li+x) and b[lj..lj+y).
            forest[0][0] = 0;
            for x in 1..=i - li + 1 {
                forest[x][0] = forest[x - 1][0] + 1;
            }
            for y in 1..=j - lj + 1 {
                forest[0][y] = forest[0][y - 1] + 1;
            }
            for x in 1..=i - li + 1 {
                for y in 1..=j - lj + 1 {
                    let (ai, bj) = (li + x - 1, lj + y - 1);
                    let delete = forest[x - 1][y] + 1;
                    let insert = forest[x][y - 1] + 1;
                    if a.leftmost[ai] == li && b.leftmost[bj] == lj {
                        let relabel = usize::from(a.labels[ai] != b.labels[bj]);
                        let d = delete.min(insert).min(forest[x - 1][y - 1] + relabel);
                        forest[x][y] = d;
                        tree_dist[ai][bj] = d;
                    } else {
                        let px = a.leftmost[ai] - li;
                        let py = b.leftmost[bj] - lj;
                        forest[x][y] = delete.min(insert).min(forest[px][py] + tree_dist[ai][bj]);
                    }
                }
            }
        }
    }
    tree_dist[n - 1][m - 1]
}

/// Edit distance between answer trees after canonical child ordering.
pub fn tree_edit_distance(t1: &AnswerTree, t2: &AnswerTree) -> usize {
    ordered_ted(
        &LabeledTree::from_answer(t1).canonicalized(),
        &LabeledTree::from_answer(t2).canonicalized(),
    )
}

/// `1 - TED / (nodes(T1) + nodes(T2))`.
pub fn edit_similarity(t1: &AnswerTree, t2: &AnswerTree) -> f64 {
    similarity_from_ted(tree_edit_distance(t1, t2), t1.node_count(), t2.node_count())
}

pub fn similarity_from_ted(ted: usize, nodes1: usize, nodes2: usize) -> f64 {
    1.0 - ted as f64 / (nodes1 + nodes2) as f64
}

/// Pairwise edit similarities, unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_trees(trees: &[AnswerTree]) -> Self {
        let labeled: Vec<LabeledTree> = trees
            .iter()
            .map(|t| LabeledTree::from_answer(t).canonicalized())
            .collect();
        let sizes: Vec<usize> = labeled.iter().map(LabeledTree::size).collect();
        // Reuse the symmetric parallel fill; the diagonal is patched to 1.
        let es = DistanceMatrix::from_fn(trees.len(), |i, j| {
            similarity_from_ted(ordered_ted(&labeled[i], &labeled[j]), sizes[i], sizes[j])
        });
        let n = trees.len();
        let mut data: Vec<f64> = es.rows().into_iter().flatten().collect();
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        SimilarityMatrix { n, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        SimilarityMatrix {
            n: rows.len(),
            data: rows.iter().flatten().copied().collect(),
        }
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
}

/// `1 - sum_k |M[i][k] - M[j][k]| / n`.
pub fn column_similarity(m: &SimilarityMatrix, i: usize, j: usize) -> f64 {
    let n = m.len();
    let err: f64 = (0..n).map(|k| (m.get(i, k) - m.get(j, k)).abs()).sum();
    1.0 - err / n as f64
}

/// Distances `1 - cs(i, j)` over all tree pairs.
pub fn ted_distance_matrix(trees: &[AnswerTree]) -> DistanceMatrix {
    let sim = SimilarityMatrix::from_trees(trees);
    DistanceMatrix::from_fn(trees.len(), |i, j| {
        // Rounding can leave a hair below zero for identical columns.
        (1.0 - column_similarity(&sim, i, j)).max(0.0)
    })
}

/// Edit-distance clustering with the same complete-link and CH selection
/// as the language-model route.
pub fn ted_clusters(
    trees: &[AnswerTree],
    k_min: usize,
    k_max: usize,
) -> Result<Clustering, ClusterError> {
    select_clustering(&ted_distance_matrix(trees), k_min, k_max)
}
