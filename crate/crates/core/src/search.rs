//! Keyword search producing minimal answer trees.
//!
//! Keywords match node labels by case-insensitive substring. Triples are
//! walked in both directions; every answer edge keeps the orientation of the
//! stored triple. Candidates are grown from each possible connector node by
//! picking one path per keyword, kept only when the union is a tree that
//! passes [`is_minimal`], and deduplicated by their edge set.
//!
//! Results are ordered by edge count, then by [`AnswerTree::serialization`].
//! Enumeration deepens one edge at a time and always finishes a whole level,
//! so a shorter `limit` returns a prefix of a longer one.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, Triple};

pub const DEFAULT_MAX_EDGES: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("a query needs at least 2 keywords, got {0}")]
    TooFewKeywords(usize),
    #[error("keyword {0} is empty")]
    EmptyKeyword(usize),
    #[error("duplicate keyword `{0}`")]
    DuplicateKeyword(String),
    #[error("keyword `{0}` matches no node")]
    UnmatchedKeyword(String),
    #[error("limit must be at least 1")]
    ZeroLimit,
    #[error("invalid answer tree (rank {rank}): {reason}")]
    InvalidTree { rank: usize, reason: String },
}

/// An ordered list of at least two distinct keywords.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct KeywordQuery {
    keywords: Vec<String>,
}

impl KeywordQuery {
    pub fn new<I, S>(keywords: I) -> Result<Self, SearchError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let keywords: Vec<String> = keywords
            .into_iter()
            .map(|k| k.into().trim().to_string())
            .collect();
        if let Some(i) = keywords.iter().position(|k| k.is_empty()) {
            return Err(SearchError::EmptyKeyword(i + 1));
        }
        if keywords.len() < 2 {
            return Err(SearchError::TooFewKeywords(keywords.len()));
        }
        let mut seen = BTreeSet::new();
        for k in &keywords {
            if !seen.insert(k.to_lowercase()) {
                return Err(SearchError::DuplicateKeyword(k.clone()));
            }
        }
        Ok(KeywordQuery { keywords })
    }

    /// Parses a comma-separated keyword list such as `Carter,Depp`.
    pub fn parse_list(list: &str) -> Result<Self, SearchError> {
        KeywordQuery::new(list.split(','))
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    fn lowered(&self) -> Vec<String> {
        self.keywords.iter().map(|k| k.to_lowercase()).collect()
    }
}

impl<'de> Deserialize<'de> for KeywordQuery {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        KeywordQuery::new(raw).map_err(serde::de::Error::custom)
    }
}

/// A rooted answer tree over graph triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerTree {
    pub rank: usize,
    pub score: f64,
    pub root: String,
    /// Sorted, in stored triple orientation.
    pub edges: Vec<Triple>,
}

impl AnswerTree {
    /// Builds a tree from its edges, choosing the root by [`choose_root`].
    /// `single` names the node of an edgeless tree.
    pub fn from_edges(mut edges: Vec<Triple>, single: Option<&str>) -> Self {
        edges.sort();
        edges.dedup();
        let root = match single {
            Some(node) if edges.is_empty() => node.to_string(),
            _ => choose_root(&edges),
        };
        AnswerTree {
            rank: 0,
            score: edges.len() as f64,
            root,
            edges,
        }
    }

    pub fn nodes(&self) -> BTreeSet<&str> {
        let mut nodes: BTreeSet<&str> = self
            .edges
            .iter()
            .flat_map(|t| [t.subject.as_str(), t.object.as_str()])
            .collect();
        nodes.insert(self.root.as_str());
        nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes().len()
    }

    /// Stable text form used for tie-breaking and deduplication.
    pub fn serialization(&self) -> String {
        if self.edges.is_empty() {
            return format!("node\t{}", self.root);
        }
        self.edges
            .iter()
            .map(|t| format!("{}\t{}\t{}", t.subject, t.predicate, t.object))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Undirected neighbour lists: node -> [(neighbour, edge)].
    pub fn neighbours(&self) -> BTreeMap<&str, Vec<(&str, &Triple)>> {
        let mut adj: BTreeMap<&str, Vec<(&str, &Triple)>> = BTreeMap::new();
        adj.entry(self.root.as_str()).or_default();
        for t in &self.edges {
            adj.entry(&t.subject).or_default().push((&t.object, t));
            adj.entry(&t.object).or_default().push((&t.subject, t));
        }
        adj
    }

    /// Checks the structural invariants: tree shape, every edge present in
    /// the graph, keyword coverage and minimality.
    pub fn validate(&self, g: &Graph, q: &KeywordQuery) -> Result<(), String> {
        if !is_tree(&self.edges, &self.root) {
            return Err("edges do not form a tree containing the root".into());
        }
        if let Some(t) = self.edges.iter().find(|t| !g.contains_triple(t)) {
            return Err(format!("edge {t} is not in the graph"));
        }
        if !g.contains_node(&self.root) {
            return Err(format!("root `{}` is not in the graph", self.root));
        }
        let nodes = self.nodes();
        if !covers(nodes.iter().copied(), &q.lowered()) {
            return Err("tree does not cover every keyword".into());
        }
        if !is_minimal(self, q) {
            return Err("tree is not minimal".into());
        }
        Ok(())
    }
}

fn is_tree(edges: &[Triple], root: &str) -> bool {
    if edges.is_empty() {
        return true;
    }
    let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
    for t in edges {
        adj.entry(&t.subject).or_default().push(&t.object);
        adj.entry(&t.object).or_default().push(&t.subject);
    }
    if adj.len() != edges.len() + 1 || !adj.contains_key(root) {
        return false;
    }
    let mut seen = BTreeSet::from([root]);
    let mut queue = VecDeque::from([root]);
    while let Some(n) = queue.pop_front() {
        for &m in &adj[n] {
            if seen.insert(m) {
                queue.push_back(m);
            }
        }
    }
    seen.len() == adj.len()
}

/// Picks the root of an edge set: a centre of the undirected tree. When the
/// tree has two centres, the one with more incoming stored edges wins, then
/// the smaller label.
pub fn choose_root(edges: &[Triple]) -> String {
    let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut indegree: HashMap<&str, usize> = HashMap::new();
    for t in edges {
        adj.entry(&t.subject).or_default().push(&t.object);
        adj.entry(&t.object).or_default().push(&t.subject);
        *indegree.entry(&t.object).or_default() += 1;
    }
    let eccentricity = |start: &str| {
        let mut dist = HashMap::from([(start, 0usize)]);
        let mut queue = VecDeque::from([start]);
        let mut far = 0;
        while let Some(n) = queue.pop_front() {
            let d = dist[n];
            far = far.max(d);
            for &m in &adj[n] {
                if !dist.contains_key(m) {
                    dist.insert(m, d + 1);
                    queue.push_back(m);
                }
            }
        }
        far
    };
    adj.keys()
        .map(|&n| {
            let indeg = indegree.get(n).copied().unwrap_or(0);
            ((eccentricity(n), std::cmp::Reverse(indeg), n), n)
        })
        .min()
        .map(|(_, n)| n.to_string())
        .unwrap_or_default()
}

fn covers<'a>(nodes: impl Iterator<Item = &'a str>, lowered_keywords: &[String]) -> bool {
    let mut covered = vec![false; lowered_keywords.len()];
    for n in nodes {
        let n = n.to_lowercase();
        for (i, k) in lowered_keywords.iter().enumerate() {
            covered[i] |= n.contains(k.as_str());
        }
    }
    covered.into_iter().all(|c| c)
}

/// All node labels containing `keyword`, compared case-insensitively.
pub fn match_keyword<'g>(g: &'g Graph, keyword: &str) -> BTreeSet<&'g str> {
    let needle = keyword.to_lowercase();
    g.nodes()
        .filter(|n| n.to_lowercase().contains(&needle))
        .collect()
}

/// True iff no proper subtree of `t` still covers every keyword. Any proper
/// subtree is reachable by pruning leaves one at a time, so it is enough to
/// try removing each single leaf.
pub fn is_minimal(t: &AnswerTree, q: &KeywordQuery) -> bool {
    let keywords = q.lowered();
    if t.edges.is_empty() {
        return true;
    }
    let adj = t.neighbours();
    adj.iter()
        .filter(|(_, ns)| ns.len() == 1)
        .all(|(leaf, _)| !covers(adj.keys().copied().filter(|n| n != leaf), &keywords))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    pub limit: usize,
    /// Largest answer tree, in edges, that enumeration will consider.
    pub max_edges: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            limit: 25,
            max_edges: DEFAULT_MAX_EDGES,
        }
    }
}

/// Ranked minimal answer trees, at most `limit` of them.
pub fn enumerate_answer_trees(
    g: &Graph,
    q: &KeywordQuery,
    limit: usize,
) -> Result<Vec<AnswerTree>, SearchError> {
    enumerate_answer_trees_with(
        g,
        q,
        &SearchOptions {
            limit,
            ..SearchOptions::default()
        },
    )
}

pub fn enumerate_answer_trees_with(
    g: &Graph,
    q: &KeywordQuery,
    opts: &SearchOptions,
) -> Result<Vec<AnswerTree>, SearchError> {
    if opts.limit == 0 {
        return Err(SearchError::ZeroLimit);
    }
    let mut matches = Vec::with_capacity(q.len());
    for k in q.keywords() {
        let m = match_keyword(g, k);
        if m.is_empty() {
            return Err(SearchError::UnmatchedKeyword(k.clone()));
        }
        matches.push(m);
    }

    let mut found = BTreeMap::new();
    for budget in 0..=opts.max_edges {
        found = Enumerator::new(g, q, &matches, budget).run();
        if found.len() >= opts.limit {
            break;
        }
    }

    Ok(found
        .into_values()
        .take(opts.limit)
        .enumerate()
        .map(|(i, mut t)| {
            t.rank = i + 1;
            t
        })
        .collect())
}

type Path<'g> = Vec<&'g Triple>;

struct Enumerator<'a, 'g> {
    g: &'g Graph,
    query: &'a KeywordQuery,
    matches: &'a [BTreeSet<&'g str>],
    budget: usize,
    /// Per keyword: undirected hop distance from the nearest match.
    distance: Vec<HashMap<&'g str, usize>>,
}

impl<'a, 'g> Enumerator<'a, 'g> {
    fn new(
        g: &'g Graph,
        query: &'a KeywordQuery,
        matches: &'a [BTreeSet<&'g str>],
        budget: usize,
    ) -> Self {
        let distance = matches.iter().map(|m| bounded_bfs(g, m, budget)).collect();
        Enumerator {
            g,
            query,
            matches,
            budget,
            distance,
        }
    }

    /// Trees with at most `budget` edges keyed by (edge count, serialization).
    fn run(&self) -> BTreeMap<(usize, String), AnswerTree> {
        let mut out = BTreeMap::new();
        let connectors: Vec<&str> = self.distance[0]
            .keys()
            .copied()
            .filter(|n| self.distance.iter().all(|d| d.contains_key(n)))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        for root in connectors {
            let per_keyword: Vec<Vec<Path<'g>>> = (0..self.matches.len())
                .map(|k| self.paths_to_keyword(root, k))
                .collect();
            let mut chosen = Vec::new();
            self.combine_from(root, &per_keyword, 0, &mut chosen, &mut out);
        }
        out
    }

    /// Simple paths from `root` to any match of keyword `k`, length bounded by
    /// the budget and pruned by distance to the keyword.
    fn paths_to_keyword(&self, root: &'g str, k: usize) -> Vec<Path<'g>> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        let mut visited = vec![root];
        self.extend_path(root, k, &mut path, &mut visited, &mut out);
        out
    }

    fn extend_path(
        &self,
        at: &'g str,
        k: usize,
        path: &mut Path<'g>,
        visited: &mut Vec<&'g str>,
        out: &mut Vec<Path<'g>>,
    ) {
        if self.matches[k].contains(at) {
            out.push(path.clone());
        }
        let remaining = self.budget - path.len();
        if remaining == 0 {
            return;
        }
        for t in self.g.incident(at) {
            let next = t.other_end(at).expect("incident edge");
            if visited.contains(&next) {
                continue;
            }
            match self.distance[k].get(next) {
                Some(&d) if d < remaining => {}
                _ => continue,
            }
            path.push(t);
            visited.push(next);
            self.extend_path(next, k, path, visited, out);
            visited.pop();
            path.pop();
        }
    }

    fn combine_from(
        &self,
        root: &'g str,
        per_keyword: &[Vec<Path<'g>>],
        k: usize,
        chosen: &mut Vec<&'g Triple>,
        out: &mut BTreeMap<(usize, String), AnswerTree>,
    ) {
        if k == per_keyword.len() {
            let edges: Vec<Triple> = chosen
                .iter()
                .copied()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .cloned()
                .collect();
            let tree = AnswerTree::from_edges(edges, Some(root));
            if is_minimal(&tree, self.query) {
                out.entry((tree.edges.len(), tree.serialization()))
                    .or_insert(tree);
            }
            return;
        }
        for path in &per_keyword[k] {
            let before = chosen.len();
            for t in path {
                if !chosen.contains(t) {
                    chosen.push(t);
                }
            }
            if chosen.len() <= self.budget && forms_tree(chosen) {
                self.combine_from(root, per_keyword, k + 1, chosen, out);
            }
            chosen.truncate(before);
        }
    }
}

/// Edges all hang off one root, so they form a tree iff nodes = edges + 1.
fn forms_tree(edges: &[&Triple]) -> bool {
    if edges.is_empty() {
        return true;
    }
    let nodes: BTreeSet<&str> = edges
        .iter()
        .flat_map(|t| [t.subject.as_str(), t.object.as_str()])
        .collect();
    nodes.len() == edges.len() + 1
}

fn bounded_bfs<'g>(
    g: &'g Graph,
    sources: &BTreeSet<&'g str>,
    limit: usize,
) -> HashMap<&'g str, usize> {
    let mut dist: HashMap<&str, usize> = sources.iter().map(|&s| (s, 0)).collect();
    let mut queue: VecDeque<&str> = sources.iter().copied().collect();
    while let Some(n) = queue.pop_front() {
        let d = dist[n];
        if d == limit {
            continue;
        }
        for t in g.incident(n) {
            let m = t.other_end(n).expect("incident edge");
            if !dist.contains_key(m) {
                dist.insert(m, d + 1);
                queue.push_back(m);
            }
        }
    }
    dist
}

/// The answer-tree exchange document, emitted by search and accepted from
/// external producers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSet {
    pub query: KeywordQuery,
    pub trees: Vec<AnswerTree>,
}

impl AnswerSet {
    /// Checks every tree against the graph and sorts by rank. Ranks must be
    /// distinct and positive.
    pub fn validated(mut self, g: &Graph) -> Result<Self, SearchError> {
        let mut ranks = BTreeSet::new();
        for t in &self.trees {
            if t.rank == 0 || !ranks.insert(t.rank) {
                return Err(SearchError::InvalidTree {
                    rank: t.rank,
                    reason: "ranks must be distinct positive integers".into(),
                });
            }
            t.validate(g, &self.query)
                .map_err(|reason| SearchError::InvalidTree {
                    rank: t.rank,
                    reason,
                })?;
        }
        self.trees.sort_by_key(|t| t.rank);
        Ok(self)
    }
}
