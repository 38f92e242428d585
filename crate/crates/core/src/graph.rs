//! In-memory triple store.
//!
//! A [`Graph`] is built once from TSV and never mutated afterwards. It keeps
//! the deduplicated triple list plus the adjacency and corpus-count indexes
//! that the language-model estimators read.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("input contains no triples")]
    Empty,
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("read error: {0}")]
    Io(String),
}

/// A directed labelled edge `subject --predicate--> object`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    #[serde(rename = "s")]
    pub subject: String,
    #[serde(rename = "p")]
    pub predicate: String,
    #[serde(rename = "o")]
    pub object: String,
}

impl Triple {
    pub fn new(
        subject: impl Into<String>,
        predicate: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        Triple {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
        }
    }

    /// The endpoint opposite to `node`, if `node` is one of the endpoints.
    pub fn other_end(&self, node: &str) -> Option<&str> {
        if self.subject == node {
            Some(&self.object)
        } else if self.object == node {
            Some(&self.subject)
        } else {
            None
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{} {} {}>", self.subject, self.predicate, self.object)
    }
}

/// Which positions of a triple a bigram is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BigramRole {
    /// `(P, O)` for an entity that is the subject.
    PredicateObject,
    /// `(S, P)` for an entity that is the object.
    SubjectPredicate,
    /// `(S, O)` of a relationship document.
    SubjectObject,
}

/// Coarse kind of a term. Unigrams and bigrams never compare equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Unigram,
    Bigram,
}

/// A typed vocabulary entry.
///
/// Entity models use `Unigram` and the two entity bigram roles. Relationship
/// models keep subject and object unigrams apart so that the three mixture
/// components live in disjoint sub-vocabularies.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Unigram(String),
    SubjectUnigram(String),
    ObjectUnigram(String),
    Bigram(BigramRole, String, String),
}

impl Term {
    pub fn kind(&self) -> TermKind {
        match self {
            Term::Unigram(_) | Term::SubjectUnigram(_) | Term::ObjectUnigram(_) => {
                TermKind::Unigram
            }
            Term::Bigram(..) => TermKind::Bigram,
        }
    }

    pub fn bigram(role: BigramRole, first: impl Into<String>, second: impl Into<String>) -> Self {
        Term::Bigram(role, first.into(), second.into())
    }

    /// Short role tag used in JSON dumps.
    pub fn role(&self) -> &'static str {
        match self {
            Term::Unigram(_) => "neighbor",
            Term::SubjectUnigram(_) => "subject",
            Term::ObjectUnigram(_) => "object",
            Term::Bigram(BigramRole::PredicateObject, ..) => "predicate-object",
            Term::Bigram(BigramRole::SubjectPredicate, ..) => "subject-predicate",
            Term::Bigram(BigramRole::SubjectObject, ..) => "subject-object",
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Unigram(w) | Term::SubjectUnigram(w) | Term::ObjectUnigram(w) => f.write_str(w),
            Term::Bigram(_, a, b) => write!(f, "({a}, {b})"),
        }
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
struct Adjacency {
    out: Vec<usize>,
    incoming: Vec<usize>,
}

/// Entity terms: neighbor unigrams and role-tagged bigrams, one of each per
/// triple of the entity document.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityTerms {
    pub unigrams: BTreeMap<String, u64>,
    pub bigrams: BTreeMap<Term, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationshipTerms {
    pub subjects: BTreeMap<String, u64>,
    pub objects: BTreeMap<String, u64>,
    pub bigrams: BTreeMap<(String, String), u64>,
}

/// Immutable, indexed triple graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    triples: Vec<Triple>,
    nodes: BTreeMap<String, Adjacency>,
    predicates: BTreeMap<String, Vec<usize>>,
    bigram_counts: HashMap<Term, u64>,
}

impl Graph {
    /// Builds a graph from already-parsed triples. Duplicates are dropped.
    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Result<Self, GraphError> {
        let set: BTreeSet<Triple> = triples.into_iter().collect();
        if set.is_empty() {
            return Err(GraphError::Empty);
        }
        let triples: Vec<Triple> = set.into_iter().collect();

        let mut nodes: BTreeMap<String, Adjacency> = BTreeMap::new();
        let mut predicates: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut bigram_counts: HashMap<Term, u64> = HashMap::new();
        for (idx, t) in triples.iter().enumerate() {
            nodes.entry(t.subject.clone()).or_default().out.push(idx);
            nodes
                .entry(t.object.clone())
                .or_default()
                .incoming
                .push(idx);
            predicates.entry(t.predicate.clone()).or_default().push(idx);
            for term in [
                Term::bigram(BigramRole::PredicateObject, &t.predicate, &t.object),
                Term::bigram(BigramRole::SubjectPredicate, &t.subject, &t.predicate),
                Term::bigram(BigramRole::SubjectObject, &t.subject, &t.object),
            ] {
                *bigram_counts.entry(term).or_insert(0) += 1;
            }
        }

        Ok(Graph {
            triples,
            nodes,
            predicates,
            bigram_counts,
        })
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn predicates(&self) -> impl Iterator<Item = &str> {
        self.predicates.keys().map(String::as_str)
    }

    pub fn contains_node(&self, label: &str) -> bool {
        self.nodes.contains_key(label)
    }

    pub fn contains_triple(&self, t: &Triple) -> bool {
        self.triples.binary_search(t).is_ok()
    }

    /// Triples incident to `node` in either direction, in storage order.
    pub fn incident(&self, node: &str) -> impl Iterator<Item = &Triple> {
        let adj = self.nodes.get(node);
        let out = adj.map(|a| a.out.as_slice()).unwrap_or(&[]);
        let incoming = adj.map(|a| a.incoming.as_slice()).unwrap_or(&[]);
        out.iter()
            .chain(incoming.iter())
            .map(move |&i| &self.triples[i])
    }

    fn adjacency(&self, node: &str) -> Result<&Adjacency, GraphError> {
        self.nodes
            .get(node)
            .ok_or_else(|| GraphError::UnknownEntity(node.to_string()))
    }

    /// All triples in which `entity` is the subject or the object.
    pub fn entity_document(&self, entity: &str) -> Result<Vec<&Triple>, GraphError> {
        let adj = self.adjacency(entity)?;
        let idx: BTreeSet<usize> = adj.out.iter().chain(&adj.incoming).copied().collect();
        Ok(idx.into_iter().map(|i| &self.triples[i]).collect())
    }

    pub fn entity_terms(&self, entity: &str) -> Result<EntityTerms, GraphError> {
        let adj = self.adjacency(entity)?;
        let mut unigrams = BTreeMap::new();
        let mut bigrams = BTreeMap::new();
        for t in adj.out.iter().map(|&i| &self.triples[i]) {
            *unigrams.entry(t.object.clone()).or_insert(0) += 1;
            *bigrams
                .entry(Term::bigram(
                    BigramRole::PredicateObject,
                    &t.predicate,
                    &t.object,
                ))
                .or_insert(0) += 1;
        }
        for t in adj.incoming.iter().map(|&i| &self.triples[i]) {
            *unigrams.entry(t.subject.clone()).or_insert(0) += 1;
            *bigrams
                .entry(Term::bigram(
                    BigramRole::SubjectPredicate,
                    &t.subject,
                    &t.predicate,
                ))
                .or_insert(0) += 1;
        }
        Ok(EntityTerms { unigrams, bigrams })
    }

    /// All triples whose predicate is `predicate`.
    pub fn relationship_document(&self, predicate: &str) -> Result<Vec<&Triple>, GraphError> {
        let idx = self
            .predicates
            .get(predicate)
            .ok_or_else(|| GraphError::UnknownPredicate(predicate.to_string()))?;
        Ok(idx.iter().map(|&i| &self.triples[i]).collect())
    }

    pub fn relationship_terms(&self, predicate: &str) -> Result<RelationshipTerms, GraphError> {
        Ok(relationship_terms_of(
            self.relationship_document(predicate)?,
        ))
    }

    /// Corpus count `c(w, D(G))`. Unigram-kind terms count subject plus
    /// object occurrences of the label; bigrams count triples that carry the
    /// pair in the bigram's role. Absent terms count 0.
    pub fn corpus_count(&self, term: &Term) -> u64 {
        match term {
            Term::Unigram(w) | Term::SubjectUnigram(w) | Term::ObjectUnigram(w) => self
                .nodes
                .get(w)
                .map_or(0, |a| (a.out.len() + a.incoming.len()) as u64),
            Term::Bigram(..) => self.bigram_counts.get(term).copied().unwrap_or(0),
        }
    }

    /// Parses `subject\tpredicate\tobject[\tweight]` lines. Blank lines and
    /// lines starting with `#` are skipped. Labels are trimmed; the optional
    /// weight must be numeric and is otherwise ignored.
    pub fn load_tsv<R: BufRead>(source: R) -> Result<Self, GraphError> {
        let mut triples = Vec::new();
        for (i, raw) in source.split(b'\n').enumerate() {
            let line_no = i + 1;
            let raw = raw.map_err(|e| GraphError::Io(e.to_string()))?;
            let line = std::str::from_utf8(&raw).map_err(|_| GraphError::Parse {
                line: line_no,
                message: "invalid UTF-8".into(),
            })?;
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            triples.push(parse_line(line, line_no)?);
        }
        Graph::from_triples(triples)
    }

    pub fn load_path(path: impl AsRef<std::path::Path>) -> Result<Self, GraphError> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| GraphError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Graph::load_tsv(std::io::BufReader::new(file))
    }
}

pub(crate) fn relationship_terms_of<'a>(
    doc: impl IntoIterator<Item = &'a Triple>,
) -> RelationshipTerms {
    let mut subjects = BTreeMap::new();
    let mut objects = BTreeMap::new();
    let mut bigrams = BTreeMap::new();
    for t in doc {
        *subjects.entry(t.subject.clone()).or_insert(0) += 1;
        *objects.entry(t.object.clone()).or_insert(0) += 1;
        *bigrams
            .entry((t.subject.clone(), t.object.clone()))
            .or_insert(0) += 1;
    }
    RelationshipTerms {
        subjects,
        objects,
        bigrams,
    }
}

fn parse_line(line: &str, line_no: usize) -> Result<Triple, GraphError> {
    let fields: Vec<&str> = line.split('\t').collect();
    let err = |message: String| GraphError::Parse {
        line: line_no,
        message,
    };
    if !(3..=4).contains(&fields.len()) {
        return Err(err(format!(
            "expected 3 tab-separated fields (optionally a 4th weight), found {}",
            fields.len()
        )));
    }
    if let Some(w) = fields.get(3) {
        w.trim()
            .parse::<f64>()
            .map_err(|_| err(format!("weight `{}` is not a number", w.trim())))?;
    }
    let labels: Vec<&str> = fields[..3].iter().map(|f| f.trim()).collect();
    if let Some(pos) = labels.iter().position(|l| l.is_empty()) {
        return Err(err(format!("field {} is empty", pos + 1)));
    }
    if labels[0] == labels[2] {
        return Err(err(format!("self-loop on `{}`", labels[0])));
    }
    Ok(Triple::new(labels[0], labels[1], labels[2]))
}
