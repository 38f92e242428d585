//! Smoothed mixture language models for entities, relationships and
//! answer trees.
//!
//! Every component model interpolates the document maximum-likelihood
//! estimate with a corpus background restricted to the component's own
//! term set:
//!
//! ```text
//! P(w) = lambda * c(w, D) / sum_{w' in V} c(w', D)
//!      + (1 - lambda) * c(w, G) / sum_{w' in V} c(w', G)
//! ```
//!
//! Components are typed (see [`Term`]) so that mixing them yields a proper
//! distribution over the disjoint union of their vocabularies.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{BigramRole, Graph, GraphError, Term, TermKind};
use crate::search::AnswerTree;

/// Mixed probabilities below this are dropped before renormalising.
pub const PRUNE_BELOW: f64 = 1e-12;
const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum LmError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("delta weights: {0}")]
    InvalidDelta(String),
}

/// Which side of a tree model a distribution belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LmSide {
    Entity,
    Relationship,
}

/// A sparse probability table. All stored probabilities are positive and,
/// unless the model is empty, sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageModel {
    side: LmSide,
    probs: BTreeMap<Term, f64>,
}

impl LanguageModel {
    /// The model with no terms. Only edgeless trees produce one, on the
    /// relationship side.
    pub fn empty(side: LmSide) -> Self {
        LanguageModel {
            side,
            probs: BTreeMap::new(),
        }
    }

    /// Normalises non-negative weights into a distribution, dropping entries
    /// below [`PRUNE_BELOW`].
    pub fn from_weights(side: LmSide, weights: BTreeMap<Term, f64>) -> Self {
        let mut probs: BTreeMap<Term, f64> = weights
            .into_iter()
            .filter(|(_, p)| *p >= PRUNE_BELOW)
            .collect();
        let total: f64 = probs.values().sum();
        // Leave already-normalised input untouched so that one-component
        // mixtures reproduce their component bit for bit.
        if total > 0.0 && (total - 1.0).abs() > 1e-12 {
            probs.values_mut().for_each(|p| *p /= total);
        }
        let lm = LanguageModel { side, probs };
        debug_assert!(lm.is_empty() || (lm.total() - 1.0).abs() <= SUM_TOLERANCE);
        lm
    }

    pub fn side(&self) -> LmSide {
        self.side
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, term: &Term) -> f64 {
        self.probs.get(term).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }

    /// Probability mass held by terms of one kind.
    pub fn mass_of(&self, kind: TermKind) -> f64 {
        self.probs
            .iter()
            .filter(|(t, _)| t.kind() == kind)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Term, f64)> {
        self.probs.iter().map(|(t, &p)| (t, p))
    }

    /// Debug dump, terms ordered by descending probability then term text.
    pub fn to_json(&self) -> LmDump {
        let mut terms: Vec<LmDumpTerm> = self
            .probs
            .iter()
            .map(|(t, &p)| LmDumpTerm {
                t: t.to_string(),
                kind: t.kind(),
                role: t.role(),
                p,
            })
            .collect();
        terms.sort_by(|a, b| {
            b.p.total_cmp(&a.p)
                .then_with(|| a.t.cmp(&b.t))
                .then_with(|| a.role.cmp(b.role))
        });
        LmDump {
            kind: self.side,
            terms,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LmDump {
    pub kind: LmSide,
    pub terms: Vec<LmDumpTerm>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LmDumpTerm {
    pub t: String,
    #[serde(rename = "type")]
    pub kind: TermKind,
    pub role: &'static str,
    pub p: f64,
}

/// How entity weights are assigned when mixing a tree's entity models.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaPolicy {
    #[default]
    Equal,
    /// Per-node weights keyed by label; must cover every tree node and sum
    /// to one.
    Explicit(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmParams {
    /// Weight of the document estimate against the corpus background.
    pub lambda: f64,
    /// Entity unigram weight; bigrams get `1 - mu`.
    pub mu: f64,
    pub mu_s: f64,
    pub mu_o: f64,
    /// Entity-side weight in the tree distance.
    pub gamma: f64,
    pub delta: DeltaPolicy,
}

impl Default for LmParams {
    fn default() -> Self {
        LmParams {
            lambda: 0.5,
            mu: 0.5,
            mu_s: 1.0 / 3.0,
            mu_o: 1.0 / 3.0,
            gamma: 0.5,
            delta: DeltaPolicy::Equal,
        }
    }
}

impl LmParams {
    pub fn validate(&self) -> Result<(), LmError> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("mu_s", self.mu_s),
            ("mu_o", self.mu_o),
            ("gamma", self.gamma),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(LmError::InvalidParams(format!(
                    "{name} = {v} is outside [0, 1]"
                )));
            }
        }
        if self.mu_s + self.mu_o > 1.0 + 1e-12 {
            return Err(LmError::InvalidParams(format!(
                "mu_s + mu_o = {} exceeds 1",
                self.mu_s + self.mu_o
            )));
        }
        if let DeltaPolicy::Explicit(w) = &self.delta {
            if w.values().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(LmError::InvalidDelta("weights must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// One smoothed component over a typed vocabulary.
fn smoothed_component(
    doc_counts: &BTreeMap<Term, u64>,
    lambda: f64,
    corpus: impl Fn(&Term) -> u64,
) -> BTreeMap<Term, f64> {
    let doc_total: u64 = doc_counts.values().sum();
    let background: Vec<u64> = doc_counts.keys().map(&corpus).collect();
    let bg_total: u64 = background.iter().sum();
    doc_counts
        .iter()
        .zip(background)
        .map(|((term, &c), bg)| {
            let mle = c as f64 / doc_total as f64;
            let bg = if bg_total == 0 {
                0.0
            } else {
                bg as f64 / bg_total as f64
            };
            (term.clone(), lambda * mle + (1.0 - lambda) * bg)
        })
        .collect()
}

fn mix_into(acc: &mut BTreeMap<Term, f64>, weight: f64, component: BTreeMap<Term, f64>) {
    if weight == 0.0 {
        return;
    }
    for (t, p) in component {
        *acc.entry(t).or_insert(0.0) += weight * p;
    }
}

/// Entity model: `mu * P_unigram + (1 - mu) * P_bigram`.
pub fn estimate_entity_lm(g: &Graph, entity: &str, p: &LmParams) -> Result<LanguageModel, LmError> {
    let terms = g.entity_terms(entity)?;
    let unigrams: BTreeMap<Term, u64> = terms
        .unigrams
        .into_iter()
        .map(|(w, c)| (Term::Unigram(w), c))
        .collect();
    let corpus = |t: &Term| g.corpus_count(t);

    let mut mixed = BTreeMap::new();
    mix_into(
        &mut mixed,
        p.mu,
        smoothed_component(&unigrams, p.lambda, corpus),
    );
    mix_into(
        &mut mixed,
        1.0 - p.mu,
        smoothed_component(&terms.bigrams, p.lambda, corpus),
    );
    Ok(LanguageModel::from_weights(LmSide::Entity, mixed))
}

/// Relationship model over subject unigrams, object unigrams and
/// subject-object bigrams.
pub fn estimate_relationship_lm(
    g: &Graph,
    predicate: &str,
    p: &LmParams,
) -> Result<LanguageModel, LmError> {
    let terms = g.relationship_terms(predicate)?;
    let subjects: BTreeMap<Term, u64> = terms
        .subjects
        .into_iter()
        .map(|(w, c)| (Term::SubjectUnigram(w), c))
        .collect();
    let objects: BTreeMap<Term, u64> = terms
        .objects
        .into_iter()
        .map(|(w, c)| (Term::ObjectUnigram(w), c))
        .collect();
    let bigrams: BTreeMap<Term, u64> = terms
        .bigrams
        .into_iter()
        .map(|((s, o), c)| (Term::bigram(BigramRole::SubjectObject, s, o), c))
        .collect();
    let corpus = |t: &Term| g.corpus_count(t);

    let mut mixed = BTreeMap::new();
    mix_into(
        &mut mixed,
        p.mu_s,
        smoothed_component(&subjects, p.lambda, corpus),
    );
    mix_into(
        &mut mixed,
        p.mu_o,
        smoothed_component(&objects, p.lambda, corpus),
    );
    mix_into(
        &mut mixed,
        1.0 - p.mu_s - p.mu_o,
        smoothed_component(&bigrams, p.lambda, corpus),
    );
    Ok(LanguageModel::from_weights(LmSide::Relationship, mixed))
}

/// The two-sided model of one answer tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeLm {
    pub entity: LanguageModel,
    /// Empty for edgeless trees.
    pub relationship: LanguageModel,
    pub tree_rank: usize,
}

/// Term-wise weighted sum of distributions.
fn weighted_mixture<'a>(
    side: LmSide,
    parts: impl IntoIterator<Item = (f64, &'a LanguageModel)>,
) -> LanguageModel {
    let mut acc = BTreeMap::new();
    for (w, lm) in parts {
        if w == 0.0 {
            continue;
        }
        for (t, p) in lm.iter() {
            *acc.entry(t.clone()).or_insert(0.0) += w * p;
        }
    }
    LanguageModel::from_weights(side, acc)
}

/// Estimates entity and relationship models, memoising per label. The cache
/// is shared across threads; each label is estimated at most a few times
/// under contention and the first insert wins.
#[derive(Debug)]
pub struct LmEstimator<'g> {
    graph: &'g Graph,
    params: LmParams,
    entities: RwLock<HashMap<String, Arc<LanguageModel>>>,
    relationships: RwLock<HashMap<String, Arc<LanguageModel>>>,
}

impl<'g> LmEstimator<'g> {
    pub fn new(graph: &'g Graph, params: LmParams) -> Result<Self, LmError> {
        params.validate()?;
        Ok(LmEstimator {
            graph,
            params,
            entities: RwLock::default(),
            relationships: RwLock::default(),
        })
    }

    pub fn params(&self) -> &LmParams {
        &self.params
    }

    pub fn entity(&self, label: &str) -> Result<Arc<LanguageModel>, LmError> {
        cached(&self.entities, label, || {
            estimate_entity_lm(self.graph, label, &self.params)
        })
    }

    pub fn relationship(&self, predicate: &str) -> Result<Arc<LanguageModel>, LmError> {
        cached(&self.relationships, predicate, || {
            estimate_relationship_lm(self.graph, predicate, &self.params)
        })
    }

    pub fn tree(&self, t: &AnswerTree) -> Result<TreeLm, LmError> {
        let nodes: Vec<&str> = t.nodes().into_iter().collect();
        let weights = self.delta_weights(&nodes)?;
        let entity_lms = nodes
            .iter()
            .map(|n| self.entity(n))
            .collect::<Result<Vec<_>, _>>()?;
        let entity = weighted_mixture(
            LmSide::Entity,
            weights
                .iter()
                .copied()
                .zip(entity_lms.iter().map(Arc::as_ref)),
        );

        let relationship = if t.edges.is_empty() {
            LanguageModel::empty(LmSide::Relationship)
        } else {
            let share = 1.0 / t.edges.len() as f64;
            let rel_lms = t
                .edges
                .iter()
                .map(|e| self.relationship(&e.predicate))
                .collect::<Result<Vec<_>, _>>()?;
            weighted_mixture(
                LmSide::Relationship,
                rel_lms.iter().map(|lm| (share, lm.as_ref())),
            )
        };

        Ok(TreeLm {
            entity,
            relationship,
            tree_rank: t.rank,
        })
    }

    fn delta_weights(&self, nodes: &[&str]) -> Result<Vec<f64>, LmError> {
        match &self.params.delta {
            DeltaPolicy::Equal => Ok(vec![1.0 / nodes.len() as f64; nodes.len()]),
            DeltaPolicy::Explicit(map) => {
                let weights = nodes
                    .iter()
                    .map(|n| {
                        map.get(*n)
                            .copied()
                            .ok_or_else(|| LmError::InvalidDelta(format!("no weight for `{n}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > SUM_TOLERANCE {
                    return Err(LmError::InvalidDelta(format!(
                        "weights over the tree sum to {total}, not 1"
                    )));
                }
                Ok(weights)
            }
        }
    }
}

fn cached(
    cache: &RwLock<HashMap<String, Arc<LanguageModel>>>,
    key: &str,
    compute: impl FnOnce() -> Result<LanguageModel, LmError>,
) -> Result<Arc<LanguageModel>, LmError> {
    if let Some(lm) = cache.read().expect("lm cache poisoned").get(key) {
        return Ok(Arc::clone(lm));
    }
    let lm = Arc::new(compute()?);
    let mut w = cache.write().expect("lm cache poisoned");
    Ok(Arc::clone(w.entry(key.to_string()).or_insert(lm)))
}

/// Tree model with a one-off estimator.
pub fn estimate_tree_lm(g: &Graph, t: &AnswerTree, p: &LmParams) -> Result<TreeLm, LmError> {
    LmEstimator::new(g, p.clone())?.tree(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Triple;

    fn mini() -> Graph {
        Graph::load_tsv(include_str!("../fixtures/mini_imdb.tsv").as_bytes()).unwrap()
    }

    fn params(lambda: f64, mu: f64) -> LmParams {
        LmParams {
            lambda,
            mu,
            ..LmParams::default()
        }
    }

    fn uni(w: &str) -> Term {
        Term::Unigram(w.into())
    }

    #[test]
    fn corpse_bride_unigram_model() {
        let lm = estimate_entity_lm(&mini(), "CorpseBride", &params(0.5, 1.0)).unwrap();
        assert!((lm.prob(&uni("TimBurton")) - 5.0 / 24.0).abs() < 1e-12);
        assert!((lm.prob(&uni("JohnnyDepp")) - 0.375).abs() < 1e-12);
        assert!((lm.prob(&uni("HelenaCarter")) - 5.0 / 24.0).abs() < 1e-12);
        assert!((lm.prob(&uni("English")) - 5.0 / 24.0).abs() < 1e-12);
        assert_eq!(lm.len(), 4);
        assert!((lm.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_one_is_pure_mle() {
        let g = mini();
        for e in g.nodes() {
            let lm = estimate_entity_lm(&g, e, &params(1.0, 1.0)).unwrap();
            let terms = g.entity_terms(e).unwrap();
            let n: u64 = terms.unigrams.values().sum();
            for (w, c) in &terms.unigrams {
                assert!((lm.prob(&uni(w)) - *c as f64 / n as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bigram_mass_is_one_minus_mu() {
        let g = mini();
        for mu in [0.0, 0.25, 0.5, 0.9] {
            let lm = estimate_entity_lm(&g, "JohnnyDepp", &params(0.5, mu)).unwrap();
            assert!((lm.mass_of(TermKind::Bigram) - (1.0 - mu)).abs() < 1e-12);
            assert!((lm.mass_of(TermKind::Unigram) - mu).abs() < 1e-12);
        }
    }

    #[test]
    fn directed_by_is_three_point_masses() {
        let p = LmParams {
            mu_s: 0.2,
            mu_o: 0.5,
            ..LmParams::default()
        };
        let lm = estimate_relationship_lm(&mini(), "DirectedBy", &p).unwrap();
        assert_eq!(lm.len(), 3);
        assert!((lm.prob(&Term::SubjectUnigram("CorpseBride".into())) - 0.2).abs() < 1e-12);
        assert!((lm.prob(&Term::ObjectUnigram("TimBurton".into())) - 0.5).abs() < 1e-12);
        let bigram = Term::bigram(BigramRole::SubjectObject, "CorpseBride", "TimBurton");
        assert!((lm.prob(&bigram) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn acted_in_subject_mle() {
        let p = LmParams {
            lambda: 1.0,
            mu_s: 1.0,
            mu_o: 0.0,
            ..LmParams::default()
        };
        let lm = estimate_relationship_lm(&mini(), "ActedIn", &p).unwrap();
        assert_eq!(lm.len(), 2);
        assert!((lm.prob(&Term::SubjectUnigram("JohnnyDepp".into())) - 0.75).abs() < 1e-12);
        assert!((lm.prob(&Term::SubjectUnigram("HelenaCarter".into())) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn equal_relationship_weights_split_mass_in_thirds() {
        let lm = estimate_relationship_lm(&mini(), "ActedIn", &LmParams::default()).unwrap();
        let mut by_role: BTreeMap<&str, f64> = BTreeMap::new();
        for (t, p) in lm.iter() {
            *by_role.entry(t.role()).or_default() += p;
        }
        for mass in by_role.values() {
            assert!((mass - 1.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(by_role.len(), 3);
    }

    #[test]
    fn unknown_labels() {
        let g = mini();
        assert!(matches!(
            estimate_entity_lm(&g, "Gandalf", &LmParams::default()),
            Err(LmError::Graph(GraphError::UnknownEntity(_)))
        ));
        assert!(matches!(
            estimate_relationship_lm(&g, "MarriedTo", &LmParams::default()),
            Err(LmError::Graph(GraphError::UnknownPredicate(_)))
        ));
    }

    #[test]
    fn params_are_range_checked() {
        assert!(LmParams::default().validate().is_ok());
        assert!(params(1.5, 0.5).validate().is_err());
        let p = LmParams {
            mu_s: 0.7,
            mu_o: 0.7,
            ..LmParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn single_node_tree() {
        let g = mini();
        let tree = AnswerTree::from_edges(vec![], Some("JohnnyDepp"));
        let tlm = estimate_tree_lm(&g, &tree, &LmParams::default()).unwrap();
        let direct = estimate_entity_lm(&g, "JohnnyDepp", &LmParams::default()).unwrap();
        assert_eq!(tlm.entity, direct);
        assert!(tlm.relationship.is_empty());
    }

    #[test]
    fn two_node_tree_is_the_mean() {
        let g = mini();
        let p = LmParams::default();
        let tree = AnswerTree::from_edges(
            vec![Triple::new("CorpseBride", "DirectedBy", "TimBurton")],
            None,
        );
        let tlm = estimate_tree_lm(&g, &tree, &p).unwrap();
        let a = estimate_entity_lm(&g, "CorpseBride", &p).unwrap();
        let b = estimate_entity_lm(&g, "TimBurton", &p).unwrap();
        for (t, prob) in tlm.entity.iter() {
            assert!((prob - (a.prob(t) + b.prob(t)) / 2.0).abs() < 1e-12);
        }
        let rel = estimate_relationship_lm(&g, "DirectedBy", &p).unwrap();
        assert_eq!(tlm.relationship, rel);
    }

    #[test]
    fn explicit_delta_selects_one_entity() {
        let g = mini();
        let tree = AnswerTree::from_edges(
            vec![
                Triple::new("HelenaCarter", "ActedIn", "CorpseBride"),
                Triple::new("JohnnyDepp", "ActedIn", "CorpseBride"),
            ],
            None,
        );
        let p = LmParams {
            delta: DeltaPolicy::Explicit(BTreeMap::from([
                ("CorpseBride".into(), 1.0),
                ("HelenaCarter".into(), 0.0),
                ("JohnnyDepp".into(), 0.0),
            ])),
            ..LmParams::default()
        };
        let tlm = estimate_tree_lm(&g, &tree, &p).unwrap();
        let direct = estimate_entity_lm(&g, "CorpseBride", &p).unwrap();
        assert_eq!(tlm.entity, direct);

        let partial = LmParams {
            delta: DeltaPolicy::Explicit(BTreeMap::from([("CorpseBride".into(), 1.0)])),
            ..LmParams::default()
        };
        assert!(matches!(
            estimate_tree_lm(&g, &tree, &partial),
            Err(LmError::InvalidDelta(_))
        ));
    }

    #[test]
    fn json_dump_is_sorted_by_probability() {
        let lm = estimate_entity_lm(&mini(), "CorpseBride", &params(0.5, 1.0)).unwrap();
        let dump = serde_json::to_value(lm.to_json()).unwrap();
        assert_eq!(dump["kind"], "entity");
        assert_eq!(dump["terms"][0]["t"], "JohnnyDepp");
        assert_eq!(dump["terms"][0]["type"], "unigram");
        assert_eq!(dump["terms"][1]["t"], "English");
    }
}
