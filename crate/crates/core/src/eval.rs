//! Judgment-pair sampling and NDCG scoring of cluster rankings.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{Clustering, DistanceMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("cannot score an empty ranking")]
    EmptyRanking,
    #[error("no relevance grade for cluster {0}")]
    MissingGrade(usize),
    #[error("grade {grade} for cluster {cluster} is outside 1..=5")]
    GradeOutOfRange { cluster: usize, grade: u8 },
    #[error("clustering covers {got} trees, matrix has {expected}")]
    SizeMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PairOrigin {
    WithinMax,
    WithinMin,
    CrossRepresentative,
}

/// Two trees to be shown side by side for a similarity grade.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentPair {
    pub a: usize,
    pub b: usize,
    pub origin: PairOrigin,
    /// Cluster of `a` and of `b`.
    pub clusters: (usize, usize),
}

/// Per cluster: its farthest and closest member pairs (one pair when they
/// coincide). Per unordered cluster pair: the two representatives, i.e. the
/// members with the best search rank. Ties pick the lexicographically
/// smallest index pair. The result is shuffled with `seed`.
pub fn generate_judgment_pairs(
    c: &Clustering,
    m: &DistanceMatrix,
    tree_ranks: &[usize],
    seed: u64,
) -> Result<Vec<JudgmentPair>, EvalError> {
    if c.len() != m.len() || tree_ranks.len() != m.len() {
        return Err(EvalError::SizeMismatch {
            expected: m.len(),
            got: c.len().min(tree_ranks.len()),
        });
    }
    let members = c.members();
    let mut pairs = Vec::new();

    for (cid, ms) in members.iter().enumerate() {
        let mut farthest: Option<(f64, usize, usize)> = None;
        let mut closest: Option<(f64, usize, usize)> = None;
        for (x, &i) in ms.iter().enumerate() {
            for &j in &ms[x + 1..] {
                let d = m.get(i, j);
                if farthest.is_none_or(|(best, ..)| d > best) {
                    farthest = Some((d, i, j));
                }
                if closest.is_none_or(|(best, ..)| d < best) {
                    closest = Some((d, i, j));
                }
            }
        }
        if let (Some((_, fa, fb)), Some((_, ca, cb))) = (farthest, closest) {
            pairs.push(JudgmentPair {
                a: fa,
                b: fb,
                origin: PairOrigin::WithinMax,
                clusters: (cid, cid),
            });
            if (ca, cb) != (fa, fb) {
                pairs.push(JudgmentPair {
                    a: ca,
                    b: cb,
                    origin: PairOrigin::WithinMin,
                    clusters: (cid, cid),
                });
            }
        }
    }

    let reps: Vec<usize> = members
        .iter()
        .map(|ms| {
            *ms.iter()
                .min_by_key(|&&i| tree_ranks[i])
                .expect("non-empty cluster")
        })
        .collect();
    for x in 0..reps.len() {
        for y in x + 1..reps.len() {
            pairs.push(JudgmentPair {
                a: reps[x],
                b: reps[y],
                origin: PairOrigin::CrossRepresentative,
                clusters: (x, y),
            });
        }
    }

    pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(pairs)
}

/// Relevance grades on the 1 (very uninteresting) to 5 (highly interesting)
/// scale, keyed by cluster id.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<usize, u8>", into = "BTreeMap<usize, u8>")]
pub struct RelevanceVector(BTreeMap<usize, u8>);

impl RelevanceVector {
    pub fn new(grades: BTreeMap<usize, u8>) -> Result<Self, EvalError> {
        if let Some((&cluster, &grade)) = grades.iter().find(|(_, g)| !(1..=5).contains(*g)) {
            return Err(EvalError::GradeOutOfRange { cluster, grade });
        }
        Ok(RelevanceVector(grades))
    }

    pub fn get(&self, cluster: usize) -> Option<u8> {
        self.0.get(&cluster).copied()
    }
}

impl TryFrom<BTreeMap<usize, u8>> for RelevanceVector {
    type Error = EvalError;

    fn try_from(value: BTreeMap<usize, u8>) -> Result<Self, Self::Error> {
        RelevanceVector::new(value)
    }
}

impl From<RelevanceVector> for BTreeMap<usize, u8> {
    fn from(v: RelevanceVector) -> Self {
        v.0
    }
}

/// The grades file: one query, one method, per-cluster grades.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradesFile {
    pub query: String,
    pub method: String,
    pub grades: RelevanceVector,
}

fn dcg(gains: impl IntoIterator<Item = f64>) -> f64 {
    gains
        .into_iter()
        .enumerate()
        .map(|(i, g)| g / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG with linear gain and `1 / log2(position + 1)` discount over the
/// full ranking.
pub fn ndcg(order: &[usize], rel: &RelevanceVector) -> Result<f64, EvalError> {
    if order.is_empty() {
        return Err(EvalError::EmptyRanking);
    }
    let gains = order
        .iter()
        .map(|&c| rel.get(c).map(f64::from).ok_or(EvalError::MissingGrade(c)))
        .collect::<Result<Vec<f64>, _>>()?;
    let mut ideal = gains.clone();
    ideal.sort_by(|a, b| b.total_cmp(a));
    Ok(dcg(gains) / dcg(ideal))
}
