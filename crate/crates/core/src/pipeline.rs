//! End-to-end query pipeline: search, tree models, clustering, ranking, and
//! the JSON documents served to clients.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{isomorphism_clusters, isomorphism_distance_matrix, ted_distance_matrix};
use crate::cluster::{
    build_distance_matrix, rank_clusters, select_clustering, serialize_ch, ClusterError,
    Clustering, DistanceMatrix, Heuristic,
};
use crate::eval::{generate_judgment_pairs, EvalError, JudgmentPair, PairOrigin};
use crate::graph::{Graph, GraphError};
use crate::lm::{LmError, LmEstimator, LmParams, TreeLm};
use crate::search::{
    enumerate_answer_trees_with, AnswerSet, AnswerTree, KeywordQuery, SearchError, SearchOptions,
    DEFAULT_MAX_EDGES,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("load: {0}")]
    Load(#[from] GraphError),
    #[error("search: {0}")]
    Search(#[from] SearchError),
    #[error("language models: {0}")]
    Lm(#[from] LmError),
    #[error("clustering: {0}")]
    Cluster(#[from] ClusterError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
    #[error("config: {0}")]
    Config(String),
}

impl PipelineError {
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Load(_) => "load",
            PipelineError::Search(_) => "search",
            PipelineError::Lm(_) => "language-models",
            PipelineError::Cluster(_) => "clustering",
            PipelineError::Eval(_) => "evaluation",
            PipelineError::Config(_) => "config",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Lm,
    #[serde(rename = "isomorphism", alias = "iso")]
    Iso,
    Ted,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lm => "lm",
            Method::Iso => "isomorphism",
            Method::Ted => "ted",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lm" => Ok(Method::Lm),
            "iso" | "isomorphism" => Ok(Method::Iso),
            "ted" => Ok(Method::Ted),
            other => Err(format!("unknown method `{other}` (lm|iso|ted)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub graph_path: Option<PathBuf>,
    pub lm: LmParams,
    pub top_n: usize,
    pub max_edges: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub heuristic: Heuristic,
    pub method: Method,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            graph_path: None,
            lm: LmParams::default(),
            top_n: 25,
            max_edges: DEFAULT_MAX_EDGES,
            k_min: 2,
            k_max: 15,
            heuristic: Heuristic::Best,
            method: Method::Lm,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.lm.validate()?;
        if self.top_n == 0 {
            return Err(PipelineError::Config("top_n must be at least 1".into()));
        }
        if self.k_min > self.k_max {
            return Err(PipelineError::Config(format!(
                "k_min {} exceeds k_max {}",
                self.k_min, self.k_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterEntry {
    pub id: usize,
    /// 1-based position under the document's heuristic.
    pub rank_position: usize,
    pub representative: AnswerTree,
    /// Indices into the document's `trees`.
    pub trees: Vec<usize>,
}

/// The clustered, ranked answer to one query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterDocument {
    pub query: KeywordQuery,
    pub method: Method,
    pub heuristic: Heuristic,
    pub k: usize,
    #[serde(serialize_with = "serialize_ch")]
    pub ch: f64,
    pub clusters: Vec<ClusterEntry>,
    /// Cluster-id order under every heuristic.
    pub rankings: BTreeMap<Heuristic, Vec<usize>>,
    pub trees: Vec<AnswerTree>,
}

impl ClusterDocument {
    /// The same document with clusters reordered under another heuristic.
    pub fn with_heuristic(&self, h: Heuristic) -> ClusterDocument {
        let mut by_id: BTreeMap<usize, ClusterEntry> =
            self.clusters.iter().map(|c| (c.id, c.clone())).collect();
        let clusters = self.rankings[&h]
            .iter()
            .enumerate()
            .map(|(pos, id)| {
                let mut c = by_id.remove(id).expect("ranking covers every cluster");
                c.rank_position = pos + 1;
                c
            })
            .collect();
        ClusterDocument {
            heuristic: h,
            clusters,
            ..self.clone()
        }
    }

    /// Cluster ids in presented order.
    pub fn order(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.id).collect()
    }
}

/// A pair for blind display: tree payloads plus bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairView {
    pub pair_id: usize,
    pub origin: PairOrigin,
    pub a: usize,
    pub b: usize,
    pub clusters: (usize, usize),
    pub trees: [AnswerTree; 2],
}

/// Everything a run produces; the document is what gets serialised.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub document: ClusterDocument,
    pub clustering: Clustering,
    pub distances: DistanceMatrix,
    pub seed: u64,
}

impl PipelineOutcome {
    pub fn judgment_pairs(&self) -> Result<Vec<JudgmentPair>, PipelineError> {
        let ranks: Vec<usize> = self.document.trees.iter().map(|t| t.rank).collect();
        Ok(generate_judgment_pairs(
            &self.clustering,
            &self.distances,
            &ranks,
            self.seed,
        )?)
    }

    pub fn pair_views(&self) -> Result<Vec<PairView>, PipelineError> {
        let trees = &self.document.trees;
        Ok(self
            .judgment_pairs()?
            .into_iter()
            .enumerate()
            .map(|(pair_id, p)| PairView {
                pair_id,
                origin: p.origin,
                a: p.a,
                b: p.b,
                clusters: p.clusters,
                trees: [trees[p.a].clone(), trees[p.b].clone()],
            })
            .collect())
    }
}

/// Search, then cluster the top trees.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    g: &Graph,
    q: &KeywordQuery,
) -> Result<PipelineOutcome, PipelineError> {
    cfg.validate()?;
    let trees = enumerate_answer_trees_with(
        g,
        q,
        &SearchOptions {
            limit: cfg.top_n,
            max_edges: cfg.max_edges,
        },
    )?;
    cluster_trees(cfg, g, q.clone(), trees)
}

/// Clusters an externally produced answer list.
pub fn run_pipeline_on_answers(
    cfg: &PipelineConfig,
    g: &Graph,
    answers: AnswerSet,
) -> Result<PipelineOutcome, PipelineError> {
    cfg.validate()?;
    let answers = answers.validated(g)?;
    let trees = answers.trees.into_iter().take(cfg.top_n).collect();
    cluster_trees(cfg, g, answers.query, trees)
}

fn cluster_trees(
    cfg: &PipelineConfig,
    g: &Graph,
    query: KeywordQuery,
    trees: Vec<AnswerTree>,
) -> Result<PipelineOutcome, PipelineError> {
    let distances = match cfg.method {
        Method::Lm => {
            let estimator = LmEstimator::new(g, cfg.lm.clone())?;
            let lms = trees
                .iter()
                .map(|t| estimator.tree(t))
                .collect::<Result<Vec<TreeLm>, _>>()?;
            build_distance_matrix(&lms, cfg.lm.gamma)
        }
        Method::Iso => isomorphism_distance_matrix(&trees),
        Method::Ted => ted_distance_matrix(&trees),
    };

    let clustering = match (cfg.method, trees.len()) {
        (_, 0) => unreachable!("search never returns an empty list"),
        (_, 1) => Clustering {
            k: 1,
            assignment: vec![0],
            ch_value: f64::NAN,
        },
        (Method::Iso, _) => isomorphism_clusters(&trees),
        _ => select_clustering(&distances, cfg.k_min, cfg.k_max)?,
    };

    let ranks: Vec<usize> = trees.iter().map(|t| t.rank).collect();
    let sizes: Vec<usize> = trees.iter().map(AnswerTree::node_count).collect();
    let rankings: BTreeMap<Heuristic, _> = Heuristic::ALL
        .into_iter()
        .map(|h| (h, rank_clusters(&clustering, &ranks, &sizes, h)))
        .collect();

    let members = clustering.members();
    let active = &rankings[&cfg.heuristic];
    let clusters = active
        .order
        .iter()
        .enumerate()
        .map(|(pos, &id)| ClusterEntry {
            id,
            rank_position: pos + 1,
            representative: trees[active.representatives[id]].clone(),
            trees: members[id].clone(),
        })
        .collect();

    let document = ClusterDocument {
        query,
        method: cfg.method,
        heuristic: cfg.heuristic,
        k: clustering.k,
        ch: clustering.ch_value,
        clusters,
        rankings: rankings.into_iter().map(|(h, r)| (h, r.order)).collect(),
        trees,
    };
    Ok(PipelineOutcome {
        document,
        clustering,
        distances,
        seed: cfg.seed,
    })
}
