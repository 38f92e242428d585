//! Argument parsing and the command implementations behind `klustree`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use klustree_core::cluster::Heuristic;
use klustree_core::eval::{ndcg, GradesFile};
use klustree_core::graph::Graph;
use klustree_core::pipeline::{run_pipeline, run_pipeline_on_answers, Method, PipelineConfig};
use klustree_core::search::{
    enumerate_answer_trees_with, AnswerSet, KeywordQuery, SearchOptions, DEFAULT_MAX_EDGES,
};
use serde::{Deserialize, Serialize};

use crate::server::{self, AppState};

#[derive(Debug, Parser)]
#[command(
    name = "klustree",
    version,
    about = "Keyword search over triple graphs with clustered, ranked answers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a graph and report its size.
    Index { graph: PathBuf },
    /// Print the minimal answer trees for a keyword query.
    Search {
        graph: PathBuf,
        /// Comma-separated keywords.
        #[arg(long = "q")]
        query: String,
        #[arg(long, default_value_t = 25)]
        limit: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_EDGES)]
        max_edges: usize,
    },
    /// Cluster and rank the answer trees for a query.
    Cluster(ClusterArgs),
    /// Score a clustering document against relevance grades.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Pipeline configuration JSON; request fields override it.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    pub graph: PathBuf,
    /// Comma-separated keywords. Required unless `--answers` is given.
    #[arg(long = "q")]
    pub query: Option<String>,
    /// Cluster a previously exported answer list instead of searching.
    #[arg(long)]
    pub answers: Option<PathBuf>,
    /// Pipeline configuration JSON; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub heuristic: Option<Heuristic>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub top_n: Option<usize>,
    /// Also write the judgment pairs to this file.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// NDCG of each cluster ranking in a clustering document.
    Ndcg {
        #[arg(long)]
        grades: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
    },
}

#[derive(Debug, Serialize)]
struct IndexReport {
    triples: usize,
    nodes: usize,
    predicates: usize,
}

/// The parts of a clustering document that scoring needs.
#[derive(Debug, Deserialize)]
struct RankedDocument {
    method: Method,
    heuristic: Heuristic,
    rankings: BTreeMap<Heuristic, Vec<usize>>,
}

#[derive(Debug, Serialize)]
struct NdcgReport {
    query: String,
    method: Method,
    heuristic: Heuristic,
    ndcg: f64,
    by_heuristic: BTreeMap<Heuristic, f64>,
}

fn load_graph(path: &Path) -> Result<Graph> {
    Graph::load_path(path).with_context(|| format!("loading {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(out: &mut impl Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Builds the pipeline configuration for `cluster`: file, then flags.
pub fn cluster_config(args: &ClusterArgs) -> Result<PipelineConfig> {
    let mut cfg: PipelineConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => PipelineConfig::default(),
    };
    cfg.graph_path = Some(args.graph.clone());
    if let Some(m) = args.method {
        cfg.method = m;
    }
    if let Some(h) = args.heuristic {
        cfg.heuristic = h;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.top_n {
        cfg.top_n = n;
    }
    Ok(cfg)
}

pub fn run(cli: Cli, out: &mut impl Write) -> Result<()> {
    match cli.command {
        Command::Index { graph } => {
            let g = load_graph(&graph)?;
            write_json(
                out,
                &IndexReport {
                    triples: g.triples().len(),
                    nodes: g.node_count(),
                    predicates: g.predicates().count(),
                },
            )
        }
        Command::Search {
            graph,
            query,
            limit,
            max_edges,
        } => {
            let g = load_graph(&graph)?;
            let query = KeywordQuery::parse_list(&query)?;
            let trees =
                enumerate_answer_trees_with(&g, &query, &SearchOptions { limit, max_edges })?;
            write_json(out, &AnswerSet { query, trees })
        }
        Command::Cluster(args) => {
            let cfg = cluster_config(&args)?;
            let g = load_graph(&args.graph)?;
            let outcome = match (&args.answers, &args.query) {
                (Some(path), _) => run_pipeline_on_answers(&cfg, &g, read_json(path)?)?,
                (None, Some(q)) => run_pipeline(&cfg, &g, &KeywordQuery::parse_list(q)?)?,
                (None, None) => bail!("either --q or --answers is required"),
            };
            if let Some(path) = &args.pairs {
                let text = serde_json::to_string_pretty(&outcome.pair_views()?)?;
                std::fs::write(path, text + "\n")
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            write_json(out, &outcome.document)
        }
        Command::Eval(EvalCommand::Ndcg { grades, clusters }) => {
            let grades: GradesFile = read_json(&grades)?;
            let doc: RankedDocument = read_json(&clusters)?;
            let graded: Method = grades
                .method
                .parse()
                .map_err(|e| anyhow::anyhow!("grades file: {e}"))?;
            if graded != doc.method {
                bail!(
                    "grades are for method {graded} but the clusters come from {}",
                    doc.method
                );
            }
            let by_heuristic = doc
                .rankings
                .iter()
                .map(|(h, order)| Ok((*h, ndcg(order, &grades.grades)?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            let Some(&score) = by_heuristic.get(&doc.heuristic) else {
                bail!("clusters file has no ranking for {}", doc.heuristic);
            };
            write_json(
                out,
                &NdcgReport {
                    query: grades.query,
                    method: doc.method,
                    heuristic: doc.heuristic,
                    ndcg: score,
                    by_heuristic,
                },
            )
        }
        Command::Serve {
            graph,
            port,
            host,
            config,
        } => {
            let mut cfg: PipelineConfig = match &config {
                Some(p) => read_json(p)?,
                None => PipelineConfig::default(),
            };
            cfg.validate()?;
            cfg.graph_path = Some(graph.clone());
            let g = Arc::new(load_graph(&graph)?);
            let state = Arc::new(AppState::new(g, cfg));
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                    .await
                    .with_context(|| format!("binding {host}:{port}"))?;
                writeln!(out, "listening on http://{}", listener.local_addr()?)?;
                out.flush()?;
                server::serve(listener, state).await?;
                Ok(())
            })
        }
    }
}
