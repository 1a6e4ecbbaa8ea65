//! Network metrics on profile subgraphs.
//!
//! Scalar metrics (node/edge counts, density, average degree) are reported as
//! is. Distributional metrics (in/out-degree, PageRank, betweenness,
//! closeness) are collapsed to one number with the normalized
//! Herfindahl-Hirschman index over the nodes' relative scores: 0 for a
//! perfectly balanced distribution, 1 for a single node holding everything.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shares must sum to 1 within this tolerance.
pub const SHARE_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("share vector is empty")]
    EmptyShares,
    #[error("shares must be non-negative and sum to 1 (sum = {sum})")]
    NotNormalized { sum: f64 },
    #[error("{0} is undefined on an empty graph")]
    EmptyGraph(MetricKind),
    #[error("damping factor {0} outside (0, 1)")]
    InvalidDamping(f64),
    #[error("PageRank did not converge after {iterations} iterations (L1 change {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        last: CentralityDistribution,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    NodeCount,
    EdgeCount,
    Density,
    AverageDegree,
    InDegree,
    OutDegree,
    PageRank,
    Betweenness,
    Closeness,
}

impl MetricKind {
    pub const ALL: [MetricKind; 9] = [
        MetricKind::NodeCount,
        MetricKind::EdgeCount,
        MetricKind::Density,
        MetricKind::AverageDegree,
        MetricKind::InDegree,
        MetricKind::OutDegree,
        MetricKind::PageRank,
        MetricKind::Betweenness,
        MetricKind::Closeness,
    ];

    pub fn is_distributional(self) -> bool {
        !matches!(
            self,
            MetricKind::NodeCount
                | MetricKind::EdgeCount
                | MetricKind::Density
                | MetricKind::AverageDegree
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::NodeCount => "nodes",
            MetricKind::EdgeCount => "edges",
            MetricKind::Density => "density",
            MetricKind::AverageDegree => "avg_degree",
            MetricKind::InDegree => "in_degree",
            MetricKind::OutDegree => "out_degree",
            MetricKind::PageRank => "pagerank",
            MetricKind::Betweenness => "betweenness",
            MetricKind::Closeness => "closeness",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        let kind = match norm.as_str() {
            "nodes" | "node_count" => MetricKind::NodeCount,
            "edges" | "edge_count" => MetricKind::EdgeCount,
            "density" => MetricKind::Density,
            "avg_degree" | "average_degree" => MetricKind::AverageDegree,
            "in_degree" | "indegree" => MetricKind::InDegree,
            "out_degree" | "outdegree" => MetricKind::OutDegree,
            "pagerank" | "page_rank" => MetricKind::PageRank,
            "betweenness" => MetricKind::Betweenness,
            "closeness" => MetricKind::Closeness,
            _ => return Err(format!("unknown metric `{s}`")),
        };
        Ok(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub kind: MetricKind,
    pub value: f64,
}

/// Non-negative per-node scores, indexed like the nodes of the measured [`GraphView`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CentralityDistribution(pub Vec<f64>);

impl CentralityDistribution {
    pub fn scores(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Directed multigraph over nodes `0..node_count`, the input of every metric.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphView {
    node_count: usize,
    edges: Vec<(usize, usize)>,
}

impl GraphView {
    pub fn new(node_count: usize, edges: Vec<(usize, usize)>) -> Self {
        debug_assert!(edges.iter().all(|&(s, t)| s < node_count && t < node_count));
        GraphView { node_count, edges }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub(crate) fn push_node(&mut self) -> usize {
        self.node_count += 1;
        self.node_count - 1
    }

    pub(crate) fn push_edge(&mut self, s: usize, t: usize) {
        self.edges.push((s, t));
    }

    /// Simple undirected adjacency: parallel edges merged, self-loops dropped.
    pub fn undirected_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for &(s, t) in &self.edges {
            if s != t {
                adj[s].push(t);
                adj[t].push(s);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.node_count];
        for &(s, _) in &self.edges {
            d[s] += 1;
        }
        d
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.node_count];
        for &(_, t) in &self.edges {
            d[t] += 1;
        }
        d
    }

    /// Number of distinct ordered pairs `(s, t)` with `s != t` joined by an edge.
    fn distinct_arcs(&self) -> usize {
        let mut arcs: Vec<(usize, usize)> =
            self.edges.iter().copied().filter(|(s, t)| s != t).collect();
        arcs.sort_unstable();
        arcs.dedup();
        arcs.len()
    }
}

fn check_shares(shares: &[f64]) -> Result<(), MetricError> {
    if shares.is_empty() {
        return Err(MetricError::EmptyShares);
    }
    let sum: f64 = shares.iter().sum();
    if shares.iter().any(|&s| s.is_nan() || s < 0.0) || (sum - 1.0).abs() > SHARE_SUM_TOLERANCE {
        return Err(MetricError::NotNormalized { sum });
    }
    Ok(())
}

/// Herfindahl-Hirschman index: the sum of squared shares.
pub fn hhi(shares: &[f64]) -> Result<f64, MetricError> {
    check_shares(shares)?;
    Ok(shares.iter().map(|s| s * s).sum())
}

/// Normalized HHI, `(HHI - 1/N) / (1 - 1/N)`, in `[0, 1]`. A single share is
/// maximally concentrated and yields 1.
pub fn hhi_normalized(shares: &[f64]) -> Result<f64, MetricError> {
    check_shares(shares)?;
    let n = shares.len();
    if n == 1 {
        return Ok(1.0);
    }
    let uniform = 1.0 / n as f64;
    // sum s (s - 1/N) == HHI - 1/N for shares summing to one; this form is
    // exactly 0 on uniform shares and exactly 1 on one-hot shares.
    let excess: f64 = shares.iter().map(|&s| s * (s - uniform)).sum();
    Ok((excess / (1.0 - uniform)).clamp(0.0, 1.0))
}

/// Relative scores. An all-zero distribution maps to uniform shares.
pub fn centrality_to_shares(dist: &CentralityDistribution) -> Vec<f64> {
    let n = dist.len();
    let total: f64 = dist.0.iter().sum();
    if total > 0.0 {
        dist.0.iter().map(|s| s / total).collect()
    } else {
        vec![1.0 / n as f64; n]
    }
}

fn concentration(dist: &CentralityDistribution) -> Result<f64, MetricError> {
    hhi_normalized(&centrality_to_shares(dist))
}

/// Raw shortest-path betweenness on the undirected view (each unordered pair
/// of endpoints counted once).
pub fn betweenness(g: &GraphView) -> CentralityDistribution {
    let n = g.node_count();
    let adj = g.undirected_adjacency();
    let mut scores = vec![0.0; n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0f64; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut stack = Vec::with_capacity(n);
    let mut queue = VecDeque::with_capacity(n);

    for s in 0..n {
        for v in 0..n {
            sigma[v] = 0.0;
            dist[v] = usize::MAX;
            delta[v] = 0.0;
            preds[v].clear();
        }
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                scores[w] += delta[w];
            }
        }
    }
    // every unordered pair was accumulated from both endpoints
    for x in &mut scores {
        *x /= 2.0;
    }
    CentralityDistribution(scores)
}

/// Harmonic closeness on the undirected view: `sum over u != v of 1 / d(v, u)`,
/// unreachable nodes contributing 0.
pub fn closeness(g: &GraphView) -> CentralityDistribution {
    let n = g.node_count();
    let adj = g.undirected_adjacency();
    let mut scores = vec![0.0; n];
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::with_capacity(n);
    for (s, score) in scores.iter_mut().enumerate() {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    *score += 1.0 / dist[w] as f64;
                    queue.push_back(w);
                }
            }
        }
    }
    CentralityDistribution(scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageRankParams {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankParams {
    fn default() -> Self {
        PageRankParams {
            damping: 0.85,
            tol: 1e-9,
            max_iter: 200,
        }
    }
}

/// PageRank by power iteration on the directed multigraph.
///
/// Parallel edges add weight to the transition. Dangling mass is spread
/// uniformly; convergence is declared when the L1 change drops below `tol`.
pub fn pagerank(
    g: &GraphView,
    params: PageRankParams,
) -> Result<CentralityDistribution, MetricError> {
    let n = g.node_count();
    if n == 0 {
        return Err(MetricError::EmptyGraph(MetricKind::PageRank));
    }
    if !(params.damping > 0.0 && params.damping < 1.0) {
        return Err(MetricError::InvalidDamping(params.damping));
    }
    let out_deg = g.out_degrees();
    let nf = n as f64;
    let d = params.damping;
    let mut rank = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..params.max_iter {
        let dangling: f64 = (0..n).filter(|&v| out_deg[v] == 0).map(|v| rank[v]).sum();
        let base = (1.0 - d) / nf + d * dangling / nf;
        next.iter_mut().for_each(|x| *x = base);
        for &(s, t) in g.edges() {
            next[t] += d * rank[s] / out_deg[s] as f64;
        }
        // renormalize to keep the sum at 1 despite rounding drift
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        residual = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if residual < params.tol {
            return Ok(CentralityDistribution(rank));
        }
    }
    Err(MetricError::NotConverged {
        iterations: params.max_iter,
        residual,
        last: CentralityDistribution(rank),
    })
}

/// Evaluates `kind` on `g` with default PageRank parameters.
pub fn compute_metric(g: &GraphView, kind: MetricKind) -> Result<MetricValue, MetricError> {
    compute_metric_with(g, kind, PageRankParams::default())
}

pub fn compute_metric_with(
    g: &GraphView,
    kind: MetricKind,
    pagerank_params: PageRankParams,
) -> Result<MetricValue, MetricError> {
    let n = g.node_count();
    if kind.is_distributional() && n == 0 {
        return Err(MetricError::EmptyGraph(kind));
    }
    let degree_dist =
        |d: Vec<usize>| CentralityDistribution(d.into_iter().map(|x| x as f64).collect());
    let value = match kind {
        MetricKind::NodeCount => n as f64,
        MetricKind::EdgeCount => g.edge_count() as f64,
        MetricKind::Density => {
            if n <= 1 {
                0.0
            } else {
                g.distinct_arcs() as f64 / (n * (n - 1)) as f64
            }
        }
        MetricKind::AverageDegree => {
            if n == 0 {
                0.0
            } else {
                g.edge_count() as f64 / n as f64
            }
        }
        MetricKind::InDegree => concentration(&degree_dist(g.in_degrees()))?,
        MetricKind::OutDegree => concentration(&degree_dist(g.out_degrees()))?,
        MetricKind::PageRank => concentration(&pagerank(g, pagerank_params)?)?,
        MetricKind::Betweenness => concentration(&betweenness(g))?,
        MetricKind::Closeness => concentration(&closeness(g))?,
    };
    Ok(MetricValue { kind, value })
}
