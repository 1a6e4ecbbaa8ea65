//! Knowledge-graph informed re-ranking.
//!
//! Every candidate is merged into the *original* profile subgraph on its own
//! and the chosen metric is evaluated on the result. Candidates are then
//! ordered by that value. Nothing is accumulated between candidates, so the
//! outcome does not depend on the order in which they are processed.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{CatalogGraph, EdgeIx, EntityId, GraphError, NeighborhoodMode, NodeIx, ProfileSubgraph};
use crate::netmetrics::{compute_metric_with, GraphView, MetricError, MetricKind, MetricValue, PageRankParams};

#[derive(Debug, Error)]
pub enum RerankError {
    #[error("candidate `{item}`: {source}")]
    Candidate {
        item: EntityId,
        #[source]
        source: GraphError,
    },
    #[error("metric on subgraph with candidate `{item}`: {source}")]
    Metric {
        item: EntityId,
        #[source]
        source: MetricError,
    },
    #[error("baseline metric: {0}")]
    Baseline(#[source] MetricError),
    #[error("top_n must be at least 1")]
    InvalidTopN,
    #[error("invalid recommendation list for user `{user}`: {reason}")]
    InvalidList { user: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortOrder {
    Ascending,
    Descending,
}

impl SortOrder {
    pub fn name(self) -> &'static str {
        match self {
            SortOrder::Ascending => "asc",
            SortOrder::Descending => "desc",
        }
    }

    pub fn reversed(self) -> Self {
        match self {
            SortOrder::Ascending => SortOrder::Descending,
            SortOrder::Descending => SortOrder::Ascending,
        }
    }
}

impl fmt::Display for SortOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SortOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "asc" | "ascending" => Ok(SortOrder::Ascending),
            "desc" | "descending" => Ok(SortOrder::Descending),
            other => Err(format!("unknown sort order `{other}`")),
        }
    }
}

/// Candidates for one user, ordered by descending base score.
#[derive(Debug, Clone, PartialEq)]
pub struct RecommendationList {
    user: String,
    items: Vec<(EntityId, f64)>,
}

impl RecommendationList {
    /// Checks that items are unique and scores are non-increasing.
    pub fn new(user: impl Into<String>, items: Vec<(EntityId, f64)>) -> Result<Self, RerankError> {
        let user = user.into();
        let mut seen = HashSet::with_capacity(items.len());
        for (i, (id, score)) in items.iter().enumerate() {
            if !score.is_finite() {
                return Err(RerankError::InvalidList {
                    user,
                    reason: format!("non-finite score for `{id}`"),
                });
            }
            if !seen.insert(id) {
                return Err(RerankError::InvalidList {
                    user,
                    reason: format!("duplicate item `{id}`"),
                });
            }
            if i > 0 && items[i - 1].1 < *score {
                return Err(RerankError::InvalidList {
                    user,
                    reason: format!("score of `{id}` at rank {} increases", i + 1),
                });
            }
        }
        Ok(RecommendationList { user, items })
    }

    /// Sorts by descending score, ties by item id, then validates.
    pub fn from_unsorted(
        user: impl Into<String>,
        mut items: Vec<(EntityId, f64)>,
    ) -> Result<Self, RerankError> {
        items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::new(user, items)
    }

    pub fn user(&self) -> &str {
        &self.user
    }

    pub fn items(&self) -> &[(EntityId, f64)] {
        &self.items
    }

    pub fn ids(&self) -> impl Iterator<Item = &EntityId> {
        self.items.iter().map(|(id, _)| id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn truncated(&self, n: usize) -> RecommendationList {
        RecommendationList {
            user: self.user.clone(),
            items: self.items.iter().take(n).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankConfig {
    pub metric: MetricKind,
    pub order: SortOrder,
    pub mode: NeighborhoodMode,
    pub top_n: usize,
    #[serde(default)]
    pub pagerank: PageRankParams,
}

impl RerankConfig {
    pub fn new(metric: MetricKind, order: SortOrder) -> Self {
        RerankConfig {
            metric,
            order,
            mode: NeighborhoodMode::default(),
            top_n: 100,
            pagerank: PageRankParams::default(),
        }
    }

    pub fn with_mode(mut self, mode: NeighborhoodMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_top_n(mut self, top_n: usize) -> Self {
        self.top_n = top_n;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedItem {
    pub item: EntityId,
    pub base_score: f64,
    /// Metric on the profile subgraph extended by this item.
    pub metric_value: MetricValue,
    /// `metric_value - baseline`.
    pub delta: f64,
    pub original_rank: usize,
    pub new_rank: usize,
}

/// Metric on the unextended profile subgraph.
pub fn baseline_metric(
    catalog: &CatalogGraph,
    sg: &ProfileSubgraph,
    kind: MetricKind,
) -> Result<MetricValue, MetricError> {
    compute_metric_with(&sg.view(catalog), kind, PageRankParams::default())
}

/// Baseline values memoized per `(user, metric)` for the length of a run.
#[derive(Debug, Default)]
pub struct BaselineCache {
    values: HashMap<(String, MetricKind), MetricValue>,
}

impl BaselineCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_compute(
        &mut self,
        catalog: &CatalogGraph,
        sg: &ProfileSubgraph,
        kind: MetricKind,
    ) -> Result<MetricValue, MetricError> {
        let key = (sg.user().to_owned(), kind);
        if let Some(v) = self.values.get(&key) {
            return Ok(*v);
        }
        let v = baseline_metric(catalog, sg, kind)?;
        self.values.insert(key, v);
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Precomputed metric view of a profile subgraph that yields the view of
/// `SG + candidate` without copying the subgraph's node and edge sets.
#[derive(Debug)]
pub struct ProfileOverlay<'a> {
    catalog: &'a CatalogGraph,
    sg: &'a ProfileSubgraph,
    local: HashMap<NodeIx, usize>,
    base: GraphView,
}

impl<'a> ProfileOverlay<'a> {
    pub fn new(catalog: &'a CatalogGraph, sg: &'a ProfileSubgraph) -> Self {
        let local = sg.node_ixs().iter().enumerate().map(|(i, &ix)| (ix, i)).collect();
        ProfileOverlay {
            catalog,
            sg,
            local,
            base: sg.view(catalog),
        }
    }

    pub fn base(&self) -> &GraphView {
        &self.base
    }

    /// View of the subgraph with `item` merged in according to `mode`.
    pub fn extended_view(
        &self,
        item: &EntityId,
        mode: NeighborhoodMode,
    ) -> Result<GraphView, GraphError> {
        let catalog = self.catalog;
        let item_ix = catalog.ix(item).ok_or_else(|| GraphError::UnknownEntity(item.clone()))?;
        if !catalog.is_recommendable(item) {
            return Err(GraphError::NotRecommendable(item.clone()));
        }
        let mut view = self.base.clone();
        let mut extra: HashMap<NodeIx, usize> = HashMap::new();
        let mut add_node = |view: &mut GraphView, ix: NodeIx| {
            if !self.local.contains_key(&ix) && !extra.contains_key(&ix) {
                let i = view.push_node();
                extra.insert(ix, i);
            }
        };

        let touched: Vec<NodeIx> = match mode {
            NeighborhoodMode::EdgesToExisting => {
                add_node(&mut view, item_ix);
                vec![item_ix]
            }
            NeighborhoodMode::ClosedNeighborhood => {
                let hood = catalog.closed_neighborhood_ix(item_ix);
                let mut touched = Vec::with_capacity(hood.len());
                for &n in &hood {
                    if !self.local.contains_key(&n) {
                        add_node(&mut view, n);
                        touched.push(n);
                    }
                }
                if self.local.contains_key(&item_ix) {
                    touched.push(item_ix);
                }
                touched
            }
        };

        let position = |ix: NodeIx| self.local.get(&ix).or_else(|| extra.get(&ix)).copied();
        let mut added: HashSet<EdgeIx> = HashSet::new();
        for n in touched {
            for &e in catalog.incident_edges(n) {
                if self.sg.edge_ixs().contains(&e) || added.contains(&e) {
                    continue;
                }
                let (s, t) = catalog.edge_endpoints(e);
                if let (Some(si), Some(ti)) = (position(s), position(t)) {
                    view.push_edge(si, ti);
                    added.insert(e);
                }
            }
        }
        Ok(view)
    }
}

fn order_items(items: &mut [RankedItem], order: SortOrder) {
    items.sort_by(|a, b| {
        let by_metric = a.metric_value.value.total_cmp(&b.metric_value.value);
        let by_metric = match order {
            SortOrder::Ascending => by_metric,
            SortOrder::Descending => by_metric.reverse(),
        };
        by_metric
            .then_with(|| b.base_score.total_cmp(&a.base_score))
            .then_with(|| a.item.cmp(&b.item))
    });
}

/// Re-ranks `recs` by the impact of each candidate on `cfg.metric`.
pub fn rerank(
    catalog: &CatalogGraph,
    sg: &ProfileSubgraph,
    recs: &RecommendationList,
    cfg: &RerankConfig,
) -> Result<Vec<RankedItem>, RerankError> {
    if cfg.top_n == 0 {
        return Err(RerankError::InvalidTopN);
    }
    if recs.is_empty() {
        return Ok(Vec::new());
    }
    let baseline = compute_metric_with(&sg.view(catalog), cfg.metric, cfg.pagerank)
        .map_err(RerankError::Baseline)?;
    rerank_with_baseline(catalog, sg, recs, cfg, baseline)
}

/// [`rerank`] with a baseline value that was computed beforehand.
pub fn rerank_with_baseline(
    catalog: &CatalogGraph,
    sg: &ProfileSubgraph,
    recs: &RecommendationList,
    cfg: &RerankConfig,
    baseline: MetricValue,
) -> Result<Vec<RankedItem>, RerankError> {
    if cfg.top_n == 0 {
        return Err(RerankError::InvalidTopN);
    }
    let overlay = ProfileOverlay::new(catalog, sg);
    let values: Vec<Result<MetricValue, RerankError>> = recs
        .items()
        .par_iter()
        .map(|(item, _)| {
            let view = overlay
                .extended_view(item, cfg.mode)
                .map_err(|source| RerankError::Candidate {
                    item: item.clone(),
                    source,
                })?;
            compute_metric_with(&view, cfg.metric, cfg.pagerank).map_err(|source| {
                RerankError::Metric {
                    item: item.clone(),
                    source,
                }
            })
        })
        .collect();

    let mut ranked = Vec::with_capacity(recs.len());
    for (i, ((item, score), value)) in recs.items().iter().zip(values).enumerate() {
        let metric_value = value?;
        ranked.push(RankedItem {
            item: item.clone(),
            base_score: *score,
            metric_value,
            delta: metric_value.value - baseline.value,
            original_rank: i + 1,
            new_rank: 0,
        });
    }
    order_items(&mut ranked, cfg.order);
    ranked.truncate(cfg.top_n);
    for (i, r) in ranked.iter_mut().enumerate() {
        r.new_rank = i + 1;
    }
    Ok(ranked)
}
