//! Typed directed multigraph for item catalogs and user profile subgraphs.
//!
//! A [`CatalogGraph`] is built once from annotated triples and is immutable
//! afterwards. Profile subgraphs reference catalog nodes and edges by index, so
//! every [`ProfileSubgraph`] is a subgraph of the catalog it was induced from
//! by construction.
//!
//! Edges are stored directed (subject to object). Algorithms that need an
//! undirected view derive it on demand from [`GraphView`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmetrics::GraphView;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("record {record}: malformed triple: {reason}")]
    MalformedTriple { record: usize, reason: String },
    #[error("entity `{id}` declared with kind {first} and {second}")]
    KindConflict {
        id: EntityId,
        first: EntityKind,
        second: EntityKind,
    },
    #[error("unknown entity `{0}`")]
    UnknownEntity(EntityId),
    #[error("entity `{0}` is not a recommendable item")]
    NotRecommendable(EntityId),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Identifier of a node, unique within a graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Self {
        EntityId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EntityId {
    fn from(s: &str) -> Self {
        EntityId(s.to_owned())
    }
}

impl From<String> for EntityId {
    fn from(s: String) -> Self {
        EntityId(s)
    }
}

impl AsRef<str> for EntityId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityKind {
    Track,
    Artist,
    Genre,
    Movie,
    TvShow,
    Person,
    Country,
    Rating,
    Other(String),
}

impl EntityKind {
    /// Kinds that may appear in recommendation lists.
    pub fn is_recommendable(&self) -> bool {
        matches!(self, EntityKind::Track | EntityKind::Movie | EntityKind::TvShow)
    }

    /// `Class` and `Property` nodes describing the schema rather than the data.
    pub fn is_schema(&self) -> bool {
        matches!(self, EntityKind::Other(l) if l == "Class" || l == "Property")
    }

    pub fn is_label(&self) -> bool {
        matches!(self, EntityKind::Other(l) if l == "Label")
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EntityKind::Track => "Track",
            EntityKind::Artist => "Artist",
            EntityKind::Genre => "Genre",
            EntityKind::Movie => "Movie",
            EntityKind::TvShow => "TvShow",
            EntityKind::Person => "Person",
            EntityKind::Country => "Country",
            EntityKind::Rating => "Rating",
            EntityKind::Other(l) => l,
        };
        f.write_str(s)
    }
}

impl FromStr for EntityKind {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "Track" => EntityKind::Track,
            "Artist" => EntityKind::Artist,
            "Genre" => EntityKind::Genre,
            "Movie" => EntityKind::Movie,
            "TvShow" => EntityKind::TvShow,
            "Person" => EntityKind::Person,
            "Country" => EntityKind::Country,
            "Rating" => EntityKind::Rating,
            other => EntityKind::Other(other.to_owned()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub source: EntityId,
    pub target: EntityId,
    pub predicate: String,
}

/// A `(source, predicate, target)` statement with kinds for both endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Triple {
    pub source: EntityId,
    pub source_kind: EntityKind,
    pub predicate: String,
    pub target: EntityId,
    pub target_kind: EntityKind,
}

impl Triple {
    pub fn new(
        source: impl Into<EntityId>,
        source_kind: EntityKind,
        predicate: impl Into<String>,
        target: impl Into<EntityId>,
        target_kind: EntityKind,
    ) -> Self {
        Triple {
            source: source.into(),
            source_kind,
            predicate: predicate.into(),
            target: target.into(),
            target_kind,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: EntityId,
    pub kind: EntityKind,
    /// Ingestion metadata (title, names). Never read by graph algorithms.
    pub attrs: BTreeMap<String, String>,
}

impl Node {
    pub fn label(&self) -> &str {
        self.attrs
            .get("title")
            .or_else(|| self.attrs.get("name"))
            .map(String::as_str)
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeIx(u32);

impl NodeIx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeIx(u32);

impl EdgeIx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone)]
struct RawEdge {
    source: NodeIx,
    target: NodeIx,
    predicate: String,
}

/// How a candidate item is merged into a profile subgraph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborhoodMode {
    /// Add the item plus only its edges to nodes already in the subgraph.
    EdgesToExisting,
    /// Add the item's whole closed neighborhood in the catalog.
    #[default]
    ClosedNeighborhood,
}

impl FromStr for NeighborhoodMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "closed" | "closed_neighborhood" | "closed-neighborhood" => {
                Ok(NeighborhoodMode::ClosedNeighborhood)
            }
            "edges" | "edges_to_existing" | "edges-to-existing" => {
                Ok(NeighborhoodMode::EdgesToExisting)
            }
            other => Err(format!("unknown neighborhood mode `{other}`")),
        }
    }
}

impl fmt::Display for NeighborhoodMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NeighborhoodMode::EdgesToExisting => f.write_str("edges"),
            NeighborhoodMode::ClosedNeighborhood => f.write_str("closed"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CatalogGraph {
    nodes: Vec<Node>,
    index: HashMap<EntityId, NodeIx>,
    edges: Vec<RawEdge>,
    incident: Vec<Vec<EdgeIx>>,
    recommendable: BTreeSet<NodeIx>,
}

/// Incremental construction of a [`CatalogGraph`].
#[derive(Debug, Default)]
pub struct CatalogBuilder {
    nodes: Vec<Node>,
    index: HashMap<EntityId, NodeIx>,
    edges: Vec<RawEdge>,
    seen_edges: std::collections::HashSet<(NodeIx, NodeIx, String)>,
    records: usize,
}

impl CatalogBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a node, or checks the kind of an existing one.
    pub fn add_node(&mut self, id: EntityId, kind: EntityKind) -> Result<NodeIx, GraphError> {
        if let Some(&ix) = self.index.get(&id) {
            let existing = &self.nodes[ix.index()].kind;
            if *existing != kind {
                return Err(GraphError::KindConflict {
                    id,
                    first: existing.clone(),
                    second: kind,
                });
            }
            return Ok(ix);
        }
        let ix = NodeIx(self.nodes.len() as u32);
        self.index.insert(id.clone(), ix);
        self.nodes.push(Node {
            id,
            kind,
            attrs: BTreeMap::new(),
        });
        Ok(ix)
    }

    pub fn set_attr(
        &mut self,
        id: &EntityId,
        key: impl Into<String>,
        value: impl Into<String>,
    ) -> Result<(), GraphError> {
        let ix = *self
            .index
            .get(id)
            .ok_or_else(|| GraphError::UnknownEntity(id.clone()))?;
        self.nodes[ix.index()].attrs.insert(key.into(), value.into());
        Ok(())
    }

    /// Inserts an edge between two existing nodes. Returns false for duplicates.
    pub fn add_edge(
        &mut self,
        source: &EntityId,
        predicate: &str,
        target: &EntityId,
    ) -> Result<bool, GraphError> {
        let s = *self
            .index
            .get(source)
            .ok_or_else(|| GraphError::UnknownEntity(source.clone()))?;
        let t = *self
            .index
            .get(target)
            .ok_or_else(|| GraphError::UnknownEntity(target.clone()))?;
        if !self.seen_edges.insert((s, t, predicate.to_owned())) {
            return Ok(false);
        }
        self.edges.push(RawEdge {
            source: s,
            target: t,
            predicate: predicate.to_owned(),
        });
        Ok(true)
    }

    pub fn add_triple(&mut self, triple: Triple) -> Result<(), GraphError> {
        self.records += 1;
        let record = self.records;
        if triple.source.as_str().is_empty() {
            return Err(GraphError::MalformedTriple {
                record,
                reason: "missing source".into(),
            });
        }
        if triple.target.as_str().is_empty() {
            return Err(GraphError::MalformedTriple {
                record,
                reason: "missing target".into(),
            });
        }
        if triple.predicate.is_empty() {
            return Err(GraphError::MalformedTriple {
                record,
                reason: "missing predicate".into(),
            });
        }
        self.add_node(triple.source.clone(), triple.source_kind)?;
        self.add_node(triple.target.clone(), triple.target_kind)?;
        self.add_edge(&triple.source, &triple.predicate, &triple.target)?;
        Ok(())
    }

    pub fn build(self) -> CatalogGraph {
        let mut incident = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            let ix = EdgeIx(i as u32);
            incident[e.source.index()].push(ix);
            if e.target != e.source {
                incident[e.target.index()].push(ix);
            }
        }
        let recommendable = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind.is_recommendable())
            .map(|(i, _)| NodeIx(i as u32))
            .collect();
        CatalogGraph {
            nodes: self.nodes,
            index: self.index,
            edges: self.edges,
            incident,
            recommendable,
        }
    }
}

/// Builds a catalog from a stream of annotated triples.
///
/// Nodes are deduplicated by id and identical `(source, predicate, target)`
/// statements collapse into one edge.
pub fn build_catalog<I>(triples: I) -> Result<CatalogGraph, GraphError>
where
    I: IntoIterator<Item = Triple>,
{
    let mut builder = CatalogBuilder::new();
    for t in triples {
        builder.add_triple(t)?;
    }
    Ok(builder.build())
}

impl CatalogGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn ix(&self, id: &EntityId) -> Option<NodeIx> {
        self.index.get(id).copied()
    }

    fn require(&self, id: &EntityId) -> Result<NodeIx, GraphError> {
        self.ix(id).ok_or_else(|| GraphError::UnknownEntity(id.clone()))
    }

    fn require_recommendable(&self, id: &EntityId) -> Result<NodeIx, GraphError> {
        let ix = self.require(id)?;
        if !self.recommendable.contains(&ix) {
            return Err(GraphError::NotRecommendable(id.clone()));
        }
        Ok(ix)
    }

    pub fn contains(&self, id: &EntityId) -> bool {
        self.index.contains_key(id)
    }

    pub fn node(&self, ix: NodeIx) -> &Node {
        &self.nodes[ix.index()]
    }

    pub fn node_by_id(&self, id: &EntityId) -> Option<&Node> {
        self.ix(id).map(|ix| self.node(ix))
    }

    pub fn id(&self, ix: NodeIx) -> &EntityId {
        &self.nodes[ix.index()].id
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter()
    }

    pub fn edge(&self, ix: EdgeIx) -> Edge {
        let e = &self.edges[ix.index()];
        Edge {
            source: self.id(e.source).clone(),
            target: self.id(e.target).clone(),
            predicate: e.predicate.clone(),
        }
    }

    pub(crate) fn edge_endpoints(&self, ix: EdgeIx) -> (NodeIx, NodeIx) {
        let e = &self.edges[ix.index()];
        (e.source, e.target)
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        (0..self.edges.len()).map(|i| self.edge(EdgeIx(i as u32)))
    }

    /// Edges with `ix` as source or target. Self-loops appear once.
    pub fn incident_edges(&self, ix: NodeIx) -> &[EdgeIx] {
        &self.incident[ix.index()]
    }

    /// Distinct adjacent nodes in either direction, excluding `ix` itself.
    pub fn neighbors(&self, ix: NodeIx) -> BTreeSet<NodeIx> {
        self.incident[ix.index()]
            .iter()
            .map(|&e| {
                let (s, t) = self.edge_endpoints(e);
                if s == ix {
                    t
                } else {
                    s
                }
            })
            .filter(|&n| n != ix)
            .collect()
    }

    pub fn is_recommendable(&self, id: &EntityId) -> bool {
        self.ix(id).is_some_and(|ix| self.recommendable.contains(&ix))
    }

    pub fn recommendable(&self) -> impl Iterator<Item = &EntityId> {
        self.recommendable.iter().map(|&ix| self.id(ix))
    }

    pub fn recommendable_count(&self) -> usize {
        self.recommendable.len()
    }

    /// Closed neighborhood of `item`: the item, its adjacent nodes and its
    /// incident edges.
    pub fn closed_neighborhood(
        &self,
        item: &EntityId,
    ) -> Result<(BTreeSet<EntityId>, BTreeSet<Edge>), GraphError> {
        let ix = self.require(item)?;
        let mut nodes: BTreeSet<EntityId> =
            self.neighbors(ix).into_iter().map(|n| self.id(n).clone()).collect();
        nodes.insert(item.clone());
        let edges = self.incident[ix.index()].iter().map(|&e| self.edge(e)).collect();
        Ok((nodes, edges))
    }

    pub(crate) fn closed_neighborhood_ix(&self, ix: NodeIx) -> BTreeSet<NodeIx> {
        let mut n = self.neighbors(ix);
        n.insert(ix);
        n
    }

    /// Graph view over the whole catalog, nodes in insertion order.
    pub fn view(&self) -> GraphView {
        GraphView::new(
            self.nodes.len(),
            self.edges
                .iter()
                .map(|e| (e.source.index(), e.target.index()))
                .collect(),
        )
    }

    /// Total degree (in + out) counting every incident edge; a self-loop counts twice.
    pub fn degree(&self, ix: NodeIx) -> usize {
        self.incident[ix.index()]
            .iter()
            .map(|&e| {
                let (s, t) = self.edge_endpoints(e);
                if s == t {
                    2
                } else {
                    1
                }
            })
            .sum()
    }

    /// Copy keeping only the nodes selected by `keep` and edges between them.
    fn retain(&self, keep: impl Fn(NodeIx) -> bool) -> CatalogGraph {
        let mut b = CatalogBuilder::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if keep(NodeIx(i as u32)) {
                b.add_node(n.id.clone(), n.kind.clone())
                    .expect("ids are unique in the source graph");
                for (k, v) in &n.attrs {
                    b.set_attr(&n.id, k.clone(), v.clone()).expect("node exists");
                }
            }
        }
        for e in &self.edges {
            if keep(e.source) && keep(e.target) {
                b.add_edge(self.id(e.source), &e.predicate, self.id(e.target))
                    .expect("endpoints kept");
            }
        }
        b.build()
    }
}

/// Pruning rules applied by [`prune_graph`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneRules {
    /// Remove `Label` entities.
    #[serde(default)]
    pub drop_labels: bool,
    /// Remove nodes of total degree 1 (one pass, not iterated).
    #[serde(default)]
    pub drop_degree_one: bool,
    /// Remove `Class` and `Property` schema nodes.
    #[serde(default)]
    pub drop_schema: bool,
}

/// Returns a pruned copy of `g`.
///
/// Label and schema nodes go first; degree-1 removal is then evaluated once on
/// the remaining graph.
pub fn prune_graph(g: &CatalogGraph, rules: PruneRules) -> CatalogGraph {
    let stage1 = g.retain(|ix| {
        let kind = &g.node(ix).kind;
        !(rules.drop_labels && kind.is_label() || rules.drop_schema && kind.is_schema())
    });
    if !rules.drop_degree_one {
        return stage1;
    }
    stage1.retain(|ix| stage1.degree(ix) != 1)
}

/// A user's history items plus their enriching entities, as a subgraph of the catalog.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProfileSubgraph {
    user: String,
    nodes: BTreeSet<NodeIx>,
    edges: BTreeSet<EdgeIx>,
    history: BTreeSet<NodeIx>,
}

impl ProfileSubgraph {
    pub fn empty(user: impl Into<String>) -> Self {
        ProfileSubgraph {
            user: user.into(),
            nodes: BTreeSet::new(),
            edges: BTreeSet::new(),
            history: BTreeSet::new(),
        }
    }

    pub fn user(&self) -> &str {
        &self.user
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_ixs(&self) -> &BTreeSet<NodeIx> {
        &self.nodes
    }

    pub fn edge_ixs(&self) -> &BTreeSet<EdgeIx> {
        &self.edges
    }

    pub fn contains_ix(&self, ix: NodeIx) -> bool {
        self.nodes.contains(&ix)
    }

    pub fn contains(&self, catalog: &CatalogGraph, id: &EntityId) -> bool {
        catalog.ix(id).is_some_and(|ix| self.nodes.contains(&ix))
    }

    pub fn node_ids<'c>(&self, catalog: &'c CatalogGraph) -> BTreeSet<&'c EntityId> {
        self.nodes.iter().map(|&ix| catalog.id(ix)).collect()
    }

    pub fn history_ids<'c>(&self, catalog: &'c CatalogGraph) -> BTreeSet<&'c EntityId> {
        self.history.iter().map(|&ix| catalog.id(ix)).collect()
    }

    pub fn edges(&self, catalog: &CatalogGraph) -> BTreeSet<Edge> {
        self.edges.iter().map(|&e| catalog.edge(e)).collect()
    }

    /// Metric view with nodes numbered in ascending catalog index order.
    pub fn view(&self, catalog: &CatalogGraph) -> GraphView {
        let local: HashMap<NodeIx, usize> =
            self.nodes.iter().enumerate().map(|(i, &ix)| (ix, i)).collect();
        let edges = self
            .edges
            .iter()
            .map(|&e| {
                let (s, t) = catalog.edge_endpoints(e);
                (local[&s], local[&t])
            })
            .collect();
        GraphView::new(self.nodes.len(), edges)
    }

    /// Materializes the subgraph as a standalone graph, e.g. for export.
    pub fn to_catalog(&self, catalog: &CatalogGraph) -> CatalogGraph {
        let mut b = CatalogBuilder::new();
        for &ix in &self.nodes {
            let n = catalog.node(ix);
            b.add_node(n.id.clone(), n.kind.clone()).expect("unique ids");
            for (k, v) in &n.attrs {
                b.set_attr(&n.id, k.clone(), v.clone()).expect("node exists");
            }
        }
        for &e in &self.edges {
            let edge = catalog.edge(e);
            b.add_edge(&edge.source, &edge.predicate, &edge.target)
                .expect("endpoints are subgraph nodes");
        }
        b.build()
    }
}

/// Induces the profile subgraph of `history`: the history items, every node
/// adjacent to one of them, and every catalog edge between included nodes.
pub fn induce_profile_subgraph<'a, I>(
    catalog: &CatalogGraph,
    user: impl Into<String>,
    history: I,
) -> Result<ProfileSubgraph, GraphError>
where
    I: IntoIterator<Item = &'a EntityId>,
{
    induce_profile_subgraph_with_depth(catalog, user, history, 1)
}

/// Like [`induce_profile_subgraph`] but follows `hops` levels of enrichment.
pub fn induce_profile_subgraph_with_depth<'a, I>(
    catalog: &CatalogGraph,
    user: impl Into<String>,
    history: I,
    hops: usize,
) -> Result<ProfileSubgraph, GraphError>
where
    I: IntoIterator<Item = &'a EntityId>,
{
    let mut hist = BTreeSet::new();
    for id in history {
        hist.insert(catalog.require_recommendable(id)?);
    }
    let mut nodes = hist.clone();
    let mut frontier: Vec<NodeIx> = hist.iter().copied().collect();
    for _ in 0..hops {
        let mut next = Vec::new();
        for ix in frontier {
            for n in catalog.neighbors(ix) {
                if nodes.insert(n) {
                    next.push(n);
                }
            }
        }
        frontier = next;
    }
    let mut edges = BTreeSet::new();
    for &ix in &nodes {
        for &e in catalog.incident_edges(ix) {
            let (s, t) = catalog.edge_endpoints(e);
            if nodes.contains(&s) && nodes.contains(&t) {
                edges.insert(e);
            }
        }
    }
    Ok(ProfileSubgraph {
        user: user.into(),
        nodes,
        edges,
        history: hist,
    })
}

/// Returns a new subgraph with `item` merged into `sg` according to `mode`.
///
/// `EdgesToExisting` adds the item node and the catalog edges between it and
/// nodes already in `sg`. `ClosedNeighborhood` adds the item's closed
/// neighborhood together with every catalog edge that touches the item or a
/// newly added node and whose endpoints both lie in the result.
pub fn extend_subgraph(
    sg: &ProfileSubgraph,
    catalog: &CatalogGraph,
    item: &EntityId,
    mode: NeighborhoodMode,
) -> Result<ProfileSubgraph, GraphError> {
    let item_ix = catalog.require_recommendable(item)?;
    let mut out = sg.clone();
    match mode {
        NeighborhoodMode::EdgesToExisting => {
            out.nodes.insert(item_ix);
            for &e in catalog.incident_edges(item_ix) {
                let (s, t) = catalog.edge_endpoints(e);
                if out.nodes.contains(&s) && out.nodes.contains(&t) {
                    out.edges.insert(e);
                }
            }
        }
        NeighborhoodMode::ClosedNeighborhood => {
            let hood = catalog.closed_neighborhood_ix(item_ix);
            let fresh: BTreeSet<NodeIx> =
                hood.iter().filter(|n| !sg.nodes.contains(n)).copied().collect();
            out.nodes.extend(hood.iter().copied());
            let mut touched = fresh;
            touched.insert(item_ix);
            for &n in &touched {
                for &e in catalog.incident_edges(n) {
                    let (s, t) = catalog.edge_endpoints(e);
                    if out.nodes.contains(&s) && out.nodes.contains(&t) {
                        out.edges.insert(e);
                    }
                }
            }
        }
    }
    Ok(out)
}

fn sanitize(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

/// Writes the node manifest (`id\tkind\tlabel`) and edge list
/// (`source\tpredicate\ttarget`), both sorted for stable diffs.
pub fn write_export<N: Write, E: Write>(
    g: &CatalogGraph,
    mut nodes_out: N,
    mut edges_out: E,
) -> Result<(), GraphError> {
    let mut nodes: Vec<&Node> = g.nodes.iter().collect();
    nodes.sort_by(|a, b| a.id.cmp(&b.id));
    for n in nodes {
        writeln!(nodes_out, "{}\t{}\t{}", n.id, n.kind, sanitize(n.label()))?;
    }
    let mut edges: Vec<Edge> = g.edges().collect();
    edges.sort_by(|a, b| {
        (&a.source, &a.target, &a.predicate).cmp(&(&b.source, &b.target, &b.predicate))
    });
    for e in edges {
        writeln!(edges_out, "{}\t{}\t{}", e.source, e.predicate, e.target)?;
    }
    Ok(())
}

/// Reads a graph written by [`write_export`]. Labels are restored as `title`.
pub fn read_export<N: BufRead, E: BufRead>(
    nodes_in: N,
    edges_in: E,
) -> Result<CatalogGraph, GraphError> {
    let mut b = CatalogBuilder::new();
    for (i, line) in nodes_in.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(id), Some(kind)) = (parts.next(), parts.next()) else {
            return Err(GraphError::Parse {
                line: i + 1,
                reason: "expected `id\\tkind\\tlabel`".into(),
            });
        };
        if id.is_empty() {
            return Err(GraphError::Parse {
                line: i + 1,
                reason: "empty node id".into(),
            });
        }
        let id = EntityId::from(id);
        let kind: EntityKind = kind.parse().unwrap_or_else(|never| match never {});
        b.add_node(id.clone(), kind)?;
        if let Some(label) = parts.next().filter(|l| !l.is_empty()) {
            b.set_attr(&id, "title", label)?;
        }
    }
    for (i, line) in edges_in.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        let [s, p, t] = parts[..] else {
            return Err(GraphError::Parse {
                line: i + 1,
                reason: "expected `source\\tpredicate\\ttarget`".into(),
            });
        };
        b.add_edge(&EntityId::from(s), p, &EntityId::from(t))
            .map_err(|e| GraphError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
    }
    Ok(b.build())
}
