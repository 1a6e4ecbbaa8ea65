//! Slow, direct reference implementations used to check the library.
//!
//! Nothing here calls into the library's numeric code; graphs are plain
//! edge lists and feature vectors plain arrays.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;

/// Random directed multigraph: node count plus edge list, possibly with
/// parallel edges and self-loops.
pub fn graph(max_nodes: usize, max_edges: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1..=max_nodes).prop_flat_map(move |n| {
        (Just(n), prop::collection::vec((0..n, 0..n), 0..=max_edges))
    })
}

/// Random forest (no cycles, so every shortest path is unique).
pub fn forest(max_nodes: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2..=max_nodes).prop_flat_map(|n| {
        let parents = prop::collection::vec(any::<prop::sample::Index>(), n - 1);
        let keep = prop::collection::vec(prop::bool::weighted(0.85), n - 1);
        (Just(n), parents, keep).prop_map(|(n, parents, keep)| {
            let edges = (1..n)
                .filter(|&v| keep[v - 1])
                .map(|v| (parents[v - 1].index(v), v))
                .collect();
            (n, edges)
        })
    })
}

/// Unweighted all-pairs distances of the undirected simple view by
/// Floyd-Warshall; `None` for unreachable pairs.
pub fn distances(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<Option<usize>>> {
    let mut d = vec![vec![None; n]; n];
    for (v, row) in d.iter_mut().enumerate() {
        row[v] = Some(0);
    }
    for &(a, b) in edges {
        if a != b {
            d[a][b] = Some(1);
            d[b][a] = Some(1);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(x), Some(y)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| x + y < c) {
                        d[i][j] = Some(x + y);
                    }
                }
            }
        }
    }
    d
}

fn simple_neighbors(n: usize, edges: &[(usize, usize)]) -> Vec<BTreeSet<usize>> {
    let mut adj = vec![BTreeSet::new(); n];
    for &(a, b) in edges {
        if a != b {
            adj[a].insert(b);
            adj[b].insert(a);
        }
    }
    adj
}

/// Every shortest path between `s` and `t`, found by depth-first walks that
/// stop once they exceed the shortest distance.
pub fn shortest_paths(n: usize, edges: &[(usize, usize)], s: usize, t: usize) -> Vec<Vec<usize>> {
    let dist = distances(n, edges);
    let Some(target_len) = dist[s][t] else {
        return Vec::new();
    };
    let adj = simple_neighbors(n, edges);
    let mut out = Vec::new();
    let mut path = vec![s];
    fn walk(
        adj: &[BTreeSet<usize>],
        t: usize,
        limit: usize,
        path: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        let last = *path.last().unwrap();
        if last == t {
            if path.len() - 1 == limit {
                out.push(path.clone());
            }
            return;
        }
        if path.len() - 1 == limit {
            return;
        }
        for &w in &adj[last] {
            if !path.contains(&w) {
                path.push(w);
                walk(adj, t, limit, path, out);
                path.pop();
            }
        }
    }
    walk(&adj, t, target_len, &mut path, &mut out);
    out
}

/// Betweenness by enumerating shortest paths of every unordered pair.
pub fn betweenness(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let mut score = vec![0.0; n];
    for s in 0..n {
        for t in (s + 1)..n {
            let paths = shortest_paths(n, edges, s, t);
            if paths.is_empty() {
                continue;
            }
            let mut through = vec![0usize; n];
            for p in &paths {
                for &v in &p[1..p.len() - 1] {
                    through[v] += 1;
                }
            }
            for v in 0..n {
                score[v] += through[v] as f64 / paths.len() as f64;
            }
        }
    }
    score
}

/// Harmonic closeness from Floyd-Warshall distances.
pub fn harmonic_closeness(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let d = distances(n, edges);
    (0..n)
        .map(|v| {
            (0..n)
                .filter(|&u| u != v)
                .filter_map(|u| d[v][u])
                .map(|x| 1.0 / x as f64)
                .sum()
        })
        .collect()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = ((row + 1)..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// PageRank as the solution of `(I - d M) x = (1 - d) / n`, where column `s`
/// of `M` is the out-edge multiplicity of `s` over its out-degree, or
/// uniform when `s` has no out-edges.
pub fn pagerank_dense(n: usize, edges: &[(usize, usize)], damping: f64) -> Vec<f64> {
    let mut out = vec![0usize; n];
    for &(s, _) in edges {
        out[s] += 1;
    }
    let mut m = vec![vec![0.0; n]; n];
    for &(s, t) in edges {
        m[t][s] += 1.0 / out[s] as f64;
    }
    for s in 0..n {
        if out[s] == 0 {
            for row in m.iter_mut() {
                row[s] = 1.0 / n as f64;
            }
        }
    }
    let a = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 1.0 } else { 0.0 } - damping * m[i][j])
                .collect()
        })
        .collect();
    solve(a, vec![(1.0 - damping) / n as f64; n])
}

/// Textbook normalized HHI from the plain sum of squares.
pub fn hhi_star(shares: &[f64]) -> f64 {
    let n = shares.len() as f64;
    if shares.len() == 1 {
        return 1.0;
    }
    let h: f64 = shares.iter().map(|s| s * s).sum();
    (h - 1.0 / n) / (1.0 - 1.0 / n)
}

pub fn cosine_distance(a: &[f64; 8], b: &[f64; 8]) -> f64 {
    let dot: f64 = (0..8).map(|i| a[i] * b[i]).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

/// Mean distance over all ordered pairs of distinct positions.
pub fn ild(items: &[[f64; 8]]) -> f64 {
    let n = items.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += cosine_distance(&items[i], &items[j]);
                pairs += 1;
            }
        }
    }
    sum / pairs as f64
}

pub fn unexpectedness(history: &[[f64; 8]], recs: &[[f64; 8]]) -> f64 {
    let mut sum = 0.0;
    for r in recs {
        for h in history {
            sum += cosine_distance(r, h);
        }
    }
    sum / (recs.len() * history.len()) as f64
}

/// nDCG@k where the base top-k item at rank r (1-based) has relevance k - r + 1.
pub fn ndcg(base: &[&str], reranked: &[&str], k: usize) -> f64 {
    let rel: HashMap<&str, f64> = base
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &id)| (id, (k - i) as f64))
        .collect();
    let dcg = |list: &[&str]| -> f64 {
        list.iter()
            .take(k)
            .enumerate()
            .map(|(i, id)| rel.get(id).copied().unwrap_or(0.0) / ((i + 2) as f64).log2())
            .sum()
    };
    let ideal = dcg(base);
    if ideal == 0.0 {
        0.0
    } else {
        dcg(reranked) / ideal
    }
}

/// Feature vector strategy with components in `[0, 1]` and a nonzero norm.
pub fn feature() -> impl Strategy<Value = [f64; 8]> {
    prop::array::uniform8(0.0f64..=1.0).prop_filter("zero norm", |v| v.iter().any(|&x| x > 1e-6))
}

/// Plain description of a small catalog: `items` recommendable tracks
/// `t0..`, `entities` genre nodes `e0..`, and typed edges between any of
/// them. Node `i < items` is track `t{i}`, the rest entity `e{i - items}`.
#[derive(Debug, Clone)]
pub struct CatalogSpec {
    pub items: usize,
    pub entities: usize,
    pub edges: Vec<(usize, usize, u8)>,
}

impl CatalogSpec {
    pub fn name(&self, v: usize) -> String {
        if v < self.items {
            format!("t{v}")
        } else {
            format!("e{}", v - self.items)
        }
    }

    pub fn item_names(&self) -> Vec<String> {
        (0..self.items).map(|v| self.name(v)).collect()
    }

    /// Distinct `(source, predicate, target)` triples by name.
    pub fn triples(&self) -> BTreeSet<(String, String, String)> {
        self.edges
            .iter()
            .map(|&(s, t, p)| (self.name(s), format!("p{p}"), self.name(t)))
            .collect()
    }

    pub fn build(&self) -> kgrank_core::CatalogGraph {
        use kgrank_core::graph::CatalogBuilder;
        use kgrank_core::{EntityId, EntityKind};
        let mut b = CatalogBuilder::new();
        for v in 0..self.items + self.entities {
            let kind = if v < self.items { EntityKind::Track } else { EntityKind::Genre };
            b.add_node(EntityId::new(self.name(v)), kind).unwrap();
        }
        for (s, p, t) in self.triples() {
            b.add_edge(&EntityId::new(s), &p, &EntityId::new(t)).unwrap();
        }
        b.build()
    }
}

pub fn catalog(max_items: usize, max_entities: usize, max_edges: usize) -> impl Strategy<Value = CatalogSpec> {
    (2..=max_items, 1..=max_entities).prop_flat_map(move |(items, entities)| {
        let n = items + entities;
        prop::collection::vec((0..n, 0..n, 0u8..2), 0..=max_edges).prop_map(move |edges| CatalogSpec {
            items,
            entities,
            edges,
        })
    })
}

/// Catalog plus a split of its items into a non-empty history and candidates.
pub fn catalog_with_history(
    max_items: usize,
    max_entities: usize,
    max_edges: usize,
) -> impl Strategy<Value = (CatalogSpec, Vec<String>, Vec<String>)> {
    catalog(max_items, max_entities, max_edges).prop_flat_map(|spec| {
        let items = spec.items;
        (Just(spec), prop::collection::vec(any::<bool>(), items)).prop_map(|(spec, mask)| {
            let mut history = Vec::new();
            let mut candidates = Vec::new();
            for (i, name) in spec.item_names().into_iter().enumerate() {
                if mask[i] || i == 0 {
                    history.push(name);
                } else {
                    candidates.push(name);
                }
            }
            (spec, history, candidates)
        })
    })
}

/// Profile subgraph by direct set construction over the triple list:
/// history nodes, their neighbors, and every triple inside that set.
pub fn induce(
    triples: &BTreeSet<(String, String, String)>,
    history: &[String],
) -> (BTreeSet<String>, BTreeSet<(String, String, String)>) {
    let mut nodes: BTreeSet<String> = history.iter().cloned().collect();
    for (s, _, t) in triples {
        if history.contains(s) {
            nodes.insert(t.clone());
        }
        if history.contains(t) {
            nodes.insert(s.clone());
        }
    }
    let edges = triples
        .iter()
        .filter(|(s, _, t)| nodes.contains(s) && nodes.contains(t))
        .cloned()
        .collect();
    (nodes, edges)
}

/// Subgraph extended by `item`: with `closed`, its whole closed neighborhood
/// and every triple touching the item or a new node; otherwise the item and
/// its triples to nodes already present.
pub fn extend(
    triples: &BTreeSet<(String, String, String)>,
    nodes: &BTreeSet<String>,
    edges: &BTreeSet<(String, String, String)>,
    item: &str,
    closed: bool,
) -> (BTreeSet<String>, BTreeSet<(String, String, String)>) {
    let mut out_nodes = nodes.clone();
    out_nodes.insert(item.to_owned());
    let mut fresh: BTreeSet<String> = BTreeSet::new();
    fresh.insert(item.to_owned());
    if closed {
        for (s, _, t) in triples {
            if s == item && !nodes.contains(t) {
                fresh.insert(t.clone());
            }
            if t == item && !nodes.contains(s) {
                fresh.insert(s.clone());
            }
        }
        out_nodes.extend(fresh.iter().cloned());
    }
    let mut out_edges = edges.clone();
    for e @ (s, _, t) in triples {
        let touches = fresh.contains(s) || fresh.contains(t);
        if touches && out_nodes.contains(s) && out_nodes.contains(t) {
            out_edges.insert(e.clone());
        }
    }
    (out_nodes, out_edges)
}
