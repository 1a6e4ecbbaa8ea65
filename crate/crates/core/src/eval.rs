//! Beyond-accuracy evaluation of recommendation lists.
//!
//! Surprise is measured on acoustic feature vectors with cosine distance:
//! intra-list diversity (mean pairwise distance within a list) and
//! unexpectedness (mean distance between list and history). Agreement between
//! a re-ranked list and its base list is measured with nDCG@k, where the base
//! ranking itself supplies graded relevance.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::EntityId;
use crate::rerank::RecommendationList;

pub const FEATURE_NAMES: [&str; 8] = [
    "danceability",
    "energy",
    "speechiness",
    "acousticness",
    "instrumentalness",
    "liveness",
    "valence",
    "tempo",
];

pub const DEFAULT_EVAL_K: usize = 10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("feature vector has zero norm")]
    ZeroNorm,
    #[error("feature `{name}` = {value} outside [0, 1]")]
    FeatureOutOfRange { name: &'static str, value: f64 },
    #[error("no feature vector for item `{0}`")]
    MissingFeatures(EntityId),
    #[error("{0} needs at least one item")]
    EmptyList(&'static str),
    #[error("cut-off k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Eight acoustic features, each in `[0, 1]`, in [`FEATURE_NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector([f64; 8]);

impl FeatureVector {
    pub fn new(values: [f64; 8]) -> Result<Self, EvalError> {
        for (name, &value) in FEATURE_NAMES.iter().zip(&values) {
            if !(0.0..=1.0).contains(&value) {
                return Err(EvalError::FeatureOutOfRange { name, value });
            }
        }
        Ok(FeatureVector(values))
    }

    pub fn values(&self) -> &[f64; 8] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// `1 - cos(a, b)`, within `[0, 1]` for non-negative vectors.
pub fn cosine_distance(a: &FeatureVector, b: &FeatureVector) -> Result<f64, EvalError> {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(EvalError::ZeroNorm);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((1.0 - dot / (na * nb)).clamp(0.0, 1.0))
}

/// Intra-list diversity: mean distance over ordered pairs of distinct
/// positions. Lists with fewer than two items score 0.
pub fn ild(items: &[FeatureVector]) -> Result<f64, EvalError> {
    let n = items.len();
    if n <= 1 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += cosine_distance(&items[i], &items[j])?;
        }
    }
    // each unordered pair stands for both orders
    Ok(2.0 * sum / (n * (n - 1)) as f64)
}

/// Mean distance between every recommended item and every history item.
pub fn unexpectedness(
    history: &[FeatureVector],
    recs: &[FeatureVector],
) -> Result<f64, EvalError> {
    if history.is_empty() {
        return Err(EvalError::EmptyList("history"));
    }
    if recs.is_empty() {
        return Err(EvalError::EmptyList("recommendation list"));
    }
    let mut sum = 0.0;
    for r in recs {
        for h in history {
            sum += cosine_distance(r, h)?;
        }
    }
    Ok(sum / (recs.len() * history.len()) as f64)
}

/// Feature vectors by item id.
#[derive(Debug, Clone, Default)]
pub struct FeatureStore {
    vectors: HashMap<EntityId, FeatureVector>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: EntityId, v: FeatureVector) {
        self.vectors.insert(id, v);
    }

    pub fn get(&self, id: &EntityId) -> Result<&FeatureVector, EvalError> {
        self.vectors.get(id).ok_or_else(|| EvalError::MissingFeatures(id.clone()))
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors_for<'a, I>(&self, ids: I) -> Result<Vec<FeatureVector>, EvalError>
    where
        I: IntoIterator<Item = &'a EntityId>,
    {
        ids.into_iter().map(|id| self.get(id).copied()).collect()
    }

    /// Entries sorted by id.
    pub fn sorted(&self) -> Vec<(&EntityId, &FeatureVector)> {
        let mut v: Vec<_> = self.vectors.iter().collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }
}

impl FromIterator<(EntityId, FeatureVector)> for FeatureStore {
    fn from_iter<T: IntoIterator<Item = (EntityId, FeatureVector)>>(iter: T) -> Self {
        FeatureStore {
            vectors: iter.into_iter().collect(),
        }
    }
}

/// Relevance of base-list items: `k - r + 1` for base rank `r <= k`.
pub fn positional_relevance(base: &RecommendationList, k: usize) -> HashMap<&EntityId, usize> {
    base.ids().take(k).enumerate().map(|(r, id)| (id, k - r)).collect()
}

fn dcg<'a>(ranked: impl Iterator<Item = &'a EntityId>, rel: &HashMap<&EntityId, usize>, k: usize) -> f64 {
    ranked
        .take(k)
        .enumerate()
        .map(|(pos, id)| {
            let gain = rel.get(id).copied().unwrap_or(0) as f64;
            gain / ((pos + 2) as f64).log2()
        })
        .sum()
}

/// nDCG@k of `reranked` against the base list's own order.
///
/// Items in the base top-k have relevance `k - r + 1` for base rank `r`;
/// everything else is irrelevant. The ideal DCG is that of the base order.
pub fn ndcg_at_k<'a, I>(base: &RecommendationList, reranked: I, k: usize) -> Result<f64, EvalError>
where
    I: IntoIterator<Item = &'a EntityId>,
{
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    let rel = positional_relevance(base, k);
    let ideal = dcg(base.ids(), &rel, k);
    if ideal == 0.0 {
        return Ok(0.0);
    }
    Ok((dcg(reranked.into_iter(), &rel, k) / ideal).clamp(0.0, 1.0))
}

/// Writes trec_eval qrels (`<user> 0 <item> <relevance>`) from the base top-k.
pub fn write_qrels<'a, W, I>(mut out: W, bases: I, k: usize) -> Result<(), EvalError>
where
    W: Write,
    I: IntoIterator<Item = &'a RecommendationList>,
{
    for base in bases {
        for (r, id) in base.ids().take(k).enumerate() {
            writeln!(out, "{} 0 {} {}", base.user(), id, k - r)?;
        }
    }
    Ok(())
}

/// Writes one user's ranking as trec_eval run lines
/// (`<user> Q0 <item> <rank> <score> <tag>`) with strictly decreasing scores.
pub fn write_trec_run<'a, W, I>(mut out: W, user: &str, ranked: I, tag: &str) -> Result<(), EvalError>
where
    W: Write,
    I: IntoIterator<Item = &'a EntityId>,
{
    let ranked: Vec<&EntityId> = ranked.into_iter().collect();
    let n = ranked.len();
    for (i, id) in ranked.into_iter().enumerate() {
        writeln!(out, "{} Q0 {} {} {} {}", user, id, i + 1, n - i, tag)?;
    }
    Ok(())
}

/// One report line: the measures for one user under one (metric, order).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub user: String,
    pub metric: String,
    pub order: String,
    pub ild: Option<f64>,
    pub unexpectedness: Option<f64>,
    pub ndcg10: Option<f64>,
}

pub const REPORT_HEADER: [&str; 6] = ["user", "metric", "order", "ild", "unexpectedness", "ndcg10"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.9}")).unwrap_or_default()
}

/// Per-row report CSV.
pub fn emit_report<W: Write>(rows: &[EvalRow], out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        w.write_record([
            r.user.as_str(),
            &r.metric,
            &r.order,
            &fmt_opt(r.ild),
            &fmt_opt(r.unexpectedness),
            &fmt_opt(r.ndcg10),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub metric: String,
    pub order: String,
    pub users: usize,
    pub ild: Option<f64>,
    pub unexpectedness: Option<f64>,
    pub ndcg10: Option<f64>,
}

/// Means per (metric, order), in order of first appearance.
pub fn summarize(rows: &[EvalRow]) -> Vec<SummaryRow> {
    #[derive(Default)]
    struct Acc {
        users: usize,
        sums: [(f64, usize); 3],
    }
    let mut order: Vec<(String, String)> = Vec::new();
    let mut acc: BTreeMap<(String, String), Acc> = BTreeMap::new();
    for r in rows {
        let key = (r.metric.clone(), r.order.clone());
        let a = acc.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Acc::default()
        });
        a.users += 1;
        for (slot, v) in a.sums.iter_mut().zip([r.ild, r.unexpectedness, r.ndcg10]) {
            if let Some(v) = v {
                slot.0 += v;
                slot.1 += 1;
            }
        }
    }
    order
        .into_iter()
        .map(|key| {
            let a = &acc[&key];
            let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
            SummaryRow {
                metric: key.0,
                order: key.1,
                users: a.users,
                ild: mean(a.sums[0]),
                unexpectedness: mean(a.sums[1]),
                ndcg10: mean(a.sums[2]),
            }
        })
        .collect()
}

/// Aggregate CSV: `metric,order,users,ild,unexpectedness,ndcg10`.
pub fn emit_summary<W: Write>(rows: &[EvalRow], out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "order", "users", "ild", "unexpectedness", "ndcg10"])?;
    for s in summarize(rows) {
        w.write_record([
            s.metric.as_str(),
            &s.order,
            &s.users.to_string(),
            &fmt_opt(s.ild),
            &fmt_opt(s.unexpectedness),
            &fmt_opt(s.ndcg10),
        ])?;
    }
    w.flush()?;
    Ok(())
}
