//! Base recommenders over implicit feedback.
//!
//! Play counts are min-max scaled per user into explicit ratings in
//! `[1, 1000]`. On top of the resulting [`RatingMatrix`] sit three built-in
//! predictors (bias baseline, item kNN, popularity) and an adapter for lists
//! produced by any external system in the plain-text run format
//! `<user_id> <rank> <item_id> <score>`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::EntityId;
use crate::rerank::{RecommendationList, RerankError};

pub const MIN_RATING: f64 = 1.0;
pub const MAX_RATING: f64 = 1000.0;

#[derive(Debug, Error)]
pub enum RecsysError {
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("rating {rating} for ({user}, {item}) outside [1, 1000]")]
    RatingOutOfRange {
        user: String,
        item: EntityId,
        rating: f64,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    List(#[from] RerankError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: String,
    pub item: EntityId,
    pub count: u64,
}

impl Interaction {
    pub fn new(user: impl Into<String>, item: impl Into<EntityId>, count: u64) -> Self {
        Interaction {
            user: user.into(),
            item: item.into(),
            count,
        }
    }
}

/// Sparse explicit ratings, indexed both by user and by item.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RatingMatrix {
    by_user: BTreeMap<String, BTreeMap<EntityId, f64>>,
    by_item: BTreeMap<EntityId, BTreeMap<String, f64>>,
}

impl RatingMatrix {
    pub fn from_ratings<I>(ratings: I) -> Result<Self, RecsysError>
    where
        I: IntoIterator<Item = (String, EntityId, f64)>,
    {
        let mut m = RatingMatrix::default();
        for (user, item, rating) in ratings {
            if !(MIN_RATING..=MAX_RATING).contains(&rating) {
                return Err(RecsysError::RatingOutOfRange { user, item, rating });
            }
            m.by_item.entry(item.clone()).or_default().insert(user.clone(), rating);
            m.by_user.entry(user).or_default().insert(item, rating);
        }
        Ok(m)
    }

    pub fn users(&self) -> impl Iterator<Item = &String> {
        self.by_user.keys()
    }

    pub fn items(&self) -> impl Iterator<Item = &EntityId> {
        self.by_item.keys()
    }

    pub fn user_count(&self) -> usize {
        self.by_user.len()
    }

    pub fn item_count(&self) -> usize {
        self.by_item.len()
    }

    pub fn len(&self) -> usize {
        self.by_user.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_user.is_empty()
    }

    pub fn get(&self, user: &str, item: &EntityId) -> Option<f64> {
        self.by_user.get(user)?.get(item).copied()
    }

    pub fn user_ratings(&self, user: &str) -> Option<&BTreeMap<EntityId, f64>> {
        self.by_user.get(user)
    }

    pub fn item_ratings(&self, item: &EntityId) -> Option<&BTreeMap<String, f64>> {
        self.by_item.get(item)
    }

    pub fn contains_user(&self, user: &str) -> bool {
        self.by_user.contains_key(user)
    }

    fn mean(&self) -> f64 {
        let (sum, n) = self
            .by_user
            .values()
            .flat_map(|r| r.values())
            .fold((0.0, 0usize), |(s, n), r| (s + r, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// Min-max scales each user's play counts into `[1, 1000]`.
///
/// Repeated `(user, item)` interactions are summed first. A user whose counts
/// are all equal gets 1000 everywhere: every item is their most played.
pub fn scale_ratings(interactions: &[Interaction]) -> RatingMatrix {
    let mut counts: BTreeMap<&str, BTreeMap<&EntityId, u64>> = BTreeMap::new();
    for it in interactions {
        *counts.entry(&it.user).or_default().entry(&it.item).or_default() += it.count;
    }
    let mut ratings = Vec::with_capacity(interactions.len());
    for (user, items) in counts {
        let min = *items.values().min().expect("non-empty per user") as f64;
        let max = *items.values().max().expect("non-empty per user") as f64;
        for (item, c) in items {
            let r = if max == min {
                MAX_RATING
            } else {
                MIN_RATING + (MAX_RATING - MIN_RATING) * (c as f64 - min) / (max - min)
            };
            ratings.push((user.to_owned(), item.clone(), r));
        }
    }
    RatingMatrix::from_ratings(ratings).expect("scaled ratings are in range")
}

/// Items with at least one rating that `user` has not rated.
pub fn anti_testset(matrix: &RatingMatrix, user: &str) -> BTreeSet<EntityId> {
    let rated = matrix.user_ratings(user);
    matrix
        .items()
        .filter(|i| rated.is_none_or(|r| !r.contains_key(*i)))
        .cloned()
        .collect()
}

/// A fitted rating predictor.
pub trait Predictor: Sync {
    fn predict(&self, user: &str, item: &EntityId) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub epochs: usize,
    pub reg_user: f64,
    pub reg_item: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            epochs: 10,
            reg_user: 10.0,
            reg_item: 10.0,
        }
    }
}

/// `mu + b_u + b_i` with biases fitted by alternating regularized averages.
#[derive(Debug, Clone)]
pub struct BaselineModel {
    mu: f64,
    user_bias: HashMap<String, f64>,
    item_bias: HashMap<EntityId, f64>,
}

impl BaselineModel {
    pub fn fit(matrix: &RatingMatrix, params: BaselineParams) -> Self {
        let mu = matrix.mean();
        let mut user_bias: HashMap<String, f64> =
            matrix.users().map(|u| (u.clone(), 0.0)).collect();
        let mut item_bias: HashMap<EntityId, f64> =
            matrix.items().map(|i| (i.clone(), 0.0)).collect();
        for _ in 0..params.epochs {
            for (u, ratings) in &matrix.by_user {
                let s: f64 = ratings.iter().map(|(i, r)| r - mu - item_bias[i]).sum();
                user_bias.insert(u.clone(), s / (params.reg_user + ratings.len() as f64));
            }
            for (i, ratings) in &matrix.by_item {
                let s: f64 = ratings.iter().map(|(u, r)| r - mu - user_bias[u]).sum();
                item_bias.insert(i.clone(), s / (params.reg_item + ratings.len() as f64));
            }
        }
        BaselineModel {
            mu,
            user_bias,
            item_bias,
        }
    }

    pub fn global_mean(&self) -> f64 {
        self.mu
    }

    pub fn user_bias(&self, user: &str) -> f64 {
        self.user_bias.get(user).copied().unwrap_or(0.0)
    }

    pub fn item_bias(&self, item: &EntityId) -> f64 {
        self.item_bias.get(item).copied().unwrap_or(0.0)
    }
}

impl Predictor for BaselineModel {
    fn predict(&self, user: &str, item: &EntityId) -> f64 {
        (self.mu + self.user_bias(user) + self.item_bias(item)).clamp(MIN_RATING, MAX_RATING)
    }
}

/// Item-based kNN with cosine similarity over co-rating users.
#[derive(Debug, Clone)]
pub struct ItemKnnModel {
    k: usize,
    columns: HashMap<EntityId, Vec<(u32, f64)>>,
    user_index: HashMap<String, u32>,
    user_rows: HashMap<String, Vec<(EntityId, f64)>>,
    fallback: BaselineModel,
}

impl ItemKnnModel {
    pub const DEFAULT_K: usize = 40;

    pub fn fit(matrix: &RatingMatrix, k: usize, baseline: BaselineParams) -> Self {
        let user_index: HashMap<String, u32> =
            matrix.users().enumerate().map(|(i, u)| (u.clone(), i as u32)).collect();
        let columns = matrix
            .by_item
            .iter()
            .map(|(item, ratings)| {
                // BTreeMap order of user ids equals index order
                let col = ratings.iter().map(|(u, &r)| (user_index[u], r)).collect();
                (item.clone(), col)
            })
            .collect();
        let user_rows = matrix
            .by_user
            .iter()
            .map(|(u, r)| (u.clone(), r.iter().map(|(i, &v)| (i.clone(), v)).collect()))
            .collect();
        ItemKnnModel {
            k,
            columns,
            user_index,
            user_rows,
            fallback: BaselineModel::fit(matrix, baseline),
        }
    }

    /// Cosine over users who rated both items; 0 without common raters.
    pub fn similarity(&self, a: &EntityId, b: &EntityId) -> f64 {
        let (Some(x), Some(y)) = (self.columns.get(a), self.columns.get(b)) else {
            return 0.0;
        };
        let (mut i, mut j) = (0, 0);
        let (mut dot, mut nx, mut ny) = (0.0, 0.0, 0.0);
        while i < x.len() && j < y.len() {
            match x[i].0.cmp(&y[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    dot += x[i].1 * y[j].1;
                    nx += x[i].1 * x[i].1;
                    ny += y[j].1 * y[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        if nx == 0.0 || ny == 0.0 {
            0.0
        } else {
            dot / (nx.sqrt() * ny.sqrt())
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn knows_user(&self, user: &str) -> bool {
        self.user_index.contains_key(user)
    }
}

impl Predictor for ItemKnnModel {
    fn predict(&self, user: &str, item: &EntityId) -> f64 {
        let Some(row) = self.user_rows.get(user) else {
            return self.fallback.predict(user, item);
        };
        let mut neighbors: Vec<(f64, &EntityId, f64)> = row
            .iter()
            .filter(|(j, _)| j != item)
            .map(|(j, r)| (self.similarity(item, j), j, *r))
            .filter(|(s, _, _)| *s > 0.0)
            .collect();
        if neighbors.is_empty() {
            return self.fallback.predict(user, item);
        }
        neighbors.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        neighbors.truncate(self.k);
        let (num, den) = neighbors
            .iter()
            .fold((0.0, 0.0), |(n, d), (s, _, r)| (n + s * r, d + s));
        num / den
    }
}

/// Scores an item by how many users rated it.
#[derive(Debug, Clone)]
pub struct PopularityModel {
    counts: HashMap<EntityId, usize>,
}

impl PopularityModel {
    pub fn fit(matrix: &RatingMatrix) -> Self {
        PopularityModel {
            counts: matrix.by_item.iter().map(|(i, r)| (i.clone(), r.len())).collect(),
        }
    }
}

impl Predictor for PopularityModel {
    fn predict(&self, _user: &str, item: &EntityId) -> f64 {
        self.counts.get(item).copied().unwrap_or(0) as f64
    }
}

/// Top-`n` predictions over the user's anti-testset, best first, ties by item id.
pub fn recommend(
    model: &dyn Predictor,
    matrix: &RatingMatrix,
    user: &str,
    n: usize,
) -> Result<RecommendationList, RecsysError> {
    if !matrix.contains_user(user) {
        return Err(RecsysError::UnknownUser(user.to_owned()));
    }
    let mut scored: Vec<(EntityId, f64)> = anti_testset(matrix, user)
        .into_iter()
        .map(|i| {
            let p = model.predict(user, &i);
            (i, p)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(n);
    Ok(RecommendationList::new(user, scored)?)
}

/// Writes lists as `<user> <rank> <item> <score>` lines.
pub fn write_run<'a, W, I>(mut out: W, lists: I) -> Result<(), RecsysError>
where
    W: Write,
    I: IntoIterator<Item = &'a RecommendationList>,
{
    for list in lists {
        for (rank, (item, score)) in list.items().iter().enumerate() {
            writeln!(out, "{} {} {} {}", list.user(), rank + 1, item, score)?;
        }
    }
    Ok(())
}

/// Parses a run file into per-user lists. Lines of one user may be
/// interleaved with others; ranks must be unique and scores non-increasing
/// with rank.
pub fn load_external_recommendations<R: BufRead>(
    input: R,
) -> Result<BTreeMap<String, RecommendationList>, RecsysError> {
    struct Row {
        rank: usize,
        item: EntityId,
        score: f64,
        line: usize,
    }
    let mut per_user: BTreeMap<String, Vec<Row>> = BTreeMap::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [user, rank, item, score] = fields[..] else {
            return Err(RecsysError::Parse {
                line: line_no,
                reason: format!("expected 4 fields, found {}", fields.len()),
            });
        };
        let rank: usize = rank.parse().ok().filter(|&r| r >= 1).ok_or_else(|| {
            RecsysError::Parse {
                line: line_no,
                reason: format!("invalid rank `{rank}`"),
            }
        })?;
        let score: f64 = score.parse().ok().filter(|s: &f64| s.is_finite()).ok_or_else(|| {
            RecsysError::Parse {
                line: line_no,
                reason: format!("invalid score `{score}`"),
            }
        })?;
        per_user.entry(user.to_owned()).or_default().push(Row {
            rank,
            item: EntityId::from(item),
            score,
            line: line_no,
        });
    }
    let mut out = BTreeMap::new();
    for (user, mut rows) in per_user {
        rows.sort_by_key(|r| r.rank);
        let mut seen = BTreeSet::new();
        for w in 0..rows.len() {
            let row = &rows[w];
            if !seen.insert(&row.item) {
                return Err(RecsysError::Parse {
                    line: row.line,
                    reason: format!("duplicate item `{}` for user `{user}`", row.item),
                });
            }
            if w > 0 {
                let prev = &rows[w - 1];
                if prev.rank == row.rank {
                    return Err(RecsysError::Parse {
                        line: row.line,
                        reason: format!("duplicate rank {} for user `{user}`", row.rank),
                    });
                }
                if prev.score < row.score {
                    return Err(RecsysError::Parse {
                        line: row.line,
                        reason: format!(
                            "score {} at rank {} exceeds score {} at rank {}",
                            row.score, row.rank, prev.score, prev.rank
                        ),
                    });
                }
            }
        }
        let items = rows.into_iter().map(|r| (r.item, r.score)).collect();
        out.insert(user.clone(), RecommendationList::new(user, items)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> EntityId {
        EntityId::from(s)
    }

    fn matrix(rows: &[(&str, &str, f64)]) -> RatingMatrix {
        RatingMatrix::from_ratings(rows.iter().map(|&(u, i, r)| (u.to_owned(), id(i), r)))
            .unwrap()
    }

    #[test]
    fn scaling_examples() {
        let m = scale_ratings(&[Interaction::new("u", "a", 10), Interaction::new("u", "b", 1)]);
        assert_eq!(m.get("u", &id("a")), Some(1000.0));
        assert_eq!(m.get("u", &id("b")), Some(1.0));

        let m = scale_ratings(&[Interaction::new("u", "a", 5), Interaction::new("u", "b", 5)]);
        assert_eq!(m.get("u", &id("a")), Some(1000.0));
        assert_eq!(m.get("u", &id("b")), Some(1000.0));

        let m = scale_ratings(&[
            Interaction::new("u", "a", 1),
            Interaction::new("u", "b", 2),
            Interaction::new("u", "c", 3),
        ]);
        assert_eq!(m.get("u", &id("b")), Some(500.5));
        assert_eq!(m.get("u", &id("c")), Some(1000.0));
    }

    #[test]
    fn scaling_aggregates_repeats() {
        let m = scale_ratings(&[
            Interaction::new("u", "a", 1),
            Interaction::new("u", "a", 2),
            Interaction::new("u", "b", 1),
        ]);
        assert_eq!(m.get("u", &id("a")), Some(1000.0));
        assert_eq!(m.get("u", &id("b")), Some(1.0));
    }

    #[test]
    fn out_of_range_rating_rejected() {
        assert!(RatingMatrix::from_ratings([("u".to_owned(), id("a"), 0.5)]).is_err());
    }

    #[test]
    fn baseline_examples() {
        let m = matrix(&[("u", "a", 500.0)]);
        let model = BaselineModel::fit(&m, BaselineParams::default());
        assert_eq!(model.predict("u", &id("a")), 500.0);
        assert_eq!(model.predict("nobody", &id("nothing")), 500.0);
    }

    #[test]
    fn baseline_clamps() {
        let m = matrix(&[("u", "a", 1.0), ("u", "b", 1.0), ("v", "a", 1000.0)]);
        let model = BaselineModel::fit(&m, BaselineParams { reg_user: 0.0, reg_item: 0.0, epochs: 50 });
        for u in ["u", "v", "w"] {
            for i in ["a", "b", "c"] {
                let p = model.predict(u, &id(i));
                assert!((MIN_RATING..=MAX_RATING).contains(&p));
            }
        }
    }

    #[test]
    fn knn_identical_item_dominates() {
        // x and y are rated identically by v and w; u rated only y.
        let m = matrix(&[
            ("v", "x", 300.0),
            ("v", "y", 300.0),
            ("w", "x", 900.0),
            ("w", "y", 900.0),
            ("u", "y", 800.0),
        ]);
        let model = ItemKnnModel::fit(&m, 40, BaselineParams::default());
        assert!((model.similarity(&id("x"), &id("y")) - 1.0).abs() < 1e-12);
        assert!((model.predict("u", &id("x")) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn knn_falls_back_without_neighbors() {
        let m = matrix(&[("u", "a", 700.0), ("v", "b", 200.0)]);
        let model = ItemKnnModel::fit(&m, 40, BaselineParams::default());
        let base = BaselineModel::fit(&m, BaselineParams::default());
        assert_eq!(model.predict("u", &id("b")), base.predict("u", &id("b")));
    }

    #[test]
    fn knn_weighted_mean_by_hand() {
        // columns over users (p, q, r, u):
        //   i1: p=1, q=2        i2: p=2, q=1, u=4
        //   i3: p=1, r=3, u=2   target i4: p=1, q=1, r=1
        let m = matrix(&[
            ("p", "i1", 1.0),
            ("q", "i1", 2.0),
            ("p", "i2", 2.0),
            ("q", "i2", 1.0),
            ("u", "i2", 4.0),
            ("p", "i3", 1.0),
            ("r", "i3", 3.0),
            ("u", "i3", 2.0),
            ("p", "i4", 1.0),
            ("q", "i4", 1.0),
            ("r", "i4", 1.0),
        ]);
        let model = ItemKnnModel::fit(&m, 40, BaselineParams::default());
        // sim(i4, i2) over {p, q}: (2 + 1) / (sqrt(2) sqrt(5)) = 3 / sqrt(10)
        // sim(i4, i3) over {p, r}: (1 + 3) / (sqrt(2) sqrt(10)) = 4 / sqrt(20)
        let s2 = 3.0 / 10f64.sqrt();
        let s3 = 4.0 / 20f64.sqrt();
        assert!((model.similarity(&id("i4"), &id("i2")) - s2).abs() < 1e-12);
        assert!((model.similarity(&id("i3"), &id("i4")) - s3).abs() < 1e-12);
        let expected = (s2 * 4.0 + s3 * 2.0) / (s2 + s3);
        assert!((model.predict("u", &id("i4")) - expected).abs() < 1e-12);
        // k = 1 keeps only the most similar rated item, i2 (0.949 > 0.894)
        let k1 = ItemKnnModel::fit(&m, 1, BaselineParams::default());
        assert!((k1.predict("u", &id("i4")) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn anti_testset_examples() {
        let m = matrix(&[
            ("u", "a", 5.0),
            ("u", "b", 5.0),
            ("v", "c", 5.0),
            ("v", "d", 5.0),
            ("w", "e", 5.0),
        ]);
        let expected: BTreeSet<EntityId> = ["c", "d", "e"].into_iter().map(id).collect();
        assert_eq!(anti_testset(&m, "u"), expected);
        assert_eq!(anti_testset(&m, "nobody").len(), 5);
        let all = matrix(&[("u", "a", 5.0), ("v", "a", 3.0)]);
        assert!(anti_testset(&all, "u").is_empty());
    }

    #[test]
    fn recommend_examples() {
        let m = matrix(&[
            ("u", "a", 900.0),
            ("v", "b", 100.0),
            ("v", "c", 800.0),
            ("w", "c", 700.0),
        ]);
        let model = BaselineModel::fit(&m, BaselineParams::default());
        let list = recommend(&model, &m, "u", 100).unwrap();
        assert_eq!(list.len(), 2);
        // c's item bias is larger than b's
        assert_eq!(list.items()[0].0, id("c"));
        assert_eq!(recommend(&model, &m, "u", 100).unwrap(), list);
        assert!(recommend(&model, &m, "nobody", 10).is_err());
        assert_eq!(recommend(&model, &m, "u", 1).unwrap().len(), 1);
    }

    #[test]
    fn run_file_round_trip() {
        let lists = vec![
            RecommendationList::new("u1", vec![(id("a"), 3.5), (id("b"), 2.0), (id("c"), 2.0)])
                .unwrap(),
            RecommendationList::new("u2", vec![(id("c"), 0.1), (id("a"), 0.05), (id("b"), -1.0)])
                .unwrap(),
        ];
        let mut buf = Vec::new();
        write_run(&mut buf, &lists).unwrap();
        let back = load_external_recommendations(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back["u1"], lists[0]);
        assert_eq!(back["u2"], lists[1]);
    }

    #[test]
    fn run_file_errors() {
        assert!(load_external_recommendations("".as_bytes()).unwrap().is_empty());
        let shuffled = "u 1 a 1.0\nu 2 b 2.0\n";
        match load_external_recommendations(shuffled.as_bytes()) {
            Err(RecsysError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match load_external_recommendations("u 1 a\n".as_bytes()) {
            Err(RecsysError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(load_external_recommendations("u 0 a 1\n".as_bytes()).is_err());
        assert!(load_external_recommendations("u 1 a 1\nu 1 b 1\n".as_bytes()).is_err());
        assert!(load_external_recommendations("u 1 a 2\nu 2 a 1\n".as_bytes()).is_err());
    }
}
