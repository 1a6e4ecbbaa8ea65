//! Dataset ingestion.
//!
//! LastFM-style inputs come as three files that share track ids:
//! listening events (TSV), acoustic features (CSV) and genre annotations
//! (CSV). They are merged into aggregated play counts, catalog triples and
//! per-track feature vectors. The Netflix titles CSV becomes a catalog of
//! movies and TV shows linked to people, countries, genres and ratings.
//!
//! Entity ids are namespaced so that numeric ids from different sources do
//! not collide: tracks `t_<id>`, artists `a_<id>`, genres `g_<name>`, and for
//! Netflix `person:`, `country:`, `genre:` and `rating:` prefixes. Titles keep
//! their `show_id`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{FeatureStore, FeatureVector, FEATURE_NAMES};
use crate::graph::{CatalogBuilder, CatalogGraph, EntityId, EntityKind, GraphError, Triple};
use crate::recsys::Interaction;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{source_name}: missing required column `{column}`")]
    MissingColumn {
        source_name: &'static str,
        column: String,
    },
    #[error("{source_name}, record {record}: {reason}")]
    BadRecord {
        source_name: &'static str,
        record: usize,
        reason: String,
    },
    #[error("only {eligible} users have at least {min_unique} unique tracks, {requested} requested")]
    NotEnoughUsers {
        requested: usize,
        eligible: usize,
        min_unique: usize,
    },
    #[error("invalid profile configuration: {0}")]
    InvalidProfileConfig(String),
    #[error("split ratio {0} outside (0, 1)")]
    InvalidRatio(f64),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One machine-readable line of the ingest summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub stage: String,
    pub count: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub records: Vec<SummaryRecord>,
}

impl IngestSummary {
    pub fn push(&mut self, stage: &str, count: u64, reason: &str) {
        self.records.push(SummaryRecord {
            stage: stage.to_owned(),
            count,
            reason: reason.to_owned(),
        });
    }

    pub fn count(&self, stage: &str, reason: &str) -> Option<u64> {
        self.records
            .iter()
            .find(|r| r.stage == stage && r.reason == reason)
            .map(|r| r.count)
    }

    pub fn extend(&mut self, other: IngestSummary) {
        self.records.extend(other.records);
    }

    /// JSON lines, one `{stage, count, reason}` object per record.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), IngestError> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListeningEvent {
    pub user: String,
    pub artist: String,
    pub track: String,
    pub timestamp: Option<i64>,
}

/// Raw feature row; tempo is unscaled (beats per minute).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub track: String,
    pub values: [f64; 8],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenreRow {
    pub track: String,
    pub genre: String,
}

pub fn track_id(raw: &str) -> EntityId {
    EntityId::new(format!("t_{raw}"))
}

pub fn artist_id(raw: &str) -> EntityId {
    EntityId::new(format!("a_{raw}"))
}

pub fn genre_id(raw: &str) -> EntityId {
    EntityId::new(format!("g_{}", raw.trim().to_lowercase().replace(char::is_whitespace, "_")))
}

struct Columns {
    source_name: &'static str,
    index: HashMap<String, usize>,
}

impl Columns {
    fn new(source_name: &'static str, headers: &csv::StringRecord) -> Self {
        let index = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_ascii_lowercase(), i))
            .collect();
        Columns { source_name, index }
    }

    fn require(&self, name: &str) -> Result<usize, IngestError> {
        self.index.get(name).copied().ok_or_else(|| IngestError::MissingColumn {
            source_name: self.source_name,
            column: name.to_owned(),
        })
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

fn field(rec: &csv::StringRecord, i: usize) -> &str {
    rec.get(i).unwrap_or("").trim()
}

/// Reads listening events from a tab-separated file with a header row.
/// Required columns: `user_id`, `artist_id`, `track_id`; optional `timestamp`.
pub fn read_events<R: Read>(input: R) -> Result<Vec<ListeningEvent>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .flexible(true)
        .from_reader(input);
    let cols = Columns::new("events", rdr.headers()?);
    let (u, a, t) = (cols.require("user_id")?, cols.require("artist_id")?, cols.require("track_id")?);
    let ts = cols.optional("timestamp");
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let (user, artist, track) = (field(&rec, u), field(&rec, a), field(&rec, t));
        if user.is_empty() || artist.is_empty() || track.is_empty() {
            return Err(IngestError::BadRecord {
                source_name: "events",
                record: i + 1,
                reason: "empty user, artist or track id".into(),
            });
        }
        let timestamp = match ts.map(|c| field(&rec, c)).filter(|s| !s.is_empty()) {
            Some(s) => Some(s.parse().map_err(|_| IngestError::BadRecord {
                source_name: "events",
                record: i + 1,
                reason: format!("invalid timestamp `{s}`"),
            })?),
            None => None,
        };
        out.push(ListeningEvent {
            user: user.to_owned(),
            artist: artist.to_owned(),
            track: track.to_owned(),
            timestamp,
        });
    }
    Ok(out)
}

/// Reads acoustic features: `track_id` plus the eight feature columns.
pub fn read_features<R: Read>(input: R) -> Result<Vec<FeatureRow>, IngestError> {
    let mut rdr = csv::Reader::from_reader(input);
    let cols = Columns::new("features", rdr.headers()?);
    let t = cols.require("track_id")?;
    let idx: Vec<usize> = FEATURE_NAMES.iter().map(|n| cols.require(n)).collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut values = [0.0; 8];
        for (slot, (&c, name)) in values.iter_mut().zip(idx.iter().zip(FEATURE_NAMES)) {
            let raw = field(&rec, c);
            *slot = raw.parse().map_err(|_| IngestError::BadRecord {
                source_name: "features",
                record: i + 1,
                reason: format!("invalid {name} `{raw}`"),
            })?;
        }
        out.push(FeatureRow {
            track: field(&rec, t).to_owned(),
            values,
        });
    }
    Ok(out)
}

/// Reads genre annotations, one `track_id,genre` pair per row.
pub fn read_genres<R: Read>(input: R) -> Result<Vec<GenreRow>, IngestError> {
    let mut rdr = csv::Reader::from_reader(input);
    let cols = Columns::new("genres", rdr.headers()?);
    let (t, g) = (cols.require("track_id")?, cols.require("genre")?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let (track, genre) = (field(&rec, t), field(&rec, g));
        if !track.is_empty() && !genre.is_empty() {
            out.push(GenreRow {
                track: track.to_owned(),
                genre: genre.to_owned(),
            });
        }
    }
    Ok(out)
}

/// Size statistics of a merged LastFM dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MergeStats {
    pub events: u64,
    pub users: u64,
    pub artists: u64,
    pub tracks: u64,
    pub genres: u64,
}

#[derive(Debug, Clone)]
pub struct LastfmMerge {
    /// Aggregated play counts, sorted by user then item.
    pub interactions: Vec<Interaction>,
    pub triples: Vec<Triple>,
    pub features: FeatureStore,
    pub stats: MergeStats,
    pub summary: IngestSummary,
}

/// Joins events with features (inner) and genres (left).
///
/// Events of tracks without a valid feature row are dropped and counted.
/// Tempo is min-max scaled over the surviving tracks; the other features must
/// already lie in `[0, 1]`.
pub fn merge_lastfm(
    events: &[ListeningEvent],
    features: &[FeatureRow],
    genres: &[GenreRow],
) -> Result<LastfmMerge, IngestError> {
    let mut summary = IngestSummary::default();
    let tempo = FEATURE_NAMES.len() - 1;

    let mut valid: BTreeMap<&str, [f64; 8]> = BTreeMap::new();
    let mut invalid_rows = 0u64;
    for row in features {
        let ok = row.values.iter().all(|v| v.is_finite())
            && row.values[..tempo].iter().all(|v| (0.0..=1.0).contains(v))
            && row.values[tempo] >= 0.0;
        if ok && !row.track.is_empty() {
            valid.insert(&row.track, row.values);
        } else {
            invalid_rows += 1;
        }
    }
    summary.push("features", invalid_rows, "invalid feature row dropped");

    let played: BTreeSet<&str> = events.iter().map(|e| e.track.as_str()).collect();
    let joined: Vec<&str> = valid.keys().copied().filter(|t| played.contains(t)).collect();
    let (lo, hi) = joined
        .iter()
        .map(|t| valid[t][tempo])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));

    let mut store = FeatureStore::new();
    let mut zero_norm = 0u64;
    for t in &joined {
        let mut values = valid[t];
        values[tempo] = if hi > lo { (values[tempo] - lo) / (hi - lo) } else { 0.0 };
        let v = FeatureVector::new(values).expect("scaled into range");
        if v.norm() == 0.0 {
            zero_norm += 1;
            continue;
        }
        store.insert(track_id(t), v);
    }
    summary.push("features", zero_norm, "zero-norm feature vector dropped");

    let mut counts: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    let mut makers: BTreeSet<(&str, &str)> = BTreeSet::new();
    let mut dropped = 0u64;
    let mut kept = 0u64;
    for e in events {
        if store.get(&track_id(&e.track)).is_err() {
            dropped += 1;
            continue;
        }
        kept += 1;
        *counts.entry((&e.user, &e.track)).or_default() += 1;
        makers.insert((&e.track, &e.artist));
    }
    summary.push("events", kept, "kept");
    summary.push("events", dropped, "track without features dropped");

    let mut triples = Vec::new();
    for &(t, a) in &makers {
        triples.push(Triple::new(track_id(t), EntityKind::Track, "maker", artist_id(a), EntityKind::Artist));
    }
    let surviving: BTreeSet<&str> = makers.iter().map(|&(t, _)| t).collect();
    let mut genre_set = BTreeSet::new();
    let mut orphan_genres = 0u64;
    let mut genre_pairs: BTreeSet<(&str, EntityId)> = BTreeSet::new();
    for g in genres {
        if surviving.contains(g.track.as_str()) {
            genre_pairs.insert((&g.track, genre_id(&g.genre)));
        } else {
            orphan_genres += 1;
        }
    }
    for (t, gid) in genre_pairs {
        genre_set.insert(gid.clone());
        triples.push(Triple::new(track_id(t), EntityKind::Track, "genre", gid, EntityKind::Genre));
    }
    summary.push("genres", orphan_genres, "annotation for unknown track dropped");

    let interactions: Vec<Interaction> = counts
        .iter()
        .map(|(&(u, t), &c)| Interaction::new(u, track_id(t), c))
        .collect();
    let stats = MergeStats {
        events: kept,
        users: counts.keys().map(|(u, _)| *u).collect::<BTreeSet<_>>().len() as u64,
        artists: makers.iter().map(|(_, a)| *a).collect::<BTreeSet<_>>().len() as u64,
        tracks: surviving.len() as u64,
        genres: genre_set.len() as u64,
    };
    // drop feature vectors of tracks that never made it into the catalog
    let features = store
        .sorted()
        .into_iter()
        .filter(|(id, _)| surviving.contains(&id.as_str()[2..]))
        .map(|(id, v)| (id.clone(), *v))
        .collect();
    Ok(LastfmMerge {
        interactions,
        triples,
        features,
        stats,
        summary,
    })
}

/// Seeded uniform sample of `n` users having at least `min_unique` distinct items.
pub fn sample_users(
    interactions: &[Interaction],
    n: usize,
    min_unique: usize,
    seed: u64,
) -> Result<BTreeSet<String>, IngestError> {
    let mut uniques: BTreeMap<&str, BTreeSet<&EntityId>> = BTreeMap::new();
    for it in interactions {
        uniques.entry(&it.user).or_default().insert(&it.item);
    }
    let eligible: Vec<&str> = uniques
        .into_iter()
        .filter(|(_, items)| items.len() >= min_unique)
        .map(|(u, _)| u)
        .collect();
    if n > eligible.len() {
        return Err(IngestError::NotEnoughUsers {
            requested: n,
            eligible: eligible.len(),
            min_unique,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample(&mut rng, eligible.len(), n)
        .into_iter()
        .map(|i| eligible[i].to_owned())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TitleType {
    Movie,
    TvShow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TitleRecord {
    pub show_id: String,
    pub title_type: TitleType,
    pub title: String,
    pub directors: Vec<String>,
    pub cast: Vec<String>,
    pub countries: Vec<String>,
    pub release_year: Option<i32>,
    pub rating: Option<String>,
    pub duration: Option<String>,
    pub genres: Vec<String>,
    pub description: Option<String>,
}

#[derive(Debug, Clone)]
pub struct NetflixCatalog {
    pub titles: Vec<TitleRecord>,
    pub triples: Vec<Triple>,
}

impl NetflixCatalog {
    /// Catalog graph with every title node (even unlinked ones) labeled by title.
    pub fn to_graph(&self) -> Result<CatalogGraph, IngestError> {
        let mut b = CatalogBuilder::new();
        for t in &self.titles {
            let id = EntityId::from(t.show_id.as_str());
            b.add_node(id.clone(), title_kind(t.title_type))?;
            b.set_attr(&id, "title", t.title.as_str())?;
        }
        for t in &self.triples {
            b.add_triple(t.clone())?;
        }
        Ok(b.build())
    }
}

fn title_kind(t: TitleType) -> EntityKind {
    match t {
        TitleType::Movie => EntityKind::Movie,
        TitleType::TvShow => EntityKind::TvShow,
    }
}

fn split_list(cell: &str) -> Vec<String> {
    cell.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

fn non_empty(cell: &str) -> Option<String> {
    let s = cell.trim();
    (!s.is_empty()).then(|| s.to_owned())
}

/// Loads the Netflix titles CSV.
///
/// Required columns: `show_id`, `type`, `title`, `director`, `cast`,
/// `country`, `rating`, `listed_in`. Multi-valued cells are split on commas;
/// empty cells yield no edges.
pub fn load_netflix<R: Read>(input: R) -> Result<NetflixCatalog, IngestError> {
    let mut rdr = csv::Reader::from_reader(input);
    let cols = Columns::new("netflix", rdr.headers()?);
    let show = cols.require("show_id")?;
    let kind = cols.require("type")?;
    let title = cols.require("title")?;
    let director = cols.require("director")?;
    let cast = cols.require("cast")?;
    let country = cols.require("country")?;
    let rating = cols.require("rating")?;
    let listed_in = cols.require("listed_in")?;
    let year = cols.optional("release_year");
    let duration = cols.optional("duration");
    let description = cols.optional("description");

    let mut seen = BTreeSet::new();
    let mut titles = Vec::new();
    let mut triples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let record = i + 1;
        let bad = |reason: String| IngestError::BadRecord {
            source_name: "netflix",
            record,
            reason,
        };
        let show_id = field(&rec, show).to_owned();
        if show_id.is_empty() {
            return Err(bad("empty show_id".into()));
        }
        if !seen.insert(show_id.clone()) {
            return Err(bad(format!("duplicate show_id `{show_id}`")));
        }
        let title_type = match field(&rec, kind) {
            "Movie" => TitleType::Movie,
            "TV Show" => TitleType::TvShow,
            other => return Err(bad(format!("unknown type `{other}`"))),
        };
        let release_year = match year.map(|c| field(&rec, c)).filter(|s| !s.is_empty()) {
            Some(s) => Some(s.parse().map_err(|_| bad(format!("invalid release_year `{s}`")))?),
            None => None,
        };
        let record = TitleRecord {
            show_id,
            title_type,
            title: field(&rec, title).to_owned(),
            directors: split_list(field(&rec, director)),
            cast: split_list(field(&rec, cast)),
            countries: split_list(field(&rec, country)),
            release_year,
            rating: non_empty(field(&rec, rating)),
            duration: duration.and_then(|c| non_empty(field(&rec, c))),
            genres: split_list(field(&rec, listed_in)),
            description: description.and_then(|c| non_empty(field(&rec, c))),
        };
        let tk = title_kind(record.title_type);
        let sid = record.show_id.as_str();
        for d in &record.directors {
            triples.push(Triple::new(format!("person:{d}"), EntityKind::Person, "directs", sid, tk.clone()));
        }
        for a in &record.cast {
            triples.push(Triple::new(format!("person:{a}"), EntityKind::Person, "acts_on", sid, tk.clone()));
        }
        for c in &record.countries {
            triples.push(Triple::new(sid, tk.clone(), "country", format!("country:{c}"), EntityKind::Country));
        }
        for g in &record.genres {
            triples.push(Triple::new(sid, tk.clone(), "genre", format!("genre:{g}"), EntityKind::Genre));
        }
        if let Some(r) = &record.rating {
            triples.push(Triple::new(sid, tk.clone(), "rating", format!("rating:{r}"), EntityKind::Rating));
        }
        titles.push(record);
    }
    Ok(NetflixCatalog { titles, triples })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticProfileConfig {
    pub n_profiles: usize,
    pub min_items: usize,
    pub max_items: usize,
    pub seed: u64,
}

impl SyntheticProfileConfig {
    pub fn validate(&self, recommendable: usize) -> Result<(), IngestError> {
        if self.min_items < 1 {
            return Err(IngestError::InvalidProfileConfig("min_items must be at least 1".into()));
        }
        if self.min_items > self.max_items {
            return Err(IngestError::InvalidProfileConfig(format!(
                "min_items {} exceeds max_items {}",
                self.min_items, self.max_items
            )));
        }
        if self.max_items > recommendable {
            return Err(IngestError::InvalidProfileConfig(format!(
                "max_items {} exceeds the {recommendable} recommendable items",
                self.max_items
            )));
        }
        Ok(())
    }
}

/// Random histories over the catalog's recommendable items: sizes uniform in
/// `[min_items, max_items]`, items drawn without replacement, each history sorted.
pub fn generate_profiles(
    catalog: &CatalogGraph,
    cfg: &SyntheticProfileConfig,
) -> Result<Vec<Vec<EntityId>>, IngestError> {
    cfg.validate(catalog.recommendable_count())?;
    let mut pool: Vec<&EntityId> = catalog.recommendable().collect();
    pool.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.n_profiles);
    for _ in 0..cfg.n_profiles {
        let size = rng.gen_range(cfg.min_items..=cfg.max_items);
        let mut items: Vec<EntityId> =
            sample(&mut rng, pool.len(), size).into_iter().map(|i| pool[i].clone()).collect();
        items.sort();
        out.push(items);
    }
    Ok(out)
}

/// Stable per-user seed derived from a run seed (FNV-1a over the user id).
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in key.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Shuffles `history` under `seed` and splits it into train and test.
///
/// Train receives `round_half_up(ratio * n)` items, adjusted so both parts
/// are non-empty whenever `n >= 2`. A single item goes to train.
pub fn split_interactions(
    history: &[EntityId],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<EntityId>, Vec<EntityId>), IngestError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(IngestError::InvalidRatio(ratio));
    }
    let n = history.len();
    let mut items = history.to_vec();
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    if n < 2 {
        log::warn!("history of {n} item(s) cannot be split; test set left empty");
        return Ok((items, Vec::new()));
    }
    let train_n = ((ratio * n as f64 + 0.5).floor() as usize).clamp(1, n - 1);
    let test = items.split_off(train_n);
    Ok((items, test))
}
