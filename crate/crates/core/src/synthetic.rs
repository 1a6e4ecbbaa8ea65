//! Seeded two-cluster music catalog with acoustically separated clusters.
//!
//! Each cluster holds `tracks_per_cluster` tracks. A track is made by one of
//! the cluster's artists (five tracks per artist), belongs to the cluster's
//! umbrella genre and to one of five subgenres. Acoustic features are noisy
//! copies of a per-cluster center. Users draw most of their history from a
//! home cluster with Zipf-like item popularity.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eval::{FeatureStore, FeatureVector};
use crate::graph::{build_catalog, CatalogGraph, EntityId, EntityKind, Triple};
use crate::recsys::Interaction;

const CENTERS: [[f64; 8]; 2] = [
    [0.8, 0.8, 0.1, 0.1, 0.1, 0.2, 0.8, 0.7],
    [0.2, 0.2, 0.1, 0.9, 0.8, 0.2, 0.2, 0.2],
];

const TRACKS_PER_ARTIST: usize = 5;
const SUBGENRES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoClusterConfig {
    pub tracks_per_cluster: usize,
    pub users: usize,
    /// Users `0..home_zero_users` live in cluster 0, the rest in cluster 1.
    pub home_zero_users: usize,
    pub min_history: usize,
    pub max_history: usize,
    /// Probability that a history item comes from the home cluster.
    pub home_affinity: f64,
    pub zipf_exponent: f64,
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for TwoClusterConfig {
    fn default() -> Self {
        TwoClusterConfig {
            tracks_per_cluster: 100,
            users: 30,
            home_zero_users: 24,
            min_history: 15,
            max_history: 30,
            home_affinity: 0.9,
            zipf_exponent: 0.8,
            feature_noise: 0.05,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub catalog: CatalogGraph,
    pub triples: Vec<Triple>,
    pub features: FeatureStore,
    /// Sorted, duplicate-free history per user.
    pub histories: BTreeMap<String, Vec<EntityId>>,
}

impl SyntheticDataset {
    /// One interaction with count 1 per history entry.
    pub fn interactions(&self) -> Vec<Interaction> {
        self.histories
            .iter()
            .flat_map(|(u, h)| h.iter().map(move |i| Interaction::new(u, i.clone(), 1)))
            .collect()
    }

    pub fn cluster_of(&self, track: &EntityId) -> Option<usize> {
        track_cluster(track.as_str())
    }
}

fn track_cluster(id: &str) -> Option<usize> {
    id.strip_prefix('t')?.split_once('_').and_then(|(c, _)| c.parse().ok())
}

fn track_name(cluster: usize, j: usize) -> String {
    format!("t{cluster}_{j:03}")
}

pub fn two_cluster_dataset(cfg: &TwoClusterConfig) -> SyntheticDataset {
    assert!(cfg.tracks_per_cluster > 0, "empty clusters");
    assert!(cfg.min_history >= 1 && cfg.min_history <= cfg.max_history, "invalid history range");
    assert!(cfg.max_history <= cfg.tracks_per_cluster, "history larger than a cluster");

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut triples = Vec::new();
    let mut features = FeatureStore::new();
    for (c, center) in CENTERS.iter().enumerate() {
        for j in 0..cfg.tracks_per_cluster {
            let t = track_name(c, j);
            let artist = format!("a{c}_{:02}", j / TRACKS_PER_ARTIST);
            triples.push(Triple::new(t.as_str(), EntityKind::Track, "maker", artist, EntityKind::Artist));
            triples.push(Triple::new(t.as_str(), EntityKind::Track, "genre", format!("U{c}"), EntityKind::Genre));
            triples.push(Triple::new(
                t.as_str(),
                EntityKind::Track,
                "genre",
                format!("g{c}_{}", j % SUBGENRES),
                EntityKind::Genre,
            ));
            let mut v = *center;
            for x in &mut v {
                *x = (*x + rng.gen_range(-cfg.feature_noise..=cfg.feature_noise)).clamp(0.01, 1.0);
            }
            features.insert(EntityId::new(t), FeatureVector::new(v).expect("clamped into range"));
        }
    }
    let catalog = build_catalog(triples.clone()).expect("generated triples are consistent");

    let weights: Vec<f64> = (0..cfg.tracks_per_cluster)
        .map(|j| 1.0 / ((j + 1) as f64).powf(cfg.zipf_exponent))
        .collect();
    let zipf = WeightedIndex::new(&weights).expect("positive weights");
    let mut histories = BTreeMap::new();
    for u in 0..cfg.users {
        let home = usize::from(u >= cfg.home_zero_users);
        let size = rng.gen_range(cfg.min_history..=cfg.max_history);
        let mut h = std::collections::BTreeSet::new();
        while h.len() < size {
            let c = if rng.gen_bool(cfg.home_affinity) { home } else { 1 - home };
            h.insert(EntityId::new(track_name(c, zipf.sample(&mut rng))));
        }
        histories.insert(format!("u{u:02}"), h.into_iter().collect());
    }
    SyntheticDataset {
        catalog,
        triples,
        features,
        histories,
    }
}
