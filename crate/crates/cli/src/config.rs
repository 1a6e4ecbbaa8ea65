//! Run configuration: a TOML document merged with command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use kgrank_core::ingest::SyntheticProfileConfig;
use kgrank_core::synthetic::TwoClusterConfig;
use kgrank_core::{MetricKind, NeighborhoodMode, SortOrder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_OUTPUT: &str = "kgrank-out";
pub const DEFAULT_TOP_N: usize = 100;
pub const DEFAULT_SPLIT_RATIO: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Lastfm,
    Netflix,
    Synthetic,
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lastfm" => Ok(DatasetKind::Lastfm),
            "netflix" => Ok(DatasetKind::Netflix),
            "synthetic" => Ok(DatasetKind::Synthetic),
            other => Err(format!("unknown dataset `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecommenderKind {
    External,
    Baseline,
    Itemknn,
    Popularity,
}

impl FromStr for RecommenderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "external" => Ok(RecommenderKind::External),
            "baseline" => Ok(RecommenderKind::Baseline),
            "itemknn" | "item_knn" | "knn" => Ok(RecommenderKind::Itemknn),
            "popularity" | "pop" => Ok(RecommenderKind::Popularity),
            other => Err(format!("unknown recommender `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawPaths {
    pub events: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub genres: Option<PathBuf>,
    pub netflix: Option<PathBuf>,
    pub recommendations: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawSample {
    pub users: Option<usize>,
    pub min_unique: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawProfiles {
    pub n_profiles: Option<usize>,
    pub min_items: Option<usize>,
    pub max_items: Option<usize>,
    pub split_ratio: Option<f64>,
}

/// Unvalidated configuration. Every field is optional so that a file and a
/// set of flags can be layered before validation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawConfig {
    pub dataset: Option<String>,
    pub output: Option<PathBuf>,
    pub recommender: Option<String>,
    pub metrics: Option<Vec<String>>,
    pub orders: Option<Vec<String>>,
    pub mode: Option<String>,
    pub top_n: Option<usize>,
    pub eval_k: Option<usize>,
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
    pub knn_k: Option<usize>,
    pub paths: RawPaths,
    pub sample: RawSample,
    pub profiles: RawProfiles,
    pub synthetic: Option<TwoClusterConfig>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config `{path}`: {source}")]
    Parse {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
    #[error("invalid configuration:\n{}", list(.0))]
    Invalid(Vec<Finding>),
}

fn list(findings: &[Finding]) -> String {
    findings.iter().map(|f| format!("  - {f}")).collect::<Vec<_>>().join("\n")
}

/// One validation problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub field: String,
    pub message: String,
}

impl Finding {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Finding {
            field: field.to_owned(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

impl RawConfig {
    pub fn from_toml_str(s: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(s).map_err(|e| ConfigError::Parse {
            path: path.to_owned(),
            source: Box::new(e),
        })
    }

    /// Reads a TOML file; relative paths inside are resolved against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        let mut raw = Self::from_toml_str(&text, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        };
        rebase(&mut raw.output);
        rebase(&mut raw.paths.events);
        rebase(&mut raw.paths.features);
        rebase(&mut raw.paths.genres);
        rebase(&mut raw.paths.netflix);
        rebase(&mut raw.paths.recommendations);
        Ok(raw)
    }

    /// Layers `flags` over `self`; any value set in `flags` wins.
    pub fn overlay(self, flags: RawConfig) -> RawConfig {
        RawConfig {
            dataset: pick(flags.dataset, self.dataset),
            output: pick(flags.output, self.output),
            recommender: pick(flags.recommender, self.recommender),
            metrics: pick(flags.metrics, self.metrics),
            orders: pick(flags.orders, self.orders),
            mode: pick(flags.mode, self.mode),
            top_n: pick(flags.top_n, self.top_n),
            eval_k: pick(flags.eval_k, self.eval_k),
            seed: pick(flags.seed, self.seed),
            parallelism: pick(flags.parallelism, self.parallelism),
            knn_k: pick(flags.knn_k, self.knn_k),
            paths: RawPaths {
                events: pick(flags.paths.events, self.paths.events),
                features: pick(flags.paths.features, self.paths.features),
                genres: pick(flags.paths.genres, self.paths.genres),
                netflix: pick(flags.paths.netflix, self.paths.netflix),
                recommendations: pick(flags.paths.recommendations, self.paths.recommendations),
            },
            sample: RawSample {
                users: pick(flags.sample.users, self.sample.users),
                min_unique: pick(flags.sample.min_unique, self.sample.min_unique),
            },
            profiles: RawProfiles {
                n_profiles: pick(flags.profiles.n_profiles, self.profiles.n_profiles),
                min_items: pick(flags.profiles.min_items, self.profiles.min_items),
                max_items: pick(flags.profiles.max_items, self.profiles.max_items),
                split_ratio: pick(flags.profiles.split_ratio, self.profiles.split_ratio),
            },
            synthetic: pick(flags.synthetic, self.synthetic),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DatasetPaths {
    pub events: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub genres: Option<PathBuf>,
    pub netflix: Option<PathBuf>,
    pub recommendations: Option<PathBuf>,
}

impl DatasetPaths {
    /// Input files in a fixed order, for hashing.
    pub fn inputs(&self) -> Vec<(&'static str, &Path)> {
        [
            ("events", &self.events),
            ("features", &self.features),
            ("genres", &self.genres),
            ("netflix", &self.netflix),
            ("recommendations", &self.recommendations),
        ]
        .into_iter()
        .filter_map(|(k, p)| p.as_deref().map(|p| (k, p)))
        .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleConfig {
    pub users: usize,
    pub min_unique: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub dataset: Option<DatasetKind>,
    pub paths: DatasetPaths,
    #[serde(skip)]
    pub output: PathBuf,
    pub recommender: RecommenderKind,
    pub metrics: Vec<MetricKind>,
    pub orders: Vec<SortOrder>,
    pub mode: NeighborhoodMode,
    pub top_n: usize,
    pub eval_k: usize,
    pub seed: u64,
    /// Worker threads; 0 means one per available core.
    #[serde(skip)]
    pub parallelism: usize,
    pub knn_k: usize,
    pub sample: Option<SampleConfig>,
    pub profiles: SyntheticProfileConfig,
    pub split_ratio: f64,
    pub synthetic: TwoClusterConfig,
}

impl RunConfig {
    /// Every (metric, order) pair in configuration order.
    pub fn combinations(&self) -> Vec<(MetricKind, SortOrder)> {
        self.metrics
            .iter()
            .flat_map(|&m| self.orders.iter().map(move |&o| (m, o)))
            .collect()
    }
}

/// Which checks apply. Stages after ingestion read prepared artifacts and
/// do not need the raw dataset inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Requirements {
    pub inputs: bool,
    pub recommendations: bool,
}

impl Requirements {
    pub const ALL: Requirements = Requirements {
        inputs: true,
        recommendations: true,
    };
}

fn parse_list<T>(
    field: &str,
    values: Option<&[String]>,
    default: &[T],
    findings: &mut Vec<Finding>,
) -> Vec<T>
where
    T: FromStr<Err = String> + Copy + PartialEq,
{
    let Some(values) = values else {
        return default.to_vec();
    };
    if values.is_empty() {
        findings.push(Finding::new(field, "must list at least one entry"));
    }
    let mut out = Vec::new();
    for v in values {
        match v.parse::<T>() {
            Ok(x) if out.contains(&x) => findings.push(Finding::new(field, format!("duplicate entry `{v}`"))),
            Ok(x) => out.push(x),
            Err(e) => findings.push(Finding::new(field, e)),
        }
    }
    out
}

fn parse_one<T: FromStr<Err = String>>(
    field: &str,
    value: Option<&str>,
    findings: &mut Vec<Finding>,
) -> Option<T> {
    match value.map(str::parse::<T>) {
        Some(Ok(x)) => Some(x),
        Some(Err(e)) => {
            findings.push(Finding::new(field, e));
            None
        }
        None => None,
    }
}

fn require_file(field: &str, path: &Option<PathBuf>, findings: &mut Vec<Finding>) {
    match path {
        None => findings.push(Finding::new(field, "required for this dataset")),
        Some(p) if !p.is_file() => {
            findings.push(Finding::new(field, format!("file `{}` does not exist", p.display())))
        }
        Some(_) => {}
    }
}

/// Validates and resolves a configuration, reporting every problem at once.
pub fn resolve_config(raw: &RawConfig, req: Requirements) -> Result<RunConfig, ConfigError> {
    let mut findings = Vec::new();
    let f = &mut findings;

    let dataset: Option<DatasetKind> = parse_one("dataset", raw.dataset.as_deref(), f);
    if req.inputs && raw.dataset.is_none() {
        f.push(Finding::new("dataset", "required (lastfm, netflix or synthetic)"));
    }
    let recommender = parse_one("recommender", raw.recommender.as_deref(), f).unwrap_or(
        match dataset {
            Some(DatasetKind::Lastfm) => RecommenderKind::Itemknn,
            _ => RecommenderKind::Popularity,
        },
    );
    let metrics = parse_list("metrics", raw.metrics.as_deref(), &MetricKind::ALL, f);
    let orders = parse_list(
        "orders",
        raw.orders.as_deref(),
        &[SortOrder::Ascending, SortOrder::Descending],
        f,
    );
    let mode = parse_one("mode", raw.mode.as_deref(), f).unwrap_or_default();

    let top_n = raw.top_n.unwrap_or(DEFAULT_TOP_N);
    if top_n == 0 {
        f.push(Finding::new("top_n", "must be at least 1"));
    }
    let eval_k = raw.eval_k.unwrap_or(kgrank_core::eval::DEFAULT_EVAL_K);
    if eval_k == 0 {
        f.push(Finding::new("eval_k", "must be at least 1"));
    }
    let knn_k = raw.knn_k.unwrap_or(kgrank_core::recsys::ItemKnnModel::DEFAULT_K);
    if knn_k == 0 {
        f.push(Finding::new("knn_k", "must be at least 1"));
    }
    let seed = raw.seed.unwrap_or(0);

    let sample = match (raw.sample.users, raw.sample.min_unique) {
        (None, None) => None,
        (users, min_unique) => {
            let s = SampleConfig {
                users: users.unwrap_or(0),
                min_unique: min_unique.unwrap_or(1),
            };
            if users.is_none() {
                f.push(Finding::new("sample.users", "required when sampling"));
            } else if s.users == 0 {
                f.push(Finding::new("sample.users", "must be at least 1"));
            }
            Some(s)
        }
    };

    let profiles = SyntheticProfileConfig {
        n_profiles: raw.profiles.n_profiles.unwrap_or(88),
        min_items: raw.profiles.min_items.unwrap_or(5),
        max_items: raw.profiles.max_items.unwrap_or(55),
        seed,
    };
    if profiles.min_items < 1 {
        f.push(Finding::new("profiles.min_items", "must be at least 1"));
    }
    if profiles.min_items > profiles.max_items {
        f.push(Finding::new(
            "profiles",
            format!("min_items {} exceeds max_items {}", profiles.min_items, profiles.max_items),
        ));
    }
    let split_ratio = raw.profiles.split_ratio.unwrap_or(DEFAULT_SPLIT_RATIO);
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        f.push(Finding::new("profiles.split_ratio", "must lie strictly between 0 and 1"));
    }

    let synthetic = TwoClusterConfig {
        seed,
        ..raw.synthetic.unwrap_or_default()
    };
    if dataset == Some(DatasetKind::Synthetic) {
        let s = &synthetic;
        if s.tracks_per_cluster == 0 || s.users == 0 {
            f.push(Finding::new("synthetic", "needs at least one track per cluster and one user"));
        }
        if s.min_history < 1 || s.min_history > s.max_history || s.max_history > s.tracks_per_cluster {
            f.push(Finding::new(
                "synthetic",
                "history sizes must satisfy 1 <= min_history <= max_history <= tracks_per_cluster",
            ));
        }
        if !(0.0..=1.0).contains(&s.home_affinity) {
            f.push(Finding::new("synthetic.home_affinity", "must lie in [0, 1]"));
        }
    }

    let p = &raw.paths;
    if req.inputs {
        match dataset {
            Some(DatasetKind::Lastfm) => {
                require_file("paths.events", &p.events, f);
                require_file("paths.features", &p.features, f);
                require_file("paths.genres", &p.genres, f);
            }
            Some(DatasetKind::Netflix) => require_file("paths.netflix", &p.netflix, f),
            _ => {}
        }
    }
    if req.recommendations && recommender == RecommenderKind::External {
        require_file("paths.recommendations", &p.recommendations, f);
    }

    if !findings.is_empty() {
        return Err(ConfigError::Invalid(findings));
    }
    Ok(RunConfig {
        dataset,
        paths: DatasetPaths {
            events: p.events.clone(),
            features: p.features.clone(),
            genres: p.genres.clone(),
            netflix: p.netflix.clone(),
            recommendations: p.recommendations.clone(),
        },
        output: raw.output.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT)),
        recommender,
        metrics,
        orders,
        mode,
        top_n,
        eval_k,
        seed,
        parallelism: raw.parallelism.unwrap_or(0),
        knn_k,
        sample,
        profiles,
        split_ratio,
        synthetic,
    })
}

/// All findings for `raw`; empty when the configuration is valid.
pub fn validate_config(raw: &RawConfig, req: Requirements) -> Vec<Finding> {
    match resolve_config(raw, req) {
        Err(ConfigError::Invalid(findings)) => findings,
        _ => Vec::new(),
    }
}
