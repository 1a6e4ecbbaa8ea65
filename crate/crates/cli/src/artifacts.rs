//! Output directory layout and the prepared-data file formats.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kgrank_core::eval::{FeatureStore, FeatureVector, FEATURE_NAMES};
use kgrank_core::graph::{read_export, write_export};
use kgrank_core::recsys::{load_external_recommendations, Interaction};
use kgrank_core::{CatalogGraph, EntityId, MetricKind, RecommendationList, SortOrder};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const STALE_MARKER: &str = "RUN_INCOMPLETE";

/// Paths of every artifact below one run directory.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn stale_marker(&self) -> PathBuf {
        self.root.join(STALE_MARKER)
    }

    pub fn ingest_summary(&self) -> PathBuf {
        self.root.join("ingest_summary.jsonl")
    }

    pub fn prepared(&self, name: &str) -> PathBuf {
        self.root.join("prepared").join(name)
    }

    pub fn catalog_nodes(&self) -> PathBuf {
        self.prepared("catalog_nodes.tsv")
    }

    pub fn catalog_edges(&self) -> PathBuf {
        self.prepared("catalog_edges.tsv")
    }

    pub fn histories(&self) -> PathBuf {
        self.prepared("histories.tsv")
    }

    pub fn held_out(&self) -> PathBuf {
        self.prepared("test.tsv")
    }

    pub fn interactions(&self) -> PathBuf {
        self.prepared("interactions.tsv")
    }

    pub fn features(&self) -> PathBuf {
        self.prepared("features.csv")
    }

    pub fn base_run(&self) -> PathBuf {
        self.root.join("base.run")
    }

    pub fn reranked_run(&self, metric: MetricKind, order: SortOrder) -> PathBuf {
        self.root.join("reranked").join(format!("{metric}_{order}.run"))
    }

    pub fn reranked_detail(&self, metric: MetricKind, order: SortOrder) -> PathBuf {
        self.root.join("reranked").join(format!("{metric}_{order}.tsv"))
    }

    pub fn qrels(&self) -> PathBuf {
        self.root.join("trec").join("qrels.txt")
    }

    pub fn trec_run(&self, tag: &str) -> PathBuf {
        self.root.join("trec").join(format!("{tag}.txt"))
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.csv")
    }

    pub fn report_summary(&self) -> PathBuf {
        self.root.join("report_summary.csv")
    }
}

/// Creates `path` (and its parent directory) and hands a buffered writer to `f`.
pub fn write_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(file))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut r = open(path)?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_catalog(layout: &Layout, g: &CatalogGraph) -> Result<()> {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    write_export(g, &mut nodes, &mut edges)?;
    write_file(&layout.catalog_nodes(), |w| Ok(w.write_all(&nodes)?))?;
    write_file(&layout.catalog_edges(), |w| Ok(w.write_all(&edges)?))
}

pub fn read_catalog(layout: &Layout) -> Result<CatalogGraph> {
    let g = read_export(open(&layout.catalog_nodes())?, open(&layout.catalog_edges())?)
        .with_context(|| format!("reading catalog from {}", layout.root().join("prepared").display()))?;
    Ok(g)
}

pub type Histories = BTreeMap<String, Vec<EntityId>>;

/// `user\titem` lines, sorted.
pub fn write_histories(path: &Path, histories: &Histories) -> Result<()> {
    write_file(path, |w| {
        for (user, items) in histories {
            for item in items {
                writeln!(w, "{user}\t{item}")?;
            }
        }
        Ok(())
    })
}

pub fn read_histories(path: &Path) -> Result<Histories> {
    let mut out: Histories = BTreeMap::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let Some((user, item)) = line.split_once('\t') else {
            bail!("{}:{}: expected `user\\titem`", path.display(), i + 1);
        };
        out.entry(user.to_owned()).or_default().push(EntityId::from(item));
    }
    for items in out.values_mut() {
        items.sort();
        items.dedup();
    }
    Ok(out)
}

/// `user\titem\tcount` lines.
pub fn write_interactions(path: &Path, interactions: &[Interaction]) -> Result<()> {
    write_file(path, |w| {
        for it in interactions {
            writeln!(w, "{}\t{}\t{}", it.user, it.item, it.count)?;
        }
        Ok(())
    })
}

pub fn read_interactions(path: &Path) -> Result<Vec<Interaction>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        let [user, item, count] = parts[..] else {
            bail!("{}:{}: expected `user\\titem\\tcount`", path.display(), i + 1);
        };
        let count: u64 = count
            .parse()
            .ok()
            .filter(|&c| c >= 1)
            .with_context(|| format!("{}:{}: invalid count `{count}`", path.display(), i + 1))?;
        out.push(Interaction::new(user, item, count));
    }
    Ok(out)
}

/// `item_id` plus the eight (already scaled) features.
pub fn write_features(path: &Path, store: &FeatureStore) -> Result<()> {
    write_file(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["item_id"];
        header.extend(FEATURE_NAMES);
        csv.write_record(&header)?;
        for (id, v) in store.sorted() {
            let mut rec = vec![id.to_string()];
            rec.extend(v.values().iter().map(|x| x.to_string()));
            csv.write_record(&rec)?;
        }
        csv.flush()?;
        Ok(())
    })
}

pub fn read_features(path: &Path) -> Result<FeatureStore> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let mut store = FeatureStore::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 9 {
            bail!("{}: record {}: expected 9 fields", path.display(), i + 1);
        }
        let mut values = [0.0; 8];
        for (slot, raw) in values.iter_mut().zip(rec.iter().skip(1)) {
            *slot = raw
                .parse()
                .with_context(|| format!("{}: record {}: invalid value `{raw}`", path.display(), i + 1))?;
        }
        let v = FeatureVector::new(values)
            .with_context(|| format!("{}: record {}", path.display(), i + 1))?;
        store.insert(EntityId::from(&rec[0]), v);
    }
    Ok(store)
}

pub fn read_run(path: &Path) -> Result<BTreeMap<String, RecommendationList>> {
    load_external_recommendations(open(path)?).with_context(|| format!("reading {}", path.display()))
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, InputRecord>,
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

/// Hashes every regular file below the run directory except the manifest
/// and the stale marker, keyed by relative path with `/` separators.
pub fn hash_artifacts(layout: &Layout) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![layout.root().to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            if path == layout.manifest() || path == layout.stale_marker() {
                continue;
            }
            let rel = path
                .strip_prefix(layout.root())
                .expect("below root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            out.insert(rel, sha256_file(&path)?);
        }
    }
    Ok(out)
}
