//! Pipeline stages: ingest, recommend, rerank, evaluate.
//!
//! Each stage reads the artifacts of the previous one from the run
//! directory, so stages can be re-run individually.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;

use anyhow::{anyhow, bail, Context, Result};
use kgrank_core::eval::{
    emit_report, emit_summary, ild, ndcg_at_k, unexpectedness, write_qrels, write_trec_run,
    EvalRow, FeatureStore,
};
use kgrank_core::graph::{build_catalog, induce_profile_subgraph};
use kgrank_core::ingest::{
    derive_seed, generate_profiles, load_netflix, merge_lastfm, read_events, read_features,
    read_genres, sample_users, split_interactions, IngestSummary,
};
use kgrank_core::netmetrics::compute_metric_with;
use kgrank_core::recsys::{
    recommend, scale_ratings, write_run, BaselineModel, BaselineParams, Interaction, ItemKnnModel,
    PopularityModel, Predictor,
};
use kgrank_core::rerank::{rerank_with_baseline, RerankConfig};
use kgrank_core::synthetic::two_cluster_dataset;
use kgrank_core::{CatalogGraph, EntityId, RankedItem, RecommendationList, SortOrder};
use rayon::prelude::*;

use crate::artifacts::{self, Histories, InputRecord, Layout, Manifest};
use crate::config::{DatasetKind, RecommenderKind, RunConfig};

/// Label of the unmodified base list in reports and trec files.
pub const BASE_LABEL: &str = "base";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Recommend,
    Rerank,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Ingest, Stage::Recommend, Stage::Rerank, Stage::Evaluate];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Recommend => "recommend",
            Stage::Rerank => "rerank",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Runs `stages` in order inside the configured thread pool.
///
/// A stale marker is written first and only removed after every stage and
/// the manifest succeeded, so a failed run leaves it behind.
pub fn execute(cfg: &RunConfig, stages: &[Stage], command: &str) -> Result<()> {
    let layout = Layout::new(&cfg.output);
    fs::create_dir_all(layout.root())
        .with_context(|| format!("creating {}", layout.root().display()))?;
    fs::write(layout.stale_marker(), format!("{command}\n"))
        .with_context(|| format!("writing {}", layout.stale_marker().display()))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .context("building thread pool")?;
    pool.install(|| -> Result<()> {
        for &stage in stages {
            log::info!("stage {stage}: start");
            run_stage(cfg, &layout, stage).with_context(|| format!("stage {stage} failed"))?;
            log::info!("stage {stage}: done");
        }
        Ok(())
    })?;

    write_manifest(cfg, &layout, command).context("writing manifest")?;
    fs::remove_file(layout.stale_marker())
        .with_context(|| format!("removing {}", layout.stale_marker().display()))?;
    Ok(())
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<()> {
    execute(cfg, &Stage::ALL, "run")
}

fn run_stage(cfg: &RunConfig, layout: &Layout, stage: Stage) -> Result<()> {
    match stage {
        Stage::Ingest => ingest(cfg, layout),
        Stage::Recommend => recommend_stage(cfg, layout),
        Stage::Rerank => rerank_stage(cfg, layout),
        Stage::Evaluate => evaluate_stage(cfg, layout),
    }
}

fn clear_dir(path: &std::path::Path) -> Result<()> {
    if path.is_dir() {
        fs::remove_dir_all(path).with_context(|| format!("removing {}", path.display()))?;
    }
    Ok(())
}

/// Output of the ingest stage before it is written out.
#[derive(Debug)]
pub struct Prepared {
    pub catalog: CatalogGraph,
    pub histories: Histories,
    pub held_out: Option<Histories>,
    pub interactions: Vec<Interaction>,
    pub features: Option<FeatureStore>,
    pub summary: IngestSummary,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    match cfg.dataset {
        Some(DatasetKind::Lastfm) => prepare_lastfm(cfg),
        Some(DatasetKind::Netflix) => prepare_netflix(cfg),
        Some(DatasetKind::Synthetic) => Ok(prepare_synthetic(cfg)),
        None => bail!("no dataset configured"),
    }
}

fn required<'a>(path: &'a Option<std::path::PathBuf>, name: &str) -> Result<&'a std::path::Path> {
    path.as_deref().ok_or_else(|| anyhow!("paths.{name} is not set"))
}

fn prepare_lastfm(cfg: &RunConfig) -> Result<Prepared> {
    let (ep, fp, gp) = (
        required(&cfg.paths.events, "events")?,
        required(&cfg.paths.features, "features")?,
        required(&cfg.paths.genres, "genres")?,
    );
    // the three sources are independent, so parse them concurrently
    let (events, (features, genres)) = rayon::join(
        || read_events(artifacts::open(ep)?).with_context(|| format!("reading {}", ep.display())),
        || {
            rayon::join(
                || read_features(artifacts::open(fp)?).with_context(|| format!("reading {}", fp.display())),
                || read_genres(artifacts::open(gp)?).with_context(|| format!("reading {}", gp.display())),
            )
        },
    );
    let merged = merge_lastfm(&events?, &features?, &genres?)?;
    let mut summary = merged.summary;
    let s = merged.stats;
    for (name, v) in [
        ("events", s.events),
        ("users", s.users),
        ("artists", s.artists),
        ("tracks", s.tracks),
        ("genres", s.genres),
    ] {
        summary.push("stats", v, name);
    }

    let mut interactions = merged.interactions;
    if let Some(sample) = cfg.sample {
        let users = sample_users(&interactions, sample.users, sample.min_unique, cfg.seed)?;
        let before = interactions.len();
        interactions.retain(|it| users.contains(&it.user));
        summary.push("sample", users.len() as u64, "users kept");
        summary.push("sample", (before - interactions.len()) as u64, "interactions of unsampled users dropped");
    }
    let mut histories = Histories::new();
    for it in &interactions {
        histories.entry(it.user.clone()).or_default().push(it.item.clone());
    }
    let catalog = build_catalog(merged.triples)?;
    Ok(Prepared {
        catalog,
        histories,
        held_out: None,
        interactions,
        features: Some(merged.features),
        summary,
    })
}

fn prepare_netflix(cfg: &RunConfig) -> Result<Prepared> {
    let path = required(&cfg.paths.netflix, "netflix")?;
    let netflix = load_netflix(artifacts::open(path)?).with_context(|| format!("reading {}", path.display()))?;
    let catalog = netflix.to_graph()?;
    let mut summary = IngestSummary::default();
    summary.push("netflix", netflix.titles.len() as u64, "titles");
    summary.push("netflix", netflix.triples.len() as u64, "triples");

    let profiles = generate_profiles(&catalog, &cfg.profiles)?;
    let width = profiles.len().to_string().len().max(3);
    let mut histories = Histories::new();
    let mut held_out = Histories::new();
    let mut interactions = Vec::new();
    for (i, items) in profiles.into_iter().enumerate() {
        let user = format!("p{:0width$}", i + 1);
        let (mut train, mut test) = split_interactions(&items, cfg.split_ratio, derive_seed(cfg.seed, &user))?;
        train.sort();
        test.sort();
        interactions.extend(train.iter().map(|it| Interaction::new(user.as_str(), it.clone(), 1)));
        held_out.insert(user.clone(), test);
        histories.insert(user, train);
    }
    summary.push("profiles", histories.len() as u64, "generated");
    Ok(Prepared {
        catalog,
        histories,
        held_out: Some(held_out),
        interactions,
        features: None,
        summary,
    })
}

fn prepare_synthetic(cfg: &RunConfig) -> Prepared {
    let data = two_cluster_dataset(&cfg.synthetic);
    let mut summary = IngestSummary::default();
    summary.push("synthetic", data.catalog.recommendable_count() as u64, "tracks");
    summary.push("synthetic", data.histories.len() as u64, "users");
    let interactions = data.interactions();
    Prepared {
        catalog: data.catalog,
        histories: data.histories,
        held_out: None,
        interactions,
        features: Some(data.features),
        summary,
    }
}

fn ingest(cfg: &RunConfig, layout: &Layout) -> Result<()> {
    let mut p = prepare(cfg)?;
    p.summary.push("catalog", p.catalog.node_count() as u64, "nodes");
    p.summary.push("catalog", p.catalog.edge_count() as u64, "edges");
    p.summary.push("catalog", p.catalog.recommendable_count() as u64, "recommendable items");

    clear_dir(&layout.root().join("prepared"))?;
    artifacts::write_catalog(layout, &p.catalog)?;
    artifacts::write_histories(&layout.histories(), &p.histories)?;
    if let Some(test) = &p.held_out {
        artifacts::write_histories(&layout.held_out(), test)?;
    }
    artifacts::write_interactions(&layout.interactions(), &p.interactions)?;
    if let Some(f) = &p.features {
        artifacts::write_features(&layout.features(), f)?;
    }
    artifacts::write_file(&layout.ingest_summary(), |w| Ok(p.summary.write_jsonl(w)?))?;
    log::info!(
        "ingested {} users, {} catalog nodes, {} edges",
        p.histories.len(),
        p.catalog.node_count(),
        p.catalog.edge_count()
    );
    Ok(())
}

/// Base recommendation lists for every user with a history.
pub fn base_recommendations(
    cfg: &RunConfig,
    histories: &Histories,
    interactions: &[Interaction],
) -> Result<BTreeMap<String, RecommendationList>> {
    if cfg.recommender == RecommenderKind::External {
        let path = required(&cfg.paths.recommendations, "recommendations")?;
        let mut lists = artifacts::read_run(path)?;
        let before = lists.len();
        lists.retain(|user, _| histories.contains_key(user));
        if lists.len() < before {
            log::warn!("{} external lists belong to users without a history and were dropped", before - lists.len());
        }
        return Ok(lists
            .into_iter()
            .map(|(u, l)| (u, l.truncated(cfg.top_n)))
            .collect());
    }
    let matrix = scale_ratings(interactions);
    let model: Box<dyn Predictor> = match cfg.recommender {
        RecommenderKind::Baseline => Box::new(BaselineModel::fit(&matrix, BaselineParams::default())),
        RecommenderKind::Itemknn => Box::new(ItemKnnModel::fit(&matrix, cfg.knn_k, BaselineParams::default())),
        RecommenderKind::Popularity => Box::new(PopularityModel::fit(&matrix)),
        RecommenderKind::External => unreachable!("handled above"),
    };
    let users: Vec<&String> = histories.keys().filter(|u| matrix.contains_user(u)).collect();
    users
        .par_iter()
        .map(|&u| Ok((u.clone(), recommend(model.as_ref(), &matrix, u, cfg.top_n)?)))
        .collect()
}

fn recommend_stage(cfg: &RunConfig, layout: &Layout) -> Result<()> {
    let histories = artifacts::read_histories(&layout.histories())?;
    let interactions = artifacts::read_interactions(&layout.interactions())?;
    let lists = base_recommendations(cfg, &histories, &interactions)?;
    artifacts::write_file(&layout.base_run(), |w| Ok(write_run(w, lists.values())?))?;
    log::info!("wrote base lists for {} users", lists.len());
    Ok(())
}

/// Re-ranked lists of one user, one entry per (metric, order) combination.
pub fn rerank_user(
    cfg: &RunConfig,
    catalog: &CatalogGraph,
    history: &[EntityId],
    base: &RecommendationList,
) -> Result<Vec<Vec<RankedItem>>> {
    let sg = induce_profile_subgraph(catalog, base.user(), history)
        .with_context(|| format!("profile subgraph of user `{}`", base.user()))?;
    let view = sg.view(catalog);
    let mut out = Vec::new();
    for &metric in &cfg.metrics {
        let rcfg = RerankConfig::new(metric, SortOrder::Ascending)
            .with_mode(cfg.mode)
            .with_top_n(cfg.top_n);
        let baseline = compute_metric_with(&view, metric, rcfg.pagerank)
            .with_context(|| format!("baseline {metric} of user `{}`", base.user()))?;
        for &order in &cfg.orders {
            let rcfg = RerankConfig { order, ..rcfg };
            out.push(
                rerank_with_baseline(catalog, &sg, base, &rcfg, baseline)
                    .with_context(|| format!("re-ranking user `{}` by {metric} {order}", base.user()))?,
            );
        }
    }
    Ok(out)
}

const DETAIL_HEADER: &str = "user\tnew_rank\titem\toriginal_rank\tbase_score\tmetric_value\tdelta";

fn rerank_stage(cfg: &RunConfig, layout: &Layout) -> Result<()> {
    let catalog = artifacts::read_catalog(layout)?;
    let histories = artifacts::read_histories(&layout.histories())?;
    let base = artifacts::read_run(&layout.base_run())?;
    let lists: Vec<&RecommendationList> = base.values().collect();
    let per_user: Vec<Vec<Vec<RankedItem>>> = lists
        .par_iter()
        .map(|list| {
            let history = histories
                .get(list.user())
                .ok_or_else(|| anyhow!("user `{}` has recommendations but no history", list.user()))?;
            rerank_user(cfg, &catalog, history, list)
        })
        .collect::<Result<_>>()?;

    clear_dir(&layout.root().join("reranked"))?;
    for (c, (metric, order)) in cfg.combinations().into_iter().enumerate() {
        artifacts::write_file(&layout.reranked_run(metric, order), |w| {
            for (list, ranked) in lists.iter().zip(&per_user) {
                let n = ranked[c].len();
                for r in &ranked[c] {
                    writeln!(w, "{} {} {} {}", list.user(), r.new_rank, r.item, n + 1 - r.new_rank)?;
                }
            }
            Ok(())
        })?;
        artifacts::write_file(&layout.reranked_detail(metric, order), |w| {
            writeln!(w, "{DETAIL_HEADER}")?;
            for (list, ranked) in lists.iter().zip(&per_user) {
                for r in &ranked[c] {
                    writeln!(
                        w,
                        "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                        list.user(),
                        r.new_rank,
                        r.item,
                        r.original_rank,
                        r.base_score,
                        r.metric_value.value,
                        r.delta
                    )?;
                }
            }
            Ok(())
        })?;
    }
    log::info!("re-ranked {} users under {} combinations", lists.len(), cfg.combinations().len());
    Ok(())
}

/// Report row for the top `k` of `ranked`.
pub fn evaluate_list(
    user: &str,
    label: (&str, &str),
    ranked: &[EntityId],
    base: &RecommendationList,
    history: &[EntityId],
    features: Option<&FeatureStore>,
    k: usize,
) -> EvalRow {
    let top = &ranked[..ranked.len().min(k)];
    let (ild_v, unexp) = match features {
        Some(f) => {
            let recs = f.vectors_for(top).ok();
            let hist = f.vectors_for(history).ok();
            (
                recs.as_ref().filter(|r| !r.is_empty()).and_then(|r| ild(r).ok()),
                recs.zip(hist).and_then(|(r, h)| unexpectedness(&h, &r).ok()),
            )
        }
        None => (None, None),
    };
    EvalRow {
        user: user.to_owned(),
        metric: label.0.to_owned(),
        order: label.1.to_owned(),
        ild: ild_v,
        unexpectedness: unexp,
        ndcg10: ndcg_at_k(base, ranked, k).ok(),
    }
}

fn evaluate_stage(cfg: &RunConfig, layout: &Layout) -> Result<()> {
    let histories = artifacts::read_histories(&layout.histories())?;
    let base = artifacts::read_run(&layout.base_run())?;
    let features = if layout.features().is_file() {
        Some(artifacts::read_features(&layout.features())?)
    } else {
        log::warn!("no feature file; ILD and unexpectedness are left empty");
        None
    };
    let combos = cfg.combinations();
    let mut reranked = Vec::with_capacity(combos.len());
    for &(metric, order) in &combos {
        reranked.push(artifacts::read_run(&layout.reranked_run(metric, order))?);
    }

    let empty = Vec::new();
    let ids = |l: &RecommendationList| l.ids().cloned().collect::<Vec<_>>();
    let mut tasks: Vec<(String, String, &RecommendationList, Vec<EntityId>)> = Vec::new();
    for list in base.values() {
        tasks.push((BASE_LABEL.into(), "none".into(), list, ids(list)));
    }
    for (&(metric, order), runs) in combos.iter().zip(&reranked) {
        for list in base.values() {
            let r = runs.get(list.user()).map(ids).unwrap_or_default();
            tasks.push((metric.to_string(), order.to_string(), list, r));
        }
    }
    let rows: Vec<EvalRow> = tasks
        .par_iter()
        .map(|(m, o, list, ranked)| {
            let history = histories.get(list.user()).unwrap_or(&empty);
            evaluate_list(list.user(), (m, o), ranked, list, history, features.as_ref(), cfg.eval_k)
        })
        .collect();
    let missing = rows.iter().filter(|r| features.is_some() && r.unexpectedness.is_none()).count();
    if missing > 0 {
        log::warn!("{missing} report rows lack unexpectedness (missing features or empty lists)");
    }

    clear_dir(&layout.root().join("trec"))?;
    artifacts::write_file(&layout.qrels(), |w| Ok(write_qrels(w, base.values(), cfg.eval_k)?))?;
    artifacts::write_file(&layout.trec_run(BASE_LABEL), |w| {
        for list in base.values() {
            write_trec_run(&mut *w, list.user(), list.ids(), BASE_LABEL)?;
        }
        Ok(())
    })?;
    for (&(metric, order), runs) in combos.iter().zip(&reranked) {
        let tag = format!("{metric}_{order}");
        artifacts::write_file(&layout.trec_run(&tag), |w| {
            for list in runs.values() {
                write_trec_run(&mut *w, list.user(), list.ids(), &tag)?;
            }
            Ok(())
        })?;
    }
    artifacts::write_file(&layout.report(), |w| Ok(emit_report(&rows, w)?))?;
    artifacts::write_file(&layout.report_summary(), |w| Ok(emit_summary(&rows, w)?))?;
    log::info!("wrote {} report rows", rows.len());
    Ok(())
}

fn write_manifest(cfg: &RunConfig, layout: &Layout, command: &str) -> Result<()> {
    let config = serde_json::to_value(cfg)?;
    let config_hash = artifacts::sha256_bytes(&serde_json::to_vec(&config)?);
    let mut inputs = BTreeMap::new();
    for (name, path) in cfg.paths.inputs() {
        if path.is_file() {
            inputs.insert(
                name.to_owned(),
                InputRecord {
                    path: path.display().to_string(),
                    sha256: artifacts::sha256_file(path)?,
                },
            );
        }
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_owned(),
        config_hash,
        config,
        inputs,
        artifacts: artifacts::hash_artifacts(layout)?,
    };
    artifacts::write_file(&layout.manifest(), |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)?;
        writeln!(w)?;
        Ok(())
    })
}
