//! Acceptance checks, one `PASS`/`FAIL` line per criterion. Runs without the
//! libtest harness so the lines are always printed; any failure makes the
//! process exit non-zero.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use kgrank_core::eval::{ild, ndcg_at_k, unexpectedness, FeatureVector};
use kgrank_core::graph::{extend_subgraph, induce_profile_subgraph, read_export};
use kgrank_core::ingest::{
    load_netflix, merge_lastfm, read_events, read_features, read_genres, split_interactions,
};
use kgrank_core::netmetrics::{betweenness, closeness, compute_metric, hhi_normalized, pagerank, GraphView, PageRankParams};
use kgrank_core::recsys::load_external_recommendations;
use kgrank_core::rerank::{rerank, ProfileOverlay};
use kgrank_core::{EntityId, MetricKind, NeighborhoodMode, RecommendationList, RerankConfig, SortOrder};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;

/// `n` seeded draws from a proptest strategy.
fn draws<S: Strategy>(strategy: S, n: usize) -> Vec<S::Value> {
    let mut runner = TestRunner::deterministic();
    (0..n).map(|_| strategy.new_tree(&mut runner).unwrap().current()).collect()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn ids(names: &[String]) -> Vec<EntityId> {
    names.iter().map(|n| EntityId::new(n.as_str())).collect()
}

fn within(failures: &mut Vec<String>, what: &str, elapsed: Duration, limit: Duration) {
    if elapsed >= limit {
        failures.push(format!("{what} took {elapsed:?}, limit {limit:?}"));
    }
}

fn criterion_1_hhi() -> Vec<String> {
    let start = Instant::now();
    let mut failures = Vec::new();
    for n in 2..=100usize {
        let uniform = vec![1.0 / n as f64; n];
        let h = hhi_normalized(&uniform).unwrap();
        if h.abs() > 1e-12 {
            failures.push(format!("uniform N={n} gave {h}"));
        }
        for hot in 0..n {
            let mut v = vec![0.0; n];
            v[hot] = 1.0;
            let h = hhi_normalized(&v).unwrap();
            if h != 1.0 {
                failures.push(format!("one-hot N={n} at {hot} gave {h}"));
            }
        }
    }
    let simplex = proptest::collection::vec(0.0f64..1.0, 2..=60).prop_filter_map("zero", |w| {
        let total: f64 = w.iter().sum();
        (total > 0.0).then(|| w.iter().map(|x| x / total).collect::<Vec<f64>>())
    });
    for shares in draws(simplex, 1000) {
        let got = hhi_normalized(&shares).unwrap();
        let want = oracles::hhi_star(&shares).clamp(0.0, 1.0);
        if (got - want).abs() > 1e-12 {
            failures.push(format!("N={} gave {got}, direct {want}", shares.len()));
        }
    }
    within(&mut failures, "HHI suite", start.elapsed(), Duration::from_secs(1));
    failures
}

fn criterion_2_centrality_oracles() -> Vec<String> {
    let start = Instant::now();
    let mut failures = Vec::new();
    for (n, edges) in draws(oracles::graph(12, 30), 200) {
        let g = GraphView::new(n, edges.clone());
        let (b, c) = (betweenness(&g), closeness(&g));
        let (wb, wc) = (oracles::betweenness(n, &edges), oracles::harmonic_closeness(n, &edges));
        for v in 0..n {
            if (b.0[v] - wb[v]).abs() > 1e-9 {
                failures.push(format!("betweenness node {v} of {edges:?}: {} vs {}", b.0[v], wb[v]));
            }
            if (c.0[v] - wc[v]).abs() > 1e-9 {
                failures.push(format!("closeness node {v} of {edges:?}: {} vs {}", c.0[v], wc[v]));
            }
        }
    }
    // where every path count is one, the scores are integers and must match bit for bit
    for (n, edges) in draws(oracles::forest(12), 200) {
        let got = betweenness(&GraphView::new(n, edges.clone())).0;
        let want = oracles::betweenness(n, &edges);
        if got != want {
            failures.push(format!("forest {edges:?}: {got:?} vs {want:?}"));
        }
    }
    for (n, edges) in draws(oracles::graph(10, 25), 200) {
        let got = pagerank(&GraphView::new(n, edges.clone()), PageRankParams::default()).unwrap();
        let want = oracles::pagerank_dense(n, &edges, 0.85);
        for v in 0..n {
            if (got.0[v] - want[v]).abs() > 1e-8 {
                failures.push(format!("pagerank node {v} of {edges:?}: {} vs {}", got.0[v], want[v]));
            }
        }
    }
    within(&mut failures, "centrality oracles", start.elapsed(), Duration::from_secs(30));
    failures
}

fn criterion_3_diverse_versus_similar() -> Vec<String> {
    let dir = fixtures().join("fig6");
    let open = |name: &str| BufReader::new(File::open(dir.join(name)).unwrap());
    let g = read_export(open("nodes.tsv"), open("edges.tsv")).unwrap();
    let history: Vec<EntityId> = fs::read_to_string(dir.join("history.tsv"))
        .unwrap()
        .lines()
        .filter_map(|l| l.split('\t').nth(1))
        .map(EntityId::from)
        .collect();
    let recs = load_external_recommendations(open("base.run")).unwrap().remove("u").unwrap();
    let sg = induce_profile_subgraph(&g, "u", &history).unwrap();
    let mut failures = Vec::new();

    let cfg = RerankConfig::new(MetricKind::Betweenness, SortOrder::Ascending)
        .with_mode(NeighborhoodMode::ClosedNeighborhood);
    let ranked = rerank(&g, &sg, &recs, &cfg).unwrap();
    let rank = |id: &str| ranked.iter().find(|r| r.item.as_str() == id).unwrap().new_rank;
    let worst_diverse = rank("d1").max(rank("d2"));
    let best_similar = rank("s1").min(rank("s2"));
    if worst_diverse >= best_similar {
        let order: Vec<_> = ranked.iter().map(|r| (r.item.as_str(), r.metric_value.value)).collect();
        failures.push(format!("order {order:?}"));
    }

    let pair_delta = |a: &str, b: &str| {
        let mut ext = sg.clone();
        for id in [a, b] {
            ext = extend_subgraph(&ext, &g, &EntityId::from(id), NeighborhoodMode::ClosedNeighborhood).unwrap();
        }
        let count = |s: &kgrank_core::ProfileSubgraph, kind| compute_metric(&s.view(&g), kind).unwrap().value;
        (
            count(&ext, MetricKind::NodeCount) - count(&sg, MetricKind::NodeCount),
            count(&ext, MetricKind::EdgeCount) - count(&sg, MetricKind::EdgeCount),
        )
    };
    for (a, b, want) in [("d1", "d2", (4.0, 7.0)), ("s1", "s2", (2.0, 2.0))] {
        let got = pair_delta(a, b);
        if got != want {
            failures.push(format!("pair {a},{b} added {got:?}, expected {want:?}"));
        }
    }
    failures
}

fn criterion_4_candidate_independence() -> Vec<String> {
    let mut failures = Vec::new();
    let modes = [NeighborhoodMode::ClosedNeighborhood, NeighborhoodMode::EdgesToExisting];
    let instances = draws(
        (oracles::catalog_with_history(9, 7, 35), proptest::prelude::any::<u64>()),
        100,
    );
    for ((spec, history, candidates), seed) in instances {
        let g = spec.build();
        let sg = induce_profile_subgraph(&g, "u", &ids(&history)).unwrap();

        let overlay = ProfileOverlay::new(&g, &sg);
        for c in ids(&candidates) {
            for mode in modes {
                let fast = overlay.extended_view(&c, mode).unwrap();
                let naive = extend_subgraph(&sg, &g, &c, mode).unwrap().view(&g);
                for kind in MetricKind::ALL {
                    let a = compute_metric(&fast, kind).unwrap().value;
                    let b = compute_metric(&naive, kind).unwrap().value;
                    if (a - b).abs() > 1e-12 {
                        failures.push(format!("{kind} {mode:?} on {c}: overlay {a}, copy {b}"));
                    }
                }
            }
        }

        if candidates.is_empty() {
            continue;
        }
        let mut shuffled = candidates.clone();
        for i in (1..shuffled.len()).rev() {
            let j = (seed.rotate_left(i as u32) as usize) % (i + 1);
            shuffled.swap(i, j);
        }
        // equal base scores: a permutation of the input may only move equal-metric items,
        // and the id tie-break then restores one order
        let flat = |names: &[String]| {
            RecommendationList::new("u", names.iter().map(|c| (EntityId::new(c.as_str()), 1.0)).collect()).unwrap()
        };
        for kind in MetricKind::ALL {
            let cfg = RerankConfig::new(kind, SortOrder::Ascending).with_top_n(candidates.len());
            let a = rerank(&g, &sg, &flat(&candidates), &cfg).unwrap();
            let b = rerank(&g, &sg, &flat(&shuffled), &cfg).unwrap();
            let key = |r: &kgrank_core::RankedItem| (r.item.clone(), r.metric_value.value.to_bits());
            if a.iter().map(key).ne(b.iter().map(key)) {
                failures.push(format!("{kind}: order changed under permutation"));
            }
        }
    }
    failures
}

fn criterion_5_surprise_oracles() -> Vec<String> {
    let mut failures = Vec::new();
    let vectors = |raw: &[[f64; 8]]| raw.iter().map(|v| FeatureVector::new(*v).unwrap()).collect::<Vec<_>>();
    let lists = || proptest::collection::vec(oracles::feature(), 1..12);
    for (h, r) in draws((lists(), lists()), 500) {
        let got = ild(&vectors(&r)).unwrap();
        let want = oracles::ild(&r);
        if (got - want).abs() > 1e-12 {
            failures.push(format!("ild {got} vs {want}"));
        }
        let got = unexpectedness(&vectors(&h), &vectors(&r)).unwrap();
        let want = oracles::unexpectedness(&h, &r);
        if (got - want).abs() > 1e-12 {
            failures.push(format!("unexpectedness {got} vs {want}"));
        }
    }

    let base_list = |n: usize| {
        RecommendationList::new("u", (0..n).map(|i| (EntityId::new(format!("i{i:02}")), (n - i) as f64)).collect())
            .unwrap()
    };
    let pairs = (1usize..25, 1usize..15).prop_flat_map(|(n, k)| {
        let pool: Vec<String> = (0..n).map(|i| format!("i{i:02}")).chain((0..10).map(|i| format!("x{i}"))).collect();
        (proptest::strategy::Just(pool).prop_shuffle(), 0..=n + 10)
            .prop_map(move |(pool, len)| (n, k, pool[..len].to_vec()))
    });
    for (n, k, reranked) in draws(pairs, 500) {
        let base = base_list(n);
        let got = ndcg_at_k(&base, &ids(&reranked), k).unwrap();
        let names: Vec<String> = base.ids().map(|i| i.to_string()).collect();
        let b: Vec<&str> = names.iter().map(String::as_str).collect();
        let r: Vec<&str> = reranked.iter().map(String::as_str).collect();
        let want = oracles::ndcg(&b, &r, k);
        if (got - want).abs() > 1e-12 {
            failures.push(format!("ndcg@{k} {got} vs {want}"));
        }
    }

    let base = base_list(20);
    let same = ndcg_at_k(&base, base.ids(), 10).unwrap();
    if same != 1.0 {
        failures.push(format!("ndcg(base, base, 10) = {same}"));
    }
    let disjoint: Vec<EntityId> = (0..10).map(|i| EntityId::new(format!("x{i}"))).collect();
    let zero = ndcg_at_k(&base, &disjoint, 10).unwrap();
    if zero != 0.0 {
        failures.push(format!("disjoint top-10 gave {zero}"));
    }
    failures
}

struct SyntheticRun {
    dir: PathBuf,
    elapsed: Duration,
}

fn run_synthetic(name: &str) -> SyntheticRun {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    if dir.exists() {
        fs::remove_dir_all(&dir).unwrap();
    }
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_kgrank"))
        .args(["run", "--dataset", "synthetic", "--recommender", "popularity", "--seed", "0", "--out"])
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success(), "synthetic run failed: {status}");
    SyntheticRun { dir, elapsed: start.elapsed() }
}

fn first_run() -> &'static SyntheticRun {
    static RUN: OnceLock<SyntheticRun> = OnceLock::new();
    RUN.get_or_init(|| run_synthetic("first"))
}

/// `(metric, order)` to `(users, unexpectedness, ndcg10)` from the summary CSV.
fn summary(dir: &Path) -> BTreeMap<(String, String), (usize, f64, f64)> {
    let mut rdr = csv::Reader::from_path(dir.join("report_summary.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (m, o, u, x, n) = (col("metric"), col("order"), col("users"), col("unexpectedness"), col("ndcg10"));
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            (
                (r[m].to_owned(), r[o].to_owned()),
                (r[u].parse().unwrap(), r[x].parse().unwrap(), r[n].parse().unwrap()),
            )
        })
        .collect()
}

fn criterion_6_betweenness_ascending_is_more_unexpected() -> Vec<String> {
    let run = first_run();
    let s = summary(&run.dir);
    let mut failures = Vec::new();
    let base = s[&("base".into(), "none".into())];
    let btw = s[&("betweenness".into(), "asc".into())];
    if btw.0 < 20 || base.0 < 20 {
        failures.push(format!("only {} / {} users", btw.0, base.0));
    }
    if btw.1 <= base.1 {
        failures.push(format!("unexpectedness betweenness asc {} <= base {}", btw.1, base.1));
    }
    within(&mut failures, "synthetic run", run.elapsed, Duration::from_secs(120));
    println!("  base unexpectedness {:.4}, betweenness asc {:.4}, {} users", base.1, btw.1, btw.0);
    failures
}

fn criterion_7_betweenness_ascending_perturbs_ranking() -> Vec<String> {
    let run = first_run();
    let s = summary(&run.dir);
    let mut failures = Vec::new();
    let btw = s[&("betweenness".into(), "asc".into())];
    let nodes = s[&("nodes".into(), "desc".into())];
    if btw.2 >= nodes.2 {
        failures.push(format!("ndcg betweenness asc {} >= nodes desc {}", btw.2, nodes.2));
    }
    if btw.2 >= 0.9 {
        failures.push(format!("ndcg betweenness asc {} >= 0.9", btw.2));
    }
    println!("  ndcg@10 betweenness asc {:.4}, nodes desc {:.4}", btw.2, nodes.2);
    failures
}

fn criterion_8_ingestion_conservation() -> Vec<String> {
    let mut failures = Vec::new();
    let tiny = fixtures().join("tiny");
    let open = |name: &str| File::open(tiny.join(name)).unwrap();
    let events = read_events(open("events.tsv")).unwrap();
    let features = read_features(open("features.csv")).unwrap();
    let genres = read_genres(open("genres.csv")).unwrap();
    let m = merge_lastfm(&events, &features, &genres).unwrap();
    let count = |stage: &str, reason: &str| m.summary.count(stage, reason).unwrap_or(0);
    let kept = count("events", "kept");
    let dropped = count("events", "track without features dropped");
    if kept + dropped != events.len() as u64 || (events.len(), kept, dropped) != (47, 46, 1) {
        failures.push(format!("events: {kept} kept + {dropped} dropped of {}", events.len()));
    }
    let genre_edges = m.triples.iter().filter(|t| t.predicate == "genre").count() as u64;
    let orphans = count("genres", "annotation for unknown track dropped");
    if genre_edges + orphans != genres.len() as u64 || (genre_edges, orphans) != (25, 2) {
        failures.push(format!("genres: {genre_edges} edges + {orphans} orphans of {}", genres.len()));
    }
    let feature_drops = count("features", "invalid feature row dropped") + count("features", "zero-norm feature vector dropped");
    if m.features.len() as u64 + feature_drops != features.len() as u64 {
        failures.push(format!("features: {} kept + {feature_drops} dropped of {}", m.features.len(), features.len()));
    }

    let netflix = load_netflix(File::open(fixtures().join("netflix_sample.csv")).unwrap()).unwrap();
    let got: BTreeSet<(String, String, String)> = netflix
        .triples
        .iter()
        .map(|t| (t.source.to_string(), t.predicate.to_string(), t.target.to_string()))
        .collect();
    let t = |s: &str, p: &str, o: &str| (s.to_owned(), p.to_owned(), o.to_owned());
    let want: BTreeSet<_> = [
        t("person:Dana One", "directs", "s1"),
        t("person:Dario Two", "directs", "s1"),
        t("person:Ann One", "acts_on", "s1"),
        t("person:Abe Two", "acts_on", "s1"),
        t("person:Ada Three", "acts_on", "s1"),
        t("s1", "country", "country:United States"),
        t("s1", "genre", "genre:Dramas"),
        t("s1", "genre", "genre:Comedies"),
        t("s1", "rating", "rating:PG-13"),
        t("person:Ann One", "acts_on", "s2"),
        t("s2", "genre", "genre:TV Dramas"),
        t("s2", "rating", "rating:TV-MA"),
        t("person:Dana One", "directs", "s3"),
        t("s3", "country", "country:India"),
        t("s3", "country", "country:United Kingdom"),
        t("s3", "genre", "genre:Action & Adventure"),
        t("person:Dora Three", "directs", "s4"),
        t("person:Abe Two", "acts_on", "s4"),
        t("person:Amy Four", "acts_on", "s4"),
        t("s4", "country", "country:France"),
        t("s4", "genre", "genre:Dramas"),
        t("s4", "genre", "genre:International Movies"),
        t("s4", "rating", "rating:R"),
        t("s5", "genre", "genre:Kids' TV"),
    ]
    .into_iter()
    .collect();
    if netflix.triples.len() != 24 || got != want {
        failures.push(format!(
            "netflix: {} triples, missing {:?}, unexpected {:?}",
            netflix.triples.len(),
            want.difference(&got).collect::<Vec<_>>(),
            got.difference(&want).collect::<Vec<_>>()
        ));
    }

    // (history size, train size) under a 90/10 split, counted by hand
    for (n, train) in [(0, 0), (1, 1), (2, 1), (5, 4), (9, 8), (10, 9), (11, 10), (15, 14), (20, 18), (25, 23), (55, 50)] {
        let history: Vec<EntityId> = (0..n).map(|i| EntityId::new(format!("i{i}"))).collect();
        let (tr, te) = split_interactions(&history, 0.9, 3).unwrap();
        if tr.len() != train || te.len() != n - train {
            failures.push(format!("split of {n}: {} / {}, expected {train} / {}", tr.len(), te.len(), n - train));
        }
    }
    failures
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_owned(), fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn criterion_9_determinism() -> Vec<String> {
    let a = tree(&first_run().dir);
    let b = tree(&run_synthetic("second").dir);
    let mut failures = Vec::new();
    let names_a: BTreeSet<_> = a.keys().collect();
    let names_b: BTreeSet<_> = b.keys().collect();
    if names_a != names_b {
        failures.push(format!("file sets differ: {:?}", names_a.symmetric_difference(&names_b).collect::<Vec<_>>()));
    }
    for (path, bytes) in &a {
        if b.get(path).is_some_and(|other| other != bytes) {
            failures.push(format!("{} differs", path.display()));
        }
    }
    let required = ["report.csv", "report_summary.csv", "base.run", "reranked/betweenness_asc.run"];
    for r in required {
        if !a.contains_key(Path::new(r)) {
            failures.push(format!("{r} missing"));
        }
    }
    println!("  compared {} files", a.len());
    failures
}

fn main() {
    let criteria = [
        (1, "HHI normalization", criterion_1_hhi as fn() -> Vec<String>),
        (2, "centrality oracles", criterion_2_centrality_oracles as fn() -> Vec<String>),
        (3, "diverse pair ranks above similar pair", criterion_3_diverse_versus_similar as fn() -> Vec<String>),
        (4, "candidate evaluation is order independent", criterion_4_candidate_independence as fn() -> Vec<String>),
        (5, "surprise measure oracles", criterion_5_surprise_oracles as fn() -> Vec<String>),
        (6, "betweenness ascending raises unexpectedness", criterion_6_betweenness_ascending_is_more_unexpected as fn() -> Vec<String>),
        (7, "betweenness ascending perturbs the base ranking", criterion_7_betweenness_ascending_perturbs_ranking as fn() -> Vec<String>),
        (8, "ingestion conservation", criterion_8_ingestion_conservation as fn() -> Vec<String>),
        (9, "repeated runs are byte-identical", criterion_9_determinism as fn() -> Vec<String>),
    ];
    let mut failed = 0;
    for (n, title, check) in criteria {
        let failures = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            vec![format!("panicked: {msg}")]
        });
        if failures.is_empty() {
            println!("PASS criterion {n}: {title}");
        } else {
            failed += 1;
            println!("FAIL criterion {n}: {title}: {}", failures.join("; "));
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
