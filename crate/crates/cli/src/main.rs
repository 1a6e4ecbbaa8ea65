use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kgrank_cli::config::{RawPaths, RawProfiles, RawSample};
use kgrank_cli::{execute, resolve_config, ConfigError, RawConfig, Requirements, Stage};

/// Knowledge-graph informed re-ranking of recommendation lists.
#[derive(Debug, Parser)]
#[command(name = "kgrank", version)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a dataset and write the prepared catalog, histories and features.
    Ingest(Flags),
    /// Produce base recommendation lists from prepared data.
    Recommend(Flags),
    /// Re-rank the base lists for every metric and order.
    Rerank(Flags),
    /// Compute ILD, unexpectedness and nDCG and write reports.
    Evaluate(Flags),
    /// All stages in sequence.
    Run(Flags),
}

#[derive(Debug, clap::Args)]
struct Flags {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// lastfm, netflix or synthetic.
    #[arg(long)]
    dataset: Option<String>,
    /// Output run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    genres: Option<PathBuf>,
    #[arg(long)]
    netflix: Option<PathBuf>,
    /// Run file with externally computed recommendations.
    #[arg(long)]
    recommendations: Option<PathBuf>,
    /// external, baseline, itemknn or popularity.
    #[arg(long)]
    recommender: Option<String>,
    /// Network metric(s); repeat or separate with commas.
    #[arg(long, value_delimiter = ',')]
    metric: Vec<String>,
    /// Sort order(s): asc, desc.
    #[arg(long, value_delimiter = ',')]
    order: Vec<String>,
    /// Neighborhood mode: closed or edges.
    #[arg(long)]
    mode: Option<String>,
    /// Number of base candidates per user.
    #[arg(long = "top-n")]
    top_n: Option<usize>,
    /// Evaluation cutoff.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    parallelism: Option<usize>,
    /// Neighbors for the item-kNN recommender.
    #[arg(long = "knn-k")]
    knn_k: Option<usize>,
    /// Sample this many users (lastfm).
    #[arg(long = "sample-users")]
    sample_users: Option<usize>,
    /// Minimum distinct items of a sampled user.
    #[arg(long = "min-unique")]
    min_unique: Option<usize>,
    /// Number of generated profiles (netflix).
    #[arg(long)]
    profiles: Option<usize>,
    #[arg(long = "min-items")]
    min_items: Option<usize>,
    #[arg(long = "max-items")]
    max_items: Option<usize>,
    /// Train share of the per-profile split (netflix).
    #[arg(long = "split-ratio")]
    split_ratio: Option<f64>,
}

impl Flags {
    fn raw(self) -> Result<RawConfig, ConfigError> {
        let file = match &self.config {
            Some(path) => RawConfig::from_file(path)?,
            None => RawConfig::default(),
        };
        let non_empty = |v: Vec<String>| (!v.is_empty()).then_some(v);
        let flags = RawConfig {
            dataset: self.dataset,
            output: self.out,
            recommender: self.recommender,
            metrics: non_empty(self.metric),
            orders: non_empty(self.order),
            mode: self.mode,
            top_n: self.top_n,
            eval_k: self.k,
            seed: self.seed,
            parallelism: self.parallelism,
            knn_k: self.knn_k,
            paths: RawPaths {
                events: self.events,
                features: self.features,
                genres: self.genres,
                netflix: self.netflix,
                recommendations: self.recommendations,
            },
            sample: RawSample {
                users: self.sample_users,
                min_unique: self.min_unique,
            },
            profiles: RawProfiles {
                n_profiles: self.profiles,
                min_items: self.min_items,
                max_items: self.max_items,
                split_ratio: self.split_ratio,
            },
            synthetic: None,
        };
        Ok(file.overlay(flags))
    }
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_VALIDATION) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let (flags, stages, req, name): (Flags, &[Stage], Requirements, &str) = match cli.command {
        Command::Ingest(f) => (f, &[Stage::Ingest], Requirements { inputs: true, recommendations: false }, "ingest"),
        Command::Recommend(f) => (f, &[Stage::Recommend], Requirements { inputs: false, recommendations: true }, "recommend"),
        Command::Rerank(f) => (f, &[Stage::Rerank], Requirements { inputs: false, recommendations: false }, "rerank"),
        Command::Evaluate(f) => (f, &[Stage::Evaluate], Requirements { inputs: false, recommendations: false }, "evaluate"),
        Command::Run(f) => (f, &Stage::ALL, Requirements::ALL, "run"),
    };

    let cfg = match flags.raw().and_then(|raw| resolve_config(&raw, req)) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    match execute(&cfg, stages, name) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            eprintln!("outputs in {} are stale", cfg.output.display());
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
