//! Command-line shell around the narratives engine: configuration, daily
//! pipeline orchestration, persistence, and report export.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 external-service
//! failure.

mod cmd;
mod config;
mod output;
mod state;

use anyhow::Result;
use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use config::PipelineConfig;
use narratives::influence::EffectRole;
use narratives::watch::MatchMode;
use state::{DataError, DataRoot, ExternalError};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "narratives",
    version,
    about = "Track news narratives across sites: cluster passages daily, label them, and analyze site influence"
)]
struct Cli {
    /// Config file (flat key = value); NARR_<KEY> env vars override.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Data root holding the store, staged embeddings, ledger, and reports.
    #[arg(long, global = true)]
    data_root: Option<PathBuf>,
    /// Emit line-delimited JSON records instead of tab-delimited tables.
    #[arg(long, global = true)]
    jsonl: bool,
    /// Write the primary report here instead of stdout.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and stage inputs.
    #[command(subcommand)]
    Ingest(IngestCmd),
    /// Fit one day or a range of days into the cluster store.
    Fit {
        #[arg(long)]
        date: Option<NaiveDate>,
        #[arg(long)]
        from: Option<NaiveDate>,
        #[arg(long)]
        to: Option<NaiveDate>,
    },
    /// Full daily cycle: admit/segment articles, stage embeddings, fit,
    /// refresh curation, snapshot, ledger.
    RunDaily {
        #[arg(long)]
        date: NaiveDate,
        #[arg(long)]
        articles: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
    },
    /// Filter spam clusters and label the survivors (keywords, summaries).
    Curate {
        /// Summarizer endpoint URL (overrides config).
        #[arg(long)]
        summarizer: Option<String>,
    },
    /// Site fingerprints → similarity graph → Louvain communities.
    Communities {
        /// Site rank file (JSONL: {domain, rank}).
        #[arg(long)]
        ranks: Option<PathBuf>,
        /// Also write the weighted edge list here.
        #[arg(long)]
        edges_out: Option<PathBuf>,
        /// Also write each community's top narratives here.
        #[arg(long)]
        top_out: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        top_narratives: usize,
    },
    /// Origination/amplification influence statistics.
    Influence {
        #[arg(long)]
        ranks: Option<PathBuf>,
        /// One domain; omit for every eligible domain.
        #[arg(long)]
        domain: Option<String>,
        #[arg(long, value_enum, default_value = "both")]
        role: RoleArg,
    },
    /// Histogram of article-day offsets relative to narrative peaks.
    LagProfile {
        #[arg(long)]
        ranks: Option<PathBuf>,
        /// Only sites with rank ceiling at most this value.
        #[arg(long)]
        at_most: Option<u64>,
        /// Only sites with rank ceiling above this value (plus unranked).
        #[arg(long)]
        above: Option<u64>,
    },
    /// Week-over-week trending narratives.
    Trending {
        #[arg(long)]
        as_of: NaiveDate,
        #[arg(long)]
        min_volume: Option<u64>,
    },
    /// Fact-check corpus operations.
    #[command(subcommand)]
    Factcheck(FactcheckCmd),
    /// Match an external corpus (e.g. social posts) onto narratives.
    MatchCorpus {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "single")]
        mode: ModeArg,
        #[arg(long)]
        threshold: Option<f64>,
        /// Also report the corpus's JSD against the aggregate distribution.
        #[arg(long)]
        jsd: bool,
    },
    /// Export stored artifacts.
    Export {
        #[arg(long, value_enum)]
        report: ReportArg,
        #[arg(long)]
        include_centroids: bool,
    },
    /// Snapshot management.
    #[command(subcommand)]
    Snapshot(SnapshotCmd),
}

#[derive(Subcommand)]
enum IngestCmd {
    /// Admit and segment articles into plain passages for embedding.
    Articles {
        #[arg(long)]
        input: PathBuf,
        /// Passage JSONL destination.
        #[arg(long)]
        passages: PathBuf,
    },
    /// Validate precomputed embeddings and stage them by day.
    Embeddings {
        #[arg(long)]
        input: PathBuf,
    },
    /// Embed plain passages through the remote provider.
    Embed {
        #[arg(long)]
        input: PathBuf,
        /// Embedding-record JSONL destination.
        #[arg(long)]
        embeddings: PathBuf,
        /// Provider endpoint URL (overrides config).
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
    },
}

#[derive(Subcommand)]
enum FactcheckCmd {
    /// Validate and store the fact-check corpus.
    Load {
        #[arg(long)]
        input: PathBuf,
    },
    /// Map fact-check passages onto narratives (all-matches mode).
    Match {
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Classify matched pairs through the external refutation classifier.
    Classify {
        #[arg(long)]
        classifier: Option<String>,
    },
    /// Coverage metrics per fact-checking organization.
    Efficacy {
        #[arg(long)]
        org: Option<String>,
    },
    /// Recompute matches and efficacy across thresholds.
    Sweep {
        /// Comma-separated thresholds.
        #[arg(long, default_value = "0.60,0.65,0.70,0.75,0.80")]
        thresholds: String,
        #[arg(long)]
        classifier: Option<String>,
    },
}

#[derive(Subcommand)]
enum SnapshotCmd {
    /// Copy the current store snapshot to a file.
    Save {
        #[arg(long)]
        to: PathBuf,
    },
    /// Validate a snapshot file and install it as the current store.
    Load {
        #[arg(long)]
        from: PathBuf,
    },
    /// List the current and per-day snapshots.
    List,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum RoleArg {
    Originate,
    Amplify,
    Both,
}

impl RoleArg {
    fn roles(self) -> Vec<EffectRole> {
        match self {
            RoleArg::Originate => vec![EffectRole::Originate],
            RoleArg::Amplify => vec![EffectRole::Amplify],
            RoleArg::Both => vec![EffectRole::Originate, EffectRole::Amplify],
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Single,
    All,
}

impl From<ModeArg> for MatchMode {
    fn from(m: ModeArg) -> MatchMode {
        match m {
            ModeArg::Single => MatchMode::SingleBest,
            ModeArg::All => MatchMode::AllMatches,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ReportArg {
    Clusters,
    Ledger,
    Labels,
}

fn run(cli: Cli) -> Result<()> {
    let mut config = PipelineConfig::load(cli.config.as_deref())?;
    // Flag overrides sit between file and environment.
    let mut overrides = BTreeMap::new();
    if let Some(root) = &cli.data_root {
        overrides.insert("data_root".to_string(), root.display().to_string());
    }
    config.apply_overrides(&overrides)?;
    let root = DataRoot::new(&config.data_root)?;
    let output = cli.output.as_ref();
    let jsonl = cli.jsonl;

    match cli.command {
        Command::Ingest(IngestCmd::Articles { input, passages }) => {
            cmd::ingest::articles(&config, &input, &passages, output, jsonl)
        }
        Command::Ingest(IngestCmd::Embeddings { input }) => {
            cmd::ingest::embeddings(&config, &root, &input, output, jsonl)
        }
        Command::Ingest(IngestCmd::Embed {
            input,
            embeddings,
            endpoint,
            batch_size,
        }) => cmd::ingest::embed_remote(&config, &input, &embeddings, endpoint, batch_size),
        Command::Fit { date, from, to } => {
            cmd::fit::fit(&config, &root, date, from, to, output, jsonl)
        }
        Command::RunDaily {
            date,
            articles,
            embeddings,
        } => cmd::fit::run_daily(&config, &root, date, &articles, &embeddings, output, jsonl),
        Command::Curate { summarizer } => {
            cmd::analyze::run_curate(&config, &root, summarizer, output, jsonl)
        }
        Command::Communities {
            ranks,
            edges_out,
            top_out,
            top_narratives,
        } => cmd::analyze::run_communities(
            &config,
            &root,
            ranks.as_ref(),
            edges_out.as_ref(),
            top_out.as_ref(),
            top_narratives,
            output,
            jsonl,
        ),
        Command::Influence {
            ranks,
            domain,
            role,
        } => cmd::analyze::run_influence(
            &config,
            &root,
            ranks.as_ref(),
            domain,
            &role.roles(),
            output,
            jsonl,
        ),
        Command::LagProfile {
            ranks,
            at_most,
            above,
        } => cmd::analyze::run_lag_profile(
            &config,
            &root,
            ranks.as_ref(),
            at_most,
            above,
            output,
            jsonl,
        ),
        Command::Trending { as_of, min_volume } => {
            cmd::analyze::run_trending(&config, &root, as_of, min_volume, output, jsonl)
        }
        Command::Factcheck(FactcheckCmd::Load { input }) => {
            cmd::factcheck::load(&config, &root, &input, output, jsonl)
        }
        Command::Factcheck(FactcheckCmd::Match { threshold }) => {
            cmd::factcheck::match_cmd(&config, &root, threshold, output, jsonl)
        }
        Command::Factcheck(FactcheckCmd::Classify { classifier }) => {
            cmd::factcheck::classify(&config, &root, classifier, output, jsonl)
        }
        Command::Factcheck(FactcheckCmd::Efficacy { org }) => {
            cmd::factcheck::efficacy(&config, &root, org, output, jsonl)
        }
        Command::Factcheck(FactcheckCmd::Sweep {
            thresholds,
            classifier,
        }) => {
            let parsed: Vec<f64> = thresholds
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| DataError(format!("bad threshold list: {e}")))?;
            cmd::factcheck::sweep(&config, &root, &parsed, classifier, output, jsonl)
        }
        Command::MatchCorpus {
            input,
            mode,
            threshold,
            jsd,
        } => cmd::social::run(
            &config,
            &root,
            &input,
            mode.into(),
            threshold,
            jsd,
            output,
            jsonl,
        ),
        Command::Export {
            report,
            include_centroids,
        } => match report {
            ReportArg::Clusters => cmd::export::clusters(&config, &root, include_centroids, output),
            ReportArg::Ledger => cmd::export::ledger(&config, &root, output, jsonl),
            ReportArg::Labels => cmd::export::labels(&config, &root, output, jsonl),
        },
        Command::Snapshot(SnapshotCmd::Save { to }) => cmd::export::snapshot_save(&root, &to),
        Command::Snapshot(SnapshotCmd::Load { from }) => cmd::export::snapshot_load(&root, &from),
        Command::Snapshot(SnapshotCmd::List) => cmd::export::snapshot_list(&root),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            // Anything that is not an external-service failure counts as a
            // data error.
            let code = if e.chain().any(|c| c.is::<ExternalError>()) {
                3
            } else {
                2
            };
            ExitCode::from(code)
        }
    }
}
