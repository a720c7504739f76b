use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use chrono::{NaiveDate, Utc};
use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;
use triage_core::exec::Execution;
use triage_core::metrics::BootstrapConfig;
use triage_core::{
    ArchetypeMix, ClinicianFeedback, CollapsePolicy, Decision, FeedbackCategory, Window,
};
use triage_service::commands::{self, ReportFormat};
use triage_service::{router, AppState, BackendKind, ServiceConfig};

#[derive(Parser)]
#[command(name = "triage", version, about = "Surgical co-management triage")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "TRIAGE_CONFIG")]
    config: Option<PathBuf>,
    /// Store directory; overrides `store_dir` from the config.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// seq or par. Results are identical; only speed differs.
    #[arg(long, global = true, default_value = "par")]
    exec: Execution,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Triage every case scheduled for a surgery date.
    Run {
        #[arg(long)]
        date: NaiveDate,
        /// Case file (JSON or JSONL) or a directory of them.
        #[arg(long)]
        input: PathBuf,
        /// Overrides `backend` from the config.
        #[arg(long)]
        backend: Option<BackendKind>,
    },
    /// Evaluation metrics with bootstrap intervals.
    Report {
        /// `all`, a date, or `FROM..TO`.
        #[arg(long, default_value = "all")]
        window: Window,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
        /// Evaluate a labeled CSV instead of the store.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Count Maybe predictions as negative.
        #[arg(long)]
        maybe_negative: bool,
    },
    /// Write synthetic cases as JSONL.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-case expected tiers and profiles.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        date: Option<NaiveDate>,
        /// e.g. `affirmative=0.3,maybe=0.2,negative=0.4,undocumented=0.1,excluded=0.2`
        #[arg(long)]
        mix: Option<ArchetypeMix>,
    },
    /// Serve the JSON API (and the UI, if `static_dir` is set).
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Load the deployment-shaped evaluation fixture into an empty store.
    Fixture,
    /// Record one clinician decision.
    Feedback {
        #[arg(long)]
        case: String,
        #[arg(long)]
        decision: Decision,
        #[arg(long)]
        reviewer: String,
        #[arg(long)]
        reason: Option<String>,
        #[arg(long)]
        category: Option<FeedbackCategory>,
    },
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {}", error_chain(&err));
        std::process::exit(1);
    }
}

// Library errors already embed their cause in the message; only append the
// causes that add something.
fn error_chain(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ServiceConfig::load(path)?,
        None => ServiceConfig::default(),
    };
    if let Some(dir) = cli.store {
        cfg.store_dir = dir;
    }
    let open_store = ServiceConfig::open_store;

    match cli.command {
        Command::Run {
            date,
            input,
            backend,
        } => {
            let store = open_store(&cfg)?;
            let backend = backend.unwrap_or(cfg.backend);
            let summary = commands::run_batch(&cfg, &store, date, &input, backend, cli.exec)?;
            for e in &summary.errors {
                eprintln!("  {}", e.message);
            }
            println!("{summary}");
        }
        Command::Report {
            window,
            replicates,
            seed,
            format,
            labels,
            maybe_negative,
        } => {
            let bootstrap = BootstrapConfig {
                replicates: replicates.unwrap_or(cfg.bootstrap.replicates),
                seed: seed.unwrap_or(cfg.bootstrap.seed),
                policy: CollapsePolicy {
                    maybe_positive: !maybe_negative,
                },
                exec: cli.exec,
            };
            anyhow::ensure!(bootstrap.replicates > 0, "replicates must be at least 1");
            let report = match labels {
                Some(path) => commands::labels_report(&path, &bootstrap)?,
                None => commands::store_report(&open_store(&cfg)?, window, &bootstrap),
            };
            print!("{}", commands::render_report(&report, format)?);
        }
        Command::Generate {
            n,
            seed,
            out,
            truth,
            date,
            mix,
        } => {
            let count = commands::generate(n, seed, date, mix, &out, truth.as_deref())?;
            println!("wrote {count} cases to {}", out.display());
        }
        Command::Serve { bind, static_dir } => {
            let store = Arc::new(open_store(&cfg)?);
            let snap = store.snapshot();
            tracing::info!(
                cases = snap.case_count(),
                feedback = snap.feedback_count(),
                "store loaded from {}",
                cfg.store_dir.display()
            );
            let state = AppState {
                store,
                bootstrap: cfg.bootstrap,
                exec: cli.exec,
            };
            let app = router(state, static_dir.or(cfg.static_dir));
            let bind = bind.unwrap_or(cfg.bind);
            serve(app, &bind)?;
        }
        Command::Fixture => {
            let (cases, feedback) = commands::load_fixture(&open_store(&cfg)?)?;
            println!(
                "loaded {cases} cases and {feedback} feedback records into {}",
                cfg.store_dir.display()
            );
        }
        Command::Feedback {
            case,
            decision,
            reviewer,
            reason,
            category,
        } => {
            let store = open_store(&cfg)?;
            let mut fb = ClinicianFeedback::new(case, decision, reviewer, Utc::now());
            if let Some(r) = reason {
                fb = fb.with_reason(r);
            }
            if let Some(c) = category {
                fb = fb.with_category(c);
            }
            let ack = store.record_feedback(fb)?;
            println!("{}", serde_json::to_string(&ack)?);
        }
    }
    Ok(())
}

#[tokio::main]
async fn serve(app: axum::Router, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .with_context(|| format!("cannot bind {bind}"))?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
