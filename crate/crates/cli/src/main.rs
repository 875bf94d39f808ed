use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stylebal::config::RunConfig;
use stylebal::export::PendingPolicy;
use stylebal::pipeline;

/// Exit status for "completed, but the balance target was not met".
const EXIT_UNBALANCED: u8 = 2;

#[derive(Parser)]
#[command(name = "stylebal", version, about = "Rebalance detection datasets by class-wise style augmentation")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "stylebal.toml")]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PendingArg {
    Accept,
    Reject,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate the dataset; print class counts and domain pools.
    Ingest,
    /// Select minority-rich images and write the augmentation plan.
    Plan,
    /// Run the planned translations and fill the review queue.
    Generate,
    /// Serve the review API.
    ReviewServe {
        /// Overrides the configured bind address.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Export originals plus accepted copies, then verify balance.
    Export {
        /// Treat items still pending as accepted or rejected instead of refusing.
        #[arg(long, value_enum)]
        export_pending: Option<PendingArg>,
    },
    /// Recount an existing export and check its balance.
    Verify,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> stylebal::Result<ExitCode> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Ingest => {
            print!("{}", pipeline::ingest(&cfg)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Plan => {
            let out = pipeline::plan(&cfg)?;
            let plan = &out.plan;
            println!("config {}", cfg.hash());
            if !out.minority.is_empty() {
                println!("minority classes: {}", out.minority.join(", "));
                println!("selected images: {}", out.selected.len());
            }
            let trace: Vec<String> = plan.objective_trace.iter().map(|v| format!("{v:.4}")).collect();
            println!("objective trace: {}", trace.join(" "));
            println!("jobs: {}, copies: {}", plan.jobs.len(), plan.total_copies());
            println!("predicted distribution:\n{}", plan.predicted);
            println!("stop: {}", plan.stop.as_str());
            println!("plan written to {}", out.path.display());
            if plan.is_balanced() {
                Ok(ExitCode::SUCCESS)
            } else {
                println!(
                    "balance unreachable: best ratio {:.4} exceeds tolerance {}",
                    plan.final_objective().value(),
                    plan.tolerance
                );
                if out.selected.is_empty() {
                    println!("no image carries enough minority instances to be selected");
                }
                Ok(ExitCode::from(EXIT_UNBALANCED))
            }
        }
        Command::Generate => {
            let summary = pipeline::generate(&cfg)?;
            print!("{summary}");
            Ok(if summary.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::ReviewServe { bind } => {
            let addr = bind.unwrap_or_else(|| cfg.service.bind.clone());
            let prepared = pipeline::prepare(&cfg)?;
            let queue = pipeline::open_queue(&cfg)?;
            let app = stylebal_cli::router(queue, prepared.dataset);
            let rt = tokio::runtime::Runtime::new().map_err(|e| stylebal::Error::io(".", e))?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&addr)
                    .await
                    .map_err(|e| stylebal::Error::io(&addr, e))?;
                println!("review service listening on http://{addr}");
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
                    .map_err(|e| stylebal::Error::io(&addr, e))
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Export { export_pending } => {
            let policy = match export_pending {
                None => PendingPolicy::Block,
                Some(PendingArg::Accept) => PendingPolicy::Accept,
                Some(PendingArg::Reject) => PendingPolicy::Reject,
            };
            let out = pipeline::export(&cfg, policy)?;
            println!("exported {} entries to {}", out.manifest.entries.len(), cfg.out_dir().display());
            print!("{}", out.report);
            Ok(balanced_code(out.report.balanced))
        }
        Command::Verify => {
            let report = pipeline::verify(&cfg)?;
            print!("{report}");
            Ok(balanced_code(report.balanced))
        }
    }
}

fn balanced_code(balanced: bool) -> ExitCode {
    if balanced {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_UNBALANCED)
    }
}
