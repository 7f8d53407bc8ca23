use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use initiative_cli::config::{Overrides, RunConfig};
use initiative_cli::engine::{ModelKind, Models};
use initiative_cli::server::{serve, AppState, ServeLock};
use initiative_cli::{pipeline, repl, CliError, CliResult};
use initiative_core::corpus::Split;

#[derive(Parser)]
#[command(name = "initiative", version, about = "Train, evaluate and chat with the prompt-controlled dialogue models")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic augmented corpus.
    GenData {
        #[arg(long, default_value_t = 100)]
        n: usize,
    },
    /// Validate the corpus and build the vocabulary and statistics.
    Prepare,
    TrainUnified,
    TrainClassifier,
    TrainDiscrete {
        /// Train the twin that never sees prompt tokens.
        #[arg(long)]
        ablation: bool,
    },
    TrainBridge,
    Evaluate {
        #[arg(long, default_value = "discrete")]
        model: ModelKind,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        ablation: bool,
    },
    /// Interactive terminal chat.
    Chat {
        #[arg(long, default_value = "continuous")]
        model: ModelKind,
    },
    /// HTTP chat service.
    Serve {
        #[arg(long, default_value = "continuous")]
        model: ModelKind,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
}

fn run(cli: Cli) -> CliResult<Option<serde_json::Value>> {
    let overrides = Overrides {
        corpus: cli.corpus,
        out: cli.out,
        seed: cli.seed,
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    Ok(Some(match cli.command {
        Command::GenData { n } => pipeline::gen_data(&cfg, n)?,
        Command::Prepare => pipeline::prepare(&cfg)?,
        Command::TrainUnified => pipeline::train_unified_cmd(&cfg)?,
        Command::TrainClassifier => pipeline::train_classifier_cmd(&cfg)?,
        Command::TrainDiscrete { ablation } => pipeline::train_discrete_cmd(&cfg, ablation)?,
        Command::TrainBridge => pipeline::train_bridge_cmd(&cfg)?,
        Command::Evaluate { model, split, ablation } => pipeline::evaluate_cmd(&cfg, model, split, ablation)?.0,
        Command::Chat { model } => {
            let models = Models::load(&cfg, &[model])?;
            let stdin = std::io::stdin();
            repl::run_repl(&models, model, cfg.seed, stdin.lock(), std::io::stdout())?;
            return Ok(None);
        }
        Command::Serve { model, bind } => {
            run_server(&cfg, model, bind)?;
            return Ok(None);
        }
    }))
}

fn run_server(cfg: &RunConfig, model: ModelKind, bind: SocketAddr) -> CliResult<()> {
    let models = Models::load_available(cfg)?;
    let state = Arc::new(AppState::new(models, model, cfg.seed, cfg.sessions_dir.clone())?);
    let _lock = ServeLock::acquire(&cfg.out)?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::io(&cfg.out, e))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .map_err(|e| CliError::io(std::path::Path::new(&bind.to_string()), e))?;
        log::info!("serving on {bind}");
        eprintln!("listening on http://{}", listener.local_addr().map_err(|e| CliError::io(&cfg.out, e))?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        serve(listener, state, shutdown).await.map_err(|e| CliError::io(&cfg.out, e))
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(summary) => {
            if let Some(s) = summary {
                println!("{s}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
