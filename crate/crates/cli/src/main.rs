//! `teachbench`: serve, sample, simulate and evaluate without the UI.

mod commands;
mod config;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use teachbench_core::Pipeline;

use config::{Config, Options};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] teachbench_core::Error),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config_error",
            CliError::Core(e) => e.code(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.code() {
            "config_error" => 2,
            "provider_error" => 3,
            "io_error" => 1,
            _ => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(name = "teachbench", version, about = "Tutoring-agent workbench")]
struct Cli {
    /// TOML file whose keys mirror the long flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    options: Options,
    #[command(subcommand)]
    command: Command,
}

fn parse_pipeline(s: &str) -> Result<Pipeline, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown pipeline {s:?}; expected ours, baseline or knowledge_only"))
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP API over the project store.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Built UI bundle to serve.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
    /// Create a starter project in the store.
    Init {
        #[arg(long)]
        id: String,
        #[arg(long)]
        name: Option<String>,
        /// Profiles JSON (as written by `sample`) to include.
        #[arg(long)]
        profiles: Option<PathBuf>,
    },
    /// Pick diverse profiles from the level grid; writes <out>/profiles.json.
    Sample {
        #[arg(long, default_value_t = 9)]
        k: usize,
        /// Grid index, or five levels such as 0,2,1,0,2.
        #[arg(long, default_value = "0")]
        seed: String,
        #[arg(long, default_value = "ours", value_parser = parse_pipeline)]
        pipeline: Pipeline,
    },
    /// Simulate agent/student batches for one profile.
    Autochat {
        #[arg(long)]
        profile: String,
        /// Profiles JSON searched when the project lacks the profile.
        #[arg(long)]
        profiles: Option<PathBuf>,
    },
    /// Evaluation dialogues and reports.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Zip a stored project into <out>/<id>.zip.
    Export {
        #[arg(long)]
        id: String,
    },
    /// Unpack a project archive into the store.
    Import { archive: PathBuf },
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Fixed interviewer questions: one quiz per component plus trait questions.
    Interview {
        #[arg(long)]
        profile: String,
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// Interview script JSON replacing the default questions.
        #[arg(long)]
        script: Option<PathBuf>,
    },
    /// Model tutor teaching the simulated student.
    Lesson {
        #[arg(long)]
        profile: String,
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long)]
        script: Option<PathBuf>,
    },
    /// Bias and believability tables from rater records.
    Report {
        /// Directory of record JSON files.
        #[arg(long)]
        records: PathBuf,
        /// Profiles JSON; defaults to the project's profiles.
        #[arg(long)]
        profiles: Option<PathBuf>,
    },
}

async fn run(cli: Cli) -> Result<(), CliError> {
    let config = Config::resolve(cli.options, cli.config.as_deref())?;
    match cli.command {
        Command::Serve { bind, static_dir } => commands::serve(&config, bind, static_dir).await,
        Command::Init { id, name, profiles } => commands::init(&config, &id, name, profiles.as_deref()),
        Command::Sample { k, seed, pipeline } => commands::sample(&config, k, &seed, pipeline),
        Command::Autochat { profile, profiles } => commands::autochat(&config, &profile, profiles.as_deref()).await,
        Command::Eval { command } => match command {
            EvalCommand::Interview { profile, profiles, script } => {
                commands::dialogue(&config, commands::Kind::Interview, &profile, profiles.as_deref(), script.as_deref())
                    .await
            }
            EvalCommand::Lesson { profile, profiles, script } => {
                commands::dialogue(&config, commands::Kind::Lesson, &profile, profiles.as_deref(), script.as_deref())
                    .await
            }
            EvalCommand::Report { records, profiles } => commands::report(&config, &records, profiles.as_deref()),
        },
        Command::Export { id } => commands::export(&config, &id),
        Command::Import { archive } => commands::import(&config, &archive),
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(e.exit_code())
        }
    }
}
