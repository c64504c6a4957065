use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use elicit_cli::{commands, CliError, ExperimentConfig};
use elicit_core::session::SessionStore;
use elicit_service::AppState;

#[derive(Parser)]
#[command(name = "elicit", version, about = "Quantile elicitation experiments and live sessions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that truthful reporting is optimal across beliefs, utilities and levels.
    Verify(ExperimentArgs),
    /// Export analytic and simulated payoff curves.
    Curve(ExperimentArgs),
    /// Rank reporting strategies by simulated mean utility.
    Simulate(ExperimentArgs),
    /// Serve the session API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output CSV; standard output when neither this nor `out` in the config is set.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "X")]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, value_name = "HOST:PORT", default_value = "127.0.0.1:8080")]
    address: String,
    /// Append-only event log, replayed on start.
    #[arg(long, value_name = "PATH", default_value = "elicit-events.jsonl")]
    log: PathBuf,
    /// Bearer token required to settle sessions.
    #[arg(long, env = "ELICIT_FACILITATOR_TOKEN", hide_env_values = true)]
    token: Option<String>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = Some(seed);
        }
        if let Some(out) = &self.out {
            config.out = Some(out.clone());
        }
        if let Some(t) = self.tolerance {
            config.verify.tolerance = t;
        }
        Ok(config)
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Config(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn run_verify(args: &ExperimentArgs) -> Result<ExitCode, CliError> {
    let config = args.load()?;
    let outcome = commands::verify(&config)?;
    let mut out = output(config.out.as_deref())?;
    outcome.write_csv(&mut out)?;
    out.flush()?;
    let failed = outcome.unexpected_failures();
    eprintln!(
        "verify: {} cases, {failed} failed, {} expected failures, max gap {:.2e} (tolerance {:.0e})",
        outcome.rows.len(),
        outcome.expected_failures(),
        outcome.max_gap(),
        config.verify.tolerance
    );
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn run_curve(args: &ExperimentArgs) -> Result<ExitCode, CliError> {
    let config = args.load()?;
    let mut out = output(config.out.as_deref())?;
    let rows = commands::curve(&config, &mut out)?;
    out.flush()?;
    eprintln!("curve: {rows} points");
    Ok(ExitCode::SUCCESS)
}

fn run_simulate(args: &ExperimentArgs) -> Result<ExitCode, CliError> {
    let config = args.load()?;
    let mut out = output(config.out.as_deref())?;
    commands::simulate(&config, &mut out)?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

async fn shutdown_signal() {
    let interrupt = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = interrupt => {},
        _ = terminate => {},
    }
}

fn run_serve(args: &ServeArgs) -> Result<ExitCode, CliError> {
    let address: SocketAddr =
        args.address.parse().map_err(|e| CliError::Config(format!("invalid address {:?}: {e}", args.address)))?;
    let store = SessionStore::open(&args.log)
        .map_err(|e| CliError::Config(format!("cannot use log {}: {e}", args.log.display())))?;
    eprintln!("replayed {} sessions from {}", store.len(), args.log.display());
    let mut app = AppState::new(Arc::new(store));
    if let Some(token) = &args.token {
        app = app.with_facilitator_token(token.as_str());
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(address)
            .await
            .map_err(|e| CliError::Config(format!("cannot bind {address}: {e}")))?;
        let bound = listener.local_addr()?;
        println!("listening on http://{bound}");
        io::stdout().flush()?;
        elicit_service::serve(listener, app, shutdown_signal()).await?;
        eprintln!("shut down; event log flushed");
        Ok(ExitCode::SUCCESS)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify(a) => run_verify(a),
        Command::Curve(a) => run_curve(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Serve(a) => run_serve(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("elicit: {e}");
        ExitCode::from(e.exit_code())
    })
}
