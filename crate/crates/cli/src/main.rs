use std::fmt::Display;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use emocmd_core::metrics::{parse_grid, sweep_csv};
use emocmd_core::script::parse_script;
use emocmd_core::{compute_metrics, replay, sweep, HubConfig};
use emocmd_hub::{run_script, Hub, Pacing, TickMode};

#[derive(Parser)]
#[command(
    name = "emocmd",
    version,
    about = "Steer two vehicles by voice; replay and measure sessions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the session hub until interrupted.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Address to listen on.
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
    /// Re-simulate a session log and write the per-tick trajectory as JSON.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write per-command metrics for a session log as a JSON array.
    Metrics {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time-to-target of the affective vehicle over an arousal grid, as CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated arousal values in [0, 1], e.g. 0.1,0.5,0.9.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a hub config and its emoji table.
    CheckConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Play a script file to a running hub as the recognizer, paced by the wall clock.
    MockRecognizer {
        /// Hub TCP address.
        #[arg(long, default_value = "127.0.0.1:7000")]
        hub: SocketAddr,
        #[arg(long)]
        script: PathBuf,
    },
}

/// A runtime failure reported as `error: <code>: <message>`.
struct Failure {
    code: &'static str,
    message: String,
}

impl Failure {
    fn new(code: &'static str, message: impl Display) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }
}

macro_rules! fail_with_code {
    ($e:expr) => {{
        let e = $e;
        Failure::new(e.code(), &e)
    }};
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))
}

fn load_config(path: &Path) -> Result<HubConfig, Failure> {
    HubConfig::load(path).map_err(|e| fail_with_code!(e))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Serve { config, host } => serve(load_config(&config)?, host),
        Command::Replay { log, out } => {
            let traj = replay(&read(&log)?).map_err(|e| fail_with_code!(e))?;
            let mut json = serde_json::to_vec(&traj).map_err(|e| Failure::new("io", e))?;
            json.push(b'\n');
            log::info!("replayed {} ticks", traj.records.len());
            write(&out, &json)
        }
        Command::Metrics { log, out } => {
            let traj = replay(&read(&log)?).map_err(|e| fail_with_code!(e))?;
            let metrics = compute_metrics(&traj);
            let mut json = serde_json::to_vec(&metrics).map_err(|e| Failure::new("io", e))?;
            json.push(b'\n');
            write(&out, &json)
        }
        Command::Sweep { config, grid, out } => {
            let config = load_config(&config)?;
            let grid = parse_grid(&grid).map_err(|e| fail_with_code!(e))?;
            let rows = sweep(&config.world, &config.mapping, &grid).map_err(|e| fail_with_code!(e))?;
            write(&out, sweep_csv(&rows).as_bytes())
        }
        Command::CheckConfig { config } => {
            let cfg = load_config(&config)?;
            let table = cfg.load_emoji_table().map_err(|e| fail_with_code!(e))?;
            println!(
                "ok: tcp {} ws {}, {} emoji centroids, state every {} ticks",
                cfg.tcp_port,
                cfg.ws_port,
                table.centroids().len(),
                cfg.broadcast_interval()
            );
            Ok(())
        }
        Command::MockRecognizer { hub, script } => {
            let text = String::from_utf8(read(&script)?).map_err(|e| Failure::new("malformed_script", e))?;
            let script = parse_script(&text).map_err(|e| fail_with_code!(e))?;
            let sent = runtime()?
                .block_on(run_script(&script, hub, Pacing::Wall))
                .map_err(|e| fail_with_code!(e))?;
            log::info!("sent {sent} utterances");
            Ok(())
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Runtime::new().map_err(|e| Failure::new("io", e))
}

fn serve(config: HubConfig, host: IpAddr) -> Result<(), Failure> {
    runtime()?.block_on(async {
        let hub = Hub::start(&config, host, TickMode::Wall)
            .await
            .map_err(|e| fail_with_code!(e))?;
        shutdown_signal().await;
        log::info!("shutting down");
        hub.shutdown().await.map_err(|e| fail_with_code!(e))
    })
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = std::env::var("EMOCMD_LOG_LEVEL").unwrap_or_else(|_| "info".into());
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp_millis()
        .init();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}: {}", f.code, f.message.replace('\n', " "));
            ExitCode::from(2)
        }
    }
}
