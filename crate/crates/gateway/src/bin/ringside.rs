use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use log::info;

use ringside_core::decision::audit::verify_file;
use ringside_core::decision::reconstruct_scores;
use ringside_core::replay::{emit_paced, generate_synthetic, replay_file, EventSink, JsonLinesSink, SimConfig};
use ringside_gateway::{default_engine_config, server, Client, Gateway, GatewayConfig, GatewaySink};

#[derive(Parser)]
#[command(name = "ringside", version, about = "Scoring engine replay, gateway and audit tools")]
struct Cli {
    /// Gateway/engine TOML config. Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay an annotation JSON-Lines file as scoring events.
    Replay {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Playback multiplier; `inf` sends as fast as possible.
        #[arg(long, default_value_t = f64::INFINITY)]
        speed: f64,
        /// `stdout` or a gateway `host:port`.
        #[arg(long, default_value = "stdout")]
        out: String,
        #[arg(long)]
        token: Option<String>,
    },
    /// Generate a seeded synthetic match as scoring events.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Match length in seconds.
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        /// Share of events placed across the decision thresholds.
        #[arg(long, default_value_t = 0.2)]
        borderline: f64,
        /// Events per minute.
        #[arg(long, default_value_t = 60.0)]
        rate: f64,
        #[arg(long, default_value_t = f64::INFINITY)]
        speed: f64,
        #[arg(long, default_value = "stdout")]
        out: String,
        #[arg(long)]
        token: Option<String>,
    },
    /// Run the NDJSON gateway.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        /// Directory for per-match event and audit files.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Check an audit file's hash chain and print the recorded scores.
    VerifyAudit { path: PathBuf },
}

fn load_config(path: Option<&Path>) -> Result<GatewayConfig, String> {
    match path {
        None => Ok(GatewayConfig::new(default_engine_config())),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            GatewayConfig::from_toml_str(&text).map_err(|e| format!("{}: {e}", p.display()))
        }
    }
}

fn sink_for(out: &str, token: Option<&str>) -> Result<Box<dyn EventSink>, String> {
    if out == "stdout" {
        return Ok(Box::new(JsonLinesSink(BufWriter::new(io::stdout().lock()))));
    }
    let mut client = Client::connect(out).map_err(|e| format!("{out}: {e}"))?;
    if let Some(t) = token {
        client.hello(t).map_err(|e| e.to_string())?;
    }
    Ok(Box::new(GatewaySink::new(client)))
}

fn run(cli: Cli) -> Result<(), String> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Replay {
            file,
            seed,
            speed,
            out,
            token,
        } => {
            let sim = SimConfig {
                seed,
                speed,
                ..SimConfig::default()
            };
            let mut sink = sink_for(&out, token.as_deref())?;
            let summary = replay_file(&file, &sim, sink.as_mut()).map_err(|e| e.to_string())?;
            drop(sink);
            eprintln!("replayed {} events {:?}", summary.events, summary.per_type);
        }
        Cmd::Generate {
            seed,
            duration,
            borderline,
            rate,
            speed,
            out,
            token,
        } => {
            let sim = SimConfig {
                seed,
                speed,
                event_rate: rate,
                ..SimConfig::default()
            };
            let events = generate_synthetic(&sim, duration, borderline, &cfg.engine).map_err(|e| e.to_string())?;
            let mut sink = sink_for(&out, token.as_deref())?;
            let summary = emit_paced(events, speed, sink.as_mut()).map_err(|e| e.to_string())?;
            drop(sink);
            eprintln!("generated {} events", summary.events);
        }
        Cmd::Serve { addr, data_dir } => {
            let mut cfg = cfg;
            if data_dir.is_some() {
                cfg.data_dir = data_dir;
            }
            let gw = Arc::new(Gateway::new(cfg).map_err(|e| e.to_string())?);
            let handle = server::spawn(gw, &addr).map_err(|e| format!("{addr}: {e}"))?;
            info!("listening on {}", handle.local_addr());
            eprintln!("listening on {}", handle.local_addr());
            // runs until killed
            loop {
                std::thread::park();
            }
        }
        Cmd::VerifyAudit { path } => {
            let records = verify_file(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let scores = reconstruct_scores(&records);
            let mut stdout = io::stdout().lock();
            writeln!(
                stdout,
                "ok: {} entries, {} points over {} finalized events",
                records.len(),
                scores.points,
                scores.finalized
            )
            .map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
