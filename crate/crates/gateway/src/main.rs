use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use spv_core::guidance::GuidanceMode;
use spv_core::trials::GoalOrder;
use spv_core::{load_config, Config};
use spv_gateway::cli::{self, AutopilotArgs, PilotKind};
use spv_gateway::server::{start, ServeOptions};

#[derive(Parser)]
#[command(name = "spv-nav", version, about = "Simulated prosthetic vision navigation")]
struct Args {
    /// TOML configuration; the bundled default when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial headless and print its metrics.
    RunAutopilot {
        #[arg(long, default_value = "env1")]
        env: String,
        #[arg(long, default_value = "RoboticG")]
        mode: GuidanceMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "door-then-bin")]
        order: GoalOrder,
        /// Start pose index.
        #[arg(long, default_value_t = 0)]
        start: usize,
        #[arg(long, value_enum, default_value = "autopilot")]
        pilot: PilotKind,
        /// Write the trial log (JSON lines) here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Write phosphene and scene PGM images into this directory.
        #[arg(long)]
        dump_pgm: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        dump_every: u64,
    },
    /// Run a full scheduled session headless and write its log.
    RunSession {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "sim")]
        subject: String,
        #[arg(long, value_enum, default_value = "follower")]
        pilot: PilotKind,
        /// Log path; `logs/session-<subject>-<seed>.jsonl` by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize session logs into the results table and report files.
    Analyze {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Serve the websocket gateway.
    Serve {
        #[arg(long, env = "SPV_PORT")]
        port: Option<u16>,
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        tick_hz: Option<f64>,
        #[arg(long)]
        static_dir: Option<String>,
        #[arg(long)]
        log_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "subject")]
        subject: String,
    },
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let args = Args::parse();
    let mut config = match &args.config {
        Some(p) => load_config(p).with_context(|| format!("loading {}", p.display()))?,
        None => Config::bundled_default(),
    };
    match args.command {
        Command::RunAutopilot {
            env,
            mode,
            seed,
            order,
            start,
            pilot,
            log,
            dump_pgm,
            dump_every,
        } => {
            let record = cli::run_autopilot(
                &config,
                &AutopilotArgs {
                    env,
                    mode,
                    order,
                    seed,
                    start,
                    pilot,
                    log,
                    dump_pgm,
                    dump_every,
                },
            )?;
            println!("{}", cli::trial_line(&record));
        }
        Command::RunSession { seed, subject, pilot, out } => {
            let out = out.unwrap_or_else(|| PathBuf::from(format!("logs/session-{subject}-{seed}.jsonl")));
            let records = cli::run_full_session(&config, seed, &subject, pilot, &out)?;
            print!("{}", cli::session_report(&records));
            println!("log written to {}", out.display());
        }
        Command::Analyze { logs, out } => {
            let analysis = cli::analyze(&logs, &out)?;
            for w in &analysis.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", analysis.table);
            println!("\nreport written to {}", out.display());
        }
        Command::Serve {
            port,
            host,
            tick_hz,
            static_dir,
            log_dir,
            seed,
            subject,
        } => {
            let g = &mut config.gateway;
            if let Some(p) = port {
                g.port = p;
            }
            if let Some(h) = host {
                g.host = h;
            }
            if let Some(hz) = tick_hz {
                g.tick_hz = hz;
            }
            if let Some(d) = static_dir {
                g.static_dir = d;
            }
            config.validate()?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let server = start(config, ServeOptions { seed, subject, log_dir }).await?;
                tracing::info!("listening on {}", server.addr);
                if let Some(p) = &server.log_path {
                    tracing::info!("session log {}", p.display());
                }
                server.handle.await??;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(())
}
