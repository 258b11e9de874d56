use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use vrloop_cli::commands::{self, TrainOptions};
use vrloop_cli::config::{RunConfig, ENV_BRIDGE_ADDR, ENV_OUT_DIR};

/// Train and analyse simulated users of a VR whack-a-mole game.
#[derive(Parser)]
#[command(name = "vrloop", version)]
struct Cli {
    /// Run config (TOML); defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = ENV_OUT_DIR)]
    out: Option<PathBuf>,
    /// Bridge address (listen or connect, per `bridge.server`).
    #[arg(long, global = true, env = ENV_BRIDGE_ADDR)]
    bridge_addr: Option<String>,
    /// Print the fully resolved config and exit.
    #[arg(long, global = true)]
    print_effective_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy with PPO.
    Train {
        /// Override `train.ppo.total_steps`.
        #[arg(long)]
        steps: Option<u64>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many updates.
        #[arg(long)]
        max_updates: Option<u64>,
        /// Record every environment's frames into this directory.
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Evaluate a checkpoint over the difficulty and placement grid.
    Eval {
        checkpoint: PathBuf,
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Re-run a recorded frame dump against a fresh application.
    Replay {
        dump: PathBuf,
        /// Steps per second; unthrottled when absent.
        #[arg(long)]
        throttle: Option<f64>,
    },
    /// Compute the reach envelope and check every target.
    Envelope {
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Forecast reward magnitudes for idealised episodes.
    RewardScale,
    /// Build the report bundle from evaluation logs.
    Report {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
    /// Serve applications over TCP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:0")]
        addr: String,
        /// Exit after serving this many connections.
        #[arg(long)]
        connections: Option<usize>,
    },
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    // clap already folded the environment into these flags.
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(addr) = &cli.bridge_addr {
        cfg.bridge.addr = addr.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load(&cli)?;
    match &cli.command {
        Some(Command::Train { steps: Some(s), resume, .. }) => {
            if resume.is_some() {
                bail!("--steps cannot be combined with --resume; the checkpoint fixes the budget");
            }
            cfg.train.ppo.total_steps = *s;
        }
        Some(Command::Eval { rounds: Some(r), .. }) => cfg.eval.rounds = *r,
        Some(Command::Envelope { resolution: Some(r) }) => cfg.envelope.resolution = *r,
        _ => {}
    }
    let cfg = cfg.resolve().context("invalid configuration")?;
    if cli.print_effective_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let Some(command) = cli.command else {
        bail!("no subcommand given (see --help)");
    };
    match command {
        Command::Train {
            resume,
            max_updates,
            record,
            quiet,
            ..
        } => {
            let s = commands::cmd_train(
                &cfg,
                &TrainOptions {
                    resume,
                    max_updates,
                    record_dir: record,
                    quiet,
                },
            )?;
            println!("{} updates, {} steps; checkpoint {}", s.updates, s.steps, s.checkpoint.display());
        }
        Command::Eval { checkpoint, .. } => {
            let s = commands::cmd_eval(&cfg, &checkpoint)?;
            println!("{} rounds; log {}; report {}", s.records.len(), s.log.display(), s.report_dir.display());
        }
        Command::Replay { dump, throttle } => {
            let s = commands::cmd_replay(&cfg, &dump, throttle)?;
            println!("replayed {} frames ({} steps, {} episodes): identical", s.frames, s.steps, s.episodes);
        }
        Command::Envelope { .. } => {
            let s = commands::cmd_envelope(&cfg)?;
            println!(
                "{} targets: {} reachable, {} boundary, {} unreachable",
                s.targets, s.reachable, s.boundary, s.unreachable
            );
        }
        Command::RewardScale => {
            for (kind, row) in commands::cmd_reward_scale(&cfg)? {
                println!("{kind:?}: cumulative reward {:.3} after {} steps", row.cum_total, row.step + 1);
            }
        }
        Command::Report { logs } => {
            let b = commands::cmd_report(&cfg, &logs)?;
            println!("{} files written to {}", b.files.len(), cfg.out_dir.join("report").display());
        }
        Command::Serve { addr, connections } => commands::cmd_serve(&cfg, &addr, connections)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
