//! Subcommand implementations. Each returns a summary on success; every
//! declared output has been written by then.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use vrloop::armsim::forward_kinematics;
use vrloop::bridge::{read_dump, AppEndpoint, FrameHandler, Message};
use vrloop::tools::{
    check_targets, metrics_from_log, reach_envelope, report, reward_scale_report, whac_a_mole_targets,
    Reach, ReportBundle, RoundMetrics, ScaleRow, ScalingScenario, ScenarioKind,
};
use vrloop::trainer::{
    evaluate_policy, evaluation_grid, ActionMode, Checkpoint, EvalRecord, Policy, TrainError, TrainLogRecord,
    Trainer,
};
use vrloop::whacapp::{Placement, WhacApp};

use crate::config::{EvalMode, RunConfig};
use crate::net;

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("cannot write {}", path.display()))
}

/// The serde name of a unit enum variant.
fn label<T: Serialize>(v: T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}

fn unix_seconds(t: SystemTime) -> f64 {
    t.duration_since(UNIX_EPOCH).unwrap_or_default().as_secs_f64()
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    version: &'a str,
    started_unix: f64,
    finished_unix: f64,
    outputs: Vec<String>,
}

/// Timestamps live only in this sidecar so every other output is
/// reproducible byte for byte.
fn write_metadata(out: &Path, command: &str, started: SystemTime, outputs: &[PathBuf]) -> Result<()> {
    let meta = Metadata {
        command,
        version: env!("CARGO_PKG_VERSION"),
        started_unix: unix_seconds(started),
        finished_unix: unix_seconds(SystemTime::now()),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    write_atomic(&out.join(format!("metadata_{command}.json")), serde_json::to_string_pretty(&meta)?.as_bytes())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).with_context(|| format!("cannot read checkpoint {}", path.display()))?;
    Checkpoint::decode(&bytes).with_context(|| format!("cannot load checkpoint {}", path.display()))
}

fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &ckpt.encode())
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Continue from this checkpoint; its embedded training config wins.
    pub resume: Option<PathBuf>,
    /// Stop after this many updates in this invocation.
    pub max_updates: Option<u64>,
    /// Write one frame dump per environment here.
    pub record_dir: Option<PathBuf>,
    pub quiet: bool,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub updates: u64,
    pub steps: u64,
    pub log: PathBuf,
    pub checkpoint: PathBuf,
    pub last: Option<TrainLogRecord>,
}

pub fn cmd_train(cfg: &RunConfig, opts: &TrainOptions) -> Result<TrainSummary> {
    let started = SystemTime::now();
    let out = &cfg.out_dir;
    let ckpt_dir = out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).with_context(|| format!("cannot create {}", ckpt_dir.display()))?;

    let resumed = opts.resume.as_deref().map(read_checkpoint).transpose()?;
    let mut effective = cfg.clone();
    if let Some(c) = &resumed {
        effective.train = Trainer::config_of(c)?;
    }
    let config_path = out.join("effective_config.toml");
    write_atomic(&config_path, effective.to_toml()?.as_bytes())?;

    let train_cfg = effective.train.clone();
    let conn = net::connect(
        &effective,
        &train_cfg.env.game,
        train_cfg.ppo.n_envs,
        &config_path,
        opts.record_dir.as_deref(),
    )?;
    let mut trainer = match &resumed {
        Some(c) => Trainer::resume(c, conn.transports)?,
        None => Trainer::new(train_cfg, conn.transports)?,
    };

    let log_path = out.join("train_log.jsonl");
    let mut log = OpenOptions::new()
        .create(true)
        .write(true)
        .append(resumed.is_some())
        .truncate(resumed.is_none())
        .open(&log_path)
        .with_context(|| format!("cannot open {}", log_path.display()))?;
    let mut outputs = vec![config_path, log_path.clone()];
    let mut done = 0;
    let mut last = None;
    while !trainer.is_done() && opts.max_updates.is_none_or(|m| done < m) {
        let rec = match trainer.update() {
            Ok(r) => r,
            Err(e @ TrainError::Diverged(_)) => {
                let path = out.join("diverged.ckpt");
                save_checkpoint(&path, &trainer.checkpoint()?)?;
                return Err(e).with_context(|| format!("state before the failed update saved to {}", path.display()));
            }
            Err(e) => return Err(e.into()),
        };
        writeln!(log, "{}", serde_json::to_string(&rec)?)?;
        log.flush()?;
        done += 1;
        if !opts.quiet {
            eprintln!(
                "update {:>4}  steps {:>9}  hits {:>6}  reward {:>9}  kl {:.4}",
                rec.update,
                rec.steps,
                rec.mean_hits.map_or("-".into(), |h| format!("{h:.1}")),
                rec.mean_episode_reward.map_or("-".into(), |r| format!("{r:.1}")),
                rec.approx_kl
            );
        }
        if cfg.checkpoint_every > 0 && rec.update % cfg.checkpoint_every == 0 {
            let path = ckpt_dir.join(format!("update_{:06}.ckpt", rec.update));
            save_checkpoint(&path, &trainer.checkpoint()?)?;
            outputs.push(path);
        }
        last = Some(rec);
    }
    let final_path = out.join("final.ckpt");
    save_checkpoint(&final_path, &trainer.checkpoint()?)?;
    outputs.push(final_path.clone());
    trainer.close()?;
    drop(trainer);
    conn.server.finish()?;
    write_metadata(out, "train", started, &outputs)?;
    Ok(TrainSummary {
        updates: trainer_updates(&final_path)?,
        steps: read_checkpoint(&final_path)?.steps,
        log: log_path,
        checkpoint: final_path,
        last,
    })
}

fn trainer_updates(path: &Path) -> Result<u64> {
    Ok(read_checkpoint(path)?.updates)
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub records: Vec<EvalRecord>,
    pub log: PathBuf,
    pub report_dir: PathBuf,
    pub warnings: Vec<String>,
}

pub fn load_policy(ckpt: &Checkpoint) -> Result<(Policy, vrloop::trainer::TrainConfig)> {
    let config = Trainer::config_of(ckpt)?;
    let shape = config.policy_shape();
    ensure!(
        shape.param_count() == ckpt.params.len(),
        "checkpoint holds {} parameters but its config needs {}",
        ckpt.params.len(),
        shape.param_count()
    );
    Ok((Policy { shape, params: ckpt.params.clone() }, config))
}

pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<EvalSummary> {
    let started = SystemTime::now();
    let ckpt = read_checkpoint(checkpoint)?;
    let (policy, train_cfg) = load_policy(&ckpt)?;
    let mode = match cfg.eval.mode {
        EvalMode::Deterministic => ActionMode::Deterministic,
        EvalMode::Stochastic => ActionMode::Stochastic,
        EvalMode::Random => ActionMode::UniformRandom,
    };
    let records = evaluate_policy(&policy, &train_cfg.env, &evaluation_grid(), cfg.eval.rounds, mode, cfg.seed)?;
    let out = &cfg.out_dir;
    fs::create_dir_all(out)?;
    let log = out.join("eval_log.jsonl");
    let mut text = String::new();
    for r in &records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    write_atomic(&log, text.as_bytes())?;
    let metrics: Vec<RoundMetrics> = metrics_from_log(&text)?;
    let bundle = report(&metrics)?;
    let report_dir = out.join("report");
    bundle.write_to(&report_dir)?;
    for w in &bundle.warnings {
        eprintln!("warning: {w}");
    }
    let mut outputs = vec![log.clone()];
    outputs.extend(bundle.files.iter().map(|f| report_dir.join(&f.name)));
    write_metadata(out, "eval", started, &outputs)?;
    Ok(EvalSummary {
        records,
        log,
        report_dir,
        warnings: bundle.warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySummary {
    pub frames: usize,
    pub steps: usize,
    pub episodes: usize,
}

/// Feed the recorded requests to a fresh application and require every
/// reply to match the recording byte for byte.
pub fn cmd_replay(cfg: &RunConfig, dump: &Path, throttle_hz: Option<f64>) -> Result<ReplaySummary> {
    let bytes = fs::read(dump).with_context(|| format!("cannot read frame dump {}", dump.display()))?;
    let frames = read_dump(&bytes).map_err(|(i, e)| anyhow::anyhow!("frame {i} of the dump is corrupt: {e}"))?;
    let base = &cfg.train.env.game;
    for (i, (msg, _)) in frames.iter().enumerate() {
        if let Message::Reset(c) = msg {
            let mut recorded = base.clone();
            recorded.apply(c).with_context(|| format!("frame {i}: bad episode config"))?;
            if recorded.difficulty != base.difficulty {
                bail!(
                    "the recording was made at difficulty {} but the replay config uses {}",
                    label(recorded.difficulty),
                    label(base.difficulty)
                );
            }
        }
    }
    let mut endpoint = AppEndpoint::new(WhacApp::new(base.clone())?);
    let pause = throttle_hz.filter(|h| *h > 0.0).map(|h| Duration::from_secs_f64(1.0 / h));
    let (mut steps, mut episodes) = (0, 0);
    let mut i = 0;
    while i < frames.len() {
        let (msg, raw) = &frames[i];
        match msg {
            Message::StateUpdate(_) => {
                steps += 1;
                if let Some(p) = pause {
                    std::thread::sleep(p);
                }
            }
            Message::Reset(_) => episodes += 1,
            Message::Hello(_) | Message::Close => {}
            other => bail!("frame {i}: expected a request, found {:?}", other.msg_type()),
        }
        let reply = endpoint
            .handle_frame(raw)
            .with_context(|| format!("replay failed at frame {i}"))?;
        match reply {
            None => {
                i += 1;
                break;
            }
            Some(reply) => {
                let Some((_, recorded)) = frames.get(i + 1) else {
                    bail!("replay diverged at frame {}: the recording ends before the reply", i + 1);
                };
                if *recorded != reply {
                    let offset = recorded.iter().zip(&reply).position(|(a, b)| a != b).unwrap_or(recorded.len().min(reply.len()));
                    bail!("replay diverged at frame {} (byte {offset} of the frame)", i + 1);
                }
                i += 2;
            }
        }
    }
    ensure!(i == frames.len(), "frame {i}: data after CLOSE");
    Ok(ReplaySummary {
        frames: frames.len(),
        steps,
        episodes,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeSummary {
    pub resolution: usize,
    pub tolerance: f64,
    pub bare_hand_radius: f64,
    pub hammer_radius: f64,
    pub targets: usize,
    pub reachable: usize,
    pub boundary: usize,
    pub unreachable: usize,
}

#[derive(Serialize)]
struct TargetRow {
    placement: Placement,
    row: usize,
    col: usize,
    x: f64,
    y: f64,
    z: f64,
    bare_hand: Reach,
    with_hammer: Reach,
}

pub fn cmd_envelope(cfg: &RunConfig) -> Result<EnvelopeSummary> {
    let started = SystemTime::now();
    let arm = &cfg.train.env.arm;
    let opts = &cfg.envelope;
    let env = reach_envelope(&arm.model, opts.resolution, &arm.frame)?;
    let sites = whac_a_mole_targets(&cfg.train.env.game);
    let positions: Vec<_> = sites.iter().map(|s| nalgebra::Vector3::from(s.position)).collect();
    let bare = check_targets(&env.bare_hand, &positions, opts.tolerance)?;
    let hammer = check_targets(&env.with_hammer, &positions, opts.tolerance)?;
    let out = &cfg.out_dir;
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for ((s, b), h) in sites.iter().zip(&bare).zip(&hammer) {
        w.serialize(TargetRow {
            placement: s.placement,
            row: s.row,
            col: s.col,
            x: s.position[0],
            y: s.position[1],
            z: s.position[2],
            bare_hand: *b,
            with_hammer: *h,
        })?;
    }
    let targets_csv = w.into_inner().map_err(|e| e.into_error())?;
    let count = |r: Reach| hammer.iter().filter(|x| **x == r).count();
    let summary = EnvelopeSummary {
        resolution: opts.resolution,
        tolerance: opts.tolerance,
        bare_hand_radius: env.bare_hand.radius,
        hammer_radius: env.with_hammer.radius,
        targets: sites.len(),
        reachable: count(Reach::Reachable),
        boundary: count(Reach::Boundary),
        unreachable: count(Reach::Unreachable),
    };
    let files = [
        ("envelope_bare_hand.csv", env.bare_hand.to_csv()?.into_bytes()),
        ("envelope_hammer.csv", env.with_hammer.to_csv()?.into_bytes()),
        ("targets.csv", targets_csv),
        ("envelope_summary.json", serde_json::to_string_pretty(&summary)?.into_bytes()),
    ];
    let mut outputs = Vec::new();
    for (name, bytes) in files {
        let p = out.join(name);
        write_atomic(&p, &bytes)?;
        outputs.push(p);
    }
    write_metadata(out, "envelope", started, &outputs)?;
    Ok(summary)
}

pub fn cmd_reward_scale(cfg: &RunConfig) -> Result<Vec<(ScenarioKind, ScaleRow)>> {
    let started = SystemTime::now();
    let opts = &cfg.reward_scale;
    let env = &cfg.train.env;
    let game = &env.game;
    let rest = env.arm.frame.map_point(&forward_kinematics(&env.arm.model, &[0.0; 3]).1.position);
    let centre = game.frame().center();
    let kinds = if opts.scenarios.is_empty() {
        vec![
            ScenarioKind::WorstCase,
            ScenarioKind::BestCase,
            ScenarioKind::LinearInterp,
            ScenarioKind::QuadraticInterp,
        ]
    } else {
        opts.scenarios.clone()
    };
    let out = &cfg.out_dir;
    fs::create_dir_all(out)?;
    let mut outputs = Vec::new();
    let mut finals = Vec::new();
    for kind in kinds {
        let scenario = ScalingScenario {
            kind,
            horizon: opts.horizon.unwrap_or((game.round_duration / env.dt).round() as usize),
            dt: env.dt,
            initial: opts.initial.unwrap_or([rest.x, rest.y, rest.z]),
            target: opts.target.unwrap_or([centre.x, centre.y, centre.z]),
            effort_level: opts.effort_level,
        };
        let rep = reward_scale_report(&game.weights, &scenario, game)?;
        let name = label(kind);
        let p = out.join(format!("reward_scale_{name}.csv"));
        write_atomic(&p, rep.to_csv()?.as_bytes())?;
        outputs.push(p);
        finals.push((kind, rep.final_row().clone()));
    }
    let p = out.join("reward_scale_summary.json");
    let summary: Vec<_> = finals.iter().map(|(k, r)| serde_json::json!({ "scenario": k, "final": r })).collect();
    write_atomic(&p, serde_json::to_string_pretty(&summary)?.as_bytes())?;
    outputs.push(p);
    write_metadata(out, "reward-scale", started, &outputs)?;
    Ok(finals)
}

pub fn cmd_report(cfg: &RunConfig, logs: &[PathBuf]) -> Result<ReportBundle> {
    let started = SystemTime::now();
    ensure!(!logs.is_empty(), "no log files given");
    let mut metrics = Vec::new();
    for path in logs {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        metrics.extend(metrics_from_log(&text).with_context(|| format!("in {}", path.display()))?);
    }
    let bundle = report(&metrics)?;
    let dir = cfg.out_dir.join("report");
    bundle.write_to(&dir)?;
    for w in &bundle.warnings {
        eprintln!("warning: {w}");
    }
    let outputs: Vec<PathBuf> = bundle.files.iter().map(|f| dir.join(&f.name)).collect();
    write_metadata(&cfg.out_dir, "report", started, &outputs)?;
    Ok(bundle)
}

/// Serve applications over TCP, announcing the bound address on stdout.
pub fn cmd_serve(cfg: &RunConfig, addr: &str, connections: Option<usize>) -> Result<()> {
    let listener = net::bind(addr)?;
    let mut stdout = std::io::stdout();
    writeln!(stdout, "{}{}", net::LISTENING, listener.local_addr()?)?;
    stdout.flush()?;
    net::serve(listener, &cfg.train.env.game, connections)
}
