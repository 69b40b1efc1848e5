//! `campaign`: run, resume and analyse framing campaigns.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime error.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use rally_core::analytics::{
    cohen_kappa, compute_metrics, mann_whitney_keyterms, merge_labels, read_labels, render_json_lines,
    render_table, simulated_labels, KeyTermReport,
};
use rally_core::eventlog::{read_log, validate_log, LogSink};
use rally_core::model::{validate_config, CampaignConfig, EventKind, PlatformKind, StrategyId, UserId};
use rally_core::orchestrator::{replay_campaign, run_campaign, RunOptions, RunOutcome};
use rally_core::platform::ReplayPlatform;
use rally_core::simulator::{calibrate_reply_propensities, CalibrationTarget, SimulatedPlatform};
use rally_core::{fixtures, VolunteerLabel};

#[derive(Parser)]
#[command(name = "campaign", version, about = "Message-framing campaigns: run, resume, report")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    JsonLines,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlatformArg {
    Sim,
    Replay,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign and write its event log.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's random_seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        platform: Option<PlatformArg>,
        /// Recorded log for the replay platform; overrides the config.
        #[arg(long)]
        replay_log: Option<PathBuf>,
        /// Defaults to $CAMPAIGN_LOG_DIR/campaign-<seed>.log.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop after this many events; `resume` continues from there.
        #[arg(long)]
        max_events: Option<usize>,
    },
    /// Continue an interrupted run from its log.
    Resume {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        max_events: Option<usize>,
    },
    /// Participation metrics and tests for a log.
    Report {
        #[arg(long)]
        log: PathBuf,
        /// One final label file, or two coder files (then --tiebreak is
        /// needed if they disagree).
        #[arg(long, num_args = 1..=2)]
        labels: Vec<PathBuf>,
        #[arg(long)]
        tiebreak: Option<PathBuf>,
        /// Use the on/off-topic tags simulated replies carry.
        #[arg(long, conflicts_with = "labels")]
        sim_labels: bool,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Terms that distinguish volunteers' post history from non-repliers'.
    Keyterms {
        #[arg(long)]
        log: PathBuf,
        /// One `<user>.txt` per targeted user, one post per line.
        #[arg(long)]
        history: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        top_fraction: f64,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Check a config or a log without running anything.
    Validate {
        #[arg(long, required_unless_present = "log")]
        config: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Write the shipped fixtures into a directory.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit per-arm reply propensities to target reply rates.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        /// strategy=rate pairs; defaults to the shipped summary rates.
        #[arg(long = "target", value_parser = parse_target)]
        targets: Vec<CalibrationTarget>,
        #[arg(long, default_value_t = 10)]
        iterations: usize,
        /// Overrides groups_per_strategy_per_topic for the pilot runs.
        #[arg(long)]
        groups: Option<u32>,
    },
}

fn parse_target(s: &str) -> Result<CalibrationTarget, String> {
    let (arm, rate) = s.split_once('=').ok_or("expected strategy=rate")?;
    let reply_rate = rate.parse().map_err(|e| format!("{rate}: {e}"))?;
    Ok(CalibrationTarget {
        strategy: StrategyId::new(arm),
        reply_rate,
    })
}

/// A failure the user fixes by changing input, not a crash.
#[derive(Debug)]
struct Invalid(Vec<String>);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for line in &self.0 {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Invalid {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.downcast_ref::<Invalid>() {
            Some(invalid) => {
                eprint!("{invalid}");
                ExitCode::from(1)
            }
            None => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        },
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            seed,
            platform,
            replay_log,
            out,
            max_events,
        } => run(&config, seed, platform, replay_log, out, max_events),
        Command::Resume { log, max_events } => resume(&log, max_events),
        Command::Report {
            log,
            labels,
            tiebreak,
            sim_labels,
            format,
        } => report(&log, &labels, tiebreak.as_deref(), sim_labels, format),
        Command::Keyterms {
            log,
            history,
            top_fraction,
            format,
        } => keyterms(&log, &history, top_fraction, format),
        Command::Validate { config, log } => validate(config.as_deref(), log.as_deref()),
        Command::Fixtures { out } => {
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for name in fixtures::write_all(&out)? {
                println!("{}", out.join(name).display());
            }
            Ok(())
        }
        Command::Calibrate {
            config,
            targets,
            iterations,
            groups,
        } => calibrate(&config, targets, iterations, groups),
    }
}

fn load_config(path: &Path) -> Result<CampaignConfig> {
    let config = CampaignConfig::load(path)?;
    let violations = validate_config(&config);
    if !violations.is_empty() {
        return Err(Invalid(violations.iter().map(|v| v.to_string()).collect()).into());
    }
    Ok(config)
}

/// The resolved config a run used, kept next to its log for `resume`.
fn sidecar(log: &Path) -> PathBuf {
    let mut name = log.file_name().unwrap_or_default().to_os_string();
    name.push(".config.json");
    log.with_file_name(name)
}

fn default_out(seed: u64) -> PathBuf {
    let dir = std::env::var_os("CAMPAIGN_LOG_DIR").map_or_else(|| PathBuf::from("."), PathBuf::from);
    dir.join(format!("campaign-{seed}.log"))
}

fn summarize(outcome: &RunOutcome, out: &Path) {
    let calls = outcome
        .events
        .iter()
        .filter(|e| e.kind == EventKind::OutboundCall)
        .count();
    println!(
        "{:?}: {} events, {calls} calls to action -> {}",
        outcome.stop,
        outcome.events.len(),
        out.display()
    );
}

fn run(
    config_path: &Path,
    seed: Option<u64>,
    platform: Option<PlatformArg>,
    replay_log: Option<PathBuf>,
    out: Option<PathBuf>,
    max_events: Option<usize>,
) -> Result<()> {
    let mut config = load_config(config_path)?;
    if let Some(seed) = seed {
        config.random_seed = seed;
    }
    match platform {
        Some(PlatformArg::Sim) => config.platform.kind = PlatformKind::Sim,
        Some(PlatformArg::Replay) => config.platform.kind = PlatformKind::Replay,
        None => {}
    }
    if let Some(path) = replay_log {
        config.platform.replay_log = Some(path.display().to_string());
    }
    let out = out.unwrap_or_else(|| default_out(config.random_seed));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }

    let outcome = match config.platform.kind {
        PlatformKind::Sim => {
            let mut platform = SimulatedPlatform::from_campaign(&config)?;
            fs::write(sidecar(&out), serde_json::to_string_pretty(&config)?)?;
            let sink = LogSink::create(&out)?;
            run_campaign(&config, &mut platform, RunOptions { max_events, sink: Some(sink) })?
        }
        PlatformKind::Replay => {
            let Some(recorded) = &config.platform.replay_log else {
                return Err(Invalid(vec!["platform.replay_log: required for the replay platform".into()]).into());
            };
            let recorded = config_path.parent().unwrap_or(Path::new(".")).join(recorded);
            let events = read_log(&recorded).with_context(|| format!("reading {}", recorded.display()))?;
            if fs::canonicalize(&recorded).ok() == fs::canonicalize(&out).ok() {
                bail!("--out must differ from the replayed log");
            }
            let platform = ReplayPlatform::new(events)?;
            replay_campaign(&config, &platform, Some(LogSink::create(&out)?))?
        }
    };
    summarize(&outcome, &out);
    Ok(())
}

fn resume(log: &Path, max_events: Option<usize>) -> Result<()> {
    let side = sidecar(log);
    let text = fs::read_to_string(&side)
        .with_context(|| format!("reading {} (written by `run`)", side.display()))?;
    let config: CampaignConfig = serde_json::from_str(&text)?;
    if config.platform.kind != PlatformKind::Sim {
        bail!("only simulated runs can be resumed; replay is a single pass");
    }
    let sink = LogSink::resume(log)?;
    let already = sink.existing_len();
    let mut platform = SimulatedPlatform::from_campaign(&config)?;
    let outcome = run_campaign(&config, &mut platform, RunOptions { max_events, sink: Some(sink) })?;
    println!("verified {already} existing events");
    summarize(&outcome, log);
    Ok(())
}

fn load_labels(
    events: &[rally_core::CampaignEvent],
    files: &[PathBuf],
    tiebreak: Option<&Path>,
    sim: bool,
) -> Result<Option<Vec<VolunteerLabel>>> {
    if sim {
        return Ok(Some(simulated_labels(events)));
    }
    match files {
        [] => Ok(None),
        [single] => Ok(Some(read_labels(single)?)),
        [a, b] => {
            let (a, b) = (read_labels(a)?, read_labels(b)?);
            eprintln!("Cohen's kappa: {:.3}", cohen_kappa(&a, &b)?);
            let third = match tiebreak {
                Some(path) => read_labels(path)?,
                None => Vec::new(),
            };
            Ok(Some(merge_labels(&a, &b, &third)?))
        }
        _ => unreachable!("clap limits --labels to two files"),
    }
}

fn report(log: &Path, labels: &[PathBuf], tiebreak: Option<&Path>, sim: bool, format: Format) -> Result<()> {
    let events = read_log(log)?;
    let labels = load_labels(&events, labels, tiebreak, sim)?;
    let report = compute_metrics(&events, labels.as_deref())?;
    match format {
        Format::Table => print!("{}", render_table(&report)),
        Format::JsonLines => print!("{}", render_json_lines(&report)),
    }
    Ok(())
}

/// Split targeted users into repliers and the rest, keeping those with a
/// history file; each history file becomes one document.
fn corpora(log: &Path, history: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let events = read_log(log)?;
    validate_log(&events)?;
    let mut targeted = BTreeSet::new();
    let mut members: BTreeMap<_, Vec<UserId>> = BTreeMap::new();
    let mut repliers = BTreeSet::new();
    for e in &events {
        match e.kind {
            EventKind::OutboundCall => {
                targeted.extend(e.mentions.iter().cloned());
                members.insert(e.conv.clone(), e.mentions.clone());
            }
            EventKind::InboundReply => {
                let user = UserId::new(e.actor.clone());
                if members.get(&e.conv).is_some_and(|m| m.contains(&user)) {
                    repliers.insert(user);
                }
            }
            _ => {}
        }
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for user in &targeted {
        let path = history.join(format!("{user}.txt"));
        let Ok(text) = fs::read_to_string(&path) else {
            log::info!("no history for {user}");
            continue;
        };
        if repliers.contains(user) {
            a.push(text);
        } else {
            b.push(text);
        }
    }
    Ok((a, b))
}

fn keyterms(log: &Path, history: &Path, top_fraction: f64, format: Format) -> Result<()> {
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(Invalid(vec![format!("--top-fraction {top_fraction} must be in (0, 1]")]).into());
    }
    let (responders, others) = corpora(log, history)?;
    let report = mann_whitney_keyterms(&responders, &others, top_fraction)?;
    match format {
        Format::JsonLines => {
            for (group, terms) in [("responders", &report.group_a), ("non_responders", &report.group_b)] {
                for t in &terms.key_terms {
                    let line = serde_json::json!({"group": group, "term": t.term, "rho": t.rho, "score": t.score});
                    println!("{line}");
                }
            }
        }
        Format::Table => print_keyterms(&report, responders.len(), others.len()),
    }
    Ok(())
}

fn print_keyterms(report: &KeyTermReport, n_a: usize, n_b: usize) {
    for (name, n, terms) in [
        ("responders", n_a, &report.group_a),
        ("non-responders", n_b, &report.group_b),
    ] {
        println!(
            "{name} ({n} users, vocabulary {}): {} key terms",
            terms.vocabulary,
            terms.key_terms.len()
        );
        for t in &terms.key_terms {
            println!("  {:<24} rho {:.3}", t.term, t.rho);
        }
    }
}

fn validate(config: Option<&Path>, log: Option<&Path>) -> Result<()> {
    if let Some(path) = config {
        let config = CampaignConfig::load(path)?;
        let violations = validate_config(&config);
        if !violations.is_empty() {
            return Err(Invalid(violations.iter().map(|v| v.to_string()).collect()).into());
        }
        if let Some(sim) = &config.platform.simulation {
            sim.validate().map_err(|e| Invalid(vec![e.to_string()]))?;
        }
        println!("{}: ok", path.display());
    }
    if let Some(path) = log {
        let events = read_log(path)?;
        validate_log(&events).map_err(|e| Invalid(vec![e.to_string()]))?;
        println!("{}: ok, {} events", path.display(), events.len());
    }
    Ok(())
}

fn calibrate(config: &Path, targets: Vec<CalibrationTarget>, iterations: usize, groups: Option<u32>) -> Result<()> {
    let mut config = load_config(config)?;
    if let Some(g) = groups {
        config.groups_per_strategy_per_topic = g;
    }
    let targets = if targets.is_empty() {
        let specs = fixtures::english_strategies();
        fixtures::SUMMARY_ARMS
            .iter()
            .map(|a| {
                let budget = specs
                    .iter()
                    .find(|s| s.id.as_str() == a.strategy)
                    .map_or(1, |s| s.messages_per_turn as u32);
                CalibrationTarget {
                    strategy: StrategyId::new(a.strategy),
                    reply_rate: a.replies as f64 / (budget * (a.calls + a.followups)) as f64,
                }
            })
            .collect()
    } else {
        targets
    };
    let fitted = calibrate_reply_propensities(&config, &targets, iterations)?;
    for (arm, reply) in fitted {
        println!("{arm}.reply = {reply:.4}");
    }
    Ok(())
}
