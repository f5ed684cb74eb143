use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use awarenav::harness::{emit_report, run_batch, write_report, ReportFormat};
use awarenav::mdp::plan;
use awarenav::sim::{metrics, run_episode, Scenario, ScenarioConfig, SimError};
use awarenav_bridge::{BridgeServer, Session};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "awarenav", version, about = "Awareness-aware navigation planner and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the global path for a scenario as JSON.
    Plan {
        #[command(flatten)]
        common: Common,
    },
    /// Run one episode and write its JSON-lines log.
    Episode {
        #[command(flatten)]
        common: Common,
    },
    /// Run a batch of episodes and write a report.
    Batch {
        #[command(flatten)]
        common: Common,
        /// Number of episodes; overrides the size of a `--seeds A..B` range.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value = "json")]
        format: ReportFormat,
    },
    /// Serve a live episode over WebSocket.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "127.0.0.1:8765")]
        addr: String,
        /// Start paused.
        #[arg(long)]
        paused: bool,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// A seed, or a half-open range `A..B`.
    #[arg(long)]
    seeds: Option<SeedSpec>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    budget_ms: Option<u64>,
    #[arg(long)]
    k_scenarios: Option<usize>,
    #[arg(long)]
    k_particles: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
struct SeedSpec {
    base: u64,
    count: Option<usize>,
}

impl FromStr for SeedSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("bad seed {t:?}: {e}"));
        match s.split_once("..") {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if b < a {
                    return Err(format!("empty seed range {s}"));
                }
                Ok(Self {
                    base: a,
                    count: Some((b - a) as usize),
                })
            }
            None => Ok(Self {
                base: num(s)?,
                count: None,
            }),
        }
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(common: &Common) -> Result<(Arc<Scenario>, PathBuf), Failure> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Failure::Config(format!("{}: {e}", common.config.display())))?;
    let mut config = ScenarioConfig::from_json(&text)
        .map_err(|e| Failure::Config(format!("{}: {e}", common.config.display())))?;
    if let Some(ms) = common.budget_ms {
        config.solver.time_budget_ms = ms;
    }
    if let Some(k) = common.k_scenarios {
        config.solver.k_scenarios = k;
    }
    if let Some(k) = common.k_particles {
        config.belief.k_particles = k;
    }
    let base = common.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let scenario = Scenario::from_config(config, &base).map_err(|e| match e {
        SimError::Io(m) => Failure::Config(m),
        other => Failure::from(other),
    })?;
    Ok((Arc::new(scenario), base))
}

fn first_seed(common: &Common, scenario: &Scenario) -> u64 {
    common
        .seeds
        .map(|s| s.base)
        .or_else(|| scenario.config.seeds.as_ref().and_then(|v| v.first().copied()))
        .unwrap_or(0)
}

fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    match out {
        Some(p) => {
            let f = File::create(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let io_err = |e: io::Error| Failure::Runtime(e.to_string());
    match cli.command {
        Cmd::Plan { common } => {
            let (s, _) = load(&common)?;
            let path = plan(&s.grid, s.config.start, s.config.goal, &s.config.mdp)
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            let mut w = output(&common.out)?;
            writeln!(w, "{}", path.to_json()).map_err(io_err)?;
            w.flush().map_err(io_err)
        }
        Cmd::Episode { common } => {
            let (s, _) = load(&common)?;
            let seed = first_seed(&common, &s);
            let log = run_episode(&s, seed)?;
            let mut w = output(&common.out)?;
            log.write_jsonl(&mut w).map_err(io_err)?;
            w.flush().map_err(io_err)?;
            let m = metrics(&log);
            eprintln!(
                "seed {seed}: {} after {} ticks ({} waits, {} replans)",
                match log.outcome() {
                    Some(o) => format!("{o:?}").to_lowercase(),
                    None => "unfinished".into(),
                },
                m.ticks,
                m.waits,
                m.replans
            );
            Ok(())
        }
        Cmd::Batch { common, n, format } => {
            let (s, _) = load(&common)?;
            let (base, count) = match common.seeds {
                Some(spec) => (spec.base, n.or(spec.count).unwrap_or(25)),
                None => (0, n.unwrap_or(25)),
            };
            let report = run_batch(&s, count, base)?;
            match &common.out {
                Some(p) => emit_report(&report, format, p)?,
                None => write_report(&report, format, io::stdout().lock())?,
            }
            eprintln!(
                "{} episodes: success {:.2}, mean steps {}, wait distance aware {} / non-aware {}",
                report.n_episodes,
                report.success_rate,
                fmt_opt(report.mean_steps),
                fmt_opt(report.mean_wait_dist_aware),
                fmt_opt(report.mean_wait_dist_nonaware)
            );
            Ok(())
        }
        Cmd::Serve { common, addr, paused } => {
            let (s, base) = load(&common)?;
            let seed = first_seed(&common, &s);
            let session = Session::new(s, &base, seed, paused)?;
            let rt = tokio::runtime::Runtime::new().map_err(io_err)?;
            rt.block_on(async move {
                let server = BridgeServer::start(&addr, session).await.map_err(io_err)?;
                eprintln!("serving on ws://{}", server.local_addr());
                tokio::signal::ctrl_c().await.map_err(io_err)?;
                server.shutdown().await;
                Ok(())
            })
        }
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.3}"))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
