//! Command-line runner for agreement experiments.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use tidewater_core::harness::{
    emit_metrics, file_lines, run_experiment_full, verify_record, ConfigError, ExperimentConfig,
    HarnessError, RunMetrics, RunRecord, SeedRun,
};
use tidewater_core::simple_game::{
    detect_pair, run_simplified_game, CounteractGame, PassiveGame, SimpleGameConfig,
};
use tidewater_core::stats::write_stats_tsv;

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{0}")]
    Usage(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Parser)]
#[command(
    name = "tidewater",
    version,
    about = "Seeded simulation of asynchronous Byzantine agreement"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration over a set of seeds.
    Run(RunArgs),
    /// Run the cartesian product of varied settings.
    Sweep(SweepArgs),
    /// Check invariants of saved run records.
    Verify {
        /// Record files written by `run --dump`.
        #[arg(required = true)]
        records: Vec<PathBuf>,
    },
    /// Play the unweighted coin game and report pair detection.
    SimplifiedGame(SimpleArgs),
}

/// Settings shared by `run` and `sweep`. Flags override the config file.
#[derive(Args, Default)]
struct Common {
    /// Plain `key=value` settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    f: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    /// Coin flips per column.
    #[arg(long)]
    m: Option<usize>,
    /// Iterations per epoch.
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long)]
    fairness_window: Option<u64>,
    /// `message` or `game`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// `a..b`, `a..=b` or `a,b,c`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    adversary: Option<String>,
    /// Strategy argument `k=v`; repeatable.
    #[arg(long = "adversary-arg")]
    adversary_arg: Vec<String>,
    /// `random`, `split`, `+1` or `-1`.
    #[arg(long, allow_hyphen_values = true)]
    inputs: Option<String>,
    /// `decided`, `events:N` or `epochs:K`.
    #[arg(long)]
    stop: Option<String>,
    /// Epochs per game-level run.
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    max_events: Option<u64>,
    /// Raw `key=value` setting; repeatable.
    #[arg(long = "set")]
    set: Vec<String>,
}

impl Common {
    fn settings(&self) -> Result<Vec<(String, String)>, CliError> {
        let mut out = Vec::new();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            out.extend(file_lines(&text)?.into_iter().map(|(_, k, v)| (k, v)));
        }
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        push("n", self.n.map(|v| v.to_string()));
        push("f", self.f.map(|v| v.to_string()));
        push("eps", self.eps.map(|v| v.to_string()));
        push("m", self.m.map(|v| v.to_string()));
        push("T", self.t.map(|v| v.to_string()));
        push("c", self.c.map(|v| v.to_string()));
        push("kmax", self.kmax.map(|v| v.to_string()));
        push(
            "fairness-window",
            self.fairness_window.map(|v| v.to_string()),
        );
        push("mode", self.mode.clone());
        push("seed", self.seed.map(|v| v.to_string()));
        push("seeds", self.seeds.clone());
        push("adversary", self.adversary.clone());
        push("inputs", self.inputs.clone());
        push("stop", self.stop.clone());
        push("epochs", self.epochs.map(|v| v.to_string()));
        push("max-events", self.max_events.map(|v| v.to_string()));
        for a in &self.adversary_arg {
            out.push(("adversary-arg".into(), a.clone()));
        }
        for s in &self.set {
            let (k, v) = split_kv(s)?;
            out.push((k, v));
        }
        Ok(out)
    }
}

fn split_kv(s: &str) -> Result<(String, String), CliError> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| CliError::Usage(format!("expected key=value, got {s:?}")))
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Metrics file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for per-seed records, cell dumps, decision logs and stats.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// `key=v1,v2,...`; repeatable. Every combination is run.
    #[arg(long = "vary", required = true)]
    vary: Vec<String>,
    /// Directory receiving one metrics file per combination.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimpleArgs {
    #[arg(long, default_value_t = 20)]
    n: usize,
    /// Sets `f = floor(n / (3 + eps))` unless `--f` is given.
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long)]
    f: Option<usize>,
    /// Rounds.
    #[arg(long = "T", default_value_t = 4000)]
    t: usize,
    #[arg(long, default_value = "0..200")]
    seeds: String,
    /// `passive`, `counteract` or `counteract-all`.
    #[arg(long, default_value = "counteract")]
    adversary: String,
    /// Stop at the first round whose outcome misses the direction.
    #[arg(long)]
    stop_on_miss: bool,
    /// Per-seed records, one JSON object per line.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify { records } => cmd_verify(&records),
        Command::SimplifiedGame(a) => cmd_simple(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn summary_line(m: &RunMetrics) -> String {
    let failed: Vec<&str> = m
        .verdicts
        .iter()
        .filter(|(_, ok)| !**ok)
        .map(|(k, _)| k.as_str())
        .collect();
    format!(
        "seed {:>6}  decided={:<5} iterations={:<6} epochs={:<3} events={:<9} stop={:<12} {}",
        m.seed,
        m.decided,
        m.iterations_to_decide.map_or("-".into(), |t| t.to_string()),
        m.epochs_used,
        m.events,
        m.stop_reason,
        if failed.is_empty() {
            "ok".to_string()
        } else {
            format!("FAILED {}", failed.join(","))
        }
    )
}

fn write_metrics(metrics: &[RunMetrics], out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => {
            let file = fs::File::create(path).map_err(io_err(path))?;
            let mut w = BufWriter::new(file);
            emit_metrics(metrics, &mut w)
                .and_then(|_| w.flush())
                .map_err(io_err(path))
        }
        None => emit_metrics(metrics, io::stdout().lock()).map_err(io_err(Path::new("<stdout>"))),
    }
}

fn dump_seed(dir: &Path, run: &SeedRun) -> Result<(), CliError> {
    let seed = run.metrics.seed;
    let write = |name: String, body: Vec<u8>| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))
    };
    write(
        format!("seed-{seed}.record.json"),
        json(&run.record).into_bytes(),
    )?;
    let mut cells = String::new();
    for b in &run.record.boards {
        for c in &b.cells {
            cells.push_str(&format!(
                "{{\"process\":{},\"cell\":{}}}\n",
                b.process,
                json(c)
            ));
        }
    }
    write(format!("seed-{seed}.cells.jsonl"), cells.into_bytes())?;
    let decisions: String = run
        .record
        .decisions
        .iter()
        .map(|d| json(d) + "\n")
        .collect();
    write(
        format!("seed-{seed}.decisions.jsonl"),
        decisions.into_bytes(),
    )?;
    if let Some(game) = &run.game {
        let stats: Vec<_> = game.epochs.iter().map(|e| e.stats.clone()).collect();
        let mut tsv = Vec::new();
        write_stats_tsv(&stats, &mut tsv).map_err(io_err(dir))?;
        write(format!("seed-{seed}.stats.tsv"), tsv)?;
    }
    Ok(())
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

fn cmd_run(a: RunArgs) -> Result<bool, CliError> {
    let cfg = ExperimentConfig::from_settings(&a.common.settings()?)?;
    let out = a.out.or_else(|| cfg.out.as_ref().map(PathBuf::from));
    let runs = run_experiment_full(&cfg)?;
    if let Some(dir) = &a.dump {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for r in &runs {
            dump_seed(dir, r)?;
        }
    }
    let metrics: Vec<RunMetrics> = runs.into_iter().map(|r| r.metrics).collect();
    for m in &metrics {
        eprintln!("{}", summary_line(m));
    }
    write_metrics(&metrics, out.as_deref())?;
    let bad = metrics.iter().filter(|m| !m.safety_ok).count();
    eprintln!(
        "{} runs, {} decided, {} with safety violations",
        metrics.len(),
        metrics.iter().filter(|m| m.decided).count(),
        bad
    );
    Ok(bad == 0)
}

/// Every combination of the varied values, in order.
fn combinations(vary: &[(String, Vec<String>)]) -> Vec<Vec<(String, String)>> {
    let mut out = vec![Vec::new()];
    for (k, vs) in vary {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                vs.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push((k.clone(), v.clone()));
                    p
                })
            })
            .collect();
    }
    out
}

fn cmd_sweep(a: SweepArgs) -> Result<bool, CliError> {
    let base = a.common.settings()?;
    let mut vary = Vec::new();
    for s in &a.vary {
        let (k, vs) = split_kv(s)?;
        vary.push((
            k,
            vs.split(',')
                .map(|v| v.trim().to_string())
                .collect::<Vec<_>>(),
        ));
    }
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut all_safe = true;
    println!("point\truns\tdecided\tmean_iterations\tunsafe");
    for point in combinations(&vary) {
        let mut settings = base.clone();
        settings.extend(point.iter().cloned());
        let cfg = ExperimentConfig::from_settings(&settings)?;
        let metrics: Vec<RunMetrics> = run_experiment_full(&cfg)?
            .into_iter()
            .map(|r| r.metrics)
            .collect();
        let label: Vec<String> = point.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let label = label.join("_");
        let decided: Vec<u64> = metrics
            .iter()
            .filter_map(|m| m.iterations_to_decide.filter(|_| m.decided))
            .collect();
        let mean = if decided.is_empty() {
            f64::NAN
        } else {
            decided.iter().sum::<u64>() as f64 / decided.len() as f64
        };
        let unsafe_runs = metrics.iter().filter(|m| !m.safety_ok).count();
        all_safe &= unsafe_runs == 0;
        println!(
            "{label}\t{}\t{}\t{mean:.3}\t{unsafe_runs}",
            metrics.len(),
            decided.len()
        );
        if let Some(dir) = &a.out {
            write_metrics(&metrics, Some(&dir.join(format!("{label}.jsonl"))))?;
        }
    }
    Ok(all_safe)
}

fn cmd_verify(paths: &[PathBuf]) -> Result<bool, CliError> {
    let mut all_safe = true;
    for path in paths {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let rec: RunRecord = serde_json::from_str(&text).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            source: e.into(),
        })?;
        let v = verify_record(&rec);
        println!("{}", path.display());
        for c in &v.checks {
            let at = c
                .first_violation
                .map_or(String::new(), |o| format!(" at {o}"));
            let detail = if c.detail.is_empty() {
                String::new()
            } else {
                format!(": {}", c.detail)
            };
            println!(
                "  {:<28} {}{at}{detail}",
                c.name,
                if c.passed { "pass" } else { "FAIL" }
            );
        }
        all_safe &= v.safety_ok();
    }
    Ok(all_safe)
}

fn cmd_simple(a: SimpleArgs) -> Result<bool, CliError> {
    let seeds = tidewater_core::harness::parse_seeds(&a.seeds)?;
    let mut cfg = SimpleGameConfig::with_eps(a.n, a.eps, a.t);
    if let Some(f) = a.f {
        cfg.f = f;
    }
    cfg.play_through = !a.stop_on_miss;
    let mut lines = String::new();
    let (mut hits, mut survived) = (0usize, 0usize);
    for &seed in &seeds {
        let out = match a.adversary.as_str() {
            "passive" => run_simplified_game(&cfg, &mut PassiveGame, seed),
            "counteract" => {
                run_simplified_game(&cfg, &mut CounteractGame { all_push: false }, seed)
            }
            "counteract-all" => {
                run_simplified_game(&cfg, &mut CounteractGame { all_push: true }, seed)
            }
            other => {
                return Err(CliError::Usage(format!(
                    "unknown simplified-game adversary {other:?}"
                )))
            }
        };
        let pair = detect_pair(&out.values);
        let hit = pair.is_some_and(|(i, j)| out.bad.contains(&i) || out.bad.contains(&j));
        hits += usize::from(hit);
        survived += usize::from(out.survived());
        lines.push_str(&format!(
            "{{\"seed\":{seed},\"bad\":{:?},\"pair\":{},\"hit\":{hit},\"ended_at\":{}}}\n",
            out.bad,
            pair.map_or("null".into(), |(i, j)| format!("[{i},{j}]")),
            out.ended_at.map_or("null".into(), |t| t.to_string()),
        ));
    }
    if let Some(path) = &a.out {
        fs::write(path, lines).map_err(io_err(path))?;
    }
    let total = seeds.len().max(1) as f64;
    println!(
        "n={} f={} T={} seeds={} detection_rate={:.4} survival_rate={:.4}",
        cfg.n,
        cfg.f,
        cfg.rounds,
        seeds.len(),
        hits as f64 / total,
        survived as f64 / total
    );
    Ok(true)
}
