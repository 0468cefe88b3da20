//! Argument types, config resolution and the `xybook` subcommands.
//!
//! Settings resolve as: command-line flag, then config file, then default.
//! Every JSON document written carries a `schema` field; stochastic commands
//! also record the seed and a hash of the resolved settings and input files.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use xybook::calib::SolveMethod;
use xybook::evaluate::{evaluate, train_len, EvalOptions, METRICS_SCHEMA};
use xybook::ingest::{extract_xy_with_tick, parse_log, write_log, LogFormat};
use xybook::models::{simulate_path, BasisSpec, FitOptions, ResidualKind};
use xybook::passage::{critical_queue, estimate_p, MCParams};
use xybook::{BookEvent, BookState, LagBuffer, Tick, XYModel, XySeries};

pub const SIMULATE_SCHEMA: &str = "xybook-simulate/1";
pub const PREDICT_SCHEMA: &str = "xybook-predict/1";
pub const DIAGNOSE_SCHEMA: &str = "xybook-diagnose/1";
pub const CALIBRATE_SCHEMA: &str = "xybook-calibrate/1";

#[derive(Parser, Debug)]
#[command(name = "xybook", version, about = "Event-time order book modelling from (X, Y) order flow")]
pub struct Cli {
    /// Seed for every random draw; required by simulate, predict and evaluate.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML or JSON file with default settings (`.json` selects JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for Monte Carlo; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse an event log into an (X, Y) series and a data-quality report.
    Ingest(IngestArgs),
    /// Fit a model to an (X, Y) series.
    Calibrate(CalibrateArgs),
    /// Simulate a path from a fitted model.
    Simulate(SimulateArgs),
    /// Estimate next-move probabilities, or the critical ask queue.
    Predict(PredictArgs),
    /// Stability report for a fitted model.
    Diagnose(DiagnoseArgs),
    /// Walk-forward evaluation on the test split of a series.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Event-log CSV.
    pub log: Option<PathBuf>,
    /// Price increment, as a decimal.
    #[arg(long)]
    pub tick: Option<String>,
    /// Where to write the (X, Y) series.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to write the report (stdout if absent).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Exit with status 2 when the one-tick violation rate is above this.
    #[arg(long)]
    pub max_violation_rate: Option<f64>,
    #[arg(long)]
    pub delimiter: Option<char>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Regression on basis functions of lagged (X, Y).
    SemiLinear,
    /// Semi-linear with the identity basis.
    Var,
    /// IID resampling of centered pairs.
    Bootstrap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Levinson,
    Dense,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Residuals {
    Empirical,
    Gaussian,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// (X, Y) series written by `ingest`.
    pub xy: Option<PathBuf>,
    /// Where to write the model (stdout if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    /// Lag order p.
    #[arg(long)]
    pub lag: Option<usize>,
    /// Comma-separated basis, e.g. `identity,tanh:0.2`.
    #[arg(long)]
    pub basis: Option<String>,
    #[arg(long)]
    pub ridge: Option<f64>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long, value_enum)]
    pub residuals: Option<Residuals>,
    /// Fit on the first `floor(split n)` events only.
    #[arg(long)]
    pub split: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct StateArgs {
    /// Bid queue size.
    #[arg(long)]
    pub qb: Option<i64>,
    /// Ask queue size.
    #[arg(long)]
    pub qa: Option<i64>,
    /// Spread in ticks.
    #[arg(long)]
    pub spread: Option<i64>,
    /// Best bid, in ticks.
    #[arg(long)]
    pub bid: Option<i64>,
    /// (X, Y) series whose last events seed the lag buffer.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Number of events.
    #[arg(long)]
    pub events: Option<usize>,
    #[command(flatten)]
    pub state: StateArgs,
    /// Price increment used in the written files.
    #[arg(long)]
    pub tick: Option<String>,
    /// Where to write the simulated (X, Y) series.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to write the simulated path as an event log.
    #[arg(long)]
    pub log_out: Option<PathBuf>,
    /// Where to write the run summary (stdout if absent).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub state: StateArgs,
    #[arg(long)]
    pub paths: Option<u64>,
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Also search for the ask queue where up and down moves are equally likely.
    #[arg(long)]
    pub qstar: bool,
    /// Cap for the critical-queue bracket.
    #[arg(long)]
    pub max_queue: Option<i64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// (X, Y) series; the model must have been fitted on its training split.
    pub xy: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Training fraction; the rest is the test split.
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long)]
    pub paths: Option<u64>,
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Permute the realised directions with this seed (a null check).
    #[arg(long)]
    pub shuffle_labels: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Settings file. Every field is optional; flags take precedence.
/// Relative paths are taken relative to the file's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub tick: Option<String>,
    pub lag_order: Option<usize>,
    pub basis: Option<String>,
    pub ridge: Option<f64>,
    pub family: Option<Family>,
    pub method: Option<Method>,
    pub residuals: Option<Residuals>,
    pub n_paths: Option<u64>,
    pub horizon: Option<u64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub max_violation_rate: Option<f64>,
    pub split: Option<f64>,
    pub max_queue: Option<i64>,
    pub events: Option<usize>,
    pub log: Option<PathBuf>,
    pub xy: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.log,
            &mut cfg.xy,
            &mut cfg.model,
            &mut cfg.history,
            &mut cfg.out,
            &mut cfg.report,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// How a successful run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success,
    ViolationRateExceeded,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::ViolationRateExceeded => 2,
        }
    }
}

pub const DEFAULT_MAX_VIOLATION_RATE: f64 = 0.01;
const DEFAULT_PATHS: u64 = 10_000;
const DEFAULT_HORIZON: u64 = 10_000;
const DEFAULT_MAX_QUEUE: i64 = 4096;
const DEFAULT_EVENTS: usize = 10_000;
const DEFAULT_QUEUE: i64 = 10;
const DEFAULT_BID: i64 = 10_000;

pub fn run(cli: Cli) -> Result<Status> {
    let cfg = match &cli.config {
        Some(p) => {
            require_files(&[("config", p)])?;
            RunConfig::load(p)?
        }
        None => RunConfig::default(),
    };
    let seed = cli.seed.or(cfg.seed);
    let threads = cli.threads.or(cfg.threads);
    let go = || match &cli.command {
        Command::Ingest(a) => cmd_ingest(a, &cfg),
        Command::Calibrate(a) => cmd_calibrate(a, &cfg),
        Command::Simulate(a) => cmd_simulate(a, &cfg, seed),
        Command::Predict(a) => cmd_predict(a, &cfg, seed),
        Command::Diagnose(a) => cmd_diagnose(a, &cfg),
        Command::Evaluate(a) => cmd_evaluate(a, &cfg, seed),
    };
    match threads {
        None => go(),
        Some(0) => bail!("--threads must be at least 1"),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building thread pool")?
            .install(go),
    }
}

fn pick<T: Clone>(flag: &Option<T>, cfg: &Option<T>) -> Option<T> {
    flag.clone().or_else(|| cfg.clone())
}

fn need<T>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| anyhow!("missing {what} (pass it as a flag or set it in --config)"))
}

fn need_seed(seed: Option<u64>, command: &str) -> Result<u64> {
    seed.ok_or_else(|| anyhow!("{command} is stochastic: --seed (or `seed` in the config) is required"))
}

fn require_files(files: &[(&str, &Path)]) -> Result<()> {
    for (what, p) in files {
        if !p.is_file() {
            bail!("{what} file not found: {}", p.display());
        }
    }
    Ok(())
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 over the command name, its resolved settings and the contents of
/// its input files. Output paths and the thread count are not part of it.
pub fn config_hash<S: Serialize>(command: &str, settings: &S, inputs: &[(&str, &Path)]) -> Result<String> {
    let mut files = serde_json::Map::new();
    for (name, p) in inputs {
        files.insert(name.to_string(), file_digest(p)?.into());
    }
    let doc = json!({ "command": command, "settings": settings, "inputs": files });
    Ok(hex(&Sha256::digest(serde_json::to_vec(&doc)?)))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn parse_tick(s: &str) -> Result<Tick> {
    s.parse::<Tick>().map_err(|e| anyhow!("invalid tick {s:?}: {e}"))
}

fn read_series(path: &Path) -> Result<XySeries> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    XySeries::read(BufReader::new(f)).with_context(|| format!("reading series {}", path.display()))
}

fn read_model(path: &Path) -> Result<XYModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    XYModel::from_json(&text).with_context(|| format!("loading model {}", path.display()))
}

pub fn cmd_ingest(a: &IngestArgs, cfg: &RunConfig) -> Result<Status> {
    let log = need(pick(&a.log, &cfg.log), "event log path")?;
    require_files(&[("event log", &log)])?;
    let out = need(pick(&a.out, &cfg.xy), "--out for the (X, Y) series")?;
    let tick = parse_tick(&need(pick(&a.tick, &cfg.tick), "--tick")?)?;
    let max_rate = pick(&a.max_violation_rate, &cfg.max_violation_rate).unwrap_or(DEFAULT_MAX_VIOLATION_RATE);
    if !(0.0..=1.0).contains(&max_rate) {
        bail!("--max-violation-rate must lie in [0, 1], got {max_rate}");
    }
    let delimiter = a.delimiter.unwrap_or(',');
    if !delimiter.is_ascii() {
        bail!("delimiter must be a single ASCII character");
    }

    let f = File::open(&log).with_context(|| format!("opening {}", log.display()))?;
    let format = LogFormat {
        tick,
        delimiter: delimiter as u8,
    };
    let events = parse_log(BufReader::new(f), format).with_context(|| format!("parsing {}", log.display()))?;
    let (series, report) = extract_xy_with_tick(&events, Some(tick))?;

    let mut w = BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?);
    series.write(&mut w)?;
    w.flush()?;
    let report_path = pick(&a.report, &cfg.report);
    emit(report_path.as_deref(), &to_json(&report)?)?;

    if report.a2_violation_rate > max_rate {
        eprintln!(
            "one-tick violation rate {:.4} exceeds the threshold {max_rate}",
            report.a2_violation_rate
        );
        return Ok(Status::ViolationRateExceeded);
    }
    Ok(Status::Success)
}

#[derive(Serialize)]
struct CalibrateSettings {
    family: Family,
    lag_order: usize,
    basis: String,
    ridge: f64,
    method: Method,
    residuals: Residuals,
    split: f64,
}

pub fn cmd_calibrate(a: &CalibrateArgs, cfg: &RunConfig) -> Result<Status> {
    let xy = need(pick(&a.xy, &cfg.xy), "(X, Y) series path")?;
    require_files(&[("series", &xy)])?;
    let s = CalibrateSettings {
        family: pick(&a.family, &cfg.family).unwrap_or(Family::SemiLinear),
        lag_order: pick(&a.lag, &cfg.lag_order).unwrap_or(1),
        basis: pick(&a.basis, &cfg.basis).unwrap_or_else(|| "identity".into()),
        ridge: pick(&a.ridge, &cfg.ridge).unwrap_or(0.0),
        method: pick(&a.method, &cfg.method).unwrap_or(Method::Levinson),
        residuals: pick(&a.residuals, &cfg.residuals).unwrap_or(Residuals::Empirical),
        split: pick(&a.split, &cfg.split).unwrap_or(1.0),
    };
    if !(s.split > 0.0 && s.split <= 1.0) {
        bail!("--split must lie in (0, 1], got {}", s.split);
    }
    if s.ridge.is_nan() || s.ridge < 0.0 {
        bail!("--ridge must be nonnegative");
    }
    let series = read_series(&xy)?;
    let train = series.truncated(train_len(series.len(), s.split));
    let opts = FitOptions {
        ridge: s.ridge,
        method: match s.method {
            Method::Levinson => SolveMethod::Levinson,
            Method::Dense => SolveMethod::Dense,
        },
        residual: match s.residuals {
            Residuals::Empirical => ResidualKind::Empirical,
            Residuals::Gaussian => ResidualKind::Gaussian,
        },
    };
    let model = match s.family {
        Family::Bootstrap => XYModel::fit_bootstrap(&train)?,
        Family::Var => XYModel::fit_with(&train, BasisSpec::identity(s.lag_order), &opts)?,
        Family::SemiLinear => XYModel::fit_with(&train, BasisSpec::parse(&s.basis, s.lag_order)?, &opts)?,
    };
    let out = pick(&a.out, &cfg.model);
    emit(out.as_deref(), &model.to_json())?;
    eprintln!(
        "{}",
        json!({
            "schema": CALIBRATE_SCHEMA,
            "n_train": train.len(),
            "settings": s,
            "stability": model.stability,
        })
    );
    Ok(Status::Success)
}

#[derive(Serialize)]
struct StateSettings {
    start: BookState,
    /// Whether the lag buffer came from a file (its digest is hashed separately).
    history: bool,
}

/// Start state and lag buffer. With `--history`, the buffer holds the last
/// events of that series; otherwise every lag equals the model intercept.
fn resolve_state(a: &StateArgs, cfg: &RunConfig, model: &XYModel, require_queues: bool) -> Result<(BookState, LagBuffer)> {
    let default_q = if require_queues { None } else { Some(DEFAULT_QUEUE) };
    let q_b = need(a.qb.or(default_q), "--qb")?;
    let q_a = need(a.qa.or(default_q), "--qa")?;
    let bid = a.bid.unwrap_or(DEFAULT_BID);
    let spread = a.spread.unwrap_or(1);
    let state = BookState::new(bid, bid + spread, q_b, q_a).map_err(|e| anyhow!("invalid start state: {e}"))?;
    let p = model.lag_order();
    let history = match pick(&a.history, &cfg.history) {
        Some(h) => {
            let series = read_series(&h)?;
            let buf = LagBuffer::from_events(p, series.events());
            if !buf.is_full() {
                bail!("history {} has {} events, the model needs {p}", h.display(), series.len());
            }
            buf
        }
        None => LagBuffer::filled(p, model.intercept),
    };
    Ok((state, history))
}

#[derive(Serialize)]
struct SimulateSettings {
    events: usize,
    tick: String,
    state: StateSettings,
    seed: u64,
}

pub fn cmd_simulate(a: &SimulateArgs, cfg: &RunConfig, seed: Option<u64>) -> Result<Status> {
    let model_path = need(pick(&a.model, &cfg.model), "--model")?;
    let history_path = pick(&a.state.history, &cfg.history);
    let mut inputs: Vec<(&str, &Path)> = vec![("model", &model_path)];
    if let Some(h) = &history_path {
        inputs.push(("history", h));
    }
    require_files(&inputs)?;
    let seed = need_seed(seed, "simulate")?;
    let tick = parse_tick(&pick(&a.tick, &cfg.tick).unwrap_or_else(|| "1".into()))?;
    let n = pick(&a.events, &cfg.events).unwrap_or(DEFAULT_EVENTS);

    let model = read_model(&model_path)?;
    let (start, mut history) = resolve_state(&a.state, cfg, &model, false)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let path = simulate_path(&model, &start, &mut history, n, &mut rng)?;

    let settings = SimulateSettings {
        events: n,
        tick: tick.to_string(),
        state: StateSettings {
            start,
            history: history_path.is_some(),
        },
        seed,
    };
    let hash = config_hash("simulate", &settings, &inputs)?;

    let events: Vec<_> = path.iter().map(|(e, _)| *e).collect();
    let series = XySeries::single(tick, start, events);
    if let Some(out) = pick(&a.out, &cfg.out) {
        let mut w = BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?);
        series.write(&mut w)?;
        w.flush()?;
    }
    if let Some(log_out) = &a.log_out {
        let mut rows = Vec::with_capacity(path.len() + 1);
        rows.push(BookEvent {
            index: 0,
            side: xybook::Side::Bid,
            best_bid: start.s_b,
            best_ask: start.s_a,
            bid_qty: start.q_b,
            ask_qty: start.q_a,
        });
        for (i, (ev, tr)) in path.iter().enumerate() {
            let s = tr.state_after;
            rows.push(BookEvent {
                index: i as u64 + 1,
                side: ev.side(),
                best_bid: s.s_b,
                best_ask: s.s_a,
                bid_qty: s.q_b,
                ask_qty: s.q_a,
            });
        }
        let w = BufWriter::new(File::create(log_out).with_context(|| format!("creating {}", log_out.display()))?);
        write_log(w, &rows, tick)?;
    }

    let up = path.iter().filter(|(_, t)| t.kind.direction() > 0).count();
    let down = path.iter().filter(|(_, t)| t.kind.direction() < 0).count();
    let end = path.last().map(|(_, t)| t.state_after).unwrap_or(start);
    let summary = json!({
        "schema": SIMULATE_SCHEMA,
        "config_hash": hash,
        "seed": seed,
        "events": n,
        "up_moves": up,
        "down_moves": down,
        "start": start,
        "end": end,
    });
    emit(a.summary.as_deref(), &to_json(&summary)?)?;
    Ok(Status::Success)
}

#[derive(Serialize)]
struct PredictSettings {
    state: StateSettings,
    n_paths: u64,
    horizon: u64,
    seed: u64,
    qstar: bool,
    max_queue: i64,
}

pub fn cmd_predict(a: &PredictArgs, cfg: &RunConfig, seed: Option<u64>) -> Result<Status> {
    let model_path = need(pick(&a.model, &cfg.model), "--model")?;
    let history_path = pick(&a.state.history, &cfg.history);
    let mut inputs: Vec<(&str, &Path)> = vec![("model", &model_path)];
    if let Some(h) = &history_path {
        inputs.push(("history", h));
    }
    require_files(&inputs)?;
    let seed = need_seed(seed, "predict")?;
    let model = read_model(&model_path)?;
    let (state, history) = resolve_state(&a.state, cfg, &model, true)?;
    let settings = PredictSettings {
        state: StateSettings {
            start: state,
            history: history_path.is_some(),
        },
        n_paths: pick(&a.paths, &cfg.n_paths).unwrap_or(DEFAULT_PATHS),
        horizon: pick(&a.horizon, &cfg.horizon).unwrap_or(DEFAULT_HORIZON),
        seed,
        qstar: a.qstar,
        max_queue: pick(&a.max_queue, &cfg.max_queue).unwrap_or(DEFAULT_MAX_QUEUE),
    };
    let hash = config_hash("predict", &settings, &inputs)?;

    let estimate = estimate_p(&state, &model, &history, settings.n_paths, settings.horizon, seed)?;
    let q_star = if a.qstar {
        let mc = MCParams {
            n_paths: settings.n_paths,
            horizon: settings.horizon,
            seed,
            max_queue: settings.max_queue,
        };
        Some(critical_queue(&state, &model, &history, state.q_b, &mc)?)
    } else {
        None
    };
    let doc = json!({
        "schema": PREDICT_SCHEMA,
        "config_hash": hash,
        "seed": seed,
        "state": state,
        "estimate": estimate,
        "q_star": q_star,
    });
    emit(a.out.as_deref(), &to_json(&doc)?)?;
    Ok(Status::Success)
}

pub fn cmd_diagnose(a: &DiagnoseArgs, cfg: &RunConfig) -> Result<Status> {
    let model_path = need(pick(&a.model, &cfg.model), "--model")?;
    require_files(&[("model", &model_path)])?;
    let model = read_model(&model_path)?;
    let report = model.diagnose();
    let doc = json!({
        "schema": DIAGNOSE_SCHEMA,
        "lag_order": model.lag_order(),
        "basis": model.basis.functions,
        "report": report,
        "halving_steps": report.halving_steps(model.lag_order()),
    });
    emit(a.out.as_deref(), &to_json(&doc)?)?;
    Ok(Status::Success)
}

#[derive(Serialize)]
struct EvaluateSettings {
    split: f64,
    n_paths: u64,
    horizon: u64,
    seed: u64,
    shuffle_labels: Option<u64>,
}

pub fn cmd_evaluate(a: &EvaluateArgs, cfg: &RunConfig, seed: Option<u64>) -> Result<Status> {
    let xy = need(pick(&a.xy, &cfg.xy), "(X, Y) series path")?;
    let model_path = need(pick(&a.model, &cfg.model), "--model")?;
    let inputs: [(&str, &Path); 2] = [("series", &xy), ("model", &model_path)];
    require_files(&inputs)?;
    let seed = need_seed(seed, "evaluate")?;
    let defaults = EvalOptions::default();
    let settings = EvaluateSettings {
        split: pick(&a.split, &cfg.split).unwrap_or(defaults.split),
        n_paths: pick(&a.paths, &cfg.n_paths).unwrap_or(defaults.n_paths),
        horizon: pick(&a.horizon, &cfg.horizon).unwrap_or(defaults.horizon),
        seed,
        shuffle_labels: a.shuffle_labels,
    };
    let series = read_series(&xy)?;
    let model = read_model(&model_path)?;
    let n_train = train_len(series.len(), settings.split);
    if let Some(fit) = &model.fit {
        if fit.n_obs > n_train {
            bail!(
                "model was fitted on {} observations but the training split holds {n_train} events; \
                 fit it on the training split only (calibrate --split {})",
                fit.n_obs,
                settings.split
            );
        }
    }
    let hash = config_hash("evaluate", &settings, &inputs)?;
    let opts = EvalOptions {
        split: settings.split,
        n_paths: settings.n_paths,
        horizon: settings.horizon,
        seed,
        shuffle_labels: settings.shuffle_labels,
    };
    let metrics = evaluate(&series, &model, &opts)?;
    let doc = json!({
        "schema": METRICS_SCHEMA,
        "config_hash": hash,
        "seed": seed,
        "settings": settings,
        "metrics": metrics,
    });
    emit(a.out.as_deref(), &to_json(&doc)?)?;
    Ok(Status::Success)
}
