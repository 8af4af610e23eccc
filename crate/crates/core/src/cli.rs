//! Command-line front end.
//!
//! Every command except `ingest` reads one TOML run configuration. Relative
//! paths inside the file are resolved against the file's directory; flags
//! override file values, and `ROBARB_OUTPUT_DIR` overrides the output
//! directory when no `--output-dir` flag is given.
//!
//! ```toml
//! [data]
//! train = "train.csv"
//! test = "test.csv"
//! tickers = ["A", "B"]
//!
//! [model]
//! horizon = 9
//!
//! [train]
//! n_iter = 100
//! seed = 0
//!
//! [costs]
//! trans_mode = "per_share"
//! trans_lambda = 0.01
//! spread_lambda = 0.0002
//! short_lambda_daily = 0.000396825
//!
//! [suite]
//! seeds = 10
//!
//! [sweep]
//! epsilon = [0.0, 1.0, 2.0]
//! bounds_width = [1.0, 2.0]
//! seeds = 5
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::backtest::{
    buy_and_hold, equity_csv, evaluate, evaluate_online, experiment_suite, metrics, metrics_csv, metrics_json,
    one_time_buy_and_hold, prepare_training, quantile_curves, sample_std, write_text, ExperimentConfig,
    MetricsColumn, WindowProfits, OUTPUT_SCHEMA,
};
use crate::costs::CostSpec;
use crate::error::{Error, Result};
use crate::market_data::{load_series, write_series, PriceSeries, DEFAULT_TARGET_SPOT};
use crate::strategy_net::{Checkpoint, StrategyNetwork};
use crate::trainer::{train, OptimizerKind, TrainConfig};

pub const CONFIG_SCHEMA: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "robarb", version, about = "Train and backtest robust statistical arbitrage strategies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align a raw price CSV on common dates and optionally split off a test tail.
    Ingest(IngestArgs),
    /// Train one strategy and write its checkpoint and training log.
    Train(RunArgs),
    /// Evaluate a checkpoint on the test windows.
    Backtest(CheckpointArgs),
    /// Evaluate a checkpoint with fine-tuning before every test window.
    OnlineBacktest(CheckpointArgs),
    /// Train and evaluate several seeds for every value of a grid.
    Sweep(SweepArgs),
    /// Train and evaluate several seeds and write averaged tables and equity curves.
    Report(RunArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Comma-separated columns to keep; all columns when omitted.
    #[arg(long, value_delimiter = ',')]
    pub tickers: Vec<String>,
    /// Write the last N rows to test.csv and the rest to train.csv.
    #[arg(long)]
    pub test_rows: Option<usize>,
    #[arg(long, env = "ROBARB_OUTPUT_DIR", default_value = ".")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, env = "ROBARB_OUTPUT_DIR")]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_iter: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub online_iters: Option<usize>,
    /// Number of replicas for `report` and per grid value for `sweep`.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CheckpointArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum)]
    pub axis: SweepAxis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepAxis {
    Epsilon,
    BoundsWidth,
}

impl SweepAxis {
    fn name(self) -> &'static str {
        match self {
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::BoundsWidth => "bounds_width",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Columns to use; all columns of the file when empty.
    pub tickers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub horizon: usize,
    pub target_spot: f64,
    pub delta: Option<f64>,
    pub width_factor: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            horizon: 9,
            target_spot: DEFAULT_TARGET_SPOT,
            delta: None,
            width_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSection {
    pub baselines: bool,
    /// Units of each asset held by the buy-and-hold baselines.
    pub units: f64,
}

impl Default for BacktestSection {
    fn default() -> Self {
        Self {
            baselines: true,
            units: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSection {
    pub seeds: usize,
    pub workers: usize,
}

impl Default for SuiteSection {
    fn default() -> Self {
        Self { seeds: 1, workers: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub epsilon: Vec<f64>,
    pub bounds_width: Vec<f64>,
    pub seeds: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            epsilon: Vec::new(),
            bounds_width: Vec::new(),
            seeds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("robarb-out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub costs: CostSpec,
    pub backtest: BacktestSection,
    pub suite: SuiteSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA,
            data: DataSection::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            costs: CostSpec::per_share(),
            backtest: BacktestSection::default(),
            suite: SuiteSection::default(),
            sweep: SweepSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != CONFIG_SCHEMA {
            return Err(Error::Config(format!(
                "config schema {} (expected {CONFIG_SCHEMA})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Read a config file and resolve its relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::DataNotFound(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.data.train.as_mut().map(resolve);
        cfg.data.test.as_mut().map(resolve);
        resolve(&mut cfg.output.dir);
        Ok(cfg)
    }

    pub fn apply(&mut self, args: &RunArgs) {
        if let Some(dir) = &args.output_dir {
            self.output.dir = dir.clone();
        }
        if let Some(v) = args.seed {
            self.train.seed = v;
        }
        if let Some(v) = args.n_iter {
            self.train.n_iter = v;
        }
        if let Some(v) = args.epsilon {
            self.train.epsilon = Some(v);
        }
        if let Some(v) = args.depth {
            self.train.depth = v;
        }
        if let Some(v) = args.horizon {
            self.model.horizon = v;
        }
        if let Some(v) = args.optimizer {
            self.train.optimizer = match v {
                OptimizerArg::Sgd => OptimizerKind::Sgd,
                OptimizerArg::Adam => OptimizerKind::Adam,
            };
        }
        if let Some(v) = args.learning_rate {
            self.train.learning_rate = Some(v);
        }
        if let Some(v) = args.online_iters {
            self.train.online_iters = v;
        }
        if let Some(v) = args.seeds {
            self.suite.seeds = v;
            self.sweep.seeds = v;
        }
        if let Some(v) = args.workers {
            self.suite.workers = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.costs.validate()?;
        if self.model.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.model.target_spot > 0.0 && self.model.width_factor > 0.0) {
            return Err(Error::Config("target_spot and width_factor must be positive".into()));
        }
        if self.suite.seeds == 0 || self.sweep.seeds == 0 {
            return Err(Error::Config("seed counts must be positive".into()));
        }
        Ok(())
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            horizon: self.model.horizon,
            target_spot: self.model.target_spot,
            delta: self.model.delta,
            width_factor: self.model.width_factor,
            train: self.train.clone(),
            costs: self.costs,
        }
    }

    /// SHA-256 over the canonical JSON of everything that affects results;
    /// the output location and worker count are excluded.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output = OutputSection::default();
        canon.suite.workers = 1;
        let text = serde_json::to_string(&canon).expect("config serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn train_series(&self) -> Result<PriceSeries> {
        let path = self
            .data
            .train
            .as_ref()
            .ok_or_else(|| Error::Config("data.train is not set".into()))?;
        Ok(load_series(path, &self.data.tickers)?.series)
    }

    fn test_series(&self) -> Result<PriceSeries> {
        let path = self
            .data
            .test
            .as_ref()
            .ok_or_else(|| Error::Config("data.test is not set".into()))?;
        Ok(load_series(path, &self.data.tickers)?.series)
    }
}

fn load_run(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    cfg.apply(args);
    cfg.validate()?;
    Ok(cfg)
}

struct Output {
    dir: PathBuf,
    command: &'static str,
    started: u64,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl Output {
    fn create(dir: &Path, command: &'static str) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command,
            started: unix_now(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        write_text(&path, text)?;
        Ok(path)
    }

    fn json(&self, name: &str, value: &serde_json::Value) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
        text.push('\n');
        self.text(name, &text)
    }

    /// The resolved config without its output location, which goes to
    /// `run_meta.json` instead.
    fn config_echo(&self, cfg: &RunConfig) -> Result<PathBuf> {
        let mut echo = serde_json::to_value(cfg).map_err(|e| Error::Parse(e.to_string()))?;
        if let Some(map) = echo.as_object_mut() {
            map.remove("output");
        }
        self.json(
            "config.json",
            &json!({
                "schema_version": OUTPUT_SCHEMA,
                "config_hash": cfg.hash(),
                "resolved_seed": cfg.train.seed,
                "config": echo,
            }),
        )
    }

    /// Timestamps live only here so that every other output is reproducible.
    fn finish(&self) -> Result<()> {
        self.json(
            "run_meta.json",
            &json!({
                "schema_version": OUTPUT_SCHEMA,
                "command": self.command,
                "output_dir": self.dir,
                "version": env!("CARGO_PKG_VERSION"),
                "started_unix": self.started,
                "finished_unix": unix_now(),
            }),
        )?;
        Ok(())
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Backtest(a) => cmd_backtest(&a, false),
        Command::OnlineBacktest(a) => cmd_backtest(&a, true),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

pub fn cmd_ingest(args: &IngestArgs) -> Result<()> {
    let loaded = load_series(&args.input, &args.tickers)?;
    let series = loaded.series;
    std::fs::create_dir_all(&args.output_dir).map_err(|e| Error::io(&args.output_dir, e))?;
    match args.test_rows {
        None => {
            let out = args.output_dir.join("prices.csv");
            write_series(&series, &out)?;
            println!("{} rows -> {}", series.len(), out.display());
        }
        Some(k) => {
            if k == 0 || k >= series.len() {
                return Err(Error::InsufficientData(format!(
                    "cannot split {k} test rows from {} rows",
                    series.len()
                )));
            }
            let cut = series.len() - k;
            write_series(&series.slice(0, cut), args.output_dir.join("train.csv"))?;
            write_series(&series.slice(cut, series.len()), args.output_dir.join("test.csv"))?;
            println!("{cut} train rows, {k} test rows -> {}", args.output_dir.display());
        }
    }
    if loaded.dropped_rows > 0 {
        println!("dropped {} rows with missing prices", loaded.dropped_rows);
    }
    Ok(())
}

pub fn cmd_train(args: &RunArgs) -> Result<()> {
    let cfg = load_run(args)?;
    let exp = cfg.experiment();
    let series = cfg.train_series()?;
    let prepared = prepare_training(&series, &exp)?;
    let model = train(&prepared.paths, &prepared.bounds, &cfg.train, &cfg.costs)?;

    let out = Output::create(&cfg.output.dir, "train")?;
    let hash = cfg.hash();
    model.net.save(out.path("checkpoint.json"), &hash)?;
    model.log.write_csv(out.path("training_log.csv"))?;
    out.json(
        "partition.json",
        &json!({"schema_version": OUTPUT_SCHEMA, "partition": model.partition}),
    )?;
    out.config_echo(&cfg)?;
    out.finish()?;
    if let Some(last) = model.log.rows.last() {
        println!("iter {} loss {} c {} penalty {}", last.iter, last.loss, last.cash, last.penalty);
    }
    println!("wrote {}", out.dir.display());
    Ok(())
}

fn load_compatible(path: &Path, cfg: &RunConfig, d: usize) -> Result<StrategyNetwork> {
    let Checkpoint { strategy, .. } = StrategyNetwork::load(path)?;
    if strategy.n_assets != d || strategy.horizon != cfg.model.horizon || strategy.bound != cfg.train.bound {
        return Err(Error::Compatibility(format!(
            "checkpoint has d={} n={} B={}, config has d={d} n={} B={}",
            strategy.n_assets, strategy.horizon, strategy.bound, cfg.model.horizon, cfg.train.bound
        )));
    }
    Ok(strategy)
}

fn windows_csv(strategy: &WindowProfits, bh: Option<&WindowProfits>) -> String {
    let mut out = format!("# robarb windows schema {OUTPUT_SCHEMA}\nwindow_index,window_start,strategy_profit");
    if bh.is_some() {
        out.push_str(",bh_profit");
    }
    out.push('\n');
    for (w, (p, start)) in strategy.profits.iter().zip(&strategy.window_starts).enumerate() {
        out.push_str(&format!("{w},{start},{p}"));
        if let Some(b) = bh {
            out.push_str(&format!(",{}", b.profits[w]));
        }
        out.push('\n');
    }
    out
}

fn baseline_columns(cfg: &RunConfig, test: &PriceSeries) -> Result<(Vec<MetricsColumn>, Option<WindowProfits>)> {
    if !cfg.backtest.baselines {
        return Ok((Vec::new(), None));
    }
    let n = cfg.model.horizon;
    let spot = cfg.model.target_spot;
    let bh = buy_and_hold(test, n, cfg.backtest.units, spot, &cfg.costs)?;
    let once = one_time_buy_and_hold(test, n, cfg.backtest.units, spot, &cfg.costs)?;
    Ok((
        vec![
            MetricsColumn::full("B&H", &metrics(&bh)?),
            MetricsColumn::average_only("One-time B&H", once),
        ],
        Some(bh),
    ))
}

fn write_tables(out: &Output, columns: &[MetricsColumn]) -> Result<()> {
    let csv = metrics_csv(columns);
    out.text("metrics.csv", &csv)?;
    out.json("metrics.json", &metrics_json(columns))?;
    print!("{}", csv.lines().skip(1).map(|l| format!("{l}\n")).collect::<String>());
    Ok(())
}

pub fn cmd_backtest(args: &CheckpointArgs, online: bool) -> Result<()> {
    let cfg = load_run(&args.run)?;
    let test = cfg.test_series()?;
    let net = load_compatible(&args.checkpoint, &cfg, test.n_assets())?;
    let exp = cfg.experiment();
    let command = if online { "online-backtest" } else { "backtest" };

    let (profits, log) = if online {
        let res = evaluate_online(&net, &cfg.train_series()?, &test, &exp)?;
        (res.profits, Some(res.log))
    } else {
        (evaluate(&net, &test, exp.target_spot, &exp.costs, exp.horizon)?, None)
    };
    let mut columns = vec![MetricsColumn::full("Strategy", &metrics(&profits)?)];
    let (baselines, bh) = baseline_columns(&cfg, &test)?;
    columns.extend(baselines);

    let out = Output::create(&cfg.output.dir, command)?;
    write_tables(&out, &columns)?;
    out.text("windows.csv", &windows_csv(&profits, bh.as_ref()))?;
    out.text("equity.csv", &equity_csv(&quantile_curves(&[(cfg.train.seed, &profits)])))?;
    if let Some(log) = log {
        log.write_csv(out.path("online_log.csv"))?;
        println!("{} fine-tuning iterations", log.len());
    }
    out.config_echo(&cfg)?;
    out.finish()
}

pub fn cmd_report(args: &RunArgs) -> Result<()> {
    let cfg = load_run(args)?;
    let train_series = cfg.train_series()?;
    let test = cfg.test_series()?;
    let exp = cfg.experiment();
    let suite = experiment_suite(&train_series, &test, &exp, cfg.suite.seeds, cfg.suite.workers)?;

    let out = Output::create(&cfg.output.dir, "report")?;
    let ckpt_dir = out.path("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    let mut replicas = format!(
        "# robarb replicas schema {OUTPUT_SCHEMA}\nseed,overall_profit,average_profit,pct_profitable,max_profit,min_profit,sharpe,sortino\n"
    );
    for r in &suite.replicas {
        let seeded = RunConfig {
            train: TrainConfig {
                seed: r.seed,
                ..cfg.train.clone()
            },
            ..cfg.clone()
        };
        r.model
            .net
            .save(ckpt_dir.join(format!("seed_{}.json", r.seed)), &seeded.hash())?;
        let v = r.metrics.values();
        replicas.push_str(&format!(
            "{},{}\n",
            r.seed,
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        ));
    }
    out.text("replicas.csv", &replicas)?;

    let mut columns = vec![MetricsColumn::full("Strategy", &suite.averaged)];
    columns.extend(baseline_columns(&cfg, &test)?.0);
    write_tables(&out, &columns)?;
    out.text("equity.csv", &equity_csv(&suite.curves))?;
    out.config_echo(&cfg)?;
    out.finish()
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let cfg = load_run(&args.run)?;
    let grid = match args.axis {
        SweepAxis::Epsilon => &cfg.sweep.epsilon,
        SweepAxis::BoundsWidth => &cfg.sweep.bounds_width,
    };
    if grid.is_empty() {
        return Err(Error::Config(format!("sweep.{} grid is empty", args.axis.name())));
    }
    let train_series = cfg.train_series()?;
    let test = cfg.test_series()?;

    let mut csv = format!(
        "# robarb sweep schema {OUTPUT_SCHEMA}\naxis,value,seed,average_profit,overall_profit,profit_std,sharpe,sortino,pct_profitable\n"
    );
    for &value in grid {
        let mut exp = cfg.experiment();
        match args.axis {
            SweepAxis::Epsilon => exp.train.epsilon = Some(value),
            SweepAxis::BoundsWidth => exp.width_factor = value,
        }
        let suite = experiment_suite(&train_series, &test, &exp, cfg.sweep.seeds, cfg.suite.workers)?;
        for r in &suite.replicas {
            let m = &r.metrics;
            csv.push_str(&format!(
                "{},{value},{},{},{},{},{},{},{}\n",
                args.axis.name(),
                r.seed,
                m.average_profit,
                m.overall_profit,
                sample_std(&r.profits.profits),
                m.sharpe,
                m.sortino,
                m.pct_profitable
            ));
        }
        println!("{} = {value}: mean Sharpe {}", args.axis.name(), suite.averaged.sharpe);
    }
    let out = Output::create(&cfg.output.dir, "sweep")?;
    out.text(&format!("sweep_{}.csv", args.axis.name()), &csv)?;
    out.config_echo(&cfg)?;
    out.finish()
}
