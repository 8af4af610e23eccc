//! Out-of-sample evaluation on consecutive, non-overlapping windows, the
//! buy-and-hold baselines, summary metrics and multi-seed experiment suites.
//!
//! A window spans `n` price increments (`n + 1` prices); window `w` starts at
//! test row `w * n`, and a trailing remainder shorter than `n` is discarded.
//! Every window is rescaled so that its first price equals the training spot
//! (100 by default), and all profits are reported on that scale.

use std::io::Write;
use std::path::Path;

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::costs::CostSpec;
use crate::error::{Error, Result};
use crate::market_data::{build_paths, compute_bounds, normalize_spot, AssetBounds, PathMatrix, PriceSeries};
use crate::strategy_net::{trading_profit, StrategyNetwork};
use crate::trainer::{fine_tune_online, train, TrainConfig, TrainedModel, TrainingLog};

pub const OUTPUT_SCHEMA: u32 = 1;

pub const METRIC_LABELS: [&str; 7] = [
    "Overall Profit",
    "Average Profit",
    "% of Profitable Trades",
    "Max. Profit",
    "Min. Profit",
    "Sharpe Ratio",
    "Sortino Ratio",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowProfits {
    pub profits: Vec<f64>,
    pub window_starts: Vec<String>,
}

impl WindowProfits {
    pub fn len(&self) -> usize {
        self.profits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profits.is_empty()
    }

    pub fn cumulative(&self) -> Vec<f64> {
        self.profits
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect()
    }
}

pub fn window_count(test: &PriceSeries, n: usize) -> usize {
    if n == 0 || test.is_empty() {
        0
    } else {
        (test.len() - 1) / n
    }
}

fn check_windows(test: &PriceSeries, n: usize) -> Result<usize> {
    let w = window_count(test, n);
    if w == 0 {
        return Err(Error::InsufficientData(format!(
            "test series of {} prices is shorter than one window of {} prices",
            test.len(),
            n + 1
        )));
    }
    Ok(w)
}

/// Prices of window `w`, rescaled so that the first row equals `target_spot`.
pub fn window_prices(test: &PriceSeries, w: usize, n: usize, target_spot: f64) -> Array2<f64> {
    let start = w * n;
    let raw = test.prices().slice(s![start..=start + n, ..]);
    let scale = raw.row(0).mapv(|p| target_spot / p);
    let mut out = &raw * &scale;
    out.row_mut(0).fill(target_spot);
    out
}

fn window_profit(net: &StrategyNetwork, prices: &Array2<f64>, costs: &CostSpec) -> Result<f64> {
    let spot = prices.row(0);
    let path = prices.slice(s![1.., ..]);
    let pos = net.positions(path)?;
    trading_profit(pos.view(), path, spot, costs)
}

fn starts(test: &PriceSeries, windows: usize, n: usize) -> Vec<String> {
    (0..windows).map(|w| test.dates()[w * n].clone()).collect()
}

/// Trade `net` over every complete window of `test`.
pub fn evaluate(
    net: &StrategyNetwork,
    test: &PriceSeries,
    target_spot: f64,
    costs: &CostSpec,
    n: usize,
) -> Result<WindowProfits> {
    if n != net.horizon || test.n_assets() != net.n_assets {
        return Err(Error::Compatibility(format!(
            "strategy trades {} assets over {} steps; test has {} assets with horizon {n}",
            net.n_assets,
            net.horizon,
            test.n_assets()
        )));
    }
    let windows = check_windows(test, n)?;
    let profits = (0..windows)
        .map(|w| window_profit(net, &window_prices(test, w, n, target_spot), costs))
        .collect::<Result<_>>()?;
    Ok(WindowProfits {
        profits,
        window_starts: starts(test, windows, n),
    })
}

/// Hold `units` of every asset within each window, opening at its start and
/// closing at its end.
pub fn buy_and_hold(
    test: &PriceSeries,
    n: usize,
    units: f64,
    target_spot: f64,
    costs: &CostSpec,
) -> Result<WindowProfits> {
    let windows = check_windows(test, n)?;
    let pos = Array2::from_elem((n, test.n_assets()), units);
    let profits = (0..windows)
        .map(|w| {
            let prices = window_prices(test, w, n, target_spot);
            trading_profit(pos.view(), prices.slice(s![1.., ..]), prices.row(0), costs)
        })
        .collect::<Result<_>>()?;
    Ok(WindowProfits {
        profits,
        window_starts: starts(test, windows, n),
    })
}

/// Open `units` of every asset once at the test start, close at the end of
/// the last complete window, and return the profit per window.
pub fn one_time_buy_and_hold(
    test: &PriceSeries,
    n: usize,
    units: f64,
    target_spot: f64,
    costs: &CostSpec,
) -> Result<f64> {
    let windows = check_windows(test, n)?;
    let end = windows * n;
    let raw = test.prices().slice(s![0..=end, ..]);
    let scale = raw.row(0).mapv(|p| target_spot / p);
    let prices = &raw * &scale;
    let pos = Array2::from_elem((end, test.n_assets()), units);
    let total = trading_profit(pos.view(), prices.slice(s![1.., ..]), prices.row(0), costs)?;
    Ok(total / windows as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub overall_profit: f64,
    pub average_profit: f64,
    pub pct_profitable: f64,
    pub max_profit: f64,
    pub min_profit: f64,
    /// Mean over sample standard deviation of window profits, no risk-free rate.
    pub sharpe: f64,
    /// Mean over `sqrt(mean(min(profit, 0)^2))`.
    pub sortino: f64,
    /// Set when a ratio's denominator vanished; the ratio is then `±inf` by
    /// the sign of the mean, or 0 for a zero mean.
    pub sharpe_degenerate: bool,
    pub sortino_degenerate: bool,
}

impl Metrics {
    pub fn values(&self) -> [f64; 7] {
        [
            self.overall_profit,
            self.average_profit,
            self.pct_profitable,
            self.max_profit,
            self.min_profit,
            self.sharpe,
            self.sortino,
        ]
    }

    /// Field-wise mean; degenerate flags are OR-ed.
    pub fn average(all: &[Metrics]) -> Result<Metrics> {
        if all.is_empty() {
            return Err(Error::InsufficientData("no metrics to average".into()));
        }
        let k = all.len() as f64;
        let mean = |f: fn(&Metrics) -> f64| all.iter().map(f).sum::<f64>() / k;
        Ok(Metrics {
            overall_profit: mean(|m| m.overall_profit),
            average_profit: mean(|m| m.average_profit),
            pct_profitable: mean(|m| m.pct_profitable),
            max_profit: mean(|m| m.max_profit),
            min_profit: mean(|m| m.min_profit),
            sharpe: mean(|m| m.sharpe),
            sortino: mean(|m| m.sortino),
            sharpe_degenerate: all.iter().any(|m| m.sharpe_degenerate),
            sortino_degenerate: all.iter().any(|m| m.sortino_degenerate),
        })
    }
}

fn ratio(mean: f64, denom: f64) -> (f64, bool) {
    if denom > 0.0 {
        (mean / denom, false)
    } else if mean > 0.0 {
        (f64::INFINITY, true)
    } else if mean < 0.0 {
        (f64::NEG_INFINITY, true)
    } else {
        (0.0, true)
    }
}

pub fn metrics(w: &WindowProfits) -> Result<Metrics> {
    let p = &w.profits;
    if p.is_empty() {
        return Err(Error::InsufficientData("no windows".into()));
    }
    let count = p.len() as f64;
    let overall: f64 = p.iter().sum();
    let mean = overall / count;
    let wins = p.iter().filter(|&&x| x > 0.0).count() as f64;
    let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = p.iter().copied().fold(f64::INFINITY, f64::min);
    let std = if p.len() > 1 {
        (p.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (count - 1.0)).sqrt()
    } else {
        0.0
    };
    let downside = (p.iter().map(|x| x.min(0.0).powi(2)).sum::<f64>() / count).sqrt();
    let (sharpe, sharpe_degenerate) = ratio(mean, std);
    let (sortino, sortino_degenerate) = ratio(mean, downside);
    Ok(Metrics {
        overall_profit: overall,
        average_profit: mean,
        pct_profitable: 100.0 * wins / count,
        max_profit: max,
        min_profit: min,
        sharpe,
        sortino,
        sharpe_degenerate,
        sortino_degenerate,
    })
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    (values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0)).sqrt()
}

/// Everything needed to go from price series to trained, evaluated strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: usize,
    pub target_spot: f64,
    /// Widening of the price bounds beyond the observed range; `None` means
    /// the Wasserstein radius (or `d` when the radius is zero).
    pub delta: Option<f64>,
    /// Scale of the bounds box about its midpoint after widening by `delta`.
    pub width_factor: f64,
    pub train: TrainConfig,
    pub costs: CostSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            horizon: 9,
            target_spot: crate::market_data::DEFAULT_TARGET_SPOT,
            delta: None,
            width_factor: 1.0,
            train: TrainConfig::default(),
            costs: CostSpec::per_share(),
        }
    }
}

impl ExperimentConfig {
    pub fn delta_for(&self, d: usize) -> f64 {
        self.delta.unwrap_or_else(|| {
            let eps = self.train.epsilon_for(d);
            if eps > 0.0 {
                eps
            } else {
                d as f64
            }
        })
    }
}

/// Scaled training paths and the bounds box they induce.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub paths: PathMatrix,
    pub bounds: AssetBounds,
}

pub fn prepare_training(series: &PriceSeries, cfg: &ExperimentConfig) -> Result<PreparedData> {
    let d = series.n_assets();
    let normalized = normalize_spot(series, cfg.target_spot);
    let spot = Array1::from_elem(d, cfg.target_spot);
    let paths = build_paths(&normalized, spot.view(), cfg.horizon)?;
    let bounds = compute_bounds(&paths, cfg.delta_for(d))?;
    let bounds = if cfg.width_factor == 1.0 {
        bounds
    } else {
        bounds.scaled(cfg.width_factor)?
    };
    Ok(PreparedData { paths, bounds })
}

#[derive(Debug, Clone)]
pub struct ReplicaResult {
    pub seed: u64,
    pub model: TrainedModel,
    pub profits: WindowProfits,
    pub metrics: Metrics,
}

pub fn run_replica(
    train_series: &PriceSeries,
    test: &PriceSeries,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<ReplicaResult> {
    let prepared = prepare_training(train_series, cfg)?;
    run_replica_prepared(&prepared, test, cfg, seed)
}

fn run_replica_prepared(
    prepared: &PreparedData,
    test: &PriceSeries,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<ReplicaResult> {
    let tc = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let model = train(&prepared.paths, &prepared.bounds, &tc, &cfg.costs)?;
    let profits = evaluate(&model.net, test, cfg.target_spot, &cfg.costs, cfg.horizon)?;
    let metrics = metrics(&profits)?;
    Ok(ReplicaResult {
        seed,
        model,
        profits,
        metrics,
    })
}

/// Cumulative profit path of the replica at one cross-seed quantile rank.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileCurve {
    pub label: &'static str,
    pub quantile: f64,
    pub seed: u64,
    pub cumulative: Vec<f64>,
}

pub const QUANTILES: [(&str, f64); 5] = [
    ("min", 0.0),
    ("q25", 0.25),
    ("median", 0.5),
    ("q75", 0.75),
    ("max", 1.0),
];

/// Rank replicas by final cumulative profit and pick one per quantile.
pub fn quantile_curves(replicas: &[(u64, &WindowProfits)]) -> Vec<QuantileCurve> {
    if replicas.is_empty() {
        return Vec::new();
    }
    let mut ranked: Vec<(u64, Vec<f64>)> = replicas
        .iter()
        .map(|(seed, w)| (*seed, w.cumulative()))
        .collect();
    ranked.sort_by(|a, b| {
        let fa = a.1.last().copied().unwrap_or(0.0);
        let fb = b.1.last().copied().unwrap_or(0.0);
        fa.total_cmp(&fb).then(a.0.cmp(&b.0))
    });
    let last = ranked.len() - 1;
    QUANTILES
        .iter()
        .map(|&(label, q)| {
            let idx = (q * last as f64).round() as usize;
            QuantileCurve {
                label,
                quantile: q,
                seed: ranked[idx].0,
                cumulative: ranked[idx].1.clone(),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub replicas: Vec<ReplicaResult>,
    pub averaged: Metrics,
    pub curves: Vec<QuantileCurve>,
}

/// Train and evaluate `n_seeds` replicas with seeds `base, base + 1, ...`.
/// Replicas run on `workers` threads; results are ordered by seed.
pub fn experiment_suite(
    train_series: &PriceSeries,
    test: &PriceSeries,
    cfg: &ExperimentConfig,
    n_seeds: usize,
    workers: usize,
) -> Result<SuiteResult> {
    if n_seeds == 0 {
        return Err(Error::Config("need at least one seed".into()));
    }
    let prepared = prepare_training(train_series, cfg)?;
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|r| cfg.train.seed + r).collect();
    let replicas = parallel_map(&seeds, workers, |&seed| {
        run_replica_prepared(&prepared, test, cfg, seed)
    })?;
    let averaged = Metrics::average(&replicas.iter().map(|r| r.metrics).collect::<Vec<_>>())?;
    let curves = quantile_curves(&replicas.iter().map(|r| (r.seed, &r.profits)).collect::<Vec<_>>());
    Ok(SuiteResult {
        replicas,
        averaged,
        curves,
    })
}

/// Apply `f` to every item on up to `workers` scoped threads, preserving order.
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| scope.spawn(|| part.iter().map(&f).collect::<Result<Vec<R>>>()))
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("worker panicked")?);
        }
        Ok(out)
    })
}

/// Result of trading with fine-tuning before every window.
#[derive(Debug, Clone)]
pub struct OnlineResult {
    pub profits: WindowProfits,
    pub log: TrainingLog,
    pub net: StrategyNetwork,
}

/// Walk the test windows left to right. Before window `w` the strategy is
/// fine-tuned on the training series extended by the test prices up to the
/// start of window `w`, then trades window `w`.
pub fn evaluate_online(
    net: &StrategyNetwork,
    train_series: &PriceSeries,
    test: &PriceSeries,
    cfg: &ExperimentConfig,
) -> Result<OnlineResult> {
    let n = cfg.horizon;
    if n != net.horizon || test.n_assets() != net.n_assets {
        return Err(Error::Compatibility("strategy does not match test data".into()));
    }
    let windows = check_windows(test, n)?;
    let mut net = net.clone();
    let mut log = TrainingLog::default();
    let mut profits = Vec::with_capacity(windows);
    for w in 0..windows {
        if cfg.train.online_iters > 0 {
            let seen = train_series.concat(&test.slice(0, w * n + 1))?;
            let prepared = prepare_training(&seen, cfg)?;
            let first_iter = log.len() + 1;
            log.extend(fine_tune_online(
                &mut net,
                &prepared.paths,
                &prepared.bounds,
                &cfg.train,
                &cfg.costs,
                w as u64,
                first_iter,
            )?);
        }
        profits.push(window_profit(&net, &window_prices(test, w, n, cfg.target_spot), &cfg.costs)?);
    }
    Ok(OnlineResult {
        profits: WindowProfits {
            profits,
            window_starts: starts(test, windows, n),
        },
        log,
        net,
    })
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

fn json_value(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::String(fmt_value(v))
    }
}

/// A metrics table column; `values[i]` belongs to `METRIC_LABELS[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsColumn {
    pub name: String,
    pub values: [Option<f64>; 7],
}

impl MetricsColumn {
    pub fn full(name: &str, m: &Metrics) -> Self {
        Self {
            name: name.into(),
            values: m.values().map(Some),
        }
    }

    pub fn average_only(name: &str, average: f64) -> Self {
        let mut values = [None; 7];
        values[1] = Some(average);
        Self {
            name: name.into(),
            values,
        }
    }
}

pub fn metrics_csv(columns: &[MetricsColumn]) -> String {
    let mut out = format!("# robarb metrics schema {OUTPUT_SCHEMA}\nmetric");
    for c in columns {
        out.push(',');
        out.push_str(&c.name);
    }
    out.push('\n');
    for (i, label) in METRIC_LABELS.iter().enumerate() {
        out.push_str(label);
        for c in columns {
            out.push(',');
            if let Some(v) = c.values[i] {
                out.push_str(&fmt_value(v));
            }
        }
        out.push('\n');
    }
    out
}

pub fn metrics_json(columns: &[MetricsColumn]) -> Value {
    let mut cols = Map::new();
    for c in columns {
        let mut m = Map::new();
        for (i, label) in METRIC_LABELS.iter().enumerate() {
            if let Some(v) = c.values[i] {
                m.insert((*label).to_owned(), json_value(v));
            }
        }
        cols.insert(c.name.clone(), Value::Object(m));
    }
    json!({
        "schema_version": OUTPUT_SCHEMA,
        "labels": METRIC_LABELS,
        "columns": Value::Object(cols),
    })
}

/// Long format: `seed_rank_quantile,seed,window_index,cumulative_profit`.
pub fn equity_csv(curves: &[QuantileCurve]) -> String {
    let mut out = format!(
        "# robarb equity schema {OUTPUT_SCHEMA}\nseed_rank_quantile,seed,window_index,cumulative_profit\n"
    );
    for c in curves {
        for (w, v) in c.cumulative.iter().enumerate() {
            out.push_str(&format!("{},{},{w},{}\n", c.label, c.seed, fmt_value(*v)));
        }
    }
    out
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
