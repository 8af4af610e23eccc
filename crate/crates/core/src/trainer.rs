//! Training loop: fresh ambiguity set every iteration, one full-batch
//! gradient step on the penalized objective, projection onto the budget box.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::costs::CostSpec;
use crate::error::{Error, Result};
use crate::market_data::{AssetBounds, PathMatrix};
use crate::measures::{build_ambiguity_set, ScenarioSet};
use crate::objective::{penalized_loss, ObjectiveConfig, PenaltyFn};
use crate::partition::{sample_boxes, BoxPartition};
use crate::rng::{stream_rng, Rng, Stream};
use crate::strategy_net::{GradientBundle, StrategyNetwork};

pub const LOG_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_iter: usize,
    pub k: f64,
    /// Wasserstein radius; `None` means `d`. Zero trains on the empirical
    /// measure alone.
    pub epsilon: Option<f64>,
    pub n_measures: usize,
    pub depth: usize,
    /// `None` means `1e-3` for up to two assets and `1e-4` otherwise.
    pub learning_rate: Option<f64>,
    pub optimizer: OptimizerKind,
    pub bound: f64,
    /// Hidden widths as multiples of the asset count.
    pub width_multipliers: Vec<usize>,
    pub penalty_lambda: f64,
    pub penalty_power: f64,
    pub seed: u64,
    pub online_iters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_iter: 100,
            k: 1.0,
            epsilon: None,
            n_measures: 5,
            depth: 12,
            learning_rate: None,
            optimizer: OptimizerKind::Sgd,
            bound: 10.0,
            width_multipliers: vec![32, 64, 128],
            penalty_lambda: 1.0,
            penalty_power: 2.0,
            seed: 0,
            online_iters: 5,
        }
    }
}

impl TrainConfig {
    pub fn epsilon_for(&self, d: usize) -> f64 {
        self.epsilon.unwrap_or(d as f64)
    }

    pub fn learning_rate_for(&self, d: usize) -> f64 {
        self.learning_rate
            .unwrap_or(if d <= 2 { 1e-3 } else { 1e-4 })
    }

    pub fn widths_for(&self, d: usize) -> Vec<usize> {
        self.width_multipliers.iter().map(|m| m * d).collect()
    }

    pub fn penalty(&self) -> PenaltyFn {
        PenaltyFn {
            lambda: self.penalty_lambda,
            power: self.penalty_power,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_measures == 0 {
            return Err(Error::Config("n_measures must be at least 1".into()));
        }
        if self.width_multipliers.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if !(self.bound > 0.0 && self.bound.is_finite()) {
            return Err(Error::Config(format!("bound {} must be positive", self.bound)));
        }
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(Error::Config(format!("k {} must be nonnegative", self.k)));
        }
        if let Some(e) = self.epsilon {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(Error::Config(format!("epsilon {e} must be nonnegative")));
            }
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("learning rate {lr} must be positive")));
            }
        }
        if !(self.penalty_lambda > 0.0 && self.penalty_power >= 1.0) {
            return Err(Error::Config("penalty needs lambda > 0 and power >= 1".into()));
        }
        if self.depth > crate::partition::MAX_DEPTH {
            return Err(Error::Config(format!("depth {} too large", self.depth)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub loss: f64,
    pub cash: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn extend(&mut self, other: TrainingLog) {
        self.rows.extend(other.rows);
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = format!("# robarb training-log schema {LOG_SCHEMA}\niter,loss,c,penalty\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.iter, r.loss, r.cash, r.penalty));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv_string().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// Gradient-descent state over the flattened parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: i32,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    pub fn step(&mut self, net: &mut StrategyNetwork, grad: &GradientBundle) {
        let gs = grad.slices();
        let mut ps = net.param_slices_mut();
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in ps.iter_mut().zip(&gs) {
                    p.iter_mut().zip(g.iter()).for_each(|(p, g)| *p -= self.lr * g);
                }
            }
            OptimizerKind::Adam => {
                if self.first.is_empty() {
                    self.first = gs.iter().map(|g| vec![0.0; g.len()]).collect();
                    self.second = self.first.clone();
                }
                self.steps += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(self.steps);
                let c2 = 1.0 - ADAM_BETA2.powi(self.steps);
                for (((p, g), m), v) in ps
                    .iter_mut()
                    .zip(&gs)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for i in 0..p.len() {
                        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                        let mhat = m[i] / c1;
                        let vhat = v[i] / c2;
                        p[i] -= self.lr * mhat / (vhat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

/// A trained strategy with the partition it was trained against.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub net: StrategyNetwork,
    pub partition: BoxPartition,
    pub log: TrainingLog,
}

fn sample_sets(rng: &mut Rng, base: &PathMatrix, epsilon: f64, n_measures: usize) -> Result<Vec<ScenarioSet>> {
    if epsilon == 0.0 {
        Ok(vec![ScenarioSet::empirical(base)])
    } else {
        build_ambiguity_set(rng, base, epsilon, n_measures)
    }
}

struct LoopState<'a> {
    base: &'a PathMatrix,
    partition: &'a BoxPartition,
    cfg: &'a TrainConfig,
    costs: &'a CostSpec,
}

impl LoopState<'_> {
    fn run(
        &self,
        net: &mut StrategyNetwork,
        opt: &mut Optimizer,
        rng: &mut Rng,
        iters: usize,
        first_iter: usize,
    ) -> Result<TrainingLog> {
        let d = self.base.n_assets();
        let epsilon = self.cfg.epsilon_for(d);
        let obj = ObjectiveConfig {
            k: self.cfg.k,
            penalty: self.cfg.penalty(),
            partition: self.partition,
            payoff: None,
        };
        let mut log = TrainingLog::default();
        for it in 0..iters {
            let sets = sample_sets(rng, self.base, epsilon, self.cfg.n_measures)?;
            for s in &sets {
                net.update_norm_stats(s.paths.view())?;
            }
            let eval = penalized_loss(net, &sets, &obj, self.costs, &self.base.spot, true)?;
            let grad = eval.grad.as_ref().expect("gradient requested");
            if grad.flatten().iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical("non-finite gradient".into()));
            }
            log.rows.push(LogRow {
                iter: first_iter + it,
                loss: eval.loss,
                cash: eval.cash,
                penalty: eval.penalty,
            });
            opt.step(net, grad);
            net.project();
        }
        Ok(log)
    }
}

fn check_data(data: &PathMatrix, bounds: &AssetBounds) -> Result<()> {
    if bounds.dim() != data.n_assets() {
        return Err(Error::ShapeMismatch(format!(
            "{}-asset bounds for {}-asset paths",
            bounds.dim(),
            data.n_assets()
        )));
    }
    for ((_, _, j), &v) in data.paths.indexed_iter() {
        if !(bounds.lower[j] <= v && v <= bounds.upper[j]) {
            return Err(Error::OutOfBounds {
                asset: j,
                value: v,
                lower: bounds.lower[j],
                upper: bounds.upper[j],
            });
        }
    }
    Ok(())
}

/// Train a strategy on `data` with the partition sampled once from `bounds`.
pub fn train(data: &PathMatrix, bounds: &AssetBounds, cfg: &TrainConfig, costs: &CostSpec) -> Result<TrainedModel> {
    cfg.validate()?;
    costs.validate()?;
    check_data(data, bounds)?;
    let d = data.n_assets();
    let mut net = StrategyNetwork::init(
        &mut stream_rng(cfg.seed, Stream::Init, 0),
        d,
        data.horizon(),
        cfg.bound,
        &cfg.widths_for(d),
    )?;
    let partition = sample_boxes(&mut stream_rng(cfg.seed, Stream::Partition, 0), bounds, cfg.depth)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate_for(d));
    let mut rng = stream_rng(cfg.seed, Stream::Perturbation, 0);
    let state = LoopState {
        base: data,
        partition: &partition,
        cfg,
        costs,
    };
    let log = state.run(&mut net, &mut opt, &mut rng, cfg.n_iter, 1)?;
    Ok(TrainedModel {
        net,
        partition,
        log,
    })
}

/// Continue training `net` for `cfg.online_iters` iterations on augmented
/// data. `round` numbers the fine-tuning calls of one run and selects their
/// random streams; the partition is resampled from the augmented bounds.
pub fn fine_tune_online(
    net: &mut StrategyNetwork,
    augmented: &PathMatrix,
    bounds: &AssetBounds,
    cfg: &TrainConfig,
    costs: &CostSpec,
    round: u64,
    first_iter: usize,
) -> Result<TrainingLog> {
    if cfg.online_iters == 0 {
        return Ok(TrainingLog::default());
    }
    cfg.validate()?;
    check_data(augmented, bounds)?;
    if augmented.horizon() != net.horizon || augmented.n_assets() != net.n_assets {
        return Err(Error::Compatibility("augmented data shape differs from the strategy".into()));
    }
    let partition = sample_boxes(&mut stream_rng(cfg.seed, Stream::Partition, round + 1), bounds, cfg.depth)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate_for(net.n_assets));
    let mut rng = stream_rng(cfg.seed, Stream::FineTune, round);
    let state = LoopState {
        base: augmented,
        partition: &partition,
        cfg,
        costs,
    };
    state.run(net, &mut opt, &mut rng, cfg.online_iters, first_iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::compute_bounds;
    use ndarray::{Array1, Array3};
    use rand::Rng as _;

    fn toy_data(seed: u64, m: usize, n: usize, d: usize) -> PathMatrix {
        let mut rng = stream_rng(seed, Stream::Market, 0);
        let paths = Array3::from_shape_simple_fn((m, n, d), || 95.0 + 10.0 * rng.random::<f64>());
        PathMatrix::new(paths, Array1::from_elem(d, 100.0)).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            n_iter: 5,
            depth: 3,
            width_multipliers: vec![3, 2],
            n_measures: 2,
            seed: 17,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_iterations_return_initial_net() {
        let data = toy_data(1, 20, 3, 2);
        let bounds = compute_bounds(&data, 2.0).unwrap();
        let cfg = TrainConfig {
            n_iter: 0,
            ..small_cfg()
        };
        let model = train(&data, &bounds, &cfg, &CostSpec::per_share()).unwrap();
        let init = StrategyNetwork::init(&mut stream_rng(17, Stream::Init, 0), 2, 3, 10.0, &[6, 4]).unwrap();
        assert_eq!(model.net, init);
        assert!(model.log.is_empty());
    }

    #[test]
    fn zero_penalty_weight_drives_cash_down() {
        let data = toy_data(2, 10, 2, 1);
        let bounds = compute_bounds(&data, 1.0).unwrap();
        let cfg = TrainConfig {
            n_iter: 40,
            k: 0.0,
            optimizer: OptimizerKind::Sgd,
            learning_rate: Some(0.5),
            ..small_cfg()
        };
        let model = train(&data, &bounds, &cfg, &CostSpec::zero()).unwrap();
        assert_eq!(model.net.cash, -10.0);
        for (i, r) in model.log.rows.iter().enumerate() {
            assert_eq!(r.loss, r.cash);
            assert_eq!(r.iter, i + 1);
        }
    }

    #[test]
    fn training_is_deterministic_and_projected() {
        let data = toy_data(3, 30, 3, 2);
        let bounds = compute_bounds(&data, 2.0).unwrap();
        let cfg = TrainConfig {
            learning_rate: Some(5.0),
            ..small_cfg()
        };
        let a = train(&data, &bounds, &cfg, &CostSpec::per_share()).unwrap();
        let b = train(&data, &bounds, &cfg, &CostSpec::per_share()).unwrap();
        assert_eq!(a.log.to_csv_string(), b.log.to_csv_string());
        assert_eq!(a.net, b.net);
        assert!(a.net.cash.abs() <= 10.0);
        assert!(a.net.delta0.iter().all(|v| v.abs() <= 10.0));
        let c = train(&data, &bounds, &TrainConfig { seed: 18, ..cfg }, &CostSpec::per_share()).unwrap();
        assert_ne!(a.net, c.net);
    }

    #[test]
    fn misconfigured_radius_is_reported() {
        let data = toy_data(4, 30, 3, 2);
        let bounds = compute_bounds(&data, 0.01).unwrap();
        let cfg = TrainConfig {
            epsilon: Some(50.0),
            ..small_cfg()
        };
        let err = train(&data, &bounds, &cfg, &CostSpec::zero()).unwrap_err();
        assert!(matches!(err, Error::OutOfBounds { .. }), "{err}");
    }

    #[test]
    fn empirical_mode_with_zero_radius() {
        let data = toy_data(5, 12, 2, 1);
        let bounds = compute_bounds(&data, 0.5).unwrap();
        let cfg = TrainConfig {
            epsilon: Some(0.0),
            ..small_cfg()
        };
        let model = train(&data, &bounds, &cfg, &CostSpec::zero()).unwrap();
        assert_eq!(model.log.len(), 5);
    }

    #[test]
    fn fine_tune_runs_requested_iterations() {
        let data = toy_data(6, 20, 3, 1);
        let bounds = compute_bounds(&data, 1.0).unwrap();
        let cfg = small_cfg();
        let mut model = train(&data, &bounds, &cfg, &CostSpec::zero()).unwrap();
        let before = model.net.clone();
        let log = fine_tune_online(&mut model.net, &data, &bounds, &cfg, &CostSpec::zero(), 0, 6).unwrap();
        assert_eq!(log.len(), cfg.online_iters);
        assert_eq!(log.rows[0].iter, 6);
        assert_ne!(model.net, before);

        let none = TrainConfig {
            online_iters: 0,
            ..cfg.clone()
        };
        let mut net = before.clone();
        let log = fine_tune_online(&mut net, &data, &bounds, &none, &CostSpec::zero(), 0, 1).unwrap();
        assert!(log.is_empty());
        assert_eq!(net, before);
    }

    #[test]
    fn log_csv_format() {
        let log = TrainingLog {
            rows: vec![LogRow {
                iter: 1,
                loss: 0.5,
                cash: -0.25,
                penalty: 0.75,
            }],
        };
        assert_eq!(
            log.to_csv_string(),
            "# robarb training-log schema 1\niter,loss,c,penalty\n1,0.5,-0.25,0.75\n"
        );
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { n_measures: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: Some(0.0), ..TrainConfig::default() }.validate().is_err());
        assert_eq!(TrainConfig::default().learning_rate_for(2), 1e-3);
        assert_eq!(TrainConfig::default().learning_rate_for(10), 1e-4);
        assert_eq!(TrainConfig::default().epsilon_for(3), 3.0);
    }
}
