//! Bounded feed-forward trading strategies with hand-written backpropagation.
//!
//! A strategy holds a cash amount `c`, constant initial positions `Δ_0`, and
//! one network per later trading date. Network `i` (for `i = 1..n-1`) reads
//! the first `i` observed price vectors, flattened step-major, and returns a
//! position vector in `[-B, B]^d`:
//!
//! ```text
//! input -> standardize (running stats) -> scale/shift
//!       -> [affine -> ReLU] x hidden widths -> affine to d -> tanh -> x B
//! ```

use std::path::Path;

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis, Zip};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::costs::{total_costs, total_costs_grad, CostSpec};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const DEFAULT_BOUND: f64 = 10.0;
pub const NORM_MOMENTUM: f64 = 0.1;
pub const NORM_EPS: f64 = 1e-5;
pub const CHECKPOINT_SCHEMA: u32 = 1;

/// Hidden widths `32d, 64d, 128d`.
pub fn default_widths(d: usize) -> Vec<usize> {
    vec![32 * d, 64 * d, 128 * d]
}

/// Affine map `x -> x W + b` with `W` of shape `(fan_in, fan_out)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    /// Weights and biases uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    fn init(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut draw = || (2.0 * rng.random::<f64>() - 1.0) * bound;
        let weight = Array2::from_shape_simple_fn((fan_in, fan_out), &mut draw);
        let bias = Array1::from_shape_simple_fn(fan_out, &mut draw);
        Self { weight, bias }
    }

    fn zeros_like(other: &Dense) -> Self {
        Self {
            weight: Array2::zeros(other.weight.raw_dim()),
            bias: Array1::zeros(other.bias.raw_dim()),
        }
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight);
        z += &self.bias;
        z
    }
}

/// Per-feature input standardization with a trainable scale and shift.
///
/// Running statistics are refreshed by [`StrategyNetwork::update_norm_stats`]
/// during training and treated as constants by the forward and backward
/// passes, so evaluation never depends on the batch composition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub observed: bool,
}

impl InputNorm {
    fn new(dim: usize) -> Self {
        Self {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
            observed: false,
        }
    }

    fn standardize(&self, x: &Array2<f64>) -> Array2<f64> {
        let inv_std = self.running_var.mapv(|v| 1.0 / (v + NORM_EPS).sqrt());
        let mut out = x - &self.running_mean;
        out *= &inv_std;
        out
    }

    /// First batch sets the statistics; later batches blend in with momentum.
    fn update(&mut self, x: &Array2<f64>) {
        let rows = x.nrows();
        if rows == 0 {
            return;
        }
        let mean = x.mean_axis(Axis(0)).expect("nonempty batch");
        let ddof = if rows > 1 { 1.0 } else { 0.0 };
        let var = x.var_axis(Axis(0), ddof);
        if self.observed {
            self.running_mean = &self.running_mean * (1.0 - NORM_MOMENTUM) + &mean * NORM_MOMENTUM;
            self.running_var = &self.running_var * (1.0 - NORM_MOMENTUM) + &var * NORM_MOMENTUM;
        } else {
            self.running_mean = mean;
            self.running_var = var;
            self.observed = true;
        }
    }
}

/// Network for one trading date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionNet {
    pub norm: InputNorm,
    pub hidden: Vec<Dense>,
    pub output: Dense,
}

/// Intermediate values of one network's forward pass.
#[derive(Debug, Clone)]
pub struct NetTape {
    standardized: Array2<f64>,
    /// `acts[0]` is the scaled input, `acts[k]` the output of hidden layer `k`.
    acts: Vec<Array2<f64>>,
    squashed: Array2<f64>,
}

impl NetTape {
    /// Which hidden units were active, row by row. Used to detect ReLU kinks.
    pub fn activation_pattern(&self) -> Vec<bool> {
        self.acts[1..]
            .iter()
            .flat_map(|a| a.iter().map(|&v| v > 0.0))
            .collect()
    }
}

impl PositionNet {
    fn init(rng: &mut Rng, input_dim: usize, widths: &[usize], d: usize) -> Self {
        let mut fan_in = input_dim;
        let mut hidden = Vec::with_capacity(widths.len());
        for &w in widths {
            hidden.push(Dense::init(rng, fan_in, w));
            fan_in = w;
        }
        let output = Dense::init(rng, fan_in, d);
        Self {
            norm: InputNorm::new(input_dim),
            hidden,
            output,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.norm.gamma.len()
    }

    fn forward(&self, x: &Array2<f64>, bound: f64) -> (Array2<f64>, NetTape) {
        let standardized = self.norm.standardize(x);
        let mut a = &standardized * &self.norm.gamma;
        a += &self.norm.beta;
        let mut acts = Vec::with_capacity(self.hidden.len() + 1);
        for layer in &self.hidden {
            let mut z = layer.forward(&a);
            z.mapv_inplace(|v| v.max(0.0));
            acts.push(std::mem::replace(&mut a, z));
        }
        let squashed = self.output.forward(&a).mapv_into(f64::tanh);
        acts.push(a);
        let positions = &squashed * bound;
        (
            positions,
            NetTape {
                standardized,
                acts,
                squashed,
            },
        )
    }

    fn backward(&self, tape: &NetTape, dpos: ArrayView2<'_, f64>, bound: f64) -> NetGrad {
        // through x B and tanh
        let mut dz = dpos.to_owned();
        Zip::from(&mut dz)
            .and(&tape.squashed)
            .for_each(|g, &t| *g *= bound * (1.0 - t * t));
        let last = tape.acts.last().expect("tape has input");
        let output = Dense {
            weight: last.t().dot(&dz).as_standard_layout().into_owned(),
            bias: dz.sum_axis(Axis(0)),
        };
        let mut da = dz.dot(&self.output.weight.t());

        let mut hidden = vec![Dense::zeros_like(&self.output); self.hidden.len()];
        for k in (0..self.hidden.len()).rev() {
            // acts[k + 1] = relu(acts[k] W_k + b_k)
            Zip::from(&mut da)
                .and(&tape.acts[k + 1])
                .for_each(|g, &a| {
                    if a <= 0.0 {
                        *g = 0.0
                    }
                });
            hidden[k] = Dense {
                weight: tape.acts[k].t().dot(&da).as_standard_layout().into_owned(),
                bias: da.sum_axis(Axis(0)),
            };
            da = da.dot(&self.hidden[k].weight.t());
        }
        let gamma = (&da * &tape.standardized).sum_axis(Axis(0));
        let beta = da.sum_axis(Axis(0));
        NetGrad {
            gamma,
            beta,
            hidden,
            output,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetGrad {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub hidden: Vec<Dense>,
    pub output: Dense,
}

/// Partial derivatives of a scalar loss, laid out like [`StrategyNetwork`]'s
/// trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub cash: f64,
    pub delta0: Array1<f64>,
    pub nets: Vec<NetGrad>,
}

impl GradientBundle {
    /// Flat views in the same order as [`StrategyNetwork::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![std::slice::from_ref(&self.cash), as_slice(&self.delta0)];
        for g in &self.nets {
            out.push(as_slice(&g.gamma));
            out.push(as_slice(&g.beta));
            for layer in g.hidden.iter().chain(std::iter::once(&g.output)) {
                out.push(layer.weight.as_slice().expect("standard layout"));
                out.push(as_slice(&layer.bias));
            }
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

fn as_slice(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

/// Result of a batched forward pass; needed by [`StrategyNetwork::backward`].
#[derive(Debug, Clone)]
pub struct Forward {
    /// Shape `(P, n, d)`.
    pub positions: Array3<f64>,
    pub tapes: Vec<NetTape>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyNetwork {
    pub cash: f64,
    pub delta0: Array1<f64>,
    pub nets: Vec<PositionNet>,
    pub bound: f64,
    pub n_assets: usize,
    pub horizon: usize,
    pub widths: Vec<usize>,
}

impl StrategyNetwork {
    /// `c = 0`, `Δ_0 = 0`, randomly initialized networks for dates `1..n-1`.
    pub fn init(rng: &mut Rng, d: usize, n: usize, bound: f64, widths: &[usize]) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::Config("need at least one asset and one step".into()));
        }
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::Config(format!("bound {bound} must be positive")));
        }
        let nets = (1..n)
            .map(|i| PositionNet::init(rng, i * d, widths, d))
            .collect();
        Ok(Self {
            cash: 0.0,
            delta0: Array1::zeros(d),
            nets,
            bound,
            n_assets: d,
            horizon: n,
            widths: widths.to_vec(),
        })
    }

    pub fn n_params(&self) -> usize {
        let mut s = self.clone();
        s.param_slices_mut().iter().map(|p| p.len()).sum()
    }

    /// Trainable parameters as flat mutable views: cash, `Δ_0`, then per
    /// network the input scale and shift and every affine weight and bias.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            std::slice::from_mut(&mut self.cash),
            self.delta0.as_slice_mut().expect("standard layout"),
        ];
        for net in &mut self.nets {
            out.push(net.norm.gamma.as_slice_mut().expect("standard layout"));
            out.push(net.norm.beta.as_slice_mut().expect("standard layout"));
            for layer in net.hidden.iter_mut().chain(std::iter::once(&mut net.output)) {
                out.push(layer.weight.as_slice_mut().expect("standard layout"));
                out.push(layer.bias.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    /// Clamp cash and initial positions into `[-B, B]`.
    pub fn project(&mut self) {
        let b = self.bound;
        self.cash = self.cash.clamp(-b, b);
        self.delta0.mapv_inplace(|v| v.clamp(-b, b));
    }

    fn check_paths(&self, paths: ArrayView3<'_, f64>) -> Result<()> {
        let (_, n, d) = paths.dim();
        if n != self.horizon || d != self.n_assets {
            return Err(Error::ShapeMismatch(format!(
                "paths with {n} steps of {d} assets for a strategy with {} steps of {} assets",
                self.horizon, self.n_assets
            )));
        }
        Ok(())
    }

    fn net_input(paths: ArrayView3<'_, f64>, steps: usize) -> Array2<f64> {
        let (p, _, d) = paths.dim();
        paths
            .slice(s![.., ..steps, ..])
            .to_owned()
            .into_shape_with_order((p, steps * d))
            .expect("contiguous copy")
    }

    /// Refresh every network's running input statistics from a batch of paths.
    pub fn update_norm_stats(&mut self, paths: ArrayView3<'_, f64>) -> Result<()> {
        self.check_paths(paths)?;
        for (k, net) in self.nets.iter_mut().enumerate() {
            net.norm.update(&Self::net_input(paths, k + 1));
        }
        Ok(())
    }

    /// Positions for every path in a `(P, n, d)` batch.
    pub fn forward(&self, paths: ArrayView3<'_, f64>) -> Result<Forward> {
        self.check_paths(paths)?;
        let (p, n, d) = paths.dim();
        let mut positions = Array3::zeros((p, n, d));
        positions
            .index_axis_mut(Axis(1), 0)
            .assign(&self.delta0.broadcast((p, d)).expect("broadcast Δ_0"));
        let mut tapes = Vec::with_capacity(self.nets.len());
        for (k, net) in self.nets.iter().enumerate() {
            let (out, tape) = net.forward(&Self::net_input(paths, k + 1), self.bound);
            positions.index_axis_mut(Axis(1), k + 1).assign(&out);
            tapes.push(tape);
        }
        Ok(Forward { positions, tapes })
    }

    /// Gradient of a loss given its partials with respect to the positions of
    /// a recorded forward pass. The cash component is left at zero.
    pub fn backward(&self, fwd: &Forward, dpositions: ArrayView3<'_, f64>) -> Result<GradientBundle> {
        if dpositions.dim() != fwd.positions.dim() || fwd.tapes.len() != self.nets.len() {
            return Err(Error::ShapeMismatch(format!(
                "position gradient {:?} does not match the recorded forward pass {:?}",
                dpositions.dim(),
                fwd.positions.dim()
            )));
        }
        let delta0 = dpositions.index_axis(Axis(1), 0).sum_axis(Axis(0));
        let nets = self
            .nets
            .iter()
            .zip(&fwd.tapes)
            .enumerate()
            .map(|(k, (net, tape))| net.backward(tape, dpositions.index_axis(Axis(1), k + 1), self.bound))
            .collect();
        Ok(GradientBundle {
            cash: 0.0,
            delta0,
            nets,
        })
    }

    /// Positions along a single `(n, d)` path.
    pub fn positions(&self, path: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let batch = path.insert_axis(Axis(0));
        Ok(self
            .forward(batch)?
            .positions
            .index_axis_move(Axis(0), 0))
    }

    /// `(Δ·S)_n - C_n(Δ)` along one path; excludes the cash amount.
    pub fn net_profit(&self, path: ArrayView2<'_, f64>, spot: ArrayView1<'_, f64>, costs: &CostSpec) -> Result<f64> {
        let pos = self.positions(path)?;
        trading_profit(pos.view(), path, spot, costs)
    }

    pub fn save(&self, path: impl AsRef<Path>, config_hash: &str) -> Result<()> {
        let path = path.as_ref();
        let ckpt = CheckpointRef {
            schema_version: CHECKPOINT_SCHEMA,
            config_hash,
            strategy: self,
        };
        let text = serde_json::to_string(&ckpt).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::DataNotFound(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if ckpt.schema_version != CHECKPOINT_SCHEMA {
            return Err(Error::Compatibility(format!(
                "checkpoint schema {} (expected {CHECKPOINT_SCHEMA})",
                ckpt.schema_version
            )));
        }
        Ok(ckpt)
    }
}

#[derive(Serialize)]
struct CheckpointRef<'a> {
    schema_version: u32,
    config_hash: &'a str,
    strategy: &'a StrategyNetwork,
}

/// On-disk strategy: JSON with a schema version and the hash of the config
/// that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub config_hash: String,
    pub strategy: StrategyNetwork,
}

fn prices_with_spot(path: ArrayView2<'_, f64>, spot: ArrayView1<'_, f64>) -> Array2<f64> {
    let (n, d) = path.dim();
    let mut prices = Array2::zeros((n + 1, d));
    prices.row_mut(0).assign(&spot);
    prices.slice_mut(s![1.., ..]).assign(&path);
    prices
}

/// Gross profit `Σ_j Σ_i Δ_i^j (S_{i+1}^j - S_i^j)` minus total costs, with
/// `S_0 = spot` and `path` holding `S_1..S_n`.
pub fn trading_profit(
    positions: ArrayView2<'_, f64>,
    path: ArrayView2<'_, f64>,
    spot: ArrayView1<'_, f64>,
    costs: &CostSpec,
) -> Result<f64> {
    if positions.dim() != path.dim() || spot.len() != path.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "positions {:?}, path {:?}, spot {}",
            positions.dim(),
            path.dim(),
            spot.len()
        )));
    }
    let prices = prices_with_spot(path, spot);
    let n = path.nrows();
    let mut gross = 0.0;
    for i in 0..n {
        for j in 0..path.ncols() {
            gross += positions[[i, j]] * (prices[[i + 1, j]] - prices[[i, j]]);
        }
    }
    Ok(gross - total_costs(costs, positions, prices.view())?)
}

/// Trading profits of a batch and, optionally, their gradients with respect
/// to the positions.
pub fn batch_profits(
    positions: ArrayView3<'_, f64>,
    paths: ArrayView3<'_, f64>,
    spot: ArrayView1<'_, f64>,
    costs: &CostSpec,
    with_grad: bool,
) -> Result<(Array1<f64>, Option<Array3<f64>>)> {
    if positions.dim() != paths.dim() {
        return Err(Error::ShapeMismatch(format!(
            "positions {:?} vs paths {:?}",
            positions.dim(),
            paths.dim()
        )));
    }
    let p = paths.shape()[0];
    let mut profits = Array1::zeros(p);
    let mut grads = with_grad.then(|| Array3::zeros(paths.raw_dim()));
    for r in 0..p {
        let pos = positions.index_axis(Axis(0), r);
        let path = paths.index_axis(Axis(0), r);
        profits[r] = trading_profit(pos, path, spot, costs)?;
        if let Some(g) = grads.as_mut() {
            let prices = prices_with_spot(path, spot);
            let increments = &prices.slice(s![1.., ..]) - &prices.slice(s![..-1, ..]);
            let cost_grad = total_costs_grad(costs, pos, prices.view())?;
            g.index_axis_mut(Axis(0), r).assign(&(increments - cost_grad));
        }
    }
    Ok((profits, grads))
}
