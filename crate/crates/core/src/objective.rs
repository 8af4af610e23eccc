//! Penalized conditional super-replication objective.
//!
//! For each scenario set `m` with `M` paths, the value `h = c + profit` is
//! computed per path, paths are grouped by the partition cell of their
//! terminal price, and the penalty is the path-average of `β` applied to the
//! cell mean of `Φ - h` for each path's own cell:
//!
//! ```text
//! loss = c + k Σ_m (1/M) Σ_i β( mean_{l in cell(i)} (Φ - h)_l )
//! ```
//!
//! Empty cells never contribute, which matches the `0/0 := 0` convention.

use std::collections::HashMap;

use ndarray::{Array1, Array3, ArrayView2, Axis, concatenate};

use crate::costs::CostSpec;
use crate::error::{Error, Result};
use crate::measures::ScenarioSet;
use crate::partition::BoxPartition;
use crate::strategy_net::{batch_profits, GradientBundle, StrategyNetwork};

/// `β(x) = λ max(x, 0)^p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyFn {
    pub lambda: f64,
    pub power: f64,
}

impl Default for PenaltyFn {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            power: 2.0,
        }
    }
}

impl PenaltyFn {
    pub fn value(&self, x: f64) -> f64 {
        if x > 0.0 {
            self.lambda * x.powf(self.power)
        } else {
            0.0
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if x > 0.0 {
            self.lambda * self.power * x.powf(self.power - 1.0)
        } else {
            0.0
        }
    }
}

/// A bounded payoff `Φ` evaluated on an `(n, d)` path.
pub trait Payoff: Send + Sync {
    fn value(&self, path: ArrayView2<'_, f64>) -> f64;
}

pub struct ObjectiveConfig<'a> {
    pub k: f64,
    pub penalty: PenaltyFn,
    pub partition: &'a BoxPartition,
    /// `None` means `Φ ≡ 0`.
    pub payoff: Option<&'a dyn Payoff>,
}

/// Per-cell sums and counts; cells that no path visits are absent.
#[derive(Debug, Clone, Default)]
pub struct CellMeans {
    cells: HashMap<u64, (f64, usize)>,
    total: usize,
}

impl CellMeans {
    /// Mean of the values in `cell`, or 0 when the cell is empty.
    pub fn mean(&self, cell: u64) -> f64 {
        match self.cells.get(&cell) {
            Some(&(sum, count)) => sum / count as f64,
            None => 0.0,
        }
    }

    pub fn count(&self, cell: u64) -> usize {
        self.cells.get(&cell).map_or(0, |&(_, c)| c)
    }

    pub fn occupied(&self) -> usize {
        self.cells.len()
    }

    /// Empirical probability of `cell`.
    pub fn weight(&self, cell: u64) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(cell) as f64 / self.total as f64
        }
    }

    /// Occupied cells in increasing index order.
    pub fn cells(&self) -> Vec<u64> {
        let mut keys: Vec<u64> = self.cells.keys().copied().collect();
        keys.sort_unstable();
        keys
    }

    pub fn dense(&self, n_cells: usize) -> Vec<f64> {
        (0..n_cells as u64).map(|c| self.mean(c)).collect()
    }
}

pub fn conditional_cell_means(values: &[f64], cell_ids: &[u64]) -> Result<CellMeans> {
    if values.len() != cell_ids.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} values for {} cell ids",
            values.len(),
            cell_ids.len()
        )));
    }
    let mut cells: HashMap<u64, (f64, usize)> = HashMap::new();
    for (&v, &c) in values.iter().zip(cell_ids) {
        let e = cells.entry(c).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    Ok(CellMeans {
        cells,
        total: values.len(),
    })
}

#[derive(Debug, Clone)]
pub struct LossEval {
    pub loss: f64,
    /// `Σ_m (1/M) Σ_i β(...)`, before multiplication by `k`.
    pub penalty: f64,
    pub cash: f64,
    pub grad: Option<GradientBundle>,
}

/// Terminal-cell index of every path in a scenario set.
pub fn terminal_cells(set: &ScenarioSet, partition: &BoxPartition) -> Result<Vec<u64>> {
    let last = set.horizon() - 1;
    set.paths
        .index_axis(Axis(1), last)
        .outer_iter()
        .map(|t| partition.cell_index(t))
        .collect()
}

/// Evaluate the penalized objective and, when `with_grad`, its gradient with
/// respect to every trainable parameter.
pub fn penalized_loss(
    net: &StrategyNetwork,
    ambiguity: &[ScenarioSet],
    cfg: &ObjectiveConfig<'_>,
    costs: &CostSpec,
    spot: &Array1<f64>,
    with_grad: bool,
) -> Result<LossEval> {
    let first = ambiguity
        .first()
        .ok_or_else(|| Error::Config("empty ambiguity set".into()))?;
    let m = first.n_paths();
    if ambiguity.iter().any(|s| s.paths.dim() != first.paths.dim()) {
        return Err(Error::ShapeMismatch("scenario sets differ in shape".into()));
    }
    let cells: Vec<Vec<u64>> = ambiguity
        .iter()
        .map(|s| terminal_cells(s, cfg.partition))
        .collect::<Result<_>>()?;

    let views: Vec<_> = ambiguity.iter().map(|s| s.paths.view()).collect();
    let batch: Array3<f64> =
        concatenate(Axis(0), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let fwd = net.forward(batch.view())?;
    let (profits, dprofit) = batch_profits(fwd.positions.view(), batch.view(), spot.view(), costs, with_grad)?;

    let mut penalty = 0.0;
    let mut dh = Array1::<f64>::zeros(batch.shape()[0]);
    for (mi, set) in ambiguity.iter().enumerate() {
        let offset = mi * m;
        let values: Vec<f64> = (0..m)
            .map(|l| {
                let phi = cfg
                    .payoff
                    .map_or(0.0, |p| p.value(set.paths.index_axis(Axis(0), l)));
                phi - (net.cash + profits[offset + l])
            })
            .collect();
        let means = conditional_cell_means(&values, &cells[mi])?;
        let mut sum = 0.0;
        for (l, &cell) in cells[mi].iter().enumerate() {
            let mean = means.mean(cell);
            sum += cfg.penalty.value(mean);
            // d/dh_l of (1/M) Σ_i β(mean_cell(i)) = -β'(mean_cell(l)) / M
            dh[offset + l] = -cfg.k * cfg.penalty.derivative(mean) / m as f64;
        }
        penalty += sum / m as f64;
    }
    let loss = net.cash + cfg.k * penalty;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss {loss}")));
    }

    let grad = match dprofit {
        Some(mut dpos) => {
            dpos *= &dh.view().insert_axis(Axis(1)).insert_axis(Axis(2));
            let mut g = net.backward(&fwd, dpos.view())?;
            g.cash = 1.0 + dh.sum();
            Some(g)
        }
        None => None,
    };
    Ok(LossEval {
        loss,
        penalty,
        cash: net.cash,
        grad,
    })
}

/// The trained cash amount: a strictly negative value with a vanishing
/// penalty certifies a robust statistical arbitrage.
pub fn estimate_gamma(trained: &StrategyNetwork) -> f64 {
    trained.cash
}
