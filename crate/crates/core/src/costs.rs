//! Trading costs: transaction fees, half-spread liquidity cost and short
//! borrowing fees, summed over all rebalancing dates including the final
//! liquidation.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TransMode {
    #[default]
    None,
    /// `lambda * |x|`
    PerShare,
    /// `lambda * S * |x|`
    Proportional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    #[serde(default)]
    pub trans_mode: TransMode,
    #[serde(default)]
    pub trans_lambda: f64,
    /// Full bid-ask spread per share; half of it is paid on every traded share.
    #[serde(default)]
    pub spread_lambda: f64,
    /// Daily borrowing fee rate applied to `max(-position, 0) * S`.
    #[serde(default)]
    pub short_lambda_daily: f64,
}

impl Default for CostSpec {
    fn default() -> Self {
        Self::zero()
    }
}

impl CostSpec {
    pub fn zero() -> Self {
        Self {
            trans_mode: TransMode::None,
            trans_lambda: 0.0,
            spread_lambda: 0.0,
            short_lambda_daily: 0.0,
        }
    }

    pub fn per_share() -> Self {
        Self {
            trans_mode: TransMode::PerShare,
            trans_lambda: 0.01,
            spread_lambda: 0.0002,
            short_lambda_daily: 0.1 / 252.0,
        }
    }

    pub fn proportional() -> Self {
        Self {
            trans_mode: TransMode::Proportional,
            trans_lambda: 0.0001,
            spread_lambda: 0.0002,
            short_lambda_daily: 0.1 / 252.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("trans_lambda", self.trans_lambda),
            ("spread_lambda", self.spread_lambda),
            ("short_lambda_daily", self.short_lambda_daily),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be nonnegative")));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            trans_lambda: self.trans_lambda * factor,
            spread_lambda: self.spread_lambda * factor,
            short_lambda_daily: self.short_lambda_daily * factor,
            ..*self
        }
    }

    /// Cost per traded share at `price`: transaction fee plus half spread.
    fn per_unit_trade(&self, price: f64) -> f64 {
        let trans = match self.trans_mode {
            TransMode::None => 0.0,
            TransMode::PerShare => self.trans_lambda,
            TransMode::Proportional => self.trans_lambda * price,
        };
        trans + 0.5 * self.spread_lambda
    }
}

/// Cost of moving one asset from `prev_pos` to `new_pos` at `price`.
pub fn step_cost(spec: &CostSpec, price: f64, prev_pos: f64, new_pos: f64) -> f64 {
    let traded = (new_pos - prev_pos).abs();
    spec.per_unit_trade(price) * traded + spec.short_lambda_daily * (-new_pos).max(0.0) * price
}

/// Partial derivatives of [`step_cost`] with respect to `(prev_pos, new_pos)`.
/// The kinks at `x = 0` and `new_pos = 0` use subgradient 0.
pub fn step_cost_grad(spec: &CostSpec, price: f64, prev_pos: f64, new_pos: f64) -> (f64, f64) {
    let x = new_pos - prev_pos;
    let sign = if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    };
    let trade = spec.per_unit_trade(price) * sign;
    let short = if new_pos < 0.0 {
        -spec.short_lambda_daily * price
    } else {
        0.0
    };
    (-trade, trade + short)
}

fn check_shapes(positions: ArrayView2<'_, f64>, prices: ArrayView2<'_, f64>) -> Result<()> {
    let (n, d) = positions.dim();
    if prices.dim() != (n + 1, d) {
        return Err(Error::ShapeMismatch(format!(
            "positions {:?} need prices of shape ({}, {d}), got {:?}",
            positions.dim(),
            n + 1,
            prices.dim()
        )));
    }
    Ok(())
}

/// Total costs along one path.
///
/// `positions` holds the `n` held positions `Δ_0..Δ_{n-1}` (one row per
/// trading date); `prices` holds `S_{t_0}..S_{t_n}`. The position before
/// `t_0` and after `t_n` is zero, so the last step charges the liquidation.
pub fn total_costs(
    spec: &CostSpec,
    positions: ArrayView2<'_, f64>,
    prices: ArrayView2<'_, f64>,
) -> Result<f64> {
    check_shapes(positions, prices)?;
    let (n, d) = positions.dim();
    let mut total = 0.0;
    for j in 0..d {
        let mut prev = 0.0;
        for i in 0..=n {
            let new = if i < n { positions[[i, j]] } else { 0.0 };
            total += step_cost(spec, prices[[i, j]], prev, new);
            prev = new;
        }
    }
    Ok(total)
}

/// Gradient of [`total_costs`] with respect to `positions`.
pub fn total_costs_grad(
    spec: &CostSpec,
    positions: ArrayView2<'_, f64>,
    prices: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    check_shapes(positions, prices)?;
    let (n, d) = positions.dim();
    let mut grad = Array2::zeros((n, d));
    for j in 0..d {
        let mut prev = 0.0;
        for i in 0..=n {
            let new = if i < n { positions[[i, j]] } else { 0.0 };
            let (g_prev, g_new) = step_cost_grad(spec, prices[[i, j]], prev, new);
            if i > 0 {
                grad[[i - 1, j]] += g_prev;
            }
            if i < n {
                grad[[i, j]] += g_new;
            }
            prev = new;
        }
    }
    Ok(grad)
}
