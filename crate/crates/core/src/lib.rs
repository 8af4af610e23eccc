//! Robust statistical arbitrage: Wasserstein ambiguity sets, penalized
//! conditional super-replication over random partitions, bounded neural
//! trading strategies and a net-of-cost backtester.

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod cli;
pub mod costs;
pub mod error;
pub mod market_data;
pub mod measures;
pub mod objective;
pub mod partition;
pub mod rng;
pub mod strategy_net;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
