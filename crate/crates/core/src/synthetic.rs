//! Synthetic mean-reverting pair used by examples and the acceptance suite.
//!
//! Asset `A` follows a geometric random walk. The log-spread `X` between the
//! two assets is a discretized Ornstein-Uhlenbeck process:
//!
//! ```text
//! ln A_t = ln A_{t-1} + drift + vol * ξ_t
//! X_t    = (1 - kappa) X_{t-1} + spread_vol * η_t
//! ln B_t = ln A_t + X_t
//! ```
//!
//! with independent standard normal `ξ`, `η` drawn from the market stream of
//! the given seed, `X_0 = 0` and `A_0 = B_0 = start`.

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::market_data::PriceSeries;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuPair {
    pub start: f64,
    pub drift: f64,
    pub vol: f64,
    pub kappa: f64,
    pub spread_vol: f64,
}

impl Default for OuPair {
    fn default() -> Self {
        Self {
            start: 100.0,
            drift: 0.0,
            vol: 0.01,
            kappa: 0.3,
            spread_vol: 0.01,
        }
    }
}

impl OuPair {
    /// `len` consecutive daily prices for tickers `A` and `B`.
    pub fn generate(&self, len: usize, seed: u64) -> Result<PriceSeries> {
        let mut rng = stream_rng(seed, Stream::Market, 0);
        let mut prices = Array2::zeros((len, 2));
        let mut log_a = 0.0f64;
        let mut spread = 0.0f64;
        for t in 0..len {
            if t > 0 {
                let xi: f64 = StandardNormal.sample(&mut rng);
                let eta: f64 = StandardNormal.sample(&mut rng);
                log_a += self.drift + self.vol * xi;
                spread = (1.0 - self.kappa) * spread + self.spread_vol * eta;
            }
            prices[[t, 0]] = self.start * log_a.exp();
            prices[[t, 1]] = self.start * (log_a + spread).exp();
        }
        let dates = (0..len).map(|t| format!("t{t:06}")).collect();
        PriceSeries::new(dates, prices, vec!["A".into(), "B".into()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_positive() {
        let m = OuPair::default();
        let a = m.generate(500, 3).unwrap();
        assert_eq!(a, m.generate(500, 3).unwrap());
        assert_ne!(a, m.generate(500, 4).unwrap());
        assert_eq!(a.prices()[[0, 0]], 100.0);
        assert!(a.prices().iter().all(|&p| p > 0.0));
    }

    #[test]
    fn spread_reverts() {
        let m = OuPair::default();
        let s = m.generate(5000, 1).unwrap();
        let spread: Vec<f64> = s
            .prices()
            .rows()
            .into_iter()
            .map(|r| (r[1] / r[0]).ln())
            .collect();
        // lag-one autocorrelation of the OU spread is 1 - kappa
        let mean = spread.iter().sum::<f64>() / spread.len() as f64;
        let num: f64 = spread.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        let den: f64 = spread.iter().map(|x| (x - mean) * (x - mean)).sum();
        assert!((num / den - 0.7).abs() < 0.05, "{}", num / den);
    }
}
