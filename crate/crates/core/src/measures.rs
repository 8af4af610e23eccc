//! Empirical path measures and their Wasserstein-ball perturbations.
//!
//! A [`ScenarioSet`] is a uniform measure over `M` paths of shape `(n, d)`.
//! Perturbed sets shift path `l` by a block `tau_l` whose Euclidean norm is a
//! common random radius `U < epsilon`, so the identity coupling between the
//! base and perturbed paths costs exactly `U` and certifies membership in the
//! open 1-Wasserstein ball of radius `epsilon`.

use std::io::Write;
use std::path::Path;

use ndarray::{Array3, Axis, Zip};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::market_data::PathMatrix;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioLabel {
    Empirical,
    Perturbed(usize),
}

/// Equally weighted scenario paths, shape `(M, n, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub paths: Array3<f64>,
    pub label: ScenarioLabel,
}

impl ScenarioSet {
    pub fn empirical(base: &PathMatrix) -> Self {
        Self {
            paths: base.paths.clone(),
            label: ScenarioLabel::Empirical,
        }
    }

    pub fn n_paths(&self) -> usize {
        self.paths.shape()[0]
    }

    pub fn horizon(&self) -> usize {
        self.paths.shape()[1]
    }

    pub fn n_assets(&self) -> usize {
        self.paths.shape()[2]
    }

    /// Debug dump, one row per value in path-major order: `path,step,asset,value`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "path,step,asset,value").map_err(io)?;
        for ((l, i, j), v) in self.paths.indexed_iter() {
            writeln!(out, "{l},{},{j},{v}", i + 1).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Per-path shift blocks, each of Euclidean norm `u_eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    /// Shape `(M, n, d)`; block `l` is `tau.index_axis(Axis(0), l)`.
    pub tau: Array3<f64>,
    pub epsilon: f64,
    pub u_eps: f64,
}

impl Perturbation {
    pub fn zero(shape: (usize, usize, usize), epsilon: f64) -> Self {
        Self {
            tau: Array3::zeros(shape),
            epsilon,
            u_eps: 0.0,
        }
    }

    pub fn block_norms(&self) -> Vec<f64> {
        self.tau
            .outer_iter()
            .map(|b| b.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }
}

fn fill_block(rng: &mut Rng, block: &mut [f64]) -> f64 {
    let mut sq = 0.0;
    for v in block.iter_mut() {
        *v = rng.sample(StandardNormal);
        sq += *v * *v;
    }
    sq.sqrt()
}

/// Draw i.i.d. standard normal blocks, normalize each to unit norm and scale
/// all of them by one `U ~ Uniform(0, epsilon)`.
pub fn sample_perturbation(
    rng: &mut Rng,
    epsilon: f64,
    shape: (usize, usize, usize),
) -> Result<Perturbation> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("epsilon {epsilon} must be positive")));
    }
    let (m, n, d) = shape;
    if m == 0 || n == 0 || d == 0 {
        return Err(Error::ShapeMismatch(format!("degenerate perturbation shape {shape:?}")));
    }
    let block_len = n * d;
    let mut raw = vec![0.0; m * block_len];
    let mut norms = Vec::with_capacity(m);
    for (l, block) in raw.chunks_mut(block_len).enumerate() {
        let mut norm = fill_block(rng, block);
        if norm == 0.0 {
            norm = fill_block(rng, block);
            if norm == 0.0 {
                return Err(Error::ZeroNormBlock { block: l });
            }
        }
        norms.push(norm);
    }
    // open interval: reject the (2^-53 probability) zero draw
    let mut u: f64 = rng.random::<f64>();
    while u == 0.0 {
        u = rng.random::<f64>();
    }
    let u_eps = u * epsilon;
    for (block, norm) in raw.chunks_mut(block_len).zip(&norms) {
        let scale = u_eps / norm;
        block.iter_mut().for_each(|v| *v *= scale);
    }
    let tau = Array3::from_shape_vec((m, n, d), raw).expect("shape matches buffer");
    Ok(Perturbation {
        tau,
        epsilon,
        u_eps,
    })
}

pub fn perturb(base: &PathMatrix, p: &Perturbation, measure: usize) -> Result<ScenarioSet> {
    if base.paths.shape() != p.tau.shape() {
        return Err(Error::ShapeMismatch(format!(
            "base {:?} vs perturbation {:?}",
            base.paths.shape(),
            p.tau.shape()
        )));
    }
    Ok(ScenarioSet {
        paths: &base.paths + &p.tau,
        label: ScenarioLabel::Perturbed(measure),
    })
}

/// Transport cost of the coupling that moves base path `l` onto perturbed
/// path `l`: the mean Euclidean distance between corresponding paths.
pub fn coupling_cost(base: &PathMatrix, perturbed: &ScenarioSet) -> Result<f64> {
    if base.paths.shape() != perturbed.paths.shape() {
        return Err(Error::ShapeMismatch(format!(
            "base {:?} vs perturbed {:?}",
            base.paths.shape(),
            perturbed.paths.shape()
        )));
    }
    let m = base.n_paths();
    let mut total = 0.0;
    for (a, b) in base
        .paths
        .axis_iter(Axis(0))
        .zip(perturbed.paths.axis_iter(Axis(0)))
    {
        let mut sq = 0.0;
        Zip::from(&a).and(&b).for_each(|x, y| sq += (y - x) * (y - x));
        total += sq.sqrt();
    }
    Ok(total / m as f64)
}

/// Sample `n_measures` perturbed copies of `base`, each certified to lie in
/// the Wasserstein ball of radius `epsilon`.
pub fn build_ambiguity_set(
    rng: &mut Rng,
    base: &PathMatrix,
    epsilon: f64,
    n_measures: usize,
) -> Result<Vec<ScenarioSet>> {
    if n_measures == 0 {
        return Err(Error::Config("n_measures must be at least 1".into()));
    }
    let shape = base.paths.dim();
    (0..n_measures)
        .map(|m| {
            let p = sample_perturbation(rng, epsilon, shape)?;
            let set = perturb(base, &p, m)?;
            let cost = coupling_cost(base, &set)?;
            if !(cost < epsilon) {
                return Err(Error::Numerical(format!(
                    "coupling cost {cost} not below epsilon {epsilon}"
                )));
            }
            Ok(set)
        })
        .collect()
}
