//! Seeded finite-difference self-test of the analytic gradients.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::featnet::DistanceMatrix;
use crate::fractal::{
    box_curve, ss_rate, ss_rate_grad, CurveMode, NormalizerMode, SmoothingParams, ThresholdGrid, DEFAULT_GRID_COUNT,
    DEFAULT_K,
};
use crate::io::synth_blobs;
use crate::rng::{splitmix64, stream, Stream};
use crate::trainer::{check_model_gradients, compare_gradients, gather, Activation, GradCheck, Mlp, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelfCheckConfig {
    pub seed: u64,
    /// Random distance matrices checked.
    pub cases: usize,
    pub nodes: usize,
    pub grid_count: usize,
    pub k: f64,
    pub distance_step: f64,
    pub distance_tol: f64,
    pub model_widths: Vec<usize>,
    pub batch: usize,
    pub model_step: f64,
    pub model_tol: f64,
}

impl Default for SelfCheckConfig {
    fn default() -> Self {
        SelfCheckConfig {
            seed: 0,
            cases: 5,
            nodes: 8,
            grid_count: DEFAULT_GRID_COUNT,
            k: DEFAULT_K,
            distance_step: 1e-5,
            distance_tol: 1e-4,
            model_widths: vec![2, 16, 16, 3],
            batch: 8,
            model_step: 1e-4,
            model_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfCheckReport {
    /// One entry per random distance matrix.
    pub distance: Vec<GradCheck>,
    /// One entry per hidden layer carrying the penalty.
    pub model: Vec<GradCheck>,
    pub distance_max_rel_error: f64,
    pub model_max_rel_error: f64,
    pub passed: bool,
}

/// Symmetric matrix with i.i.d. uniform `(0, 1)` off-diagonal entries.
pub fn random_distance_matrix(d: usize, seed: u64) -> Result<DistanceMatrix> {
    let mut rng = stream(seed, Stream::GradCheck);
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in (i + 1)..d {
            let v: f64 = rng.random();
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    DistanceMatrix::from_matrix(m)
}

fn shifted(c: &DistanceMatrix, i: usize, j: usize, h: f64) -> Result<DistanceMatrix> {
    let mut m = c.matrix().clone();
    m[(i, j)] += h;
    m[(j, i)] += h;
    DistanceMatrix::from_matrix(m)
}

/// Fixed-grid gradient of smooth SS_rate against central differences, one
/// symmetric pair at a time.
pub fn check_distance_gradient(
    c: &DistanceMatrix,
    grid_count: usize,
    sp: SmoothingParams,
    h: f64,
) -> Result<GradCheck> {
    let grid = ThresholdGrid::from_distances(c, grid_count)?;
    let norm = NormalizerMode::Bounded;
    let g = ss_rate_grad(c, &grid, sp, norm)?.grad;
    let value = |m: &DistanceMatrix| -> Result<f64> {
        Ok(ss_rate(&box_curve(m, &grid, CurveMode::Smooth { k: sp.k })?, norm)?.value * sp.fac)
    };
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for i in 0..c.d() {
        for j in (i + 1)..c.d() {
            analytic.push(g[(i, j)] + g[(j, i)]);
            numeric.push((value(&shifted(c, i, j, h)?)? - value(&shifted(c, i, j, -h)?)?) / (2.0 * h));
        }
    }
    Ok(compare_gradients(&analytic, &numeric, 1e-8))
}

pub fn run_selfcheck(cfg: &SelfCheckConfig) -> Result<SelfCheckReport> {
    let sp = SmoothingParams::new(cfg.k, 1.0)?;
    let distance = (0..cfg.cases as u64)
        .map(|i| {
            let c = random_distance_matrix(cfg.nodes, splitmix64(cfg.seed ^ i))?;
            check_distance_gradient(&c, cfg.grid_count, sp, cfg.distance_step)
        })
        .collect::<Result<Vec<_>>>()?;

    let widths = &cfg.model_widths;
    let classes = *widths.last().unwrap_or(&2);
    let model = Mlp::new(widths, Activation::Tanh, cfg.seed)?;
    let per_class = cfg.batch.div_ceil(classes.max(1));
    let data = synth_blobs(classes.max(2), per_class, widths[0].max(2), 3.0, cfg.seed)?;
    let (x, y) = gather(&data, &(0..cfg.batch.min(data.len())).collect::<Vec<_>>());
    let x = x.columns(0, widths[0]).into_owned();
    let train = TrainConfig { alpha: 1.0, gamma: vec![0.05], ..TrainConfig::default() };
    let model = (0..model.hidden_count())
        .map(|layer| check_model_gradients(&model, &x, &y, &train, layer, cfg.model_step))
        .collect::<Result<Vec<_>>>()?;

    let worst = |v: &[GradCheck]| v.iter().map(|g| g.max_rel_error).fold(0.0, f64::max);
    let (dmax, mmax) = (worst(&distance), worst(&model));
    let passed = dmax <= cfg.distance_tol && mmax <= cfg.model_tol;
    Ok(SelfCheckReport { distance, model, distance_max_rel_error: dmax, model_max_rel_error: mmax, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_selfcheck_passes() {
        for seed in [0, 7, 42] {
            let r = run_selfcheck(&SelfCheckConfig { seed, ..SelfCheckConfig::default() }).unwrap();
            assert!(r.passed, "seed {seed}: {r:?}");
            assert_eq!(r.distance.len(), 5);
            assert_eq!(r.model.len(), 2);
            assert!(r.distance.iter().all(|g| g.checked > 0));
        }
    }

    #[test]
    fn coarse_grid_also_passes() {
        let r = run_selfcheck(&SelfCheckConfig { k: 20.0, grid_count: 16, ..SelfCheckConfig::default() }).unwrap();
        assert!(r.distance_max_rel_error <= 1e-4, "{r:?}");
    }
}
