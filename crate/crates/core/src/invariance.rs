//! Cross-layer scale invariance.
//!
//! Statistical: power-law exponent of each layer's covariance eigenspectrum,
//! summarized by the population standard deviation across layers.
//!
//! Geometric: correlation dimension of each layer's reduced point cloud,
//! summarized by the relative spread `(max - min) / mean`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::embed::classical_mds;
use crate::error::{Error, Result};
use crate::featnet::{DistanceMatrix, FeatureMatrix};
use crate::linalg::{ols, symmetric_eigen};

/// Eigenvalues below `max * SPECTRUM_RTOL` are dropped.
pub const SPECTRUM_RTOL: f64 = 1e-10;
pub const CORR_RADII: usize = 24;
/// Percentiles of the pairwise distances bounding the correlation-dimension fit.
pub const CORR_WINDOW: (f64, f64) = (1.0, 20.0);
pub const MIN_CORR_POINTS: usize = 10;
pub const MIN_CORR_DIM_POINTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Retained eigenvalues, descending and strictly positive.
    pub eigenvalues: Vec<f64>,
    /// Size of the full spectrum before filtering.
    pub dim: usize,
}

impl Spectrum {
    /// Filters and sorts arbitrary eigenvalues.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spectrum".into()));
        }
        let max = values.iter().copied().fold(0.0, f64::max);
        let mut kept: Vec<f64> = values.iter().copied().filter(|&v| v > 0.0 && v >= max * SPECTRUM_RTOL).collect();
        kept.sort_by(|a, b| b.total_cmp(a));
        Ok(Spectrum { eigenvalues: kept, dim: values.len() })
    }

    pub fn retained(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda_min(&self) -> Option<f64> {
        self.eigenvalues.last().copied()
    }
}

/// Spectrum of `F Fᵀ / (B - 1)`, the `D x D` form of the channel covariance.
pub fn covariance_spectrum(f: &FeatureMatrix) -> Result<Spectrum> {
    if f.b() < 2 {
        return Err(Error::invalid(format!("covariance needs B >= 2, got {}", f.b())));
    }
    let x = f.data();
    let gram = (x * x.transpose()) / (f.b() as f64 - 1.0);
    let gram = (&gram + gram.transpose()) * 0.5;
    let eig = symmetric_eigen(&gram)?;
    Spectrum::from_values(eig.values.as_slice())
}

/// Numerator of the Hill estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HillCount {
    /// Number of retained eigenvalues.
    #[default]
    Retained,
    /// Full spectrum size `D`, retained or not.
    Ambient,
}

impl FromStr for HillCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "retained" => Ok(HillCount::Retained),
            "ambient" | "literal" => Ok(HillCount::Ambient),
            other => Err(Error::invalid(format!("unknown hill count '{other}' (retained or ambient)"))),
        }
    }
}

/// `1 + n / sum_k ln(lambda_k / lambda_min)`.
pub fn power_law_mle(s: &Spectrum, count: HillCount) -> Result<f64> {
    if s.retained() < 2 {
        return Err(Error::Degenerate(format!("power-law fit needs 2 positive eigenvalues, got {}", s.retained())));
    }
    let lmin = s.lambda_min().unwrap();
    let total: f64 = s.eigenvalues.iter().map(|&l| (l / lmin).ln()).sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("degenerate spectrum: all eigenvalues equal".into()));
    }
    let n = match count {
        HillCount::Retained => s.retained(),
        HillCount::Ambient => s.dim,
    };
    Ok(1.0 + n as f64 / total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGamma {
    pub layer: usize,
    pub gamma: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatInvarianceReport {
    pub per_layer: Vec<LayerGamma>,
    /// Exponents of the layers that survived, in input order.
    pub gammas: Vec<f64>,
    pub mean: f64,
    pub sigma: f64,
}

fn population_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn stat_invariance(layers: &[FeatureMatrix], count: HillCount) -> Result<StatInvarianceReport> {
    if layers.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 layers, got {}", layers.len())));
    }
    let per_layer: Vec<LayerGamma> = layers
        .iter()
        .enumerate()
        .map(|(layer, f)| match covariance_spectrum(f).and_then(|s| power_law_mle(&s, count)) {
            Ok(g) => LayerGamma { layer, gamma: Some(g), warnings: vec![] },
            Err(e) => LayerGamma { layer, gamma: None, warnings: vec![format!("layer excluded: {e}")] },
        })
        .collect();
    let gammas: Vec<f64> = per_layer.iter().filter_map(|l| l.gamma).collect();
    if gammas.len() < 2 {
        return Err(Error::Degenerate(format!("only {} layer(s) with a usable spectrum", gammas.len())));
    }
    let (mean, sigma) = population_std(&gammas);
    Ok(StatInvarianceReport { per_layer, gammas, mean, sigma })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reducer {
    #[default]
    Pca,
    Cmds,
}

impl FromStr for Reducer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(Reducer::Pca),
            "cmds" | "mds" => Ok(Reducer::Cmds),
            other => Err(Error::invalid(format!("unknown reducer '{other}' (pca or cmds)"))),
        }
    }
}

impl fmt::Display for Reducer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reducer::Pca => "pca",
            Reducer::Cmds => "cmds",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Reduced {
    /// `D x target_dim`, one row per node.
    pub coords: DMatrix<f64>,
    pub warnings: Vec<String>,
}

/// Projects the `D` node vectors (rows of `f`) to `target_dim` coordinates.
pub fn reduce_dim(f: &FeatureMatrix, target_dim: usize, method: Reducer) -> Result<Reduced> {
    let (d, b) = (f.d(), f.b());
    if target_dim < 2 || target_dim >= d.min(b) {
        return Err(Error::invalid(format!(
            "target_dim must satisfy 2 <= target_dim < min(D, B) = {}, got {target_dim}",
            d.min(b)
        )));
    }
    match method {
        Reducer::Cmds => {
            let c = DistanceMatrix::euclidean_rows(f.data(), 1.0);
            let e = classical_mds(&c, target_dim)?;
            Ok(Reduced { coords: e.coords, warnings: e.warnings })
        }
        Reducer::Pca => {
            let x = f.data();
            let mean = x.row_mean();
            let centered = DMatrix::from_fn(d, b, |i, j| x[(i, j)] - mean[j]);
            let svd = centered.svd(true, false);
            let u = svd.u.expect("u requested");
            let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
            order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
            let top = svd.singular_values[order[0]];
            let mut coords = DMatrix::zeros(d, target_dim);
            let mut warnings = Vec::new();
            for (k, &src) in order.iter().take(target_dim).enumerate() {
                let sv = svd.singular_values[src];
                if !(sv > 1e-12 * top) {
                    warnings.push(format!("axis {k}: rank deficient (singular value {sv:e}), coordinates zeroed"));
                    continue;
                }
                let col = u.column(src);
                let pivot =
                    col.iter().enumerate().fold(0, |best, (i, v)| if v.abs() > col[best].abs() { i } else { best });
                let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
                for i in 0..d {
                    coords[(i, k)] = sign * col[i] * sv;
                }
            }
            Ok(Reduced { coords, warnings })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrIntegralCurve {
    pub radii: Vec<f64>,
    pub t: Vec<f64>,
    /// Half-open index range of `radii` used by the slope fit.
    pub fit_range: (usize, usize),
}

/// Unordered pairwise distances between rows, sorted ascending.
fn sorted_pair_distances(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0;
            for k in 0..x.ncols() {
                let diff = x[(i, k)] - x[(j, k)];
                acc += diff * diff;
            }
            out.push(acc.sqrt());
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Share of pairs at distance `<= r` (closed ball).
fn pair_fraction(sorted: &[f64], r: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    sorted.partition_point(|&d| d <= r) as f64 / sorted.len() as f64
}

/// `T(r)`: fraction of ordered pairs `i != j` with `d_ij <= r`.
pub fn corr_integral(x: &DMatrix<f64>, radii: &[f64]) -> Result<CorrIntegralCurve> {
    if x.nrows() < MIN_CORR_POINTS {
        return Err(Error::invalid(format!("correlation integral needs N >= {MIN_CORR_POINTS}, got {}", x.nrows())));
    }
    if radii.is_empty() {
        return Err(Error::invalid("empty radius grid"));
    }
    if x.iter().any(|v| !v.is_finite()) || radii.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("correlation integral input".into()));
    }
    let sorted = sorted_pair_distances(x);
    let t = radii.iter().map(|&r| pair_fraction(&sorted, r)).collect();
    Ok(CorrIntegralCurve { radii: radii.to_vec(), t, fit_range: (0, radii.len()) })
}

/// Linear-interpolated percentile of sorted data, `q` in `[0, 100]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn log_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| match i {
            0 => a,
            _ if i == n - 1 => b,
            _ => (la + (lb - la) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrDimFit {
    pub d_corr: f64,
    pub curve: CorrIntegralCurve,
    pub residual: f64,
}

/// Slope of `ln T` against `ln r` over log-spaced radii between the window
/// percentiles of the pairwise distances.
pub fn corr_dim(x: &DMatrix<f64>) -> Result<CorrDimFit> {
    let n = x.nrows();
    if n < MIN_CORR_DIM_POINTS {
        return Err(Error::invalid(format!("correlation dimension needs N >= {MIN_CORR_DIM_POINTS}, got {n}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation dimension input".into()));
    }
    let sorted = sorted_pair_distances(x);
    let positive = &sorted[sorted.partition_point(|&d| d <= 0.0)..];
    if positive.len() < 2 {
        return Err(Error::Degenerate("fewer than 2 distinct points".into()));
    }
    let r_lo = percentile(&sorted, CORR_WINDOW.0).max(positive[0]);
    let r_hi = percentile(&sorted, CORR_WINDOW.1);
    if !(r_hi > r_lo) {
        return Err(Error::Degenerate(format!("empty fit window [{r_lo}, {r_hi}]")));
    }
    let radii = log_space(r_lo, r_hi, CORR_RADII);
    let t: Vec<f64> = radii.iter().map(|&r| pair_fraction(&sorted, r)).collect();
    let usable: Vec<usize> = (0..radii.len()).filter(|&i| t[i] > 0.0).collect();
    if usable.len() < 4 {
        return Err(Error::Degenerate(format!("only {} usable (r, T) pairs", usable.len())));
    }
    let lx: Vec<f64> = usable.iter().map(|&i| radii[i].ln()).collect();
    let ly: Vec<f64> = usable.iter().map(|&i| t[i].ln()).collect();
    let fit = ols(&lx, &ly)?;
    let fit_range = (usable[0], usable[usable.len() - 1] + 1);
    Ok(CorrDimFit { d_corr: fit.slope, curve: CorrIntegralCurve { radii, t, fit_range }, residual: fit.rms_residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDim {
    pub layer: usize,
    pub d_corr: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeomInvarianceReport {
    pub per_layer: Vec<LayerDim>,
    pub dims: Vec<f64>,
    pub delta: f64,
}

/// `(max - min) / mean` of the dimensions.
pub fn relative_spread(dims: &[f64]) -> Result<f64> {
    if dims.is_empty() {
        return Err(Error::invalid("no dimensions"));
    }
    let mean = dims.iter().sum::<f64>() / dims.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::Degenerate(format!("mean correlation dimension {mean} is not positive")));
    }
    let max = dims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = dims.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((max - min) / mean)
}

pub fn geom_invariance(layers: &[FeatureMatrix], target_dim: usize, method: Reducer) -> Result<GeomInvarianceReport> {
    if layers.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 layers, got {}", layers.len())));
    }
    let per_layer: Vec<LayerDim> = layers
        .iter()
        .enumerate()
        .map(|(layer, f)| {
            let reduced = match reduce_dim(f, target_dim, method) {
                Ok(r) => r,
                Err(e) => return LayerDim { layer, d_corr: None, warnings: vec![format!("layer excluded: {e}")] },
            };
            let mut warnings = reduced.warnings;
            match corr_dim(&reduced.coords) {
                Ok(fit) => LayerDim { layer, d_corr: Some(fit.d_corr), warnings },
                Err(e) => {
                    warnings.push(format!("layer excluded: {e}"));
                    LayerDim { layer, d_corr: None, warnings }
                }
            }
        })
        .collect();
    let dims: Vec<f64> = per_layer.iter().filter_map(|l| l.d_corr).collect();
    if dims.len() < 2 {
        return Err(Error::Degenerate(format!("only {} layer(s) with a usable correlation dimension", dims.len())));
    }
    let delta = relative_spread(&dims)?;
    Ok(GeomInvarianceReport { per_layer, dims, delta })
}
