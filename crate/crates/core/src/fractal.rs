//! Simulated box counting on a distance matrix and the SS_rate self-similarity
//! metric.
//!
//! For a threshold `theta`, the connection probability `p(theta)` is the share
//! of ordered node pairs `i != j` with `C_ij <= theta`. The simulated box count
//!
//! ```text
//! N(theta) = 1 + (D - 1) * log_D(D + (1 - D) * p(theta))
//! ```
//!
//! runs from `D` (no connections) down to `1` (fully connected). A perfectly
//! self-similar network has `ln N` linear in `lo(theta) = ln(1 + theta)`; SS_rate
//! integrates the absolute deviation of `ln N` from the straight line `pf`
//! joining `(lo(TZ), ln D)` and `(lo(TV), 0)`, normalized into `[0, 1]`.
//!
//! The smooth mode replaces the indicator with `sigmoid(k (theta - C_ij))`, which
//! makes SS_rate differentiable in `C`. [`ss_rate_grad`] and
//! [`ss_rate_grad_adaptive`] return that gradient. The chain through `N`, `pf`
//! and the trapezoid rule is reconstructed from the forward definition; only
//! the sigmoid factor for `dp/dC` is given explicitly by the method.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featnet::DistanceMatrix;
use crate::linalg::ols;

/// Smallest accepted grid size.
pub const MIN_GRID_COUNT: usize = 8;
pub const DEFAULT_GRID_COUNT: usize = 64;
pub const DEFAULT_K: f64 = 50.0;
pub const DEFAULT_FAC: f64 = 1.0;
/// Floor applied to the argument of `log_D` in [`box_count`].
pub const LOG_ARG_FLOOR: f64 = 1e-12;
/// Upper grid bound used when every pairwise distance is zero.
pub const DEGENERATE_TV: f64 = 1.0;

/// `lo(x) = ln(1 + x)`.
#[inline]
pub fn lo(x: f64) -> f64 {
    x.ln_1p()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Thresholds `TZ = theta_0 < ... < theta_{K-1} = TV`, uniform in `lo`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    tz: f64,
    tv: f64,
    thetas: Vec<f64>,
}

impl ThresholdGrid {
    pub fn new(tz: f64, tv: f64, count: usize) -> Result<Self> {
        if !(tz >= 0.0) || !tz.is_finite() {
            return Err(Error::invalid(format!("grid minimum TZ must be finite and >= 0, got {tz}")));
        }
        if !(tv > tz) || !tv.is_finite() {
            return Err(Error::invalid(format!("grid maximum TV must exceed TZ = {tz}, got {tv}")));
        }
        if count < MIN_GRID_COUNT {
            return Err(Error::invalid(format!("grid needs at least {MIN_GRID_COUNT} thresholds, got {count}")));
        }
        let (a, b) = (lo(tz), lo(tv));
        let last = count - 1;
        let mut thetas: Vec<f64> = (0..count).map(|j| (a + (b - a) * (j as f64 / last as f64)).exp_m1()).collect();
        thetas[0] = tz;
        thetas[last] = tv;
        for j in 1..count {
            if !(thetas[j] > thetas[j - 1]) {
                return Err(Error::invalid(format!("grid [{tz}, {tv}] too narrow for {count} distinct thresholds")));
            }
        }
        Ok(ThresholdGrid { tz, tv, thetas })
    }

    /// Default data-driven grid: `TZ = 0`, `TV = max_{i != j} C_ij`.
    /// Falls back to `TV = 1` when all distances vanish.
    pub fn from_distances(c: &DistanceMatrix, count: usize) -> Result<Self> {
        let max = c.max_off_diagonal();
        Self::new(0.0, if max > 0.0 { max } else { DEGENERATE_TV }, count)
    }

    pub fn tz(&self) -> f64 {
        self.tz
    }

    pub fn tv(&self) -> f64 {
        self.tv
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    /// `lo(TV) - lo(TZ)`.
    pub fn lo_span(&self) -> f64 {
        lo(self.tv) - lo(self.tz)
    }

    /// Trapezoid weights for integrating over `d lo(theta)` on this grid.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let lov: Vec<f64> = self.thetas.iter().map(|&t| lo(t)).collect();
        let k = lov.len();
        let mut w = vec![0.0; k];
        for j in 0..k - 1 {
            let h = 0.5 * (lov[j + 1] - lov[j]);
            w[j] += h;
            w[j + 1] += h;
        }
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMode {
    /// Indicator `C_ij <= theta`.
    Hard,
    /// `sigmoid(k (theta - C_ij))`.
    Smooth { k: f64 },
}

impl CurveMode {
    pub fn smooth(k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::invalid(format!("smoothing factor k must be finite and > 0, got {k}")));
        }
        Ok(CurveMode::Smooth { k })
    }

    pub fn name(&self) -> &'static str {
        match self {
            CurveMode::Hard => "hard",
            CurveMode::Smooth { .. } => "smooth",
        }
    }

    pub fn k(&self) -> Option<f64> {
        match *self {
            CurveMode::Hard => None,
            CurveMode::Smooth { k } => Some(k),
        }
    }
}

/// How the SS_rate integral is normalized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizerMode {
    /// `2 / (lo_span * ln D)`: the maximal (triangle) deviation maps to exactly 1.
    #[default]
    Bounded,
    /// `2 / (D * lo_span)`, the constant as literally written.
    Literal,
}

impl NormalizerMode {
    pub fn factor(self, d: usize, lo_span: f64) -> f64 {
        match self {
            NormalizerMode::Bounded => 2.0 / (lo_span * (d as f64).ln()),
            NormalizerMode::Literal => 2.0 / (d as f64 * lo_span),
        }
    }
}

impl std::str::FromStr for NormalizerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bounded" => Ok(NormalizerMode::Bounded),
            "literal" => Ok(NormalizerMode::Literal),
            other => Err(Error::invalid(format!("unknown normalizer '{other}' (bounded | literal)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub k: f64,
    /// Gradient scaling factor.
    pub fac: f64,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        SmoothingParams { k: DEFAULT_K, fac: DEFAULT_FAC }
    }
}

impl SmoothingParams {
    pub fn new(k: f64, fac: f64) -> Result<Self> {
        let sp = SmoothingParams { k, fac };
        sp.validate()?;
        Ok(sp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0) || !self.k.is_finite() {
            return Err(Error::invalid(format!("smoothing factor k must be finite and > 0, got {}", self.k)));
        }
        if !(self.fac > 0.0) || !self.fac.is_finite() {
            return Err(Error::invalid(format!("gradient factor fac must be finite and > 0, got {}", self.fac)));
        }
        Ok(())
    }
}

fn check_nodes(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::invalid(format!("need at least 2 nodes, got {d}")));
    }
    Ok(())
}

/// Share of ordered pairs `i != j` connected at threshold `theta`.
pub fn connect_prob(c: &DistanceMatrix, theta: f64, mode: CurveMode) -> Result<f64> {
    let d = c.d();
    check_nodes(d)?;
    if !(theta >= 0.0) {
        return Err(Error::invalid(format!("threshold must be >= 0, got {theta}")));
    }
    let sum: f64 = match mode {
        CurveMode::Hard => c.off_diagonal().filter(|&v| v <= theta).count() as f64,
        CurveMode::Smooth { k } => c.off_diagonal().map(|v| sigmoid(k * (theta - v))).sum(),
    };
    Ok(sum / (d * (d - 1)) as f64)
}

/// Simulated box count plus whether the log argument had to be floored.
pub fn box_count_checked(p: f64, d: usize) -> Result<(f64, bool)> {
    check_nodes(d)?;
    if !p.is_finite() {
        return Err(Error::NonFinite(format!("connection probability {p}")));
    }
    let df = d as f64;
    let arg = df + (1.0 - df) * p;
    let (arg, clamped) = if arg <= LOG_ARG_FLOOR { (LOG_ARG_FLOOR, true) } else { (arg, false) };
    Ok((1.0 + (df - 1.0) * arg.ln() / df.ln(), clamped))
}

/// `N = 1 + (D - 1) log_D(D + (1 - D) p)`.
pub fn box_count(p: f64, d: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("probability must lie in [0, 1], got {p}")));
    }
    box_count_checked(p, d).map(|(n, _)| n)
}

/// Inverse of [`box_count`] in `p`.
fn prob_for_count(n: f64, d: usize) -> f64 {
    let df = d as f64;
    ((df - df.powf((n - 1.0) / (df - 1.0))) / (df - 1.0)).clamp(0.0, 1.0)
}

/// Reference line in `lo` space: `ln D` at `TZ`, `0` at `TV`.
pub fn pf(theta: f64, grid: &ThresholdGrid, d: usize) -> Result<f64> {
    check_nodes(d)?;
    let span = grid.lo_span();
    if !(span > 0.0) {
        return Err(Error::invalid("degenerate grid: TV == TZ"));
    }
    Ok((lo(grid.tv) - lo(theta)) / span * (d as f64).ln())
}

/// Connection probabilities and box counts over a threshold grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCurve {
    pub grid: ThresholdGrid,
    pub p: Vec<f64>,
    pub n: Vec<f64>,
    /// `ln n`, kept alongside `n` so synthetic curves can be specified exactly in log space.
    pub log_n: Vec<f64>,
    pub d: usize,
    pub mode: CurveMode,
    /// Grid points whose log argument was floored.
    pub clamped: usize,
}

impl BoxCurve {
    /// Builds a curve directly from `ln N` values (e.g. counts from a classical
    /// box cover, or a reference shape). Probabilities are recovered by
    /// inverting the box-count formula.
    pub fn from_log_counts(grid: ThresholdGrid, d: usize, log_n: Vec<f64>) -> Result<Self> {
        check_nodes(d)?;
        if log_n.len() != grid.len() {
            return Err(Error::shape(format!("{} log counts for {} thresholds", log_n.len(), grid.len())));
        }
        let ln_d = (d as f64).ln();
        for (j, &v) in log_n.iter().enumerate() {
            if !v.is_finite() || v < -1e-12 || v > ln_d + 1e-12 {
                return Err(Error::invalid(format!("log count {v} at index {j} outside [0, ln D]")));
            }
            if j > 0 && v > log_n[j - 1] {
                return Err(Error::invalid(format!("log counts must be non-increasing (index {j})")));
            }
        }
        let n: Vec<f64> = log_n.iter().map(|v| v.exp()).collect();
        let p = n.iter().map(|&x| prob_for_count(x, d)).collect();
        Ok(BoxCurve { grid, p, n, log_n, d, mode: CurveMode::Hard, clamped: 0 })
    }
}

pub fn box_curve(c: &DistanceMatrix, grid: &ThresholdGrid, mode: CurveMode) -> Result<BoxCurve> {
    let d = c.d();
    check_nodes(d)?;
    let mut p = Vec::with_capacity(grid.len());
    let mut n = Vec::with_capacity(grid.len());
    let mut clamped = 0;
    for &theta in grid.thetas() {
        let pj = connect_prob(c, theta, mode)?;
        let (nj, cl) = box_count_checked(pj, d)?;
        clamped += usize::from(cl);
        p.push(pj);
        n.push(nj);
    }
    let log_n = n.iter().map(|v| v.ln()).collect();
    Ok(BoxCurve { grid: grid.clone(), p, n, log_n, d, mode, clamped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsRateResult {
    /// Normalized and clamped into `[0, 1]`.
    pub value: f64,
    /// Trapezoid integral of `|ln N - pf|` over `d lo(theta)`.
    pub raw_integral: f64,
    pub normalizer_mode: NormalizerMode,
}

fn deviations(curve: &BoxCurve) -> Result<Vec<f64>> {
    curve.grid.thetas().iter().zip(&curve.log_n).map(|(&t, &ln_n)| Ok(ln_n - pf(t, &curve.grid, curve.d)?)).collect()
}

pub fn ss_rate(curve: &BoxCurve, normalizer: NormalizerMode) -> Result<SsRateResult> {
    if curve.grid.len() < MIN_GRID_COUNT {
        return Err(Error::invalid(format!(
            "SS_rate needs at least {MIN_GRID_COUNT} grid points, got {}",
            curve.grid.len()
        )));
    }
    let dev = deviations(curve)?;
    let raw: f64 = curve.grid.trapezoid_weights().iter().zip(&dev).map(|(w, e)| w * e.abs()).sum();
    let value = (normalizer.factor(curve.d, curve.grid.lo_span()) * raw).clamp(0.0, 1.0);
    Ok(SsRateResult { value, raw_integral: raw, normalizer_mode: normalizer })
}

/// Smooth-mode SS_rate together with its gradient.
#[derive(Debug, Clone)]
pub struct SsRateGradient {
    pub ss_rate: SsRateResult,
    pub curve: BoxCurve,
    /// `dSS/dC_ij` for each ordered entry; symmetric with zero diagonal.
    pub grad: DMatrix<f64>,
    /// Grid points dropped from the gradient because their log argument was floored.
    pub suppressed: usize,
}

/// Gradient of smooth SS_rate with the grid held fixed.
pub fn ss_rate_grad(
    c: &DistanceMatrix,
    grid: &ThresholdGrid,
    sp: SmoothingParams,
    normalizer: NormalizerMode,
) -> Result<SsRateGradient> {
    grad_impl(c, grid, sp, normalizer, false)
}

/// Gradient of smooth SS_rate when the grid is itself derived from `c`
/// (`TZ = 0`, `TV = max C`). Adds the term flowing through `TV` into the
/// entries that attain the maximum.
pub fn ss_rate_grad_adaptive(
    c: &DistanceMatrix,
    count: usize,
    sp: SmoothingParams,
    normalizer: NormalizerMode,
) -> Result<SsRateGradient> {
    let grid = ThresholdGrid::from_distances(c, count)?;
    let tracks_max = c.max_off_diagonal() > 0.0;
    grad_impl(c, &grid, sp, normalizer, tracks_max)
}

fn grad_impl(
    c: &DistanceMatrix,
    grid: &ThresholdGrid,
    sp: SmoothingParams,
    normalizer: NormalizerMode,
    through_tv: bool,
) -> Result<SsRateGradient> {
    sp.validate()?;
    let d = c.d();
    check_nodes(d)?;
    let mode = CurveMode::Smooth { k: sp.k };
    let curve = box_curve(c, grid, mode)?;
    let ss = ss_rate(&curve, normalizer)?;

    let df = d as f64;
    let ln_d = df.ln();
    let pairs = df * (df - 1.0);
    let thetas = grid.thetas();
    let kk = thetas.len();
    let weights = grid.trapezoid_weights();
    let norm = normalizer.factor(d, grid.lo_span());
    let dev = deviations(&curve)?;
    let unclamped = norm * ss.raw_integral;

    let mut grad = DMatrix::zeros(d, d);
    let mut suppressed = 0;
    if !(0.0..=1.0).contains(&unclamped) {
        // clamp is flat outside [0, 1]
        return Ok(SsRateGradient { ss_rate: ss, curve, grad, suppressed });
    }

    // dSS/dp_j for each grid point
    let mut ds_dp = vec![0.0; kk];
    for j in 0..kk {
        let arg = df + (1.0 - df) * curve.p[j];
        if arg <= LOG_ARG_FLOOR {
            suppressed += 1;
            continue;
        }
        let sign = if dev[j] > 0.0 {
            1.0
        } else if dev[j] < 0.0 {
            -1.0
        } else {
            0.0
        };
        let dn_dp = -(df - 1.0) * (df - 1.0) / (arg * ln_d);
        ds_dp[j] = norm * weights[j] * sign * dn_dp / curve.n[j];
    }

    // dp_j/dC_ab = -k s (1 - s) / (D(D-1)); accumulate the theta-path total as we go
    let mut tv_total = 0.0;
    let last = (kk - 1) as f64;
    let tv = grid.tv();
    for a in 0..d {
        for b in (a + 1)..d {
            let cab = c.get(a, b);
            let mut g = 0.0;
            for (j, &theta) in thetas.iter().enumerate() {
                if ds_dp[j] == 0.0 {
                    continue;
                }
                let s = sigmoid(sp.k * (theta - cab));
                let dp = sp.k * s * (1.0 - s) / pairs;
                g -= ds_dp[j] * dp;
                if through_tv {
                    // dtheta_j/dTV = u_j (1 + theta_j) / (1 + TV); each unordered pair counts twice in p
                    let dtheta = (j as f64 / last) * (1.0 + theta) / (1.0 + tv);
                    tv_total += 2.0 * ds_dp[j] * dp * dtheta;
                }
            }
            grad[(a, b)] = g;
            grad[(b, a)] = g;
        }
    }

    if through_tv && tv_total != 0.0 {
        let maxima: Vec<(usize, usize)> =
            (0..d).flat_map(|a| (0..d).map(move |b| (a, b))).filter(|&(a, b)| a != b && c.get(a, b) == tv).collect();
        let share = tv_total / maxima.len() as f64;
        for (a, b) in maxima {
            grad[(a, b)] += share;
        }
    }

    grad *= sp.fac;
    Ok(SsRateGradient { ss_rate: ss, curve, grad, suppressed })
}

/// Power-law fit `N ~ (1 + theta)^(-d_B)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimFit {
    pub d_b: f64,
    pub intercept: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
}

/// OLS of `ln N` against `ln(1 + theta)`; returns the negated slope.
pub fn power_law_dim(thetas: &[f64], counts: &[f64]) -> Result<DimFit> {
    if thetas.len() != counts.len() {
        return Err(Error::shape(format!("{} thresholds vs {} counts", thetas.len(), counts.len())));
    }
    if let Some(bad) = counts.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::invalid(format!("box counts must be > 0, got {bad}")));
    }
    if let Some(bad) = thetas.iter().find(|&&v| !(v > -1.0) || !v.is_finite()) {
        return Err(Error::invalid(format!("threshold {bad} out of range")));
    }
    let x: Vec<f64> = thetas.iter().map(|&t| lo(t)).collect();
    let y: Vec<f64> = counts.iter().map(|v| v.ln()).collect();
    let fit = ols(&x, &y)?;
    Ok(DimFit { d_b: -fit.slope, intercept: fit.intercept, residual: fit.rms_residual })
}

pub fn fractal_dim_fit(curve: &BoxCurve) -> Result<DimFit> {
    power_law_dim(curve.grid.thetas(), &curve.n)
}

/// JSON-facing summary of one curve evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub d: usize,
    pub mode: String,
    pub k: Option<f64>,
    pub normalizer_mode: NormalizerMode,
    pub thetas: Vec<f64>,
    pub p: Vec<f64>,
    pub n: Vec<f64>,
    #[serde(rename = "d_B")]
    pub d_b: Option<f64>,
    pub residual: Option<f64>,
    pub ss_rate: f64,
    pub clamped: usize,
}

impl CurveReport {
    pub fn new(curve: &BoxCurve, normalizer: NormalizerMode) -> Result<Self> {
        let ss = ss_rate(curve, normalizer)?;
        // a flat curve (all counts equal) still has a well-defined slope of 0
        let fit = fractal_dim_fit(curve).ok();
        Ok(CurveReport {
            d: curve.d,
            mode: curve.mode.name().to_string(),
            k: curve.mode.k(),
            normalizer_mode: normalizer,
            thetas: curve.grid.thetas().to_vec(),
            p: curve.p.clone(),
            n: curve.n.clone(),
            d_b: fit.map(|f| f.d_b),
            residual: fit.map(|f| f.residual),
            ss_rate: ss.value,
            clamped: curve.clamped,
        })
    }
}
