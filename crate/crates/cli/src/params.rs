//! Resolved per-command parameters. These are what config files contain and
//! what every manifest records.

use selfsim::featnet::Layout;
use selfsim::fractal::{NormalizerMode, DEFAULT_GRID_COUNT, DEFAULT_K};
use selfsim::invariance::{HillCount, Reducer};
use selfsim::selfcheck::SelfCheckConfig;
use selfsim::trainer::{Activation, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Hard,
    Smooth,
}

/// Shared by `ssrate` and `boxcurve`; `plot` only affects `boxcurve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveParams {
    /// Activation tensor (`.npy`) or `B x D` activation table (`.csv`).
    pub input: String,
    pub layout: Layout,
    /// Treat the input as a precomputed `D x D` distance matrix.
    pub distances: bool,
    pub mode: CurveKind,
    pub k: f64,
    pub grid_count: usize,
    pub tz: Option<f64>,
    pub tv: Option<f64>,
    pub normalizer: NormalizerMode,
    pub plot: bool,
}

impl Default for CurveParams {
    fn default() -> Self {
        CurveParams {
            input: String::new(),
            layout: Layout::Bd,
            distances: false,
            mode: CurveKind::Hard,
            k: DEFAULT_K,
            grid_count: DEFAULT_GRID_COUNT,
            tz: None,
            tv: None,
            normalizer: NormalizerMode::Bounded,
            plot: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatParams {
    /// One activation file per layer, in layer order.
    pub inputs: Vec<String>,
    pub layout: Layout,
    pub hill: HillCount,
}

impl Default for StatParams {
    fn default() -> Self {
        StatParams { inputs: Vec::new(), layout: Layout::Bd, hill: HillCount::Retained }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeomParams {
    pub inputs: Vec<String>,
    pub layout: Layout,
    pub target_dim: usize,
    pub reducer: Reducer,
}

impl Default for GeomParams {
    fn default() -> Self {
        GeomParams { inputs: Vec::new(), layout: Layout::Bd, target_dim: 2, reducer: Reducer::Pca }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedParams {
    pub input: String,
    pub layout: Layout,
    pub distances: bool,
    pub dim: usize,
    /// Optional file with one integer group id per line.
    pub labels: Option<String>,
}

impl Default for EmbedParams {
    fn default() -> Self {
        EmbedParams { input: String::new(), layout: Layout::Bd, distances: false, dim: 2, labels: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CoverAlgorithm {
    All,
    Greedy,
    Burning,
    RadiusBurning,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxCoverParams {
    /// Edge list file, one "u v" pair per line.
    pub edges: String,
    pub thetas: Vec<usize>,
    pub algorithm: CoverAlgorithm,
    pub seed: u64,
}

impl Default for BoxCoverParams {
    fn default() -> Self {
        BoxCoverParams { edges: String::new(), thetas: vec![1, 2, 3], algorithm: CoverAlgorithm::All, seed: 0 }
    }
}

/// Training data: a CSV file, or Gaussian blobs when `csv` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataParams {
    pub csv: Option<String>,
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
    /// Keep only the first rows.
    pub limit: Option<usize>,
    /// Tail share of the rows held out for validation.
    pub val_fraction: f64,
}

impl Default for DataParams {
    fn default() -> Self {
        DataParams {
            csv: None,
            classes: 3,
            per_class: 167,
            dim: 2,
            separation: 5.0,
            seed: 0,
            limit: Some(500),
            val_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams { hidden: vec![32, 32], activation: Activation::Relu }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub data: DataParams,
    pub model: ModelParams,
    pub train: TrainConfig,
    /// `gamma.json` from `calibrate`; overrides `train.gamma`.
    pub gamma_file: Option<String>,
}

pub type GradcheckParams = SelfCheckConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointsParams {
    /// `segment`, `uniform_cube[:dim]` or `cantor[:depth]`.
    pub kind: String,
    pub n: usize,
    pub seed: u64,
    pub npy: bool,
}

impl Default for PointsParams {
    fn default() -> Self {
        PointsParams { kind: "segment".into(), n: 1000, seed: 0, npy: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlobsParams {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
}

impl Default for BlobsParams {
    fn default() -> Self {
        BlobsParams { classes: 3, per_class: 167, dim: 2, separation: 5.0, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Ring,
    Path,
    Star,
    Complete,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphParams {
    pub kind: GraphKind,
    pub n: usize,
    /// Extra-edge probability for `random`.
    pub extra: f64,
    pub seed: u64,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams { kind: GraphKind::Ring, n: 64, extra: 0.2, seed: 0 }
    }
}
