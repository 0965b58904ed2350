//! Command-line surface. Every flag is optional and overrides the value from
//! `--config` (or the built-in default).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use selfsim::featnet::Layout;
use selfsim::fractal::NormalizerMode;
use selfsim::invariance::{HillCount, Reducer};
use selfsim::trainer::Activation;

use crate::params::*;

#[derive(Debug, Parser)]
#[command(name = "selfsim", version, about = "Self-similarity analysis of feature networks")]
pub struct Cli {
    /// TOML config or a manifest.json from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory for outputs and manifest.json.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// SS_rate of one layer.
    Ssrate(CurveArgs),
    /// Box-count curve, fitted d_B and SS_rate.
    Boxcurve(CurveArgs),
    /// Cross-layer scale invariance.
    #[command(subcommand)]
    Invariance(InvarianceCommand),
    /// Classical MDS embedding to SVG and CSV.
    Embed(EmbedArgs),
    /// Classical box covering of an edge list.
    Boxcover(BoxCoverArgs),
    /// Train an MLP, optionally with the self-similarity penalty.
    Train(TrainArgs),
    /// Measure per-layer SS_rate targets from an unpenalized run.
    Calibrate(TrainArgs),
    /// Finite-difference check of the analytic gradients.
    Gradcheck(GradcheckArgs),
    /// Synthetic data generators.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Subcommand)]
pub enum InvarianceCommand {
    /// Power-law exponents of covariance spectra and their spread.
    Stat(StatArgs),
    /// Correlation dimensions of reduced point clouds and their spread.
    Geom(GeomArgs),
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    Points(PointsArgs),
    Blobs(BlobsArgs),
    Graph(GraphArgs),
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

fn set_list<T>(slot: &mut Vec<T>, v: Vec<T>) {
    if !v.is_empty() {
        *slot = v;
    }
}

fn flag(slot: &mut bool, v: bool) {
    if v {
        *slot = true;
    }
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Activation tensor (.npy) or activation table (.csv, rows = samples).
    pub input: Option<String>,
    #[arg(long)]
    pub layout: Option<Layout>,
    /// Input is already a D x D distance matrix.
    #[arg(long)]
    pub distances: bool,
    #[arg(long, value_enum)]
    pub mode: Option<CurveKind>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub grid_count: Option<usize>,
    #[arg(long)]
    pub tz: Option<f64>,
    #[arg(long)]
    pub tv: Option<f64>,
    #[arg(long)]
    pub normalizer: Option<NormalizerMode>,
    /// Also write an SVG plot (boxcurve only).
    #[arg(long)]
    pub plot: bool,
}

impl CurveArgs {
    pub fn apply(self, p: &mut CurveParams) {
        set(&mut p.input, self.input);
        set(&mut p.layout, self.layout);
        flag(&mut p.distances, self.distances);
        set(&mut p.mode, self.mode);
        set(&mut p.k, self.k);
        set(&mut p.grid_count, self.grid_count);
        set_opt(&mut p.tz, self.tz);
        set_opt(&mut p.tv, self.tv);
        set(&mut p.normalizer, self.normalizer);
        flag(&mut p.plot, self.plot);
    }
}

#[derive(Debug, Args)]
pub struct StatArgs {
    /// One activation file per layer.
    pub inputs: Vec<String>,
    #[arg(long)]
    pub layout: Option<Layout>,
    /// Hill numerator: retained eigenvalue count or ambient dimension.
    #[arg(long)]
    pub hill: Option<HillCount>,
}

impl StatArgs {
    pub fn apply(self, p: &mut StatParams) {
        set_list(&mut p.inputs, self.inputs);
        set(&mut p.layout, self.layout);
        set(&mut p.hill, self.hill);
    }
}

#[derive(Debug, Args)]
pub struct GeomArgs {
    pub inputs: Vec<String>,
    #[arg(long)]
    pub layout: Option<Layout>,
    #[arg(long)]
    pub target_dim: Option<usize>,
    #[arg(long)]
    pub reducer: Option<Reducer>,
}

impl GeomArgs {
    pub fn apply(self, p: &mut GeomParams) {
        set_list(&mut p.inputs, self.inputs);
        set(&mut p.layout, self.layout);
        set(&mut p.target_dim, self.target_dim);
        set(&mut p.reducer, self.reducer);
    }
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    pub input: Option<String>,
    #[arg(long)]
    pub layout: Option<Layout>,
    #[arg(long)]
    pub distances: bool,
    #[arg(long)]
    pub dim: Option<usize>,
    /// File with one integer group id per node.
    #[arg(long)]
    pub labels: Option<String>,
}

impl EmbedArgs {
    pub fn apply(self, p: &mut EmbedParams) {
        set(&mut p.input, self.input);
        set(&mut p.layout, self.layout);
        flag(&mut p.distances, self.distances);
        set(&mut p.dim, self.dim);
        set_opt(&mut p.labels, self.labels);
    }
}

#[derive(Debug, Args)]
pub struct BoxCoverArgs {
    /// Edge list, one "u v" pair per line.
    pub edges: Option<String>,
    /// Box sizes, e.g. 1,2,3.
    #[arg(long, value_delimiter = ',')]
    pub theta: Vec<usize>,
    #[arg(long, value_enum)]
    pub algorithm: Option<CoverAlgorithm>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl BoxCoverArgs {
    pub fn apply(self, p: &mut BoxCoverParams) {
        set(&mut p.edges, self.edges);
        set_list(&mut p.thetas, self.theta);
        set(&mut p.algorithm, self.algorithm);
        set(&mut p.seed, self.seed);
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset CSV (features then a `label` column); blobs when omitted.
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Hidden widths, e.g. 32,32.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Vec<usize>,
    #[arg(long)]
    pub activation: Option<Activation>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Per-layer targets (or one value for all layers).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub gamma: Vec<f64>,
    #[arg(long)]
    pub gamma_file: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub fac: Option<f64>,
    #[arg(long)]
    pub grid_count: Option<usize>,
    #[arg(long)]
    pub normalizer: Option<NormalizerMode>,
    #[arg(long)]
    pub max_grad_norm: Option<f64>,
}

impl TrainArgs {
    pub fn apply(self, p: &mut TrainParams) {
        set_opt(&mut p.data.csv, self.data);
        set(&mut p.data.classes, self.classes);
        set(&mut p.data.per_class, self.per_class);
        set(&mut p.data.dim, self.dim);
        set(&mut p.data.separation, self.separation);
        set(&mut p.data.seed, self.data_seed);
        set_opt(&mut p.data.limit, self.limit);
        set(&mut p.data.val_fraction, self.val_fraction);
        set_list(&mut p.model.hidden, self.hidden);
        set(&mut p.model.activation, self.activation);
        let t = &mut p.train;
        set(&mut t.alpha, self.alpha);
        set_list(&mut t.gamma, self.gamma);
        set(&mut t.lr, self.lr);
        set(&mut t.momentum, self.momentum);
        set(&mut t.epochs, self.epochs);
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.seed, self.seed);
        set(&mut t.smoothing.k, self.k);
        set(&mut t.smoothing.fac, self.fac);
        set(&mut t.grid_count, self.grid_count);
        set(&mut t.normalizer, self.normalizer);
        set_opt(&mut t.max_grad_norm, self.max_grad_norm);
        set_opt(&mut p.gamma_file, self.gamma_file);
    }
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub cases: Option<usize>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub grid_count: Option<usize>,
}

impl GradcheckArgs {
    pub fn apply(self, p: &mut GradcheckParams) {
        set(&mut p.seed, self.seed);
        set(&mut p.cases, self.cases);
        set(&mut p.k, self.k);
        set(&mut p.grid_count, self.grid_count);
    }
}

#[derive(Debug, Args)]
pub struct PointsArgs {
    /// segment, uniform_cube[:dim] or cantor[:depth].
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write points.npy instead of points.csv.
    #[arg(long)]
    pub npy: bool,
}

impl PointsArgs {
    pub fn apply(self, p: &mut PointsParams) {
        set(&mut p.kind, self.kind);
        set(&mut p.n, self.n);
        set(&mut p.seed, self.seed);
        flag(&mut p.npy, self.npy);
    }
}

#[derive(Debug, Args)]
pub struct BlobsArgs {
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl BlobsArgs {
    pub fn apply(self, p: &mut BlobsParams) {
        set(&mut p.classes, self.classes);
        set(&mut p.per_class, self.per_class);
        set(&mut p.dim, self.dim);
        set(&mut p.separation, self.separation);
        set(&mut p.seed, self.seed);
    }
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long, value_enum)]
    pub kind: Option<GraphKind>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub extra: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl GraphArgs {
    pub fn apply(self, p: &mut GraphParams) {
        set(&mut p.kind, self.kind);
        set(&mut p.n, self.n);
        set(&mut p.extra, self.extra);
        set(&mut p.seed, self.seed);
    }
}
