//! Task loss plus a self-similarity penalty on one randomly chosen hidden layer.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featnet::{distance_matrix, to_feature_matrix, DistanceMatrix};
use crate::fractal::{
    box_curve, ss_rate, ss_rate_grad_adaptive, CurveMode, NormalizerMode, SmoothingParams, ThresholdGrid,
    DEFAULT_GRID_COUNT,
};
use crate::io::{atomic_write, Dataset};
use crate::rng::{stream, Stream};
use crate::trainer::mlp::{accuracy, task_loss, Gradients, Mlp};

/// Rows used to measure per-layer SS_rate for calibration and logging.
pub const EVAL_ROWS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Penalty weight; 0 disables the penalty.
    pub alpha: f64,
    /// Per-hidden-layer targets; a single value is broadcast.
    pub gamma: Vec<f64>,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub smoothing: SmoothingParams,
    pub grid_count: usize,
    pub normalizer: NormalizerMode,
    /// Rescale the full gradient when its norm exceeds this.
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.0,
            gamma: vec![0.0],
            lr: 0.05,
            momentum: 0.9,
            epochs: 200,
            batch_size: 32,
            seed: 0,
            smoothing: SmoothingParams::default(),
            grid_count: DEFAULT_GRID_COUNT,
            normalizer: NormalizerMode::Bounded,
            max_grad_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, hidden: usize) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid(format!("lr must be finite and > 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch_size must be >= 2"));
        }
        if hidden == 0 {
            return Err(Error::invalid("the model has no hidden layer to regularize"));
        }
        if self.gamma.len() != 1 && self.gamma.len() != hidden {
            return Err(Error::invalid(format!(
                "gamma has {} entries; expected 1 or one per hidden layer ({hidden})",
                self.gamma.len()
            )));
        }
        if self.gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gamma".into()));
        }
        if let Some(n) = self.max_grad_norm {
            if !(n > 0.0) {
                return Err(Error::invalid(format!("max_grad_norm must be > 0, got {n}")));
            }
        }
        self.smoothing.validate()?;
        ThresholdGrid::new(0.0, 1.0, self.grid_count)?;
        Ok(())
    }

    pub fn gamma_for(&self, layer: usize) -> f64 {
        if self.gamma.len() == 1 {
            self.gamma[0]
        } else {
            self.gamma[layer]
        }
    }
}

/// One evaluation of the total loss on a batch.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub task: f64,
    pub penalty: f64,
    pub total: f64,
    pub grads: Gradients,
    /// Hidden layer that carried the penalty.
    pub layer: usize,
    /// Smooth SS_rate of that layer, when evaluated.
    pub ss_smooth: Option<f64>,
    /// True when the layer collapsed to a single point and the penalty was skipped.
    pub skipped: bool,
}

pub fn sample_layer(rng: &mut ChaCha8Rng, hidden: usize) -> usize {
    rng.random_range(0..hidden)
}

/// `dL/dH` for `H` (`B x D`) given `dL/dC` on the distance matrix of `Hᵀ`.
fn distance_backprop(h: &DMatrix<f64>, c: &DistanceMatrix, d_c: &DMatrix<f64>) -> DMatrix<f64> {
    let (b, d) = h.shape();
    let mut d_h = DMatrix::zeros(b, d);
    for a in 0..d {
        for q in (a + 1)..d {
            let cab = c.get(a, q);
            if cab == 0.0 {
                continue;
            }
            let coef = (d_c[(a, q)] + d_c[(q, a)]) / (b as f64 * cab);
            if coef == 0.0 {
                continue;
            }
            for r in 0..b {
                let diff = coef * (h[(r, a)] - h[(r, q)]);
                d_h[(r, a)] += diff;
                d_h[(r, q)] -= diff;
            }
        }
    }
    d_h
}

/// Total loss with the penalty placed on hidden layer `layer`.
pub fn loss_on_layer(m: &Mlp, x: &DMatrix<f64>, y: &[usize], cfg: &TrainConfig, layer: usize) -> Result<LossEval> {
    let cache = m.forward(x)?;
    let (task, d_logits) = task_loss(&cache.logits, y)?;
    if cfg.alpha == 0.0 {
        let grads = m.backward(&cache, &d_logits, &[]);
        return Ok(LossEval { task, penalty: 0.0, total: task, grads, layer, ss_smooth: None, skipped: false });
    }
    let h = cache.hidden(layer);
    let c = distance_matrix(&to_feature_matrix(h)?);
    if c.max_off_diagonal() == 0.0 || h.ncols() < 2 {
        let grads = m.backward(&cache, &d_logits, &[]);
        return Ok(LossEval { task, penalty: 0.0, total: task, grads, layer, ss_smooth: None, skipped: true });
    }
    let sg = ss_rate_grad_adaptive(&c, cfg.grid_count, cfg.smoothing, cfg.normalizer)?;
    let ss = sg.ss_rate.value;
    let gap = ss - cfg.gamma_for(layer);
    let penalty = cfg.alpha * gap * gap;
    let d_c = sg.grad * (2.0 * cfg.alpha * gap);
    let d_h = distance_backprop(h, &c, &d_c);
    let grads = m.backward(&cache, &d_logits, &[(layer, d_h)]);
    Ok(LossEval { task, penalty, total: task + penalty, grads, layer, ss_smooth: Some(ss), skipped: false })
}

/// Samples the penalized layer from `rng`, then evaluates [`loss_on_layer`].
pub fn total_loss(m: &Mlp, x: &DMatrix<f64>, y: &[usize], cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<LossEval> {
    let layer = sample_layer(rng, m.hidden_count());
    loss_on_layer(m, x, y, cfg, layer)
}

/// Hard-mode SS_rate of every hidden layer on `x`, each with its own data-driven grid.
pub fn hidden_ss_rates(m: &Mlp, x: &DMatrix<f64>, grid_count: usize, normalizer: NormalizerMode) -> Result<Vec<f64>> {
    let cache = m.forward(x)?;
    (0..cache.hidden_count())
        .map(|k| {
            let c = distance_matrix(&to_feature_matrix(cache.hidden(k))?);
            let grid = ThresholdGrid::from_distances(&c, grid_count)?;
            Ok(ss_rate(&box_curve(&c, &grid, CurveMode::Hard)?, normalizer)?.value)
        })
        .collect()
}

/// SGD with classical momentum: `v <- mu v - lr g`, `theta <- theta + v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    lr: f64,
    momentum: f64,
    velocity: Option<Gradients>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Sgd { lr, momentum, velocity: None }
    }

    pub fn step(&mut self, m: &mut Mlp, g: &Gradients) {
        let v = self.velocity.get_or_insert_with(|| {
            let mut z = g.clone();
            z.scale(0.0);
            z
        });
        for l in 0..g.weights.len() {
            v.weights[l] *= self.momentum;
            v.weights[l] -= &g.weights[l] * self.lr;
            v.biases[l] *= self.momentum;
            v.biases[l] -= &g.biases[l] * self.lr;
        }
        for (w, dv) in m.weights_mut().iter_mut().zip(&v.weights) {
            *w += dv;
        }
        for (b, dv) in m.biases_mut().iter_mut().zip(&v.biases) {
            *b += dv;
        }
    }
}

/// Row order for one epoch, split into batches (last batch may be short,
/// but never shorter than 2 rows).
pub fn epoch_batches(rng: &mut ChaCha8Rng, n: usize, batch_size: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() < 2) {
        let tail = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(tail);
    }
    batches
}

pub fn gather(d: &Dataset, rows: &[usize]) -> (DMatrix<f64>, Vec<usize>) {
    let x = DMatrix::from_fn(rows.len(), d.features(), |i, j| d.x[(rows[i], j)]);
    (x, rows.iter().map(|&r| d.y[r]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean over the epoch's steps.
    pub task_loss: f64,
    pub total_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    /// Layer penalized in the epoch's last step.
    pub k: usize,
    /// Smooth SS_rate of layer `k` in that step (absent when the penalty is off or skipped).
    pub ss_smooth: Option<f64>,
    /// Hard SS_rate of every hidden layer on the evaluation rows after the epoch.
    pub ss_hard: Vec<f64>,
    pub skipped_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Set when training stopped on a non-finite loss; the model is the last finite state.
    pub aborted: Option<String>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let layers = self.epochs.first().map_or(0, |e| e.ss_hard.len());
        let mut out = String::from("epoch,task_loss,total_loss,train_acc,val_acc,k,ss_smooth,skipped_steps");
        for l in 0..layers {
            out.push_str(&format!(",ss_hard_{l}"));
        }
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}",
                e.epoch,
                e.task_loss,
                e.total_loss,
                e.train_acc,
                opt(e.val_acc),
                e.k,
                opt(e.ss_smooth),
                e.skipped_steps
            ));
            for v in &e.ss_hard {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn eval_rows(d: &Dataset) -> DMatrix<f64> {
    d.x.rows(0, d.len().min(EVAL_ROWS)).into_owned()
}

/// Runs `cfg.epochs` epochs of minibatch SGD. Batch order and layer sampling
/// use separate streams of `cfg.seed`, so enabling the penalty never changes
/// which rows form a batch.
pub fn train(model: Mlp, data: &Dataset, val: Option<&Dataset>, cfg: &TrainConfig) -> Result<(Mlp, TrainLog)> {
    cfg.validate(model.hidden_count())?;
    if data.features() != model.widths()[0] {
        return Err(Error::shape(format!(
            "data has {} features, model expects {}",
            data.features(),
            model.widths()[0]
        )));
    }
    let out_width = *model.widths().last().unwrap();
    if data.classes > out_width {
        return Err(Error::shape(format!("{} classes but the model has {out_width} outputs", data.classes)));
    }
    let mut model = model;
    let mut batch_rng = stream(cfg.seed, Stream::Batches);
    let mut layer_rng = stream(cfg.seed, Stream::LayerSampling);
    let mut opt = Sgd::new(cfg.lr, cfg.momentum);
    let eval_x = eval_rows(data);
    let mut log = TrainLog::default();

    for epoch in 0..cfg.epochs {
        let (mut task_sum, mut total_sum, mut steps, mut skipped) = (0.0, 0.0, 0usize, 0usize);
        let (mut last_k, mut last_ss) = (0, None);
        for rows in epoch_batches(&mut batch_rng, data.len(), cfg.batch_size) {
            let (xb, yb) = gather(data, &rows);
            let mut eval = total_loss(&model, &xb, &yb, cfg, &mut layer_rng)?;
            if !eval.total.is_finite() || eval.grads.flatten().iter().any(|g| !g.is_finite()) {
                log.aborted = Some(format!("non-finite loss at epoch {epoch}, step {steps}"));
                return Ok((model, log));
            }
            if let Some(max) = cfg.max_grad_norm {
                let n = eval.grads.norm();
                if n > max {
                    eval.grads.scale(max / n);
                }
            }
            let before = model.clone();
            opt.step(&mut model, &eval.grads);
            if model.params().iter().any(|v| !v.is_finite()) {
                log.aborted = Some(format!("non-finite parameters after epoch {epoch}, step {steps}"));
                return Ok((before, log));
            }
            task_sum += eval.task;
            total_sum += eval.total;
            steps += 1;
            skipped += usize::from(eval.skipped);
            last_k = eval.layer;
            last_ss = eval.ss_smooth;
        }
        let train_acc = accuracy(&model.forward(&data.x)?.logits, &data.y);
        let val_acc = match val {
            Some(v) => Some(accuracy(&model.forward(&v.x)?.logits, &v.y)),
            None => None,
        };
        log.epochs.push(EpochLog {
            epoch,
            task_loss: task_sum / steps as f64,
            total_loss: total_sum / steps as f64,
            train_acc,
            val_acc,
            k: last_k,
            ss_smooth: last_ss,
            ss_hard: hidden_ss_rates(&model, &eval_x, cfg.grid_count, cfg.normalizer)?,
            skipped_steps: skipped,
        });
    }
    Ok((model, log))
}

/// Trains without the penalty and returns the hard SS_rate of each hidden
/// layer on the first [`EVAL_ROWS`] training rows.
pub fn calibrate_gamma(model: Mlp, data: &Dataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
    if cfg.alpha != 0.0 {
        return Err(Error::invalid("calibration runs must have alpha = 0"));
    }
    let (trained, log) = train(model, data, None, cfg)?;
    if let Some(reason) = log.aborted {
        return Err(Error::Diverged(reason));
    }
    hidden_ss_rates(&trained, &eval_rows(data), cfg.grid_count, cfg.normalizer)
}

/// Mean over hidden layers of `|SS_hard - gamma|` on the evaluation rows.
pub fn mean_target_gap(m: &Mlp, data: &Dataset, cfg: &TrainConfig) -> Result<f64> {
    let ss = hidden_ss_rates(m, &eval_rows(data), cfg.grid_count, cfg.normalizer)?;
    Ok(ss.iter().enumerate().map(|(k, v)| (v - cfg.gamma_for(k)).abs()).sum::<f64>() / ss.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub widths: Vec<usize>,
    pub activation: crate::trainer::Activation,
    /// `[rows, cols]` of each weight followed by `[len]` of its bias, in file order.
    pub shapes: Vec<Vec<usize>>,
    pub param_count: usize,
    pub dtype: String,
    pub byte_order: String,
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    name.into()
}

/// Writes little-endian f64 parameters to `path` and shape metadata to `path.json`.
pub fn save_checkpoint(m: &Mlp, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = m.params().iter().flat_map(|v| v.to_le_bytes()).collect();
    let mut shapes = Vec::new();
    for (w, b) in m.weights().iter().zip(m.biases()) {
        shapes.push(vec![w.nrows(), w.ncols()]);
        shapes.push(vec![b.len()]);
    }
    let meta = CheckpointMeta {
        widths: m.widths().to_vec(),
        activation: m.activation(),
        shapes,
        param_count: m.param_count(),
        dtype: "f64".into(),
        byte_order: "little".into(),
    };
    atomic_write(path, &bytes)?;
    atomic_write(&sidecar(path), serde_json::to_string_pretty(&meta)?.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Mlp> {
    let meta: CheckpointMeta = serde_json::from_slice(&std::fs::read(sidecar(path))?)?;
    let bytes = std::fs::read(path)?;
    if bytes.len() != meta.param_count * 8 {
        return Err(Error::Parse(format!(
            "checkpoint holds {} bytes, sidecar expects {} parameters",
            bytes.len(),
            meta.param_count
        )));
    }
    let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let mut m = Mlp::zeros(&meta.widths, meta.activation)?;
    m.set_params(&values)?;
    Ok(m)
}

/// Largest relative error between analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// `|a - n| / max(|a|, |n|)`, over entries where `max(|a|, |n|) > floor`.
pub fn compare_gradients(analytic: &[f64], numeric: &[f64], floor: f64) -> GradCheck {
    let mut out = GradCheck { max_rel_error: 0.0, checked: 0, skipped: 0 };
    for (&a, &n) in analytic.iter().zip(numeric) {
        let scale = a.abs().max(n.abs());
        if scale <= floor {
            out.skipped += 1;
            continue;
        }
        out.checked += 1;
        out.max_rel_error = out.max_rel_error.max((a - n).abs() / scale);
    }
    out
}

/// Central-difference check of every parameter gradient of [`loss_on_layer`].
pub fn check_model_gradients(
    m: &Mlp,
    x: &DMatrix<f64>,
    y: &[usize],
    cfg: &TrainConfig,
    layer: usize,
    h: f64,
) -> Result<GradCheck> {
    let analytic = loss_on_layer(m, x, y, cfg, layer)?.grads.flatten();
    let base = m.params();
    let mut probe = m.clone();
    let mut numeric = Vec::with_capacity(base.len());
    let mut p = base.clone();
    for i in 0..base.len() {
        p[i] = base[i] + h;
        probe.set_params(&p)?;
        let up = loss_on_layer(&probe, x, y, cfg, layer)?.total;
        p[i] = base[i] - h;
        probe.set_params(&p)?;
        let down = loss_on_layer(&probe, x, y, cfg, layer)?.total;
        p[i] = base[i];
        numeric.push((up - down) / (2.0 * h));
    }
    Ok(compare_gradients(&analytic, &numeric, 1e-8))
}
