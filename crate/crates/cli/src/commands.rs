use std::path::Path;

use nalgebra::DMatrix;
use selfsim::boxcover::{
    bfs_all_pairs, burning_box_cover, db_from_counts, edge_list_text, exact_min_cover, greedy_box_cover,
    radius_burning_cover, read_edge_list, SimpleGraph, EXACT_MAX_NODES,
};
use selfsim::embed::{classical_mds, coords_csv, scatter_svg};
use selfsim::featnet::{
    distance_matrix, feature_matrix_from_tensor, to_feature_matrix, DistanceMatrix, FeatureMatrix, Layout,
};
use selfsim::fractal::{box_curve, ss_rate, CurveMode, CurveReport, DimFit, ThresholdGrid};
use selfsim::invariance::{geom_invariance, stat_invariance};
use selfsim::io::{
    read_dataset_csv, read_matrix_csv, read_npy, synth_blobs, synth_points, write_dataset_csv, write_matrix_csv,
    write_npy, Dataset, Dtype, NpyArray, PointKind,
};
use selfsim::selfcheck::run_selfcheck;
use selfsim::trainer::{calibrate_gamma, save_checkpoint, train, Mlp, EVAL_ROWS};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::*;
use crate::config::{ensure_dir, load, out_path, write_json, write_manifest, write_text};
use crate::error::{CliError, CliResult};
use crate::params::*;
use crate::plot::curve_svg;

struct Ctx<'a> {
    config: Option<&'a Path>,
    out_dir: &'a Path,
}

impl Ctx<'_> {
    fn resolve<P: DeserializeOwned + Default>(&self, command: &str, apply: impl FnOnce(&mut P)) -> CliResult<P> {
        let mut p = load(self.config, command)?;
        apply(&mut p);
        Ok(p)
    }
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    let ctx = Ctx { config: cli.config.as_deref(), out_dir: &cli.out_dir };
    match cli.command {
        Command::Ssrate(a) => ssrate(&ctx, ctx.resolve("ssrate", |p| a.apply(p))?),
        Command::Boxcurve(a) => boxcurve(&ctx, ctx.resolve("boxcurve", |p| a.apply(p))?),
        Command::Invariance(InvarianceCommand::Stat(a)) => stat(&ctx, ctx.resolve("invariance stat", |p| a.apply(p))?),
        Command::Invariance(InvarianceCommand::Geom(a)) => geom(&ctx, ctx.resolve("invariance geom", |p| a.apply(p))?),
        Command::Embed(a) => embed(&ctx, ctx.resolve("embed", |p| a.apply(p))?),
        Command::Boxcover(a) => boxcover(&ctx, ctx.resolve("boxcover", |p| a.apply(p))?),
        Command::Train(a) => train_cmd(&ctx, ctx.resolve("train", |p| a.apply(p))?),
        Command::Calibrate(a) => calibrate(&ctx, ctx.resolve("calibrate", |p| a.apply(p))?),
        Command::Gradcheck(a) => gradcheck(&ctx, ctx.resolve("gradcheck", |p| a.apply(p))?),
        Command::Synth(SynthCommand::Points(a)) => points(&ctx, ctx.resolve("synth points", |p| a.apply(p))?),
        Command::Synth(SynthCommand::Blobs(a)) => blobs(&ctx, ctx.resolve("synth blobs", |p| a.apply(p))?),
        Command::Synth(SynthCommand::Graph(a)) => graph(&ctx, ctx.resolve("synth graph", |p| a.apply(p))?),
    }
}

fn require(value: &str, what: &str) -> CliResult<()> {
    if value.is_empty() {
        return Err(CliError::Usage(format!("missing {what} (pass it as an argument or in --config)")));
    }
    Ok(())
}

fn is_npy(path: &str) -> bool {
    Path::new(path).extension().is_some_and(|e| e.eq_ignore_ascii_case("npy"))
}

fn load_matrix(path: &str) -> CliResult<DMatrix<f64>> {
    if is_npy(path) {
        Ok(read_npy(Path::new(path))?.to_matrix()?)
    } else {
        Ok(read_matrix_csv(Path::new(path))?)
    }
}

/// `.npy` tensors use `layout`; CSV tables are `B x D` (one row per sample).
fn load_features(path: &str, layout: Layout) -> CliResult<FeatureMatrix> {
    if is_npy(path) {
        let t = read_npy(Path::new(path))?.to_tensor(layout)?;
        Ok(feature_matrix_from_tensor(&t)?)
    } else {
        Ok(to_feature_matrix(&read_matrix_csv(Path::new(path))?)?)
    }
}

fn load_distances(path: &str, layout: Layout, precomputed: bool) -> CliResult<DistanceMatrix> {
    if precomputed {
        Ok(DistanceMatrix::from_matrix(load_matrix(path)?)?)
    } else {
        Ok(distance_matrix(&load_features(path, layout)?))
    }
}

fn curve_for(p: &CurveParams) -> CliResult<(DistanceMatrix, selfsim::fractal::BoxCurve)> {
    require(&p.input, "input file")?;
    let c = load_distances(&p.input, p.layout, p.distances)?;
    let grid = match (p.tz, p.tv) {
        (None, None) => ThresholdGrid::from_distances(&c, p.grid_count)?,
        (tz, tv) => {
            let max = c.max_off_diagonal();
            ThresholdGrid::new(tz.unwrap_or(0.0), tv.unwrap_or(if max > 0.0 { max } else { 1.0 }), p.grid_count)?
        }
    };
    let mode = match p.mode {
        CurveKind::Hard => CurveMode::Hard,
        CurveKind::Smooth => CurveMode::smooth(p.k)?,
    };
    let curve = box_curve(&c, &grid, mode)?;
    Ok((c, curve))
}

fn ssrate(ctx: &Ctx, p: CurveParams) -> CliResult<()> {
    let (_, curve) = curve_for(&p)?;
    let ss = ss_rate(&curve, p.normalizer)?;
    let out = json!({
        "input": p.input,
        "d": curve.d,
        "mode": curve.mode.name(),
        "k": curve.mode.k(),
        "normalizer_mode": p.normalizer,
        "tz": curve.grid.tz(),
        "tv": curve.grid.tv(),
        "grid_count": curve.grid.len(),
        "ss_rate": ss.value,
        "raw_integral": ss.raw_integral,
        "clamped": curve.clamped,
    });
    ensure_dir(ctx.out_dir)?;
    write_json(ctx.out_dir, "ssrate.json", &out)?;
    write_manifest(ctx.out_dir, "ssrate", &p, None, &["ssrate.json"])?;
    println!("ss_rate = {}", ss.value);
    Ok(())
}

fn boxcurve(ctx: &Ctx, p: CurveParams) -> CliResult<()> {
    let (_, curve) = curve_for(&p)?;
    let report = CurveReport::new(&curve, p.normalizer)?;
    ensure_dir(ctx.out_dir)?;
    write_json(ctx.out_dir, "boxcurve.json", &report)?;
    let mut outputs = vec!["boxcurve.json"];
    if p.plot {
        write_text(ctx.out_dir, "boxcurve.svg", &curve_svg(&curve)?)?;
        outputs.push("boxcurve.svg");
    }
    write_manifest(ctx.out_dir, "boxcurve", &p, None, &outputs)?;
    println!("ss_rate = {}, d_B = {}", report.ss_rate, report.d_b.map_or("n/a".into(), |v| v.to_string()));
    Ok(())
}

fn load_layers(inputs: &[String], layout: Layout) -> CliResult<Vec<FeatureMatrix>> {
    if inputs.len() < 2 {
        return Err(CliError::Usage(format!("need at least 2 layer files, got {}", inputs.len())));
    }
    inputs.iter().map(|f| load_features(f, layout)).collect()
}

fn stat(ctx: &Ctx, p: StatParams) -> CliResult<()> {
    let report = stat_invariance(&load_layers(&p.inputs, p.layout)?, p.hill)?;
    ensure_dir(ctx.out_dir)?;
    write_json(ctx.out_dir, "invariance_stat.json", &report)?;
    write_manifest(ctx.out_dir, "invariance stat", &p, None, &["invariance_stat.json"])?;
    println!("sigma = {}", report.sigma);
    Ok(())
}

fn geom(ctx: &Ctx, p: GeomParams) -> CliResult<()> {
    let report = geom_invariance(&load_layers(&p.inputs, p.layout)?, p.target_dim, p.reducer)?;
    ensure_dir(ctx.out_dir)?;
    write_json(ctx.out_dir, "invariance_geom.json", &report)?;
    write_manifest(ctx.out_dir, "invariance geom", &p, None, &["invariance_geom.json"])?;
    println!("delta = {}", report.delta);
    Ok(())
}

fn read_labels(path: &str) -> CliResult<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.parse::<usize>().map_err(|_| CliError::Usage(format!("{path}: line {}: '{l}' is not a group id", i + 1)))
        })
        .collect()
}

fn embed(ctx: &Ctx, p: EmbedParams) -> CliResult<()> {
    require(&p.input, "input file")?;
    let c = load_distances(&p.input, p.layout, p.distances)?;
    let e = classical_mds(&c, p.dim)?;
    let labels = p.labels.as_deref().map(read_labels).transpose()?;
    ensure_dir(ctx.out_dir)?;
    scatter_svg(&e, labels.as_deref(), &out_path(ctx.out_dir, "embedding.svg"))?;
    write_text(ctx.out_dir, "embedding.csv", &coords_csv(&e))?;
    write_json(ctx.out_dir, "embedding.json", &json!({ "d": c.d(), "dim": p.dim, "embedding": e }))?;
    write_manifest(ctx.out_dir, "embed", &p, None, &["embedding.svg", "embedding.csv", "embedding.json"])?;
    for w in &e.warnings {
        eprintln!("warning: {w}");
    }
    println!("stress = {}", e.stress);
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct CoverOutcome {
    count: usize,
    valid: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct CoverRow {
    theta: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    greedy: Option<CoverOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    burning: Option<CoverOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    radius_burning: Option<CoverOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<usize>,
}

fn fit_counts(rows: &[CoverRow], pick: impl Fn(&CoverRow) -> Option<usize>) -> Option<DimFit> {
    let (t, n): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|r| pick(r).map(|c| (r.theta as f64, c as f64))).unzip();
    if t.len() < 2 {
        return None;
    }
    db_from_counts(&t, &n).ok()
}

fn boxcover(ctx: &Ctx, p: BoxCoverParams) -> CliResult<()> {
    require(&p.edges, "edge list")?;
    if p.thetas.is_empty() {
        return Err(CliError::Usage("no box sizes given".into()));
    }
    let g = read_edge_list(Path::new(&p.edges))?;
    let dist = bfs_all_pairs(&g);
    let want = |a: CoverAlgorithm| p.algorithm == CoverAlgorithm::All || p.algorithm == a;
    let exact_ok = g.n() <= EXACT_MAX_NODES;
    if p.algorithm == CoverAlgorithm::Exact && !exact_ok {
        return Err(CliError::Usage(format!("exact cover is limited to {EXACT_MAX_NODES} nodes, graph has {}", g.n())));
    }
    let outcome = |c: selfsim::boxcover::BoxCover| CoverOutcome { valid: c.is_valid(&dist), count: c.count };
    let mut rows = Vec::new();
    for &theta in &p.thetas {
        rows.push(CoverRow {
            theta,
            greedy: want(CoverAlgorithm::Greedy).then(|| outcome(greedy_box_cover(&g, theta, p.seed))),
            burning: want(CoverAlgorithm::Burning).then(|| outcome(burning_box_cover(&g, theta, p.seed))),
            radius_burning: want(CoverAlgorithm::RadiusBurning)
                .then(|| outcome(radius_burning_cover(&g, theta, p.seed))),
            exact: if want(CoverAlgorithm::Exact) && exact_ok { Some(exact_min_cover(&g, theta)?) } else { None },
        });
    }
    let d_b = json!({
        "greedy": fit_counts(&rows, |r| r.greedy.as_ref().map(|c| c.count)),
        "burning": fit_counts(&rows, |r| r.burning.as_ref().map(|c| c.count)),
        "exact": fit_counts(&rows, |r| r.exact),
    });
    let out = json!({ "nodes": g.n(), "edges": g.edges().len(), "covers": rows, "d_B": d_b });
    ensure_dir(ctx.out_dir)?;
    write_json(ctx.out_dir, "boxcover.json", &out)?;
    write_manifest(ctx.out_dir, "boxcover", &p, Some(p.seed), &["boxcover.json"])?;
    for r in &rows {
        let show = |c: &Option<CoverOutcome>| c.as_ref().map_or("-".into(), |c| c.count.to_string());
        println!(
            "theta={} greedy={} burning={} radius_burning={} exact={}",
            r.theta,
            show(&r.greedy),
            show(&r.burning),
            show(&r.radius_burning),
            r.exact.map_or("-".into(), |v| v.to_string())
        );
    }
    Ok(())
}

fn split_tail(d: &Dataset, fraction: f64) -> CliResult<(Dataset, Option<Dataset>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(CliError::Usage(format!("val_fraction must be in [0, 1), got {fraction}")));
    }
    let n_val = (d.len() as f64 * fraction).floor() as usize;
    if n_val == 0 {
        return Ok((d.clone(), None));
    }
    let n_train = d.len() - n_val;
    let train = Dataset::new(d.x.rows(0, n_train).into_owned(), d.y[..n_train].to_vec(), d.classes)?;
    let val = Dataset::new(d.x.rows(n_train, n_val).into_owned(), d.y[n_train..].to_vec(), d.classes)?;
    Ok((train, Some(val)))
}

fn load_dataset(p: &DataParams) -> CliResult<(Dataset, Option<Dataset>)> {
    let full = match &p.csv {
        Some(path) => read_dataset_csv(Path::new(path))?,
        None => synth_blobs(p.classes, p.per_class, p.dim, p.separation, p.seed)?,
    };
    let full = match p.limit {
        Some(n) => full.head(n),
        None => full,
    };
    split_tail(&full, p.val_fraction)
}

fn model_for(p: &TrainParams, data: &Dataset) -> CliResult<Mlp> {
    let mut widths = vec![data.features()];
    widths.extend(&p.model.hidden);
    widths.push(data.classes);
    Ok(Mlp::new(&widths, p.model.activation, p.train.seed)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct GammaFile {
    gamma: Vec<f64>,
}

fn train_cmd(ctx: &Ctx, mut p: TrainParams) -> CliResult<()> {
    if let Some(path) = &p.gamma_file {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
        let g: GammaFile = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{path}: {e}")))?;
        p.train.gamma = g.gamma;
        p.gamma_file = None;
    }
    let (data, val) = load_dataset(&p.data)?;
    let model = model_for(&p, &data)?;
    let (model, log) = train(model, &data, val.as_ref(), &p.train)?;
    ensure_dir(ctx.out_dir)?;
    write_text(ctx.out_dir, "train_log.csv", &log.to_csv())?;
    write_text(ctx.out_dir, "train_log.json", &(log.to_json()? + "\n"))?;
    save_checkpoint(&model, &out_path(ctx.out_dir, "model.bin"))?;
    write_manifest(
        ctx.out_dir,
        "train",
        &p,
        Some(p.train.seed),
        &["train_log.csv", "train_log.json", "model.bin", "model.bin.json"],
    )?;
    if let Some(reason) = log.aborted {
        return Err(CliError::Failed(format!("training aborted: {reason}")));
    }
    if let Some(last) = log.epochs.last() {
        println!("epochs = {}, train_acc = {}, task_loss = {}", log.epochs.len(), last.train_acc, last.task_loss);
    }
    Ok(())
}

fn calibrate(ctx: &Ctx, p: TrainParams) -> CliResult<()> {
    if p.train.alpha != 0.0 {
        return Err(CliError::Usage(format!("calibrate needs alpha = 0, got {}", p.train.alpha)));
    }
    let (data, _) = load_dataset(&p.data)?;
    let model = model_for(&p, &data)?;
    let gamma = calibrate_gamma(model, &data, &p.train)?;
    let out = json!({
        "gamma": gamma,
        "eval_rows": data.len().min(EVAL_ROWS),
        "grid_count": p.train.grid_count,
        "normalizer_mode": p.train.normalizer,
    });
    ensure_dir(ctx.out_dir)?;
    write_json(ctx.out_dir, "gamma.json", &out)?;
    write_manifest(ctx.out_dir, "calibrate", &p, Some(p.train.seed), &["gamma.json"])?;
    println!("gamma = {gamma:?}");
    Ok(())
}

fn gradcheck(ctx: &Ctx, p: GradcheckParams) -> CliResult<()> {
    let report = run_selfcheck(&p)?;
    ensure_dir(ctx.out_dir)?;
    write_json(ctx.out_dir, "gradcheck.json", &report)?;
    write_manifest(ctx.out_dir, "gradcheck", &p, Some(p.seed), &["gradcheck.json"])?;
    println!("distance gradient max relative error = {:e}", report.distance_max_rel_error);
    println!("model gradient max relative error = {:e}", report.model_max_rel_error);
    if report.passed {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(CliError::Failed(format!("gradient check failed (tolerances {:e} / {:e})", p.distance_tol, p.model_tol)))
    }
}

fn points(ctx: &Ctx, p: PointsParams) -> CliResult<()> {
    let kind: PointKind = p.kind.parse()?;
    let pts = synth_points(kind, p.n, p.seed)?;
    ensure_dir(ctx.out_dir)?;
    let name = if p.npy {
        write_npy(&out_path(ctx.out_dir, "points.npy"), &NpyArray::from_matrix(&pts, Dtype::F8))?;
        "points.npy"
    } else {
        let header: Vec<String> = (0..pts.ncols()).map(|j| format!("x{j}")).collect();
        write_matrix_csv(&out_path(ctx.out_dir, "points.csv"), &pts, Some(&header))?;
        "points.csv"
    };
    write_manifest(ctx.out_dir, "synth points", &p, Some(p.seed), &[name])?;
    println!("wrote {} {kind} points", p.n);
    Ok(())
}

fn blobs(ctx: &Ctx, p: BlobsParams) -> CliResult<()> {
    let d = synth_blobs(p.classes, p.per_class, p.dim, p.separation, p.seed)?;
    ensure_dir(ctx.out_dir)?;
    write_dataset_csv(&out_path(ctx.out_dir, "blobs.csv"), &d)?;
    write_manifest(ctx.out_dir, "synth blobs", &p, Some(p.seed), &["blobs.csv"])?;
    println!("wrote {} rows", d.len());
    Ok(())
}

fn graph(ctx: &Ctx, p: GraphParams) -> CliResult<()> {
    let n = p.n;
    let too_small = |min: usize| -> CliResult<()> {
        if n < min {
            return Err(CliError::Usage(format!("{:?} graph needs n >= {min}, got {n}", p.kind)));
        }
        Ok(())
    };
    let g = match p.kind {
        GraphKind::Ring => {
            too_small(3)?;
            SimpleGraph::ring(n)
        }
        GraphKind::Path => {
            too_small(1)?;
            SimpleGraph::path(n)
        }
        GraphKind::Star => {
            too_small(2)?;
            SimpleGraph::star(n - 1)
        }
        GraphKind::Complete => {
            too_small(1)?;
            SimpleGraph::complete(n)
        }
        GraphKind::Random => {
            too_small(1)?;
            if !(0.0..=1.0).contains(&p.extra) {
                return Err(CliError::Usage(format!("extra must be in [0, 1], got {}", p.extra)));
            }
            SimpleGraph::random_connected(n, p.extra, p.seed)
        }
    };
    ensure_dir(ctx.out_dir)?;
    write_text(ctx.out_dir, "graph.edges", &edge_list_text(&g))?;
    write_manifest(ctx.out_dir, "synth graph", &p, Some(p.seed), &["graph.edges"])?;
    println!("wrote {} edges", g.edges().len());
    Ok(())
}
