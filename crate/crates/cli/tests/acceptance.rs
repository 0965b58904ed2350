//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use selfsim::boxcover::{
    bfs_all_pairs, burning_box_cover, db_from_counts, exact_min_cover, greedy_box_cover, SimpleGraph,
};
use selfsim::embed::classical_mds;
use selfsim::featnet::{distance_matrix, to_feature_matrix, DistanceMatrix};
use selfsim::fractal::{box_count, box_curve, pf, ss_rate, BoxCurve, CurveMode, NormalizerMode, ThresholdGrid};
use selfsim::invariance::{corr_dim, power_law_mle, HillCount, Spectrum};
use selfsim::io::{synth_blobs, synth_points, PointKind};
use selfsim::rng::splitmix64;
use selfsim::selfcheck::{run_selfcheck, SelfCheckConfig};
use selfsim::trainer::{
    calibrate_gamma, epoch_batches, gather, mean_target_gap, task_loss, train, Activation, Mlp, Sgd, TrainConfig,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

/// Uniform `[0, 1)` draws independent of the library's RNG streams.
struct Uniform(u64);

impl Uniform {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_add(1);
        (splitmix64(self.0) >> 11) as f64 / (1u64 << 53) as f64
    }

    fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + ((self.next() * (hi - lo + 1) as f64) as usize).min(hi - lo)
    }
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, start: Instant, detail: String) -> Outcome {
    let t = start.elapsed();
    check(t < limit, format!("{detail}; {:.2}s (limit {}s)", t.as_secs_f64(), limit.as_secs()))
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let cfg = SelfCheckConfig::default();
    if cfg.cases != 5 || cfg.nodes != 8 || cfg.distance_step != 1e-5 || cfg.model_widths != [2, 16, 16, 3] {
        return Err(format!("self-check defaults drifted: {cfg:?}"));
    }
    let r = run_selfcheck(&cfg).map_err(err)?;
    let ok = r.distance_max_rel_error <= 1e-4 && r.model_max_rel_error <= 1e-3;
    let detail = format!(
        "distance max rel err {:.2e} (<= 1e-4), model max rel err {:.2e} (<= 1e-3)",
        r.distance_max_rel_error, r.model_max_rel_error
    );
    check(ok, detail.clone())?;
    within(Duration::from_secs(10), start, detail)
}

fn monotone(v: &[f64], increasing: bool) -> bool {
    v.windows(2).all(|w| if increasing { w[0] <= w[1] } else { w[0] >= w[1] })
}

fn metric_bounds() -> Outcome {
    let start = Instant::now();
    let mut u = Uniform(2024);
    let (mut lo_ss, mut hi_ss) = (f64::INFINITY, f64::NEG_INFINITY);
    for case in 0..100 {
        let d = u.range(4, 64);
        let b = u.range(2, 128);
        let h = DMatrix::from_fn(b, d, |_, _| u.next() * 2.0 - 1.0);
        let c = distance_matrix(&to_feature_matrix(&h).map_err(err)?);
        let grid = ThresholdGrid::from_distances(&c, 64).map_err(err)?;
        for mode in [CurveMode::Hard, CurveMode::Smooth { k: 50.0 }] {
            let curve = box_curve(&c, &grid, mode).map_err(err)?;
            let ss = ss_rate(&curve, NormalizerMode::Bounded).map_err(err)?.value;
            if !(0.0..=1.0).contains(&ss) {
                return Err(format!("case {case} (D={d}, B={b}, {}): SS_rate {ss} outside [0, 1]", mode.name()));
            }
            if !monotone(&curve.p, true) || !monotone(&curve.n, false) {
                return Err(format!("case {case} (D={d}, B={b}, {}): p or N not monotone", mode.name()));
            }
            lo_ss = lo_ss.min(ss);
            hi_ss = hi_ss.max(ss);
        }
        let at0 = box_count(0.0, d).map_err(err)?;
        let at1 = box_count(1.0, d).map_err(err)?;
        if (at0 - d as f64).abs() > 1e-12 || (at1 - 1.0).abs() > 1e-12 {
            return Err(format!("D={d}: box_count(0)={at0}, box_count(1)={at1}"));
        }
    }
    within(Duration::from_secs(30), start, format!("100 matrices x 2 modes, SS_rate in [{lo_ss:.4}, {hi_ss:.4}]"))
}

fn degenerate_cases() -> Outcome {
    let h = DMatrix::from_element(16, 10, 0.37);
    let c = distance_matrix(&to_feature_matrix(&h).map_err(err)?);
    let grid = ThresholdGrid::from_distances(&c, 64).map_err(err)?;
    let rate = |mode| -> Result<f64, String> {
        Ok(ss_rate(&box_curve(&c, &grid, mode).map_err(err)?, NormalizerMode::Bounded).map_err(err)?.value)
    };
    let worst = (rate(CurveMode::Hard)? - 1.0).abs();
    let smooth = rate(CurveMode::Smooth { k: 50.0 })?;
    let grid = ThresholdGrid::new(0.0, 2.0, 64).map_err(err)?;
    let d = 12;
    let line = grid.thetas().iter().map(|&t| pf(t, &grid, d)).collect::<Result<Vec<_>, _>>().map_err(err)?;
    let on_ref = BoxCurve::from_log_counts(grid, d, line).map_err(err)?;
    let zero = ss_rate(&on_ref, NormalizerMode::Bounded).map_err(err)?.value;
    check(
        worst <= 1e-9 && zero == 0.0,
        format!(
            "identical features, hard curve |SS_rate - 1| = {worst:.1e} (<= 1e-9; smooth k=50 gives {smooth:.4}); \
             curve on reference SS_rate = {zero}"
        ),
    )
}

fn box_cover_oracle() -> Outcome {
    let start = Instant::now();
    let mut u = Uniform(77);
    let mut comparisons = 0;
    for seed in 0..100u64 {
        let n = u.range(2, 12);
        let g = SimpleGraph::random_connected(n, 0.1 + 0.3 * u.next(), seed);
        let dist = bfs_all_pairs(&g);
        for theta in 1..=3 {
            let exact = exact_min_cover(&g, theta).map_err(err)?;
            let greedy = greedy_box_cover(&g, theta, seed);
            let burning = burning_box_cover(&g, theta, seed);
            if !greedy.is_valid(&dist) || !burning.is_valid(&dist) {
                return Err(format!("graph {seed} (n={n}), theta {theta}: invalid cover"));
            }
            if greedy.count < exact || burning.count < exact {
                return Err(format!(
                    "graph {seed} (n={n}), theta {theta}: greedy {} / burning {} below exact {exact}",
                    greedy.count, burning.count
                ));
            }
            comparisons += 1;
        }
    }
    let p4 = greedy_box_cover(&SimpleGraph::path(4), 1, 0).count;
    check(p4 == 2, format!("P4 at theta=1: {p4} boxes"))?;
    within(
        Duration::from_secs(60),
        start,
        format!("{comparisons} graph/theta pairs valid and >= exact; P4 theta=1 -> 2"),
    )
}

fn fractal_dimensions() -> Outcome {
    let start = Instant::now();
    let ring = SimpleGraph::ring(64);
    let thetas: Vec<f64> = (1..=32).map(f64::from).collect();
    let counts: Vec<f64> = (1..=32).map(|t| greedy_box_cover(&ring, t, 0).count as f64).collect();
    let ring_db = db_from_counts(&thetas, &counts).map_err(err)?.d_b;
    let dim = |kind: PointKind, seed: u64| -> Result<f64, String> {
        corr_dim(&synth_points(kind, 1000, seed).map_err(err)?).map(|f| f.d_corr).map_err(err)
    };
    let segment = dim(PointKind::Segment, 1)?;
    let square = dim(PointKind::UniformCube { dim: 2 }, 2)?;
    let cantor = dim(PointKind::Cantor { depth: 7 }, 3)?;
    let ok = (ring_db - 1.0).abs() <= 0.15
        && (segment - 1.0).abs() <= 0.15
        && (square - 2.0).abs() <= 0.25
        && (cantor - 2f64.ln() / 3f64.ln()).abs() <= 0.12;
    let detail = format!("ring d_B {ring_db:.3}; segment {segment:.3}; square {square:.3}; cantor {cantor:.3}");
    check(ok, detail.clone())?;
    within(Duration::from_secs(60), start, detail)
}

fn pareto(gamma: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut u = Uniform(seed);
    (0..n).map(|_| (1.0 - u.next()).powf(-1.0 / (gamma - 1.0))).collect()
}

fn power_law() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (i, gamma) in [1.5, 2.5, 3.5].into_iter().enumerate() {
        let s = Spectrum::from_values(&pareto(gamma, 10_000, 100 + i as u64)).map_err(err)?;
        let est = power_law_mle(&s, HillCount::Retained).map_err(err)?;
        ok &= (est - gamma).abs() <= 0.05 * gamma;
        parts.push(format!("{gamma} -> {est:.4}"));
    }
    let e = std::f64::consts::E;
    let hand =
        power_law_mle(&Spectrum::from_values(&[e * e, e, 1.0]).map_err(err)?, HillCount::Retained).map_err(err)?;
    ok &= (hand - 2.0).abs() <= 1e-12;
    check(ok, format!("{}; {{e^2, e, 1}} -> {hand}", parts.join(", ")))
}

fn mds_fidelity() -> Outcome {
    let tri =
        DistanceMatrix::from_matrix(DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 })).map_err(err)?;
    let stress = classical_mds(&tri, 2).map_err(err)?.stress;

    let mut u = Uniform(5);
    let n = 30;
    let plane = DMatrix::from_fn(n, 2, |_, _| u.next() * 4.0 - 2.0);
    // Orthonormal pair in R^10 via Gram-Schmidt.
    let mut a: Vec<f64> = (0..10).map(|_| u.next() - 0.5).collect();
    let mut b: Vec<f64> = (0..10).map(|_| u.next() - 0.5).collect();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    a.iter_mut().for_each(|v| *v /= na);
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    b.iter_mut().zip(&a).for_each(|(v, w)| *v -= dot * w);
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    b.iter_mut().for_each(|v| *v /= nb);
    let ambient = DMatrix::from_fn(n, 10, |i, k| plane[(i, 0)] * a[k] + plane[(i, 1)] * b[k] + 0.25);
    let c = DistanceMatrix::euclidean_rows(&ambient, 1.0);
    let e = classical_mds(&c, 2).map_err(err)?;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = e.coords[(i, 0)] - e.coords[(j, 0)];
            let dy = e.coords[(i, 1)] - e.coords[(j, 1)];
            worst = worst.max(((dx * dx + dy * dy).sqrt() - c.get(i, j)).abs());
        }
    }
    check(
        stress <= 1e-6 && worst <= 1e-6,
        format!("triangle stress {stress:.1e}; planar-in-10D max distance error {worst:.1e}"),
    )
}

fn training_demo() -> Outcome {
    let start = Instant::now();
    let seed = 1;
    let data = synth_blobs(3, 167, 2, 5.0, seed).map_err(err)?.head(500);
    let widths = [2, 32, 32, 3];
    let base_cfg = TrainConfig { seed, ..TrainConfig::default() };
    let (baseline, _) =
        train(Mlp::new(&widths, Activation::Relu, seed).map_err(err)?, &data, None, &base_cfg).map_err(err)?;

    let calib_cfg = TrainConfig { seed: seed + 100, ..TrainConfig::default() };
    let gamma = calibrate_gamma(Mlp::new(&widths, Activation::Relu, seed + 100).map_err(err)?, &data, &calib_cfg)
        .map_err(err)?;
    let s2_cfg = TrainConfig { alpha: 1e-4, gamma: gamma.clone(), seed, ..TrainConfig::default() };
    let (s2con, log) =
        train(Mlp::new(&widths, Activation::Relu, seed).map_err(err)?, &data, None, &s2_cfg).map_err(err)?;
    if let Some(reason) = log.aborted {
        return Err(format!("penalized run aborted: {reason}"));
    }

    let acc = |m: &Mlp| -> Result<f64, String> {
        Ok(selfsim::trainer::accuracy(&m.forward(&data.x).map_err(err)?.logits, &data.y))
    };
    let (acc_base, acc_s2) = (acc(&baseline)?, acc(&s2con)?);
    let gap_cfg = TrainConfig { gamma: gamma.clone(), ..TrainConfig::default() };
    let gap_base = mean_target_gap(&baseline, &data, &gap_cfg).map_err(err)?;
    let gap_s2 = mean_target_gap(&s2con, &data, &gap_cfg).map_err(err)?;
    let ok = acc_base >= 0.95 && acc_base - acc_s2 <= 0.02 && gap_s2 < gap_base;
    let detail = format!(
        "gamma {gamma:.4?}; accuracy baseline {acc_base:.3} / penalized {acc_s2:.3}; \
         mean |SS_hard - gamma| baseline {gap_base:.6} / penalized {gap_s2:.6}"
    );
    check(ok, detail.clone())?;
    within(Duration::from_secs(300), start, detail)
}

fn alpha_zero_equivalence() -> Outcome {
    let seed = 9;
    let data = synth_blobs(3, 167, 2, 5.0, seed).map_err(err)?.head(500);
    let widths = [2, 32, 32, 3];
    // 500 rows in batches of 10: one epoch is exactly 50 steps.
    let cfg =
        TrainConfig { alpha: 0.0, gamma: vec![0.3, 0.7], batch_size: 10, epochs: 1, seed, ..TrainConfig::default() };
    let init = Mlp::new(&widths, Activation::Relu, seed).map_err(err)?;
    let (trained, log) = train(init.clone(), &data, None, &cfg).map_err(err)?;

    let mut manual = init;
    let mut opt = Sgd::new(cfg.lr, cfg.momentum);
    let mut rng = selfsim::rng::stream(seed, selfsim::rng::Stream::Batches);
    let batches = epoch_batches(&mut rng, data.len(), cfg.batch_size);
    let mut task_sum = 0.0;
    for rows in &batches {
        let (x, y) = gather(&data, rows);
        let cache = manual.forward(&x).map_err(err)?;
        let (loss, d_logits) = task_loss(&cache.logits, &y).map_err(err)?;
        task_sum += loss;
        let g = manual.backward(&cache, &d_logits, &[]);
        opt.step(&mut manual, &g);
    }
    let a: Vec<u64> = trained.params().iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = manual.params().iter().map(|v| v.to_bits()).collect();
    let loss_equal = log.epochs[0].task_loss.to_bits() == (task_sum / batches.len() as f64).to_bits();
    check(
        batches.len() == 50 && a == b && loss_equal,
        format!(
            "{} steps; {} parameters bit-identical: {}; mean task loss bit-identical: {loss_equal}",
            batches.len(),
            a.len(),
            a == b
        ),
    )
}

struct Cli {
    bin: PathBuf,
    root: PathBuf,
}

impl Cli {
    fn run(&self, args: &[&str]) -> Result<(), String> {
        let out = Command::new(&self.bin).args(args).current_dir(&self.root).output().map_err(err)?;
        if out.status.success() {
            Ok(())
        } else {
            Err(format!("selfsim {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
        }
    }

    fn dir(&self, name: &str) -> String {
        self.root.join(name).to_string_lossy().into_owned()
    }
}

fn manifest_outputs(dir: &Path) -> Result<Vec<String>, String> {
    let text = std::fs::read_to_string(dir.join("manifest.json")).map_err(err)?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(err)?;
    let outputs = v["outputs"].as_array().ok_or("manifest without outputs")?;
    let mut names: Vec<String> = outputs.iter().filter_map(|o| o.as_str().map(String::from)).collect();
    names.push("manifest.json".into());
    Ok(names)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let cli = Cli { bin: PathBuf::from(env!("CARGO_BIN_EXE_selfsim")), root: tmp.path().to_path_buf() };
    let input = |d: &str, f: &str| cli.root.join(d).join(f).to_string_lossy().into_owned();

    cli.run(&[
        "synth",
        "points",
        "--kind",
        "uniform_cube:6",
        "--n",
        "40",
        "--seed",
        "1",
        "--out-dir",
        &cli.dir("acts"),
    ])?;
    cli.run(&["synth", "graph", "--kind", "random", "--n", "10", "--seed", "2", "--out-dir", &cli.dir("graph")])?;
    for (i, name) in ["wide0", "wide1", "wide2"].iter().enumerate() {
        let seed = (10 + i).to_string();
        cli.run(&[
            "synth",
            "points",
            "--kind",
            "uniform_cube:60",
            "--n",
            "20",
            "--seed",
            &seed,
            "--out-dir",
            &cli.dir(name),
        ])?;
    }
    let acts = input("acts", "points.csv");
    let wide: Vec<String> = (0..3).map(|i| input(&format!("wide{i}"), "points.csv")).collect();
    let edges = input("graph", "graph.edges");

    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("ssrate", vec!["ssrate", &acts, "--mode", "smooth"]),
        ("boxcurve", vec!["boxcurve", &acts, "--plot"]),
        ("stat", vec!["invariance", "stat", &wide[0], &wide[1], &wide[2]]),
        ("geom", vec!["invariance", "geom", &wide[0], &wide[1], &wide[2]]),
        ("embed", vec!["embed", &acts]),
        ("boxcover", vec!["boxcover", &edges, "--theta", "1,2,3"]),
        ("train", vec!["train", "--epochs", "3", "--alpha", "1e-4", "--gamma", "0.3"]),
        ("calibrate", vec!["calibrate", "--epochs", "3"]),
        ("gradcheck", vec!["gradcheck", "--cases", "2"]),
        ("points", vec!["synth", "points", "--kind", "cantor", "--n", "200", "--npy"]),
        ("blobs", vec!["synth", "blobs", "--seed", "4"]),
        ("graph", vec!["synth", "graph", "--kind", "ring", "--n", "16"]),
    ];
    let mut compared = 0;
    for (name, args) in &runs {
        let first = cli.dir(&format!("{name}_a"));
        let second = cli.dir(&format!("{name}_b"));
        let mut a = args.clone();
        a.extend(["--out-dir", &first]);
        cli.run(&a)?;
        let manifest = format!("{first}/manifest.json");
        let parts: Vec<&str> =
            args.iter().copied().take_while(|s| !s.starts_with('-') && !s.starts_with('/')).collect();
        let mut b = parts.clone();
        b.extend(["--config", &manifest, "--out-dir", &second]);
        cli.run(&b)?;
        for file in manifest_outputs(Path::new(&first))? {
            let x = std::fs::read(Path::new(&first).join(&file)).map_err(err)?;
            let y = std::fs::read(Path::new(&second).join(&file)).map_err(|e| format!("{name}/{file}: {e}"))?;
            if x != y {
                return Err(format!("{name}: {file} differs between runs"));
            }
            compared += 1;
        }
    }
    Ok(format!("{} subcommands rerun from their manifests, {compared} files byte-identical", runs.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient correctness", gradient_correctness),
        ("metric bounds and endpoints", metric_bounds),
        ("exact degenerate cases", degenerate_cases),
        ("box-cover oracle agreement", box_cover_oracle),
        ("fractal-dimension oracles", fractal_dimensions),
        ("power-law MLE", power_law),
        ("MDS fidelity", mds_fidelity),
        ("training demo", training_demo),
        ("alpha=0 equivalence", alpha_zero_equivalence),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
