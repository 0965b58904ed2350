use nalgebra::DMatrix;
use selfsim::featnet::{distance_matrix, feature_matrix_from_tensor, to_feature_matrix, Layout};
use selfsim::fractal::{box_curve, ss_rate, CurveMode, NormalizerMode, ThresholdGrid};
use selfsim::invariance::{stat_invariance, HillCount};
use selfsim::io::{read_npy, synth_points, write_npy, Dtype, NpyArray, PointKind};
use selfsim::trainer::{load_checkpoint, save_checkpoint, train, Activation, Mlp, TrainConfig};

#[test]
fn npy_activations_to_ss_rate() {
    let dir = tempfile::tempdir().unwrap();
    let acts = synth_points(PointKind::UniformCube { dim: 12 }, 40, 3).unwrap();
    let path = dir.path().join("layer.npy");
    write_npy(&path, &NpyArray::from_matrix(&acts, Dtype::F4)).unwrap();

    let tensor = read_npy(&path).unwrap().to_tensor(Layout::Bd).unwrap();
    let f = feature_matrix_from_tensor(&tensor).unwrap();
    assert_eq!((f.d(), f.b()), (12, 40));
    let c = distance_matrix(&f);
    let grid = ThresholdGrid::from_distances(&c, 64).unwrap();
    let hard = ss_rate(&box_curve(&c, &grid, CurveMode::Hard).unwrap(), NormalizerMode::Bounded).unwrap().value;
    let smooth = ss_rate(&box_curve(&c, &grid, CurveMode::smooth(50.0).unwrap()).unwrap(), NormalizerMode::Bounded)
        .unwrap()
        .value;
    assert!((0.0..=1.0).contains(&hard) && (0.0..=1.0).contains(&smooth));
}

#[test]
fn ss_rate_ignores_channel_order() {
    let acts = synth_points(PointKind::UniformCube { dim: 9 }, 30, 8).unwrap();
    let reversed = DMatrix::from_fn(30, 9, |i, j| acts[(i, 8 - j)]);
    let rate = |m: &DMatrix<f64>| {
        let c = distance_matrix(&to_feature_matrix(m).unwrap());
        let grid = ThresholdGrid::from_distances(&c, 64).unwrap();
        ss_rate(&box_curve(&c, &grid, CurveMode::Hard).unwrap(), NormalizerMode::Bounded).unwrap().value
    };
    assert_eq!(rate(&acts), rate(&reversed));
}

#[test]
fn identical_layers_have_zero_spread() {
    let acts = synth_points(PointKind::UniformCube { dim: 10 }, 50, 2).unwrap();
    let f = to_feature_matrix(&acts).unwrap();
    let r = stat_invariance(&[f.clone(), f], HillCount::Retained).unwrap();
    assert_eq!(r.sigma, 0.0);
}

#[test]
fn trained_model_survives_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = selfsim::io::synth_blobs(3, 20, 2, 5.0, 4).unwrap();
    let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
    let (model, log) = train(Mlp::new(&[2, 8, 8, 3], Activation::Tanh, 4).unwrap(), &data, None, &cfg).unwrap();
    assert_eq!(log.epochs.len(), 3);
    let path = dir.path().join("m.bin");
    save_checkpoint(&model, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.params(), model.params());
    assert_eq!(back.activation(), Activation::Tanh);
}
