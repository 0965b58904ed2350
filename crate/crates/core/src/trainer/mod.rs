//! Multilayer perceptron training with an optional self-similarity penalty.

pub mod mlp;
pub mod train;

pub use mlp::{accuracy, predict, task_loss, Activation, ForwardCache, Gradients, Mlp};
pub use train::{
    calibrate_gamma, check_model_gradients, compare_gradients, epoch_batches, gather, hidden_ss_rates, load_checkpoint,
    loss_on_layer, mean_target_gap, sample_layer, save_checkpoint, total_loss, train, CheckpointMeta, EpochLog,
    GradCheck, LossEval, Sgd, TrainConfig, TrainLog, EVAL_ROWS,
};
