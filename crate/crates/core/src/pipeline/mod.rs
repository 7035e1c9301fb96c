//! Toy end-to-end segmentation: encoder, feature aggregation, heads, the
//! graph reasoning module, Dice losses, Adam training and metrics.

mod checkpoint;
mod config;
mod loss;
mod metrics;
mod model;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{PipelineConfig, ENCODER_LEVELS};
pub use loss::{
    dice_loss, total_loss, traced_dice_loss, traced_softmax2, traced_total_loss, LossVars,
    DICE_SMOOTH,
};
pub use metrics::{
    boundary_band, default_band, evaluate, metric_bacc, metric_biou, metric_dice, BalancedAccuracy,
    ClassMetrics, Evaluation, SampleMetrics,
};
pub use model::{
    check_shapes, encoder_forward, feature_aggregation, forward, heads_forward, image_column,
    predict_mask, traced_aggregation, traced_encoder, traced_forward, traced_heads, Aggregation,
    AggregationBlock, Forward, Linear, ModelParams, Prediction,
};
pub use train::{
    loss_and_gradient, traced_batch_loss, train, train_step, BatchSchedule, Example, ModelState,
    StepLoss, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON,
};
