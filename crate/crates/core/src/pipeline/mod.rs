//! Codec-proxy degradation, dataset construction, training, full-clip
//! enhancement and evaluation.

mod dataset;
mod degrade;
mod enhance;
mod synthetic;
mod train;

pub use dataset::{
    build_dataset, decode_dataset, encode_dataset, load_dataset, save_dataset, Augmentation, PatchPair, DATASET_VERSION,
};
pub use degrade::{degrade_clip, degrade_frame, DegradeSpec};
pub use enhance::{enhance_clip, enhance_clip_padded, evaluate, EvalColor};
pub use synthetic::synthetic_clip;
pub use train::{batch_gradients, heldout_psnr, mean_loss, train, train_from, EpochLog, TrainOutcome, TrainingConfig};
