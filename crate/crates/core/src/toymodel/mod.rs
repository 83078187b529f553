//! Self-contained heteroscedastic MC-dropout regressor on synthetic 1-D data.

mod data;
mod net;
mod train;
mod unbiased;

pub use data::{conditional_mean, generate, Dataset, Splits, SyntheticSpec};
pub use net::{batch_loss_grad, sample_loss, Cache, Masks, Mlp, INIT_LOG_VAR};
pub use train::{
    intra_training_calibrate, mc_predict, train, EpochStats, PlateauSchedule, Snapshot, ToyModel,
    ToyModelConfig, TrainingTrace,
};
pub use unbiased::{simulate_unbiasedness, UnbiasednessResult};
