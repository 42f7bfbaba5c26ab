//! Multilayer perceptron classifier written directly on `ndarray`.

pub mod data;
pub mod network;
pub mod train;

pub use data::{load_cifar10_binary, synthetic_dataset, Dataset, SplitDataset};
pub use network::{
    accuracy, backward, cross_entropy, forward, he_normal_init, ForwardCache, MlpArchitecture,
    MlpParams,
};
pub use train::{
    eta_low_ablation, train, train_many, AblationRow, AblationTable, CurvePoint, TrainPolicy,
    TrainingCurve,
};
