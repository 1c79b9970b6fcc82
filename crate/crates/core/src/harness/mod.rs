//! Run configuration, toy data, optimization, and verification routines.

mod config;
mod dataset;
mod gradcheck;
mod optim;
mod train;

pub use config::{Architecture, DataSource, OptimConfig, RunConfig, SEED_ENV};
pub use dataset::{Split, ToyDataset};
pub use gradcheck::{gradcheck, GradcheckEntry, GradcheckOptions, GradcheckReport};
pub use optim::AdamW;
pub use train::{evaluate, metrics_csv, train, StepMetrics, TrainOutcome};

/// Loads the configured dataset.
pub fn load_dataset(cfg: &RunConfig) -> crate::Result<ToyDataset> {
    match &cfg.data {
        DataSource::Shapes { samples, noise } => ToyDataset::shapes(*samples, cfg.input, *noise, cfg.seed, Split::Train),
        DataSource::Directory(dir) => ToyDataset::from_directory(dir, cfg.input, Split::Train),
    }
}
