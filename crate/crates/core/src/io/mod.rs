//! CSV datasets and run configuration files.

mod dataset;
mod settings;

pub use dataset::{
    load_dataset, read_dataset, read_grid, write_dataset, BasisSpec, ColumnSpec, CovariateSchema, DatasetSchema,
};
pub use settings::{
    CovariateSettings, GridFile, ModelKind, OneOrMany, Settings, DEFAULT_ACTIVATION, DEFAULT_BATCH_SIZE,
    DEFAULT_DROPOUT, DEFAULT_EPOCHS, DEFAULT_HIDDEN, DEFAULT_INNER_FOLDS, DEFAULT_LABEL, DEFAULT_LEARN_RATE,
    DEFAULT_PATIENCE, DEFAULT_SMOOTHING, DEFAULT_VALIDATION_SPLIT, DEFAULT_WEIGHT_BASIS,
};
