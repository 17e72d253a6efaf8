//! Hardware cost: a synthetic device standing in for on-board measurement,
//! the measurement CSV format, and the two cost predictors.

mod device;
mod lut;
mod mlp;
mod predictor;
mod records;

pub use device::{DeviceProfile, MetricKind, SyntheticDevice};
pub use lut::LutPredictor;
pub use mlp::{residuals, MlpPredictor, MlpTrainConfig, ResidualStats};
pub use predictor::Predictor;
pub use records::{
    load_measurements, read_measurements, sample_dataset, save_measurements, write_measurements,
    MeasurementRecord, MeasurementSet, MEASUREMENT_HEADER,
};
