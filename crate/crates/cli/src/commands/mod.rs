mod datasize;
mod fit;
mod kms;
mod predict;
mod select;
mod sweep;

pub use datasize::{cmd_datasize_sweep, covertree_with_size, datasize_sweep, DatasizeRow, DATASIZE_HEADER};
pub use fit::{cmd_fit, log_path, FitOutput};
pub use kms::{cmd_kms_demo, kms_demo, KmsRow, KMS_HEADER};
pub use predict::{cmd_predict, metrics_path, prediction_metrics, PredictionMetrics, Predictions};
pub use select::{cmd_select, select_points, SelectOutput, SelectionMetrics};
pub use sweep::{
    cmd_sweep_resolution, query_grid, sweep_kernel, sweep_resolution, synthetic_dataset, ResolutionRow,
    HALF_WIDTH, QUERY_GRID_SIZE, RESOLUTION_HEADER,
};
