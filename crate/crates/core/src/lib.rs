//! Terrain reconstruction from volumetric ray samples and slope-aware
//! path planning on the learned height field.

pub mod field;
pub mod grid;
pub mod nray;
pub mod metrics;
pub mod optim;
pub mod planner;
pub mod rays;
pub mod scalar;
pub mod terrain;
pub mod train;

pub use field::checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use field::{
    Activation, FieldError, GradSink, HeightField, HeightFieldConfig, HeightModel, HeightSurface, SmoothSurface,
    SparseGrad,
};
pub use grid::{load_asc, rasterize_field, save_asc, Cell, GridError, GridMap};
pub use nray::{read_nray, write_nray, NrayError};
pub use metrics::{average_slope, evaluate_path, path_distance_2d, smoothness_jerk, MetricsError, PathMetrics};
pub use optim::{adam_step, finite_diff_check, AdamState, OptimError};
pub use planner::{
    astar_init, flatness_controls, optimize_path, path_cost, sample_path, spline_from_gridpath, CostReport,
    PathSpline, PlanConfig, PlanError,
};
pub use rays::{
    cast_rays, cast_rays_per_pose, make_orbit_cameras, orbit_cameras_for, volumetric_weights, CameraPose, RayCastConfig, RayError, RaySampleBatch,
};
pub use scalar::Real;
pub use terrain::{Bounds, HillParams, TerrainError, TerrainKind, TerrainSpec};
pub use train::{
    apply_height_mask, pinball_loss, train_height_field, weighted_quantile_loss, weighted_quantile_oracle,
    ConstantField, TrainConfig, TrainError, TrainHistory,
};

pub type HeightField64 = HeightField<f64>;
pub type HeightField32 = HeightField<f32>;
pub type GridMap64 = GridMap<f64>;
pub type RaySampleBatch64 = RaySampleBatch<f64>;
pub type TerrainSpec64 = TerrainSpec<f64>;
pub type PathSpline64 = PathSpline<f64>;
pub type PlanConfig64 = PlanConfig<f64>;
