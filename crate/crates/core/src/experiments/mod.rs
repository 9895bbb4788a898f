//! End-to-end protocols over the toy world, their configuration, plots, and
//! the command-line front end.

pub mod cli;
pub mod config;
pub mod pipeline;
pub mod plot;
pub mod protocols;
pub mod world;

pub use config::{BackendKind, ExperimentConfig, Removal};
pub use pipeline::{train_detector, Detector, TestBank};
pub use plot::{plot_curve, Series};
pub use protocols::{
    filter_views, run_shape_ablation, run_texture_matrix, run_vcnn, run_view_ablation, select_meshes,
    view_training_set, Bench, MatrixResult, VcnnPoint,
};
pub use world::{ToyWorld, CATEGORY_NAMES};
