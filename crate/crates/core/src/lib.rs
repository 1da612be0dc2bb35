//! Vehicle ground speeds from push-broom satellite imagery.
//!
//! Blue, red and green bands of a push-broom scanner are recorded a fraction
//! of a second apart, so a moving vehicle shows up as three displaced blobs.
//! This crate corrects detected keypoints onto band intensity peaks, turns
//! the displacement into speed and heading, scores detections against ground
//! truth, and validates speeds against drone and GPS references.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod correction;
pub mod echoes;
pub mod error;
pub mod metrics;
pub mod raster;
pub mod synth;
pub mod validation;
pub mod velocity;

pub use correction::{build_peak_index, correct_keypoints, CorrectionConfig, PeakIndex};
pub use echoes::{
    dataset_from_json, dataset_to_json, parse_dataset, trajectory_length_px, Band, EchoDataset,
    EchoTrajectory, Keypoint,
};
pub use error::{Error, Result};
pub use metrics::{evaluate, EvalReport, OksConfig};
pub use raster::{load_raster, save_raster, AffineTransform, BandPlane, RasterFormat, RasterGrid};
pub use synth::{render_scene, SceneOutput, SceneSpec, SyntheticVehicle};
pub use velocity::{band_interval, estimate_velocity, BandTiming, VelocityEstimate};
