//! Independent checks on satellite speeds: drone video tracks, GPS records
//! and distribution comparison.

pub mod drone;
pub mod gps;
pub mod plot;
pub mod stats;

pub use drone::{
    drone_distance, drone_gsd, drone_velocity, read_drone_csv, DistanceMetric, DroneCameraSpec,
    DroneObservation, DroneTrack,
};
pub use gps::{
    gps_residuals, match_gps_to_estimates, parse_gps_geojson, read_gps_geojson, BucketStats,
    GpsMatch, GpsMatchConfig, GpsPoint, GpsTrack, LocatedEstimate, Residual, ResidualReport,
    SpeedBucket,
};
pub use plot::{histogram, histogram_svg};
pub use stats::{
    compare_samples, describe, kolmogorov_q, ks_p_value, ks_statistic, ks_two_sample,
    ComparisonReport, Describe, KsResult,
};
