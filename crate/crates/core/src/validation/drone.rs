//! Vehicle speed from drone video tracks.
//!
//! Ground sampling distance follows from flight altitude and the camera's
//! focal length, sensor size and image size. Distance is taken between the
//! first and last observation of a track and divided by the elapsed frames.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroneCameraSpec {
    /// Millimetres.
    pub focal_length: f64,
    /// Sensor width and height, millimetres.
    pub sensor_w: f64,
    pub sensor_h: f64,
    /// Image width and height, pixels.
    pub image_w: f64,
    pub image_h: f64,
    pub fps: f64,
}

impl Default for DroneCameraSpec {
    fn default() -> Self {
        Self {
            focal_length: 4.4,
            sensor_w: 6.4,
            sensor_h: 4.8,
            image_w: 8000.0,
            image_h: 6000.0,
            fps: 30.0,
        }
    }
}

impl DroneCameraSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("focal_length", self.focal_length),
            ("sensor_w", self.sensor_w),
            ("sensor_h", self.sensor_h),
            ("image_w", self.image_w),
            ("image_h", self.image_h),
            ("fps", self.fps),
        ] {
            positive(name, v)?;
        }
        Ok(())
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be positive, got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroneObservation {
    pub frame: u64,
    pub cx_px: f64,
    pub cy_px: f64,
    pub altitude_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroneTrack {
    track_id: u64,
    observations: Vec<DroneObservation>,
}

impl DroneTrack {
    /// Requires at least two observations with strictly increasing frames
    /// and positive altitude.
    pub fn new(track_id: u64, observations: Vec<DroneObservation>) -> Result<Self> {
        let bad = |m: String| Error::InvalidInput(format!("track {track_id}: {m}"));
        if observations.len() < 2 {
            return Err(bad(format!(
                "needs at least 2 observations, found {}",
                observations.len()
            )));
        }
        if let Some(w) = observations.windows(2).find(|w| w[1].frame <= w[0].frame) {
            return Err(bad(format!(
                "frame indices must increase ({} then {})",
                w[0].frame, w[1].frame
            )));
        }
        for o in &observations {
            if !(o.altitude_m > 0.0 && o.altitude_m.is_finite()) {
                return Err(bad(format!(
                    "altitude must be positive at frame {}",
                    o.frame
                )));
            }
            if !(o.cx_px.is_finite() && o.cy_px.is_finite()) {
                return Err(bad(format!("non-finite centroid at frame {}", o.frame)));
            }
        }
        Ok(Self {
            track_id,
            observations,
        })
    }

    pub fn track_id(&self) -> u64 {
        self.track_id
    }

    pub fn observations(&self) -> &[DroneObservation] {
        &self.observations
    }

    fn endpoints(&self) -> (&DroneObservation, &DroneObservation) {
        (
            &self.observations[0],
            &self.observations[self.observations.len() - 1],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMetric {
    /// Sum of the absolute per-axis distances.
    #[default]
    AsPrinted,
    Euclidean,
}

/// Metres per pixel along the image width and height at `altitude` metres.
pub fn drone_gsd(spec: &DroneCameraSpec, altitude: f64) -> Result<(f64, f64)> {
    spec.validate()?;
    positive("altitude", altitude)?;
    Ok((
        altitude * spec.sensor_w / (spec.focal_length * spec.image_w),
        altitude * spec.sensor_h / (spec.focal_length * spec.image_h),
    ))
}

/// Ground distance between the first and last observation. The GSD uses
/// the mean of the two endpoint altitudes.
pub fn drone_distance(
    track: &DroneTrack,
    spec: &DroneCameraSpec,
    metric: DistanceMetric,
) -> Result<f64> {
    let (first, last) = track.endpoints();
    let (gw, gh) = drone_gsd(spec, (first.altitude_m + last.altitude_m) / 2.0)?;
    let dx = (last.cx_px - first.cx_px) * gw;
    let dy = (last.cy_px - first.cy_px) * gh;
    Ok(match metric {
        DistanceMetric::AsPrinted => dx.abs() + dy.abs(),
        DistanceMetric::Euclidean => dx.hypot(dy),
    })
}

/// Metres per second over the first-to-last frame span.
pub fn drone_velocity(
    track: &DroneTrack,
    spec: &DroneCameraSpec,
    metric: DistanceMetric,
) -> Result<f64> {
    let (first, last) = track.endpoints();
    let frames = last.frame - first.frame;
    let d = drone_distance(track, spec, metric)?;
    Ok(d / frames as f64 * spec.fps)
}

#[derive(Debug, Deserialize)]
struct DroneCsvRow {
    track_id: u64,
    frame: u64,
    cx_px: f64,
    cy_px: f64,
    altitude_m: f64,
}

/// Read `track_id,frame,cx_px,cy_px,altitude_m` rows into tracks ordered by
/// id. Rows of one track may appear in any order.
pub fn read_drone_csv<R: Read>(input: R) -> Result<Vec<DroneTrack>> {
    let mut grouped: BTreeMap<u64, Vec<DroneObservation>> = BTreeMap::new();
    for row in csv::Reader::from_reader(input).deserialize() {
        let r: DroneCsvRow = row.map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
        grouped
            .entry(r.track_id)
            .or_default()
            .push(DroneObservation {
                frame: r.frame,
                cx_px: r.cx_px,
                cy_px: r.cy_px,
                altitude_m: r.altitude_m,
            });
    }
    grouped
        .into_iter()
        .map(|(id, mut obs)| {
            obs.sort_by_key(|o| o.frame);
            DroneTrack::new(id, obs)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(frame: u64, cx: f64, cy: f64, alt: f64) -> DroneObservation {
        DroneObservation {
            frame,
            cx_px: cx,
            cy_px: cy,
            altitude_m: alt,
        }
    }

    /// Camera whose GSD is 0.02 m/px on both axes at 100 m.
    fn unit_spec() -> DroneCameraSpec {
        DroneCameraSpec {
            focal_length: 5.0,
            sensor_w: 1.0,
            sensor_h: 1.0,
            image_w: 1000.0,
            image_h: 1000.0,
            fps: 30.0,
        }
    }

    #[test]
    fn default_camera_gsd_at_100m() {
        let (gw, gh) = drone_gsd(&DroneCameraSpec::default(), 100.0).unwrap();
        assert!((gw - 100.0 * 6.4 / (4.4 * 8000.0)).abs() < 1e-15);
        assert!((gw - 0.018182).abs() < 1e-6);
        assert!((gh - 0.018182).abs() < 1e-6);
        let (gw2, gh2) = drone_gsd(&DroneCameraSpec::default(), 200.0).unwrap();
        assert!((gw2 - 2.0 * gw).abs() < 1e-15 && (gh2 - 2.0 * gh).abs() < 1e-15);
    }

    #[test]
    fn gsd_rejects_non_positive() {
        assert!(drone_gsd(&DroneCameraSpec::default(), 0.0).is_err());
        let spec = DroneCameraSpec {
            fps: 0.0,
            ..Default::default()
        };
        assert!(drone_gsd(&spec, 10.0).is_err());
    }

    #[test]
    fn distance_metrics() {
        let spec = unit_spec();
        let t = DroneTrack::new(1, vec![obs(0, 0., 0., 100.), obs(30, 100., 0., 100.)]).unwrap();
        for m in [DistanceMetric::AsPrinted, DistanceMetric::Euclidean] {
            assert!((drone_distance(&t, &spec, m).unwrap() - 2.0).abs() < 1e-12);
        }
        let t = DroneTrack::new(1, vec![obs(0, 0., 0., 100.), obs(30, 30., 40., 100.)]).unwrap();
        let l1 = drone_distance(&t, &spec, DistanceMetric::AsPrinted).unwrap();
        let l2 = drone_distance(&t, &spec, DistanceMetric::Euclidean).unwrap();
        assert!((l1 - 1.4).abs() < 1e-12);
        assert!((l2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn velocity_examples() {
        let spec = unit_spec();
        let t = DroneTrack::new(1, vec![obs(0, 0., 0., 100.), obs(30, 100., 0., 100.)]).unwrap();
        let v = drone_velocity(&t, &spec, DistanceMetric::AsPrinted).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        let fast = DroneCameraSpec { fps: 60.0, ..spec };
        assert!(
            (drone_velocity(&t, &fast, DistanceMetric::AsPrinted).unwrap() - 4.0).abs() < 1e-12
        );
        // 36.62 m over one second of video.
        assert!((36.62f64 * 3.6 - 131.832).abs() < 1e-9);
    }

    #[test]
    fn only_endpoints_matter() {
        let spec = DroneCameraSpec::default();
        let a = DroneTrack::new(1, vec![obs(3, 10., 20., 90.), obs(48, 900., 50., 110.)]).unwrap();
        let b = DroneTrack::new(
            1,
            vec![
                obs(3, 10., 20., 90.),
                obs(20, 4000., 3000., 10.),
                obs(48, 900., 50., 110.),
            ],
        )
        .unwrap();
        for m in [DistanceMetric::AsPrinted, DistanceMetric::Euclidean] {
            assert_eq!(
                drone_velocity(&a, &spec, m).unwrap(),
                drone_velocity(&b, &spec, m).unwrap()
            );
        }
    }

    #[test]
    fn track_invariants() {
        assert!(DroneTrack::new(1, vec![obs(0, 0., 0., 10.)]).is_err());
        assert!(DroneTrack::new(1, vec![obs(5, 0., 0., 10.), obs(5, 1., 0., 10.)]).is_err());
        assert!(DroneTrack::new(1, vec![obs(0, 0., 0., 0.), obs(5, 1., 0., 10.)]).is_err());
    }

    #[test]
    fn reads_csv_grouped_by_track() {
        let text = "track_id,frame,cx_px,cy_px,altitude_m\n\
                    2,10,5,5,100\n1,30,100,0,100\n1,0,0,0,100\n2,0,0,0,100\n";
        let tracks = read_drone_csv(text.as_bytes()).unwrap();
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].track_id(), 1);
        assert_eq!(tracks[0].observations()[0].frame, 0);
        assert_eq!(tracks[1].observations()[1].frame, 10);
    }
}
