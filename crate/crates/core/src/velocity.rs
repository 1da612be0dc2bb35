//! Ground speed and heading from blue/red/green keypoints.
//!
//! A push-broom imager records its band frames one after another, so a
//! moving vehicle lands at a different place in each band. The time between
//! two neighbouring band captures is `w_bands * d_gsd / v_satellite`, and the
//! speed is the mean keypoint displacement divided by that interval.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::echoes::{Band, EchoTrajectory};
use crate::error::{Error, Result};
use crate::raster::AffineTransform;

/// Default along-track width of one band frame, in pixels.
pub const DEFAULT_BAND_WIDTH_PX: f64 = 660.0;

/// Sensor geometry needed to turn band offsets into time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandTiming {
    /// Satellite ground-track speed, m/s. Always supplied by the caller.
    pub v_satellite: f64,
    /// Band frame width along track, pixels.
    pub w_bands: f64,
    /// Ground sampling distance averaged over the bands, m/px.
    pub d_gsd: f64,
}

impl BandTiming {
    pub fn new(v_satellite: f64, w_bands: f64, d_gsd: f64) -> Result<Self> {
        let t = Self {
            v_satellite,
            w_bands,
            d_gsd,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("v_satellite", self.v_satellite),
            ("w_bands", self.w_bands),
            ("d_gsd", self.d_gsd),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Seconds between two consecutive band captures.
pub fn band_interval(t: &BandTiming) -> Result<f64> {
    t.validate()?;
    Ok(t.w_bands * t.d_gsd / t.v_satellite)
}

/// When each trajectory band is captured, in units of the band interval.
///
/// The default is blue at 0, red at 1 and green at 2. If the green keypoint
/// is taken from a band two frames after red, use `green = 3.0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptureSchedule {
    pub blue: f64,
    pub red: f64,
    pub green: f64,
}

impl Default for CaptureSchedule {
    fn default() -> Self {
        Self {
            blue: 0.0,
            red: 1.0,
            green: 2.0,
        }
    }
}

impl CaptureSchedule {
    pub fn offset(&self, band: Band) -> f64 {
        match band {
            Band::Blue => self.blue,
            Band::Red => self.red,
            Band::Green => self.green,
        }
    }

    /// Mean interval per segment in units of the band interval (1 for the
    /// default schedule).
    fn mean_gap(&self) -> f64 {
        (self.green - self.blue) / 2.0
    }

    fn validate(&self) -> Result<()> {
        if !(self.blue < self.red && self.red < self.green) {
            return Err(Error::param(
                "schedule",
                format!(
                    "capture offsets must increase blue < red < green, got {} {} {}",
                    self.blue, self.red, self.green
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityEstimate {
    pub echo_id: u64,
    /// Mean of the blue-red and red-green world displacements, metres.
    pub d_mean: f64,
    /// Interval `d_mean` was covered in, seconds.
    pub delta_t: f64,
    pub speed: f64,
    pub speed_kmh: f64,
    /// Degrees clockwise from north (world +y), in `[0, 360)`.
    pub heading: f64,
    pub score: f64,
}

fn world(e: &EchoTrajectory, band: Band, t: &AffineTransform) -> (f64, f64) {
    e.keypoint(band).to_world(t)
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Average of the blue-red and red-green displacements in world metres.
pub fn mean_displacement(e: &EchoTrajectory, t: &AffineTransform) -> f64 {
    let b = world(e, Band::Blue, t);
    let r = world(e, Band::Red, t);
    let g = world(e, Band::Green, t);
    (dist(b, r) + dist(r, g)) / 2.0
}

/// Compass bearing of the vector `from -> to`, degrees clockwise from +y.
pub fn bearing_deg(from: (f64, f64), to: (f64, f64)) -> f64 {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    if dx == 0.0 && dy == 0.0 {
        return 0.0;
    }
    let deg = dx.atan2(dy).to_degrees().rem_euclid(360.0);
    if deg >= 360.0 {
        0.0
    } else {
        deg
    }
}

pub fn estimate_velocity(
    e: &EchoTrajectory,
    t: &AffineTransform,
    timing: &BandTiming,
) -> Result<VelocityEstimate> {
    estimate_velocity_with_schedule(e, t, timing, &CaptureSchedule::default())
}

pub fn estimate_velocity_with_schedule(
    e: &EchoTrajectory,
    t: &AffineTransform,
    timing: &BandTiming,
    schedule: &CaptureSchedule,
) -> Result<VelocityEstimate> {
    schedule.validate()?;
    let delta_t = band_interval(timing)? * schedule.mean_gap();
    let d_mean = mean_displacement(e, t);
    let speed = d_mean / delta_t;
    let heading = if d_mean == 0.0 {
        0.0
    } else {
        bearing_deg(world(e, Band::Blue, t), world(e, Band::Green, t))
    };
    Ok(VelocityEstimate {
        echo_id: e.id,
        d_mean,
        delta_t,
        speed,
        speed_kmh: speed * 3.6,
        heading,
        score: e.score,
    })
}

/// Speed error implied by a trajectory-length RMSE. The length error spans
/// two band gaps, so half of it (in metres) is the error on `d_mean`.
pub fn rmse_to_velocity_error(rmse_px: f64, d_gsd: f64, delta_t: f64) -> f64 {
    displacement_error_m(rmse_px, d_gsd) / delta_t
}

/// Error on `d_mean` in metres for a trajectory-length RMSE in pixels.
pub fn displacement_error_m(rmse_px: f64, d_gsd: f64) -> f64 {
    rmse_px * d_gsd / 2.0
}

/// One row of the velocity CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityRow {
    pub image_id: u64,
    pub echo_id: u64,
    pub d_mean_m: f64,
    pub delta_t_s: f64,
    pub speed_mps: f64,
    pub speed_kmh: f64,
    pub heading_deg: f64,
    pub score: f64,
}

impl VelocityRow {
    pub fn new(image_id: u64, v: &VelocityEstimate) -> Self {
        Self {
            image_id,
            echo_id: v.echo_id,
            d_mean_m: v.d_mean,
            delta_t_s: v.delta_t,
            speed_mps: v.speed,
            speed_kmh: v.speed_kmh,
            heading_deg: v.heading,
            score: v.score,
        }
    }
}

/// Write rows sorted by `(image_id, echo_id)`.
pub fn write_velocity_csv<W: Write>(rows: &[VelocityRow], out: W) -> Result<()> {
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| (r.image_id, r.echo_id));
    let mut w = csv::Writer::from_writer(out);
    for r in &sorted {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(())
}

pub fn read_velocity_csv<R: Read>(input: R) -> Result<Vec<VelocityRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(csv_err))
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn echo(p: [(f64, f64); 3]) -> EchoTrajectory {
        EchoTrajectory::new(1, p, 0.8).unwrap()
    }

    #[test]
    fn band_interval_examples() {
        let t = BandTiming::new(7000.0, 660.0, 3.7).unwrap();
        let dt = band_interval(&t).unwrap();
        assert!((dt - 2442.0 / 7000.0).abs() < 1e-15);
        assert!((dt - 0.34886).abs() < 1e-5);

        let fast = BandTiming::new(14000.0, 660.0, 3.7).unwrap();
        assert!((band_interval(&fast).unwrap() - dt / 2.0).abs() < 1e-15);

        let unit = BandTiming::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(band_interval(&unit).unwrap(), 1.0);
    }

    #[test]
    fn timing_rejects_non_positive() {
        assert!(BandTiming::new(0.0, 660.0, 3.7).is_err());
        assert!(BandTiming::new(7000.0, -1.0, 3.7).is_err());
        assert!(BandTiming::new(7000.0, 660.0, f64::NAN).is_err());
    }

    #[test]
    fn mean_displacement_examples() {
        let identity = AffineTransform::new([-0.5, 1., 0., -0.5, 0., 1.]);
        // Keypoints whose pixel centres are the world points (0,0),(10,0),(20,0).
        let e = echo([(0., 0.), (10., 0.), (20., 0.)]);
        assert_eq!(mean_displacement(&e, &identity), 10.0);
        assert_eq!(mean_displacement(&echo([(4., 4.); 3]), &identity), 0.0);

        let t = AffineTransform::north_up(0.0, 0.0, 3.7);
        let e = echo([(0., 0.), (2., 0.), (4., 0.)]);
        assert!((mean_displacement(&e, &t) - 7.4).abs() < 1e-12);
    }

    #[test]
    fn estimate_examples() {
        let timing = BandTiming::new(7000.0, 660.0, 3.7).unwrap();
        let t = AffineTransform::north_up(0.0, 0.0, 1.0);
        let v = estimate_velocity(&echo([(0., 0.), (10., 0.), (20., 0.)]), &t, &timing).unwrap();
        assert_eq!(v.d_mean, 10.0);
        assert!((v.speed - 28.665).abs() < 1e-3);
        assert!((v.speed_kmh - 103.19).abs() < 1e-2);
        assert_eq!(v.heading, 90.0);
        assert_eq!(v.score, 0.8);

        let still = estimate_velocity(&echo([(3., 3.); 3]), &t, &timing).unwrap();
        assert_eq!((still.speed, still.heading), (0.0, 0.0));

        // North-up: decreasing row is moving north.
        let north =
            estimate_velocity(&echo([(0., 20.), (0., 10.), (0., 0.)]), &t, &timing).unwrap();
        assert_eq!(north.heading, 0.0);
        let south =
            estimate_velocity(&echo([(0., 0.), (0., 10.), (0., 20.)]), &t, &timing).unwrap();
        assert_eq!(south.heading, 180.0);
        let west = estimate_velocity(&echo([(20., 0.), (10., 0.), (0., 0.)]), &t, &timing).unwrap();
        assert_eq!(west.heading, 270.0);
    }

    #[test]
    fn wider_green_gap_lengthens_interval() {
        let timing = BandTiming::new(1.0, 1.0, 1.0).unwrap();
        let t = AffineTransform::north_up(0.0, 0.0, 1.0);
        let e = echo([(0., 0.), (10., 0.), (30., 0.)]);
        let sched = CaptureSchedule {
            green: 3.0,
            ..Default::default()
        };
        let v = estimate_velocity_with_schedule(&e, &t, &timing, &sched).unwrap();
        assert_eq!(v.delta_t, 1.5);
        assert_eq!(v.speed, 10.0);
        let bad = CaptureSchedule {
            red: 5.0,
            ..Default::default()
        };
        assert!(estimate_velocity_with_schedule(&e, &t, &timing, &bad).is_err());
    }

    #[test]
    fn rmse_conversion_examples() {
        assert!((displacement_error_m(1.9063, 3.46) - 3.30).abs() < 0.005);
        assert_eq!(rmse_to_velocity_error(0.0, 3.7, 0.35), 0.0);
        assert_eq!(rmse_to_velocity_error(2.0, 1.0, 1.0), 1.0);
    }

    #[test]
    fn csv_round_trip_sorted() {
        let rows = vec![
            VelocityRow {
                image_id: 2,
                echo_id: 1,
                d_mean_m: 1.0,
                delta_t_s: 0.5,
                speed_mps: 2.0,
                speed_kmh: 7.2,
                heading_deg: 45.0,
                score: 0.9,
            },
            VelocityRow {
                image_id: 1,
                echo_id: 9,
                d_mean_m: 3.0,
                delta_t_s: 0.5,
                speed_mps: 6.0,
                speed_kmh: 21.6,
                heading_deg: 0.0,
                score: 1.0,
            },
        ];
        let mut buf = Vec::new();
        write_velocity_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "image_id,echo_id,d_mean_m,delta_t_s,speed_mps,speed_kmh,heading_deg,score\n1,9,"
        ));
        let back = read_velocity_csv(&buf[..]).unwrap();
        assert_eq!(back, vec![rows[1], rows[0]]);
    }
}
