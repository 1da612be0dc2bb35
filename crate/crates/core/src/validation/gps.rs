//! Pairing satellite speed estimates with GPS records and summarising the
//! residuals.
//!
//! GPS coordinates are expected in the same projected CRS as the raster
//! geotransform, so distances are plain Euclidean metres.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, FixedOffset, NaiveTime};
use serde::Serialize;

use crate::echoes::{Band, EchoTrajectory, ImageEntry};
use crate::error::{Error, Result};
use crate::velocity::VelocityEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GpsPoint {
    pub x: f64,
    pub y: f64,
    pub timestamp: DateTime<FixedOffset>,
    pub speed_kmh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpsTrack {
    track_id: u64,
    points: Vec<GpsPoint>,
}

impl GpsTrack {
    pub fn new(track_id: u64, points: Vec<GpsPoint>) -> Result<Self> {
        let bad = |m: String| Error::InvalidInput(format!("gps track {track_id}: {m}"));
        if let Some(w) = points.windows(2).find(|w| w[1].timestamp < w[0].timestamp) {
            return Err(bad(format!(
                "timestamps decrease ({} then {})",
                w[0].timestamp, w[1].timestamp
            )));
        }
        for p in &points {
            if !(p.speed_kmh >= 0.0 && p.speed_kmh.is_finite()) {
                return Err(bad(format!("speed must be >= 0, got {}", p.speed_kmh)));
            }
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(bad("non-finite coordinate".into()));
            }
        }
        Ok(Self { track_id, points })
    }

    pub fn track_id(&self) -> u64 {
        self.track_id
    }

    pub fn points(&self) -> &[GpsPoint] {
        &self.points
    }
}

fn prop<'a>(f: &'a geojson::Feature, key: &str, i: usize) -> Result<&'a serde_json::Value> {
    f.property(key)
        .ok_or_else(|| Error::InvalidInput(format!("feature {i}: missing property `{key}`")))
}

/// Tracks from a FeatureCollection of Point features carrying `track_id`,
/// `timestamp` (RFC 3339) and `speed_kmh`. Points are ordered by time within
/// each track; tracks are ordered by id.
pub fn parse_gps_geojson(text: &str) -> Result<Vec<GpsTrack>> {
    let fc: geojson::FeatureCollection = text
        .parse::<geojson::GeoJson>()
        .map_err(|e| Error::InvalidInput(format!("geojson: {e}")))?
        .try_into()
        .map_err(|e: geojson::Error| Error::InvalidInput(format!("geojson: {e}")))?;
    let mut grouped: BTreeMap<u64, Vec<GpsPoint>> = BTreeMap::new();
    for (i, f) in fc.features.iter().enumerate() {
        let (x, y) = match f.geometry.as_ref().map(|g| &g.value) {
            Some(geojson::Value::Point(p)) if p.len() >= 2 => (p[0], p[1]),
            _ => {
                return Err(Error::InvalidInput(format!(
                    "feature {i}: expected a Point geometry"
                )))
            }
        };
        let track_id = prop(f, "track_id", i)?.as_u64().ok_or_else(|| {
            Error::InvalidInput(format!("feature {i}: track_id must be an integer"))
        })?;
        let ts = prop(f, "timestamp", i)?.as_str().ok_or_else(|| {
            Error::InvalidInput(format!("feature {i}: timestamp must be a string"))
        })?;
        let timestamp = DateTime::parse_from_rfc3339(ts)
            .map_err(|e| Error::InvalidInput(format!("feature {i}: timestamp: {e}")))?;
        let speed_kmh = prop(f, "speed_kmh", i)?.as_f64().ok_or_else(|| {
            Error::InvalidInput(format!("feature {i}: speed_kmh must be a number"))
        })?;
        grouped.entry(track_id).or_default().push(GpsPoint {
            x,
            y,
            timestamp,
            speed_kmh,
        });
    }
    grouped
        .into_iter()
        .map(|(id, mut pts)| {
            pts.sort_by_key(|p| p.timestamp);
            GpsTrack::new(id, pts)
        })
        .collect()
}

pub fn read_gps_geojson(path: impl AsRef<Path>) -> Result<Vec<GpsTrack>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_gps_geojson(&text).map_err(|e| Error::format(path, e))
}

/// A speed estimate together with where and when its echo was captured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocatedEstimate {
    pub image_id: u64,
    pub echo_id: u64,
    pub timestamp: DateTime<FixedOffset>,
    /// World position of the red keypoint.
    pub x: f64,
    pub y: f64,
    pub speed_kmh: f64,
}

impl LocatedEstimate {
    /// `None` when the image carries no capture time.
    pub fn new(image: &ImageEntry, echo: &EchoTrajectory, est: &VelocityEstimate) -> Option<Self> {
        let (x, y) = echo.keypoint(Band::Red).to_world(&image.geotransform);
        Some(Self {
            image_id: image.id,
            echo_id: echo.id,
            timestamp: image.timestamp?,
            x,
            y,
            speed_kmh: est.speed_kmh,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsMatchConfig {
    /// Local-time window GPS records must fall in, inclusive.
    pub window: (NaiveTime, NaiveTime),
    pub buffer_m: f64,
    pub time_tolerance_s: f64,
}

impl Default for GpsMatchConfig {
    fn default() -> Self {
        Self {
            window: (
                NaiveTime::from_hms_opt(9, 0, 0).unwrap(),
                NaiveTime::from_hms_opt(11, 0, 0).unwrap(),
            ),
            buffer_m: 10.0,
            time_tolerance_s: 60.0,
        }
    }
}

impl GpsMatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window.0 > self.window.1 {
            return Err(Error::param("window", "start must not be after end"));
        }
        if !(self.buffer_m >= 0.0) {
            return Err(Error::param(
                "buffer_m",
                format!("must be >= 0, got {}", self.buffer_m),
            ));
        }
        if !(self.time_tolerance_s >= 0.0) {
            return Err(Error::param(
                "time_tolerance_s",
                format!("must be >= 0, got {}", self.time_tolerance_s),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GpsMatch {
    pub image_id: u64,
    pub echo_id: u64,
    pub track_id: u64,
    pub gps_timestamp: DateTime<FixedOffset>,
    /// Absolute capture-to-GPS time difference, seconds.
    pub time_offset_s: f64,
    pub distance_m: f64,
    pub predicted_kmh: f64,
    pub gps_kmh: f64,
}

/// Pair each estimate with the GPS record closest in time among those
/// within the local-time window, the spatial buffer and the time tolerance.
/// Remaining ties go to the closer point, then the smaller track id.
/// Output is ordered by `(image_id, echo_id)`.
pub fn match_gps_to_estimates(
    tracks: &[GpsTrack],
    estimates: &[LocatedEstimate],
    cfg: &GpsMatchConfig,
) -> Result<Vec<GpsMatch>> {
    cfg.validate()?;
    let candidates: Vec<(u64, &GpsPoint)> = tracks
        .iter()
        .flat_map(|t| t.points.iter().map(move |p| (t.track_id, p)))
        .filter(|(_, p)| {
            let local = p.timestamp.time();
            cfg.window.0 <= local && local <= cfg.window.1
        })
        .collect();

    let mut out = Vec::new();
    for e in estimates {
        let mut best: Option<(f64, f64, u64, &GpsPoint)> = None;
        for &(track_id, p) in &candidates {
            let dist = (p.x - e.x).hypot(p.y - e.y);
            if dist > cfg.buffer_m {
                continue;
            }
            let dt = (p.timestamp - e.timestamp)
                .num_microseconds()
                .map_or(f64::INFINITY, |us| (us as f64 / 1e6).abs());
            if dt > cfg.time_tolerance_s {
                continue;
            }
            let better = best.is_none_or(|(bdt, bd, bt, bp)| {
                dt.total_cmp(&bdt)
                    .then(dist.total_cmp(&bd))
                    .then(track_id.cmp(&bt))
                    .then(p.timestamp.cmp(&bp.timestamp))
                    .then(p.speed_kmh.total_cmp(&bp.speed_kmh))
                    .is_lt()
            });
            if better {
                best = Some((dt, dist, track_id, p));
            }
        }
        if let Some((dt, dist, track_id, p)) = best {
            out.push(GpsMatch {
                image_id: e.image_id,
                echo_id: e.echo_id,
                track_id,
                gps_timestamp: p.timestamp,
                time_offset_s: dt,
                distance_m: dist,
                predicted_kmh: e.speed_kmh,
                gps_kmh: p.speed_kmh,
            });
        }
    }
    out.sort_by_key(|m| (m.image_id, m.echo_id));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedBucket {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    pub image_id: u64,
    pub echo_id: u64,
    pub track_id: u64,
    pub predicted_kmh: f64,
    pub gps_kmh: f64,
    pub residual_kmh: f64,
    pub bucket: SpeedBucket,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BucketStats {
    pub count: usize,
    pub mean: f64,
    pub std: Option<f64>,
    pub min: f64,
    pub max: f64,
}

impl BucketStats {
    fn of(values: &[f64]) -> Option<Self> {
        let d = super::stats::describe(values).ok()?;
        Some(Self {
            count: d.n,
            mean: d.mean,
            std: d.std,
            min: d.min,
            max: d.max,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    /// Predicted speeds at or above this go to the high bucket.
    pub bucket_threshold_kmh: f64,
    pub residuals: Vec<Residual>,
    pub all: Option<BucketStats>,
    pub low: Option<BucketStats>,
    pub high: Option<BucketStats>,
}

/// `predicted - gps` per pair, split at `bucket_threshold_kmh` of predicted
/// speed.
pub fn gps_residuals(pairs: &[GpsMatch], bucket_threshold_kmh: f64) -> ResidualReport {
    let residuals: Vec<Residual> = pairs
        .iter()
        .map(|m| Residual {
            image_id: m.image_id,
            echo_id: m.echo_id,
            track_id: m.track_id,
            predicted_kmh: m.predicted_kmh,
            gps_kmh: m.gps_kmh,
            residual_kmh: m.predicted_kmh - m.gps_kmh,
            bucket: if m.predicted_kmh >= bucket_threshold_kmh {
                SpeedBucket::High
            } else {
                SpeedBucket::Low
            },
        })
        .collect();
    let values = |b: Option<SpeedBucket>| -> Vec<f64> {
        residuals
            .iter()
            .filter(|r| b.is_none_or(|b| r.bucket == b))
            .map(|r| r.residual_kmh)
            .collect()
    };
    ResidualReport {
        bucket_threshold_kmh,
        all: BucketStats::of(&values(None)),
        low: BucketStats::of(&values(Some(SpeedBucket::Low))),
        high: BucketStats::of(&values(Some(SpeedBucket::High))),
        residuals,
    }
}
