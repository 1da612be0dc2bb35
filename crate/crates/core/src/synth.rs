//! Synthetic push-broom scenes with moving vehicles of known velocity.
//!
//! Band `b` (blue 0, red 1, green 2) is captured at `b * dt`, so a vehicle
//! at `p0 + v t` appears as a Gaussian blob at a different place in each
//! band. The ground-truth keypoints are the blob centres in fractional pixel
//! indices.

use std::io::{Read, Write};

use chrono::{DateTime, FixedOffset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::correction::{build_peak_index, correct_keypoints, CorrectionConfig};
use crate::echoes::{Annotation, EchoDataset, EchoTrajectory, ImageEntry};
use crate::error::{Error, Result};
use crate::raster::{AffineTransform, BandPlane, RasterGrid};
use crate::velocity::{band_interval, bearing_deg, estimate_velocity, BandTiming};

/// Blob amplitude used when a vehicle does not set one.
pub const DEFAULT_AMPLITUDE: f64 = 0.5;
/// Blob sigma, in pixels, used when a vehicle does not set one.
pub const DEFAULT_SIGMA_PX: f64 = 1.5;
/// Upper clamp of rendered intensities.
pub const MAX_INTENSITY: f64 = 1.5;
/// Blobs are evaluated out to this many sigmas.
const CUTOFF_SIGMAS: f64 = 6.0;

fn default_amplitude() -> f64 {
    DEFAULT_AMPLITUDE
}

fn default_background() -> f64 {
    0.1
}

fn default_image_id() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticVehicle {
    pub id: u64,
    /// World position at the blue capture, metres.
    pub position_t0: [f64; 2],
    /// World velocity, m/s.
    pub velocity: [f64; 2],
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Blob sigma in metres; defaults to 1.5 pixels.
    #[serde(default)]
    pub sigma: Option<f64>,
}

impl SyntheticVehicle {
    pub fn new(id: u64, position_t0: [f64; 2], velocity: [f64; 2]) -> Self {
        Self {
            id,
            position_t0,
            velocity,
            amplitude: DEFAULT_AMPLITUDE,
            sigma: None,
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity[0].hypot(self.velocity[1])
    }

    pub fn position_at(&self, t: f64) -> (f64, f64) {
        (
            self.position_t0[0] + self.velocity[0] * t,
            self.position_t0[1] + self.velocity[1] * t,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub geotransform: AffineTransform,
    pub timing: BandTiming,
    pub vehicles: Vec<SyntheticVehicle>,
    #[serde(default = "default_background")]
    pub background_level: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_image_id")]
    pub image_id: u64,
    #[serde(default)]
    pub timestamp: Option<DateTime<FixedOffset>>,
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("scene spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene spec serializes")
    }

    /// Sigma of `v` in metres.
    pub fn sigma_of(&self, v: &SyntheticVehicle) -> f64 {
        v.sigma
            .unwrap_or(DEFAULT_SIGMA_PX * self.geotransform.mean_pixel_size())
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::param(
                "width/height",
                "grid dimensions must be positive",
            ));
        }
        self.geotransform.ensure_invertible()?;
        self.timing.validate()?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::param(
                "noise_sigma",
                format!("must be >= 0, got {}", self.noise_sigma),
            ));
        }
        if !self.background_level.is_finite() {
            return Err(Error::param("background_level", "must be finite"));
        }
        let mut ids: Vec<u64> = self.vehicles.iter().map(|v| v.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::param(
                "vehicles",
                format!("duplicate vehicle id {}", w[0]),
            ));
        }
        let mut max_amp: f64 = 0.0;
        for v in &self.vehicles {
            if !(v.amplitude > 0.0 && v.amplitude <= 1.0) {
                return Err(Error::param(
                    "amplitude",
                    format!("vehicle {}: must lie in (0, 1], got {}", v.id, v.amplitude),
                ));
            }
            let sigma = self.sigma_of(v);
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::param(
                    "sigma",
                    format!("vehicle {}: must be positive, got {sigma}", v.id),
                ));
            }
            if !v
                .position_t0
                .iter()
                .chain(&v.velocity)
                .all(|x| x.is_finite())
            {
                return Err(Error::param(
                    "vehicles",
                    format!("vehicle {}: non-finite motion", v.id),
                ));
            }
            max_amp = max_amp.max(v.amplitude);
        }
        if self.background_level + max_amp > 1.2 {
            return Err(Error::param(
                "background_level",
                format!(
                    "background plus largest amplitude is {}, above 1.2",
                    self.background_level + max_amp
                ),
            ));
        }
        Ok(())
    }
}

/// Capture time of band `b` (0 blue, 1 red, 2 green), seconds.
pub fn capture_time(band: usize, dt: f64) -> f64 {
    band as f64 * dt
}

/// Sum of all vehicle blobs in one band, before background, noise and
/// clamping. Row-major.
pub fn vehicle_intensity(spec: &SceneSpec, band: usize) -> Result<Vec<f64>> {
    let dt = band_interval(&spec.timing)?;
    let t = capture_time(band, dt);
    let (w, h) = (spec.width, spec.height);
    let gt = &spec.geotransform;
    let [_, b, c, _, e, f] = gt.coefficients();
    let min_step = b.hypot(e).min(c.hypot(f));
    let mut out = vec![0.0; w * h];
    for v in &spec.vehicles {
        let sigma = spec.sigma_of(v);
        let (px, py) = v.position_at(t);
        let (cc, cr) = gt.world_to_pixel_index(px, py)?;
        let reach = (CUTOFF_SIGMAS * sigma / min_step).ceil() + 1.0;
        let c0 = (cc - reach).floor().max(0.0);
        let c1 = (cc + reach).ceil().min(w as f64 - 1.0);
        let r0 = (cr - reach).floor().max(0.0);
        let r1 = (cr + reach).ceil().min(h as f64 - 1.0);
        if c0 > c1 || r0 > r1 {
            continue;
        }
        let two_s2 = 2.0 * sigma * sigma;
        for row in r0 as usize..=r1 as usize {
            for col in c0 as usize..=c1 as usize {
                let (x, y) = gt.pixel_center(col as f64, row as f64);
                let d2 = (x - px).powi(2) + (y - py).powi(2);
                out[row * w + col] += v.amplitude * (-d2 / two_s2).exp();
            }
        }
    }
    Ok(out)
}

/// Per-band Gaussian noise. Each band draws from its own ChaCha stream of
/// the scene seed, so bands are independent and reproducible.
fn noise(spec: &SceneSpec, band: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(band as u64);
    (0..spec.width * spec.height)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * spec.noise_sigma
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub vehicle_id: u64,
    pub speed_mps: f64,
    pub heading_deg: f64,
    /// Some keypoint falls outside the grid; the vehicle is left out of the
    /// ground-truth dataset.
    pub clipped: bool,
}

#[derive(Debug, Clone)]
pub struct SceneOutput {
    pub grid: RasterGrid,
    /// One image; annotation ids equal vehicle ids.
    pub dataset: EchoDataset,
    pub truth: Vec<TruthRow>,
}

/// Ground-truth keypoints of `v` as fractional pixel indices.
pub fn vehicle_keypoints(spec: &SceneSpec, v: &SyntheticVehicle) -> Result<[(f64, f64); 3]> {
    let dt = band_interval(&spec.timing)?;
    let mut out = [(0.0, 0.0); 3];
    for (b, slot) in out.iter_mut().enumerate() {
        let (x, y) = v.position_at(capture_time(b, dt));
        *slot = spec.geotransform.world_to_pixel_index(x, y)?;
    }
    Ok(out)
}

pub fn render_scene(spec: &SceneSpec) -> Result<SceneOutput> {
    spec.validate()?;
    let mut bands = Vec::with_capacity(3);
    for b in 0..3 {
        let blobs = vehicle_intensity(spec, b)?;
        let values: Vec<f64> = if spec.noise_sigma > 0.0 {
            blobs
                .iter()
                .zip(noise(spec, b))
                .map(|(v, n)| v + spec.background_level + n)
                .collect()
        } else {
            blobs.iter().map(|v| v + spec.background_level).collect()
        };
        let clamped = values
            .into_iter()
            .map(|v| v.clamp(0.0, MAX_INTENSITY))
            .collect();
        bands.push(BandPlane::new(clamped)?);
    }
    let grid = RasterGrid::with_default_labels(spec.width, spec.height, bands, spec.geotransform)?;

    let mut truth = Vec::new();
    let mut annotations = Vec::new();
    let mut vehicles = spec.vehicles.clone();
    vehicles.sort_by_key(|v| v.id);
    for v in &vehicles {
        let kps = vehicle_keypoints(spec, v)?;
        let echo = EchoTrajectory::new(v.id, kps, 1.0)?;
        let clipped = !echo
            .keypoints()
            .iter()
            .all(|k| k.in_bounds(spec.width, spec.height));
        truth.push(TruthRow {
            vehicle_id: v.id,
            speed_mps: v.speed(),
            heading_deg: bearing_deg((0.0, 0.0), (v.velocity[0], v.velocity[1])),
            clipped,
        });
        if !clipped {
            annotations.push(Annotation {
                image_id: spec.image_id,
                echo,
            });
        }
    }
    let image = ImageEntry {
        id: spec.image_id,
        file: "raster.json".into(),
        width: spec.width,
        height: spec.height,
        geotransform: spec.geotransform,
        timestamp: spec.timestamp,
    };
    Ok(SceneOutput {
        grid,
        dataset: EchoDataset::new(vec![image], annotations)?,
        truth,
    })
}

pub fn write_truth_csv<W: Write>(rows: &[TruthRow], out: W) -> Result<()> {
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| r.vehicle_id);
    let mut w = csv::Writer::from_writer(out);
    for r in &sorted {
        w.serialize(r)
            .map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::InvalidInput(e.to_string()))
}

pub fn read_truth_csv<R: Read>(input: R) -> Result<Vec<TruthRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| Error::InvalidInput(format!("csv: {e}"))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryRow {
    pub vehicle_id: u64,
    pub true_speed: f64,
    pub estimated_speed: f64,
    pub abs_error: f64,
}

/// Uniform point in a disk of radius `r`.
fn disk_sample(rng: &mut ChaCha8Rng, r: f64) -> (f64, f64) {
    let rho = r * rng.random::<f64>().sqrt();
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    (rho * theta.cos(), rho * theta.sin())
}

/// Perturb every ground-truth keypoint by a uniform offset within
/// `0.9 * max_shift_distance` pixels, correct against the rendered raster
/// and estimate speeds. Clipped vehicles are skipped.
pub fn end_to_end_recover(
    scene: &SceneOutput,
    cfg: &CorrectionConfig,
    timing: &BandTiming,
    jitter_seed: u64,
) -> Result<Vec<RecoveryRow>> {
    let radius = 0.9 * cfg.max_shift_distance;
    let mut rng = ChaCha8Rng::seed_from_u64(jitter_seed);
    let mut initial: Vec<EchoTrajectory> = scene
        .dataset
        .annotations()
        .iter()
        .map(|a| a.echo.clone())
        .collect();
    initial.sort_by_key(|e| e.id);
    for e in initial.iter_mut() {
        let p = e.positions().map(|(c, r)| {
            let (dc, dr) = disk_sample(&mut rng, radius);
            (c + dc, r + dr)
        });
        *e = e.with_positions(p);
    }
    let index = build_peak_index(&scene.grid, cfg)?;
    let corrected = correct_keypoints(&initial, &index, cfg);
    let transform = scene.grid.geotransform();
    corrected
        .iter()
        .map(|e| {
            let est = estimate_velocity(e, transform, timing)?;
            let truth = scene
                .truth
                .iter()
                .find(|t| t.vehicle_id == e.id)
                .ok_or_else(|| Error::InvalidInput(format!("no truth row for vehicle {}", e.id)))?;
            Ok(RecoveryRow {
                vehicle_id: e.id,
                true_speed: truth.speed_mps,
                estimated_speed: est.speed,
                abs_error: (est.speed - truth.speed_mps).abs(),
            })
        })
        .collect()
}
