//! `bandspeed`: one subcommand per pipeline stage, composed through files.
//!
//! Exit status is 0 on success, 1 when inputs or flags are invalid and 2 when
//! a file cannot be read or written. Outputs are written atomically and only
//! after every input has been validated.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bandspeed::correction::{build_peak_index, correct_keypoints, Connectivity, CorrectionConfig};
use bandspeed::echoes::{
    dataset_to_json, parse_dataset, validate_against_raster, Annotation, EchoDataset,
};
use bandspeed::metrics::{evaluate, OksConfig};
use bandspeed::raster::{
    encode_raster, load_raster, rasterize_road_mask, read_centerlines_geojson, RasterFormat,
    RasterGrid,
};
use bandspeed::synth::{render_scene, write_truth_csv, SceneSpec};
use bandspeed::validation::{
    compare_samples, drone_velocity, gps_residuals, histogram_svg, match_gps_to_estimates,
    read_drone_csv, read_gps_geojson, DistanceMetric, DroneCameraSpec, GpsMatchConfig,
    LocatedEstimate,
};
use bandspeed::velocity::{
    estimate_velocity, read_velocity_csv, write_velocity_csv, BandTiming, VelocityRow,
    DEFAULT_BAND_WIDTH_PX,
};
use bandspeed::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "bandspeed",
    version,
    about = "Vehicle speeds from push-broom satellite band offsets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene: raster, ground-truth echoes and truth table.
    Simulate(SimulateArgs),
    /// Snap detected keypoints to per-band h-maxima peaks.
    Correct(CorrectArgs),
    /// Speed and heading for every echo.
    Speed(SpeedArgs),
    /// OKS-based mAP, trajectory RMSE and match counts.
    Eval(EvalArgs),
    /// Speeds from drone video tracks.
    DroneSpeed(DroneArgs),
    /// Match speed estimates to GPS records and summarise residuals.
    GpsResiduals(GpsArgs),
    /// Descriptive statistics and a KS test for two speed samples.
    Compare(CompareArgs),
    /// Rasterize buffered road centerlines onto a raster grid.
    Mask(MaskArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RasterOut {
    Json,
    Geotiff,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene description JSON.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the seed in the scene description.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "json")]
    raster_format: RasterOut,
}

#[derive(Args)]
struct CorrectionFlags {
    /// Minimum peak height as a fraction of each band's range.
    #[arg(long, default_value_t = 0.02)]
    h: f64,
    /// Odd neighbourhood window size in pixels.
    #[arg(long, default_value_t = 3)]
    neighborhood: usize,
    /// 4 or 8.
    #[arg(long, default_value_t = 8)]
    connectivity: u8,
    /// Keypoints move only to peaks strictly closer than this, in pixels.
    #[arg(long, default_value_t = 2.0)]
    max_shift: f64,
}

impl CorrectionFlags {
    fn config(&self) -> Result<CorrectionConfig, CliError> {
        let connectivity = Connectivity::from_count(self.connectivity).ok_or_else(|| {
            CliError::invalid(format!(
                "--connectivity must be 4 or 8, got {}",
                self.connectivity
            ))
        })?;
        let cfg = CorrectionConfig {
            h: self.h,
            neighborhood: self.neighborhood,
            connectivity,
            max_shift_distance: self.max_shift,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct CorrectArgs {
    /// Raster (.tif/.tiff as GeoTIFF, anything else as JSON grid).
    #[arg(long)]
    raster: PathBuf,
    /// Detections dataset JSON.
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    correction: CorrectionFlags,
}

#[derive(Args)]
struct SpeedArgs {
    #[arg(long)]
    raster: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    /// Satellite ground-track speed, m/s.
    #[arg(long)]
    satellite_velocity: f64,
    /// Band frame width along track, pixels.
    #[arg(long, default_value_t = DEFAULT_BAND_WIDTH_PX)]
    band_width: f64,
    /// Ground sampling distance, m/px. Defaults to the raster pixel size.
    #[arg(long)]
    gsd: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Detections with score at or below this are ignored.
    #[arg(long, default_value_t = 0.7)]
    score_threshold: f64,
    /// OKS object scale factor.
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    AsPrinted,
    Euclidean,
}

#[derive(Args)]
struct DroneArgs {
    /// CSV with track_id,frame,cx_px,cy_px,altitude_m.
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "as-printed")]
    metric: Metric,
    /// Focal length, mm.
    #[arg(long, default_value_t = 4.4)]
    focal_length: f64,
    /// Sensor width, mm.
    #[arg(long, default_value_t = 6.4)]
    sensor_width: f64,
    /// Sensor height, mm.
    #[arg(long, default_value_t = 4.8)]
    sensor_height: f64,
    #[arg(long, default_value_t = 8000.0)]
    image_width: f64,
    #[arg(long, default_value_t = 6000.0)]
    image_height: f64,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
}

#[derive(Args)]
struct GpsArgs {
    /// GeoJSON points with track_id, timestamp and speed_kmh.
    #[arg(long)]
    gps: PathBuf,
    /// Detections dataset with image timestamps.
    #[arg(long)]
    detections: PathBuf,
    /// Velocity CSV produced by `speed`.
    #[arg(long)]
    velocities: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Spatial gate, metres.
    #[arg(long, default_value_t = 10.0)]
    buffer: f64,
    /// Temporal gate, seconds.
    #[arg(long, default_value_t = 60.0)]
    time_tolerance: f64,
    /// Local time window start, HH:MM.
    #[arg(long, default_value = "09:00")]
    window_start: String,
    #[arg(long, default_value = "11:00")]
    window_end: String,
    /// Predicted speeds at or above this form the high bucket, km/h.
    #[arg(long, default_value_t = 100.0)]
    bucket_kmh: f64,
}

#[derive(Args)]
struct CompareArgs {
    /// First CSV sample.
    #[arg(long)]
    a: PathBuf,
    /// Second CSV sample.
    #[arg(long)]
    b: PathBuf,
    /// Column holding the speeds in both files.
    #[arg(long, default_value = "speed_kmh")]
    column: String,
    #[arg(long, default_value = "a")]
    label_a: String,
    #[arg(long, default_value = "b")]
    label_b: String,
    #[arg(long)]
    out: PathBuf,
    /// Also write overlaid histograms as SVG.
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    bins: usize,
}

#[derive(Args)]
struct MaskArgs {
    #[arg(long)]
    raster: PathBuf,
    /// GeoJSON with LineString centerlines.
    #[arg(long)]
    centerlines: PathBuf,
    /// Buffer half-width, metres.
    #[arg(long, default_value_t = 10.0)]
    buffer: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Invalid(String),
    Io(String),
}

impl CliError {
    fn invalid(m: impl Into<String>) -> Self {
        CliError::Invalid(m.into())
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Pending output files; nothing touches disk until `commit`.
#[derive(Default)]
struct Outputs(Vec<(PathBuf, Vec<u8>)>);

impl Outputs {
    fn add(&mut self, path: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.0.push((path.into(), bytes.into()));
    }

    fn commit(self) -> CliResult {
        for (path, bytes) in self.0 {
            write_atomic(&path, &bytes)?;
        }
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> CliResult<std::fs::File> {
    std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

fn load_grid(path: &Path) -> CliResult<RasterGrid> {
    Ok(load_raster(path, RasterFormat::from_path(path))?)
}

/// Reject datasets whose images or keypoints do not fit the raster.
fn check_fit(d: &EchoDataset, grid: &RasterGrid) -> CliResult {
    let violations = validate_against_raster(d, grid);
    if violations.is_empty() {
        return Ok(());
    }
    let lines: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
    Err(CliError::invalid(lines.join("\n")))
}

fn simulate(a: SimulateArgs) -> CliResult {
    let mut spec = SceneSpec::from_json(&read_text(&a.spec)?).map_err(|e| match e {
        Error::InvalidInput(m) => CliError::Invalid(format!("{}: {m}", a.spec.display())),
        other => other.into(),
    })?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let scene = render_scene(&spec)?;
    let (name, format) = match a.raster_format {
        RasterOut::Json => ("raster.json", RasterFormat::JsonGrid),
        RasterOut::Geotiff => ("raster.tif", RasterFormat::GeoTiff),
    };
    let mut images = scene.dataset.images().to_vec();
    for im in &mut images {
        im.file = name.to_string();
    }
    let dataset = EchoDataset::new(images, scene.dataset.annotations().to_vec())?;

    let mut truth = Vec::new();
    write_truth_csv(&scene.truth, &mut truth)?;
    std::fs::create_dir_all(&a.out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", a.out_dir.display())))?;
    let mut out = Outputs::default();
    out.add(a.out_dir.join(name), encode_raster(&scene.grid, format)?);
    out.add(
        a.out_dir.join("ground_truth.json"),
        dataset_to_json(&dataset) + "\n",
    );
    out.add(a.out_dir.join("truth.csv"), truth);
    out.commit()
}

fn correct(a: CorrectArgs) -> CliResult {
    let cfg = a.correction.config()?;
    let grid = load_grid(&a.raster)?;
    let dets = parse_dataset(&a.detections)?;
    check_fit(&dets, &grid)?;
    let index = build_peak_index(&grid, &cfg)?;
    let echoes: Vec<_> = dets.annotations().iter().map(|x| x.echo.clone()).collect();
    let corrected = correct_keypoints(&echoes, &index, &cfg);
    let annotations = dets
        .annotations()
        .iter()
        .zip(corrected)
        .map(|(orig, echo)| Annotation {
            image_id: orig.image_id,
            echo,
        })
        .collect();
    let out_ds = dets.with_annotations(annotations)?;
    let mut out = Outputs::default();
    out.add(&a.out, dataset_to_json(&out_ds) + "\n");
    out.commit()
}

fn speed(a: SpeedArgs) -> CliResult {
    let grid = load_grid(&a.raster)?;
    let gsd = a
        .gsd
        .unwrap_or_else(|| grid.geotransform().mean_pixel_size());
    let timing = BandTiming::new(a.satellite_velocity, a.band_width, gsd)?;
    let dets = parse_dataset(&a.detections)?;
    check_fit(&dets, &grid)?;
    let rows = dets
        .annotations()
        .iter()
        .map(|x| {
            let est = estimate_velocity(&x.echo, grid.geotransform(), &timing)?;
            Ok(VelocityRow::new(x.image_id, &est))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let mut buf = Vec::new();
    write_velocity_csv(&rows, &mut buf)?;
    let mut out = Outputs::default();
    out.add(&a.out, buf);
    out.commit()
}

fn eval(a: EvalArgs) -> CliResult {
    let cfg = OksConfig {
        s: a.s,
        score_threshold: a.score_threshold,
        ..Default::default()
    };
    cfg.validate()?;
    let gt = parse_dataset(&a.gt)?;
    let pred = parse_dataset(&a.pred)?;
    let report = to_json(&evaluate(&pred, &gt, &cfg)?);
    match a.out {
        Some(path) => {
            let mut out = Outputs::default();
            out.add(path, report);
            out.commit()
        }
        None => std::io::stdout()
            .write_all(&report)
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

#[derive(Serialize)]
struct DroneRow {
    track_id: u64,
    first_frame: u64,
    last_frame: u64,
    distance_m: f64,
    speed_mps: f64,
    speed_kmh: f64,
}

fn drone_speed(a: DroneArgs) -> CliResult {
    let spec = DroneCameraSpec {
        focal_length: a.focal_length,
        sensor_w: a.sensor_width,
        sensor_h: a.sensor_height,
        image_w: a.image_width,
        image_h: a.image_height,
        fps: a.fps,
    };
    spec.validate()?;
    let metric = match a.metric {
        Metric::AsPrinted => DistanceMetric::AsPrinted,
        Metric::Euclidean => DistanceMetric::Euclidean,
    };
    let tracks = read_drone_csv(open(&a.tracks)?).map_err(|e| match e {
        Error::InvalidInput(m) => CliError::Invalid(format!("{}: {m}", a.tracks.display())),
        other => other.into(),
    })?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in &tracks {
        let obs = t.observations();
        let v = drone_velocity(t, &spec, metric)?;
        let (first, last) = (obs[0].frame, obs[obs.len() - 1].frame);
        w.serialize(DroneRow {
            track_id: t.track_id(),
            first_frame: first,
            last_frame: last,
            distance_m: v * (last - first) as f64 / spec.fps,
            speed_mps: v,
            speed_kmh: v * 3.6,
        })
        .map_err(|e| CliError::invalid(e.to_string()))?;
    }
    let buf = w
        .into_inner()
        .map_err(|e| CliError::invalid(e.to_string()))?;
    let mut out = Outputs::default();
    out.add(&a.out, buf);
    out.commit()
}

fn parse_hhmm(flag: &str, s: &str) -> CliResult<chrono::NaiveTime> {
    chrono::NaiveTime::parse_from_str(s, "%H:%M")
        .or_else(|_| chrono::NaiveTime::parse_from_str(s, "%H:%M:%S"))
        .map_err(|_| CliError::invalid(format!("--{flag}: expected HH:MM, got `{s}`")))
}

fn gps_residuals_cmd(a: GpsArgs) -> CliResult {
    let cfg = GpsMatchConfig {
        window: (
            parse_hhmm("window-start", &a.window_start)?,
            parse_hhmm("window-end", &a.window_end)?,
        ),
        buffer_m: a.buffer,
        time_tolerance_s: a.time_tolerance,
    };
    cfg.validate()?;
    let tracks = read_gps_geojson(&a.gps)?;
    let dets = parse_dataset(&a.detections)?;
    let rows = read_velocity_csv(open(&a.velocities)?)?;
    let speeds: HashMap<(u64, u64), &VelocityRow> =
        rows.iter().map(|r| ((r.image_id, r.echo_id), r)).collect();

    let mut located = Vec::new();
    for x in dets.annotations() {
        let Some(row) = speeds.get(&(x.image_id, x.echo.id)) else {
            continue;
        };
        let image = dets.image(x.image_id).expect("dataset validated image ids");
        let est = bandspeed::velocity::VelocityEstimate {
            echo_id: row.echo_id,
            d_mean: row.d_mean_m,
            delta_t: row.delta_t_s,
            speed: row.speed_mps,
            speed_kmh: row.speed_kmh,
            heading: row.heading_deg,
            score: row.score,
        };
        if let Some(l) = LocatedEstimate::new(image, &x.echo, &est) {
            located.push(l);
        }
    }
    let pairs = match_gps_to_estimates(&tracks, &located, &cfg)?;
    let report = gps_residuals(&pairs, a.bucket_kmh);
    let mut out = Outputs::default();
    out.add(&a.out, to_json(&report));
    out.commit()
}

fn read_column(path: &Path, column: &str) -> CliResult<Vec<f64>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let bad = |m: String| CliError::invalid(format!("{}: {m}", path.display()));
    let idx = r
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| bad(format!("no column `{column}`")))?;
    let mut values = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = rec.get(idx).unwrap_or("");
        let v: f64 = field
            .trim()
            .parse()
            .map_err(|_| bad(format!("row {}: `{field}` is not a number", line + 1)))?;
        values.push(v);
    }
    Ok(values)
}

fn compare(a: CompareArgs) -> CliResult {
    let xa = read_column(&a.a, &a.column)?;
    let xb = read_column(&a.b, &a.column)?;
    let report = compare_samples([&a.label_a, &a.label_b], &xa, &xb)?;
    let mut out = Outputs::default();
    out.add(&a.out, to_json(&report));
    if let Some(svg) = a.svg {
        let series = [
            (a.label_a.as_str(), xa.as_slice()),
            (a.label_b.as_str(), xb.as_slice()),
        ];
        out.add(svg, histogram_svg(&series, a.bins, &a.column));
    }
    out.commit()
}

fn mask(a: MaskArgs) -> CliResult {
    let grid = load_grid(&a.raster)?;
    let lines = read_centerlines_geojson(&a.centerlines)?;
    let m = rasterize_road_mask(&lines, a.buffer, &grid)?;
    let mut out = Outputs::default();
    out.add(&a.out, to_json(&m));
    out.commit()
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Correct(a) => correct(a),
        Command::Speed(a) => speed(a),
        Command::Eval(a) => eval(a),
        Command::DroneSpeed(a) => drone_speed(a),
        Command::GpsResiduals(a) => gps_residuals_cmd(a),
        Command::Compare(a) => compare(a),
        Command::Mask(a) => mask(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
