//! Multi-band raster grids, the pixel/world affine mapping, band
//! normalization and the two on-disk raster formats.

mod geotiff;
mod mask;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mask::{rasterize_road_mask, read_centerlines_geojson, Polyline, RoadMask};

/// Labels assigned to bands that a file does not name.
const DEFAULT_LABELS: [&str; 3] = ["blue", "red", "green"];

pub(crate) fn default_label(index: usize) -> String {
    DEFAULT_LABELS
        .get(index)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("band{}", index + 1))
}

/// Row-major intensities of one spectral band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPlane {
    values: Vec<f64>,
}

impl BandPlane {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Smallest and largest intensity, `None` for an empty band.
    pub fn range(&self) -> Option<(f64, f64)> {
        let mut it = self.values.iter().copied();
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }
}

/// Min-max scale a band to `[0, 1]`. A constant band maps to all zeros.
pub fn normalize_band(band: &BandPlane) -> Result<BandPlane> {
    normalize_values(band.values()).map(|values| BandPlane { values })
}

pub(crate) fn normalize_values(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidRaster(
            "cannot normalize an empty band".into(),
        ));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    if span == 0.0 {
        return Ok(vec![0.0; values.len()]);
    }
    Ok(values.iter().map(|&v| (v - lo) / span).collect())
}

/// Six-coefficient affine map from pixel `(col, row)` to world `(x, y)`:
/// `x = a + b*col + c*row`, `y = d + e*col + f*row`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 6]", into = "[f64; 6]")]
pub struct AffineTransform {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl From<[f64; 6]> for AffineTransform {
    fn from([a, b, c, d, e, f]: [f64; 6]) -> Self {
        Self { a, b, c, d, e, f }
    }
}

impl From<AffineTransform> for [f64; 6] {
    fn from(t: AffineTransform) -> Self {
        [t.a, t.b, t.c, t.d, t.e, t.f]
    }
}

impl AffineTransform {
    pub fn new(coefficients: [f64; 6]) -> Self {
        coefficients.into()
    }

    /// North-up transform with square pixels of size `gsd` whose top-left
    /// corner sits at `(origin_x, origin_y)`.
    pub fn north_up(origin_x: f64, origin_y: f64, gsd: f64) -> Self {
        Self::new([origin_x, gsd, 0.0, origin_y, 0.0, -gsd])
    }

    pub fn coefficients(&self) -> [f64; 6] {
        (*self).into()
    }

    pub fn determinant(&self) -> f64 {
        self.b * self.f - self.c * self.e
    }

    pub fn is_invertible(&self) -> bool {
        let det = self.determinant();
        det != 0.0 && det.is_finite()
    }

    pub fn ensure_invertible(&self) -> Result<()> {
        if self.is_invertible() {
            Ok(())
        } else {
            Err(Error::SingularTransform(self.determinant()))
        }
    }

    pub fn apply(&self, col: f64, row: f64) -> (f64, f64) {
        (
            self.a + self.b * col + self.c * row,
            self.d + self.e * col + self.f * row,
        )
    }

    /// World coordinates back to fractional pixel coordinates.
    pub fn invert(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        self.ensure_invertible()?;
        let det = self.determinant();
        let dx = x - self.a;
        let dy = y - self.d;
        Ok((
            (self.f * dx - self.c * dy) / det,
            (self.b * dy - self.e * dx) / det,
        ))
    }

    /// World position of the centre of the pixel with integer index
    /// `(col, row)`; fractional indices are allowed.
    pub fn pixel_center(&self, col: f64, row: f64) -> (f64, f64) {
        self.apply(col + 0.5, row + 0.5)
    }

    /// Inverse of [`AffineTransform::pixel_center`].
    pub fn world_to_pixel_index(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let (col, row) = self.invert(x, y)?;
        Ok((col - 0.5, row - 0.5))
    }

    /// Average ground size of one pixel side, `sqrt(|det|)`.
    pub fn mean_pixel_size(&self) -> f64 {
        self.determinant().abs().sqrt()
    }

    /// The same transform with its linear part multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            b: self.b * s,
            c: self.c * s,
            e: self.e * s,
            f: self.f * s,
            ..*self
        }
    }
}

/// Exact affine evaluation of a (possibly fractional) pixel coordinate.
pub fn pixel_to_world(t: &AffineTransform, col: f64, row: f64) -> (f64, f64) {
    t.apply(col, row)
}

pub fn world_to_pixel(t: &AffineTransform, x: f64, y: f64) -> Result<(f64, f64)> {
    t.invert(x, y)
}

/// A georeferenced stack of equally sized bands.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    width: usize,
    height: usize,
    bands: Vec<BandPlane>,
    geotransform: AffineTransform,
    band_labels: Vec<String>,
}

impl RasterGrid {
    pub fn new(
        width: usize,
        height: usize,
        bands: Vec<BandPlane>,
        geotransform: AffineTransform,
        band_labels: Vec<String>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width * height;
        for (i, band) in bands.iter().enumerate() {
            if band.len() != expected {
                return Err(Error::InvalidRaster(format!(
                    "band {i} has {} values, expected {expected}",
                    band.len()
                )));
            }
        }
        if band_labels.len() != bands.len() {
            return Err(Error::InvalidRaster(format!(
                "{} band labels for {} bands",
                band_labels.len(),
                bands.len()
            )));
        }
        for (i, label) in band_labels.iter().enumerate() {
            if band_labels[..i].contains(label) {
                return Err(Error::InvalidRaster(format!(
                    "duplicate band label `{label}`"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            bands,
            geotransform,
            band_labels,
        })
    }

    /// Grid with the default labels (blue, red, green, band4, ...).
    pub fn with_default_labels(
        width: usize,
        height: usize,
        bands: Vec<BandPlane>,
        geotransform: AffineTransform,
    ) -> Result<Self> {
        let labels = (0..bands.len()).map(default_label).collect();
        Self::new(width, height, bands, geotransform, labels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> &[BandPlane] {
        &self.bands
    }

    pub fn band(&self, index: usize) -> Option<&BandPlane> {
        self.bands.get(index)
    }

    pub fn band_labels(&self) -> &[String] {
        &self.band_labels
    }

    pub fn band_index(&self, label: &str) -> Option<usize> {
        self.band_labels
            .iter()
            .position(|l| l.eq_ignore_ascii_case(label))
    }

    pub fn geotransform(&self) -> &AffineTransform {
        &self.geotransform
    }

    /// Copy of the grid with every band min-max normalized.
    pub fn normalized(&self) -> Result<Self> {
        let bands = self
            .bands
            .iter()
            .map(normalize_band)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            bands,
            ..self.clone()
        })
    }

    fn require_three_bands(self) -> Result<Self> {
        if self.bands.len() < 3 {
            return Err(Error::TooFewBands(self.bands.len()));
        }
        Ok(self)
    }
}

/// On-disk raster encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    GeoTiff,
    JsonGrid,
}

impl RasterFormat {
    /// `.tif`/`.tiff` are GeoTIFF, anything else is json-grid.
    pub fn from_path(path: &Path) -> Self {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("tif") | Some("tiff") => RasterFormat::GeoTiff,
            _ => RasterFormat::JsonGrid,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonGrid {
    width: usize,
    height: usize,
    geotransform: AffineTransform,
    #[serde(default)]
    band_labels: Vec<String>,
    bands: Vec<Vec<f64>>,
}

/// Parse a json-grid document. Requires at least three bands.
pub fn raster_from_json(text: &str) -> Result<RasterGrid> {
    let doc: JsonGrid =
        serde_json::from_str(text).map_err(|e| Error::InvalidRaster(e.to_string()))?;
    grid_from_doc(doc)
}

fn grid_from_doc(doc: JsonGrid) -> Result<RasterGrid> {
    let labels = if doc.band_labels.is_empty() {
        (0..doc.bands.len()).map(default_label).collect()
    } else {
        doc.band_labels
    };
    let bands = doc
        .bands
        .into_iter()
        .map(BandPlane::new)
        .collect::<Result<Vec<_>>>()?;
    RasterGrid::new(doc.width, doc.height, bands, doc.geotransform, labels)?.require_three_bands()
}

pub fn raster_to_json(grid: &RasterGrid) -> String {
    let doc = JsonGrid {
        width: grid.width,
        height: grid.height,
        geotransform: grid.geotransform,
        band_labels: grid.band_labels.clone(),
        bands: grid.bands.iter().map(|b| b.values.clone()).collect(),
    };
    serde_json::to_string(&doc).expect("json-grid serialization cannot fail")
}

pub fn load_raster(path: impl AsRef<Path>, format: RasterFormat) -> Result<RasterGrid> {
    let path = path.as_ref();
    match format {
        RasterFormat::JsonGrid => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let doc: JsonGrid = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
            grid_from_doc(doc)
        }
        RasterFormat::GeoTiff => geotiff::read(path)?.require_three_bands(),
    }
}

/// Encode `grid` into bytes of the given format.
pub fn encode_raster(grid: &RasterGrid, format: RasterFormat) -> Result<Vec<u8>> {
    match format {
        RasterFormat::JsonGrid => Ok(raster_to_json(grid).into_bytes()),
        RasterFormat::GeoTiff => geotiff::encode(grid),
    }
}

pub fn save_raster(grid: &RasterGrid, path: impl AsRef<Path>, format: RasterFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_raster(grid, format)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
