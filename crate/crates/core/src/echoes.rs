//! Moving-echo keypoints, trajectories and annotation datasets.
//!
//! An echo is one vehicle seen in three bands captured one after another;
//! its trajectory is the blue, red and green peak positions in that order.
//! Keypoint coordinates are fractional pixel indices: `(3.0, 4.0)` is the
//! centre of the pixel in column 3, row 4.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{AffineTransform, RasterGrid};

/// The three bands an echo trajectory visits, in capture order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Blue,
    Red,
    Green,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::Blue, Band::Red, Band::Green];

    /// Position in the capture sequence (blue = 0).
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Band::Blue => "blue",
            Band::Red => "red",
            Band::Green => "green",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub col: f64,
    pub row: f64,
    pub band: Band,
}

impl Keypoint {
    pub fn new(col: f64, row: f64, band: Band) -> Self {
        Self { col, row, band }
    }

    pub fn distance(&self, other: &Keypoint) -> f64 {
        (self.col - other.col).hypot(self.row - other.row)
    }

    /// World position of this keypoint (pixel-centre convention).
    pub fn to_world(&self, t: &AffineTransform) -> (f64, f64) {
        t.pixel_center(self.col, self.row)
    }

    /// Inside the pixel footprint of a `width` x `height` image.
    pub fn in_bounds(&self, width: usize, height: usize) -> bool {
        (-0.5..width as f64 - 0.5).contains(&self.col)
            && (-0.5..height as f64 - 0.5).contains(&self.row)
    }
}

/// Axis-aligned box `(x, y, w, h)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from([x, y, w, h]: [f64; 4]) -> Self {
        Self { x, y, w, h }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    /// Hull of the keypoints padded by one pixel on every side.
    pub fn around(keypoints: &[Keypoint; 3]) -> Self {
        let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
        let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for kp in keypoints {
            x0 = x0.min(kp.col);
            y0 = y0.min(kp.row);
            x1 = x1.max(kp.col);
            y1 = y1.max(kp.row);
        }
        Self {
            x: x0 - 1.0,
            y: y0 - 1.0,
            w: x1 - x0 + 2.0,
            h: y1 - y0 + 2.0,
        }
    }
}

/// One vehicle echo: blue, red and green keypoints, a box and a confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoTrajectory {
    pub id: u64,
    keypoints: [Keypoint; 3],
    pub bbox: BBox,
    pub score: f64,
}

impl EchoTrajectory {
    /// Build from `(col, row)` positions in blue, red, green order. The box
    /// is derived from the keypoints.
    pub fn new(id: u64, positions: [(f64, f64); 3], score: f64) -> Result<Self> {
        let keypoints = positions_to_keypoints(positions);
        let bbox = BBox::around(&keypoints);
        Self::with_bbox(id, keypoints, bbox, score)
    }

    pub fn with_bbox(id: u64, keypoints: [Keypoint; 3], bbox: BBox, score: f64) -> Result<Self> {
        let bad = |message: String| Error::InvalidAnnotation { id, message };
        for (kp, band) in keypoints.iter().zip(Band::ALL) {
            if kp.band != band {
                return Err(bad(format!(
                    "keypoints must be ordered blue, red, green; found {} in the {} slot",
                    kp.band, band
                )));
            }
            if !kp.col.is_finite() || !kp.row.is_finite() {
                return Err(bad(format!("non-finite {band} keypoint")));
            }
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(bad(format!("score {score} outside [0, 1]")));
        }
        let b: [f64; 4] = bbox.into();
        if b.iter().any(|v| !v.is_finite()) || bbox.w < 0.0 || bbox.h < 0.0 {
            return Err(bad(format!("invalid bbox {b:?}")));
        }
        Ok(Self {
            id,
            keypoints,
            bbox,
            score,
        })
    }

    pub fn keypoints(&self) -> &[Keypoint; 3] {
        &self.keypoints
    }

    pub fn keypoint(&self, band: Band) -> &Keypoint {
        &self.keypoints[band.index()]
    }

    pub fn positions(&self) -> [(f64, f64); 3] {
        self.keypoints.map(|k| (k.col, k.row))
    }

    /// Same echo with new keypoint positions and a recomputed box.
    pub fn with_positions(&self, positions: [(f64, f64); 3]) -> Self {
        let keypoints = positions_to_keypoints(positions);
        Self {
            id: self.id,
            bbox: BBox::around(&keypoints),
            keypoints,
            score: self.score,
        }
    }
}

fn positions_to_keypoints(p: [(f64, f64); 3]) -> [Keypoint; 3] {
    [
        Keypoint::new(p[0].0, p[0].1, Band::Blue),
        Keypoint::new(p[1].0, p[1].1, Band::Red),
        Keypoint::new(p[2].0, p[2].1, Band::Green),
    ]
}

/// Blue-to-red plus red-to-green Euclidean pixel distance.
pub fn trajectory_length_px(e: &EchoTrajectory) -> f64 {
    let [b, r, g] = e.keypoints();
    b.distance(r) + r.distance(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageEntry {
    pub id: u64,
    pub file: String,
    pub width: usize,
    pub height: usize,
    pub geotransform: AffineTransform,
    pub timestamp: Option<DateTime<FixedOffset>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub image_id: u64,
    pub echo: EchoTrajectory,
}

/// Images plus the echoes annotated (or detected) in them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EchoDataset {
    images: Vec<ImageEntry>,
    annotations: Vec<Annotation>,
}

impl EchoDataset {
    /// Validates id uniqueness and that every annotation points at an image.
    pub fn new(images: Vec<ImageEntry>, annotations: Vec<Annotation>) -> Result<Self> {
        let mut image_ids = BTreeSet::new();
        for img in &images {
            if !image_ids.insert(img.id) {
                return Err(Error::InvalidImage {
                    id: img.id,
                    message: "duplicate image id".into(),
                });
            }
            if img.width == 0 || img.height == 0 {
                return Err(Error::InvalidImage {
                    id: img.id,
                    message: format!(
                        "dimensions must be positive, got {}x{}",
                        img.width, img.height
                    ),
                });
            }
        }
        let mut ann_ids = BTreeSet::new();
        for ann in &annotations {
            let id = ann.echo.id;
            if !ann_ids.insert(id) {
                return Err(Error::InvalidAnnotation {
                    id,
                    message: "duplicate annotation id".into(),
                });
            }
            if !image_ids.contains(&ann.image_id) {
                return Err(Error::InvalidAnnotation {
                    id,
                    message: format!("references unknown image_id {}", ann.image_id),
                });
            }
        }
        Ok(Self {
            images,
            annotations,
        })
    }

    pub fn images(&self) -> &[ImageEntry] {
        &self.images
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn image(&self, id: u64) -> Option<&ImageEntry> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn echoes_in(&self, image_id: u64) -> impl Iterator<Item = &EchoTrajectory> {
        self.annotations
            .iter()
            .filter(move |a| a.image_id == image_id)
            .map(|a| &a.echo)
    }

    /// Echoes grouped per image id (images without echoes map to empty lists).
    pub fn by_image(&self) -> HashMap<u64, Vec<&EchoTrajectory>> {
        let mut out: HashMap<u64, Vec<&EchoTrajectory>> =
            self.images.iter().map(|i| (i.id, Vec::new())).collect();
        for a in &self.annotations {
            out.entry(a.image_id).or_default().push(&a.echo);
        }
        out
    }

    /// Replace the annotations, keeping the images. Used after correction.
    pub fn with_annotations(&self, annotations: Vec<Annotation>) -> Result<Self> {
        Self::new(self.images.clone(), annotations)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawDataset {
    images: Vec<RawImage>,
    annotations: Vec<RawAnnotation>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawImage {
    id: u64,
    file: String,
    width: usize,
    height: usize,
    geotransform: AffineTransform,
    #[serde(default)]
    timestamp: Option<DateTime<FixedOffset>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawAnnotation {
    id: u64,
    image_id: u64,
    keypoints: Vec<f64>,
    #[serde(default)]
    bbox: Option<Vec<f64>>,
    #[serde(default)]
    score: Option<f64>,
}

/// Visibility flag written for every keypoint.
const VISIBLE: f64 = 2.0;

impl RawAnnotation {
    fn into_annotation(self) -> Result<Annotation> {
        let id = self.id;
        let bad = |message: String| Error::InvalidAnnotation { id, message };
        if self.keypoints.len() != 9 {
            return Err(bad(format!(
                "expected 3 keypoints (9 values), found {} values",
                self.keypoints.len()
            )));
        }
        let k = &self.keypoints;
        let positions = [(k[0], k[1]), (k[3], k[4]), (k[6], k[7])];
        let keypoints = positions_to_keypoints(positions);
        let bbox = match self.bbox {
            None => BBox::around(&keypoints),
            Some(b) if b.len() == 4 => BBox::from([b[0], b[1], b[2], b[3]]),
            Some(b) => return Err(bad(format!("bbox must have 4 values, found {}", b.len()))),
        };
        let echo = EchoTrajectory::with_bbox(id, keypoints, bbox, self.score.unwrap_or(1.0))?;
        Ok(Annotation {
            image_id: self.image_id,
            echo,
        })
    }

    fn from_annotation(a: &Annotation) -> Self {
        let e = &a.echo;
        let keypoints = e
            .keypoints()
            .iter()
            .flat_map(|k| [k.col, k.row, VISIBLE])
            .collect();
        Self {
            id: e.id,
            image_id: a.image_id,
            keypoints,
            bbox: Some(<[f64; 4]>::from(e.bbox).to_vec()),
            score: Some(e.score),
        }
    }
}

pub fn dataset_from_json(text: &str) -> Result<EchoDataset> {
    let raw: RawDataset =
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("dataset: {e}")))?;
    from_raw(raw)
}

fn from_raw(raw: RawDataset) -> Result<EchoDataset> {
    let images = raw
        .images
        .into_iter()
        .map(|i| ImageEntry {
            id: i.id,
            file: i.file,
            width: i.width,
            height: i.height,
            geotransform: i.geotransform,
            timestamp: i.timestamp,
        })
        .collect();
    let annotations = raw
        .annotations
        .into_iter()
        .map(RawAnnotation::into_annotation)
        .collect::<Result<Vec<_>>>()?;
    EchoDataset::new(images, annotations)
}

/// Canonical JSON form: every annotation carries its box, its score and
/// visibility 2 on each keypoint.
pub fn dataset_to_json(d: &EchoDataset) -> String {
    let raw = RawDataset {
        images: d
            .images
            .iter()
            .map(|i| RawImage {
                id: i.id,
                file: i.file.clone(),
                width: i.width,
                height: i.height,
                geotransform: i.geotransform,
                timestamp: i.timestamp,
            })
            .collect(),
        annotations: d
            .annotations
            .iter()
            .map(RawAnnotation::from_annotation)
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("dataset serialization cannot fail")
}

pub fn parse_dataset(path: impl AsRef<Path>) -> Result<EchoDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: RawDataset = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
    from_raw(raw)
}

/// Problems found when checking a dataset against a raster.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    OutOfBounds {
        annotation_id: u64,
        band: Band,
        col: f64,
        row: f64,
    },
    DimensionMismatch {
        image_id: u64,
        dataset: (usize, usize),
        raster: (usize, usize),
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OutOfBounds {
                annotation_id,
                band,
                col,
                row,
            } => write!(
                f,
                "annotation {annotation_id}: {band} keypoint ({col}, {row}) outside the image"
            ),
            Violation::DimensionMismatch {
                image_id,
                dataset,
                raster,
            } => write!(
                f,
                "image {image_id}: dataset says {}x{}, raster is {}x{}",
                dataset.0, dataset.1, raster.0, raster.1
            ),
        }
    }
}

/// List dimension mismatches and out-of-bounds keypoints. An empty list
/// means the dataset fits the raster.
pub fn validate_against_raster(d: &EchoDataset, g: &RasterGrid) -> Vec<Violation> {
    let mut out = Vec::new();
    for img in &d.images {
        if (img.width, img.height) != (g.width(), g.height()) {
            out.push(Violation::DimensionMismatch {
                image_id: img.id,
                dataset: (img.width, img.height),
                raster: (g.width(), g.height()),
            });
        }
    }
    for a in &d.annotations {
        for kp in a.echo.keypoints() {
            if !kp.in_bounds(g.width(), g.height()) {
                out.push(Violation::OutOfBounds {
                    annotation_id: a.echo.id,
                    band: kp.band,
                    col: kp.col,
                    row: kp.row,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::BandPlane;

    const MINIMAL: &str = r#"{
      "images":[{"id":1,"file":"clip.json","width":16,"height":16,
                 "geotransform":[0,3.7,0,0,0,-3.7],"timestamp":null}],
      "annotations":[{"id":7,"image_id":1,"keypoints":[1,1,2,3,1,2,5,1,2],"score":1.0}]}"#;

    fn echo(p: [(f64, f64); 3]) -> EchoTrajectory {
        EchoTrajectory::new(1, p, 1.0).unwrap()
    }

    #[test]
    fn minimal_dataset_parses() {
        let d = dataset_from_json(MINIMAL).unwrap();
        assert_eq!(d.annotations().len(), 1);
        let e = &d.annotations()[0].echo;
        assert_eq!(e.positions(), [(1., 1.), (3., 1.), (5., 1.)]);
        assert_eq!(e.bbox, BBox::from([0., 0., 6., 2.]));
        assert_eq!(e.score, 1.0);
    }

    #[test]
    fn two_keypoints_names_the_annotation() {
        let text = MINIMAL.replace("[1,1,2,3,1,2,5,1,2]", "[1,1,2,3,1,2]");
        let err = dataset_from_json(&text).unwrap_err();
        assert!(
            matches!(err, Error::InvalidAnnotation { id: 7, .. }),
            "{err}"
        );
        assert!(err.to_string().contains("annotation 7"));
    }

    #[test]
    fn dangling_image_and_duplicate_ids_rejected() {
        let text = MINIMAL.replace("\"image_id\":1", "\"image_id\":9");
        assert!(dataset_from_json(&text)
            .unwrap_err()
            .to_string()
            .contains("unknown image_id 9"));

        let d = dataset_from_json(MINIMAL).unwrap();
        let mut anns = d.annotations().to_vec();
        anns.push(anns[0].clone());
        assert!(d.with_annotations(anns).is_err());
    }

    #[test]
    fn score_outside_unit_interval_rejected() {
        let text = MINIMAL.replace("\"score\":1.0", "\"score\":1.5");
        assert!(dataset_from_json(&text).is_err());
    }

    #[test]
    fn trajectory_length_examples() {
        assert_eq!(
            trajectory_length_px(&echo([(0., 0.), (3., 4.), (6., 8.)])),
            10.0
        );
        assert_eq!(
            trajectory_length_px(&echo([(2., 2.), (2., 2.), (2., 2.)])),
            0.0
        );
        assert_eq!(
            trajectory_length_px(&echo([(0., 0.), (1., 0.), (1., 1.)])),
            2.0
        );
    }

    fn grid(w: usize, h: usize) -> RasterGrid {
        let bands = (0..3)
            .map(|_| BandPlane::new(vec![0.0; w * h]).unwrap())
            .collect();
        RasterGrid::with_default_labels(w, h, bands, AffineTransform::north_up(0., 0., 1.)).unwrap()
    }

    fn single(w: usize, h: usize, p: [(f64, f64); 3]) -> EchoDataset {
        let img = ImageEntry {
            id: 1,
            file: "x".into(),
            width: w,
            height: h,
            geotransform: AffineTransform::north_up(0., 0., 1.),
            timestamp: None,
        };
        EchoDataset::new(
            vec![img],
            vec![Annotation {
                image_id: 1,
                echo: echo(p),
            }],
        )
        .unwrap()
    }

    #[test]
    fn validate_against_raster_examples() {
        let d = single(8, 8, [(-1., 3.), (2., 3.), (4., 3.)]);
        let v = validate_against_raster(&d, &grid(8, 8));
        assert_eq!(v.len(), 1);
        assert!(matches!(
            v[0],
            Violation::OutOfBounds {
                band: Band::Blue,
                ..
            }
        ));

        let d = single(8, 8, [(0., 0.), (3., 3.), (7., 7.)]);
        assert!(validate_against_raster(&d, &grid(8, 8)).is_empty());

        let d = single(512, 8, [(0., 0.), (1., 1.), (2., 2.)]);
        let v = validate_against_raster(&d, &grid(256, 8));
        assert_eq!(
            v,
            vec![Violation::DimensionMismatch {
                image_id: 1,
                dataset: (512, 8),
                raster: (256, 8)
            }]
        );
    }

    #[test]
    fn canonical_form_round_trips() {
        let text = r#"{
          "images":[
            {"id":1,"file":"a.json","width":32,"height":32,"geotransform":[500000,3.7,0,5200000,0,-3.7],
             "timestamp":"2024-05-03T09:41:12+02:00"},
            {"id":2,"file":"b.json","width":20,"height":24,"geotransform":[0,3.0,0,0,0,-3.0]}],
          "annotations":[
            {"id":1,"image_id":1,"keypoints":[1.5,2.25,2,3,2.5,2,4.75,3,2],"score":0.93},
            {"id":2,"image_id":1,"keypoints":[10,10,1,11,10,1,12,10,1]},
            {"id":3,"image_id":2,"keypoints":[5,5,2,5,7,2,5,9,2],"bbox":[4,4,2,6],"score":0.71},
            {"id":4,"image_id":2,"keypoints":[0,0,0,0,0,0,0,0,0],"score":0.2},
            {"id":5,"image_id":1,"keypoints":[30.1,30.2,2,29,28,2,27.5,26.25,2],"score":1}]}"#;
        let parsed = dataset_from_json(text).unwrap();
        let canonical = dataset_to_json(&parsed);
        let reparsed = dataset_from_json(&canonical).unwrap();
        assert_eq!(parsed, reparsed);
        assert_eq!(canonical, dataset_to_json(&reparsed));
        assert!(canonical.contains("2024-05-03T09:41:12+02:00"));
        // bbox filled in, visibility forced to 2
        let v: serde_json::Value = serde_json::from_str(&canonical).unwrap();
        assert_eq!(
            v["annotations"][1]["bbox"],
            serde_json::json!([9.0, 9.0, 4.0, 2.0])
        );
        assert_eq!(v["annotations"][1]["keypoints"][2], serde_json::json!(2.0));
    }
}
