use std::fs;
use std::path::Path;

use geojson::{GeoJson, Geometry, Value};
use serde::{Deserialize, Serialize};

use super::RasterGrid;
use crate::error::{Error, Result};

/// A road centreline as a sequence of world-metre vertices.
pub type Polyline = Vec<(f64, f64)>;

/// Boolean road region aligned with a raster grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoadMask {
    pub width: usize,
    pub height: usize,
    #[serde(with = "bits")]
    pub mask: Vec<bool>,
}

impl RoadMask {
    pub fn get(&self, col: usize, row: usize) -> bool {
        self.mask[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

// Masks serialize as 0/1 integers, which keeps files compact and readable.
mod bits {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(mask: &[bool], s: S) -> Result<S::Ok, S::Error> {
        mask.iter()
            .map(|&b| b as u8)
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        Ok(Vec::<u8>::deserialize(d)?
            .into_iter()
            .map(|b| b != 0)
            .collect())
    }
}

/// Distance from `p` to the segment `a`-`b`.
///
/// Uses the perpendicular (cross product) form inside the segment span so
/// that points lying on an axis-aligned segment get exactly zero.
pub(crate) fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let (px, py) = (p.0 - a.0, p.1 - a.1);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return px.hypot(py);
    }
    let dot = px * dx + py * dy;
    if dot <= 0.0 {
        px.hypot(py)
    } else if dot >= len2 {
        (p.0 - b.0).hypot(p.1 - b.1)
    } else {
        (dx * py - dy * px).abs() / len2.sqrt()
    }
}

/// Mark every pixel whose centre lies within `buffer` metres of any
/// centreline segment.
pub fn rasterize_road_mask(
    centerlines: &[Polyline],
    buffer: f64,
    grid: &RasterGrid,
) -> Result<RoadMask> {
    if !(buffer >= 0.0) || !buffer.is_finite() {
        return Err(Error::param(
            "buffer",
            format!("must be >= 0, got {buffer}"),
        ));
    }
    let t = grid.geotransform();
    t.ensure_invertible()?;
    let (w, h) = (grid.width(), grid.height());
    let mut mask = vec![false; w * h];

    for line in centerlines {
        let segments: Vec<_> = if line.len() == 1 {
            vec![(line[0], line[0])]
        } else {
            line.windows(2).map(|s| (s[0], s[1])).collect()
        };
        for (a, b) in segments {
            // Pixel window covering the buffered segment bounding box, padded
            // by one pixel; the exact test below decides membership.
            let (x0, x1) = (a.0.min(b.0) - buffer, a.0.max(b.0) + buffer);
            let (y0, y1) = (a.1.min(b.1) - buffer, a.1.max(b.1) + buffer);
            let mut cmin = f64::INFINITY;
            let mut cmax = f64::NEG_INFINITY;
            let mut rmin = f64::INFINITY;
            let mut rmax = f64::NEG_INFINITY;
            for (x, y) in [(x0, y0), (x0, y1), (x1, y0), (x1, y1)] {
                let (c, r) = t.world_to_pixel_index(x, y)?;
                cmin = cmin.min(c);
                cmax = cmax.max(c);
                rmin = rmin.min(r);
                rmax = rmax.max(r);
            }
            let c_lo = (cmin.floor() - 1.0).max(0.0) as usize;
            let r_lo = (rmin.floor() - 1.0).max(0.0) as usize;
            if cmax < -1.0 || rmax < -1.0 {
                continue;
            }
            let c_hi = ((cmax.ceil() + 1.0) as usize).min(w - 1);
            let r_hi = ((rmax.ceil() + 1.0) as usize).min(h - 1);
            if c_lo > c_hi || r_lo > r_hi {
                continue;
            }
            for row in r_lo..=r_hi {
                for col in c_lo..=c_hi {
                    let idx = row * w + col;
                    if mask[idx] {
                        continue;
                    }
                    let p = t.pixel_center(col as f64, row as f64);
                    if point_segment_distance(p, a, b) <= buffer {
                        mask[idx] = true;
                    }
                }
            }
        }
    }
    Ok(RoadMask {
        width: w,
        height: h,
        mask,
    })
}

/// Read LineString / MultiLineString geometries (in any GeoJSON container)
/// as centrelines. Other geometry types are ignored.
pub fn read_centerlines_geojson(path: impl AsRef<Path>) -> Result<Vec<Polyline>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: GeoJson = text.parse().map_err(|e| Error::format(path, e))?;
    let mut out = Vec::new();
    match doc {
        GeoJson::FeatureCollection(fc) => {
            for f in fc.features {
                if let Some(g) = f.geometry {
                    collect_lines(&g, &mut out);
                }
            }
        }
        GeoJson::Feature(f) => {
            if let Some(g) = f.geometry {
                collect_lines(&g, &mut out);
            }
        }
        GeoJson::Geometry(g) => collect_lines(&g, &mut out),
    }
    Ok(out)
}

fn collect_lines(g: &Geometry, out: &mut Vec<Polyline>) {
    let to_line = |coords: &Vec<Vec<f64>>| -> Polyline {
        coords
            .iter()
            .filter(|p| p.len() >= 2)
            .map(|p| (p[0], p[1]))
            .collect()
    };
    match &g.value {
        Value::LineString(ls) => out.push(to_line(ls)),
        Value::MultiLineString(mls) => out.extend(mls.iter().map(to_line)),
        Value::GeometryCollection(gs) => gs.iter().for_each(|g| collect_lines(g, out)),
        _ => {}
    }
}
