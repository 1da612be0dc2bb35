//! Grayscale reconstruction by dilation, regional maxima and h-maxima on
//! row-major `f64` images.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BandPlane;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    /// Edge neighbours only.
    Four,
    /// Edge and corner neighbours.
    Eight,
}

impl Connectivity {
    pub fn from_count(n: u8) -> Option<Self> {
        match n {
            4 => Some(Connectivity::Four),
            8 => Some(Connectivity::Eight),
            _ => None,
        }
    }
}

/// Structuring element: an odd `size` window, either square (eight
/// connectivity) or diamond shaped (four connectivity). `size = 3` gives the
/// usual 3x3 and cross neighbourhoods.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Footprint {
    offsets: Vec<(isize, isize)>,
}

impl Footprint {
    pub fn new(connectivity: Connectivity, size: usize) -> Result<Self> {
        if size < 3 || size.is_multiple_of(2) {
            return Err(Error::param(
                "neighborhood",
                format!("must be odd and >= 3, got {size}"),
            ));
        }
        let r = (size / 2) as isize;
        let mut offsets = Vec::new();
        for dr in -r..=r {
            for dc in -r..=r {
                if (dr, dc) == (0, 0) {
                    continue;
                }
                let inside = match connectivity {
                    Connectivity::Eight => true,
                    Connectivity::Four => dr.abs() + dc.abs() <= r,
                };
                if inside {
                    offsets.push((dr, dc));
                }
            }
        }
        Ok(Self { offsets })
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }

    fn neighbors(
        &self,
        idx: usize,
        width: usize,
        height: usize,
    ) -> impl Iterator<Item = usize> + '_ {
        let (row, col) = ((idx / width) as isize, (idx % width) as isize);
        self.offsets.iter().filter_map(move |&(dr, dc)| {
            let (r, c) = (row + dr, col + dc);
            (r >= 0 && c >= 0 && (r as usize) < height && (c as usize) < width)
                .then(|| r as usize * width + c as usize)
        })
    }
}

#[derive(PartialEq)]
struct Queued(f64, usize);

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(other.1.cmp(&self.1))
    }
}

/// Grayscale reconstruction of `marker` under `mask`: the limit of repeated
/// geodesic dilation `min(dilate(marker), mask)`.
///
/// Uses a max-priority queue so each pixel settles once its final value is
/// known.
pub fn reconstruct_by_dilation(
    marker: &[f64],
    mask: &[f64],
    width: usize,
    height: usize,
    footprint: &Footprint,
) -> Vec<f64> {
    assert_eq!(marker.len(), width * height);
    assert_eq!(mask.len(), width * height);
    let mut rec: Vec<f64> = marker.iter().zip(mask).map(|(&m, &k)| m.min(k)).collect();
    let mut heap: BinaryHeap<Queued> = rec.iter().enumerate().map(|(i, &v)| Queued(v, i)).collect();
    while let Some(Queued(v, p)) = heap.pop() {
        if v < rec[p] {
            continue;
        }
        for q in footprint.neighbors(p, width, height) {
            let cand = v.min(mask[q]);
            if cand > rec[q] {
                rec[q] = cand;
                heap.push(Queued(cand, q));
            }
        }
    }
    rec
}

/// Regional maxima: connected plateaus of equal value whose neighbours are
/// all strictly lower. A plateau covering the whole image has no lower
/// neighbour and is not a maximum.
pub fn regional_maxima(
    img: &[f64],
    width: usize,
    height: usize,
    footprint: &Footprint,
) -> Vec<bool> {
    let n = width * height;
    assert_eq!(img.len(), n);
    let mut visited = vec![false; n];
    let mut is_max = vec![false; n];
    let mut plateau = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        let level = img[start];
        plateau.clear();
        visited[start] = true;
        queue.push_back(start);
        let mut higher = false;
        let mut lower = false;
        while let Some(p) = queue.pop_front() {
            plateau.push(p);
            for q in footprint.neighbors(p, width, height) {
                let v = img[q];
                if v == level {
                    if !visited[q] {
                        visited[q] = true;
                        queue.push_back(q);
                    }
                } else if v > level {
                    higher = true;
                } else {
                    lower = true;
                }
            }
        }
        if lower && !higher {
            for &p in &plateau {
                is_max[p] = true;
            }
        }
    }
    is_max
}

/// Pixels of every regional maximum whose height above its surroundings is
/// at least `h`, returned as `(col, row)` in row-major order.
///
/// Computed as the regional maxima of the reconstruction by dilation of
/// `band - h` under `band`. The band is expected to be normalized to
/// `[0, 1]` so that `h` is a fraction of its dynamic range.
pub fn detect_h_maxima(
    band: &BandPlane,
    width: usize,
    height: usize,
    h: f64,
    footprint: &Footprint,
) -> Result<Vec<(usize, usize)>> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::param("h", format!("must lie in (0, 1), got {h}")));
    }
    if band.len() != width * height {
        return Err(Error::InvalidRaster(format!(
            "band has {} values, expected {}",
            band.len(),
            width * height
        )));
    }
    let mask = band.values();
    let marker: Vec<f64> = mask.iter().map(|v| v - h).collect();
    let rec = reconstruct_by_dilation(&marker, mask, width, height, footprint);
    let maxima = regional_maxima(&rec, width, height, footprint);
    Ok(maxima
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| (i % width, i / width))
        .collect())
}
