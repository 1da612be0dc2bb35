//! Keypoint correction: snap each keypoint to the nearest h-maxima peak of
//! its own band when that peak is close enough.
//!
//! For every band the normalized intensities are reduced to the pixels of
//! their h-maxima, those pixels go into a k-d tree, and each keypoint of that
//! band moves to its nearest peak if the peak is strictly closer than
//! `max_shift_distance`. Otherwise the keypoint keeps its position.

pub mod kdtree;
pub mod morphology;

use serde::{Deserialize, Serialize};

use crate::echoes::{Band, EchoTrajectory};
use crate::error::{Error, Result};
use crate::raster::{normalize_band, RasterGrid};

pub use kdtree::{KdTree, Neighbor};
pub use morphology::{
    detect_h_maxima, reconstruct_by_dilation, regional_maxima, Connectivity, Footprint,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionConfig {
    /// Minimum peak height as a fraction of the band's dynamic range.
    pub h: f64,
    /// Odd window size of the neighbourhood, in pixels.
    pub neighborhood: usize,
    pub connectivity: Connectivity,
    /// Largest allowed keypoint move, in pixels (exclusive).
    pub max_shift_distance: f64,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self {
            h: 0.02,
            neighborhood: 3,
            connectivity: Connectivity::Eight,
            max_shift_distance: 2.0,
        }
    }
}

impl CorrectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h < 1.0) {
            return Err(Error::param(
                "h",
                format!("must lie in (0, 1), got {}", self.h),
            ));
        }
        if !(self.max_shift_distance >= 0.0) {
            return Err(Error::param(
                "max_shift_distance",
                format!("must be >= 0, got {}", self.max_shift_distance),
            ));
        }
        self.footprint().map(|_| ())
    }

    pub fn footprint(&self) -> Result<Footprint> {
        Footprint::new(self.connectivity, self.neighborhood)
    }
}

/// One k-d tree of peak pixels per trajectory band.
#[derive(Debug, Clone)]
pub struct PeakIndex {
    trees: [KdTree; 3],
    peaks: [Vec<(usize, usize)>; 3],
}

impl PeakIndex {
    /// Index from explicit peak lists (blue, red, green).
    pub fn from_peaks(peaks: [Vec<(usize, usize)>; 3]) -> Self {
        let trees = [
            KdTree::build(&peaks[0]),
            KdTree::build(&peaks[1]),
            KdTree::build(&peaks[2]),
        ];
        Self { trees, peaks }
    }

    pub fn tree(&self, band: Band) -> &KdTree {
        &self.trees[band.index()]
    }

    /// Peak pixels `(col, row)` detected in `band`.
    pub fn peaks(&self, band: Band) -> &[(usize, usize)] {
        &self.peaks[band.index()]
    }

    pub fn nearest(&self, band: Band, col: f64, row: f64) -> Option<Neighbor> {
        self.tree(band).nearest(col, row)
    }
}

/// Raster band indices holding the blue, red and green captures. Bands are
/// looked up by label and fall back to the first three bands in order.
pub fn trajectory_band_indices(grid: &RasterGrid) -> Result<[usize; 3]> {
    if grid.bands().len() < 3 {
        return Err(Error::TooFewBands(grid.bands().len()));
    }
    let by_label = Band::ALL.map(|b| grid.band_index(b.label()));
    match by_label {
        [Some(b), Some(r), Some(g)] => Ok([b, r, g]),
        _ => Ok([0, 1, 2]),
    }
}

/// Detect per-band h-maxima and index them. Each band is min-max normalized
/// first, which leaves already normalized bands unchanged.
pub fn build_peak_index(grid: &RasterGrid, cfg: &CorrectionConfig) -> Result<PeakIndex> {
    cfg.validate()?;
    let footprint = cfg.footprint()?;
    let indices = trajectory_band_indices(grid)?;
    let mut peaks: [Vec<(usize, usize)>; 3] = Default::default();
    for (slot, &bi) in peaks.iter_mut().zip(&indices) {
        let band = normalize_band(&grid.bands()[bi])?;
        *slot = detect_h_maxima(&band, grid.width(), grid.height(), cfg.h, &footprint)?;
    }
    Ok(PeakIndex::from_peaks(peaks))
}

/// Apply the correction rule to every keypoint of every echo. Boxes are
/// recomputed from the corrected keypoints; ids and scores are kept.
pub fn correct_keypoints(
    echoes: &[EchoTrajectory],
    index: &PeakIndex,
    cfg: &CorrectionConfig,
) -> Vec<EchoTrajectory> {
    echoes
        .iter()
        .map(|e| {
            let positions = e
                .keypoints()
                .map(|kp| match index.nearest(kp.band, kp.col, kp.row) {
                    Some(n) if n.distance < cfg.max_shift_distance => (n.col as f64, n.row as f64),
                    _ => (kp.col, kp.row),
                });
            e.with_positions(positions)
        })
        .collect()
}
