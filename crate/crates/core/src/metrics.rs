//! Detection quality for echo trajectories: object keypoint similarity with
//! the trajectory length as object scale, greedy matching, COCO-style
//! 101-point average precision, mAP over OKS thresholds and the RMSE of
//! trajectory lengths.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Serialize, Serializer};

use crate::echoes::{trajectory_length_px, EchoDataset, EchoTrajectory};
use crate::error::{Error, Result};

/// Number of recall sample points used for AP.
pub const RECALL_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq)]
pub struct OksConfig {
    /// Object scale `s`.
    pub s: f64,
    /// Detections with score at or below this are discarded.
    pub score_threshold: f64,
    /// OKS levels averaged into mAP.
    pub thresholds: Vec<f64>,
    /// OKS level at which pairs feed the RMSE and the TP/FP/FN counts.
    pub rmse_threshold: f64,
}

impl Default for OksConfig {
    fn default() -> Self {
        Self {
            s: 1.0,
            score_threshold: 0.7,
            thresholds: default_thresholds(),
            rmse_threshold: 0.5,
        }
    }
}

/// 0.50, 0.55, ..., 0.95.
pub fn default_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

impl OksConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::param(
                "s",
                format!("must be positive, got {}", self.s),
            ));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::param(
                "score_threshold",
                format!("must lie in [0, 1], got {}", self.score_threshold),
            ));
        }
        if self.thresholds.is_empty() {
            return Err(Error::param("thresholds", "must not be empty"));
        }
        let in_range = |t: f64| t > 0.0 && t <= 1.0;
        if !self.thresholds.iter().all(|&t| in_range(t))
            || !self.thresholds.windows(2).all(|w| w[0] < w[1])
        {
            return Err(Error::param(
                "thresholds",
                "must be strictly increasing values in (0, 1]",
            ));
        }
        if !in_range(self.rmse_threshold) {
            return Err(Error::param("rmse_threshold", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Scale used for a ground-truth echo: its trajectory length, floored at
/// one pixel so stationary echoes stay well defined.
pub fn oks_scale(gt: &EchoTrajectory) -> f64 {
    trajectory_length_px(gt).max(1.0)
}

/// True when the ground truth is shorter than one pixel and the floor in
/// [`oks_scale`] applies.
pub fn is_stationary(gt: &EchoTrajectory) -> bool {
    trajectory_length_px(gt) < 1.0
}

/// `mean_i exp(-d_i^2 / (2 s^2 k^2))` over the blue, red and green
/// keypoints, with `k` the ground-truth trajectory length.
pub fn oks(pred: &EchoTrajectory, gt: &EchoTrajectory, cfg: &OksConfig) -> f64 {
    let k = oks_scale(gt);
    let denom = 2.0 * cfg.s * cfg.s * k * k;
    let sum: f64 = pred
        .keypoints()
        .iter()
        .zip(gt.keypoints())
        .map(|(p, g)| {
            let d2 = (p.col - g.col).powi(2) + (p.row - g.row).powi(2);
            (-d2 / denom).exp()
        })
        .sum();
    sum / 3.0
}

/// Result of matching one image's detections to its ground truth.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    /// `(pred index, gt index, oks)`, in the order detections were processed.
    pub pairs: Vec<(usize, usize, f64)>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
}

impl Matching {
    pub fn is_matched_pred(&self, pred: usize) -> bool {
        self.pairs.iter().any(|&(p, _, _)| p == pred)
    }
}

/// Detection processing order: score descending, then id ascending.
pub fn score_order(preds: &[EchoTrajectory]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .score
            .total_cmp(&preds[a].score)
            .then(preds[a].id.cmp(&preds[b].id))
    });
    order
}

/// Greedy matching within one image. Each detection, highest score first,
/// claims the unmatched ground truth with the highest OKS if that OKS
/// reaches `threshold`. Ties on OKS go to the earlier ground truth.
///
/// `preds` are expected to be filtered by score already.
pub fn match_detections(
    preds: &[EchoTrajectory],
    gts: &[EchoTrajectory],
    threshold: f64,
    cfg: &OksConfig,
) -> Matching {
    let mut taken = vec![false; gts.len()];
    let mut m = Matching::default();
    for p in score_order(preds) {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = oks(&preds[p], gt, cfg);
            if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        match best {
            Some((g, v)) => {
                taken[g] = true;
                m.pairs.push((p, g, v));
            }
            None => m.false_positives.push(p),
        }
    }
    m.false_negatives = (0..gts.len()).filter(|&g| !taken[g]).collect();
    m
}

/// One detection's outcome at a given threshold, pooled across images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub score: f64,
    pub id: u64,
    pub true_positive: bool,
}

/// Area under the precision/recall curve sampled at recall 0.00..=1.00 in
/// steps of 0.01, using the best precision at any recall at or above each
/// sample. `None` when there is no ground truth.
pub fn average_precision(outcomes: &[Outcome], num_gt: usize) -> Option<f64> {
    if num_gt == 0 {
        return None;
    }
    let mut sorted = outcomes.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));

    let mut recall = Vec::with_capacity(sorted.len());
    let mut precision = Vec::with_capacity(sorted.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for o in &sorted {
        if o.true_positive {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    // Precision envelope: best precision at this rank or any later one.
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let mut total = 0.0;
    for i in 0..RECALL_POINTS {
        let r = i as f64 / (RECALL_POINTS - 1) as f64;
        let idx = recall.partition_point(|&x| x < r);
        if idx < precision.len() {
            total += precision[idx];
        }
    }
    Some(total / RECALL_POINTS as f64)
}

/// Root mean square of the trajectory length differences, `None` with no
/// pairs.
pub fn trajectory_rmse(pairs: &[(&EchoTrajectory, &EchoTrajectory)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let sum: f64 = pairs
        .iter()
        .map(|(p, g)| (trajectory_length_px(p) - trajectory_length_px(g)).powi(2))
        .sum();
    Some((sum / pairs.len() as f64).sqrt())
}

/// Detections and ground truth of one image.
#[derive(Debug, Clone, Default)]
pub struct ImageEchoes {
    pub image_id: u64,
    pub preds: Vec<EchoTrajectory>,
    pub gts: Vec<EchoTrajectory>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `(threshold, AP)` in threshold order.
    pub ap_per_threshold: Vec<(f64, Option<f64>)>,
    pub map: Option<f64>,
    pub trajectory_rmse_px: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub score_threshold: f64,
    /// Ground-truth echoes evaluated with the one-pixel scale floor.
    pub stationary_gt: usize,
}

impl Serialize for EvalReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let ap: BTreeMap<String, Option<f64>> = self
            .ap_per_threshold
            .iter()
            .map(|(t, ap)| (format!("{t:.2}"), *ap))
            .collect();
        let mut st = s.serialize_struct("EvalReport", 8)?;
        st.serialize_field("ap_per_threshold", &ap)?;
        st.serialize_field("map", &self.map)?;
        st.serialize_field("trajectory_rmse_px", &self.trajectory_rmse_px)?;
        st.serialize_field("tp", &self.tp)?;
        st.serialize_field("fp", &self.fp)?;
        st.serialize_field("fn", &self.fn_)?;
        st.serialize_field("score_threshold", &self.score_threshold)?;
        st.serialize_field("stationary_gt", &self.stationary_gt)?;
        st.end()
    }
}

/// Drop detections at or below the score gate.
pub fn filter_by_score(preds: &[EchoTrajectory], score_threshold: f64) -> Vec<EchoTrajectory> {
    preds
        .iter()
        .filter(|p| p.score > score_threshold)
        .cloned()
        .collect()
}

fn outcomes_at(images: &[ImageEchoes], threshold: f64, cfg: &OksConfig) -> Vec<Outcome> {
    let mut out = Vec::new();
    for img in images {
        let m = match_detections(&img.preds, &img.gts, threshold, cfg);
        for (i, p) in img.preds.iter().enumerate() {
            out.push(Outcome {
                score: p.score,
                id: p.id,
                true_positive: m.is_matched_pred(i),
            });
        }
    }
    out
}

/// Full evaluation over images. Detections are score-gated here.
pub fn evaluate_images(images: &[ImageEchoes], cfg: &OksConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let gated: Vec<ImageEchoes> = images
        .iter()
        .map(|img| ImageEchoes {
            image_id: img.image_id,
            preds: filter_by_score(&img.preds, cfg.score_threshold),
            gts: img.gts.clone(),
        })
        .collect();
    let num_gt: usize = gated.iter().map(|i| i.gts.len()).sum();

    let ap_per_threshold: Vec<(f64, Option<f64>)> = cfg
        .thresholds
        .iter()
        .map(|&t| (t, average_precision(&outcomes_at(&gated, t, cfg), num_gt)))
        .collect();
    let map = if num_gt == 0 {
        None
    } else {
        let aps: Vec<f64> = ap_per_threshold.iter().filter_map(|(_, ap)| *ap).collect();
        Some(aps.iter().sum::<f64>() / aps.len() as f64)
    };

    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut pairs = Vec::new();
    for img in &gated {
        let m = match_detections(&img.preds, &img.gts, cfg.rmse_threshold, cfg);
        tp += m.pairs.len();
        fp += m.false_positives.len();
        fn_ += m.false_negatives.len();
        pairs.extend(
            m.pairs
                .iter()
                .map(|&(p, g, _)| (&img.preds[p], &img.gts[g])),
        );
    }

    Ok(EvalReport {
        ap_per_threshold,
        map,
        trajectory_rmse_px: trajectory_rmse(&pairs),
        tp,
        fp,
        fn_,
        score_threshold: cfg.score_threshold,
        stationary_gt: gated
            .iter()
            .flat_map(|i| &i.gts)
            .filter(|g| is_stationary(g))
            .count(),
    })
}

/// Group two datasets per image id. Images present in either dataset are
/// included; ids are visited in ascending order.
pub fn pair_datasets(preds: &EchoDataset, gts: &EchoDataset) -> Vec<ImageEchoes> {
    let ids: BTreeSet<u64> = preds
        .images()
        .iter()
        .chain(gts.images())
        .map(|i| i.id)
        .collect();
    ids.into_iter()
        .map(|id| ImageEchoes {
            image_id: id,
            preds: preds.echoes_in(id).cloned().collect(),
            gts: gts.echoes_in(id).cloned().collect(),
        })
        .collect()
}

pub fn evaluate(preds: &EchoDataset, gts: &EchoDataset, cfg: &OksConfig) -> Result<EvalReport> {
    evaluate_images(&pair_datasets(preds, gts), cfg)
}

/// Mean of AP over `cfg.thresholds`; `None` without ground truth.
pub fn mean_average_precision(
    preds: &EchoDataset,
    gts: &EchoDataset,
    cfg: &OksConfig,
) -> Result<Option<f64>> {
    Ok(evaluate(preds, gts, cfg)?.map)
}
