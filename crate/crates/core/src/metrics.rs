//! Overlap, volume, information-theoretic and distance metrics for binary
//! segmentations, plus skeleton-based continuity diagnostics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelprep::{connected_components, Connectivity};
use crate::phantom::skeletonize;
use crate::volume::{BinaryMask, Dims, Grid3, ProbabilityVolume};

/// Number of ROC thresholds `k / 255` used for probability inputs.
pub const AUC_THRESHOLDS: usize = 256;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn check_dims(a: Dims, b: Dims) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("prediction dims {a:?} differ from ground truth {b:?}")));
    }
    Ok(())
}

pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    check_dims(pred.dims(), gt.dims())?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p != 0, g != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// `2|A ∩ B| / (|A| + |B|)`; two empty masks score 1.
pub fn dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let c = confusion(pred, gt)?;
    let denom = 2 * c.tp + c.fp + c.fn_;
    Ok(if denom == 0 { 1.0 } else { (2 * c.tp) as f64 / denom as f64 })
}

/// `TP / (TP + FN)`; an empty ground truth scores 1.
pub fn sensitivity(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let c = confusion(pred, gt)?;
    Ok(if c.tp + c.fn_ == 0 { 1.0 } else { c.tp as f64 / (c.tp + c.fn_) as f64 })
}

/// `TN / (TN + FP)`; no negatives scores 1.
pub fn specificity(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let c = confusion(pred, gt)?;
    Ok(if c.tn + c.fp == 0 { 1.0 } else { c.tn as f64 / (c.tn + c.fp) as f64 })
}

/// `1 - |V_A - V_B| / (V_A + V_B)`; two empty masks score 1.
pub fn volumetric_similarity(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    check_dims(pred.dims(), gt.dims())?;
    let (a, b) = (pred.count() as f64, gt.count() as f64);
    Ok(if a + b == 0.0 { 1.0 } else { 1.0 - (a - b).abs() / (a + b) })
}

/// Mutual information of the 2x2 joint histogram, in nats.
pub fn mutual_information(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let c = confusion(pred, gt)?;
    let n = c.total() as f64;
    let joint = [[c.tn as f64 / n, c.fn_ as f64 / n], [c.fp as f64 / n, c.tp as f64 / n]];
    let pa = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
    let pb = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
    let mut mi = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let p = joint[i][j];
            if p > 0.0 {
                mi += p * (p / (pa[i] * pb[j])).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

fn require_both_classes(gt: &BinaryMask) -> Result<()> {
    let pos = gt.count();
    if pos == 0 || pos == gt.data().len() {
        return Err(Error::UndefinedMetric {
            metric: "auc",
            reason: format!(
                "ground truth has only {} voxels",
                if pos == 0 { "background" } else { "foreground" }
            ),
        });
    }
    Ok(())
}

/// Index of the highest threshold `k / 255` not exceeding `s`.
fn threshold_bin(s: f64) -> usize {
    let mut k = (s * 255.0).floor().clamp(0.0, 255.0) as usize;
    while k < 255 && (k + 1) as f64 / 255.0 <= s {
        k += 1;
    }
    while k > 0 && k as f64 / 255.0 > s {
        k -= 1;
    }
    k
}

/// Trapezoidal area under the ROC curve traced by predicting `score >= k / 255`
/// for `k = 0..=255`, closed at `(0, 0)`.
pub fn auc_scores(scores: &[f32], gt: &[u8]) -> Result<f64> {
    if scores.len() != gt.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), gt.len())));
    }
    let mut pos_hist = [0u64; AUC_THRESHOLDS];
    let mut neg_hist = [0u64; AUC_THRESHOLDS];
    for (&s, &g) in scores.iter().zip(gt) {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Validation(format!("score {s} outside [0, 1]")));
        }
        let k = threshold_bin(s as f64);
        if g != 0 {
            pos_hist[k] += 1;
        } else {
            neg_hist[k] += 1;
        }
    }
    let (p, n) = (pos_hist.iter().sum::<u64>(), neg_hist.iter().sum::<u64>());
    if p == 0 || n == 0 {
        return Err(Error::UndefinedMetric {
            metric: "auc",
            reason: "ground truth needs both classes".into(),
        });
    }
    let (mut tp, mut fp) = (0u64, 0u64);
    let (mut prev_tpr, mut prev_fpr) = (0.0, 0.0);
    let mut area = 0.0;
    for k in (0..AUC_THRESHOLDS).rev() {
        tp += pos_hist[k];
        fp += neg_hist[k];
        let (tpr, fpr) = (tp as f64 / p as f64, fp as f64 / n as f64);
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    Ok(area)
}

/// Scores fed to [`auc`].
#[derive(Clone, Copy, Debug)]
pub enum Scores<'a> {
    Probability(&'a ProbabilityVolume),
    Binary(&'a BinaryMask),
}

/// ROC area for probabilities, or balanced accuracy for a hard mask.
pub fn auc(pred: Scores<'_>, gt: &BinaryMask) -> Result<f64> {
    match pred {
        Scores::Probability(p) => {
            check_dims(p.dims(), gt.dims())?;
            require_both_classes(gt)?;
            auc_scores(p.data(), gt.data())
        }
        Scores::Binary(m) => {
            check_dims(m.dims(), gt.dims())?;
            require_both_classes(gt)?;
            Ok((sensitivity(m, gt)? + specificity(m, gt)?) / 2.0)
        }
    }
}

fn coordinate_moments(mask: &BinaryMask) -> (f64, [f64; 3], [[f64; 3]; 3]) {
    let [_, h, w] = mask.dims();
    let mut n = 0.0;
    let mut sum = [0.0; 3];
    for (i, &v) in mask.data().iter().enumerate() {
        if v != 0 {
            let c = [(i / (h * w)) as f64, ((i / w) % h) as f64, (i % w) as f64];
            n += 1.0;
            (0..3).for_each(|k| sum[k] += c[k]);
        }
    }
    let mean = sum.map(|s| s / n);
    let mut cov = [[0.0; 3]; 3];
    for (i, &v) in mask.data().iter().enumerate() {
        if v != 0 {
            let c = [(i / (h * w)) as f64, ((i / w) % h) as f64, (i % w) as f64];
            for a in 0..3 {
                for b in 0..3 {
                    cov[a][b] += (c[a] - mean[a]) * (c[b] - mean[b]);
                }
            }
        }
    }
    for row in &mut cov {
        row.iter_mut().for_each(|v| *v /= n);
    }
    (n, mean, cov)
}

fn solve3(m: [[f64; 3]; 3], rhs: [f64; 3]) -> [f64; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let replace = |col: usize| {
        let mut c = m;
        for r in 0..3 {
            c[r][col] = rhs[r];
        }
        c[0][0] * (c[1][1] * c[2][2] - c[1][2] * c[2][1]) - c[0][1] * (c[1][0] * c[2][2] - c[1][2] * c[2][0])
            + c[0][2] * (c[1][0] * c[2][1] - c[1][1] * c[2][0])
    };
    [replace(0) / det, replace(1) / det, replace(2) / det]
}

/// Mahalanobis distance between the mean foreground coordinates of the two
/// masks under their pooled within-mask covariance (plus `1e-8 I`).
pub fn mahalanobis_distance(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    check_dims(pred.dims(), gt.dims())?;
    for (name, m) in [("prediction", pred), ("ground truth", gt)] {
        if m.count() == 0 {
            return Err(Error::UndefinedMetric {
                metric: "mahalanobis_distance",
                reason: format!("{name} mask is empty"),
            });
        }
    }
    let (na, ma, ca) = coordinate_moments(pred);
    let (nb, mb, cb) = coordinate_moments(gt);
    let mut pooled = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            pooled[a][b] = (na * ca[a][b] + nb * cb[a][b]) / (na + nb);
        }
        pooled[a][a] += 1e-8;
    }
    let diff = [ma[0] - mb[0], ma[1] - mb[1], ma[2] - mb[2]];
    let x = solve3(pooled, diff);
    let q: f64 = (0..3).map(|k| diff[k] * x[k]).sum();
    Ok(q.max(0.0).sqrt())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub component_count_pred: usize,
    pub component_count_gt: usize,
    /// `components(skeleton(pred) ∩ dilate(gt, 1)) - components(skeleton(gt))`.
    pub skeleton_gap_excess: i64,
}

fn dilate26(mask: &BinaryMask) -> BinaryMask {
    let [d, h, w] = mask.dims();
    let mut out = Grid3::filled(mask.dims(), 0u8);
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                if !mask.get(z, y, x) {
                    continue;
                }
                for nz in z.saturating_sub(1)..=(z + 1).min(d - 1) {
                    for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                        for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                            out.set(nz, ny, nx, 1);
                        }
                    }
                }
            }
        }
    }
    BinaryMask::from_grid_unchecked(out)
}

/// Component counts (26-connectivity) and the number of extra skeleton pieces
/// the prediction shows along the ground-truth vessels.
pub fn continuity_report(pred: &BinaryMask, gt: &BinaryMask) -> Result<ContinuityReport> {
    check_dims(pred.dims(), gt.dims())?;
    let full = Connectivity::Full;
    let near_gt = dilate26(gt);
    let skel_pred = skeletonize(pred);
    let along = BinaryMask::from_grid_unchecked(Grid3::new(
        pred.dims(),
        skel_pred.data().iter().zip(near_gt.data()).map(|(&a, &b)| a & b).collect(),
    )?);
    let pieces = connected_components(&along, full).count() as i64;
    let reference = connected_components(&skeletonize(gt), full).count() as i64;
    Ok(ContinuityReport {
        component_count_pred: connected_components(pred, full).count(),
        component_count_gt: connected_components(gt, full).count(),
        skeleton_gap_excess: pieces - reference,
    })
}

/// The six metrics plus continuity for one prediction. Metrics that are
/// undefined for the inputs are `None`, with the reason in `undefined`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dice: Option<f64>,
    pub auc: Option<f64>,
    pub sensitivity: Option<f64>,
    pub volumetric_similarity: Option<f64>,
    pub mutual_information: Option<f64>,
    pub mahalanobis_distance: Option<f64>,
    pub continuity: ContinuityReport,
    pub confusion: ConfusionCounts,
    pub undefined: BTreeMap<String, String>,
}

impl MetricsReport {
    /// `(name, value)` pairs in a fixed order, for tabulation.
    pub fn scalars(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("dice", self.dice),
            ("auc", self.auc),
            ("sensitivity", self.sensitivity),
            ("volumetric_similarity", self.volumetric_similarity),
            ("mutual_information", self.mutual_information),
            ("mahalanobis_distance", self.mahalanobis_distance),
            ("component_count_pred", Some(self.continuity.component_count_pred as f64)),
            ("component_count_gt", Some(self.continuity.component_count_gt as f64)),
            ("skeleton_gap_excess", Some(self.continuity.skeleton_gap_excess as f64)),
        ]
    }
}

fn defined(result: Result<f64>, undefined: &mut BTreeMap<String, String>) -> Result<Option<f64>> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric { metric, reason }) => {
            undefined.insert(metric.to_string(), reason);
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Scores one prediction; AUC uses `pred_prob` when given, the mask otherwise.
pub fn evaluate_pair(pred_prob: Option<&ProbabilityVolume>, pred_mask: &BinaryMask, gt: &BinaryMask) -> Result<MetricsReport> {
    check_dims(pred_mask.dims(), gt.dims())?;
    let mut undefined = BTreeMap::new();
    let scores = match pred_prob {
        Some(p) => Scores::Probability(p),
        None => Scores::Binary(pred_mask),
    };
    Ok(MetricsReport {
        dice: Some(dice(pred_mask, gt)?),
        auc: defined(auc(scores, gt), &mut undefined)?,
        sensitivity: Some(sensitivity(pred_mask, gt)?),
        volumetric_similarity: Some(volumetric_similarity(pred_mask, gt)?),
        mutual_information: Some(mutual_information(pred_mask, gt)?),
        mahalanobis_distance: defined(mahalanobis_distance(pred_mask, gt), &mut undefined)?,
        continuity: continuity_report(pred_mask, gt)?,
        confusion: confusion(pred_mask, gt)?,
        undefined,
    })
}

/// Median and population variance of one metric across reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: String,
    pub n: usize,
    pub median: Option<f64>,
    pub variance: Option<f64>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

pub fn summarize(reports: &[MetricsReport]) -> Vec<SummaryRow> {
    let Some(first) = reports.first() else {
        return Vec::new();
    };
    first
        .scalars()
        .iter()
        .enumerate()
        .map(|(i, (name, _))| {
            let values: Vec<f64> = reports.iter().filter_map(|r| r.scalars()[i].1).collect();
            let n = values.len();
            let variance = (n > 0).then(|| {
                let mean = values.iter().sum::<f64>() / n as f64;
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64
            });
            SummaryRow {
                metric: name.to_string(),
                n,
                median: median(&values),
                variance,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn mask(dims: Dims, on: &[(usize, usize, usize)]) -> BinaryMask {
        let mut m = BinaryMask::zeros(dims);
        for &(z, y, x) in on {
            m.set(z, y, x, true);
        }
        m
    }

    fn prob(dims: Dims, values: Vec<f32>) -> ProbabilityVolume {
        ProbabilityVolume::new(Grid3::new(dims, values).unwrap()).unwrap()
    }

    #[test]
    fn dice_examples() {
        let a = mask([1, 1, 4], &[(0, 0, 0), (0, 0, 1)]);
        let b = mask([1, 1, 4], &[(0, 0, 1)]);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &mask([1, 1, 4], &[(0, 0, 3)])).unwrap(), 0.0);
        assert!((dice(&a, &b).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let empty = BinaryMask::zeros([1, 1, 4]);
        assert_eq!(dice(&empty, &empty).unwrap(), 1.0);
        assert!(matches!(dice(&a, &BinaryMask::zeros([1, 2, 2])), Err(Error::Shape(_))));
    }

    #[test]
    fn sensitivity_examples() {
        let gt = mask([1, 1, 6], &[(0, 0, 0), (0, 0, 1), (0, 0, 2), (0, 0, 3)]);
        let pred = mask([1, 1, 6], &[(0, 0, 0), (0, 0, 1), (0, 0, 2), (0, 0, 5)]);
        assert_eq!(sensitivity(&pred, &gt).unwrap(), 0.75);
        assert_eq!(sensitivity(&BinaryMask::zeros([1, 1, 6]), &gt).unwrap(), 0.0);
        let all = BinaryMask::from_fn([1, 1, 6], |_, _, _| true);
        assert_eq!(sensitivity(&all, &gt).unwrap(), 1.0);
    }

    #[test]
    fn volumetric_similarity_examples() {
        let a = BinaryMask::from_fn([1, 5, 10], |_, y, x| y * 10 + x < 30);
        let b = BinaryMask::from_fn([1, 5, 10], |_, y, x| y * 10 + x >= 40);
        assert_eq!(volumetric_similarity(&a, &b).unwrap(), 0.5);
        assert_eq!(volumetric_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(volumetric_similarity(&a, &BinaryMask::zeros([1, 5, 10])).unwrap(), 0.0);
    }

    #[test]
    fn mutual_information_examples() {
        let half = BinaryMask::from_fn([1, 2, 2], |_, y, _| y == 0);
        assert!((mutual_information(&half, &half).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let other = BinaryMask::from_fn([1, 2, 2], |_, _, x| x == 0);
        assert!(mutual_information(&half, &other).unwrap().abs() < 1e-15);
    }

    #[test]
    fn auc_examples() {
        let gt = mask([1, 1, 4], &[(0, 0, 2), (0, 0, 3)]);
        let ordered = prob([1, 1, 4], vec![0.1, 0.2, 0.8, 0.9]);
        assert_eq!(auc(Scores::Probability(&ordered), &gt).unwrap(), 1.0);
        let constant = prob([1, 1, 4], vec![0.4; 4]);
        assert_eq!(auc(Scores::Probability(&constant), &gt).unwrap(), 0.5);
        let none = BinaryMask::zeros([1, 1, 4]);
        assert!(matches!(
            auc(Scores::Probability(&ordered), &none),
            Err(Error::UndefinedMetric { metric: "auc", .. })
        ));
        let hard = mask([1, 1, 4], &[(0, 0, 3), (0, 0, 0)]);
        assert_eq!(auc(Scores::Binary(&hard), &gt).unwrap(), 0.5);
    }

    fn pairwise_auc(scores: &[f32], gt: &[u8]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if gt[i] == 1 && gt[j] == 0 {
                    pairs += 1.0;
                    wins += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_equals_pairwise_ranking_on_grid_scores() {
        let scores: Vec<f32> = [30u8, 200, 90, 90, 250, 10, 140, 60].iter().map(|&k| k as f32 / 255.0).collect();
        let gt = [0u8, 1, 0, 1, 1, 0, 0, 1];
        let got = auc_scores(&scores, &gt).unwrap();
        assert!((got - pairwise_auc(&scores, &gt)).abs() < 1e-12);
    }

    #[test]
    fn mahalanobis_examples() {
        let cube = BinaryMask::from_fn([6, 6, 6], |z, y, x| (1..3).contains(&z) && (1..3).contains(&y) && (1..3).contains(&x));
        let shifted = BinaryMask::from_fn([6, 6, 6], |z, y, x| (2..4).contains(&z) && (1..3).contains(&y) && (1..3).contains(&x));
        assert_eq!(mahalanobis_distance(&cube, &cube).unwrap(), 0.0);
        // pooled per-axis variance 0.25, so a unit shift is 1 / 0.5
        let d = mahalanobis_distance(&cube, &shifted).unwrap();
        assert!((d - 2.0).abs() < 1e-6, "{d}");
        assert_eq!(d, mahalanobis_distance(&shifted, &cube).unwrap());
        assert!(matches!(
            mahalanobis_distance(&BinaryMask::zeros([6, 6, 6]), &cube),
            Err(Error::UndefinedMetric { .. })
        ));
    }

    #[test]
    fn continuity_examples() {
        let tube = BinaryMask::from_fn([5, 5, 20], |z, y, x| z == 2 && y == 2 && (2..18).contains(&x));
        assert_eq!(continuity_report(&tube, &tube).unwrap().skeleton_gap_excess, 0);
        let cut = BinaryMask::from_fn([5, 5, 20], |z, y, x| z == 2 && y == 2 && (2..18).contains(&x) && !(9..11).contains(&x));
        let r = continuity_report(&cut, &tube).unwrap();
        assert_eq!(r.skeleton_gap_excess, 1);
        assert_eq!((r.component_count_pred, r.component_count_gt), (2, 1));
        let empty = continuity_report(&BinaryMask::zeros([5, 5, 20]), &tube).unwrap();
        assert_eq!(empty.skeleton_gap_excess, -1);
    }

    #[test]
    fn perfect_prediction_report_round_trips() {
        let gt = BinaryMask::from_fn([6, 6, 6], |z, y, x| (z + y + x) % 4 == 0);
        let p = ProbabilityVolume::new(gt.grid().map(|v| v as f32)).unwrap();
        let r = evaluate_pair(Some(&p), &gt, &gt).unwrap();
        assert_eq!(r.dice, Some(1.0));
        assert_eq!(r.sensitivity, Some(1.0));
        assert_eq!(r.volumetric_similarity, Some(1.0));
        assert_eq!(r.mahalanobis_distance, Some(0.0));
        assert_eq!(r.continuity.skeleton_gap_excess, 0);
        let json = serde_json::to_string(&r).unwrap();
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn undefined_metrics_are_null_with_reason() {
        let gt = BinaryMask::zeros([4, 4, 4]);
        let r = evaluate_pair(None, &gt, &gt).unwrap();
        assert_eq!(r.auc, None);
        assert_eq!(r.mahalanobis_distance, None);
        assert!(r.undefined.contains_key("auc"));
        assert!(r.undefined.contains_key("mahalanobis_distance"));
        let json: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert!(json["auc"].is_null());
    }

    #[test]
    fn summary_median_and_variance() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        let gt = BinaryMask::from_fn([4, 4, 4], |z, _, _| z < 2);
        let a = evaluate_pair(None, &gt, &gt).unwrap();
        let b = evaluate_pair(None, &BinaryMask::from_fn([4, 4, 4], |z, _, _| z < 1), &gt).unwrap();
        let rows = summarize(&[a, b]);
        let dice_row = rows.iter().find(|r| r.metric == "dice").unwrap();
        assert_eq!(dice_row.n, 2);
        let (d1, d2) = (1.0, 2.0 * 16.0 / 48.0);
        assert!((dice_row.median.unwrap() - (d1 + d2) / 2.0).abs() < 1e-12);
        assert!((dice_row.variance.unwrap() - ((d1 - d2) / 2.0f64).powi(2)).abs() < 1e-12);
    }

    fn bits_mask(bits: &[bool]) -> BinaryMask {
        BinaryMask::from_fn([4, 4, 4], |z, y, x| bits[(z * 4 + y) * 4 + x])
    }

    proptest! {
        #[test]
        fn dice_is_symmetric_and_one_only_on_equality(
            a in proptest::collection::vec(proptest::bool::ANY, 64),
            b in proptest::collection::vec(proptest::bool::ANY, 64),
        ) {
            let (a, b) = (bits_mask(&a), bits_mask(&b));
            let ab = dice(&a, &b).unwrap();
            prop_assert_eq!(ab, dice(&b, &a).unwrap());
            prop_assert!(ab <= 1.0);
            if a.count() > 0 && ab == 1.0 {
                prop_assert_eq!(&a, &b);
            }
        }

        #[test]
        fn vs_depends_only_on_volumes(
            a in proptest::collection::vec(proptest::bool::ANY, 64),
            b in proptest::collection::vec(proptest::bool::ANY, 64),
            shift in 0usize..64,
        ) {
            let (ma, mb) = (bits_mask(&a), bits_mask(&b));
            let mut rotated = b.clone();
            rotated.rotate_left(shift);
            prop_assert_eq!(volumetric_similarity(&ma, &mb).unwrap(), volumetric_similarity(&ma, &bits_mask(&rotated)).unwrap());
        }

        #[test]
        fn mi_survives_joint_complement(
            a in proptest::collection::vec(proptest::bool::ANY, 64),
            b in proptest::collection::vec(proptest::bool::ANY, 64),
        ) {
            let (ma, mb) = (bits_mask(&a), bits_mask(&b));
            let na: Vec<bool> = a.iter().map(|v| !v).collect();
            let nb: Vec<bool> = b.iter().map(|v| !v).collect();
            let mi = mutual_information(&ma, &mb).unwrap();
            prop_assert!(mi >= 0.0);
            prop_assert!((mi - mutual_information(&bits_mask(&na), &bits_mask(&nb)).unwrap()).abs() < 1e-12);
            prop_assert!((mi - mutual_information(&mb, &ma).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn auc_of_complemented_scores(
            k in proptest::collection::vec(0u8..=255, 64),
            g in proptest::collection::vec(proptest::bool::ANY, 64),
        ) {
            let gt: Vec<u8> = g.iter().map(|&v| v as u8).collect();
            let pos = gt.iter().filter(|&&v| v == 1).count();
            if pos > 0 && pos < 64 {
                let s: Vec<f32> = k.iter().map(|&v| v as f32 / 255.0).collect();
                let c: Vec<f32> = k.iter().map(|&v| (255 - v) as f32 / 255.0).collect();
                let (a, b) = (auc_scores(&s, &gt).unwrap(), auc_scores(&c, &gt).unwrap());
                prop_assert!((a + b - 1.0).abs() < 1e-12);
                prop_assert!((a - pairwise_auc(&s, &gt)).abs() < 1e-12);
            }
        }
    }
}
