//! ID classification metrics and threshold-sweep OOD detection metrics.
//!
//! Scores follow the "larger means more ID-like" convention throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K × K` counts; rows are ground truth, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(preds: &[usize], golds: &[usize], k: usize) -> Result<Self> {
        if preds.len() != golds.len() {
            return Err(Error::param(
                "metrics",
                "preds",
                format!("{} predictions for {} labels", preds.len(), golds.len()),
            ));
        }
        let mut counts = vec![vec![0u64; k]; k];
        for (&p, &g) in preds.iter().zip(golds) {
            if p >= k || g >= k {
                return Err(Error::param("metrics", "labels", format!("label out of range 0..{k}: pred {p}, gold {g}")));
            }
            counts[g][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn predicted(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdMetrics {
    pub acc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub wp: f64,
    pub wf1: f64,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    pub per_class_f1: Vec<f64>,
    pub confusion: ConfusionMatrix,
}

impl IdMetrics {
    /// Recall of each class, i.e. the diagonal of the row-normalized
    /// confusion matrix.
    pub fn per_class_accuracy(&self) -> &[f64] {
        &self.per_class_recall
    }
}

/// Accuracy, macro precision/recall/F1 and support-weighted WP/WF1.
///
/// Per-class ratios with an empty denominator count as 0.
pub fn id_metrics(preds: &[usize], golds: &[usize], k: usize) -> Result<IdMetrics> {
    let confusion = ConfusionMatrix::new(preds, golds, k)?;
    let total = confusion.total();
    if total == 0 {
        return Err(Error::UndefinedMetric("ID metrics need at least one sample".into()));
    }
    let correct: u64 = (0..k).map(|c| confusion.counts[c][c]).sum();
    let per_class_precision: Vec<f64> = (0..k).map(|c| ratio(confusion.counts[c][c], confusion.predicted(c))).collect();
    let per_class_recall: Vec<f64> = (0..k).map(|c| ratio(confusion.counts[c][c], confusion.support(c))).collect();
    let per_class_f1: Vec<f64> = per_class_precision
        .iter()
        .zip(&per_class_recall)
        .map(|(&p, &r)| harmonic(p, r))
        .collect();
    let precision = per_class_precision.iter().sum::<f64>() / k as f64;
    let recall = per_class_recall.iter().sum::<f64>() / k as f64;
    let weighted = |v: &[f64]| (0..k).map(|c| confusion.support(c) as f64 * v[c]).sum::<f64>() / total as f64;
    let wp = weighted(&per_class_precision);
    let wf1 = weighted(&per_class_f1);
    Ok(IdMetrics {
        acc: correct as f64 / total as f64,
        precision,
        recall,
        f1: harmonic(precision, recall),
        wp,
        wf1,
        per_class_precision,
        per_class_recall,
        per_class_f1,
        confusion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// From `(0, 0)` to `(1, 1)`; one point per distinct score.
    pub points: Vec<RocPoint>,
    pub auroc: f64,
}

/// Which class counts as positive in a precision-recall sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Positive {
    Id,
    Ood,
}

fn check_inputs(scores: &[f64], flags: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != flags.len() {
        return Err(Error::param(
            "metrics",
            "scores",
            format!("{} scores for {} flags", scores.len(), flags.len()),
        ));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Numerical(format!("score {i} is not finite")));
    }
    let n_id = flags.iter().filter(|&&f| f).count();
    Ok((n_id, flags.len() - n_id))
}

/// Cumulative `(threshold, positives, negatives)` counts at each distinct
/// score, visiting scores from largest to smallest. Everything at or above
/// the threshold is predicted positive.
fn sweep(scores: &[f64], positive: &[bool]) -> Vec<(f64, u64, u64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out: Vec<(f64, u64, u64)> = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((s, tp, fp));
    }
    out
}

/// ROC curve with ID as the positive class; ties are grouped into one step
/// so the trapezoid area equals the Mann–Whitney statistic.
pub fn roc_auroc(scores: &[f64], is_id: &[bool]) -> Result<RocCurve> {
    let (n_id, n_ood) = check_inputs(scores, is_id)?;
    if n_id == 0 || n_ood == 0 {
        return Err(Error::UndefinedMetric(format!("AUROC needs both classes, got {n_id} ID and {n_ood} OOD")));
    }
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let steps = sweep(scores, is_id);
    for &(threshold, tp, fp) in &steps {
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / n_ood as f64,
            tpr: tp as f64 / n_id as f64,
        });
    }
    // Trapezoids accumulated on integer counts keep the area exact.
    let mut twice_area: u128 = 0;
    let (mut prev_tp, mut prev_fp) = (0u64, 0u64);
    for &(_, tp, fp) in &steps {
        twice_area += u128::from(fp - prev_fp) * u128::from(tp + prev_tp);
        (prev_tp, prev_fp) = (tp, fp);
    }
    let auroc = twice_area as f64 / (2 * n_id as u128 * n_ood as u128) as f64;
    Ok(RocCurve { points, auroc })
}

/// Step-wise area under the precision-recall curve.
///
/// With ID positive the sweep lowers the threshold from the top; with OOD
/// positive it raises it from the bottom.
pub fn aupr(scores: &[f64], is_id: &[bool], positive: Positive) -> Result<f64> {
    check_inputs(scores, is_id)?;
    let (keyed, pos): (Vec<f64>, Vec<bool>) = match positive {
        Positive::Id => (scores.to_vec(), is_id.to_vec()),
        Positive::Ood => (scores.iter().map(|s| -s).collect(), is_id.iter().map(|f| !f).collect()),
    };
    let n_pos = pos.iter().filter(|&&p| p).count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric(format!("AUPR-{positive:?} has no positive samples")));
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (_, tp, fp) in sweep(&keyed, &pos) {
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

/// Minimum ID recall demanded at the operating point.
pub const TARGET_TPR: f64 = 0.95;

/// Below this many ID samples the TPR grid is coarser than 5%.
pub const MIN_ID_FOR_FPR95: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr95: f64,
    pub der: f64,
    /// Set when there are too few ID samples for a 5% TPR resolution.
    pub coarse: bool,
}

/// FPR at the largest threshold whose TPR reaches 95%, and the detection
/// error `0.5·(1 − TPR) + 0.5·FPR` at that threshold.
pub fn fpr95_der(scores: &[f64], is_id: &[bool]) -> Result<OperatingPoint> {
    let (n_id, n_ood) = check_inputs(scores, is_id)?;
    if n_id == 0 || n_ood == 0 {
        return Err(Error::UndefinedMetric(format!("FPR95 needs both classes, got {n_id} ID and {n_ood} OOD")));
    }
    let (threshold, tp, fp) = sweep(scores, is_id)
        .into_iter()
        .find(|&(_, tp, _)| tp as f64 / n_id as f64 >= TARGET_TPR)
        .expect("the lowest threshold accepts every ID sample");
    let tpr = tp as f64 / n_id as f64;
    let fpr = fp as f64 / n_ood as f64;
    let miss = (n_id as u64 - tp) as f64 / n_id as f64;
    Ok(OperatingPoint {
        threshold,
        tpr,
        fpr95: fpr,
        der: 0.5 * (miss + fpr),
        coarse: n_id < MIN_ID_FOR_FPR95,
    })
}

/// Detection error with equal ID and OOD priors.
pub fn detection_error(tpr: f64, fpr: f64) -> f64 {
    0.5 * (1.0 - tpr) + 0.5 * fpr
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodMetrics {
    pub fpr95: f64,
    pub der: f64,
    pub aupr_in: f64,
    pub aupr_out: f64,
    pub auroc: f64,
    pub coarse_fpr95: bool,
}

pub fn ood_metrics(scores: &[f64], is_id: &[bool]) -> Result<OodMetrics> {
    let op = fpr95_der(scores, is_id)?;
    Ok(OodMetrics {
        fpr95: op.fpr95,
        der: op.der,
        aupr_in: aupr(scores, is_id, Positive::Id)?,
        aupr_out: aupr(scores, is_id, Positive::Ood)?,
        auroc: roc_auroc(scores, is_id)?.auroc,
        coarse_fpr95: op.coarse,
    })
}

/// Column order of [`EvalReport::csv_row`].
pub const REPORT_COLUMNS: [&str; 11] = [
    "acc", "wf1", "wp", "f1", "p", "r", "fpr95", "der", "aupr_in", "aupr_out", "auroc",
];

/// Every metric for one scorer on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scorer: String,
    pub acc: f64,
    pub wf1: f64,
    pub wp: f64,
    pub f1: f64,
    pub p: f64,
    pub r: f64,
    pub fpr95: f64,
    pub der: f64,
    pub aupr_in: f64,
    pub aupr_out: f64,
    pub auroc: f64,
    pub per_class_accuracy: Vec<f64>,
    pub confusion: ConfusionMatrix,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn new(scorer: impl Into<String>, id: &IdMetrics, ood: &OodMetrics) -> Self {
        let mut warnings = Vec::new();
        if ood.coarse_fpr95 {
            warnings.push(format!("fewer than {MIN_ID_FOR_FPR95} ID samples: FPR95 resolution is coarse"));
        }
        Self {
            scorer: scorer.into(),
            acc: id.acc,
            wf1: id.wf1,
            wp: id.wp,
            f1: id.f1,
            p: id.precision,
            r: id.recall,
            fpr95: ood.fpr95,
            der: ood.der,
            aupr_in: ood.aupr_in,
            aupr_out: ood.aupr_out,
            auroc: ood.auroc,
            per_class_accuracy: id.per_class_accuracy().to_vec(),
            confusion: id.confusion.clone(),
            warnings,
        }
    }

    /// Values in [`REPORT_COLUMNS`] order.
    pub fn csv_row(&self) -> [f64; 11] {
        [
            self.acc,
            self.wf1,
            self.wp,
            self.f1,
            self.p,
            self.r,
            self.fpr95,
            self.der,
            self.aupr_in,
            self.aupr_out,
            self.auroc,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions_give_ones() {
        let g = [0, 1, 2, 2, 1, 0, 0];
        let m = id_metrics(&g, &g, 3).unwrap();
        for v in [m.acc, m.precision, m.recall, m.f1, m.wp, m.wf1] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn two_class_hand_case() {
        let m = id_metrics(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        assert_eq!(m.confusion.counts, vec![vec![1, 0], vec![1, 2]]);
        assert_eq!(m.acc, 0.75);
        assert_eq!(m.per_class_precision, vec![0.5, 1.0]);
        assert_eq!(m.per_class_recall[0], 1.0);
        assert!((m.per_class_recall[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.precision - 0.75).abs() < 1e-15);
        assert!((m.recall - 5.0 / 6.0).abs() < 1e-15);
        // F1_0 = 2/3, F1_1 = 0.8; supports 1 and 3.
        let wf1 = 0.25 * (2.0 / 3.0) + 0.75 * 0.8;
        assert!((m.wf1 - wf1).abs() < 1e-15);
        assert!((m.wp - (0.25 * 0.5 + 0.75 * 1.0)).abs() < 1e-15);
        let f1 = 2.0 * 0.75 * (5.0 / 6.0) / (0.75 + 5.0 / 6.0);
        assert!((m.f1 - f1).abs() < 1e-15);
    }

    #[test]
    fn balanced_support_wf1_is_mean_f1() {
        let m = id_metrics(&[0, 1, 1, 2, 0, 2], &[0, 0, 1, 1, 2, 2], 3).unwrap();
        let mean = m.per_class_f1.iter().sum::<f64>() / 3.0;
        assert!((m.wf1 - mean).abs() < 1e-15);
    }

    #[test]
    fn empty_class_counts_zero() {
        let m = id_metrics(&[0, 0], &[0, 0], 3).unwrap();
        assert_eq!(m.per_class_precision, vec![1.0, 0.0, 0.0]);
        assert_eq!(m.per_class_recall, vec![1.0, 0.0, 0.0]);
        assert_eq!(m.wf1, 1.0);
        assert!(id_metrics(&[0], &[0, 1], 2).is_err());
        assert!(id_metrics(&[3], &[0], 2).is_err());
    }

    #[test]
    fn swapping_predictions_moves_accuracy_by_two_over_t_or_zero() {
        let mut rng = RngState::new(3);
        for _ in 0..50 {
            let golds: Vec<usize> = (0..12).map(|_| rng.index(3)).collect();
            let preds: Vec<usize> = (0..12).map(|_| rng.index(3)).collect();
            let a = id_metrics(&preds, &golds, 3).unwrap().acc;
            let (i, j) = (rng.index(12), rng.index(12));
            let mut swapped = preds.clone();
            swapped.swap(i, j);
            let b = id_metrics(&swapped, &golds, 3).unwrap().acc;
            let steps = ((a - b) * 12.0).round().abs();
            assert!(steps == 0.0 || steps == 2.0 || (steps == 1.0 && golds[i] != golds[j]));
        }
    }

    /// P(score_ID > score_OOD) + ½ P(equal) by counting every pair.
    fn pair_count_auroc(scores: &[f64], flags: &[bool]) -> f64 {
        let (mut wins, mut ties, mut pairs) = (0u64, 0u64, 0u64);
        for (i, &a) in scores.iter().enumerate() {
            for (j, &b) in scores.iter().enumerate() {
                if flags[i] && !flags[j] {
                    pairs += 1;
                    if a > b {
                        wins += 1;
                    } else if a == b {
                        ties += 1;
                    }
                }
            }
        }
        (2 * wins + ties) as f64 / (2 * pairs) as f64
    }

    /// Evaluates every distinct threshold independently.
    fn enumerate_aupr(scores: &[f64], flags: &[bool], positive: Positive) -> f64 {
        let pos: Vec<bool> = flags.iter().map(|&f| f == (positive == Positive::Id)).collect();
        let accepts = |s: f64, t: f64| if positive == Positive::Id { s >= t } else { s <= t };
        let mut thresholds: Vec<f64> = scores.to_vec();
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();
        if positive == Positive::Id {
            thresholds.reverse();
        }
        let n_pos = pos.iter().filter(|&&p| p).count() as f64;
        let mut prev = 0.0;
        let mut area = 0.0;
        for t in thresholds {
            let tp = (0..scores.len()).filter(|&i| pos[i] && accepts(scores[i], t)).count() as f64;
            let all = (0..scores.len()).filter(|&i| accepts(scores[i], t)).count() as f64;
            let r = tp / n_pos;
            area += (r - prev) * (tp / all);
            prev = r;
        }
        area
    }

    /// Scans every distinct threshold for the best FPR with TPR ≥ 0.95.
    fn scan_fpr95(scores: &[f64], flags: &[bool]) -> (f64, f64) {
        let n_id = flags.iter().filter(|&&f| f).count() as f64;
        let n_ood = flags.len() as f64 - n_id;
        // Minimal FPR first; among equal FPRs, the larger threshold.
        let mut best: Option<(f64, f64, f64)> = None;
        for &t in scores {
            let tp = (0..scores.len()).filter(|&i| flags[i] && scores[i] >= t).count() as f64;
            let fp = (0..scores.len()).filter(|&i| !flags[i] && scores[i] >= t).count() as f64;
            let (tpr, fpr) = (tp / n_id, fp / n_ood);
            let better = best.map_or(true, |(_, f, bt)| fpr < f || (fpr == f && t > bt));
            if tpr >= 0.95 && better {
                best = Some((tpr, fpr, t));
            }
        }
        let (tpr, fpr, _) = best.unwrap();
        (fpr, 0.5 * (1.0 - tpr) + 0.5 * fpr)
    }

    #[test]
    fn auroc_examples() {
        let flags = [true, true, true, false, false, false];
        assert_eq!(roc_auroc(&[6.0, 5.0, 4.0, 3.0, 2.0, 1.0], &flags).unwrap().auroc, 1.0);
        assert_eq!(roc_auroc(&[1.0; 6], &flags).unwrap().auroc, 0.5);
        let one_inversion = [6.0, 5.0, 3.0, 4.0, 2.0, 1.0];
        let a = roc_auroc(&one_inversion, &flags).unwrap().auroc;
        assert_eq!(a, pair_count_auroc(&one_inversion, &flags));
        assert_eq!(a, 8.0 / 9.0);
        assert!(matches!(roc_auroc(&[1.0, 2.0], &[true, true]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn roc_curve_endpoints() {
        let c = roc_auroc(&[0.3, 0.1, 0.3, 0.9], &[true, false, false, true]).unwrap();
        let first = c.points.first().unwrap();
        let last = c.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert_eq!(c.points.len(), 4);
    }

    #[test]
    fn aupr_examples() {
        let flags = [true, true, false, false];
        let sep = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(aupr(&sep, &flags, Positive::Id).unwrap(), 1.0);
        assert_eq!(aupr(&sep, &flags, Positive::Ood).unwrap(), 1.0);

        let mixed = [0.8, 0.3, 0.5, 0.1];
        for pos in [Positive::Id, Positive::Ood] {
            let a = aupr(&mixed, &flags, pos).unwrap();
            assert!((a - enumerate_aupr(&mixed, &flags, pos)).abs() < 1e-15);
        }
        // ID: ranks ID, OOD, ID, OOD -> 0.5·1 + 0.5·(2/3).
        assert!((aupr(&mixed, &flags, Positive::Id).unwrap() - (0.5 + 1.0 / 3.0)).abs() < 1e-15);
        assert!(aupr(&[1.0], &[false], Positive::Id).is_err());
    }

    #[test]
    fn aupr_of_random_scores_tracks_prevalence() {
        let mut rng = RngState::new(11);
        let n = 200;
        let flags: Vec<bool> = (0..n).map(|i| i < 60).collect();
        let mut sum = 0.0;
        for _ in 0..100 {
            let scores: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
            sum += aupr(&scores, &flags, Positive::Id).unwrap();
        }
        assert!((sum / 100.0 - 0.3).abs() < 0.05);
    }

    #[test]
    fn fpr95_examples() {
        let flags: Vec<bool> = (0..40).map(|i| i < 20).collect();
        let sep: Vec<f64> = (0..40).map(|i| 40.0 - i as f64).collect();
        let op = fpr95_der(&sep, &flags).unwrap();
        assert_eq!(op.fpr95, 0.0);
        assert!(op.der <= 0.025);
        assert!(!op.coarse);

        assert_eq!(detection_error(0.95, 0.5), 0.275);

        // 40-sample case: one ID sample sits below half the OOD samples.
        let mut rng = RngState::new(6);
        let scores: Vec<f64> = (0..40).map(|_| (rng.uniform() * 20.0).round()).collect();
        let op = fpr95_der(&scores, &flags).unwrap();
        let (fpr, der) = scan_fpr95(&scores, &flags);
        assert_eq!(op.fpr95, fpr);
        assert!((op.der - der).abs() < 1e-12);

        let few = fpr95_der(&[2.0, 1.0], &[true, false]).unwrap();
        assert!(few.coarse);
    }

    #[test]
    fn operating_point_reaching_exactly_95() {
        // 20 ID: 18 above every OOD, the 19th below two of the four OOD.
        let mut scores: Vec<f64> = (0..18).map(|i| 100.0 + i as f64).collect();
        scores.extend([40.0, -5.0]);
        let mut flags = vec![true; 20];
        scores.extend([50.0, 50.0, -1.0, -1.0]);
        flags.extend([false; 4]);
        let op = fpr95_der(&scores, &flags).unwrap();
        assert_eq!(op.tpr, 0.95);
        assert_eq!(op.fpr95, 0.5);
        assert_eq!(op.der, 0.275);
    }

    fn arb_case() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..60).prop_flat_map(|n| {
            (
                prop::collection::vec((0i32..12).prop_map(|v| v as f64 * 0.5), n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
        .prop_filter("both classes", |(_, f)| f.iter().any(|&x| x) && f.iter().any(|&x| !x))
    }

    proptest! {
        #[test]
        fn auroc_equals_pair_count((s, f) in arb_case()) {
            prop_assert_eq!(roc_auroc(&s, &f).unwrap().auroc, pair_count_auroc(&s, &f));
        }

        #[test]
        fn auroc_flip_symmetry((s, f) in arb_case()) {
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            let swapped: Vec<bool> = f.iter().map(|v| !v).collect();
            let a = roc_auroc(&s, &f).unwrap().auroc;
            prop_assert!((a + roc_auroc(&neg, &f).unwrap().auroc - 1.0).abs() < 1e-12);
            prop_assert!((a + roc_auroc(&s, &swapped).unwrap().auroc - 1.0).abs() < 1e-12);
            // Flipping both the sign and the roles is the identity.
            prop_assert_eq!(a, roc_auroc(&neg, &swapped).unwrap().auroc);
        }

        #[test]
        fn threshold_oracles_agree((s, f) in arb_case()) {
            for pos in [Positive::Id, Positive::Ood] {
                let a = aupr(&s, &f, pos).unwrap();
                prop_assert!((a - enumerate_aupr(&s, &f, pos)).abs() < 1e-12);
            }
            let op = fpr95_der(&s, &f).unwrap();
            let (fpr, der) = scan_fpr95(&s, &f);
            prop_assert_eq!(op.fpr95, fpr);
            prop_assert!((op.der - der).abs() < 1e-12);
        }

        #[test]
        fn ranking_metrics_ignore_monotone_transforms((s, f) in arb_case()) {
            let t: Vec<f64> = s.iter().map(|v| 2.0 * v + 7.0).collect();
            prop_assert_eq!(ood_metrics(&s, &f).unwrap(), ood_metrics(&t, &f).unwrap());
        }

        #[test]
        fn metrics_ignore_joint_permutation((s, f) in arb_case(), seed in any::<u64>()) {
            let mut idx: Vec<usize> = (0..s.len()).collect();
            RngState::new(seed).shuffle(&mut idx);
            let ps: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
            let pf: Vec<bool> = idx.iter().map(|&i| f[i]).collect();
            prop_assert_eq!(ood_metrics(&s, &f).unwrap(), ood_metrics(&ps, &pf).unwrap());
            let golds: Vec<usize> = s.iter().map(|v| (*v as usize) % 3).collect();
            let preds: Vec<usize> = f.iter().map(|&b| usize::from(b) + 1).collect();
            let pg: Vec<usize> = idx.iter().map(|&i| golds[i]).collect();
            let pp: Vec<usize> = idx.iter().map(|&i| preds[i]).collect();
            prop_assert_eq!(id_metrics(&preds, &golds, 3).unwrap(), id_metrics(&pp, &pg, 3).unwrap());
        }
    }
}
