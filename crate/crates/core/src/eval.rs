//! Selection quality against ground truth.
//!
//! Every ground-truth object is scored by its best Jaccard overlap among
//! the first k selected segments (its BSS). Instance-level quality is
//! the mean BSS, class-level quality averages per-class means, and
//! recall@0.5 counts objects whose BSS reaches one half. Budget curves
//! sample these at increasing k and summarize recall with a trapezoidal
//! area over k / k_max; that area is a budget-normalized summary, not
//! comparable to published any-budget AUC numbers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{MaskError, RegionMask};
use crate::pool::{GroundTruth, SegmentPool};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("pool grid {pool_width}x{pool_height} does not match ground truth {gt_width}x{gt_height}")]
    GridMismatch {
        pool_width: u32,
        pool_height: u32,
        gt_width: u32,
        gt_height: u32,
    },
    #[error("selection names unknown segment id {id}")]
    UnknownId { id: u64 },
    #[error("selection repeats segment id {id}")]
    DuplicateId { id: u64 },
    #[error("budget k={k} exceeds the selection length {len}")]
    BudgetExceedsSelection { k: usize, len: usize },
    #[error("budget k must be at least 1")]
    ZeroBudget,
    #[error("curve step must be at least 1")]
    ZeroStep,
}

/// Quality of one selection prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Best segment score per ground-truth instance.
    pub per_object_bss: BTreeMap<u64, f64>,
    /// Mean BSS over instances.
    pub j_instance: f64,
    /// Mean BSS per class.
    pub j_class: BTreeMap<String, f64>,
    /// Mean of the per-class means.
    pub j_class_mean: f64,
    /// Fraction of instances with BSS at least 0.5.
    pub recall_at_half: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub recall_at_half: f64,
    pub j_instance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetCurve {
    pub points: Vec<CurvePoint>,
    /// Trapezoidal area of recall over k / k_max, normalized to [0, 1].
    pub auc_budget: f64,
}

/// Intersection over union of two masks on the same grid.
///
/// At least one mask must be non-empty; pool and ground-truth validation
/// guarantee that for every caller here.
pub fn jaccard(a: &RegionMask, b: &RegionMask) -> Result<f64, MaskError> {
    let inter = a.intersection_area(b)?;
    let union = a.area() + b.area() - inter;
    debug_assert!(union > 0, "jaccard of two empty masks");
    Ok(inter as f64 / union as f64)
}

fn selection_indices(pool: &SegmentPool, order: &[u64]) -> Result<Vec<usize>, EvalError> {
    let mut seen = std::collections::HashSet::with_capacity(order.len());
    order
        .iter()
        .map(|&id| {
            if !seen.insert(id) {
                return Err(EvalError::DuplicateId { id });
            }
            pool.index_of(id).ok_or(EvalError::UnknownId { id })
        })
        .collect()
}

fn check_grids(pool: &SegmentPool, gt: &GroundTruth) -> Result<(), EvalError> {
    if pool.grid() != gt.grid() {
        let (pool_width, pool_height) = pool.grid();
        let (gt_width, gt_height) = gt.grid();
        return Err(EvalError::GridMismatch {
            pool_width,
            pool_height,
            gt_width,
            gt_height,
        });
    }
    Ok(())
}

/// Best Jaccard per object over the first `k` entries of `order`.
fn bss_prefix(
    pool: &SegmentPool,
    gt: &GroundTruth,
    indices: &[usize],
    k: usize,
) -> Result<Vec<f64>, EvalError> {
    let mut bss = vec![0.0f64; gt.objects().len()];
    for &idx in &indices[..k] {
        let mask = &pool.segment(idx).mask;
        for (slot, obj) in bss.iter_mut().zip(gt.objects()) {
            let j = jaccard(mask, &obj.mask)?;
            if j > *slot {
                *slot = j;
            }
        }
    }
    Ok(bss)
}

fn metrics_from_bss(gt: &GroundTruth, bss: &[f64]) -> Metrics {
    let per_object_bss: BTreeMap<u64, f64> = gt
        .objects()
        .iter()
        .zip(bss)
        .map(|(o, &b)| (o.instance, b))
        .collect();
    let count = bss.len() as f64;
    let j_instance = bss.iter().sum::<f64>() / count;
    let mut by_class: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (obj, &b) in gt.objects().iter().zip(bss) {
        let entry = by_class.entry(obj.class.clone()).or_insert((0.0, 0));
        entry.0 += b;
        entry.1 += 1;
    }
    let j_class: BTreeMap<String, f64> = by_class
        .into_iter()
        .map(|(class, (sum, n))| (class, sum / n as f64))
        .collect();
    let j_class_mean = j_class.values().sum::<f64>() / j_class.len() as f64;
    let recall_at_half = bss.iter().filter(|&&b| b >= 0.5).count() as f64 / count;
    Metrics {
        per_object_bss,
        j_instance,
        j_class,
        j_class_mean,
        recall_at_half,
    }
}

/// Scores the first `k` proposals of `order` against `gt`.
pub fn score_selection(
    pool: &SegmentPool,
    gt: &GroundTruth,
    order: &[u64],
    k: usize,
) -> Result<Metrics, EvalError> {
    check_grids(pool, gt)?;
    if k == 0 {
        return Err(EvalError::ZeroBudget);
    }
    if k > order.len() {
        return Err(EvalError::BudgetExceedsSelection { k, len: order.len() });
    }
    let indices = selection_indices(pool, order)?;
    let bss = bss_prefix(pool, gt, &indices, k)?;
    Ok(metrics_from_bss(gt, &bss))
}

/// Samples metrics at k = step, 2*step, ... and always at k_max.
pub fn budget_curve(
    pool: &SegmentPool,
    gt: &GroundTruth,
    order: &[u64],
    k_max: usize,
    step: usize,
) -> Result<BudgetCurve, EvalError> {
    check_grids(pool, gt)?;
    if step == 0 {
        return Err(EvalError::ZeroStep);
    }
    if k_max == 0 {
        return Err(EvalError::ZeroBudget);
    }
    if k_max > order.len() {
        return Err(EvalError::BudgetExceedsSelection {
            k: k_max,
            len: order.len(),
        });
    }
    let indices = selection_indices(pool, order)?;
    let mut ks: Vec<usize> = (step..=k_max).step_by(step).collect();
    if ks.last() != Some(&k_max) {
        ks.push(k_max);
    }
    let mut points = Vec::with_capacity(ks.len());
    for &k in &ks {
        let bss = bss_prefix(pool, gt, &indices, k)?;
        let m = metrics_from_bss(gt, &bss);
        points.push(CurvePoint {
            k,
            recall_at_half: m.recall_at_half,
            j_instance: m.j_instance,
        });
    }

    // Trapezoid over x = k / k_max, normalized by the sampled span so a
    // constant recall of 1 scores exactly 1.
    let auc_budget = if points.len() == 1 {
        points[0].recall_at_half
    } else {
        let x = |p: &CurvePoint| p.k as f64 / k_max as f64;
        let mut area = 0.0;
        let mut span = 0.0;
        for pair in points.windows(2) {
            let w = x(&pair[1]) - x(&pair[0]);
            area += w * 0.5 * (pair[0].recall_at_half + pair[1].recall_at_half);
            span += w * 1.0;
        }
        area / span
    };
    Ok(BudgetCurve { points, auc_budget })
}

/// Renders a curve in the sweep CSV layout.
pub fn curve_to_csv(curve: &BudgetCurve) -> String {
    let mut out = String::from("k,recall_at_half,j_instance\n");
    for p in &curve.points {
        out.push_str(&format!("{},{},{}\n", p.k, p.recall_at_half, p.j_instance));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::{GtObject, RewardTransform, Segment};

    fn mask(runs: &[(u64, u64)]) -> RegionMask {
        RegionMask::new(8, 8, runs.to_vec()).unwrap()
    }

    #[test]
    fn jaccard_counts_thirds() {
        // Areas 4 and 4 overlapping in 2 cells: 2 / 6.
        let a = mask(&[(0, 4)]);
        let b = mask(&[(2, 4)]);
        assert!((jaccard(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn jaccard_extremes() {
        let a = mask(&[(0, 4)]);
        assert_eq!(jaccard(&a, &a).unwrap(), 1.0);
        let b = mask(&[(10, 4)]);
        assert_eq!(jaccard(&a, &b).unwrap(), 0.0);
        let off_grid = RegionMask::new(4, 4, vec![(0, 4)]).unwrap();
        assert!(jaccard(&a, &off_grid).is_err());
    }

    fn fixture() -> (SegmentPool, GroundTruth) {
        let segments = vec![
            // Exactly object 10.
            Segment {
                id: 0,
                layer: 0,
                feature: vec![0.0],
                reward: 0.9,
                mask: mask(&[(0, 4)]),
            },
            // Half of object 11 (4 of its 8 cells, no extra).
            Segment {
                id: 1,
                layer: 0,
                feature: vec![1.0],
                reward: 0.4,
                mask: mask(&[(32, 4)]),
            },
            // Unrelated.
            Segment {
                id: 2,
                layer: 0,
                feature: vec![2.0],
                reward: 0.1,
                mask: mask(&[(56, 4)]),
            },
        ];
        let pool = SegmentPool::new((8, 8), 1, 1, segments, RewardTransform::None).unwrap();
        let gt = GroundTruth::new(
            (8, 8),
            vec![
                GtObject {
                    instance: 10,
                    class: "cat".into(),
                    mask: mask(&[(0, 4)]),
                },
                GtObject {
                    instance: 11,
                    class: "dog".into(),
                    mask: mask(&[(32, 8)]),
                },
            ],
        )
        .unwrap();
        (pool, gt)
    }

    #[test]
    fn bss_takes_the_best_proposal_in_the_prefix() {
        let (pool, gt) = fixture();
        let m = score_selection(&pool, &gt, &[2, 0, 1], 3).unwrap();
        assert_eq!(m.per_object_bss[&10], 1.0);
        assert_eq!(m.per_object_bss[&11], 0.5);
        assert!((m.j_instance - 0.75).abs() < 1e-15);
        assert_eq!(m.recall_at_half, 1.0);

        let early = score_selection(&pool, &gt, &[2, 0, 1], 1).unwrap();
        assert_eq!(early.per_object_bss[&10], 0.0);
        assert_eq!(early.recall_at_half, 0.0);
    }

    #[test]
    fn class_means_average_over_classes() {
        let (pool, gt) = fixture();
        let m = score_selection(&pool, &gt, &[0, 1], 2).unwrap();
        assert_eq!(m.j_class["cat"], 1.0);
        assert_eq!(m.j_class["dog"], 0.5);
        assert!((m.j_class_mean - 0.75).abs() < 1e-15);
    }

    #[test]
    fn selection_validation_catches_bad_ids_and_budgets() {
        let (pool, gt) = fixture();
        assert!(matches!(
            score_selection(&pool, &gt, &[9], 1),
            Err(EvalError::UnknownId { id: 9 })
        ));
        assert!(matches!(
            score_selection(&pool, &gt, &[0, 0], 2),
            Err(EvalError::DuplicateId { id: 0 })
        ));
        assert!(matches!(
            score_selection(&pool, &gt, &[0], 2),
            Err(EvalError::BudgetExceedsSelection { k: 2, len: 1 })
        ));
        assert!(matches!(
            score_selection(&pool, &gt, &[0], 0),
            Err(EvalError::ZeroBudget)
        ));
    }

    #[test]
    fn curve_is_monotone_and_lands_on_k_max() {
        let (pool, gt) = fixture();
        let curve = budget_curve(&pool, &gt, &[2, 0, 1], 3, 1).unwrap();
        assert_eq!(curve.points.len(), 3);
        for pair in curve.points.windows(2) {
            assert!(pair[1].recall_at_half >= pair[0].recall_at_half);
            assert!(pair[1].j_instance >= pair[0].j_instance);
        }
        let coarse = budget_curve(&pool, &gt, &[2, 0, 1], 3, 2).unwrap();
        let ks: Vec<usize> = coarse.points.iter().map(|p| p.k).collect();
        assert_eq!(ks, vec![2, 3], "k_max is always sampled");
    }

    #[test]
    fn constant_full_recall_gives_auc_exactly_one() {
        let (pool, gt) = fixture();
        let curve = budget_curve(&pool, &gt, &[0, 1, 2], 3, 2).unwrap();
        assert!(curve.points.iter().all(|p| p.recall_at_half == 1.0));
        assert_eq!(curve.auc_budget, 1.0);

        let single = budget_curve(&pool, &gt, &[0, 1, 2], 3, 3).unwrap();
        assert_eq!(single.points.len(), 1);
        assert_eq!(single.auc_budget, single.points[0].recall_at_half);
    }

    #[test]
    fn csv_layout_is_stable() {
        let (pool, gt) = fixture();
        let curve = budget_curve(&pool, &gt, &[0, 1], 2, 1).unwrap();
        let csv = curve_to_csv(&curve);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("k,recall_at_half,j_instance"));
        assert_eq!(lines.next(), Some("1,0.5,0.5"));
        assert_eq!(lines.next(), Some("2,1,0.75"));
    }
}
