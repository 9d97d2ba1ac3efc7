//! Overlap scores on hard label volumes: global Dice, boundary Dice and its
//! tolerance-relaxed variant.

use alloc::vec::Vec;

use crate::edt::{boundary_of, squared_distances};
use crate::error::Result;
use crate::grid::{LabelVolume, Shape3};

pub const DEFAULT_TOLERANCES: [u32; 4] = [1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub class: usize,
    pub in_pred: bool,
    pub in_gt: bool,
    pub g_dsc: f64,
    pub b_dsc: f64,
    /// `(tolerance, relaxed B-DSC)` pairs in the requested order.
    pub relaxed: Vec<(u32, f64)>,
}

impl ClassScores {
    /// Present in at least one of the two volumes.
    pub fn present(&self) -> bool {
        self.in_pred || self.in_gt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// One entry per foreground class `1..K`.
    pub classes: Vec<ClassScores>,
    pub mean_g_dsc: f64,
    pub mean_b_dsc: f64,
    pub mean_relaxed: Vec<(u32, f64)>,
}

impl MetricReport {
    pub fn tolerances(&self) -> impl Iterator<Item = u32> + '_ {
        self.mean_relaxed.iter().map(|(t, _)| *t)
    }
}

/// `2|P ∩ G| / (|P| + |G|)` for the voxels of `class`; 1 when both are empty.
pub fn global_dsc(pred: &LabelVolume, gt: &LabelVolume, class: usize) -> Result<f64> {
    pred.check_compatible(gt)?;
    let c = gt.check_class(class)?;
    let (mut both, mut p, mut g) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.labels().iter().zip(gt.labels()) {
        let (ia, ib) = (a == c, b == c);
        p += ia as usize;
        g += ib as usize;
        both += (ia && ib) as usize;
    }
    Ok(dice_ratio(2 * both, p + g))
}

/// Boundary Dice of `class` with tolerance `tol` voxels: the fraction of
/// boundary voxels of either mask lying within Euclidean distance `tol` of
/// the other mask's boundary. `tol = 0` is the strict boundary Dice.
pub fn boundary_dsc(pred: &LabelVolume, gt: &LabelVolume, class: usize, tol: u32) -> Result<f64> {
    pred.check_compatible(gt)?;
    let c = gt.check_class(class)?;
    let pair = BoundaryPair::new(pred, gt, c);
    Ok(pair.score(tol))
}

pub fn evaluate(pred: &LabelVolume, gt: &LabelVolume) -> Result<MetricReport> {
    evaluate_with(pred, gt, &DEFAULT_TOLERANCES)
}

pub fn evaluate_with(
    pred: &LabelVolume,
    gt: &LabelVolume,
    tolerances: &[u32],
) -> Result<MetricReport> {
    pred.check_compatible(gt)?;
    let mut classes = Vec::with_capacity(gt.num_classes() - 1);
    for class in 1..gt.num_classes() {
        let c = class as u8;
        let pair = BoundaryPair::new(pred, gt, c);
        classes.push(ClassScores {
            class,
            in_pred: pred.labels().contains(&c),
            in_gt: gt.labels().contains(&c),
            g_dsc: global_dsc(pred, gt, class)?,
            b_dsc: pair.score(0),
            relaxed: tolerances.iter().map(|&t| (t, pair.score(t))).collect(),
        });
    }
    let present: Vec<&ClassScores> = classes.iter().filter(|s| s.present()).collect();
    let mean = |f: &dyn Fn(&ClassScores) -> f64| {
        if present.is_empty() {
            1.0
        } else {
            present.iter().map(|s| f(s)).sum::<f64>() / present.len() as f64
        }
    };
    let mean_relaxed = tolerances
        .iter()
        .enumerate()
        .map(|(k, &t)| (t, mean(&|s: &ClassScores| s.relaxed[k].1)))
        .collect();
    Ok(MetricReport {
        mean_g_dsc: mean(&|s| s.g_dsc),
        mean_b_dsc: mean(&|s| s.b_dsc),
        mean_relaxed,
        classes,
    })
}

fn dice_ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Boundary sets of one class in both volumes, with squared distances from
/// each voxel to the opposite boundary.
struct BoundaryPair {
    pred_boundary: Vec<usize>,
    gt_boundary: Vec<usize>,
    // squared distance of every voxel to the gt / pred boundary
    to_gt: Option<Vec<i64>>,
    to_pred: Option<Vec<i64>>,
}

impl BoundaryPair {
    fn new(pred: &LabelVolume, gt: &LabelVolume, c: u8) -> Self {
        let shape: &Shape3 = gt.shape();
        let boundary = |v: &LabelVolume| {
            let mask: Vec<bool> = v.labels().iter().map(|&l| l == c).collect();
            let b = boundary_of(shape, &mask);
            let set: Vec<bool> = b.labels().iter().map(|&l| l != 0).collect();
            let list = (0..shape.len()).filter(|&i| set[i]).collect::<Vec<_>>();
            let dist = squared_distances(shape, &set).ok();
            (list, dist)
        };
        let (pred_boundary, to_pred) = boundary(pred);
        let (gt_boundary, to_gt) = boundary(gt);
        Self {
            pred_boundary,
            gt_boundary,
            to_gt,
            to_pred,
        }
    }

    fn score(&self, tol: u32) -> f64 {
        let total = self.pred_boundary.len() + self.gt_boundary.len();
        match (&self.to_gt, &self.to_pred) {
            (None, None) => 1.0,
            (Some(to_gt), Some(to_pred)) => {
                let limit = (tol as i64) * (tol as i64);
                let hits = self
                    .pred_boundary
                    .iter()
                    .filter(|&&v| to_gt[v] <= limit)
                    .count()
                    + self
                        .gt_boundary
                        .iter()
                        .filter(|&&v| to_pred[v] <= limit)
                        .count();
                hits as f64 / total as f64
            }
            _ => 0.0,
        }
    }
}
