//! Error-penalizing distance maps.
//!
//! Distances are reverted so that voxels next to an object surface carry the
//! largest weight: on each region the map is `max(D) - D`. The background
//! side uses one maximum over all objects jointly; each foreground class gets
//! its own interior map normalized by its own maximum, so small structures are
//! not drowned out by large ones.

use alloc::vec::Vec;

use crate::edt::squared_distances;
use crate::error::{Error, Result};
use crate::grid::{LabelVolume, ScalarVolume, Shape3};

/// The combined penalty field and the constituents it was assembled from.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMap {
    /// `outer + sum(inner)`, non-negative.
    pub phi: ScalarVolume,
    /// Reverted distance map over background voxels, zero on foreground.
    pub outer: ScalarVolume,
    /// `inner[c - 1]` is the reverted interior map of class `c`.
    pub inner: Vec<ScalarVolume>,
    /// `absent[c - 1]` is set when class `c` has no voxels.
    pub absent: Vec<bool>,
    pub num_classes: usize,
}

impl PenaltyMap {
    pub fn inner_of(&self, class: usize) -> Option<&ScalarVolume> {
        class.checked_sub(1).and_then(|i| self.inner.get(i))
    }
}

/// Background-side map: `max(D) - D` on background voxels, where `D` is the
/// distance to the union of all foreground classes; zero on foreground.
pub fn outer_map(gt: &LabelVolume) -> Result<ScalarVolume> {
    let fg = gt.foreground();
    let sq = squared_distances(gt.shape(), &fg)?;
    let dist: Vec<f64> = sq.iter().map(|&v| libm::sqrt(v as f64)).collect();
    let max = dist.iter().copied().fold(0.0, f64::max);
    let data = dist
        .iter()
        .zip(&fg)
        .map(|(&d, &is_fg)| if is_fg { 0.0 } else { max - d })
        .collect();
    Ok(ScalarVolume::from_vec_unchecked(*gt.shape(), data))
}

/// Interior map of one class, or `None` when the class is empty.
///
/// `Dc` is the distance from each class voxel to the nearest voxel outside
/// the class. When the class fills the whole volume, the volume exterior is
/// taken as the outside instead.
pub fn inner_map(gt: &LabelVolume, class: usize) -> Result<Option<ScalarVolume>> {
    let c = gt.check_class(class)?;
    let shape = *gt.shape();
    let inside: Vec<bool> = gt.labels().iter().map(|&l| l == c).collect();
    if !inside.iter().any(|&v| v) {
        return Ok(None);
    }
    let outside: Vec<bool> = inside.iter().map(|&v| !v).collect();
    let dist = match squared_distances(&shape, &outside) {
        Ok(sq) => sq.into_iter().map(|v| libm::sqrt(v as f64)).collect(),
        Err(_) => exterior_distances(&shape),
    };
    let max = dist
        .iter()
        .zip(&inside)
        .filter(|(_, &i)| i)
        .map(|(&d, _)| d)
        .fold(0.0, f64::max);
    let data = dist
        .iter()
        .zip(&inside)
        .map(|(&d, &i)| if i { max - d } else { 0.0 })
        .collect();
    Ok(Some(ScalarVolume::from_vec_unchecked(shape, data)))
}

/// Distance from each voxel to the ring of voxels just beyond the volume.
fn exterior_distances(shape: &Shape3) -> Vec<f64> {
    (0..shape.len())
        .map(|i| {
            let (x, y, z) = shape.coord(i);
            let steps = [
                x + 1,
                shape.nx - x,
                y + 1,
                shape.ny - y,
                z + 1,
                shape.nz - z,
            ];
            steps.into_iter().min().unwrap_or(1) as f64
        })
        .collect()
}

/// Full penalty map of a ground-truth label volume.
pub fn build_penalty(gt: &LabelVolume) -> Result<PenaltyMap> {
    if !gt.has_foreground() {
        return Err(Error::EmptyForeground);
    }
    let shape = *gt.shape();
    let outer = outer_map(gt)?;
    let mut phi = outer.data().to_vec();
    let mut inner = Vec::with_capacity(gt.num_classes() - 1);
    let mut absent = Vec::with_capacity(gt.num_classes() - 1);
    for class in 1..gt.num_classes() {
        match inner_map(gt, class)? {
            Some(map) => {
                for (acc, v) in phi.iter_mut().zip(map.data()) {
                    *acc += v;
                }
                inner.push(map);
                absent.push(false);
            }
            None => {
                inner.push(ScalarVolume::zeros(shape));
                absent.push(true);
            }
        }
    }
    Ok(PenaltyMap {
        phi: ScalarVolume::from_vec_unchecked(shape, phi),
        outer,
        inner,
        absent,
        num_classes: gt.num_classes(),
    })
}
