//! Binary morphology, connected components, and the prediction clean-up
//! pipeline (closing, then per-class largest component).
//!
//! Voxels outside the volume are background for both dilation and erosion,
//! so erosion eats one shell at the volume faces.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{LabelVolume, Shape3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Six,
    #[default]
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Option<Self> {
        match n {
            6 => Some(Self::Six),
            26 => Some(Self::TwentySix),
            _ => None,
        }
    }

    pub fn count(self) -> u32 {
        match self {
            Self::Six => 6,
            Self::TwentySix => 26,
        }
    }

    fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::with_capacity(26);
        for dz in -1..=1isize {
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let nonzero = (dx != 0) as u8 + (dy != 0) as u8 + (dz != 0) as u8;
                    let keep = match self {
                        Self::Six => nonzero == 1,
                        Self::TwentySix => nonzero >= 1,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

/// Radius-1 structuring element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StructuringElement {
    pub kind: Connectivity,
}

impl StructuringElement {
    pub const SIX: Self = Self {
        kind: Connectivity::Six,
    };
    pub const TWENTY_SIX: Self = Self {
        kind: Connectivity::TwentySix,
    };
}

/// Calls `f` with every in-bounds neighbour of voxel `i` and returns whether
/// any neighbour fell outside the volume.
fn visit_neighbors(
    shape: &Shape3,
    offsets: &[[isize; 3]],
    i: usize,
    mut f: impl FnMut(usize),
) -> bool {
    let (x, y, z) = shape.coord(i);
    let mut clipped = false;
    for o in offsets {
        let (sx, sy, sz) = (x as isize + o[0], y as isize + o[1], z as isize + o[2]);
        if sx < 0
            || sy < 0
            || sz < 0
            || sx >= shape.nx as isize
            || sy >= shape.ny as isize
            || sz >= shape.nz as isize
        {
            clipped = true;
            continue;
        }
        f(shape.index(sx as usize, sy as usize, sz as usize));
    }
    clipped
}

fn dilate_bool(shape: &Shape3, mask: &[bool], se: StructuringElement) -> Vec<bool> {
    let offsets = se.kind.offsets();
    (0..shape.len())
        .map(|i| {
            if mask[i] {
                return true;
            }
            let mut hit = false;
            visit_neighbors(shape, &offsets, i, |j| hit |= mask[j]);
            hit
        })
        .collect()
}

fn erode_bool(shape: &Shape3, mask: &[bool], se: StructuringElement) -> Vec<bool> {
    let offsets = se.kind.offsets();
    (0..shape.len())
        .map(|i| {
            if !mask[i] {
                return false;
            }
            let mut all = true;
            let clipped = visit_neighbors(shape, &offsets, i, |j| all &= mask[j]);
            all && !clipped
        })
        .collect()
}

fn to_mask(shape: &Shape3, v: Vec<bool>) -> LabelVolume {
    LabelVolume::binary_from_fn(*shape, |i| v[i])
}

pub fn dilate(mask: &LabelVolume, se: StructuringElement) -> LabelVolume {
    to_mask(
        mask.shape(),
        dilate_bool(mask.shape(), &mask.foreground(), se),
    )
}

pub fn erode(mask: &LabelVolume, se: StructuringElement) -> LabelVolume {
    to_mask(
        mask.shape(),
        erode_bool(mask.shape(), &mask.foreground(), se),
    )
}

/// Dilation followed by erosion.
pub fn closing(mask: &LabelVolume, se: StructuringElement) -> LabelVolume {
    let shape = mask.shape();
    let d = dilate_bool(shape, &mask.foreground(), se);
    to_mask(shape, erode_bool(shape, &d, se))
}

/// Connected components, largest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    /// Per voxel: 0 for background, otherwise `1 + rank` in `sizes`.
    pub ids: Vec<u32>,
    pub sizes: Vec<usize>,
    /// Smallest linear index in each component.
    pub seeds: Vec<usize>,
}

impl Components {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Mask of component `rank` (0 = largest).
    pub fn component_mask(&self, rank: usize) -> Vec<bool> {
        let id = rank as u32 + 1;
        self.ids.iter().map(|&c| c == id).collect()
    }
}

/// Two-pass union-find labelling. Components are ordered by size
/// (descending), ties broken by the smaller seed index.
pub fn connected_components(mask: &LabelVolume, connectivity: Connectivity) -> Components {
    components_of(mask.shape(), &mask.foreground(), connectivity)
}

pub(crate) fn components_of(shape: &Shape3, fg: &[bool], connectivity: Connectivity) -> Components {
    let n = shape.len();
    // backward half of the neighbourhood: already visited in raster order
    let backward: Vec<[isize; 3]> = connectivity
        .offsets()
        .into_iter()
        .filter(|o| (o[2], o[1], o[0]) < (0, 0, 0))
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        if !fg[i] {
            continue;
        }
        visit_neighbors(shape, &backward, i, |j| {
            if fg[j] {
                union(&mut parent, i, j);
            }
        });
    }
    // union keeps the smaller index as root, so roots are the seeds
    let mut root_size = vec![0usize; n];
    for (i, &inside) in fg.iter().enumerate() {
        if inside {
            let r = find(&mut parent, i);
            root_size[r] += 1;
        }
    }
    let mut order: Vec<(usize, usize)> = (0..n)
        .filter(|&r| root_size[r] > 0)
        .map(|r| (root_size[r], r))
        .collect();
    order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut rank_of_root = vec![0u32; n];
    for (rank, &(_, root)) in order.iter().enumerate() {
        rank_of_root[root] = rank as u32 + 1;
    }
    let ids = (0..n)
        .map(|i| {
            if fg[i] {
                rank_of_root[find(&mut parent, i)]
            } else {
                0
            }
        })
        .collect();
    Components {
        ids,
        sizes: order.iter().map(|p| p.0).collect(),
        seeds: order.iter().map(|p| p.1).collect(),
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PostprocConfig {
    pub element: StructuringElement,
    pub connectivity: Connectivity,
}

/// Per foreground class: closing, then keep the largest connected component.
///
/// Closing may only claim background voxels (never another class's voxels);
/// when two classes claim the same background voxel the lower class wins.
pub fn postprocess(pred: &LabelVolume) -> LabelVolume {
    postprocess_with(pred, &PostprocConfig::default())
}

pub fn postprocess_with(pred: &LabelVolume, cfg: &PostprocConfig) -> LabelVolume {
    let shape = pred.shape();
    let src = pred.labels();
    let mut out = vec![0u8; shape.len()];
    for class in 1..pred.num_classes() {
        let c = class as u8;
        let mask: Vec<bool> = src.iter().map(|&l| l == c).collect();
        if !mask.iter().any(|&m| m) {
            continue;
        }
        let dilated = dilate_bool(shape, &mask, cfg.element);
        let closed = erode_bool(shape, &dilated, cfg.element);
        let allowed: Vec<bool> = (0..shape.len())
            .map(|i| closed[i] && (src[i] == c || (src[i] == 0 && out[i] == 0)))
            .collect();
        let comps = components_of(shape, &allowed, cfg.connectivity);
        for (o, &id) in out.iter_mut().zip(&comps.ids) {
            if id == 1 {
                *o = c;
            }
        }
    }
    LabelVolume::from_vec_unchecked(*shape, out, pred.num_classes())
}
