//! Exact Euclidean distance transform.
//!
//! Three separable passes of the lower-envelope-of-parabolas algorithm
//! (Felzenszwalb & Huttenlocher), one per axis. Squared distances are kept
//! as integers and envelope breakpoints as exact fractions, so the result is
//! the exact squared distance with no rounding anywhere.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{LabelVolume, ScalarVolume, Shape3};

/// Distance (voxel units) from every voxel to the nearest foreground voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub dist: ScalarVolume,
    /// FNV-1a digest of the originating mask, dimensions included.
    pub source_mask_hash: u64,
}

/// Marks "no site yet" in a line that has not met the foreground.
const UNREACHED: i64 = i64::MAX;

/// Exact squared distances to the nearest `true` voxel.
///
/// Returns [`Error::EmptyForeground`] when no voxel is set.
pub fn squared_distances(shape: &Shape3, foreground: &[bool]) -> Result<Vec<i64>> {
    assert_eq!(foreground.len(), shape.len());
    if !foreground.iter().any(|&f| f) {
        return Err(Error::EmptyForeground);
    }
    let mut field: Vec<i64> = foreground
        .iter()
        .map(|&f| if f { 0 } else { UNREACHED })
        .collect();

    let dims = shape.dims();
    let strides = shape.strides();
    let longest = dims.iter().copied().max().unwrap_or(1);
    let mut envelope = Envelope::with_capacity(longest);
    let mut line = vec![0i64; longest];
    let mut out = vec![0i64; longest];

    for axis in 0..3 {
        let n = dims[axis];
        let stride = strides[axis];
        let (a, b) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for j in 0..dims[b] {
            for i in 0..dims[a] {
                let start = i * strides[a] + j * strides[b];
                for (p, slot) in line[..n].iter_mut().enumerate() {
                    *slot = field[start + p * stride];
                }
                envelope.transform(&line[..n], &mut out[..n]);
                for (p, v) in out[..n].iter().enumerate() {
                    field[start + p * stride] = *v;
                }
            }
        }
    }
    Ok(field)
}

/// Squared EDT of a binary mask (any nonzero label counts as foreground).
pub fn edt_squared(mask: &LabelVolume) -> Result<ScalarVolume> {
    let sq = squared_distances(mask.shape(), &mask.foreground())?;
    Ok(ScalarVolume::from_vec_unchecked(
        *mask.shape(),
        sq.into_iter().map(|v| v as f64).collect(),
    ))
}

pub fn edt(mask: &LabelVolume) -> Result<DistanceField> {
    let sq = squared_distances(mask.shape(), &mask.foreground())?;
    let dist = sq.into_iter().map(|v| libm::sqrt(v as f64)).collect();
    Ok(DistanceField {
        dist: ScalarVolume::from_vec_unchecked(*mask.shape(), dist),
        source_mask_hash: mask_hash(mask),
    })
}

/// Foreground voxels with a 6-connected background neighbour, plus
/// foreground voxels on the volume faces.
pub fn boundary_voxels(mask: &LabelVolume) -> LabelVolume {
    let fg = mask.foreground();
    boundary_of(mask.shape(), &fg)
}

pub(crate) fn boundary_of(shape: &Shape3, fg: &[bool]) -> LabelVolume {
    LabelVolume::binary_from_fn(*shape, |i| {
        fg[i] && (shape.on_face(i) || shape.face_neighbors(i).any(|j| !fg[j]))
    })
}

pub fn mask_hash(mask: &LabelVolume) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let dims = mask.shape().dims();
    let header = dims.iter().flat_map(|d| (*d as u64).to_le_bytes());
    for byte in header.chain(mask.labels().iter().map(|&l| (l != 0) as u8)) {
        h ^= byte as u64;
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// Breakpoint between two parabolas, `num / den` with `den > 0`.
#[derive(Clone, Copy)]
struct Frac {
    num: i64,
    den: i64,
}

impl Frac {
    fn le(self, other: Frac) -> bool {
        (self.num as i128) * (other.den as i128) <= (other.num as i128) * (self.den as i128)
    }

    fn lt_int(self, p: i64) -> bool {
        (self.num as i128) < (p as i128) * (self.den as i128)
    }
}

/// Scratch buffers for the 1D lower envelope, reused across lines.
struct Envelope {
    sites: Vec<usize>,
    // bounds[k] is the left end of parabola k's interval; bounds[0] = -inf
    bounds: Vec<Frac>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            sites: Vec::with_capacity(n),
            bounds: Vec::with_capacity(n),
        }
    }

    fn transform(&mut self, f: &[i64], out: &mut [i64]) {
        self.sites.clear();
        self.bounds.clear();
        for (q, &fq) in f.iter().enumerate() {
            if fq == UNREACHED {
                continue;
            }
            let qi = q as i64;
            loop {
                let Some(&v) = self.sites.last() else {
                    self.sites.push(q);
                    self.bounds.push(Frac { num: 0, den: 1 });
                    break;
                };
                let vi = v as i64;
                let s = Frac {
                    num: (fq + qi * qi) - (f[v] + vi * vi),
                    den: 2 * (qi - vi),
                };
                let k = self.sites.len() - 1;
                if k > 0 && s.le(self.bounds[k]) {
                    self.sites.pop();
                    self.bounds.pop();
                    continue;
                }
                self.sites.push(q);
                self.bounds.push(s);
                break;
            }
        }
        if self.sites.is_empty() {
            out.fill(UNREACHED);
            return;
        }
        let mut k = 0;
        for (p, slot) in out.iter_mut().enumerate() {
            let pi = p as i64;
            while k + 1 < self.sites.len() && self.bounds[k + 1].lt_int(pi) {
                k += 1;
            }
            let v = self.sites[k] as i64;
            *slot = (pi - v) * (pi - v) + f[self.sites[k]];
        }
    }
}
