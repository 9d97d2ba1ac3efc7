//! Dense 3D volumes and the elementwise algebra shared by the rest of the
//! crate.
//!
//! All volumes are stored x-fastest: the linear index of `(x, y, z)` is
//! `x + nx * (y + ny * z)`. Multi-channel volumes are channel-major, so
//! channel `c` occupies `data[c * n..(c + 1) * n]`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Voxel lattice dimensions plus per-axis spacing in mm.
///
/// Spacing is carried for file round-trips only; every distance in this
/// crate is measured in voxel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape3 {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub spacing: [f64; 3],
}

impl Shape3 {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        Self::with_spacing(nx, ny, nz, [1.0; 3])
    }

    pub fn with_spacing(nx: usize, ny: usize, nz: usize, spacing: [f64; 3]) -> Result<Self> {
        let spacing_ok = spacing.iter().all(|s| s.is_finite() && *s > 0.0);
        if nx == 0 || ny == 0 || nz == 0 || !spacing_ok {
            return Err(Error::InvalidShape { nx, ny, nz });
        }
        Ok(Self {
            nx,
            ny,
            nz,
            spacing,
        })
    }

    /// Cube of side `n` with unit spacing.
    pub fn cube(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && z < self.nz);
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn coord(&self, index: usize) -> (usize, usize, usize) {
        let x = index % self.nx;
        let rest = index / self.nx;
        (x, rest % self.ny, rest / self.ny)
    }

    /// Linear strides of the three axes.
    pub fn strides(&self) -> [usize; 3] {
        [1, self.nx, self.nx * self.ny]
    }

    /// Same lattice, ignoring spacing.
    pub fn same_lattice(&self, other: &Shape3) -> bool {
        self.dims() == other.dims()
    }

    /// Linear indices of the 6-connected neighbours of `index`.
    pub fn face_neighbors(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let (x, y, z) = self.coord(index);
        let dims = self.dims();
        let strides = self.strides();
        let pos = [x, y, z];
        (0..6).filter_map(move |k| {
            let axis = k / 2;
            if k % 2 == 0 {
                (pos[axis] > 0).then(|| index - strides[axis])
            } else {
                (pos[axis] + 1 < dims[axis]).then(|| index + strides[axis])
            }
        })
    }

    /// Whether `index` lies on one of the six faces of the volume.
    pub fn on_face(&self, index: usize) -> bool {
        let (x, y, z) = self.coord(index);
        x == 0 || y == 0 || z == 0 || x + 1 == self.nx || y + 1 == self.ny || z + 1 == self.nz
    }
}

/// Real-valued volume: images, distance maps, penalty maps.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    shape: Shape3,
    data: Vec<f64>,
}

impl ScalarVolume {
    pub fn new(shape: Shape3, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::DataLength {
                expected: shape.len(),
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape3) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape3, value: f64) -> Self {
        assert!(value.is_finite());
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub(crate) fn from_vec_unchecked(shape: Shape3, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &Shape3 {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.shape.index(x, y, z)]
    }

    /// Largest value; volumes are never empty.
    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Integer class labels, `0` being background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    shape: Shape3,
    labels: Vec<u8>,
    num_classes: usize,
}

impl LabelVolume {
    pub fn new(shape: Shape3, labels: Vec<u8>, num_classes: usize) -> Result<Self> {
        if !(2..=256).contains(&num_classes) {
            return Err(Error::InvalidClassCount(num_classes));
        }
        if labels.len() != shape.len() {
            return Err(Error::DataLength {
                expected: shape.len(),
                actual: labels.len(),
            });
        }
        if let Some(index) = labels.iter().position(|&l| l as usize >= num_classes) {
            return Err(Error::LabelOutOfRange {
                index,
                label: labels[index],
                num_classes,
            });
        }
        Ok(Self {
            shape,
            labels,
            num_classes,
        })
    }

    pub fn background(shape: Shape3, num_classes: usize) -> Result<Self> {
        Self::new(shape, vec![0; shape.len()], num_classes)
    }

    /// Binary mask (`K = 2`) from a predicate over voxels.
    pub fn binary_from_fn(shape: Shape3, mut f: impl FnMut(usize) -> bool) -> Self {
        let labels = (0..shape.len()).map(|i| f(i) as u8).collect();
        Self {
            shape,
            labels,
            num_classes: 2,
        }
    }

    pub(crate) fn from_vec_unchecked(shape: Shape3, labels: Vec<u8>, num_classes: usize) -> Self {
        debug_assert_eq!(labels.len(), shape.len());
        Self {
            shape,
            labels,
            num_classes,
        }
    }

    pub fn shape(&self) -> &Shape3 {
        &self.shape
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u8> {
        self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.labels[self.shape.index(x, y, z)]
    }

    pub fn count(&self, class: u8) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }

    pub fn has_foreground(&self) -> bool {
        self.labels.iter().any(|&l| l != 0)
    }

    /// Boolean view of the nonzero voxels.
    pub fn foreground(&self) -> Vec<bool> {
        self.labels.iter().map(|&l| l != 0).collect()
    }

    pub(crate) fn check_class(&self, class: usize) -> Result<u8> {
        if class >= self.num_classes {
            return Err(Error::ClassOutOfRange {
                class,
                num_classes: self.num_classes,
            });
        }
        Ok(class as u8)
    }

    pub(crate) fn check_compatible(&self, other: &LabelVolume) -> Result<()> {
        if !self.shape.same_lattice(&other.shape) {
            return Err(Error::ShapeMismatch);
        }
        if self.num_classes != other.num_classes {
            return Err(Error::ClassCountMismatch {
                left: self.num_classes,
                right: other.num_classes,
            });
        }
        Ok(())
    }
}

/// `K` real channels per voxel, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassVolume {
    shape: Shape3,
    num_classes: usize,
    data: Vec<f64>,
}

impl ClassVolume {
    pub fn new(shape: Shape3, num_classes: usize, data: Vec<f64>) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidClassCount(num_classes));
        }
        let expected = shape.len() * num_classes;
        if data.len() != expected {
            return Err(Error::DataLength {
                expected,
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            shape,
            num_classes,
            data,
        })
    }

    pub fn zeros(shape: Shape3, num_classes: usize) -> Self {
        Self {
            shape,
            num_classes,
            data: vec![0.0; shape.len() * num_classes],
        }
    }

    pub(crate) fn from_vec_unchecked(shape: Shape3, num_classes: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.len() * num_classes);
        Self {
            shape,
            num_classes,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn shape(&self) -> &Shape3 {
        &self.shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.shape.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.shape.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Value of channel `c` at voxel `i`.
    #[inline]
    pub fn at(&self, c: usize, i: usize) -> f64 {
        self.data[c * self.shape.len() + i]
    }

    /// Per-voxel index of the largest channel; ties go to the lower class.
    pub fn argmax(&self) -> LabelVolume {
        let n = self.shape.len();
        let labels = (0..n)
            .map(|i| {
                let mut best = 0;
                for c in 1..self.num_classes {
                    if self.at(c, i) > self.at(best, i) {
                        best = c;
                    }
                }
                best as u8
            })
            .collect();
        LabelVolume::from_vec_unchecked(self.shape, labels, self.num_classes.max(2))
    }

    /// Scale every channel in place.
    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }
}

/// Indicator channels of a label volume.
pub fn one_hot(labels: &LabelVolume) -> ClassVolume {
    let n = labels.shape().len();
    let mut out = ClassVolume::zeros(*labels.shape(), labels.num_classes());
    for (i, &l) in labels.labels().iter().enumerate() {
        out.data[l as usize * n + i] = 1.0;
    }
    out
}

/// Binary mask of voxels carrying `class`.
pub fn class_mask(labels: &LabelVolume, class: usize) -> Result<LabelVolume> {
    let c = labels.check_class(class)?;
    let mask = labels.labels().iter().map(|&l| (l == c) as u8).collect();
    Ok(LabelVolume::from_vec_unchecked(*labels.shape(), mask, 2))
}

pub fn hadamard(a: &ScalarVolume, b: &ScalarVolume) -> Result<ScalarVolume> {
    if !a.shape().same_lattice(b.shape()) {
        return Err(Error::ShapeMismatch);
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    ScalarVolume::new(*a.shape(), data)
}

/// Pairwise (tree) summation. The reduction order depends only on the
/// slice length, so results are reproducible for a given shape.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
