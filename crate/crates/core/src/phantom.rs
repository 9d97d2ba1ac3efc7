//! Synthetic knee-like phantoms: three non-touching ellipsoids standing in
//! for femur (class 1), tibia (class 2) and patella (class 3), with voxel
//! counts in prescribed ratios, plus controlled perturbations of label
//! volumes.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::edt::boundary_of;
use crate::error::{Error, Result};
use crate::grid::{LabelVolume, ScalarVolume, Shape3};

pub const NUM_CLASSES: usize = 4;
/// Minimum distance in voxels between any blob and the volume faces.
const FACE_MARGIN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomSpec {
    pub shape: Shape3,
    /// Femur voxel count over tibia voxel count.
    pub ratio_femur_tibia: f64,
    /// Femur voxel count over patella voxel count.
    pub ratio_femur_patella: f64,
    pub noise_sigma: f64,
    /// Mean image intensity of background, femur, tibia, patella.
    pub intensities: [f64; 4],
    pub seed: u64,
}

impl PhantomSpec {
    pub fn new(shape: Shape3, seed: u64) -> Self {
        Self {
            shape,
            ratio_femur_tibia: 1.6,
            ratio_femur_patella: 16.0,
            noise_sigma: 0.1,
            intensities: [0.0, 1.0, 0.65, 0.35],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (
                "ratio_femur_tibia",
                self.ratio_femur_tibia,
                self.ratio_femur_tibia > 1.0,
            ),
            (
                "ratio_femur_patella",
                self.ratio_femur_patella,
                self.ratio_femur_patella > 1.0,
            ),
            ("noise_sigma", self.noise_sigma, self.noise_sigma >= 0.0),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(Error::InvalidParameter { name, value });
            }
        }
        if let Some(&value) = self.intensities.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "intensities",
                value,
            });
        }
        Ok(())
    }
}

/// Axis-aligned ellipsoid in voxel coordinates.
#[derive(Debug, Clone, Copy)]
struct Ellipsoid {
    centre: [f64; 3],
    radii: [f64; 3],
}

impl Ellipsoid {
    fn contains(&self, p: [f64; 3]) -> bool {
        let s: f64 = (0..3)
            .map(|a| {
                let d = (p[a] - self.centre[a]) / self.radii[a];
                d * d
            })
            .sum();
        s <= 1.0
    }

    fn scaled(&self, k: f64) -> Self {
        Self {
            centre: self.centre,
            radii: self.radii.map(|r| r * k),
        }
    }

    /// Voxel indices inside, restricted to the bounding box within `shape`.
    fn voxels(&self, shape: &Shape3) -> Vec<usize> {
        let dims = shape.dims();
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            let l = libm::floor(self.centre[a] - self.radii[a]).max(0.0) as usize;
            let h = (libm::ceil(self.centre[a] + self.radii[a]) as usize).min(dims[a] - 1);
            lo[a] = l.min(dims[a] - 1);
            hi[a] = h;
        }
        let mut out = Vec::new();
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    if self.contains([x as f64, y as f64, z as f64]) {
                        out.push(shape.index(x, y, z));
                    }
                }
            }
        }
        out
    }
}

/// Base layout as fractions of the volume extent: (centre, radii).
const FEMUR: ([f64; 3], [f64; 3]) = ([0.5, 0.42, 0.68], [0.30, 0.24, 0.18]);
const TIBIA: ([f64; 3], [f64; 3]) = ([0.5, 0.42, 0.27], [0.30, 0.24, 0.18]);
const PATELLA: ([f64; 3], [f64; 3]) = ([0.5, 0.80, 0.70], [0.30, 0.14, 0.26]);

fn place(shape: &Shape3, base: ([f64; 3], [f64; 3]), jitter: [f64; 3]) -> Ellipsoid {
    let dims = shape.dims().map(|d| d as f64);
    Ellipsoid {
        centre: [0, 1, 2].map(|a| base.0[a] * (dims[a] - 1.0) + jitter[a]),
        radii: [0, 1, 2].map(|a| base.1[a] * dims[a]),
    }
}

/// Scale factor making the blob's voxel count closest to `target`.
fn fit_count(shape: &Shape3, blob: &Ellipsoid, target: f64) -> Ellipsoid {
    let (mut lo, mut hi) = (0.05, 1.0);
    let mut best = (f64::INFINITY, *blob);
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        let candidate = blob.scaled(mid);
        let count = candidate.voxels(shape).len() as f64;
        let err = libm::fabs(count - target);
        if err < best.0 {
            best = (err, candidate);
        }
        if count < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best.1
}

fn rasterize(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Option<Vec<u8>> {
    let shape = &spec.shape;
    let mut jitter = || [0; 3].map(|_| rng.random_range(-0.5..0.5));
    let femur = place(shape, FEMUR, jitter());
    let tibia = place(shape, TIBIA, jitter());
    let patella = place(shape, PATELLA, jitter());
    let femur_count = femur.voxels(shape).len() as f64;
    if femur_count < 16.0 * spec.ratio_femur_patella {
        return None;
    }
    let tibia = fit_count(shape, &tibia, femur_count / spec.ratio_femur_tibia);
    let patella = fit_count(shape, &patella, femur_count / spec.ratio_femur_patella);

    let mut labels = vec![0u8; shape.len()];
    for (class, blob) in [(1u8, femur), (2, tibia), (3, patella)] {
        for i in blob.voxels(shape) {
            if labels[i] != 0 {
                return None;
            }
            labels[i] = class;
        }
    }
    fits(shape, &labels).then_some(labels)
}

/// Every blob keeps the face margin and no two classes touch, even
/// diagonally.
fn fits(shape: &Shape3, labels: &[u8]) -> bool {
    let dims = shape.dims();
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (x, y, z) = shape.coord(i);
        let p = [x, y, z];
        if (0..3).any(|a| p[a] < FACE_MARGIN || p[a] + FACE_MARGIN >= dims[a]) {
            return false;
        }
        for dz in 0..3 {
            for dy in 0..3 {
                for dx in 0..3 {
                    let j = shape.index(x + dx - 1, y + dy - 1, z + dz - 1);
                    if labels[j] != 0 && labels[j] != l {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Generate the phantom image and its ground truth (`K = 4`).
pub fn generate(spec: &PhantomSpec) -> Result<(ScalarVolume, LabelVolume)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let Some(labels) = rasterize(spec, &mut rng) else {
        return Err(minimum_shape(spec));
    };
    let shape = spec.shape;
    let mut image: Vec<f64> = labels
        .iter()
        .map(|&l| spec.intensities[l as usize])
        .collect();
    if spec.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
        for v in &mut image {
            *v += noise.sample(&mut rng);
        }
    }
    Ok((
        ScalarVolume::new(shape, image)?,
        LabelVolume::from_vec_unchecked(shape, labels, NUM_CLASSES),
    ))
}

fn minimum_shape(spec: &PhantomSpec) -> Error {
    let dims = spec.shape.dims();
    let mut factor = 1.0;
    for _ in 0..64 {
        factor *= 1.1;
        let grown = dims.map(|d| libm::ceil(d as f64 * factor).max(8.0) as usize);
        let Ok(shape) = Shape3::new(grown[0], grown[1], grown[2]) else {
            break;
        };
        let trial = PhantomSpec { shape, ..*spec };
        if rasterize(&trial, &mut ChaCha8Rng::seed_from_u64(spec.seed)).is_some() {
            return Error::PhantomDoesNotFit {
                min_nx: grown[0],
                min_ny: grown[1],
                min_nz: grown[2],
            };
        }
    }
    Error::PhantomDoesNotFit {
        min_nx: usize::MAX,
        min_ny: usize::MAX,
        min_nz: usize::MAX,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbOp {
    /// Translate all labels by one voxel along `axis` (0 = x); `forward`
    /// moves towards higher indices. Vacated voxels become background.
    Shift { axis: usize, forward: bool },
    /// Remove the one-voxel boundary shell of every foreground class.
    ErodeBoundary,
    /// Relabel exactly `n` distinct random voxels to a different class.
    Speckle(usize),
}

/// Apply `ops` in order; deterministic for a given seed.
pub fn perturb(gt: &LabelVolume, ops: &[PerturbOp], seed: u64) -> LabelVolume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = *gt.shape();
    let k = gt.num_classes();
    let mut labels = gt.labels().to_vec();
    for op in ops {
        labels = match *op {
            PerturbOp::Shift { axis, forward } => shift(&shape, &labels, axis, forward),
            PerturbOp::ErodeBoundary => {
                let mut out = labels.clone();
                for c in 1..k as u8 {
                    let mask: Vec<bool> = labels.iter().map(|&l| l == c).collect();
                    let b = boundary_of(&shape, &mask);
                    for (o, &is_b) in out.iter_mut().zip(b.labels()) {
                        if is_b != 0 {
                            *o = 0;
                        }
                    }
                }
                out
            }
            PerturbOp::Speckle(n) => {
                let n = n.min(shape.len());
                let mut out = labels.clone();
                let mut taken = vec![false; shape.len()];
                let mut done = 0;
                while done < n {
                    let i = rng.random_range(0..shape.len());
                    if taken[i] {
                        continue;
                    }
                    taken[i] = true;
                    let step = rng.random_range(1..k) as u8;
                    out[i] = ((labels[i] as usize + step as usize) % k) as u8;
                    done += 1;
                }
                out
            }
        };
    }
    LabelVolume::from_vec_unchecked(shape, labels, k)
}

fn shift(shape: &Shape3, labels: &[u8], axis: usize, forward: bool) -> Vec<u8> {
    let dims = shape.dims();
    let mut out = vec![0u8; labels.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let (x, y, z) = shape.coord(i);
        let mut p = [x, y, z];
        if forward {
            if p[axis] == 0 {
                continue;
            }
            p[axis] -= 1;
        } else {
            if p[axis] + 1 >= dims[axis] {
                continue;
            }
            p[axis] += 1;
        }
        *o = labels[shape.index(p[0], p[1], p[2])];
    }
    out
}
