//! In-plane (axial) rotation augmentation.

use alloc::vec::Vec;

use crate::grid::{LabelVolume, ScalarVolume};

/// Rotate image and labels by `degrees` about the z axis through the volume
/// centre. The image is resampled bilinearly within each slice (trilinear
/// with integral z), labels by nearest neighbour. Samples falling outside
/// the volume read as intensity 0 and background.
pub fn rotate_inplane(
    image: &ScalarVolume,
    labels: &LabelVolume,
    degrees: f64,
) -> (ScalarVolume, LabelVolume) {
    assert!(image.shape().same_lattice(labels.shape()));
    if degrees == 0.0 {
        return (image.clone(), labels.clone());
    }
    let shape = *image.shape();
    let (nx, ny) = (shape.nx, shape.ny);
    let (cx, cy) = ((nx as f64 - 1.0) * 0.5, (ny as f64 - 1.0) * 0.5);
    let theta = degrees.to_radians();
    let (sin, cos) = (libm::sin(theta), libm::cos(theta));
    let src_img = image.data();
    let src_lab = labels.labels();
    let mut out_img = Vec::with_capacity(shape.len());
    let mut out_lab = Vec::with_capacity(shape.len());
    for i in 0..shape.len() {
        let (x, y, z) = shape.coord(i);
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        // inverse rotation: where this output voxel comes from
        let sx = cx + cos * dx + sin * dy;
        let sy = cy - sin * dx + cos * dy;
        let slice = z * nx * ny;

        let (rx, ry) = (libm::round(sx), libm::round(sy));
        let lab = if rx >= 0.0 && ry >= 0.0 && rx < nx as f64 && ry < ny as f64 {
            src_lab[slice + rx as usize + nx * ry as usize]
        } else {
            0
        };
        out_lab.push(lab);

        let inside = sx >= 0.0 && sy >= 0.0 && sx <= (nx - 1) as f64 && sy <= (ny - 1) as f64;
        let value = if inside {
            let (x0, y0) = (libm::floor(sx) as usize, libm::floor(sy) as usize);
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let (x1, y1) = ((x0 + 1).min(nx - 1), (y0 + 1).min(ny - 1));
            let at = |x: usize, y: usize| src_img[slice + x + nx * y];
            (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x1, y0))
                + fy * ((1.0 - fx) * at(x0, y1) + fx * at(x1, y1))
        } else {
            0.0
        };
        out_img.push(value);
    }
    (
        ScalarVolume::from_vec_unchecked(shape, out_img),
        LabelVolume::from_vec_unchecked(shape, out_lab, labels.num_classes()),
    )
}
