use std::collections::VecDeque;

use bmap_core::postproc::{
    closing, connected_components, dilate, erode, postprocess, Connectivity, StructuringElement,
};
use bmap_core::{LabelVolume, Shape3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mask(rng: &mut ChaCha8Rng, n: usize, density: f64) -> LabelVolume {
    let shape = Shape3::cube(n).unwrap();
    let bits: Vec<bool> = (0..shape.len()).map(|_| rng.random_bool(density)).collect();
    LabelVolume::binary_from_fn(shape, |i| bits[i])
}

fn neighbours(s: &Shape3, i: usize, conn: Connectivity) -> Vec<usize> {
    let (x, y, z) = s.coord(i);
    let mut out = Vec::new();
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let manhattan = dx.abs() + dy.abs() + dz.abs();
                if manhattan == 0 || (conn == Connectivity::Six && manhattan > 1) {
                    continue;
                }
                let (a, b, c) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                if a >= 0
                    && b >= 0
                    && c >= 0
                    && a < s.nx as i64
                    && b < s.ny as i64
                    && c < s.nz as i64
                {
                    out.push(s.index(a as usize, b as usize, c as usize));
                }
            }
        }
    }
    out
}

/// Component sizes found by breadth-first flood fill, largest first.
fn flood_sizes(mask: &LabelVolume, conn: Connectivity) -> Vec<usize> {
    let s = *mask.shape();
    let fg = mask.foreground();
    let mut seen = vec![false; s.len()];
    let mut sizes = Vec::new();
    for start in 0..s.len() {
        if !fg[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            for j in neighbours(&s, i, conn) {
                if fg[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_by(|a, b| b.cmp(a));
    sizes
}

#[test]
fn components_match_flood_fill() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..60 {
        let mask = random_mask(&mut rng, 10, 0.15 + 0.005 * trial as f64);
        for conn in [Connectivity::Six, Connectivity::TwentySix] {
            let comps = connected_components(&mask, conn);
            assert_eq!(comps.sizes, flood_sizes(&mask, conn));
            // every voxel shares an id with its connected foreground neighbours
            let s = *mask.shape();
            for i in 0..s.len() {
                if comps.ids[i] == 0 {
                    continue;
                }
                for j in neighbours(&s, i, conn) {
                    if comps.ids[j] != 0 {
                        assert_eq!(comps.ids[i], comps.ids[j]);
                    }
                }
            }
        }
    }
}

#[test]
fn closing_is_extensive_and_idempotent_away_from_faces() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let raw = random_mask(&mut rng, 10, 0.3);
        // keep a two-voxel empty margin so the volume faces never matter
        let s = *raw.shape();
        let mask = LabelVolume::binary_from_fn(s, |i| {
            let (x, y, z) = s.coord(i);
            [x, y, z].iter().all(|&v| (2..8).contains(&v)) && raw.labels()[i] == 1
        });
        for se in [StructuringElement::SIX, StructuringElement::TWENTY_SIX] {
            let once = closing(&mask, se);
            for (a, b) in mask.labels().iter().zip(once.labels()) {
                assert!(*a <= *b);
            }
            assert_eq!(closing(&once, se), once);
        }
    }
}

#[test]
fn erosion_is_dual_to_dilation_on_margin_masks() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let raw = random_mask(&mut rng, 9, 0.5);
        let s = *raw.shape();
        // foreground strictly inside, complement also bounded away from the faces
        let inner = |i: usize| {
            let (x, y, z) = s.coord(i);
            [x, y, z].iter().all(|&v| (2..7).contains(&v))
        };
        let mask = LabelVolume::binary_from_fn(s, |i| inner(i) && raw.labels()[i] == 1);
        let complement = LabelVolume::binary_from_fn(s, |i| mask.labels()[i] == 0);
        for se in [StructuringElement::SIX, StructuringElement::TWENTY_SIX] {
            let eroded = erode(&mask, se);
            let dual = dilate(&complement, se);
            for i in (0..s.len()).filter(|&i| inner(i)) {
                assert_eq!(eroded.labels()[i] == 1, dual.labels()[i] == 0);
            }
        }
    }
}

#[test]
fn postprocess_removes_speckle_and_is_idempotent() {
    let s = Shape3::cube(16).unwrap();
    let mut labels = vec![0u8; s.len()];
    for (i, label) in labels.iter_mut().enumerate() {
        let (x, y, z) = s.coord(i);
        if (3..9).contains(&x) && (3..9).contains(&y) && (3..9).contains(&z) {
            *label = 1;
        }
        if (10..14).contains(&x) && (3..13).contains(&y) && (3..13).contains(&z) {
            *label = 2;
        }
    }
    let clean = LabelVolume::new(s, labels.clone(), 3).unwrap();
    let mut noisy = labels;
    noisy[s.index(14, 14, 14)] = 1;
    noisy[s.index(0, 15, 0)] = 2;
    noisy[s.index(1, 1, 13)] = 1;
    let noisy = LabelVolume::new(s, noisy, 3).unwrap();
    let out = postprocess(&noisy);
    assert_eq!(out, clean);
    assert_eq!(postprocess(&out), out);
}

#[test]
fn postprocess_output_classes_are_single_components() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..30 {
        let s = Shape3::cube(10).unwrap();
        let labels: Vec<u8> = (0..s.len())
            .map(|_| {
                if rng.random_bool(0.4) {
                    rng.random_range(1..4)
                } else {
                    0
                }
            })
            .collect();
        let v = LabelVolume::new(s, labels, 4).unwrap();
        let out = postprocess(&v);
        for c in 1..4u8 {
            let mask = LabelVolume::binary_from_fn(s, |i| out.labels()[i] == c);
            assert!(connected_components(&mask, Connectivity::TwentySix).len() <= 1);
            // voxels of another class are never taken over
            for i in 0..s.len() {
                if out.labels()[i] == c {
                    assert!(v.labels()[i] == c || v.labels()[i] == 0);
                }
            }
        }
    }
}

#[test]
fn equal_components_keep_the_earlier_one() {
    let s = Shape3::new(9, 3, 3).unwrap();
    let mask = LabelVolume::binary_from_fn(s, |i| {
        let (x, y, z) = s.coord(i);
        (y, z) == (1, 1) && (x == 1 || x == 2 || x == 6 || x == 7)
    });
    let comps = connected_components(&mask, Connectivity::TwentySix);
    assert_eq!(comps.sizes, vec![2, 2]);
    assert_eq!(comps.seeds, vec![s.index(1, 1, 1), s.index(6, 1, 1)]);
    let kept = postprocess(&mask);
    assert_eq!(kept.count(1), 2);
    assert_eq!(kept.labels()[s.index(1, 1, 1)], 1);
}
