use bmap_core::edt::{boundary_voxels, edt, edt_squared};
use bmap_core::{LabelVolume, Shape3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_force(shape: &Shape3, fg: &[bool]) -> Vec<i64> {
    let sites: Vec<(i64, i64, i64)> = (0..shape.len())
        .filter(|&i| fg[i])
        .map(|i| {
            let (x, y, z) = shape.coord(i);
            (x as i64, y as i64, z as i64)
        })
        .collect();
    (0..shape.len())
        .map(|i| {
            let (x, y, z) = shape.coord(i);
            let (x, y, z) = (x as i64, y as i64, z as i64);
            sites
                .iter()
                .map(|&(a, b, c)| (x - a).pow(2) + (y - b).pow(2) + (z - c).pow(2))
                .min()
                .unwrap()
        })
        .collect()
}

fn random_mask(rng: &mut ChaCha8Rng) -> LabelVolume {
    let shape = Shape3::new(
        rng.random_range(1..=12),
        rng.random_range(1..=12),
        rng.random_range(1..=12),
    )
    .unwrap();
    let density = rng.random_range(0.005..0.4);
    let mut labels: Vec<bool> = (0..shape.len()).map(|_| rng.random_bool(density)).collect();
    if !labels.iter().any(|&b| b) {
        let at = rng.random_range(0..shape.len());
        labels[at] = true;
    }
    LabelVolume::binary_from_fn(shape, |i| labels[i])
}

#[test]
fn matches_brute_force_on_random_masks() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xED7);
    for _ in 0..200 {
        let mask = random_mask(&mut rng);
        let fast = edt_squared(&mask).unwrap();
        let slow = brute_force(mask.shape(), &mask.foreground());
        for (a, b) in fast.data().iter().zip(&slow) {
            assert_eq!(*a, *b as f64);
        }
    }
}

#[test]
fn single_site_and_sparse_extremes() {
    let shape = Shape3::new(12, 1, 1).unwrap();
    let mask = LabelVolume::binary_from_fn(shape, |i| i == 11);
    let d = edt_squared(&mask).unwrap();
    let expected: Vec<f64> = (0..12).map(|x| ((11 - x) * (11 - x)) as f64).collect();
    assert_eq!(d.data(), expected.as_slice());

    let corner = Shape3::cube(12).unwrap();
    let mask = LabelVolume::binary_from_fn(corner, |i| i == 0);
    assert_eq!(edt_squared(&mask).unwrap().max(), 3.0 * 121.0);
}

#[test]
fn distance_field_carries_mask_digest() {
    let shape = Shape3::cube(6).unwrap();
    let a = LabelVolume::binary_from_fn(shape, |i| i % 7 == 0);
    let b = LabelVolume::binary_from_fn(shape, |i| i % 5 == 0);
    assert_eq!(
        edt(&a).unwrap().source_mask_hash,
        edt(&a).unwrap().source_mask_hash
    );
    assert_ne!(
        edt(&a).unwrap().source_mask_hash,
        edt(&b).unwrap().source_mask_hash
    );
}

fn mask_strategy() -> impl Strategy<Value = LabelVolume> {
    (1usize..9, 1usize..9, 1usize..9)
        .prop_flat_map(|(nx, ny, nz)| {
            let n = nx * ny * nz;
            (
                Just((nx, ny, nz)),
                proptest::collection::vec(proptest::bool::weighted(0.15), n),
            )
        })
        .prop_filter("needs foreground", |(_, bits)| bits.iter().any(|&b| b))
        .prop_map(|((nx, ny, nz), bits)| {
            LabelVolume::binary_from_fn(Shape3::new(nx, ny, nz).unwrap(), |i| bits[i])
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn zero_exactly_on_foreground(mask in mask_strategy()) {
        let d = edt_squared(&mask).unwrap();
        for (v, f) in d.data().iter().zip(mask.foreground()) {
            prop_assert_eq!(*v == 0.0, f);
        }
    }

    #[test]
    fn one_lipschitz_across_face_neighbours(mask in mask_strategy()) {
        let d = edt(&mask).unwrap().dist;
        let s = *mask.shape();
        for i in 0..s.len() {
            for j in s.face_neighbors(i) {
                prop_assert!((d.data()[i] - d.data()[j]).abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn mirroring_commutes(mask in mask_strategy()) {
        let s = *mask.shape();
        let mirror = |i: usize| {
            let (x, y, z) = s.coord(i);
            s.index(s.nx - 1 - x, y, s.nz - 1 - z)
        };
        let fg = mask.foreground();
        let flipped = LabelVolume::binary_from_fn(s, |i| fg[mirror(i)]);
        let a = edt_squared(&mask).unwrap();
        let b = edt_squared(&flipped).unwrap();
        for i in 0..s.len() {
            prop_assert_eq!(a.data()[mirror(i)], b.data()[i]);
        }
    }

    #[test]
    fn boundary_is_subset_with_background_contact(mask in mask_strategy()) {
        let s = *mask.shape();
        let fg = mask.foreground();
        let b = boundary_voxels(&mask);
        for i in 0..s.len() {
            let expected = fg[i] && (s.on_face(i) || s.face_neighbors(i).any(|j| !fg[j]));
            prop_assert_eq!(b.labels()[i] == 1, expected);
        }
    }
}
