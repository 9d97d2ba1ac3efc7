use bmap::bmap_core::{LabelVolume, ScalarVolume, Shape3};
use bmap::volume::{decode, encode_labels, encode_scalar, ElementType, Volume};
use proptest::prelude::*;
use std::path::Path;

fn shape() -> impl Strategy<Value = Shape3> {
    (
        1usize..7,
        1usize..7,
        1usize..7,
        prop::array::uniform3(0.1f64..4.0),
    )
        .prop_map(|(x, y, z, sp)| Shape3::with_spacing(x, y, z, sp).unwrap())
}

proptest! {
    #[test]
    fn labels_round_trip(s in shape(), seed in any::<u64>()) {
        let labels: Vec<u8> = (0..s.len()).map(|i| ((seed >> (i % 60)) & 3) as u8).collect();
        let v = LabelVolume::new(s, labels, 4).unwrap();
        let (header, back) = decode(&encode_labels(&v), Path::new("mem")).unwrap();
        prop_assert_eq!(header.shape, s);
        let Volume::Labels(back) = back else { panic!("expected labels") };
        prop_assert_eq!(back.labels(), v.labels());
    }

    #[test]
    fn doubles_round_trip_bitwise(s in shape(), values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 216)) {
        let v = ScalarVolume::new(s, values[..s.len()].to_vec()).unwrap();
        let (_, back) = decode(&encode_scalar(&v, ElementType::Double).unwrap(), Path::new("mem")).unwrap();
        prop_assert_eq!(back, Volume::Scalar(v));
    }

    #[test]
    fn floats_round_trip_bitwise(s in shape(), values in prop::collection::vec(-1e6f32..1e6, 216)) {
        let data: Vec<f64> = values[..s.len()].iter().map(|&v| v as f64).collect();
        let v = ScalarVolume::new(s, data).unwrap();
        let bytes = encode_scalar(&v, ElementType::Float).unwrap();
        prop_assert_eq!(encode_scalar(&v, ElementType::Float).unwrap(), bytes.clone());
        let (_, back) = decode(&bytes, Path::new("mem")).unwrap();
        prop_assert_eq!(back, Volume::Scalar(v));
    }
}
