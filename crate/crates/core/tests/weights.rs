use proptest::prelude::*;
use somnus::weights::WeightFile;
use somnus::{Error, Real, Tensor};

fn weight_file() -> impl Strategy<Value = WeightFile> {
    let param = ("[a-z/._0-9]{1,12}", proptest::collection::vec(1usize..4, 0..3)).prop_flat_map(|(name, shape)| {
        let n = shape.iter().product::<usize>();
        proptest::collection::vec(-1e6f64..1e6, n)
            .prop_map(move |v| (name.clone(), Tensor::new(shape.clone(), v.into_iter().map(|x| x as Real).collect()).unwrap()))
    });
    ("\\PC{0,40}", proptest::collection::vec(param, 0..5)).prop_map(|(manifest, params)| WeightFile { manifest, params })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn slpn_round_trips(f in weight_file()) {
        let bytes = f.to_bytes();
        let back = WeightFile::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn any_single_bit_flip_is_detected(f in weight_file(), at in any::<prop::sample::Index>(), bit in 0u8..8) {
        let mut bytes = f.to_bytes();
        let i = at.index(bytes.len());
        bytes[i] ^= 1 << bit;
        match WeightFile::from_bytes(&bytes) {
            Err(Error::Format { .. }) => prop_assert!(i < 4),
            Err(Error::Version { .. }) => prop_assert!((4..8).contains(&i)),
            Err(Error::Checksum { .. }) => prop_assert!(i >= 8),
            other => prop_assert!(false, "flip at {} gave {:?}", i, other.map(|_| ())),
        }
    }
}
