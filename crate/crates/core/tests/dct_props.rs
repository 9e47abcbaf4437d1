use grainkit::dct::{FloatDct, IntDct64, BLOCK_LEN, COEFF_FRAC_BITS};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn integer_roundtrip_within_one(block in prop::collection::vec(-4096i32..=4096, BLOCK_LEN)) {
        let mut coef = vec![0; BLOCK_LEN];
        let mut back = vec![0; BLOCK_LEN];
        IntDct64.forward(&block, &mut coef);
        IntDct64.inverse(&coef, &mut back);
        for (a, b) in block.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1);
        }
    }

    #[test]
    fn integer_forward_tracks_float(block in prop::collection::vec(-255i32..=255, BLOCK_LEN)) {
        let mut coef = vec![0; BLOCK_LEN];
        IntDct64.forward(&block, &mut coef);
        let input: Vec<f64> = block.iter().map(|&v| f64::from(v)).collect();
        let mut exact = vec![0.0; BLOCK_LEN];
        FloatDct::new(64).forward_2d(&input, &mut exact);
        let scale = f64::from(1u32 << COEFF_FRAC_BITS);
        for (&c, &e) in coef.iter().zip(&exact) {
            prop_assert!((f64::from(c) / scale - e).abs() < 0.05, "{c} vs {e}");
        }
    }

    #[test]
    fn float_parseval(n in prop::sample::select(vec![4usize, 8, 16, 64]), seed in any::<u64>()) {
        let mut rng = grainkit::rng::GrainRng::new(seed);
        let input: Vec<f64> = (0..n * n).map(|_| rng.gaussian() * 40.0).collect();
        let dct = FloatDct::new(n);
        let mut coef = vec![0.0; n * n];
        let mut back = vec![0.0; n * n];
        dct.forward_2d(&input, &mut coef);
        dct.inverse_2d(&coef, &mut back);
        let e_in: f64 = input.iter().map(|v| v * v).sum();
        let e_out: f64 = coef.iter().map(|v| v * v).sum();
        prop_assert!((e_in - e_out).abs() / e_in < 1e-9);
        for (a, b) in input.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
