mod common;

use common::conv_oracle;
use proptest::prelude::*;
use qv_core::tensor::ops::{self, patchify_tensor, unpatchify_tensor};
use qv_core::tensor::{Tensor, Var};

fn ints(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec((-8i32..9).prop_map(f64::from), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn conv2d_matches_nested_loops(
        (xs, ws, x, w, b) in (1usize..3, 1usize..4, 1usize..7, 1usize..7, 1usize..4, prop_oneof![Just(1usize), Just(3), Just(5)])
            .prop_flat_map(|(n, cin, h, wd, cout, k)| {
                let xs = [n, cin, h, wd];
                let ws = [cout, cin, k, k];
                (Just(xs), Just(ws), ints(n * cin * h * wd), ints(cout * cin * k * k), ints(cout))
            })
    ) {
        // small integers make every summation order exact
        let got = ops::conv2d(
            &Var::constant(Tensor::from_vec(&xs, x.clone()).unwrap()),
            &Var::constant(Tensor::from_vec(&ws, w.clone()).unwrap()),
            &Var::constant(Tensor::from_vec(&[ws[0]], b.clone()).unwrap()),
        )
        .unwrap();
        let got = got.value().data().to_vec();
        prop_assert_eq!(got, conv_oracle(&x, xs, &w, ws, &b));
    }

    #[test]
    fn softmax_rows_are_distributions(rows in 1usize..6, cols in 1usize..9, seed in any::<u64>()) {
        let mut r = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let x = qv_core::tensor::gradcheck::random_tensor(&[rows, cols], -10.0, 10.0, &mut r);
        let y = ops::softmax(&Var::constant(x), 1).unwrap();
        for row in y.value().data().chunks(cols) {
            prop_assert!(row.iter().all(|&p| p > 0.0 && p < 1.0 || cols == 1 && p == 1.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn layer_norm_slices_are_standardized(rows in 1usize..5, d in 2usize..20, seed in any::<u64>()) {
        let mut r = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let x = qv_core::tensor::gradcheck::random_tensor(&[rows, d], -5.0, 5.0, &mut r);
        for row in x.data().chunks(d) {
            let mu = row.iter().sum::<f64>() / d as f64;
            prop_assume!(row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / d as f64 >= 1e-2);
        }
        let y = ops::layer_norm(
            &Var::constant(x),
            &Var::constant(Tensor::full(&[d], 1.0)),
            &Var::constant(Tensor::zeros(&[d])),
        )
        .unwrap();
        for row in y.value().data().chunks(d) {
            let mu = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / d as f64;
            prop_assert!(mu.abs() <= 1e-5);
            prop_assert!((var - 1.0).abs() <= 1e-3, "var {}", var);
        }
    }

    #[test]
    fn unpatchify_inverts_patchify(n in 1usize..3, c in 1usize..4, ph in 1usize..4, pw in 1usize..4, p in 1usize..5, seed in any::<u64>()) {
        let shape = [n, c, ph * p, pw * p];
        let mut r = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let x = qv_core::tensor::gradcheck::random_tensor(&shape, -1.0, 1.0, &mut r);
        let tokens = patchify_tensor(&x, p).unwrap();
        prop_assert_eq!(tokens.shape(), &[n, ph * pw, c * p * p][..]);
        prop_assert_eq!(unpatchify_tensor(&tokens, &shape, p).unwrap(), x);
    }

    #[test]
    fn tensor_length_must_match_shape(shape in proptest::collection::vec(1usize..5, 1..4), extra in 1usize..3) {
        let n: usize = shape.iter().product();
        prop_assert!(Tensor::<f64>::from_vec(&shape, vec![0.0; n]).is_ok());
        prop_assert!(Tensor::<f64>::from_vec(&shape, vec![0.0; n + extra]).is_err());
    }

    #[test]
    fn forward_ops_stay_finite(seed in any::<u64>()) {
        let mut r = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let x = Var::constant(qv_core::tensor::gradcheck::random_tensor(&[2, 3, 6, 6], -1e3, 1e3, &mut r));
        let w = Var::constant(qv_core::tensor::gradcheck::random_tensor(&[4, 3, 3, 3], -1.0, 1.0, &mut r));
        let b = Var::constant(Tensor::zeros(&[4]));
        let y = ops::max_pool2d(&ops::relu(&ops::conv2d(&x, &w, &b).unwrap())).unwrap();
        let z = ops::softmax(&ops::reshape(&y, &[2, 36]).unwrap(), 1).unwrap();
        prop_assert!(y.value().all_finite() && z.value().all_finite());
    }
}

#[test]
fn forward_is_bitwise_deterministic() {
    let mut r = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
    let x = Var::constant(
        qv_core::tensor::gradcheck::random_tensor(&[8, 3, 16, 16], -1.0, 1.0, &mut r).cast::<f32>(),
    );
    let w = Var::leaf(
        qv_core::tensor::gradcheck::random_tensor(&[16, 3, 3, 3], -1.0, 1.0, &mut r).cast::<f32>(),
    );
    let b = Var::leaf(Tensor::<f32>::zeros(&[16]));
    let run = || {
        w.zero_grad();
        b.zero_grad();
        let y = ops::conv2d(&x, &w, &b).unwrap();
        ops::sum(&ops::relu(&y)).backward().unwrap();
        let out = y.value().clone();
        (out, w.grad().unwrap())
    };
    let (y1, g1) = run();
    let (y2, g2) = run();
    assert_eq!(y1, y2);
    assert_eq!(g1, g2);
}
