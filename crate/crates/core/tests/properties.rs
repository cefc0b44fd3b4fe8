use proptest::prelude::*;
use rc3d_core::blocks::stack_pool;
use rc3d_core::io::{read_tensor, tensor_to_bytes};
use rc3d_core::ops::conv3d_forward;
use rc3d_core::{Activation, ConvSpec, Graph, ParamStore, PoolMode, PoolSpec, Tensor};

fn tensor(shape: Vec<usize>) -> impl Strategy<Value = Tensor<f64>> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-3.0f64..3.0, n).prop_map(move |v| Tensor::new(&shape, v).unwrap())
}

fn eval(x: Tensor<f64>, f: impl FnOnce(&mut Graph<'_, f64>, rc3d_core::Var) -> rc3d_core::Var) -> Tensor<f64> {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let v = g.input(x);
    let y = f(&mut g, v);
    g.value(y).clone()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn softmax_rows_are_distributions(x in (1usize..5, 1usize..20).prop_flat_map(|(n, c)| tensor(vec![n, c]))) {
        let c = x.shape()[1];
        let y = eval(x, |g, v| g.softmax(v).unwrap());
        for row in y.data().chunks(c) {
            prop_assert!(row.iter().all(|&p| p > 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conv3d_output_extent_formula(
        k in (1usize..4, 1usize..4, 1usize..4),
        s in (1usize..3, 1usize..3, 1usize..3),
        p in (0usize..2, 0usize..2, 0usize..2),
        ext in (3usize..7, 3usize..7, 3usize..7),
    ) {
        let spec = ConvSpec::new(1, 2, k).with_stride(s).with_padding(p);
        let x = Tensor::full(&[1, 1, ext.0, ext.1, ext.2], 1.0).unwrap();
        let w = Tensor::full(&spec.weight_shape(), 0.5).unwrap();
        let b = Tensor::zeros(&[2]).unwrap();
        let y = conv3d_forward(&x, &w, &b, &spec).unwrap();
        let o = |i: usize, k: usize, s: usize, p: usize| (i + 2 * p - k) / s + 1;
        prop_assert_eq!(y.shape(), &[1, 2, o(ext.0, k.0, s.0, p.0), o(ext.1, k.1, s.1, p.1), o(ext.2, k.2, s.2, p.2)][..]);
    }

    #[test]
    fn tensor_bytes_roundtrip(x in (1usize..4, 1usize..4, 1usize..6).prop_flat_map(|(a, b, c)| tensor(vec![a, b, c]))) {
        // records hold 32-bit floats
        let narrow: Tensor<f32> = x.cast();
        let back: Tensor<f32> = read_tensor(&mut tensor_to_bytes(&narrow).as_slice()).unwrap();
        prop_assert_eq!(back.shape(), x.shape());
        prop_assert_eq!(back.data(), narrow.data());
        let wide: Tensor<f64> = read_tensor(&mut tensor_to_bytes(&x).as_slice()).unwrap();
        let expect: Tensor<f64> = narrow.cast();
        prop_assert_eq!(wide.data(), expect.data());
    }

    #[test]
    fn stack_pool_max_half_dominates(x in (1usize..3, 1usize..4).prop_flat_map(|(n, c)| tensor(vec![n, c, 2, 3, 4]))) {
        let (n, c) = (x.shape()[0], x.shape()[1]);
        let y = eval(x, |g, v| stack_pool(g, v).unwrap());
        prop_assert_eq!(y.shape(), &[n, 2 * c, 1, 1, 1][..]);
        for i in 0..n {
            for j in 0..c {
                prop_assert!(y.data()[i * 2 * c + j] >= y.data()[i * 2 * c + c + j]);
            }
        }
    }

    #[test]
    fn max_pool_dominates_avg_pool(x in tensor(vec![1, 2, 2, 4, 4])) {
        let spec = |m| PoolSpec::new(m, (1, 2, 2));
        let mx = eval(x.clone(), |g, v| g.pool3d(v, &spec(PoolMode::Max)).unwrap());
        let av = eval(x, |g, v| g.pool3d(v, &spec(PoolMode::Avg)).unwrap());
        prop_assert!(mx.data().iter().zip(av.data()).all(|(a, b)| a >= b));
    }

    #[test]
    fn activation_is_monotone(a in -5.0f64..5.0, b in -5.0f64..5.0, slope in 0.0f64..0.9, shift in -0.5f64..0.5) {
        let act = Activation::new(slope, shift).unwrap();
        let y = eval(Tensor::new(&[2], vec![a.min(b), a.max(b)]).unwrap(), |g, v| g.shifted_leaky_relu(v, act));
        prop_assert!(y.data()[0] <= y.data()[1]);
    }

    #[test]
    fn pixel_shuffle_permutes(x in (1usize..3, 1usize..4).prop_flat_map(|(c, h)| tensor(vec![1, 4 * c, h, h + 1]))) {
        let y = eval(x.clone(), |g, v| g.pixel_shuffle(v, 2).unwrap());
        let mut a = x.data().to_vec();
        let mut b = y.data().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn losses_are_non_negative(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..32)) {
        let y: Vec<f64> = pairs.iter().map(|p| p.0.round()).collect();
        let q: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let n = q.len();
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let pv = g.input(Tensor::new(&[n], q.clone()).unwrap());
        let tv = g.input(Tensor::new(&[n], y.clone()).unwrap());
        let bce = g.bce_loss(pv, &y).unwrap();
        let mse = g.mse_loss(pv, tv).unwrap();
        prop_assert!(g.value(bce).data()[0] >= 0.0);
        prop_assert!(g.value(mse).data()[0] >= 0.0);
    }
}
