//! Brute-force oracles and finite-difference checks for every differentiable op.

mod common;

use cnnfd::tensor::{ops, AdjointFault, BnMode, Graph, PadMode, PaddingSpec};
use cnnfd::Tensor;
use common::{check_op, check_op_with, conv_oracle, max_pool_oracle, random, OP_TOL};
use proptest::prelude::*;

#[test]
fn conv3d_matches_direct_sum_oracle() {
    let modes = [PadMode::Zero, PadMode::Circular, PadMode::Replicate];
    let x = random(&[3, 5, 6, 2], 1).cast::<f32>();
    let k = random(&[3, 3, 3, 2, 4], 2).cast::<f32>();
    let b = random(&[4], 3).cast::<f32>();
    let spec = PaddingSpec::with_modes([3, 3, 3], modes);
    let got = ops::conv3d(&x, &k, &b, &spec).unwrap();
    let want = conv_oracle(&x, &k, &b, modes);
    assert_eq!(got.shape(), want.shape());
    let scale = want.data().iter().fold(1.0f32, |m, v| m.max(v.abs())) as f64;
    assert!(got.max_abs_diff(&want) / scale < 1e-6, "diff {}", got.max_abs_diff(&want));
}

#[test]
fn conv3d_with_circular_padding_is_shift_equivariant() {
    let x = random(&[4, 6, 5, 2], 4);
    let k = random(&[3, 3, 3, 2, 3], 5);
    let b = random(&[3], 6);
    let spec = PaddingSpec::with_modes([3, 3, 3], [PadMode::Circular; 3]);
    let y = ops::conv3d(&x, &k, &b, &spec).unwrap();
    let shift = |t: &Tensor<f64>, axis: usize| {
        let s = t.shape().to_vec();
        let mut out = t.clone();
        for a in 0..s[0] {
            for i in 0..s[1] {
                for j in 0..s[2] {
                    for c in 0..s[3] {
                        let mut src = [a, i, j];
                        src[axis] = (src[axis] + s[axis] - 1) % s[axis];
                        let v = t.at(&[src[0], src[1], src[2], c]);
                        let idx = out.index_of(&[a, i, j, c]);
                        out.data_mut()[idx] = v;
                    }
                }
            }
        }
        out
    };
    for axis in 0..3 {
        let ys = ops::conv3d(&shift(&x, axis), &k, &b, &spec).unwrap();
        assert!(ys.max_abs_diff(&shift(&y, axis)) < 1e-12, "axis {axis}");
    }
}

#[test]
fn max_pool_matches_exhaustive_window_scan() {
    let x = random(&[2, 4, 4, 1], 7);
    let (y, _) = ops::max_pool3d(&x).unwrap();
    assert_eq!(y.shape(), &[1, 2, 2, 1]);
    assert_eq!(y, max_pool_oracle(&x));
    let x = random(&[4, 6, 8, 3], 70);
    assert_eq!(ops::max_pool3d(&x).unwrap().0, max_pool_oracle(&x));
    let big = Tensor::<f32>::full(vec![4, 64, 64, 6], 1.5);
    let (p, _) = ops::max_pool3d(&big).unwrap();
    assert_eq!(p.shape(), &[2, 32, 32, 6]);
    assert!(p.data().iter().all(|&v| v == 1.5));
}

#[test]
fn upsample_shapes_and_sum_adjoint() {
    let x = Tensor::<f32>::zeros(vec![1, 16, 16, 24]);
    assert_eq!(ops::upsample3d(&x).unwrap().shape(), &[2, 32, 32, 24]);
    let one = Tensor::<f64>::full(vec![1, 1, 1, 1], 3.0);
    let y = ops::upsample3d(&one).unwrap();
    assert_eq!(y.data(), &[3.0; 8]);
    let mut g = Graph::<f64>::new();
    let v = g.leaf(random(&[2, 3, 2, 2], 8));
    let u = g.upsample3d(v).unwrap();
    let w = Tensor::full(g.value(u).shape().to_vec(), 1.0);
    let loss = g.weighted_sum(u, w).unwrap();
    let grads = g.backward(loss).unwrap();
    assert!(grads.get(v).unwrap().data().iter().all(|&d| d == 8.0));
}

#[test]
fn leaky_relu_reference_values() {
    let x = Tensor::<f64>::new(vec![3], vec![0.0, -1.0, 2.0]).unwrap();
    assert_eq!(ops::leaky_relu(&x, 0.2).data(), &[0.0, -0.2, 2.0]);
}

#[test]
fn batch_norm_inference_three_element_example() {
    let x = Tensor::<f64>::new(vec![3, 1], vec![1.0, 2.0, 4.0]).unwrap();
    let gamma = Tensor::new(vec![1], vec![2.0]).unwrap();
    let beta = Tensor::new(vec![1], vec![0.5]).unwrap();
    let (y, _, _) = ops::batch_norm_inference(&x, &gamma, &beta, &[1.5], &[0.25], 1e-5).unwrap();
    for (i, &xi) in [1.0, 2.0, 4.0].iter().enumerate() {
        let want = (xi - 1.5) / (0.25f64 + 1e-5).sqrt() * 2.0 + 0.5;
        assert!((y.data()[i] - want).abs() < 1e-12);
    }
}

#[test]
fn concat_and_add_reference_shapes() {
    let a = random(&[1, 2, 2, 3], 9);
    let b = random(&[1, 2, 2, 5], 10);
    assert_eq!(ops::concat_channels(&a, &b).unwrap().shape(), &[1, 2, 2, 8]);
    assert_eq!(ops::add(&a, &Tensor::zeros(vec![1, 2, 2, 3])).unwrap(), a);
    assert!(ops::add(&a, &b).is_err());
}


#[test]
fn pad_adjoint_passes_finite_differences() {
    let spec = PaddingSpec::new([(PadMode::Replicate, 1); 3]);
    let e = check_op(vec![random(&[2, 4, 4, 1], 11)], |g, v| g.pad3d(v[0], spec).unwrap());
    assert!(e < OP_TOL, "{e}");
    let spec = PaddingSpec::annulus([3, 3, 3]);
    let e = check_op(vec![random(&[2, 4, 4, 2], 12)], |g, v| g.pad3d(v[0], spec).unwrap());
    assert!(e < OP_TOL, "{e}");
}

#[test]
fn conv_adjoint_passes_finite_differences() {
    let spec = PaddingSpec::annulus([3, 3, 3]);
    let inputs = vec![random(&[2, 2, 4, 3, 2], 13), random(&[3, 3, 3, 2, 3], 14), random(&[3], 15)];
    let e = check_op(inputs, |g, v| g.conv3d(v[0], v[1], v[2], spec).unwrap());
    assert!(e < OP_TOL, "{e}");
    let inputs = vec![random(&[2, 2, 2, 3], 16), random(&[1, 1, 1, 3, 2], 17), random(&[2], 18)];
    let e = check_op(inputs, |g, v| g.conv3d(v[0], v[1], v[2], PaddingSpec::none()).unwrap());
    assert!(e < OP_TOL, "{e}");
}

#[test]
fn batch_norm_adjoints_pass_finite_differences() {
    let inputs = vec![random(&[2, 2, 3, 2, 3], 19), random(&[3], 20), random(&[3], 21)];
    let e = check_op(inputs.clone(), |g, v| g.batch_norm(v[0], v[1], v[2], BnMode::Train, 1e-5).unwrap().0);
    assert!(e < OP_TOL, "train {e}");
    let (mean, var) = ([0.1, -0.2, 0.3], [0.5, 1.5, 2.0]);
    let e = check_op(inputs, |g, v| {
        let mode = BnMode::Inference {
            running_mean: &mean,
            running_var: &var,
        };
        g.batch_norm(v[0], v[1], v[2], mode, 1e-5).unwrap().0
    });
    assert!(e < OP_TOL, "inference {e}");
}

#[test]
fn pointwise_and_structural_adjoints_pass_finite_differences() {
    // keep leaky-ReLU inputs away from the kink
    let x = random(&[2, 4, 4, 2], 22).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    let e = check_op(vec![x], |g, v| g.leaky_relu(v[0], 0.2));
    assert!(e < OP_TOL, "leaky relu {e}");
    let e = check_op(vec![random(&[2, 4, 4, 2], 23)], |g, v| g.max_pool3d(v[0]).unwrap());
    assert!(e < OP_TOL, "max pool {e}");
    let e = check_op(vec![random(&[1, 2, 2, 3], 24)], |g, v| g.upsample3d(v[0]).unwrap());
    assert!(e < OP_TOL, "upsample {e}");
    let e = check_op(vec![random(&[2, 2, 2, 3], 25), random(&[2, 2, 2, 2], 26)], |g, v| {
        g.concat_channels(v[0], v[1]).unwrap()
    });
    assert!(e < OP_TOL, "concat {e}");
    let e = check_op(vec![random(&[2, 3, 2, 2], 27), random(&[2, 3, 2, 2], 28)], |g, v| g.add(v[0], v[1]).unwrap());
    assert!(e < OP_TOL, "add {e}");
    let e = check_op(vec![random(&[2, 3, 2, 2], 29), random(&[2, 3, 2, 2], 30)], |g, v| g.mse(v[0], v[1]).unwrap());
    assert!(e < OP_TOL, "mse {e}");
}

#[test]
fn corrupted_adjoints_are_flagged() {
    let x = random(&[2, 4, 4, 2], 31).map(|v| if v.abs() < 0.05 { v - 0.1 } else { v });
    let e = check_op_with(|| Graph::with_fault(AdjointFault::LeakyReluSlope), vec![x], |g, v| g.leaky_relu(v[0], 0.2));
    assert!(e > 1e-2, "{e}");
    let spec = PaddingSpec::annulus([3, 3, 3]);
    let inputs = vec![random(&[2, 4, 3, 2], 32), random(&[3, 3, 3, 2, 2], 33), random(&[2], 34)];
    let e = check_op_with(
        || Graph::with_fault(AdjointFault::ConvBias),
        inputs,
        |g, v| g.conv3d(v[0], v[1], v[2], spec).unwrap(),
    );
    assert!(e > 1e-2, "{e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forward_ops_keep_finite_inputs_finite(seed in any::<u64>(), scale in 1e-3f64..1e3) {
        let x = random(&[2, 4, 4, 3], seed).map(|v| v * scale);
        let k = random(&[3, 3, 3, 3, 2], seed ^ 1);
        let b = random(&[2], seed ^ 2);
        let spec = PaddingSpec::annulus([3, 3, 3]);
        prop_assert!(ops::conv3d(&x, &k, &b, &spec).unwrap().all_finite());
        let gamma = Tensor::full(vec![3], 1.0);
        let beta = Tensor::zeros(vec![3]);
        prop_assert!(ops::batch_norm_train(&x, &gamma, &beta, 1e-5).unwrap().output.all_finite());
        prop_assert!(ops::leaky_relu(&x, 0.2).all_finite());
        prop_assert!(ops::max_pool3d(&x).unwrap().0.all_finite());
        prop_assert!(ops::upsample3d(&x).unwrap().all_finite());
        prop_assert!(ops::pad3d(&x, &spec).unwrap().all_finite());
    }

    #[test]
    fn max_pool_inverts_nearest_upsample(seed in any::<u64>()) {
        let x = random(&[1, 3, 2, 2], seed);
        let (back, _) = ops::max_pool3d(&ops::upsample3d(&x).unwrap()).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn pad_then_crop_is_identity(seed in any::<u64>(), w in prop::array::uniform3(0usize..3), m in prop::array::uniform3(0usize..3)) {
        let modes = [PadMode::Zero, PadMode::Circular, PadMode::Replicate];
        let spec = PaddingSpec::new([(modes[m[0]], w[0]), (modes[m[1]], w[1]), (modes[m[2]], w[2])]);
        let x = random(&[3, 4, 3, 2], seed);
        let back = ops::crop3d(&ops::pad3d(&x, &spec).unwrap(), spec.widths()).unwrap();
        prop_assert_eq!(back, x);
    }
}
