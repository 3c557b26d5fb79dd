//! Oracles and gradient-check harnesses shared by the integration tests.
#![allow(dead_code)]

use cnnfd::net::{assemble_input_on, build_model, ArchitectureConfig, Mode, ModelParameters};
use cnnfd::tensor::{grad_check, AdjointFault, GradCheckOptions, GradCheckReport, Graph, PadMode, Var};
use cnnfd::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const OP_TOL: f64 = 1e-6;
pub const NETWORK_TOL: f64 = 1e-5;

pub fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// Map a padded coordinate back onto the source axis, or `None` for zero padding.
fn source_index(i: isize, n: usize, mode: PadMode) -> Option<usize> {
    let n = n as isize;
    if (0..n).contains(&i) {
        return Some(i as usize);
    }
    match mode {
        PadMode::Zero => None,
        PadMode::Circular => Some(i.rem_euclid(n) as usize),
        PadMode::Replicate => Some(i.clamp(0, n - 1) as usize),
    }
}

/// Direct-sum 3D cross-correlation over a single (A, T, R, Cin) sample.
pub fn conv_oracle(x: &Tensor<f32>, k: &Tensor<f32>, b: &Tensor<f32>, modes: [PadMode; 3]) -> Tensor<f32> {
    let s = x.shape();
    let (na, nt, nr, ci) = (s[0], s[1], s[2], s[3]);
    let ks = k.shape();
    let (ka, kt, kr, co) = (ks[0], ks[1], ks[2], ks[4]);
    let mut out = Tensor::<f32>::zeros(vec![na, nt, nr, co]);
    for a in 0..na {
        for t in 0..nt {
            for r in 0..nr {
                for o in 0..co {
                    let mut acc = b.data()[o];
                    for da in 0..ka {
                        for dt in 0..kt {
                            for dr in 0..kr {
                                let ia = source_index(a as isize + da as isize - (ka / 2) as isize, na, modes[0]);
                                let it = source_index(t as isize + dt as isize - (kt / 2) as isize, nt, modes[1]);
                                let ir = source_index(r as isize + dr as isize - (kr / 2) as isize, nr, modes[2]);
                                let (Some(ia), Some(it), Some(ir)) = (ia, it, ir) else { continue };
                                for c in 0..ci {
                                    acc += x.at(&[ia, it, ir, c]) * k.at(&[da, dt, dr, c, o]);
                                }
                            }
                        }
                    }
                    let idx = out.index_of(&[a, t, r, o]);
                    out.data_mut()[idx] = acc;
                }
            }
        }
    }
    out
}

/// Largest value of every non-overlapping 2×2×2 window.
pub fn max_pool_oracle(x: &Tensor<f64>) -> Tensor<f64> {
    let s = x.shape();
    let mut out = Tensor::<f64>::zeros(vec![s[0] / 2, s[1] / 2, s[2] / 2, s[3]]);
    for a in 0..s[0] / 2 {
        for t in 0..s[1] / 2 {
            for r in 0..s[2] / 2 {
                for c in 0..s[3] {
                    let mut m = f64::NEG_INFINITY;
                    for d in 0..8 {
                        m = m.max(x.at(&[2 * a + d / 4, 2 * t + (d / 2) % 2, 2 * r + d % 2, c]));
                    }
                    let idx = out.index_of(&[a, t, r, c]);
                    out.data_mut()[idx] = m;
                }
            }
        }
    }
    out
}

/// Finite-difference check of a graph built from leaf tensors, with a random
/// linear probe on its output.
pub fn check_op(inputs: Vec<Tensor<f64>>, build: impl Fn(&mut Graph<f64>, &[Var]) -> Var) -> f64 {
    check_op_with(Graph::new, inputs, build)
}

pub fn check_op_with(
    graph: impl Fn() -> Graph<f64>,
    inputs: Vec<Tensor<f64>>,
    build: impl Fn(&mut Graph<f64>, &[Var]) -> Var,
) -> f64 {
    let f = |ps: &[Tensor<f64>]| {
        let mut g = graph();
        let vars: Vec<Var> = ps.iter().map(|p| g.leaf(p.clone())).collect();
        let out = build(&mut g, &vars);
        let w = random(g.value(out).shape(), 99);
        let loss = g.weighted_sum(out, w)?;
        let value = g.value(loss).data()[0];
        let grads = g.backward(loss)?;
        let gs = vars
            .iter()
            .zip(ps)
            .map(|(v, p)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape().to_vec())))
            .collect();
        Ok((value, gs))
    };
    grad_check(f, &inputs, &GradCheckOptions::default()).unwrap().max_rel_error
}

/// Batch of two conditioning grids on the reduced (4, 8, 8) mesh.
pub fn reduced_batch() -> Tensor<f64> {
    let extents = [4, 8, 8];
    let a = assemble_input_on([0.3, 1.1, 1.9], extents).unwrap().tensor;
    let b = assemble_input_on([1.6, 0.5, 0.8], extents).unwrap().tensor;
    Tensor::stack(&[a, b]).unwrap().cast::<f64>()
}

/// Gradient check of the MSE loss through the whole network, sampling a few
/// elements of every parameter tensor.
pub fn network_check(fault: AdjointFault, mode: Mode) -> GradCheckReport {
    let model: ModelParameters<f64> = build_model(&ArchitectureConfig::default(), 11).unwrap();
    let x = reduced_batch();
    let y = random(&[2, 4, 8, 8, 6], 5);
    let initial: Vec<Tensor<f64>> = model.params().iter().map(|p| p.value.clone()).collect();
    let f = |ps: &[Tensor<f64>]| {
        let mut m = model.clone();
        m.set_values(ps)?;
        let mut pass = m.forward_graph_on(Graph::with_fault(fault), &x, mode)?;
        let t = pass.graph.constant(y.clone());
        let loss = pass.graph.mse(pass.output, t)?;
        let value = pass.graph.value(loss).data()[0];
        let mut grads = pass.graph.backward(loss)?;
        let gs = pass
            .params
            .iter()
            .zip(ps)
            .map(|(v, p)| grads.take(*v).unwrap_or_else(|| Tensor::zeros(p.shape().to_vec())))
            .collect();
        Ok((value, gs))
    };
    let opts = GradCheckOptions {
        // biases shift every activation of a channel, so a wide step can
        // straddle a leaky-ReLU kink
        step: 1e-6,
        tolerance: NETWORK_TOL,
        // conv biases ahead of train-mode batch norm have an exactly zero
        // gradient; central differences see only loss round-off (~1e-10)
        floor: 1e-4,
        max_elements_per_param: Some(3),
        seed: 2,
    };
    grad_check(f, &initial, &opts).unwrap()
}
