//! End-to-end adjoint checks through the full encoder-decoder.

mod common;

use cnnfd::net::{build_model, ArchitectureConfig, Mode, ModelParameters};
use cnnfd::tensor::AdjointFault;
use common::{network_check, reduced_batch, NETWORK_TOL};

#[test]
fn full_network_gradients_match_finite_differences() {
    for mode in [Mode::Train, Mode::Inference] {
        let r = network_check(AdjointFault::None, mode);
        assert!(r.max_rel_error < NETWORK_TOL, "{mode:?}: {} at {:?}", r.max_rel_error, r.worst);
    }
}

#[test]
fn full_network_check_flags_a_faulty_adjoint() {
    let r = network_check(AdjointFault::LeakyReluSlope, Mode::Train);
    assert!(r.max_rel_error > 1e-2, "{}", r.max_rel_error);
}

#[test]
fn output_shape_matches_target_layout() {
    let model: ModelParameters<f32> = build_model(&ArchitectureConfig::default(), 0).unwrap();
    let y = model.predict(&reduced_batch().cast::<f32>()).unwrap();
    assert_eq!(y.shape(), &[2, 4, 8, 8, 6]);
    assert!(y.all_finite());
}
