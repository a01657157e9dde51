//! Finite-difference verification of every op and of the full contrastive
//! path through a small encoder.

use ipac_core::verify::{encoder_gradcheck, op_gradcheck_suite, DEFAULT_TOLERANCE};

#[test]
fn every_op_passes_at_ten_random_points() {
    let results = op_gradcheck_suite(2024, 10).unwrap();
    assert!(results.len() >= 17, "missing op checks: {}", results.len());
    for r in &results {
        assert!(
            r.max_rel_err < DEFAULT_TOLERANCE,
            "{}: max relative error {}",
            r.name,
            r.max_rel_err
        );
    }
}

#[test]
fn contrastive_loss_through_tiny_encoder_passes() {
    let result = encoder_gradcheck(7, 5).unwrap();
    assert!(
        result.max_rel_err < DEFAULT_TOLERANCE,
        "max relative error {}",
        result.max_rel_err
    );
}
