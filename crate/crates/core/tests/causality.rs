//! Impulse-gradient checks on the dilated causal stacks.

mod common;

use common::probes::{causality_violations, measured_receptive_field, TCN_LEN};
use mssd::models::TcnStack;

#[test]
fn future_positions_have_zero_influence() {
    for kernel in [2, 3] {
        for layers in 1..=4 {
            let v = causality_violations(kernel, layers);
            assert!(v.is_empty(), "{v:?}");
        }
    }
}

#[test]
fn measured_receptive_field_matches_formula() {
    for kernel in [2, 3] {
        for layers in 1..=4 {
            let expected = TcnStack::receptive_field(kernel, layers);
            assert!(expected <= TCN_LEN);
            assert_eq!(measured_receptive_field(kernel, layers), expected, "k={kernel} L={layers}");
        }
    }
}

#[test]
fn receptive_field_formula_values() {
    assert_eq!(TcnStack::receptive_field(2, 1), 2);
    assert_eq!(TcnStack::receptive_field(2, 4), 16);
    assert_eq!(TcnStack::receptive_field(3, 3), 15);
    assert_eq!(TcnStack::receptive_field(3, 4), 31);
}
