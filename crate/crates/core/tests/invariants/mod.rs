//! Property suites for every module invariant. Shared by the core
//! integration tests and the acceptance harness.

#![allow(dead_code)]

pub mod dataset;
pub mod evolve;
pub mod expr;
pub mod hessian_ed;
pub mod intrinsic_dim;
pub mod select;

use idsr::expr::{Operand, Operator, StackModel};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

/// Cases per suite.
pub const CASES: u32 = 1000;

pub struct Suite {
    pub module: &'static str,
    pub name: &'static str,
    pub check: fn(u32) -> Result<(), String>,
}

pub fn all() -> Vec<Suite> {
    let mut v = expr::suites();
    v.extend(dataset::suites());
    v.extend(evolve::suites());
    v.extend(intrinsic_dim::suites());
    v.extend(hessian_ed::suites());
    v.extend(select::suites());
    v
}

pub fn find(name: &str) -> Suite {
    all().into_iter().find(|s| s.name == name).unwrap_or_else(|| panic!("no suite {name}"))
}

/// Seeded runner so failures reproduce.
pub fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

pub fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

pub fn arb_operator() -> impl Strategy<Value = Operator> {
    prop::sample::select(Operator::ALL.to_vec())
}

pub fn arb_operand(p: usize) -> impl Strategy<Value = Operand> {
    prop_oneof![
        7 => (0..p).prop_map(Operand::Feature),
        3 => (-10.0..10.0f64).prop_map(Operand::Const),
    ]
}

/// Models over `p` features with up to `max_ops` operators and
/// `max_operands` operands.
pub fn arb_model(p: usize, max_ops: usize, max_operands: usize) -> impl Strategy<Value = StackModel> {
    (
        prop::collection::vec(arb_operator(), 0..=max_ops),
        prop::collection::vec(arb_operand(p), 1..=max_operands),
    )
        .prop_map(|(ops, operands)| StackModel::new(ops, operands).expect("within size cap"))
}

/// Finite values across many magnitudes, including zero and subnormals.
pub fn arb_finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        4 => -10.0..10.0f64,
        1 => prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL,
    ]
}
