//! Closed forms and Monte Carlo against frozen stationary-chain values.
//!
//! The frozen numbers are the exact stationary flip/hold frequencies of the
//! two-state chain, computed in rational arithmetic outside this crate for
//! each transition rule.

use approx::assert_relative_eq;

use qrng_core::par::Execution;
use qrng_core::postproc::montecarlo::flip_hold_monte_carlo;
use qrng_core::postproc::{event_probs, flip_hold_bias, flip_hold_probs, TransitionRule};
use qrng_core::validation::{criterion_1, Tier};

/// `(p1, p2, rule, flip per cycle, hold per cycle)`.
const STATIONARY: [(f64, f64, TransitionRule, f64, f64); 9] = [
    (0.28, 0.28, TransitionRule::HoldToggles, 0.2016, 0.2016),
    (0.28, 0.28, TransitionRule::BToggles, 0.2016, 0.2016),
    (0.28, 0.28, TransitionRule::ToggleAtOne, 0.2016, 0.2016),
    (0.30, 0.25, TransitionRule::HoldToggles, 0.20078125, 0.19921875),
    (0.30, 0.25, TransitionRule::BToggles, 0.2, 0.2),
    (0.30, 0.25, TransitionRule::ToggleAtOne, 0.20316901408450705, 0.19683098591549295),
    (0.10, 0.45, TransitionRule::HoldToggles, 0.2697727272727273, 0.19022727272727272),
    (0.10, 0.45, TransitionRule::BToggles, 0.23, 0.23),
    (0.10, 0.45, TransitionRule::ToggleAtOne, 0.22505141388174807, 0.23494858611825192),
];

#[test]
fn closed_forms_match_the_default_rule_chain() {
    for &(p1, p2, rule, flip, hold) in &STATIONARY {
        if rule != TransitionRule::HoldToggles {
            continue;
        }
        let ev = event_probs(p1, p2).unwrap();
        let f = flip_hold_probs(ev.alpha, ev.beta).unwrap();
        assert_relative_eq!(f.flip, flip, max_relative = 1e-12);
        assert_relative_eq!(f.hold, hold, max_relative = 1e-12);
        assert_relative_eq!(flip_hold_bias(p1, p2).unwrap().difference, flip - hold, epsilon = 1e-14);
    }
}

#[test]
fn monte_carlo_tracks_each_rule_chain() {
    for (k, &(p1, p2, rule, flip, hold)) in STATIONARY.iter().enumerate() {
        let mc = flip_hold_monte_carlo(p1, p2, 4_000_000, 32, 40 + k as u64, rule, Execution::Parallel);
        let zf = (mc.total.flip_per_cycle() - flip) / mc.flip_per_cycle_se();
        let zh = (mc.total.hold_per_cycle() - hold) / mc.hold_per_cycle_se();
        assert!(zf.abs() < 5.0 && zh.abs() < 5.0, "{rule:?} ({p1}, {p2}): z {zf:.2} {zh:.2}");
    }
}

#[test]
fn inverted_transition_rule_is_caught() {
    assert!(criterion_1(Tier::Quick, TransitionRule::HoldToggles).unwrap().passed);
    for rule in [TransitionRule::BToggles, TransitionRule::ToggleAtOne] {
        let r = criterion_1(Tier::Quick, rule).unwrap();
        assert!(!r.passed, "{rule:?} slipped through: {}", r.detail);
    }
}

#[test]
fn sequential_and_parallel_monte_carlo_agree_exactly() {
    let a = flip_hold_monte_carlo(0.1, 0.45, 300_000, 12, 9, TransitionRule::default(), Execution::Sequential);
    let b = flip_hold_monte_carlo(0.1, 0.45, 300_000, 12, 9, TransitionRule::default(), Execution::Parallel);
    assert_eq!(a, b);
}
