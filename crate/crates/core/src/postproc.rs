//! The flip/hold post-processing state machine and the closed-form
//! probabilities of its output.
//!
//! The machine keeps one internal bit `S` and the last output bit `x`.
//! A cycle with a valid click on detector 1 only is event A, on detector 2
//! only is event B. In state `S = 0`, A flips the output and B holds it; in
//! state `S = 1` the roles swap. Cycles with neither or both events emit
//! nothing and toggle `S`.
//!
//! The default transition rule ([`TransitionRule::HoldToggles`]) keeps `S`
//! on a flip and toggles it on a hold. It is the only assignment of `S`
//! transitions whose per-cycle flip and hold frequencies reproduce
//! [`flip_hold_probs`]; the Monte Carlo oracle in [`montecarlo`] checks this.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod montecarlo;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PpState {
    pub s: bool,
    pub last_bit: bool,
}

impl PpState {
    pub fn new(s: bool, last_bit: bool) -> Self {
        PpState { s, last_bit }
    }
}

/// Post-processing input for one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PpEvent {
    /// Valid prompt click on detector 1 only.
    A,
    /// Valid prompt click on detector 2 only.
    B,
    /// No valid click, both detectors, or only late clicks.
    NoneOrBoth,
}

/// Raw event flags; both set collapses to [`PpEvent::NoneOrBoth`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PpEvents {
    pub a: bool,
    pub b: bool,
}

impl From<PpEvents> for PpEvent {
    fn from(e: PpEvents) -> Self {
        match (e.a, e.b) {
            (true, false) => PpEvent::A,
            (false, true) => PpEvent::B,
            _ => PpEvent::NoneOrBoth,
        }
    }
}

/// How event A and B move the internal state `S`. Output actions (flip or
/// hold) are the same for every rule; empty cycles always toggle `S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionRule {
    /// Flip keeps `S`, hold toggles it.
    #[default]
    HoldToggles,
    /// A keeps `S`, B toggles it, in both states.
    BToggles,
    /// As `BToggles` in `S = 0`; in `S = 1` both events toggle `S`.
    ToggleAtOne,
}

impl TransitionRule {
    pub const ALL: [TransitionRule; 3] = [
        TransitionRule::HoldToggles,
        TransitionRule::BToggles,
        TransitionRule::ToggleAtOne,
    ];

    /// Next `S` after an output event in state `s`.
    #[inline]
    fn next_s(self, s: bool, event_b: bool) -> bool {
        let flip = s == event_b;
        match self {
            TransitionRule::HoldToggles => s ^ !flip,
            TransitionRule::BToggles => s ^ event_b,
            TransitionRule::ToggleAtOne => {
                if s {
                    false
                } else {
                    event_b
                }
            }
        }
    }
}

/// What an output event did to the bit stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Flip,
    Hold,
}

/// One step of the state machine under the default rule; returns the new
/// state and the emitted bit, if any.
pub fn pp_step(state: PpState, event: PpEvent) -> (PpState, Option<bool>) {
    pp_step_with(TransitionRule::default(), state, event)
}

pub fn pp_step_with(rule: TransitionRule, state: PpState, event: PpEvent) -> (PpState, Option<bool>) {
    let event_b = match event {
        PpEvent::A => false,
        PpEvent::B => true,
        PpEvent::NoneOrBoth => {
            return (
                PpState {
                    s: !state.s,
                    last_bit: state.last_bit,
                },
                None,
            )
        }
    };
    let flip = state.s == event_b;
    let bit = state.last_bit ^ flip;
    (
        PpState {
            s: rule.next_s(state.s, event_b),
            last_bit: bit,
        },
        Some(bit),
    )
}

/// Flip or hold action of an output event in state `s`.
pub fn action(s: bool, event: PpEvent) -> Option<Action> {
    match event {
        PpEvent::A if !s => Some(Action::Flip),
        PpEvent::A => Some(Action::Hold),
        PpEvent::B if s => Some(Action::Flip),
        PpEvent::B => Some(Action::Hold),
        PpEvent::NoneOrBoth => None,
    }
}

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {p} is outside [0, 1)")))
    }
}

/// Per-cycle click and event probabilities for two independent detectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickProbs {
    pub p1: f64,
    pub p2: f64,
    /// P(A): detector 1 only.
    pub alpha: f64,
    /// P(B): detector 2 only.
    pub beta: f64,
}

impl ClickProbs {
    /// P(neither A nor B).
    pub fn p_empty(&self) -> f64 {
        1.0 - self.alpha - self.beta
    }
}

pub fn event_probs(p1: f64, p2: f64) -> Result<ClickProbs> {
    check_prob("p1", p1)?;
    check_prob("p2", p2)?;
    Ok(ClickProbs {
        p1,
        p2,
        alpha: p1 * (1.0 - p2),
        beta: p2 * (1.0 - p1),
    })
}

/// Flip and hold probabilities per cycle.
///
/// `flip + hold = alpha + beta`: these are the probabilities that a given
/// cycle emits a flipped (held) bit. [`FlipHoldProbs::per_output`] gives the
/// conditional probabilities per emitted bit, which is what pair counts of
/// an output stream measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlipHoldProbs {
    pub alpha: f64,
    pub beta: f64,
    pub flip: f64,
    pub hold: f64,
}

impl FlipHoldProbs {
    pub fn difference(&self) -> f64 {
        self.flip - self.hold
    }

    /// Output rate per cycle, `alpha + beta`.
    pub fn output_prob(&self) -> f64 {
        self.alpha + self.beta
    }

    /// `(P(flip | output), P(hold | output))`.
    pub fn per_output(&self) -> (f64, f64) {
        let r = self.output_prob();
        (self.flip / r, self.hold / r)
    }

    /// Relative flip/hold deviation of the output stream,
    /// `(N_flip - N_hold) / (N_flip + N_hold)` in expectation.
    pub fn per_output_difference(&self) -> f64 {
        self.difference() / self.output_prob()
    }
}

pub fn flip_hold_probs(alpha: f64, beta: f64) -> Result<FlipHoldProbs> {
    if !(alpha >= 0.0 && beta >= 0.0) {
        return Err(Error::domain("alpha and beta must be non-negative"));
    }
    let r = alpha + beta;
    if r == 0.0 {
        return Err(Error::domain("alpha + beta = 0: no bit is ever emitted"));
    }
    if r > 1.0 {
        return Err(Error::domain(format!("alpha + beta = {r} exceeds 1")));
    }
    let empty = 1.0 - r;
    // 1 - (1 - alpha - beta)^2, factored to avoid cancellation.
    let denom = r * (2.0 - r);
    let sq = alpha * alpha + beta * beta;
    Ok(FlipHoldProbs {
        alpha,
        beta,
        flip: (sq + 2.0 * alpha * beta * empty) / denom,
        hold: (2.0 * alpha * beta + sq * empty) / denom,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasEstimate {
    /// `P(flip) - P(hold)` per cycle.
    pub difference: f64,
    /// `(p1 - p2)^2 / 2`, never above `difference`.
    pub lower_bound: f64,
}

/// Flip excess per cycle as a function of the click probabilities.
pub fn flip_hold_bias(p1: f64, p2: f64) -> Result<BiasEstimate> {
    check_prob("p1", p1)?;
    check_prob("p2", p2)?;
    let d2 = (p1 - p2) * (p1 - p2);
    Ok(BiasEstimate {
        difference: d2 / (2.0 - (p1 + p2) + 2.0 * p1 * p2),
        lower_bound: d2 / 2.0,
    })
}

/// Recovers `|p1 - p2|` from a per-cycle flip excess at average click
/// probability `p_avg` (equal-probability approximation of the
/// denominator).
pub fn estimate_mismatch(measured_bias: f64, p_avg: f64) -> Result<f64> {
    if measured_bias.is_nan() || measured_bias < 0.0 {
        return Err(Error::domain(
            "negative flip excess: hold-dominant stream is outside the model",
        ));
    }
    if !(p_avg > 0.0 && p_avg < 1.0) {
        return Err(Error::domain("p_avg must be in (0, 1)"));
    }
    Ok(((2.0 - 2.0 * p_avg + 2.0 * p_avg * p_avg) * measured_bias).sqrt())
}
