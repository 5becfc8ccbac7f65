//! Brute-force Monte Carlo of the post-processing machine fed with
//! independent Bernoulli clicks.
//!
//! This is the oracle for the closed forms in the parent module: it only
//! uses the state machine and two independent coin flips per cycle, never
//! the event or flip/hold formulas. Runs are split into independent chunks
//! (own seed, own initial state); the spread of per-chunk frequencies gives
//! batch-means standard errors that account for the serial correlation
//! introduced by the hidden state.

use rand::RngCore;

use super::{pp_step_with, PpEvents, PpState, TransitionRule};
use crate::par::{self, Execution};
use crate::rng;

/// Default number of independent chunks per run.
pub const DEFAULT_CHUNKS: usize = 64;

/// Counts from one chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlipHoldTally {
    pub cycles: u64,
    pub flips: u64,
    pub holds: u64,
    /// Emitted bits equal to 1.
    pub ones: u64,
}

impl FlipHoldTally {
    pub fn emitted(&self) -> u64 {
        self.flips + self.holds
    }

    pub fn merge(self, o: Self) -> Self {
        FlipHoldTally {
            cycles: self.cycles + o.cycles,
            flips: self.flips + o.flips,
            holds: self.holds + o.holds,
            ones: self.ones + o.ones,
        }
    }

    pub fn flip_per_cycle(&self) -> f64 {
        self.flips as f64 / self.cycles as f64
    }

    pub fn hold_per_cycle(&self) -> f64 {
        self.holds as f64 / self.cycles as f64
    }

    /// `(flips - holds) / cycles`.
    pub fn bias_per_cycle(&self) -> f64 {
        (self.flips as f64 - self.holds as f64) / self.cycles as f64
    }

    /// `(flips - holds) / (flips + holds)`.
    pub fn bias_per_output(&self) -> f64 {
        (self.flips as f64 - self.holds as f64) / self.emitted() as f64
    }
}

/// Transition table indexed by `s | d1 << 1 | d2 << 2`, where `d1` and `d2`
/// are the raw click flags. Entry: `(next_s, flip, hold)`.
fn step_table(rule: TransitionRule) -> [(u8, u8, u8); 8] {
    let mut t = [(0u8, 0u8, 0u8); 8];
    for (idx, slot) in t.iter_mut().enumerate() {
        let s = idx & 1 == 1;
        let ev = PpEvents {
            a: idx & 2 != 0,
            b: idx & 4 != 0,
        }
        .into();
        let (next, bit) = pp_step_with(rule, PpState::new(s, false), ev);
        let flip = bit == Some(true);
        let hold = bit == Some(false);
        *slot = (next.s as u8, flip as u8, hold as u8);
    }
    t
}

/// Runs one chain of `cycles` cycles.
///
/// Each cycle draws one 64-bit word; its low and high halves decide the two
/// detectors independently (32-bit resolution on the click probabilities).
pub fn run_chain(
    p1: f64,
    p2: f64,
    cycles: u64,
    seed: u64,
    rule: TransitionRule,
    init: PpState,
) -> FlipHoldTally {
    let table = step_table(rule);
    let t1 = threshold32(p1);
    let t2 = threshold32(p2);
    let mut rng = rng::substream(seed, 0);
    let mut s = init.s as u8;
    let mut x = init.last_bit as u64;
    let (mut flips, mut holds, mut ones) = (0u64, 0u64, 0u64);
    for _ in 0..cycles {
        let u = rng.next_u64();
        let d1 = ((u as u32 as u64) < t1) as usize;
        let d2 = (((u >> 32) as u32 as u64) < t2) as usize;
        let (ns, f, h) = table[s as usize | d1 << 1 | d2 << 2];
        s = ns;
        x ^= f as u64;
        flips += f as u64;
        holds += h as u64;
        ones += x & (f | h) as u64;
    }
    FlipHoldTally {
        cycles,
        flips,
        holds,
        ones,
    }
}

fn threshold32(p: f64) -> u64 {
    (p.clamp(0.0, 1.0) * 4_294_967_296.0).round() as u64
}

/// Aggregate of a chunked run with batch-means standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloEstimate {
    pub total: FlipHoldTally,
    pub chunks: Vec<FlipHoldTally>,
}

impl MonteCarloEstimate {
    fn batch_se(&self, f: impl Fn(&FlipHoldTally) -> f64) -> f64 {
        let k = self.chunks.len();
        if k < 2 {
            return f64::NAN;
        }
        // Chunk values weighted by chunk length (chunks are near-equal).
        let vals: Vec<f64> = self.chunks.iter().map(&f).collect();
        let mean = vals.iter().sum::<f64>() / k as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        (var / k as f64).sqrt()
    }

    pub fn flip_per_cycle_se(&self) -> f64 {
        self.batch_se(FlipHoldTally::flip_per_cycle)
    }

    pub fn hold_per_cycle_se(&self) -> f64 {
        self.batch_se(FlipHoldTally::hold_per_cycle)
    }

    pub fn bias_per_cycle_se(&self) -> f64 {
        self.batch_se(FlipHoldTally::bias_per_cycle)
    }

    pub fn bias_per_output_se(&self) -> f64 {
        self.batch_se(FlipHoldTally::bias_per_output)
    }
}

/// Runs `cycles` cycles split over `chunks` independent chains.
pub fn flip_hold_monte_carlo(
    p1: f64,
    p2: f64,
    cycles: u64,
    chunks: usize,
    seed: u64,
    rule: TransitionRule,
    exec: Execution,
) -> MonteCarloEstimate {
    let chunks = chunks.max(1);
    let tallies = par::map_collect(exec, chunks, |i| {
        run_chain(
            p1,
            p2,
            par::chunk_len(cycles, chunks, i),
            rng::chunk_seed(seed, i as u64),
            rule,
            PpState::default(),
        )
    });
    let total = tallies
        .iter()
        .fold(FlipHoldTally::default(), |a, b| a.merge(*b));
    MonteCarloEstimate {
        total,
        chunks: tallies,
    }
}

/// A mismatched chain and its symmetric twin (both detectors at the mean
/// probability) driven by the same uniforms. The twin's flip excess has
/// expectation zero, so subtracting it removes most of the sampling noise
/// shared by the two chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairedTally {
    pub mismatched: FlipHoldTally,
    pub symmetric: FlipHoldTally,
}

impl PairedTally {
    pub fn merge(self, o: Self) -> Self {
        PairedTally {
            mismatched: self.mismatched.merge(o.mismatched),
            symmetric: self.symmetric.merge(o.symmetric),
        }
    }

    /// Per-cycle flip excess of the mismatched chain minus the twin's.
    pub fn bias_per_cycle(&self) -> f64 {
        self.mismatched.bias_per_cycle() - self.symmetric.bias_per_cycle()
    }
}

pub fn run_paired_chain(
    p1: f64,
    p2: f64,
    cycles: u64,
    seed: u64,
    rule: TransitionRule,
    init: PpState,
) -> PairedTally {
    let table = step_table(rule);
    let (t1, t2) = (threshold32(p1), threshold32(p2));
    let tm = threshold32(0.5 * (p1 + p2));
    let mut rng = rng::substream(seed, 0);
    let mut s = [init.s as u8; 2];
    let mut x = [init.last_bit as u64; 2];
    let mut acc = [[0u64; 3]; 2];
    for _ in 0..cycles {
        let u = rng.next_u64();
        let lo = u as u32 as u64;
        let hi = (u >> 32) as u32 as u64;
        let idx = [
            ((lo < t1) as usize) << 1 | ((hi < t2) as usize) << 2,
            ((lo < tm) as usize) << 1 | ((hi < tm) as usize) << 2,
        ];
        for k in 0..2 {
            let (ns, f, h) = table[s[k] as usize | idx[k]];
            s[k] = ns;
            x[k] ^= f as u64;
            acc[k][0] += f as u64;
            acc[k][1] += h as u64;
            acc[k][2] += x[k] & (f | h) as u64;
        }
    }
    let tally = |a: [u64; 3]| FlipHoldTally {
        cycles,
        flips: a[0],
        holds: a[1],
        ones: a[2],
    };
    PairedTally {
        mismatched: tally(acc[0]),
        symmetric: tally(acc[1]),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedEstimate {
    pub total: PairedTally,
    pub chunks: Vec<PairedTally>,
}

impl PairedEstimate {
    pub fn bias_per_cycle(&self) -> f64 {
        self.total.bias_per_cycle()
    }

    /// Batch-means standard error of [`PairedTally::bias_per_cycle`].
    pub fn bias_per_cycle_se(&self) -> f64 {
        let k = self.chunks.len();
        if k < 2 {
            return f64::NAN;
        }
        let vals: Vec<f64> = self.chunks.iter().map(PairedTally::bias_per_cycle).collect();
        let mean = vals.iter().sum::<f64>() / k as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        (var / k as f64).sqrt()
    }
}

/// Paired estimate of the per-cycle flip excess at `(p1, p2)`.
pub fn paired_bias_monte_carlo(
    p1: f64,
    p2: f64,
    cycles: u64,
    chunks: usize,
    seed: u64,
    rule: TransitionRule,
    exec: Execution,
) -> PairedEstimate {
    let chunks = chunks.max(1);
    let tallies = par::map_collect(exec, chunks, |i| {
        run_paired_chain(
            p1,
            p2,
            par::chunk_len(cycles, chunks, i),
            rng::chunk_seed(seed, i as u64),
            rule,
            PpState::default(),
        )
    });
    let total = tallies
        .iter()
        .fold(PairedTally::default(), |a, b| a.merge(*b));
    PairedEstimate {
        total,
        chunks: tallies,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_matches_state_machine() {
        let t = step_table(TransitionRule::HoldToggles);
        // S=0, A only: flip, stay in 0.
        assert_eq!(t[0b010], (0, 1, 0));
        // S=0, B only: hold, go to 1.
        assert_eq!(t[0b100], (1, 0, 1));
        // S=1, both: no output, toggle.
        assert_eq!(t[0b111], (0, 0, 0));
        // S=1, none: toggle.
        assert_eq!(t[0b001], (0, 0, 0));
    }

    #[test]
    fn chain_without_clicks_emits_nothing() {
        let t = run_chain(0.0, 0.0, 1000, 1, TransitionRule::default(), PpState::default());
        assert_eq!(t.emitted(), 0);
        assert_eq!(t.cycles, 1000);
    }

    #[test]
    fn only_detector_one_alternates_bits() {
        // Every cycle is A in S = 0: a flip each time.
        let t = run_chain(1.0, 0.0, 1001, 1, TransitionRule::default(), PpState::default());
        assert_eq!(t.flips, 1001);
        assert_eq!(t.ones, 501);
    }

    #[test]
    fn chunked_runs_are_reproducible() {
        let a = flip_hold_monte_carlo(0.3, 0.2, 100_000, 8, 5, TransitionRule::default(), Execution::Sequential);
        let b = flip_hold_monte_carlo(0.3, 0.2, 100_000, 8, 5, TransitionRule::default(), Execution::Parallel);
        assert_eq!(a, b);
        assert_eq!(a.total.cycles, 100_000);
    }

    #[test]
    fn paired_chain_reproduces_both_single_chains() {
        let p = run_paired_chain(0.3, 0.2, 50_000, 4, TransitionRule::default(), PpState::default());
        let m = run_chain(0.3, 0.2, 50_000, 4, TransitionRule::default(), PpState::default());
        let s = run_chain(0.25, 0.25, 50_000, 4, TransitionRule::default(), PpState::default());
        assert_eq!(p.mismatched, m);
        assert_eq!(p.symmetric, s);
    }
}
