//! Cross-module invariants.

use proptest::prelude::*;

use qrng_core::analysis::{autocorr_times, crosscorr_times, tally, BitSink, BitStream, BitTally, StreamStats};
use qrng_core::device::{feedback_step, FeedbackParams, FeedbackState};
use qrng_core::formats;
use qrng_core::par::Execution;

fn naive(bits: &[bool]) -> BitTally {
    let mut t = BitTally::default();
    for &b in bits {
        t.push_bit(b);
    }
    t
}

proptest! {
    #[test]
    fn chunked_tally_is_exact(bits in proptest::collection::vec(any::<bool>(), 0..2000), chunk in 1usize..64) {
        let s = BitStream::from_bits(bits.iter().copied());
        let want = naive(&bits);
        prop_assert_eq!(tally(&s, Execution::Sequential, chunk), want);
        prop_assert_eq!(tally(&s, Execution::Parallel, chunk), want);
    }

    #[test]
    fn tallies_merge_at_any_split(bits in proptest::collection::vec(any::<bool>(), 1..500), cut in 0usize..500) {
        let cut = cut.min(bits.len());
        let merged = naive(&bits[..cut]).merge(naive(&bits[cut..]));
        prop_assert_eq!(merged, naive(&bits));
    }

    #[test]
    fn bit_files_round_trip(bits in proptest::collection::vec(any::<bool>(), 0..300)) {
        let s = BitStream::from_bits(bits.iter().copied());
        let mut buf = Vec::new();
        formats::write_bits(&mut buf, &s).unwrap();
        prop_assert_eq!(buf.len(), bits.len().div_ceil(8));
        let back = formats::read_bits(&buf[..], bits.len() as u64).unwrap();
        prop_assert_eq!(back.iter().collect::<Vec<_>>(), bits);
    }

    #[test]
    fn counts_identities(bits in proptest::collection::vec(any::<bool>(), 2..400)) {
        let t = naive(&bits);
        let s = StreamStats::from_tally(&t).unwrap();
        prop_assert_eq!(s.n0 + s.n1, bits.len() as u64);
        prop_assert_eq!(s.n_hold + s.n_flip, bits.len() as u64 - 1);
        prop_assert!(s.rel_dev_balance.abs() <= 1.0 && s.rel_dev_flip.abs() <= 1.0);
        // Complementing every bit mirrors the balance and keeps the flips.
        let c = StreamStats::from_tally(&naive(&bits.iter().map(|b| !b).collect::<Vec<_>>())).unwrap();
        prop_assert_eq!(c.rel_dev_balance, -s.rel_dev_balance);
        prop_assert_eq!(c.n_flip, s.n_flip);
    }

    #[test]
    fn feedback_stays_in_range(counts in proptest::collection::vec(0u64..20_000, 1..60), gain in 0.0f64..0.05) {
        let params = FeedbackParams { integrator_gain: gain, ..FeedbackParams::default() };
        let mut st = FeedbackState::new(&params);
        for c in counts {
            st.close_window(&params, 4e6, c as f64, params.counter_window_s);
            prop_assert!(st.v_bias >= params.v_min_v && st.v_bias <= params.v_max_v);
            prop_assert!(st.integrator_value >= params.v_min_v && st.integrator_value <= params.v_max_v);
        }
    }

    #[test]
    fn crosscorr_mirrors_under_channel_swap(
        mut a in proptest::collection::vec(0.0f64..5000.0, 0..60),
        mut b in proptest::collection::vec(0.0f64..5000.0, 0..60),
    ) {
        // Integer times keep every difference off the bin edges.
        a.iter_mut().for_each(|t| *t = t.floor() + 0.5);
        b.iter_mut().for_each(|t| *t = t.floor() + 0.25);
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let ab = crosscorr_times(&a, &b, 10.0, 300.0).unwrap();
        let ba = crosscorr_times(&b, &a, 10.0, 300.0).unwrap();
        let mut rev = ba.counts.clone();
        rev.reverse();
        prop_assert_eq!(ab.counts, rev);
    }

    #[test]
    fn autocorr_counts_every_close_pair(mut t in proptest::collection::vec(0.0f64..2000.0, 0..80)) {
        t.sort_by(f64::total_cmp);
        let h = autocorr_times(&t, 7.0, 350.0).unwrap();
        let mut pairs = 0u64;
        for i in 0..t.len() {
            for j in i + 1..t.len() {
                if t[j] - t[i] < 350.0 {
                    pairs += 1;
                }
            }
        }
        prop_assert_eq!(h.in_range(), pairs);
    }
}

#[test]
fn zero_gain_holds_the_bias() {
    let params = FeedbackParams { integrator_gain: 0.0, ..FeedbackParams::default() };
    let mut st = FeedbackState::new(&params);
    for _ in 0..10_000 {
        st = feedback_step(st, &params, 4e6, true, 250e-9);
    }
    assert_eq!(st.v_bias, params.v_initial_v);
    assert_eq!(st.windows_closed, 2);
}
