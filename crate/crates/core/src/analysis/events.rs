//! Click event logs and the correlation histograms built from them.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::stochastic::{Channel, DetectionKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickEvent {
    pub t_ns: f64,
    pub channel: Channel,
    pub kind: DetectionKind,
}

/// Time-ordered click records of both channels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    events: Vec<ClickEvent>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wraps records, which must be in non-decreasing time order.
    pub fn from_events(events: Vec<ClickEvent>) -> Result<Self> {
        if let Some(i) = events.windows(2).position(|w| w[1].t_ns < w[0].t_ns) {
            return Err(Error::domain(format!(
                "event {} at {} ns precedes event {} at {} ns",
                i + 1,
                events[i + 1].t_ns,
                i,
                events[i].t_ns
            )));
        }
        Ok(EventLog { events })
    }

    /// Merges two ascending per-channel time series into one log of prompt
    /// clicks.
    pub fn from_channel_times(ch1: &[f64], ch2: &[f64]) -> Self {
        let mut events = Vec::with_capacity(ch1.len() + ch2.len());
        let (mut i, mut j) = (0, 0);
        while i < ch1.len() || j < ch2.len() {
            let take1 = j >= ch2.len() || (i < ch1.len() && ch1[i] <= ch2[j]);
            let (t, channel) = if take1 {
                i += 1;
                (ch1[i - 1], Channel::One)
            } else {
                j += 1;
                (ch2[j - 1], Channel::Two)
            };
            events.push(ClickEvent {
                t_ns: t,
                channel,
                kind: DetectionKind::Prompt,
            });
        }
        EventLog { events }
    }

    /// Appends a record; callers keep the log ordered.
    pub fn push(&mut self, e: ClickEvent) {
        debug_assert!(self.events.last().is_none_or(|l| l.t_ns <= e.t_ns));
        self.events.push(e);
    }

    pub fn events(&self) -> &[ClickEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn channel_times(&self, channel: Channel) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.channel == channel)
            .map(|e| e.t_ns)
            .collect()
    }

    pub fn channel_count(&self, channel: Channel) -> usize {
        self.events.iter().filter(|e| e.channel == channel).count()
    }
}

/// Fixed-width histogram of time differences, ns.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width_ns: f64,
    pub lo_ns: f64,
    pub counts: Vec<u64>,
    /// Pairs examined, in range or not.
    pub total_pairs: u64,
    pub out_of_range: u64,
}

impl Histogram {
    pub fn new(lo_ns: f64, bin_width_ns: f64, bins: usize) -> Result<Self> {
        if !(bin_width_ns > 0.0) || !bin_width_ns.is_finite() {
            return Err(Error::domain("bin width must be positive"));
        }
        Ok(Histogram {
            bin_width_ns,
            lo_ns,
            counts: vec![0; bins],
            total_pairs: 0,
            out_of_range: 0,
        })
    }

    pub fn hi_ns(&self) -> f64 {
        self.lo_ns + self.bin_width_ns * self.counts.len() as f64
    }

    pub fn bin_lo(&self, i: usize) -> f64 {
        self.lo_ns + self.bin_width_ns * i as f64
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.bin_lo(i) + 0.5 * self.bin_width_ns
    }

    /// Index of the bin containing `x`, if any.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let k = ((x - self.lo_ns) / self.bin_width_ns).floor();
        (k >= 0.0 && k < self.counts.len() as f64).then_some(k as usize)
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        self.total_pairs += 1;
        match self.bin_of(x) {
            Some(i) => self.counts[i] += 1,
            None => self.out_of_range += 1,
        }
    }

    /// Sums two histograms with identical binning.
    pub fn merge(mut self, other: Histogram) -> Histogram {
        debug_assert_eq!(self.counts.len(), other.counts.len());
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_pairs += other.total_pairs;
        self.out_of_range += other.out_of_range;
        self
    }

    fn empty_like(&self) -> Histogram {
        Histogram {
            counts: vec![0; self.counts.len()],
            total_pairs: 0,
            out_of_range: 0,
            ..*self
        }
    }

    pub fn in_range(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts as a probability density per ns over the in-range pairs.
    pub fn normalized(&self) -> Vec<f64> {
        let n = self.in_range();
        if n == 0 {
            return vec![0.0; self.counts.len()];
        }
        let scale = 1.0 / (n as f64 * self.bin_width_ns);
        self.counts.iter().map(|&c| c as f64 * scale).collect()
    }
}

/// Number of anchor events handled per parallel work item.
const PAIR_CHUNK: usize = 4096;

/// Histogram of forward differences `t_j - t_i` (`j > i`, difference at
/// most `max_lag_ns`) over all pairs of clicks in `channel`.
pub fn autocorr_hist(
    log: &EventLog,
    channel: Channel,
    bin_width_ns: f64,
    max_lag_ns: f64,
) -> Result<Histogram> {
    autocorr_times(&log.channel_times(channel), bin_width_ns, max_lag_ns)
}

/// [`autocorr_hist`] on an ascending time series.
pub fn autocorr_times(times: &[f64], bin_width_ns: f64, max_lag_ns: f64) -> Result<Histogram> {
    if !(max_lag_ns >= 0.0) {
        return Err(Error::domain("max lag must be non-negative"));
    }
    let bins = (max_lag_ns / bin_width_ns.max(f64::MIN_POSITIVE)).ceil() as usize;
    let proto = Histogram::new(0.0, bin_width_ns, bins)?;
    let chunks = times.len().div_ceil(PAIR_CHUNK);
    Ok(par::map_reduce(
        Execution::Parallel,
        chunks,
        |c| {
            let mut h = proto.empty_like();
            let end = ((c + 1) * PAIR_CHUNK).min(times.len());
            for i in c * PAIR_CHUNK..end {
                let ti = times[i];
                for &tj in &times[i + 1..] {
                    let d = tj - ti;
                    if d > max_lag_ns {
                        break;
                    }
                    h.add(d);
                }
            }
            h
        },
        || proto.empty_like(),
        Histogram::merge,
    ))
}

/// Histogram of signed lags `t2 - t1` over all cross-channel pairs with
/// `|t2 - t1| <= window_ns`. Bin edges are aligned to zero lag.
pub fn crosscorr_hist(log: &EventLog, bin_width_ns: f64, window_ns: f64) -> Result<Histogram> {
    crosscorr_times(
        &log.channel_times(Channel::One),
        &log.channel_times(Channel::Two),
        bin_width_ns,
        window_ns,
    )
}

pub fn crosscorr_times(t1: &[f64], t2: &[f64], bin_width_ns: f64, window_ns: f64) -> Result<Histogram> {
    if !(window_ns >= 0.0 && window_ns.is_finite()) {
        return Err(Error::domain("window must be finite and non-negative"));
    }
    if !(bin_width_ns > 0.0) {
        return Err(Error::domain("bin width must be positive"));
    }
    let half = (window_ns / bin_width_ns).ceil() as usize;
    let proto = Histogram::new(-(half as f64) * bin_width_ns, bin_width_ns, 2 * half)?;
    let chunks = t1.len().div_ceil(PAIR_CHUNK);
    Ok(par::map_reduce(
        Execution::Parallel,
        chunks,
        |c| {
            let mut h = proto.empty_like();
            let end = ((c + 1) * PAIR_CHUNK).min(t1.len());
            for &a in &t1[c * PAIR_CHUNK..end] {
                let start = t2.partition_point(|&b| b < a - window_ns);
                for &b in &t2[start..] {
                    let d = b - a;
                    if d > window_ns {
                        break;
                    }
                    h.add(d);
                }
            }
            h
        },
        || proto.empty_like(),
        Histogram::merge,
    ))
}

/// Cross-channel pairs within `+-window_ns`, divided by the total number of
/// clicks in both channels. Zero for an empty log.
pub fn coincidence_fraction(log: &EventLog, window_ns: f64) -> Result<f64> {
    let t1 = log.channel_times(Channel::One);
    let t2 = log.channel_times(Channel::Two);
    let singles = t1.len() + t2.len();
    if singles == 0 {
        return Ok(0.0);
    }
    // Only the pair count matters; one bin spanning the whole window.
    let h = crosscorr_times(&t1, &t2, 2.0 * window_ns.max(f64::MIN_POSITIVE), window_ns)?;
    Ok(h.total_pairs as f64 / singles as f64)
}

/// Height of the zero-lag bins of a cross-correlation histogram against
/// the bins farther than `exclude_ns` from zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroLagPeak {
    /// Largest count among bins touching zero lag.
    pub peak: u64,
    pub baseline_mean: f64,
    /// Spread of the baseline bins: the larger of their sample standard
    /// deviation and the Poisson value `sqrt(mean)`, at least 1.
    pub baseline_sd: f64,
    pub sigmas: f64,
}

pub fn zero_lag_peak(hist: &Histogram, exclude_ns: f64) -> Result<ZeroLagPeak> {
    let n = hist.counts.len();
    let peak = (0..n)
        .filter(|&i| hist.bin_lo(i) <= 0.0 && hist.bin_lo(i) + hist.bin_width_ns >= 0.0)
        .map(|i| hist.counts[i])
        .max()
        .ok_or_else(|| Error::domain("histogram does not cover zero lag"))?;
    let base: Vec<f64> = (0..n)
        .filter(|&i| {
            hist.bin_lo(i) >= exclude_ns || hist.bin_lo(i) + hist.bin_width_ns <= -exclude_ns
        })
        .map(|i| hist.counts[i] as f64)
        .collect();
    if base.len() < 2 {
        return Err(Error::domain("too few baseline bins outside the excluded range"));
    }
    let k = base.len() as f64;
    let mean = base.iter().sum::<f64>() / k;
    let sd = (base.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    let spread = sd.max(mean.sqrt()).max(1.0);
    Ok(ZeroLagPeak {
        peak,
        baseline_mean: mean,
        baseline_sd: spread,
        sigmas: (peak as f64 - mean) / spread,
    })
}

/// Result of a flatness test on histogram bins.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatnessTest {
    pub bins: usize,
    pub mean: f64,
    pub chi2: f64,
    pub dof: usize,
    /// Global chi-square p-value, informational.
    pub p_value: f64,
    pub max_abs_z: f64,
    /// Bonferroni-corrected two-sided critical |z|.
    pub z_critical: f64,
    pub passes: bool,
}

/// Tests the bins starting at or after `from_ns` (and ending at or before
/// `to_ns`) for a constant Poisson mean.
///
/// Each bin contributes a one-degree-of-freedom chi-square term `z^2`; the
/// histogram passes when every bin stays below the critical value at
/// significance `alpha` with a Bonferroni correction over the bins.
pub fn flatness_test(hist: &Histogram, from_ns: f64, to_ns: f64, alpha: f64) -> Result<FlatnessTest> {
    let sel: Vec<f64> = (0..hist.counts.len())
        .filter(|&i| hist.bin_lo(i) >= from_ns && hist.bin_lo(i) + hist.bin_width_ns <= to_ns + 1e-9)
        .map(|i| hist.counts[i] as f64)
        .collect();
    let k = sel.len();
    if k < 2 {
        return Err(Error::domain("flatness test needs at least two bins"));
    }
    let mean = sel.iter().sum::<f64>() / k as f64;
    if mean <= 0.0 {
        return Err(Error::domain("flatness test on empty bins"));
    }
    let zs: Vec<f64> = sel.iter().map(|c| (c - mean) / mean.sqrt()).collect();
    let chi2: f64 = zs.iter().map(|z| z * z).sum();
    let dof = k - 1;
    let p_value = ChiSquared::new(dof as f64)
        .map(|d| d.sf(chi2))
        .unwrap_or(f64::NAN);
    let z_critical = Normal::standard().inverse_cdf(1.0 - alpha / (2.0 * k as f64));
    let max_abs_z = zs.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    Ok(FlatnessTest {
        bins: k,
        mean,
        chi2,
        dof,
        p_value,
        max_abs_z,
        z_critical,
        passes: max_abs_z <= z_critical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_log_gives_zero_histograms() {
        let log = EventLog::new();
        let a = autocorr_hist(&log, Channel::One, 4.0, 100.0).unwrap();
        assert_eq!(a.counts.len(), 25);
        assert!(a.counts.iter().all(|&c| c == 0));
        let c = crosscorr_hist(&log, 4.0, 100.0).unwrap();
        assert_eq!(c.total_pairs, 0);
        assert_eq!(coincidence_fraction(&log, 20.0).unwrap(), 0.0);
    }

    #[test]
    fn cross_bin_arithmetic() {
        let log = EventLog::from_channel_times(&[100.0], &[106.0]);
        let h = crosscorr_hist(&log, 4.0, 200.0).unwrap();
        let i = h.bin_of(6.0).unwrap();
        assert_eq!(h.bin_lo(i), 4.0);
        assert_eq!(h.counts[i], 1);
        assert_eq!(h.in_range(), 1);
        // Negative lag lands in [-8, -4).
        let log = EventLog::from_channel_times(&[106.0], &[100.0]);
        let h = crosscorr_hist(&log, 4.0, 200.0).unwrap();
        assert_eq!(h.counts[h.bin_of(-6.0).unwrap()], 1);
        assert_eq!(h.bin_lo(h.bin_of(-6.0).unwrap()), -8.0);
    }

    #[test]
    fn autocorr_counts_all_forward_pairs() {
        let t = [0.0, 10.0, 25.0, 1000.0];
        let h = autocorr_times(&t, 5.0, 30.0).unwrap();
        // Pairs within 30 ns: 10, 25, 15.
        assert_eq!(h.total_pairs, 3);
        assert_eq!(h.counts[2], 1);
        assert_eq!(h.counts[3], 1);
        assert_eq!(h.counts[5], 1);
    }

    #[test]
    fn coincidences() {
        let log = EventLog::from_channel_times(&[0.0, 1000.0, 5000.0], &[10.0, 3000.0]);
        // One pair within 20 ns out of 5 singles.
        assert!((coincidence_fraction(&log, 20.0).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let log = EventLog::new();
        assert!(autocorr_hist(&log, Channel::One, 0.0, 10.0).is_err());
        assert!(crosscorr_hist(&log, -1.0, 10.0).is_err());
        let e = |t| ClickEvent {
            t_ns: t,
            channel: Channel::One,
            kind: DetectionKind::Prompt,
        };
        assert!(EventLog::from_events(vec![e(2.0), e(1.0)]).is_err());
    }

    #[test]
    fn zero_lag_peak_significance() {
        let mut h = Histogram::new(-100.0, 4.0, 50).unwrap();
        h.counts.iter_mut().for_each(|c| *c = 100);
        h.counts[25] = 300;
        let z = zero_lag_peak(&h, 20.0).unwrap();
        assert_eq!(z.peak, 300);
        assert_eq!(z.baseline_mean, 100.0);
        assert_eq!(z.baseline_sd, 10.0);
        assert_eq!(z.sigmas, 20.0);
    }

    #[test]
    fn flatness_detects_a_spike() {
        let mut h = Histogram::new(0.0, 1.0, 50).unwrap();
        h.counts.iter_mut().for_each(|c| *c = 10_000);
        let ok = flatness_test(&h, 0.0, 50.0, 0.05).unwrap();
        assert!(ok.passes);
        h.counts[20] = 11_000;
        assert!(!flatness_test(&h, 0.0, 50.0, 0.05).unwrap().passes);
    }
}
