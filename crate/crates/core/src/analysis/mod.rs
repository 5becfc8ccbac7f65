//! Statistical measurements on simulated or recorded data: output bit
//! statistics, click correlation histograms, exponential-fit residuals and
//! feedback spectra.

pub mod bits;
pub mod events;
pub mod fit;
pub mod spectrum;

pub use bits::{bit_stats, sigma_threshold, tally, BitSink, BitStream, BitTally, StreamStats};
pub use events::{
    autocorr_hist, autocorr_times, coincidence_fraction, crosscorr_hist, crosscorr_times,
    flatness_test, zero_lag_peak, ClickEvent, EventLog, FlatnessTest, Histogram, ZeroLagPeak,
};
pub use fit::{exp_fit_residuals, ExpFit};
pub use spectrum::{periodogram, periodogram_trace, Resonance, Spectrum};
