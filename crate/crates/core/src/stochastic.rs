//! Physical randomness model: per-cycle click sampling for the two
//! detectors, plus the scalar formulas that feed it.
//!
//! A cycle opens with a light pulse. Each detector clicks independently
//! with its own probability; a click is either prompt (inside the valid
//! acceptance window) or late. Prompt clicks can seed a backflash click in
//! the idle neighbour, and with afterpulsing enabled every click leaves a
//! decaying extra-click hazard behind.

use std::f64::consts::PI;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, SimRng};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Validity range of the dark-rate law; temperatures outside are clamped.
pub const DARK_RATE_TEMP_RANGE_C: (f64, f64) = (-40.0, 100.0);

/// Half-width of the uniform timing jitter of a backflash-induced click, ns.
pub const BACKFLASH_JITTER_NS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticalParams {
    pub center_wavelength_m: f64,
    /// Half of the emission FWHM.
    pub half_bandwidth_m: f64,
    /// Mean photon number per pulse reaching detector 1.
    pub mean_photons_ch1: f64,
    pub mean_photons_ch2: f64,
}

impl Default for OpticalParams {
    fn default() -> Self {
        // 820 nm LED, 40 nm FWHM.
        OpticalParams {
            center_wavelength_m: 820e-9,
            half_bandwidth_m: 20e-9,
            mean_photons_ch1: 2.0,
            mean_photons_ch2: 2.0,
        }
    }
}

impl OpticalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.center_wavelength_m > 0.0 && self.half_bandwidth_m > 0.0) {
            return Err(Error::domain("wavelengths must be strictly positive"));
        }
        if self.half_bandwidth_m >= self.center_wavelength_m {
            return Err(Error::domain(
                "half bandwidth must be smaller than the center wavelength",
            ));
        }
        if !(self.mean_photons_ch1 >= 0.0 && self.mean_photons_ch2 >= 0.0) {
            return Err(Error::domain("mean photon numbers must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorParams {
    /// Relative efficiency of detector 1, multiplies the bias-dependent
    /// efficiency curve.
    pub efficiency_ch1: f64,
    pub efficiency_ch2: f64,
    /// Dark rate per detector at 0 °C, Hz.
    pub dark_rate_amplitude_hz: f64,
    /// Exponential temperature coefficient of the dark rate, 1/°C.
    pub dark_rate_exponent_per_c: f64,
    pub late_click_prob: f64,
    pub backflash_prob: f64,
    pub afterpulse_prob: f64,
    pub afterpulse_decay_s: f64,
    pub detection_window_s: f64,
}

/// Dark rate per detector at 70 °C under the default law.
pub const DEFAULT_DARK_RATE_AT_70C_HZ: f64 = 500.0;
/// The default dark rate doubles every this many degrees.
pub const DEFAULT_DARK_RATE_DOUBLING_C: f64 = 8.0;

/// Backflash probability that reproduces a 0.007 % cross-channel
/// coincidence fraction, found by the calibration scan in
/// [`crate::validation`].
pub const DEFAULT_BACKFLASH_PROB: f64 = 7.3e-5;

impl Default for DetectorParams {
    fn default() -> Self {
        let exponent = std::f64::consts::LN_2 / DEFAULT_DARK_RATE_DOUBLING_C;
        DetectorParams {
            efficiency_ch1: 1.0,
            efficiency_ch2: 1.0,
            dark_rate_amplitude_hz: DEFAULT_DARK_RATE_AT_70C_HZ * (-exponent * 70.0).exp(),
            dark_rate_exponent_per_c: exponent,
            late_click_prob: 0.02,
            backflash_prob: DEFAULT_BACKFLASH_PROB,
            afterpulse_prob: 0.0,
            afterpulse_decay_s: 200e-9,
            detection_window_s: 25e-9,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} = {v} is outside [0, 1]")))
            }
        };
        let prob = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} = {v} is outside [0, 1)")))
            }
        };
        unit("efficiency_ch1", self.efficiency_ch1)?;
        unit("efficiency_ch2", self.efficiency_ch2)?;
        prob("late_click_prob", self.late_click_prob)?;
        prob("backflash_prob", self.backflash_prob)?;
        prob("afterpulse_prob", self.afterpulse_prob)?;
        if !(self.dark_rate_amplitude_hz >= 0.0) {
            return Err(Error::domain("dark_rate_amplitude_hz must be >= 0"));
        }
        if !self.dark_rate_exponent_per_c.is_finite() {
            return Err(Error::domain("dark_rate_exponent_per_c must be finite"));
        }
        if !(self.detection_window_s > 0.0) {
            return Err(Error::domain("detection_window_s must be > 0"));
        }
        if self.afterpulse_prob > 0.0 && !(self.afterpulse_decay_s > 0.0) {
            return Err(Error::domain("afterpulse_decay_s must be > 0"));
        }
        Ok(())
    }
}

/// Cycle timing constants, ns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Timing {
    pub pulse_ns: u32,
    /// Delay to the next pulse when no prompt click occurred.
    pub empty_delay_ns: u32,
    /// Delay to the next pulse after a prompt click (quench and recovery).
    pub click_delay_ns: u32,
}

impl Default for Timing {
    fn default() -> Self {
        Timing {
            pulse_ns: 12,
            empty_delay_ns: 50,
            click_delay_ns: 150,
        }
    }
}

impl Timing {
    pub fn validate(&self) -> Result<()> {
        if self.empty_delay_ns == 0 || self.click_delay_ns == 0 {
            return Err(Error::domain("cycle delays must be positive"));
        }
        if self.click_delay_ns < self.empty_delay_ns {
            return Err(Error::domain("click delay must be >= empty delay"));
        }
        Ok(())
    }
}

/// Sinusoidal modulation of detection efficiency (off when amplitude is 0).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Modulation {
    pub amplitude: f64,
    pub frequency_hz: f64,
}

impl Modulation {
    pub fn is_active(&self) -> bool {
        self.amplitude != 0.0
    }

    /// Multiplicative factor `1 + a sin(2 pi f t)` at time `t_ns`.
    #[inline]
    pub fn factor(&self, t_ns: f64) -> f64 {
        1.0 + self.amplitude * (2.0 * PI * self.frequency_hz * t_ns * 1e-9).sin()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.amplitude.abs()) || !(self.frequency_hz >= 0.0) {
            return Err(Error::domain(
                "modulation amplitude must be in (-1, 1) and frequency >= 0",
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Scalar formulas
// ---------------------------------------------------------------------------

/// Coherence time `lambda^2 / (2 pi c dlambda)` of the source, seconds.
pub fn coherence_time(optics: &OpticalParams) -> Result<f64> {
    optics.validate()?;
    let l = optics.center_wavelength_m;
    Ok(l * l / (2.0 * PI * SPEED_OF_LIGHT * optics.half_bandwidth_m))
}

/// Dark count rate of one detector at `temperature_c`, Hz.
pub fn dark_rate(temperature_c: f64, params: &DetectorParams) -> f64 {
    let t = temperature_c.clamp(DARK_RATE_TEMP_RANGE_C.0, DARK_RATE_TEMP_RANGE_C.1);
    params.dark_rate_amplitude_hz * (params.dark_rate_exponent_per_c * t).exp()
}

/// Poissonian click probability in one detection window.
pub fn click_prob(mean_photons: f64, efficiency: f64, dark_rate_hz: f64, window_s: f64) -> f64 {
    let mean = mean_photons * efficiency + dark_rate_hz * window_s;
    -(-mean).exp_m1()
}

// ---------------------------------------------------------------------------
// Cycle sampling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    One,
    Two,
}

impl Channel {
    pub fn index(self) -> usize {
        match self {
            Channel::One => 0,
            Channel::Two => 1,
        }
    }

    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<Channel> {
        match n {
            1 => Some(Channel::One),
            2 => Some(Channel::Two),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum DetectionKind {
    #[default]
    None,
    Prompt,
    Late,
}

/// What produced a click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClickOrigin {
    #[default]
    Light,
    Dark,
    Backflash,
    Afterpulse,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelClick {
    pub kind: DetectionKind,
    pub origin: ClickOrigin,
    /// Click time relative to the cycle start, ns (only filled when timing is
    /// sampled).
    pub offset_ns: f64,
}

impl ChannelClick {
    #[inline]
    pub fn clicked(&self) -> bool {
        self.kind != DetectionKind::None
    }

    #[inline]
    pub fn is_prompt(&self) -> bool {
        self.kind == DetectionKind::Prompt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CycleOutcome {
    pub t_start_ns: u64,
    pub det: [ChannelClick; 2],
    pub cycle_duration_ns: u32,
}

impl CycleOutcome {
    pub fn det1(&self) -> DetectionKind {
        self.det[0].kind
    }

    pub fn det2(&self) -> DetectionKind {
        self.det[1].kind
    }

    #[inline]
    pub fn both_prompt(&self) -> bool {
        self.det[0].is_prompt() && self.det[1].is_prompt()
    }

    #[inline]
    pub fn any_prompt(&self) -> bool {
        self.det[0].is_prompt() || self.det[1].is_prompt()
    }

    /// The channel with the only prompt click, if exactly one detector
    /// clicked promptly.
    #[inline]
    pub fn single_prompt(&self) -> Option<Channel> {
        match (self.det[0].is_prompt(), self.det[1].is_prompt()) {
            (true, false) => Some(Channel::One),
            (false, true) => Some(Channel::Two),
            _ => None,
        }
    }
}

/// Per-channel click probability for one cycle, split so that dark-only
/// clicks can be attributed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClickProbability {
    pub total: f64,
    /// Probability that the detector clicks from a dark count while no
    /// photon was detected; a subset of `total`.
    pub dark_only: f64,
}

impl ClickProbability {
    /// A fixed click probability with no dark contribution.
    pub fn fixed(p: f64) -> Self {
        ClickProbability {
            total: p,
            dark_only: 0.0,
        }
    }

    /// From mean detected photon number and mean dark count number in the
    /// window; `total` agrees with [`click_prob`].
    pub fn from_means(light_mean: f64, dark_mean: f64) -> Self {
        let p_light = -(-light_mean).exp_m1();
        let p_dark = -(-dark_mean).exp_m1();
        ClickProbability {
            total: -(-(light_mean + dark_mean)).exp_m1(),
            dark_only: p_dark * (1.0 - p_light),
        }
    }
}

/// Pending afterpulse hazard per channel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AfterpulseState {
    pub hazard: [f64; 2],
}

impl AfterpulseState {
    /// Lets the hazards decay over `dt_s` with time constant `decay_s`.
    #[inline]
    pub fn decay(&mut self, factor: f64) {
        self.hazard[0] *= factor;
        self.hazard[1] *= factor;
    }
}

/// Stateful click sampler; one per simulation run.
///
/// Each channel draws from its own substream, and a third substream serves
/// backflash and timing jitter, so changing one channel's probability does
/// not perturb the other channel's sequence.
#[derive(Debug, Clone)]
pub struct ClickSampler {
    rng: [SimRng; 2],
    aux: SimRng,
    late_threshold: u64,
    backflash_threshold: u64,
    afterpulse_prob: f64,
    pulse_ns: f64,
    window_ns: f64,
    /// Sample click offsets within the cycle (needed for event logs).
    pub sample_timing: bool,
    pub afterpulse: AfterpulseState,
}

impl ClickSampler {
    pub fn new(seed: u64, params: &DetectorParams, timing: &Timing) -> Self {
        ClickSampler {
            rng: [rng::substream(seed, 0), rng::substream(seed, 1)],
            aux: rng::substream(seed, 2),
            late_threshold: rng::u64_threshold(params.late_click_prob),
            backflash_threshold: rng::u64_threshold(params.backflash_prob),
            afterpulse_prob: params.afterpulse_prob,
            pulse_ns: f64::from(timing.pulse_ns),
            window_ns: params.detection_window_s * 1e9,
            sample_timing: false,
            afterpulse: AfterpulseState::default(),
        }
    }

    pub fn afterpulsing_enabled(&self) -> bool {
        self.afterpulse_prob > 0.0
    }

    #[inline]
    fn sample_channel(&mut self, ch: usize, p: ClickProbability) -> ChannelClick {
        let rng = &mut self.rng[ch];
        let u = rng.next_u64();
        let mut click = ChannelClick::default();
        if u < rng::u64_threshold(p.total) {
            click.origin = if u < rng::u64_threshold(p.dark_only) {
                ClickOrigin::Dark
            } else {
                ClickOrigin::Light
            };
        } else if self.afterpulse.hazard[ch] > 0.0
            && rng.next_u64() < rng::u64_threshold(self.afterpulse.hazard[ch].min(1.0))
        {
            click.origin = ClickOrigin::Afterpulse;
        } else {
            return click;
        }
        click.kind = if self.late_threshold > 0 && rng.next_u64() < self.late_threshold {
            DetectionKind::Late
        } else {
            DetectionKind::Prompt
        };
        if self.sample_timing {
            let u = rng::unit_f64(self.aux.next_u64());
            click.offset_ns = match click.kind {
                DetectionKind::Late => {
                    self.pulse_ns + u * (self.window_ns - self.pulse_ns).max(0.0)
                }
                _ => u * self.pulse_ns,
            };
        }
        click
    }

    /// Samples both detectors for one cycle starting at `t_start_ns`.
    ///
    /// The returned outcome carries the cycle duration implied by `timing`:
    /// the click delay iff at least one prompt click occurred.
    pub fn sample_cycle(
        &mut self,
        p1: ClickProbability,
        p2: ClickProbability,
        t_start_ns: u64,
        timing: &Timing,
    ) -> CycleOutcome {
        let mut det = [self.sample_channel(0, p1), self.sample_channel(1, p2)];

        if self.backflash_threshold > 0 {
            for (seed, other) in [(0usize, 1usize), (1, 0)] {
                if det[seed].is_prompt()
                    && !det[other].clicked()
                    && self.aux.next_u64() < self.backflash_threshold
                {
                    let offset = if self.sample_timing {
                        let j = rng::unit_f64(self.aux.next_u64()) * 2.0 - 1.0;
                        det[seed].offset_ns + j * BACKFLASH_JITTER_NS
                    } else {
                        0.0
                    };
                    det[other] = ChannelClick {
                        kind: DetectionKind::Prompt,
                        origin: ClickOrigin::Backflash,
                        offset_ns: offset,
                    };
                }
            }
        }

        if self.afterpulse_prob > 0.0 {
            for (ch, d) in det.iter().enumerate() {
                if d.clicked() {
                    self.afterpulse.hazard[ch] += self.afterpulse_prob;
                }
            }
        }

        let any_prompt = det[0].is_prompt() || det[1].is_prompt();
        CycleOutcome {
            t_start_ns,
            det,
            cycle_duration_ns: if any_prompt {
                timing.click_delay_ns
            } else {
                timing.empty_delay_ns
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Continuous-wave click trains
// ---------------------------------------------------------------------------

/// A detector under continuous illumination: Poisson photon arrivals with
/// a non-paralysable dead time after each click, optionally with a
/// sinusoidally modulated rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousWaveSource {
    pub rate_hz: f64,
    pub deadtime_ns: f64,
    pub modulation: Modulation,
}

impl ContinuousWaveSource {
    pub fn new(rate_hz: f64, deadtime_ns: f64) -> Self {
        ContinuousWaveSource {
            rate_hz,
            deadtime_ns,
            modulation: Modulation::default(),
        }
    }

    pub fn with_modulation(mut self, modulation: Modulation) -> Self {
        self.modulation = modulation;
        self
    }

    /// Click times in `[0, duration_ns)`, ascending.
    ///
    /// Modulated rates use thinning against the peak rate.
    pub fn generate(&self, rng: &mut SimRng, duration_ns: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity((self.rate_hz * duration_ns * 1e-9 * 1.05) as usize + 16);
        if self.rate_hz <= 0.0 {
            return out;
        }
        let peak = self.rate_hz * (1.0 + self.modulation.amplitude.abs());
        let mean_gap_ns = 1e9 / peak;
        let accept_scale = self.rate_hz / peak;
        let modulated = self.modulation.is_active();
        let mut t = 0.0;
        loop {
            // Exponential gap by inversion; 1 - u avoids ln(0).
            let u = rng::unit_f64(rng.next_u64());
            t += -mean_gap_ns * (1.0 - u).ln();
            if t >= duration_ns {
                break;
            }
            if modulated {
                let v = rng::unit_f64(rng.next_u64());
                if v >= accept_scale * self.modulation.factor(t) {
                    continue;
                }
            }
            out.push(t);
            t += self.deadtime_ns;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quiet_params() -> DetectorParams {
        DetectorParams {
            late_click_prob: 0.0,
            backflash_prob: 0.0,
            afterpulse_prob: 0.0,
            ..DetectorParams::default()
        }
    }

    #[test]
    fn coherence_time_of_the_led() {
        let mut o = OpticalParams::default();
        let tau = coherence_time(&o).unwrap();
        assert_relative_eq!(tau, 1.784_831_153_674_16e-14, max_relative = 1e-12);
        assert!((tau * 1e15 - 18.0).abs() < 0.5);
        o.half_bandwidth_m = 40e-9;
        assert_relative_eq!(coherence_time(&o).unwrap(), tau / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn coherence_time_telecom_line() {
        let o = OpticalParams {
            center_wavelength_m: 1550e-9,
            half_bandwidth_m: 1e-9,
            ..OpticalParams::default()
        };
        assert_relative_eq!(
            coherence_time(&o).unwrap(),
            1.275_448_199_494_994e-12,
            max_relative = 1e-12
        );
    }

    #[test]
    fn coherence_time_rejects_bad_optics() {
        let o = OpticalParams {
            half_bandwidth_m: 900e-9,
            ..OpticalParams::default()
        };
        assert!(matches!(coherence_time(&o), Err(Error::Domain(_))));
        let o = OpticalParams {
            center_wavelength_m: 0.0,
            ..OpticalParams::default()
        };
        assert!(coherence_time(&o).is_err());
    }

    #[test]
    fn default_dark_rate_law() {
        let p = DetectorParams::default();
        let at70 = dark_rate(70.0, &p);
        assert!(2.0 * at70 <= 1000.0 + 1e-9);
        assert_relative_eq!(2.0 * at70, 1000.0, max_relative = 1e-12);
        // Doubling every 8 degrees: 1000 / 2^5 summed at 30 C.
        assert_relative_eq!(2.0 * dark_rate(30.0, &p), 31.25, max_relative = 1e-12);
        // Clamped outside the model range.
        assert_eq!(dark_rate(150.0, &p), dark_rate(100.0, &p));
        assert_eq!(dark_rate(-80.0, &p), dark_rate(-40.0, &p));
    }

    #[test]
    fn flat_dark_rate_without_exponent() {
        let p = DetectorParams {
            dark_rate_exponent_per_c: 0.0,
            dark_rate_amplitude_hz: 42.0,
            ..DetectorParams::default()
        };
        assert_eq!(dark_rate(-10.0, &p), 42.0);
        assert_eq!(dark_rate(60.0, &p), 42.0);
    }

    #[test]
    fn click_probability_limits() {
        assert_eq!(click_prob(0.0, 0.5, 0.0, 25e-9), 0.0);
        assert!(click_prob(1e3, 1.0, 0.0, 25e-9) > 1.0 - 1e-12);
        let x = -(0.72f64).ln();
        assert_relative_eq!(click_prob(x, 1.0, 0.0, 25e-9), 0.28, max_relative = 1e-12);
        assert!((click_prob(0.3285, 1.0, 0.0, 25e-9) - 0.28).abs() < 1e-4);
    }

    #[test]
    fn dark_attribution_is_consistent() {
        let p = ClickProbability::from_means(0.3, 0.01);
        assert_relative_eq!(p.total, click_prob(0.3, 1.0, 0.01, 1.0), max_relative = 1e-14);
        assert!(p.dark_only > 0.0 && p.dark_only < p.total);
        let d = ClickProbability::from_means(0.0, 0.01);
        assert_relative_eq!(d.dark_only, d.total, max_relative = 1e-14);
    }

    #[test]
    fn no_light_no_clicks() {
        let t = Timing::default();
        let mut s = ClickSampler::new(3, &quiet_params(), &t);
        for i in 0..10_000 {
            let o = s.sample_cycle(ClickProbability::fixed(0.0), ClickProbability::fixed(0.0), i, &t);
            assert_eq!((o.det1(), o.det2()), (DetectionKind::None, DetectionKind::None));
            assert_eq!(o.cycle_duration_ns, 50);
        }
    }

    #[test]
    fn certain_click_on_one_channel() {
        let t = Timing::default();
        let mut s = ClickSampler::new(3, &quiet_params(), &t);
        for i in 0..10_000 {
            let o = s.sample_cycle(ClickProbability::fixed(1.0), ClickProbability::fixed(0.0), i, &t);
            assert_eq!((o.det1(), o.det2()), (DetectionKind::Prompt, DetectionKind::None));
            assert_eq!(o.cycle_duration_ns, 150);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let t = Timing::default();
        let params = DetectorParams::default();
        let run = |seed| {
            let mut s = ClickSampler::new(seed, &params, &t);
            s.sample_timing = true;
            (0..1000)
                .map(|i| {
                    s.sample_cycle(ClickProbability::fixed(0.3), ClickProbability::fixed(0.25), i, &t)
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }

    #[test]
    fn late_clicks_and_offsets() {
        let t = Timing::default();
        let params = DetectorParams {
            late_click_prob: 0.5,
            backflash_prob: 0.0,
            ..DetectorParams::default()
        };
        let mut s = ClickSampler::new(5, &params, &t);
        s.sample_timing = true;
        let mut late = 0;
        for i in 0..20_000 {
            let o = s.sample_cycle(ClickProbability::fixed(1.0), ClickProbability::fixed(0.0), i, &t);
            let c = o.det[0];
            match c.kind {
                DetectionKind::Late => {
                    late += 1;
                    assert!((12.0..25.0).contains(&c.offset_ns));
                    assert_eq!(o.cycle_duration_ns, 50);
                }
                DetectionKind::Prompt => assert!((0.0..12.0).contains(&c.offset_ns)),
                DetectionKind::None => panic!("certain click missing"),
            }
        }
        assert!((late as f64 / 20_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn backflash_fills_idle_channel() {
        let t = Timing::default();
        let params = DetectorParams {
            late_click_prob: 0.0,
            backflash_prob: 0.999_999,
            ..DetectorParams::default()
        };
        let mut s = ClickSampler::new(9, &params, &t);
        s.sample_timing = true;
        let o = s.sample_cycle(ClickProbability::fixed(1.0), ClickProbability::fixed(0.0), 0, &t);
        assert!(o.both_prompt());
        assert_eq!(o.det[1].origin, ClickOrigin::Backflash);
        assert!((o.det[1].offset_ns - o.det[0].offset_ns).abs() <= BACKFLASH_JITTER_NS);
    }

    #[test]
    fn afterpulse_hazard_accumulates_and_decays() {
        let t = Timing::default();
        let params = DetectorParams {
            late_click_prob: 0.0,
            backflash_prob: 0.0,
            afterpulse_prob: 0.2,
            ..DetectorParams::default()
        };
        let mut s = ClickSampler::new(1, &params, &t);
        s.sample_cycle(ClickProbability::fixed(1.0), ClickProbability::fixed(0.0), 0, &t);
        assert_relative_eq!(s.afterpulse.hazard[0], 0.2);
        assert_eq!(s.afterpulse.hazard[1], 0.0);
        s.afterpulse.decay(0.5);
        assert_relative_eq!(s.afterpulse.hazard[0], 0.1);
    }

    #[test]
    fn cw_train_respects_deadtime() {
        let src = ContinuousWaveSource::new(2e6, 150.0);
        let mut rng = rng::substream(1, 0);
        let t = src.generate(&mut rng, 1e7);
        assert!(t.windows(2).all(|w| w[1] - w[0] >= 150.0));
        // Dead-time-limited rate r / (1 + r tau).
        let expected = 2e6 / (1.0 + 2e6 * 150e-9) * 1e-2;
        assert!((t.len() as f64 - expected).abs() < 5.0 * expected.sqrt());
    }
}
