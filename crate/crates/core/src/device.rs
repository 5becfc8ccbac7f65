//! The cycle engine.
//!
//! Each cycle samples both detectors, feeds the post-processing machine and
//! advances time by the click delay if any detector fired promptly, else by
//! the empty delay. A bitrate feedback loop counts valid single clicks per
//! window, integrates the error and drives the bias voltage through a
//! first-order lag; the bias sets the detection efficiency.

use serde::{Deserialize, Serialize};

use crate::analysis::bits::{BitSink, BitStream, BitTally};
use crate::analysis::events::{ClickEvent, EventLog};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::postproc::{pp_step_with, PpEvent, PpState, TransitionRule};
use crate::rng;
use crate::stochastic::{
    dark_rate, Channel, ClickOrigin, ClickProbability, ClickSampler, CycleOutcome, DetectionKind,
    DetectorParams, Modulation, OpticalParams, Timing,
};

/// Integrator gain of the default loop, volts per counted event of error.
pub const DEFAULT_INTEGRATOR_GAIN: f64 = 1.2e-3;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Logistic detection efficiency versus bias voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencyCurve {
    pub eta_max: f64,
    pub v_half_v: f64,
    pub width_v: f64,
}

impl Default for EfficiencyCurve {
    fn default() -> Self {
        EfficiencyCurve {
            eta_max: 0.6,
            v_half_v: 30.0,
            width_v: 2.0,
        }
    }
}

impl EfficiencyCurve {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_max > 0.0 && self.eta_max <= 1.0) {
            return Err(Error::config("efficiency_curve.eta_max must be in (0, 1]"));
        }
        if !(self.width_v > 0.0) || !self.v_half_v.is_finite() {
            return Err(Error::config(
                "efficiency_curve.width_v must be positive and v_half_v finite",
            ));
        }
        Ok(())
    }
}

/// `eta_max / (1 + exp(-(v - v_half) / width))`.
pub fn efficiency_curve(v_bias: f64, curve: &EfficiencyCurve) -> f64 {
    curve.eta_max / (1.0 + (-(v_bias - curve.v_half_v) / curve.width_v).exp())
}

/// Which cycles the rate counter tallies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CounterMode {
    /// Cycles with exactly one prompt click (the bit-emitting cycles).
    #[default]
    ValidSingles,
    /// Cycles with any click, prompt or late, on either detector.
    AnyClick,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackParams {
    pub enabled: bool,
    pub counter_window_s: f64,
    /// Volts of integrator change per count of error in one window.
    pub integrator_gain: f64,
    /// Time constant of the bias supply lag.
    pub ssc_time_constant_s: f64,
    pub v_min_v: f64,
    pub v_max_v: f64,
    /// Initial integrator output and bias voltage.
    pub v_initial_v: f64,
    pub counter_mode: CounterMode,
}

impl Default for FeedbackParams {
    fn default() -> Self {
        FeedbackParams {
            enabled: true,
            counter_window_s: 1e-3,
            integrator_gain: DEFAULT_INTEGRATOR_GAIN,
            ssc_time_constant_s: 0.1,
            v_min_v: 20.0,
            v_max_v: 40.0,
            v_initial_v: 28.0,
            counter_mode: CounterMode::ValidSingles,
        }
    }
}

impl FeedbackParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.counter_window_s > 0.0) || self.window_ns() == 0 {
            return Err(Error::config("feedback.counter_window_s must be positive"));
        }
        if !(self.ssc_time_constant_s > 0.0) {
            return Err(Error::config("feedback.ssc_time_constant_s must be positive"));
        }
        if !(self.v_min_v < self.v_max_v) {
            return Err(Error::config("feedback.v_min_v must be below v_max_v"));
        }
        if !(self.v_min_v..=self.v_max_v).contains(&self.v_initial_v) {
            return Err(Error::config("feedback.v_initial_v must lie in [v_min_v, v_max_v]"));
        }
        if !(self.integrator_gain >= 0.0 && self.integrator_gain.is_finite()) {
            return Err(Error::config("feedback.integrator_gain must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn window_ns(&self) -> u64 {
        (self.counter_window_s * 1e9).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostprocConfig {
    pub rule: TransitionRule,
    pub initial_s: bool,
    pub initial_bit: bool,
}

/// All parameters of a simulated generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    pub target_rate_hz: f64,
    pub temperature_c: f64,
    /// Per-cycle click probabilities that bypass the optical model, the
    /// efficiency curve and dark counts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_click_probs: Option<[f64; 2]>,
    pub optics: OpticalParams,
    pub detectors: DetectorParams,
    pub timing: Timing,
    pub feedback: FeedbackParams,
    pub efficiency_curve: EfficiencyCurve,
    pub modulation: Modulation,
    pub postproc: PostprocConfig,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            target_rate_hz: 4e6,
            temperature_c: 25.0,
            fixed_click_probs: None,
            optics: OpticalParams::default(),
            detectors: DetectorParams::default(),
            timing: Timing::default(),
            feedback: FeedbackParams::default(),
            efficiency_curve: EfficiencyCurve::default(),
            modulation: Modulation::default(),
            postproc: PostprocConfig::default(),
        }
    }
}

impl DeviceConfig {
    /// Default device with fixed click probabilities and no feedback.
    pub fn fixed(p1: f64, p2: f64) -> Self {
        let mut c = DeviceConfig {
            fixed_click_probs: Some([p1, p2]),
            ..Default::default()
        };
        c.feedback.enabled = false;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.optics.validate()?;
        self.detectors.validate()?;
        self.timing.validate()?;
        self.feedback.validate()?;
        self.efficiency_curve.validate()?;
        self.modulation.validate()?;
        if !(self.target_rate_hz > 0.0 && self.target_rate_hz.is_finite()) {
            return Err(Error::config("target_rate_hz must be positive"));
        }
        if !self.temperature_c.is_finite() {
            return Err(Error::config("temperature_c must be finite"));
        }
        if let Some(p) = self.fixed_click_probs {
            if p.iter().any(|p| !(0.0..1.0).contains(p)) {
                return Err(Error::config("fixed_click_probs must lie in [0, 1)"));
            }
        }
        Ok(())
    }

    /// Mean number of dark counts per detection window, per detector.
    pub fn dark_mean(&self) -> f64 {
        dark_rate(self.temperature_c, &self.detectors) * self.detectors.detection_window_s
    }

    /// Click probabilities of both detectors at bias `v_bias` and time
    /// `t_ns` (the time only matters when modulation is on).
    pub fn click_probabilities(&self, v_bias: f64, t_ns: f64) -> [ClickProbability; 2] {
        if let Some([p1, p2]) = self.fixed_click_probs {
            return [ClickProbability::fixed(p1), ClickProbability::fixed(p2)];
        }
        let mut eta = efficiency_curve(v_bias, &self.efficiency_curve);
        if self.modulation.is_active() {
            eta *= self.modulation.factor(t_ns);
        }
        let dark = self.dark_mean();
        let d = &self.detectors;
        [
            ClickProbability::from_means(self.optics.mean_photons_ch1 * d.efficiency_ch1 * eta, dark),
            ClickProbability::from_means(self.optics.mean_photons_ch2 * d.efficiency_ch2 * eta, dark),
        ]
    }

    /// Steady-state rate of valid single clicks at bias `v_bias`, Hz.
    pub fn single_rate_at(&self, v_bias: f64) -> f64 {
        let [p1, p2] = self.click_probabilities(v_bias, 0.0);
        single_click_rate(p1.total, p2.total, &self.timing, self.detectors.late_click_prob)
    }

    /// Steady-state rate of the events the feedback counter tallies, Hz.
    pub fn counted_rate_at(&self, v_bias: f64) -> f64 {
        match self.feedback.counter_mode {
            CounterMode::ValidSingles => self.single_rate_at(v_bias),
            CounterMode::AnyClick => {
                let [p1, p2] = self.click_probabilities(v_bias, 0.0);
                let any = 1.0 - (1.0 - p1.total) * (1.0 - p2.total);
                any / mean_cycle_ns(p1.total, p2.total, &self.timing, self.detectors.late_click_prob)
                    * 1e9
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Steady-state rates
// ---------------------------------------------------------------------------

/// Expected cycle length, ns, when clicks are late with probability `late`.
pub fn mean_cycle_ns(p1: f64, p2: f64, timing: &Timing, late: f64) -> f64 {
    let (q1, q2) = (p1 * (1.0 - late), p2 * (1.0 - late));
    let any_prompt = 1.0 - (1.0 - q1) * (1.0 - q2);
    any_prompt * f64::from(timing.click_delay_ns)
        + (1.0 - any_prompt) * f64::from(timing.empty_delay_ns)
}

/// Rate of cycles with exactly one prompt click, Hz.
///
/// A click is prompt with probability `1 - late`; a late click in the other
/// channel does not spoil a single.
pub fn single_click_rate(p1: f64, p2: f64, timing: &Timing, late: f64) -> f64 {
    let (q1, q2) = (p1 * (1.0 - late), p2 * (1.0 - late));
    let singles = q1 * (1.0 - q2) + q2 * (1.0 - q1);
    if singles == 0.0 {
        return 0.0;
    }
    singles / mean_cycle_ns(p1, p2, timing, late) * 1e9
}

// ---------------------------------------------------------------------------
// Feedback loop
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackState {
    /// Integrator output (the control voltage).
    pub integrator_value: f64,
    pub v_bias: f64,
    pub window_count: u64,
    pub window_elapsed_ns: u64,
    pub windows_closed: u64,
}

/// One trace sample, taken at the end of each counter window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackSample {
    pub t_s: f64,
    pub v_bias: f64,
    pub v_control: f64,
}

impl FeedbackState {
    pub fn new(params: &FeedbackParams) -> Self {
        FeedbackState {
            integrator_value: params.v_initial_v,
            v_bias: params.v_initial_v,
            window_count: 0,
            window_elapsed_ns: 0,
            windows_closed: 0,
        }
    }

    pub fn window_elapsed_s(&self) -> f64 {
        self.window_elapsed_ns as f64 * 1e-9
    }

    /// Accounts one cycle of `dt_ns`; returns true when this closed a
    /// counter window. Windows sit on a fixed time grid: a cycle that ends
    /// past a boundary is counted in the closing window and its excess time
    /// is carried into the next one. With feedback disabled windows still
    /// close but the voltages do not move.
    #[inline]
    pub fn step(&mut self, params: &FeedbackParams, target_rate_hz: f64, counted: bool, dt_ns: u64) -> bool {
        self.window_count += u64::from(counted);
        self.window_elapsed_ns += dt_ns;
        let window_ns = params.window_ns();
        if self.window_elapsed_ns < window_ns {
            return false;
        }
        let count = self.window_count as f64;
        self.window_count = 0;
        self.window_elapsed_ns -= window_ns;
        self.windows_closed += 1;
        if params.enabled {
            self.close_window(params, target_rate_hz, count, window_ns as f64 * 1e-9);
        }
        true
    }

    /// Applies one window of length `elapsed_s` that counted `count` events:
    /// the bias relaxes towards the integrator output held during the
    /// window, then the integrator takes the error.
    pub fn close_window(&mut self, params: &FeedbackParams, target_rate_hz: f64, count: f64, elapsed_s: f64) {
        let lag = (-elapsed_s / params.ssc_time_constant_s).exp();
        self.v_bias = self.integrator_value + (self.v_bias - self.integrator_value) * lag;
        self.v_bias = self.v_bias.clamp(params.v_min_v, params.v_max_v);
        let error = count - target_rate_hz * elapsed_s;
        self.integrator_value = (self.integrator_value - params.integrator_gain * error)
            .clamp(params.v_min_v, params.v_max_v);
    }

    /// Trace sample stamped with the nominal time of the last boundary.
    pub fn sample(&self, params: &FeedbackParams) -> FeedbackSample {
        FeedbackSample {
            t_s: (self.windows_closed * params.window_ns()) as f64 * 1e-9,
            v_bias: self.v_bias,
            v_control: self.integrator_value,
        }
    }
}

/// Value-style wrapper around [`FeedbackState::step`].
pub fn feedback_step(
    state: FeedbackState,
    params: &FeedbackParams,
    target_rate_hz: f64,
    valid_single_event: bool,
    dt_s: f64,
) -> FeedbackState {
    let mut s = state;
    s.step(params, target_rate_hz, valid_single_event, (dt_s * 1e9).round() as u64);
    s
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// How long a run lasts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunLength {
    Cycles(u64),
    Bits(u64),
    Seconds(f64),
}

/// Which optional outputs a run records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RecordOptions {
    pub events: bool,
    pub trace: bool,
}

impl RecordOptions {
    pub const NONE: RecordOptions = RecordOptions {
        events: false,
        trace: false,
    };
    pub const ALL: RecordOptions = RecordOptions {
        events: true,
        trace: true,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counters {
    pub cycles: u64,
    /// Cycles without a prompt click (they last the empty delay).
    pub empty: u64,
    /// Cycles with exactly one prompt click.
    pub single: u64,
    /// Cycles with prompt clicks on both detectors.
    pub both: u64,
    /// Cycles with at least one late click.
    pub late: u64,
    pub emitted_bits: u64,
    /// Emitted bits whose deciding click was a dark count.
    pub dark_originated_bits: u64,
    /// Emitted bits whose deciding click was induced by backflash.
    pub backflash_originated_bits: u64,
    pub afterpulse_originated_bits: u64,
    pub dark_clicks: u64,
    pub backflash_clicks: u64,
    pub afterpulse_clicks: u64,
    pub elapsed_ns: u64,
}

impl Counters {
    pub fn merge(self, o: Counters) -> Counters {
        Counters {
            cycles: self.cycles + o.cycles,
            empty: self.empty + o.empty,
            single: self.single + o.single,
            both: self.both + o.both,
            late: self.late + o.late,
            emitted_bits: self.emitted_bits + o.emitted_bits,
            dark_originated_bits: self.dark_originated_bits + o.dark_originated_bits,
            backflash_originated_bits: self.backflash_originated_bits + o.backflash_originated_bits,
            afterpulse_originated_bits: self.afterpulse_originated_bits
                + o.afterpulse_originated_bits,
            dark_clicks: self.dark_clicks + o.dark_clicks,
            backflash_clicks: self.backflash_clicks + o.backflash_clicks,
            afterpulse_clicks: self.afterpulse_clicks + o.afterpulse_clicks,
            elapsed_ns: self.elapsed_ns + o.elapsed_ns,
        }
    }

    pub fn elapsed_s(&self) -> f64 {
        self.elapsed_ns as f64 * 1e-9
    }

    pub fn bit_rate_hz(&self) -> f64 {
        if self.elapsed_ns == 0 {
            return 0.0;
        }
        self.emitted_bits as f64 / self.elapsed_s()
    }

    fn record(&mut self, out: &CycleOutcome) {
        self.cycles += 1;
        self.elapsed_ns += u64::from(out.cycle_duration_ns);
        if out.both_prompt() {
            self.both += 1;
        } else if out.any_prompt() {
            self.single += 1;
        } else {
            self.empty += 1;
        }
        if out.det.iter().any(|d| d.kind == DetectionKind::Late) {
            self.late += 1;
        }
        for d in &out.det {
            if d.clicked() {
                match d.origin {
                    ClickOrigin::Dark => self.dark_clicks += 1,
                    ClickOrigin::Backflash => self.backflash_clicks += 1,
                    ClickOrigin::Afterpulse => self.afterpulse_clicks += 1,
                    ClickOrigin::Light => {}
                }
            }
        }
    }
}

/// Everything a run produces besides the bits.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub counters: Counters,
    pub events: EventLog,
    pub feedback_trace: Vec<FeedbackSample>,
    pub final_feedback: FeedbackState,
    pub final_pp: PpState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub bits: BitStream,
    pub events: EventLog,
    pub feedback_trace: Vec<FeedbackSample>,
    pub counters: Counters,
    pub final_feedback: FeedbackState,
}

/// Runs the device, recording bits, click events and the feedback trace.
pub fn run_simulation(config: &DeviceConfig, seed: u64, length: RunLength) -> Result<SimOutput> {
    let mut bits = BitStream::new();
    let r = simulate_into(config, seed, length, RecordOptions::ALL, &mut bits)?;
    Ok(SimOutput {
        bits,
        events: r.events,
        feedback_trace: r.feedback_trace,
        counters: r.counters,
        final_feedback: r.final_feedback,
    })
}

/// Runs the device, streaming emitted bits into `sink`.
pub fn simulate_into<S: BitSink>(
    config: &DeviceConfig,
    seed: u64,
    length: RunLength,
    record: RecordOptions,
    sink: &mut S,
) -> Result<RunReport> {
    config.validate()?;
    let stop_ns = match length {
        RunLength::Seconds(s) if !(s >= 0.0 && s.is_finite()) => {
            return Err(Error::domain("run length in seconds must be finite and >= 0"));
        }
        RunLength::Seconds(s) => (s * 1e9).round() as u64,
        _ => 0,
    };
    let timing = config.timing;
    let fb_params = config.feedback;
    let target = config.target_rate_hz;
    let rule = config.postproc.rule;
    let mut sampler = ClickSampler::new(seed, &config.detectors, &timing);
    sampler.sample_timing = record.events;
    let afterpulse_decay = if sampler.afterpulsing_enabled() {
        let tau_ns = config.detectors.afterpulse_decay_s * 1e9;
        Some([
            (-f64::from(timing.empty_delay_ns) / tau_ns).exp(),
            (-f64::from(timing.click_delay_ns) / tau_ns).exp(),
        ])
    } else {
        None
    };
    let modulated = config.modulation.is_active() && config.fixed_click_probs.is_none();

    let mut fb = FeedbackState::new(&fb_params);
    let mut probs = config.click_probabilities(fb.v_bias, 0.0);
    if let RunLength::Bits(n) = length {
        if n > 0 && !can_emit(config, &probs) {
            return Err(Error::domain(
                "requested bits from a device that never clicks",
            ));
        }
    }
    let mut pp = PpState::new(config.postproc.initial_s, config.postproc.initial_bit);
    let mut counters = Counters::default();
    let mut events = EventLog::new();
    let mut trace = Vec::new();
    let mut t_ns: u64 = 0;

    loop {
        let done = match length {
            RunLength::Cycles(n) => counters.cycles >= n,
            RunLength::Bits(n) => counters.emitted_bits >= n,
            RunLength::Seconds(_) => t_ns >= stop_ns,
        };
        if done {
            break;
        }
        if modulated {
            probs = config.click_probabilities(fb.v_bias, t_ns as f64);
        }
        let out = sampler.sample_cycle(probs[0], probs[1], t_ns, &timing);
        counters.record(&out);

        let single = out.single_prompt();
        let event = match single {
            Some(Channel::One) => PpEvent::A,
            Some(Channel::Two) => PpEvent::B,
            None => PpEvent::NoneOrBoth,
        };
        let (next, bit) = pp_step_with(rule, pp, event);
        pp = next;
        if let (Some(b), Some(ch)) = (bit, single) {
            sink.push_bit(b);
            counters.emitted_bits += 1;
            match out.det[ch.index()].origin {
                ClickOrigin::Dark => counters.dark_originated_bits += 1,
                ClickOrigin::Backflash => counters.backflash_originated_bits += 1,
                ClickOrigin::Afterpulse => counters.afterpulse_originated_bits += 1,
                ClickOrigin::Light => {}
            }
        }
        if record.events {
            push_events(&mut events, &out);
        }

        let dt = out.cycle_duration_ns;
        t_ns += u64::from(dt);
        if let Some(f) = afterpulse_decay {
            sampler.afterpulse.decay(f[usize::from(out.any_prompt())]);
        }
        let counted = match fb_params.counter_mode {
            CounterMode::ValidSingles => single.is_some(),
            CounterMode::AnyClick => out.det.iter().any(|d| d.clicked()),
        };
        if fb.step(&fb_params, target, counted, u64::from(dt)) {
            if fb_params.enabled && !modulated {
                probs = config.click_probabilities(fb.v_bias, t_ns as f64);
            }
            if record.trace {
                trace.push(fb.sample(&fb_params));
            }
        }
    }

    Ok(RunReport {
        counters,
        events,
        feedback_trace: trace,
        final_feedback: fb,
        final_pp: pp,
    })
}

fn can_emit(config: &DeviceConfig, probs: &[ClickProbability; 2]) -> bool {
    let live = |p: &[ClickProbability; 2]| p.iter().any(|c| c.total > 0.0);
    live(probs)
        || config.detectors.afterpulse_prob > 0.0
        || (config.feedback.enabled
            && live(&config.click_probabilities(config.feedback.v_max_v, 0.0)))
}

fn push_events(log: &mut EventLog, out: &CycleOutcome) {
    let mut cyc: [Option<ClickEvent>; 2] = [None, None];
    for (i, d) in out.det.iter().enumerate() {
        if d.clicked() {
            cyc[i] = Some(ClickEvent {
                t_ns: out.t_start_ns as f64 + d.offset_ns,
                channel: if i == 0 { Channel::One } else { Channel::Two },
                kind: d.kind,
            });
        }
    }
    if let [Some(a), Some(b)] = cyc {
        if b.t_ns < a.t_ns {
            cyc.swap(0, 1);
        }
    }
    for e in cyc.into_iter().flatten() {
        log.push(e);
    }
}

/// Runs `segments` independent devices (seeds derived from `seed`) of
/// near-equal length totalling `total_bits`, and merges their bit tallies
/// in segment order as if the streams were concatenated.
pub fn tally_segments(
    config: &DeviceConfig,
    seed: u64,
    total_bits: u64,
    segments: usize,
    exec: Execution,
) -> Result<(BitTally, Counters)> {
    let segments = segments.max(1);
    let parts = par::map_collect(exec, segments, |i| {
        let mut t = BitTally::default();
        simulate_into(
            config,
            rng::chunk_seed(seed, i as u64),
            RunLength::Bits(par::chunk_len(total_bits, segments, i)),
            RecordOptions::NONE,
            &mut t,
        )
        .map(|r| (t, r.counters))
    });
    parts.into_iter().try_fold(
        (BitTally::default(), Counters::default()),
        |(t, c), part| part.map(|(pt, pc)| (t.merge(pt), c.merge(pc))),
    )
}

// ---------------------------------------------------------------------------
// Equilibria of the loop
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumPoint {
    pub v_bias: f64,
    pub p1: f64,
    pub p2: f64,
    pub single_rate_hz: f64,
    /// Sign of the rate slope against bias: -1, 0 or 1.
    pub slope_sign: i8,
}

/// A bias voltage at which the counted rate meets the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub v_bias: f64,
    /// Mean click probability of the two detectors there.
    pub p_mean: f64,
    /// On the rising branch of the rate curve.
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumMap {
    pub points: Vec<EquilibriumPoint>,
    pub max_rate_hz: f64,
    pub v_at_max: f64,
    pub equilibria: Vec<Equilibrium>,
    pub lock_risk: bool,
    /// Bias the loop runs away to when it cannot settle.
    pub predicted_lock_v: Option<f64>,
}

/// `n` evenly spaced bias values spanning the feedback range.
pub fn default_v_grid(params: &FeedbackParams, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|i| params.v_min_v + (params.v_max_v - params.v_min_v) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Evaluates the counted rate over `v_grid` (ascending) and locates the
/// crossings with the target rate.
pub fn equilibrium_map(config: &DeviceConfig, v_grid: &[f64]) -> Result<EquilibriumMap> {
    if v_grid.is_empty() {
        return Err(Error::domain("empty bias grid"));
    }
    if v_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("bias grid must be strictly ascending"));
    }
    let rates: Vec<f64> = v_grid.iter().map(|&v| config.counted_rate_at(v)).collect();
    let n = v_grid.len();
    let points: Vec<EquilibriumPoint> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            let d = rates[hi] - rates[lo];
            let [p1, p2] = config.click_probabilities(v_grid[i], 0.0);
            EquilibriumPoint {
                v_bias: v_grid[i],
                p1: p1.total,
                p2: p2.total,
                single_rate_hz: config.single_rate_at(v_grid[i]),
                slope_sign: if d > 0.0 { 1 } else if d < 0.0 { -1 } else { 0 },
            }
        })
        .collect();
    let (imax, &max_rate_hz) = rates
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is non-empty");

    let target = config.target_rate_hz;
    let mut equilibria = Vec::new();
    for i in 0..n.saturating_sub(1) {
        let (a, b) = (rates[i] - target, rates[i + 1] - target);
        if a == 0.0 || a.signum() != b.signum() && b != 0.0 {
            let f = if a == b { 0.0 } else { a / (a - b) };
            let v = v_grid[i] + f * (v_grid[i + 1] - v_grid[i]);
            let [p1, p2] = config.click_probabilities(v, 0.0);
            equilibria.push(Equilibrium {
                v_bias: v,
                p_mean: 0.5 * (p1.total + p2.total),
                stable: rates[i + 1] > rates[i],
            });
        }
    }
    let lock_risk = target > max_rate_hz || !equilibria.iter().any(|e| e.stable);
    Ok(EquilibriumMap {
        points,
        max_rate_hz,
        v_at_max: v_grid[imax],
        equilibria,
        lock_risk,
        predicted_lock_v: lock_risk.then_some(config.feedback.v_max_v),
    })
}

/// Deterministic loop response: windows count their expected number of
/// events instead of a random one.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResponse {
    pub t_s: Vec<f64>,
    pub v_bias: Vec<f64>,
    pub v_start: f64,
    pub v_final: f64,
    /// Largest excursion past `v_final`, as a fraction of the step size.
    pub overshoot: f64,
}

/// Starts the loop at its stable equilibrium for `target_from_hz`, switches
/// the target to `target_to_hz` and follows the bias for `duration_s`.
pub fn step_response(
    config: &DeviceConfig,
    target_from_hz: f64,
    target_to_hz: f64,
    duration_s: f64,
) -> Result<StepResponse> {
    config.validate()?;
    let grid = default_v_grid(&config.feedback, 4001);
    let stable_v = |target: f64| -> Result<f64> {
        let mut c = config.clone();
        c.target_rate_hz = target;
        equilibrium_map(&c, &grid)?
            .equilibria
            .iter()
            .find(|e| e.stable)
            .map(|e| e.v_bias)
            .ok_or_else(|| Error::domain(format!("no stable equilibrium at {target} Hz")))
    };
    let v_start = stable_v(target_from_hz)?;
    let v_final = stable_v(target_to_hz)?;
    let p = &config.feedback;
    let mut fb = FeedbackState {
        integrator_value: v_start,
        v_bias: v_start,
        window_count: 0,
        window_elapsed_ns: 0,
        windows_closed: 0,
    };
    let w = p.counter_window_s;
    let windows = (duration_s / w).ceil() as usize;
    let mut t_s = Vec::with_capacity(windows);
    let mut v = Vec::with_capacity(windows);
    const SUBSTEPS: usize = 16;
    for k in 0..windows {
        // Expected count over the window while the bias relaxes.
        let count: f64 = (0..SUBSTEPS)
            .map(|j| {
                let t = (j as f64 + 0.5) / SUBSTEPS as f64 * w;
                let vb = fb.integrator_value
                    + (fb.v_bias - fb.integrator_value) * (-t / p.ssc_time_constant_s).exp();
                config.counted_rate_at(vb) * w / SUBSTEPS as f64
            })
            .sum();
        fb.close_window(p, target_to_hz, count, w);
        t_s.push((k + 1) as f64 * w);
        v.push(fb.v_bias);
    }
    let dir = (v_final - v_start).signum();
    let step = (v_final - v_start).abs();
    let overshoot = if step > 0.0 {
        v.iter().map(|&x| (x - v_final) * dir / step).fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(StepResponse {
        t_s,
        v_bias: v,
        v_start,
        v_final,
        overshoot,
    })
}
