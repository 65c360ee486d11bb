//! Seeded Monte Carlo generation of detector time tags for a cavity-enhanced
//! photon-pair source, and synthetic cluster spectra.
//!
//! Photon statistics follow a piecewise-thermal model. Within each open gate
//! window, every spectral mode has its own partition of time into coherence
//! slots whose boundaries form a Poisson process with mean spacing
//! `coherence_slot`. A slot of length `L` emits a Bose-Einstein distributed
//! number of pairs with mean `rate·weight·L`, uniformly spread over the slot.
//! The resulting unconditioned autocorrelation of the anchored arm is exactly
//! `1 + exp(-|τ|/T)` per mode, `1 + 1/N_eff` at zero delay for several modes.
//!
//! Each pair is placed at an anchor time (the signal photon by default); the
//! partner follows with a signal-minus-idler delay drawn as the difference of
//! two exponential dwell times, which yields the two-sided exponential
//! cross-correlation with the signal decaying at `2π·Δν_s` and the idler
//! rising at `2π·Δν_i`.
//!
//! Generation runs independently per gate period with a per-period RNG stream,
//! so the output does not depend on how periods are scheduled over threads.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric, Poisson};
use rayon::prelude::*;

use crate::models::{biphoton_from_linewidths, DetectorSpec};
use crate::tagstream::{ChannelRole, GateSpec, TagStream, TimeTag};
use crate::{Error, Result, PS_PER_S};

/// Number of channels emitted by the simulator (signal-A, signal-B, idler, idler-B).
pub const SIM_CHANNELS: u32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhotonStatistics {
    /// Bose-Einstein pair numbers per coherence slot.
    Thermal,
    /// Independent pairs (coherent-like surrogate).
    Poisson,
}

/// Which photon of a pair carries the slot statistics exactly; the other one
/// is displaced by the signal-idler delay.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThermalAnchor {
    Signal,
    Idler,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceParams {
    pub pump_power_mw: f64,
    /// Intracavity creation probability per reference window per mW for a mode
    /// of unit weight.
    pub creation_prob: f64,
    /// Reference window for `creation_prob`, s.
    pub reference_window_s: f64,
    pub dnu_s: f64,
    pub dnu_i: f64,
    /// Relative pair rates of the cluster modes; index 0 is the central mode,
    /// then +1, -1, +2, -2, ... free spectral ranges.
    pub mode_weights: Vec<f64>,
    pub fsr_hz: f64,
    pub eta_esc_s: f64,
    pub eta_esc_i: f64,
    /// Cavity-to-detector transmission of the signal arm.
    pub eta_t_s: f64,
    /// Cavity-to-detector transmission of the idler arm, excluding the filter cavity.
    pub eta_t_i: f64,
    /// Idler filter transmission for the central mode.
    pub filter_central: f64,
    /// Idler filter transmission for every other mode.
    pub filter_side: f64,
    pub signal_a: DetectorSpec,
    pub signal_b: DetectorSpec,
    pub idler_a: DetectorSpec,
    pub idler_b: DetectorSpec,
    /// Fraction of signal photons routed to signal-A.
    pub signal_split: f64,
    /// Fraction of idler photons routed to the idler channel (rest to idler-B).
    pub idler_split: f64,
    /// Uncorrelated idler-arm clicks while the gate is open, Hz, pump independent.
    pub idler_background_hz: f64,
    /// Uncorrelated idler-arm clicks proportional to pump power, Hz/mW.
    pub idler_noise_hz_per_mw: f64,
    pub gate: GateSpec,
    /// Suppress dark counts while the gate is closed.
    pub gate_darks: bool,
    /// Mean coherence slot length, s. `None` selects `1/(π·Δν_bi)`.
    pub coherence_slot_s: Option<f64>,
    pub statistics: PhotonStatistics,
    pub anchor: ThermalAnchor,
    /// When false the partner photon is placed independently of its anchor.
    pub correlated: bool,
}

impl SourceParams {
    /// Calibrated source and detection chain at 1 mW of pump power, with the
    /// signal arm on a single detector.
    ///
    /// Escape efficiency, idler background and cluster width are set so that
    /// the simulated heralding efficiency, coincidence slope and
    /// cross-correlation versus power land on the measured values.
    pub fn calibrated() -> Self {
        let fsr_hz = 423e6;
        SourceParams {
            pump_power_mw: 1.0,
            creation_prob: 2.016e-3,
            reference_window_s: 400e-9,
            dnu_s: 3.7e6,
            dnu_i: 2.3e6,
            mode_weights: gaussian_cluster(9, 1.6e9, fsr_hz),
            fsr_hz,
            eta_esc_s: 0.615,
            eta_esc_i: 0.74,
            eta_t_s: 0.71,
            eta_t_i: 0.70,
            filter_central: 0.5,
            filter_side: 0.0,
            signal_a: DetectorSpec::new(0.62, 30.0),
            signal_b: DetectorSpec::new(0.62, 50.0),
            idler_a: DetectorSpec::new(0.10, 18.0),
            idler_b: DetectorSpec::new(0.10, 192.0),
            signal_split: 1.0,
            idler_split: 1.0,
            idler_background_hz: 47.5,
            idler_noise_hz_per_mw: 0.0,
            gate: GateSpec::chop_30hz(0.5).expect("valid gate"),
            gate_darks: true,
            coherence_slot_s: None,
            statistics: PhotonStatistics::Thermal,
            anchor: ThermalAnchor::Signal,
            correlated: true,
        }
    }

    /// A lossless, noiseless, single-mode, ungated source.
    pub fn ideal_single_mode(pair_rate_hz: f64) -> Self {
        let window = 400e-9;
        SourceParams {
            pump_power_mw: 1.0,
            creation_prob: pair_rate_hz * window,
            reference_window_s: window,
            mode_weights: vec![1.0],
            eta_esc_s: 1.0,
            eta_esc_i: 1.0,
            eta_t_s: 1.0,
            eta_t_i: 1.0,
            filter_central: 1.0,
            signal_a: DetectorSpec::new(1.0, 0.0),
            signal_b: DetectorSpec::new(1.0, 0.0),
            idler_a: DetectorSpec::new(1.0, 0.0),
            idler_b: DetectorSpec::new(1.0, 0.0),
            idler_background_hz: 0.0,
            gate: GateSpec::always_open(1_000_000_000_000),
            ..Self::calibrated()
        }
    }

    /// Intracavity pair rate of a unit-weight mode, Hz.
    pub fn pair_rate(&self) -> f64 {
        self.creation_prob * self.pump_power_mw / self.reference_window_s
    }

    pub fn coherence_slot(&self) -> f64 {
        self.coherence_slot_s.unwrap_or_else(|| {
            let tau_c = LN_2 / (2.0 * PI * self.dnu_s) + LN_2 / (2.0 * PI * self.dnu_i);
            tau_c / LN_2
        })
    }

    /// Open time within `[0, duration_s)`, s.
    pub fn live_time(&self, duration_s: f64) -> f64 {
        self.gate.live_time_ps((duration_s * PS_PER_S) as u64) as f64 / PS_PER_S
    }

    fn detector(&self, channel: u8) -> &DetectorSpec {
        match channel {
            ChannelRole::SIGNAL_A => &self.signal_a,
            ChannelRole::SIGNAL_B => &self.signal_b,
            ChannelRole::IDLER => &self.idler_a,
            _ => &self.idler_b,
        }
    }

    /// Probability that a signal photon of the source ends up as a click on
    /// signal-A and signal-B respectively.
    pub fn signal_click_probs(&self) -> (f64, f64) {
        let arm = self.eta_esc_s * self.eta_t_s;
        (
            arm * self.signal_split * self.signal_a.efficiency,
            arm * (1.0 - self.signal_split) * self.signal_b.efficiency,
        )
    }

    /// As [`Self::signal_click_probs`] for an idler photon of mode `mode`.
    pub fn idler_click_probs(&self, mode: usize) -> (f64, f64) {
        let filter = if mode == 0 { self.filter_central } else { self.filter_side };
        let arm = self.eta_esc_i * filter * self.eta_t_i;
        (
            arm * self.idler_split * self.idler_a.efficiency,
            arm * (1.0 - self.idler_split) * self.idler_b.efficiency,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("eta_esc_s", self.eta_esc_s),
            ("eta_esc_i", self.eta_esc_i),
            ("eta_t_s", self.eta_t_s),
            ("eta_t_i", self.eta_t_i),
            ("filter_central", self.filter_central),
            ("filter_side", self.filter_side),
            ("signal_split", self.signal_split),
            ("idler_split", self.idler_split),
        ];
        for (name, v) in probs {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(format!("{name} = {v} outside [0, 1]")));
            }
        }
        for d in [&self.signal_a, &self.signal_b, &self.idler_a, &self.idler_b] {
            d.validate()?;
        }
        if self.mode_weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite())
            || !self.mode_weights.iter().any(|&w| w > 0.0)
        {
            return Err(Error::param("mode weights must be non-negative with at least one positive"));
        }
        if !(self.dnu_s > 0.0 && self.dnu_i > 0.0) {
            return Err(Error::param("linewidths must be positive"));
        }
        if !(self.pump_power_mw >= 0.0) || !(self.creation_prob >= 0.0) {
            return Err(Error::param("pump power and creation probability must be non-negative"));
        }
        if !(self.reference_window_s > 0.0) {
            return Err(Error::param("reference window must be positive"));
        }
        if !(self.coherence_slot() > 0.0) {
            return Err(Error::param("coherence slot must be positive"));
        }
        if !(self.idler_background_hz >= 0.0 && self.idler_noise_hz_per_mw >= 0.0) {
            return Err(Error::param("idler noise rates must be non-negative"));
        }
        Ok(())
    }
}

/// `(Σw)² / Σw²`; equals the mode count for equal weights.
pub fn effective_mode_number(mode_weights: &[f64]) -> Result<f64> {
    if mode_weights.iter().any(|&w| w < 0.0) {
        return Err(Error::param("negative mode weight"));
    }
    let s: f64 = mode_weights.iter().sum();
    let s2: f64 = mode_weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        return Err(Error::param("all mode weights are zero"));
    }
    Ok(s * s / s2)
}

/// Offset, in free spectral ranges, of the mode stored at `index`.
pub fn mode_offset(index: usize) -> i64 {
    if index == 0 {
        0
    } else if index % 2 == 1 {
        (index as i64 + 1) / 2
    } else {
        -(index as i64 / 2)
    }
}

/// Mode weights sampled from a Gaussian envelope of the given FWHM centred on
/// mode 0, in storage order.
pub fn gaussian_cluster(n_modes: usize, fwhm_hz: f64, fsr_hz: f64) -> Vec<f64> {
    (0..n_modes)
        .map(|i| {
            let f = mode_offset(i) as f64 * fsr_hz;
            (-4.0 * LN_2 * f * f / (fwhm_hz * fwhm_hz)).exp()
        })
        .collect()
}

/// Generates a time-tag stream of `duration_s` seconds.
pub fn simulate_source(params: &SourceParams, duration_s: f64, seed: u64) -> Result<TagStream> {
    params.validate()?;
    if !(duration_s > 0.0) {
        return Err(Error::param("duration must be positive"));
    }
    let duration_ps_f = duration_s * PS_PER_S;
    if duration_ps_f >= u64::MAX as f64 / 2.0 {
        return Err(Error::Overflow);
    }
    let duration_ps = duration_ps_f as u64;
    let gate = params.gate;
    let period = gate.period_ps();
    let n_chunks = duration_ps.div_ceil(period).max(1) + 1;

    let chunks: Vec<Vec<TimeTag>> = (0..n_chunks)
        .into_par_iter()
        .map(|k| generate_chunk(params, k, duration_ps, seed))
        .collect();

    let mut tags: Vec<TimeTag> = chunks.into_iter().flatten().collect();
    tags.par_sort_unstable();
    tags.dedup_by(|a, b| a.time == b.time && a.channel == b.channel);
    apply_dead_time(params, &mut tags);
    TagStream::from_unsorted(1, tags, SIM_CHANNELS)
}

/// Chunk `k` covers the gate period starting at `phase + (k - 1)·period`.
fn generate_chunk(params: &SourceParams, k: u64, duration_ps: u64, seed: u64) -> Vec<TimeTag> {
    let gate = params.gate;
    let period = gate.period_ps() as i128;
    let start = gate.phase_ps() as i128 + (k as i128 - 1) * period;
    let end = start + period;
    let c_start = start.max(0);
    let c_end = end.min(duration_ps as i128);
    if c_end <= c_start {
        return Vec::new();
    }
    let open_start = c_start;
    let open_end = (start + gate.open_len_ps() as i128).min(c_end);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    let mut out = Vec::new();
    let emit = |t: i128, ch: u8, out: &mut Vec<TimeTag>| {
        if t >= 0 && t < duration_ps as i128 {
            out.push(TimeTag::new(t as u64, ch));
        }
    };

    if open_end > open_start {
        let span_s = (open_end - open_start) as f64 / PS_PER_S;
        let base = open_start;
        let pair_rate = params.pair_rate();
        for (m, &w) in params.mode_weights.iter().enumerate() {
            let (sa, sb) = params.signal_click_probs();
            let (ia, ib) = params.idler_click_probs(m);
            // only pairs with at least one click are generated; independent
            // thinning keeps the per-slot counts Bose-Einstein
            let keep = 1.0 - (1.0 - sa - sb) * (1.0 - ia - ib);
            let rate = pair_rate * w * keep;
            if rate <= 0.0 {
                continue;
            }
            let anchors = match params.statistics {
                PhotonStatistics::Thermal => thermal_events(&mut rng, rate, params.coherence_slot(), span_s),
                PhotonStatistics::Poisson => poisson_events(&mut rng, rate, span_s),
            };
            for a in anchors {
                let (s_ch, i_ch) = if rng.gen::<f64>() * keep < sa + sb {
                    let s = if rng.gen::<f64>() * (sa + sb) < sa {
                        ChannelRole::SIGNAL_A
                    } else {
                        ChannelRole::SIGNAL_B
                    };
                    let u: f64 = rng.gen();
                    let i = if u < ia {
                        Some(ChannelRole::IDLER)
                    } else if u < ia + ib {
                        Some(ChannelRole::IDLER_B)
                    } else {
                        None
                    };
                    (Some(s), i)
                } else {
                    let i = if rng.gen::<f64>() * (ia + ib) < ia {
                        ChannelRole::IDLER
                    } else {
                        ChannelRole::IDLER_B
                    };
                    (None, Some(i))
                };
                let partner = if params.correlated {
                    let d = pair_delay(&mut rng, params.dnu_s, params.dnu_i);
                    match params.anchor {
                        ThermalAnchor::Signal => a - d,
                        ThermalAnchor::Idler => a + d,
                    }
                } else {
                    rng.gen::<f64>() * span_s
                };
                let (ts, ti) = match params.anchor {
                    ThermalAnchor::Signal => (a, partner),
                    ThermalAnchor::Idler => (partner, a),
                };
                if let Some(ch) = s_ch {
                    emit(base + to_ps(ts), ch, &mut out);
                }
                if let Some(ch) = i_ch {
                    emit(base + to_ps(ti), ch, &mut out);
                }
            }
        }

        let noise = params.idler_background_hz + params.idler_noise_hz_per_mw * params.pump_power_mw;
        for t in poisson_events(&mut rng, noise, span_s) {
            let ch = if rng.gen::<f64>() < params.idler_split {
                ChannelRole::IDLER
            } else {
                ChannelRole::IDLER_B
            };
            emit(base + to_ps(t), ch, &mut out);
        }
    }

    let (d_start, d_end) = if params.gate_darks {
        (open_start, open_end)
    } else {
        (c_start, c_end)
    };
    if d_end > d_start {
        let span_s = (d_end - d_start) as f64 / PS_PER_S;
        for ch in 0..SIM_CHANNELS as u8 {
            let rate = params.detector(ch).dark_rate;
            for t in poisson_events(&mut rng, rate, span_s) {
                emit(d_start + to_ps(t), ch, &mut out);
            }
        }
    }
    out
}

fn to_ps(t_s: f64) -> i128 {
    (t_s * PS_PER_S).round() as i128
}

/// Signal-minus-idler emission delay, s.
fn pair_delay<R: Rng>(rng: &mut R, dnu_s: f64, dnu_i: f64) -> f64 {
    let xs = Exp::new(2.0 * PI * dnu_s).unwrap().sample(rng);
    let xi = Exp::new(2.0 * PI * dnu_i).unwrap().sample(rng);
    xs - xi
}

fn poisson_events<R: Rng>(rng: &mut R, rate: f64, span_s: f64) -> Vec<f64> {
    let mean = rate * span_s;
    if !(mean > 0.0) {
        return Vec::new();
    }
    let n = Poisson::new(mean).unwrap().sample(rng) as usize;
    (0..n).map(|_| rng.gen::<f64>() * span_s).collect()
}

/// Event times of a thermal source of mean rate `rate` on `[0, span)`.
///
/// Slots are only materialised around candidate points of a rate-`rate`
/// Poisson process. A slot holding at least one candidate (probability
/// `1 - e^{-x}`, `x = rate·L`) is kept with probability
/// `x / ((1 + x)(1 - e^{-x}))`, which yields the Bose-Einstein occupation
/// probability `x / (1 + x)` per slot.
fn thermal_events<R: Rng>(rng: &mut R, rate: f64, mean_slot: f64, span: f64) -> Vec<f64> {
    let candidate = Exp::new(rate).unwrap();
    let boundary = Exp::new(1.0 / mean_slot).unwrap();
    let mut out = Vec::new();
    let mut t = 0.0;
    let mut slot_end = 0.0;
    loop {
        t += candidate.sample(rng);
        if t >= span {
            break;
        }
        if t < slot_end {
            continue;
        }
        let start = (t - boundary.sample(rng)).max(slot_end);
        let end = (t + boundary.sample(rng)).min(span);
        slot_end = end;
        let len = end - start;
        let x = rate * len;
        let keep = x / ((1.0 + x) * -(-x).exp_m1());
        if rng.gen::<f64>() >= keep {
            continue;
        }
        let extra = Geometric::new(1.0 / (1.0 + x)).unwrap().sample(rng);
        for _ in 0..=extra {
            out.push(start + rng.gen::<f64>() * len);
        }
    }
    out
}

fn apply_dead_time(params: &SourceParams, tags: &mut Vec<TimeTag>) {
    let dead: Vec<u64> = (0..SIM_CHANNELS as u8)
        .map(|c| (params.detector(c).dead_time * PS_PER_S).round() as u64)
        .collect();
    if dead.iter().all(|&d| d == 0) {
        return;
    }
    let mut last: Vec<Option<u64>> = vec![None; SIM_CHANNELS as usize];
    tags.retain(|t| {
        let c = t.channel as usize;
        match last[c] {
            Some(prev) if t.time - prev < dead[c] => false,
            _ => {
                last[c] = Some(t.time);
                true
            }
        }
    });
}

/// Scanning Fabry-Perot transmission spectra of the signal photons.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumScan {
    /// Offsets from the central mode, Hz.
    pub frequencies: Vec<f64>,
    pub intensities: Vec<f64>,
    /// Spectrum of signal photons heralded through the idler filter.
    pub heralded: Vec<f64>,
}

impl SpectrumScan {
    fn value_at(series: &[f64], freqs: &[f64], f: f64) -> f64 {
        let i = match freqs.binary_search_by(|x| x.partial_cmp(&f).unwrap()) {
            Ok(i) => i,
            Err(i) => {
                if i == 0 {
                    0
                } else if i >= freqs.len() {
                    freqs.len() - 1
                } else if (freqs[i] - f).abs() < (f - freqs[i - 1]).abs() {
                    i
                } else {
                    i - 1
                }
            }
        };
        series[i]
    }

    /// FWHM of a Gaussian envelope through the mode peaks inside the scan,
    /// from a least-squares parabola on the log peak heights.
    pub fn envelope_fwhm(&self, fsr_hz: f64) -> Option<f64> {
        let (lo, hi) = (*self.frequencies.first()?, *self.frequencies.last()?);
        let kmin = (lo / fsr_hz).ceil() as i64;
        let kmax = (hi / fsr_hz).floor() as i64;
        let peak = self.intensities.iter().cloned().fold(0.0, f64::max);
        let pts: Vec<(f64, f64)> = (kmin..=kmax)
            .map(|k| {
                let f = k as f64 * fsr_hz;
                (f, Self::value_at(&self.intensities, &self.frequencies, f))
            })
            .filter(|&(_, v)| v > 1e-3 * peak)
            .collect();
        if pts.len() < 3 {
            return None;
        }
        // ln I = a + b f + c f², weighted by intensity
        let mut ata = nalgebra::Matrix3::<f64>::zeros();
        let mut atb = nalgebra::Vector3::<f64>::zeros();
        for &(f, v) in &pts {
            let x = f / fsr_hz;
            let row = nalgebra::Vector3::new(1.0, x, x * x);
            let w = v * v;
            ata += w * row * row.transpose();
            atb += w * row * v.ln();
        }
        let coef = ata.lu().solve(&atb)?;
        let c = coef[2];
        if c >= 0.0 {
            return None;
        }
        let sigma = (-1.0 / (2.0 * c)).sqrt() * fsr_hz;
        Some(2.0 * (2.0 * LN_2).sqrt() * sigma)
    }

    /// Largest heralded side-mode height relative to the central heralded peak.
    pub fn heralded_side_fraction(&self, fsr_hz: f64) -> f64 {
        let (lo, hi) = (self.frequencies[0], *self.frequencies.last().unwrap());
        let centre = Self::value_at(&self.heralded, &self.frequencies, 0.0);
        let kmin = (lo / fsr_hz).ceil() as i64;
        let kmax = (hi / fsr_hz).floor() as i64;
        (kmin..=kmax)
            .filter(|&k| k != 0)
            .map(|k| Self::value_at(&self.heralded, &self.frequencies, k as f64 * fsr_hz))
            .fold(0.0, f64::max)
            / centre
    }
}

/// Mode comb weighted by `mode_weights`, each mode broadened by the scanning
/// interferometer's Lorentzian of FWHM `fpi_linewidth`.
pub fn cluster_spectrum(
    params: &SourceParams,
    scan_range: (f64, f64),
    scan_resolution: f64,
    fpi_linewidth: f64,
) -> Result<SpectrumScan> {
    if !(scan_resolution > 0.0 && fpi_linewidth > 0.0 && scan_range.1 > scan_range.0) {
        return Err(Error::param("invalid scan range, resolution or linewidth"));
    }
    let extinction = if params.filter_central > 0.0 {
        params.filter_side / params.filter_central
    } else {
        0.0
    };
    let n = ((scan_range.1 - scan_range.0) / scan_resolution).floor() as usize + 1;
    let half = 0.5 * fpi_linewidth;
    let lorentz = |df: f64| 1.0 / (1.0 + (df / half).powi(2));
    let mut scan = SpectrumScan {
        frequencies: Vec::with_capacity(n),
        intensities: Vec::with_capacity(n),
        heralded: Vec::with_capacity(n),
    };
    for i in 0..n {
        let f = scan_range.0 + i as f64 * scan_resolution;
        let mut total = 0.0;
        let mut heralded = 0.0;
        for (m, &w) in params.mode_weights.iter().enumerate() {
            let l = w * lorentz(f - mode_offset(m) as f64 * params.fsr_hz);
            total += l;
            heralded += if m == 0 { l } else { l * extinction };
        }
        scan.frequencies.push(f);
        scan.intensities.push(total);
        scan.heralded.push(heralded);
    }
    Ok(scan)
}

/// Correlation time of the pair described by `params`, s.
pub fn correlation_time(params: &SourceParams) -> Result<f64> {
    Ok(biphoton_from_linewidths(params.dnu_s, params.dnu_i)?.tau_c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_modes() {
        assert_eq!(effective_mode_number(&[3.0]).unwrap(), 1.0);
        assert_eq!(effective_mode_number(&[1.0; 4]).unwrap(), 4.0);
        let n = effective_mode_number(&[1.0, 0.8, 0.8, 0.5, 0.5, 0.3, 0.3]).unwrap();
        // 4.2² / 2.96
        assert!((n - 5.95945945945946).abs() < 1e-12);
        assert!(effective_mode_number(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn mode_offsets_alternate() {
        let o: Vec<i64> = (0..7).map(mode_offset).collect();
        assert_eq!(o, vec![0, 1, -1, 2, -2, 3, -3]);
    }

    #[test]
    fn same_seed_same_stream() {
        let p = SourceParams::calibrated();
        let a = simulate_source(&p, 0.5, 11).unwrap();
        let b = simulate_source(&p, 0.5, 11).unwrap();
        let c = simulate_source(&p, 0.5, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = SourceParams::calibrated();
        p.mode_weights = vec![0.0, 0.0];
        assert!(simulate_source(&p, 1.0, 0).is_err());
        let mut p = SourceParams::calibrated();
        p.eta_t_s = 1.5;
        assert!(simulate_source(&p, 1.0, 0).is_err());
        assert!(simulate_source(&SourceParams::calibrated(), 0.0, 0).is_err());
    }

    #[test]
    fn thermal_slot_occupation_is_bose_einstein() {
        // Fixed-length slots are not used by the generator, but a single long
        // slot-free check: mean event count equals rate·span.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (rate, slot, span) = (2.0e5, 1e-6, 2.0);
        let n = thermal_events(&mut rng, rate, slot, span).len() as f64;
        let mean = rate * span;
        // variance of a thermal count over many slots ≈ mean·(1 + rate·slot)
        let sigma = (mean * (1.0 + rate * slot)).sqrt();
        assert!((n - mean).abs() < 4.0 * sigma, "{n} vs {mean}");
    }

    #[test]
    fn dead_time_removes_close_clicks() {
        let mut p = SourceParams::calibrated();
        p.signal_a.dead_time = 1e-3;
        let mut tags = vec![TimeTag::new(0, 0), TimeTag::new(500_000_000, 0), TimeTag::new(2_000_000_000, 0), TimeTag::new(600_000_000, 1)];
        tags.sort();
        apply_dead_time(&p, &mut tags);
        assert_eq!(tags.len(), 3);
        assert!(tags.iter().all(|t| t.time != 500_000_000));
    }

    #[test]
    fn single_mode_spectrum_has_one_peak() {
        let mut p = SourceParams::calibrated();
        p.mode_weights = vec![1.0];
        let s = cluster_spectrum(&p, (-2e9, 2e9), 1e6, 30e6).unwrap();
        let (imax, _) = s
            .intensities
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert!(s.frequencies[imax].abs() < 1e6);
        // no secondary maxima
        let locals = s
            .intensities
            .windows(3)
            .filter(|w| w[1] > w[0] && w[1] > w[2])
            .count();
        assert_eq!(locals, 1);
    }

    #[test]
    fn gaussian_cluster_envelope_width() {
        let mut p = SourceParams::calibrated();
        p.mode_weights = gaussian_cluster(9, 1.9e9, p.fsr_hz);
        let s = cluster_spectrum(&p, (-2.5e9, 2.5e9), 1e6, 40e6).unwrap();
        let fwhm = s.envelope_fwhm(p.fsr_hz).unwrap();
        assert!((fwhm - 1.9e9).abs() / 1.9e9 < 0.05, "{fwhm}");
        assert!(s.heralded_side_fraction(p.fsr_hz) < 0.01);
    }
}
