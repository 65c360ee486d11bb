//! Simulated measurement campaigns: the correlation summary table, pump-power
//! and window sweeps, and the escape-efficiency comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AnalysisParams, ExperimentConfig, WindowAlignment};
use crate::correlator::{
    auto_correlation_histogram, cross_correlation_histogram, heralded_autocorrelation, normalized_g2,
    window_sweep, CorrelationHistogram, FaselHistogram, G2Result, WindowPoint,
};
use crate::fitting::{fit_double_exponential, fit_symmetric_exponential, FitResult};
use crate::models::{
    cauchy_schwarz, cavity_solve_with_uncertainty, conditioned_from_unconditioned, escape_from_heralding,
    noise_bunching, pair_window_fraction, rate_budget, window_correction, CavitySolution, Measured, PowerModel,
    RateBudget, RateInputs,
};
use crate::simulator::{effective_mode_number, simulate_source, SourceParams, ThermalAnchor};
use crate::tagstream::{ChannelRole, TagStream};
use crate::{Error, Result, PS_PER_S};

/// Independent seed for sub-experiment `k`.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Signal arm on one detector.
pub fn cross_source(base: &SourceParams) -> SourceParams {
    SourceParams { signal_split: 1.0, idler_split: 1.0, ..base.clone() }
}

/// Signal arm split over two detectors.
pub fn split_source(base: &SourceParams) -> SourceParams {
    SourceParams { signal_split: 0.5, idler_split: 1.0, ..base.clone() }
}

/// Idler arm split over two detectors, signal detectors disconnected.
pub fn idler_source(base: &SourceParams, power_mw: f64) -> SourceParams {
    let mut p = base.clone();
    p.pump_power_mw = power_mw;
    p.idler_split = 0.5;
    p.anchor = ThermalAnchor::Idler;
    for d in [&mut p.signal_a, &mut p.signal_b] {
        d.efficiency = 0.0;
        d.dark_rate = 0.0;
    }
    p
}

fn range(a: &AnalysisParams) -> (i64, i64) {
    (-a.range_ps, a.range_ps)
}

/// Sum of herald-started histograms onto several signal channels.
fn combined_cross(stream: &TagStream, herald: u8, signals: &[u8], a: &AnalysisParams, live_s: f64) -> Result<CorrelationHistogram> {
    let mut total: Option<CorrelationHistogram> = None;
    for &ch in signals {
        let h = cross_correlation_histogram(stream, herald, ch, a.bin_width_ps, range(a))?;
        match &mut total {
            None => total = Some(h),
            Some(t) => {
                for (x, y) in t.counts.iter_mut().zip(&h.counts) {
                    *x += y;
                }
                t.stop_total += h.stop_total;
            }
        }
    }
    let mut h = total.ok_or_else(|| Error::param("no signal channels"))?;
    h.acquisition_ps = (live_s * PS_PER_S).round() as u64;
    Ok(h)
}

#[derive(Clone, Debug)]
pub struct CrossAnalysis {
    pub hist: CorrelationHistogram,
    pub fit: FitResult,
    /// Centre of the coincidence window, ps.
    pub center_ps: f64,
    pub g2: G2Result,
    pub point: WindowPoint,
    pub herald_rate: f64,
    pub signal_rate: f64,
}

impl CrossAnalysis {
    pub fn g2_zero(&self) -> Measured {
        Measured::new(self.fit.g2_peak(), self.fit.g2_peak_sigma())
    }
}

pub fn window_center_ps(a: &AnalysisParams, tau0_ps: f64) -> f64 {
    match a.alignment {
        WindowAlignment::Centered => tau0_ps,
        WindowAlignment::Start => a.window_ps as f64 / 2.0,
    }
}

pub fn analyze_cross(stream: &TagStream, signals: &[u8], live_s: f64, eta_det_s: f64, a: &AnalysisParams) -> Result<CrossAnalysis> {
    let hist = combined_cross(stream, ChannelRole::IDLER, signals, a, live_s)?;
    let fit = fit_double_exponential(&hist)?;
    let center_ps = window_center_ps(a, fit.tau0_ns() * 1000.0);
    let g2 = normalized_g2(&hist, a.window_ps, center_ps, a.floor)?;
    let point = window_sweep(&hist, center_ps, &[a.window_ps], eta_det_s, a.floor)?[0];
    let point = if a.subtract_accidentals {
        let acc = g2.floor * g2.window_bins as f64 / live_s;
        let rate = point.rate - acc;
        WindowPoint {
            rate,
            eta_h: point.eta_h * rate / point.rate,
            ..point
        }
    } else {
        point
    };
    Ok(CrossAnalysis {
        herald_rate: hist.start_total as f64 / live_s,
        signal_rate: hist.stop_total as f64 / live_s,
        hist,
        fit,
        center_ps,
        g2,
        point,
    })
}

#[derive(Clone, Debug)]
pub struct AutoAnalysis {
    pub hist: CorrelationHistogram,
    pub fit: FitResult,
    pub g2: G2Result,
    pub rate_a: f64,
    pub rate_b: f64,
}

impl AutoAnalysis {
    pub fn g2_zero(&self) -> Measured {
        Measured::new(self.fit.g2_peak(), self.fit.g2_peak_sigma())
    }
}

pub fn analyze_auto(stream: &TagStream, ch_a: u8, ch_b: u8, live_s: f64, a: &AnalysisParams) -> Result<AutoAnalysis> {
    let mut hist = auto_correlation_histogram(stream, ch_a, ch_b, a.bin_width_ps, range(a))?;
    hist.acquisition_ps = (live_s * PS_PER_S).round() as u64;
    let factor = (a.auto_fit_bin_ps / a.bin_width_ps).max(1) as usize;
    let fit = fit_symmetric_exponential(&hist.rebinned(factor.min(hist.n_bins()))?)?;
    let g2 = normalized_g2(&hist, a.window_ps, 0.0, a.floor)?;
    Ok(AutoAnalysis {
        rate_a: hist.start_total as f64 / live_s,
        rate_b: hist.stop_total as f64 / live_s,
        hist,
        fit,
        g2,
    })
}

pub fn analyze_heralded(stream: &TagStream, center_ps: f64, a: &AnalysisParams) -> Result<FaselHistogram> {
    heralded_autocorrelation(
        stream,
        ChannelRole::IDLER,
        ChannelRole::SIGNAL_A,
        ChannelRole::SIGNAL_B,
        a.window_ps,
        center_ps.round() as i64,
        a.n_max,
    )
}

/// Averaging factor of the exponential bunching peak `e^{-|τ|/T}` over a
/// centred window.
fn bunching_window_factor(params: &SourceParams, dtau_s: f64) -> f64 {
    window_correction(2.0 * params.coherence_slot(), dtau_s)
}

#[derive(Clone, Debug)]
pub struct Table1Report {
    pub cross: CrossAnalysis,
    pub signal_auto: AutoAnalysis,
    pub idler_auto: AutoAnalysis,
    pub heralded: FaselHistogram,
    pub live_time_s: f64,
    pub signal_live_time_s: f64,
    pub idler_live_time_s: f64,
    pub idler_power_mw: f64,
    pub r_window: Measured,
    pub r_zero: Measured,
    /// Single-mode signal autocorrelation with detector noise, window-averaged.
    pub g_ss_single_mode: f64,
    /// Multimode signal autocorrelation with detector noise, window-averaged.
    pub g_ss_predicted: f64,
    /// Idler autocorrelation with detector noise at zero delay.
    pub g_ii_predicted: f64,
    pub g_iss_predicted: f64,
    pub n_eff: f64,
    pub budget: RateBudget,
}

/// Runs the three simulated set-ups behind the correlation table: signal on
/// one detector, signal split over two detectors, and the split idler at
/// elevated pump power.
pub fn table1(config: &ExperimentConfig) -> Result<Table1Report> {
    let a = &config.analysis;
    let base = &config.source;
    let eta_det = base.signal_a.efficiency;
    let dtau = a.window_ps as f64 / PS_PER_S;

    let runs: Vec<(SourceParams, f64, u64)> = vec![
        (cross_source(base), config.duration_s, derive_seed(config.seed, 1)),
        (split_source(base), config.signal_duration_s, derive_seed(config.seed, 2)),
        (idler_source(base, config.idler_power_mw), config.idler_duration_s, derive_seed(config.seed, 3)),
    ];
    let streams: Vec<TagStream> = runs
        .par_iter()
        .map(|(p, d, s)| simulate_source(p, *d, *s))
        .collect::<Result<_>>()?;
    let live = base.live_time(config.duration_s);
    let signal_live = base.live_time(config.signal_duration_s);
    let idler_live = base.live_time(config.idler_duration_s);

    let cross = analyze_cross(&streams[0], &[ChannelRole::SIGNAL_A], live, eta_det, a)?;
    let signal_auto = analyze_auto(&streams[1], ChannelRole::SIGNAL_A, ChannelRole::SIGNAL_B, signal_live, a)?;
    let idler_auto = analyze_auto(&streams[2], ChannelRole::IDLER, ChannelRole::IDLER_B, idler_live, a)?;
    let heralded = analyze_heralded(&streams[1], cross.center_ps, a)?;

    let r_window = cauchy_schwarz(cross.g2.measured(), signal_auto.g2.measured(), idler_auto.g2.measured());
    let r_zero = cauchy_schwarz(cross.g2_zero(), signal_auto.g2_zero(), idler_auto.g2_zero());

    let wf = bunching_window_factor(base, dtau);
    let (da, db) = (base.signal_a.dark_rate, base.signal_b.dark_rate);
    let sm = noise_bunching(
        (signal_auto.rate_a - da).max(0.0),
        da,
        (signal_auto.rate_b - db).max(0.0),
        db,
    )?;
    let n_eff = effective_mode_number(&base.mode_weights)?;
    let g_ss_single_mode = 1.0 + (sm - 1.0) * wf;
    let g_ss_predicted = 1.0 + (sm - 1.0) / n_eff * wf;
    let idler_noise = |d: f64, frac: f64| d + base.idler_background_hz * frac;
    let (na, nb) = (
        idler_noise(base.idler_a.dark_rate, 0.5),
        idler_noise(base.idler_b.dark_rate, 0.5),
    );
    let g_ii_predicted = noise_bunching(
        (idler_auto.rate_a - na).max(0.0),
        na,
        (idler_auto.rate_b - nb).max(0.0),
        nb,
    )?;
    let g_iss_predicted = conditioned_from_unconditioned(g_ss_single_mode, idler_auto.g2.value, cross.g2.value)?;

    let budget = rate_budget(&RateInputs {
        detected_rate: cross.point.rate / base.pump_power_mw,
        eta_t_s: base.eta_t_s,
        eta_det_s: eta_det,
        eta_t_i: base.eta_t_i * base.filter_central,
        eta_det_i: base.idler_a.efficiency,
        eta_esc_s: base.eta_esc_s,
        eta_esc_i: base.eta_esc_i,
        dnu_bi: crate::models::biphoton_bandwidth(cross.fit.fwhm_ns() * 1e-9),
        dtau: base.reference_window_s,
    })?;

    Ok(Table1Report {
        cross,
        signal_auto,
        idler_auto,
        heralded,
        live_time_s: live,
        signal_live_time_s: signal_live,
        idler_live_time_s: idler_live,
        idler_power_mw: config.idler_power_mw,
        r_window,
        r_zero,
        g_ss_single_mode,
        g_ss_predicted,
        g_ii_predicted,
        g_iss_predicted,
        n_eff,
        budget,
    })
}

fn fmt_m(m: Measured) -> String {
    format!("{:.4} ± {:.4}", m.value, m.sigma)
}

impl Table1Report {
    pub fn render(&self, config: &ExperimentConfig) -> String {
        let mut s = String::new();
        let c = &self.cross;
        s.push_str("# correlation summary\n");
        s.push_str(&format!("seed = {}\npreset = {}\n", config.seed, config.preset));
        s.push_str(&format!(
            "pump_mw = {}\nlive_time_s = {}\nsignal_live_time_s = {}\nidler_pump_mw = {}\nidler_live_time_s = {}\nwindow_ns = {}\n\n",
            config.source.pump_power_mw,
            self.live_time_s,
            self.signal_live_time_s,
            self.idler_power_mw,
            self.idler_live_time_s,
            config.analysis.window_ps as f64 / 1000.0
        ));
        s.push_str("quantity | dtau=0 | dtau=window | prediction | classical\n");
        s.push_str(&format!(
            "g2_si | {} | {} | | <= sqrt(g2_ss g2_ii)\n",
            fmt_m(c.g2_zero()),
            fmt_m(c.g2.measured())
        ));
        s.push_str(&format!(
            "g2_ss | {} | {} | {:.4} (window) | \n",
            fmt_m(self.signal_auto.g2_zero()),
            fmt_m(self.signal_auto.g2.measured()),
            self.g_ss_predicted
        ));
        s.push_str(&format!(
            "g2_ii | {} | {} | {:.4} (dtau=0) | \n",
            fmt_m(self.idler_auto.g2_zero()),
            fmt_m(self.idler_auto.g2.measured()),
            self.g_ii_predicted
        ));
        s.push_str(&format!("R | {} | {} | | <= 1\n", fmt_m(self.r_zero), fmt_m(self.r_window)));
        s.push_str(&format!(
            "g2_iss | | {} | {:.4} (window) | >= 1\n\n",
            fmt_m(self.heralded.measured()),
            self.g_iss_predicted
        ));
        s.push_str("# cross-correlation fit\n");
        s.push_str(&format!(
            "dnu_s_mhz = {:.4} ± {:.4}\ndnu_i_mhz = {:.4} ± {:.4}\ntau_c_ns = {:.3}\ntau0_ns = {:.3}\nconverged = {}\n\n",
            c.fit.dnu_s() / 1e6,
            c.fit.dnu_s_sigma() / 1e6,
            c.fit.dnu_i() / 1e6,
            c.fit.dnu_i_sigma() / 1e6,
            c.fit.fwhm_ns(),
            c.fit.tau0_ns(),
            c.fit.converged
        ));
        s.push_str("# rates\n");
        s.push_str(&format!(
            "herald_rate_hz = {:.3}\nsignal_rate_hz = {:.3}\ncoincidence_rate_hz = {:.4}\nheralding_efficiency = {:.4}\n",
            c.herald_rate, c.signal_rate, c.point.rate, c.point.eta_h
        ));
        s.push_str(&format!(
            "created_pairs_per_s_mw = {:.1}\nspectral_brightness_per_s_mw_mhz = {:.1}\ncreation_prob_per_mw = {:.4e}\n",
            self.budget.created_pair_rate, self.budget.spectral_brightness, self.budget.creation_prob
        ));
        s.push_str(&format!(
            "signal_autocorr_fwhm_ns = {:.2}\nidler_autocorr_fwhm_ns = {:.2}\neffective_modes = {:.3}\n\n",
            self.signal_auto.fit.fwhm_ns(),
            self.idler_auto.fit.fwhm_ns(),
            self.n_eff
        ));
        s.push_str("# config\n");
        s.push_str(&config.text);
        if !config.text.ends_with('\n') {
            s.push('\n');
        }
        s
    }
}

/// Analytic rates and correlations for one pump power, from the source
/// parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepModelPoint {
    pub coincidence_rate: f64,
    pub eta_h: f64,
    pub g2_si: f64,
    pub g2_iss: f64,
}

/// Model curves for the power sweep with the signal split over two detectors.
///
/// `g²_si` uses the accidental-coincidence power model integrated over the
/// window. `g²_i:s,s` counts triple coincidences from a detected partner plus
/// one uncorrelated signal click, and from two uncorrelated clicks.
pub fn sweep_model(base: &SourceParams, power_mw: f64, window_ps: u64) -> Result<SweepModelPoint> {
    let p = split_source(base);
    let dtau = window_ps as f64 / PS_PER_S;
    let w0 = p.mode_weights[0];
    let modes: f64 = p.mode_weights.iter().sum::<f64>() / w0;
    let r0 = p.creation_prob * power_mw / p.reference_window_s * w0;
    let eta_s = p.eta_esc_s * p.eta_t_s * p.signal_a.efficiency;
    let (ia, _) = p.idler_click_probs(0);
    let eta_i = ia;
    let fwin = pair_window_fraction(p.dnu_s, p.dnu_i, dtau);
    let dark_s = p.signal_a.dark_rate + p.signal_b.dark_rate;
    let dark_i = p.idler_a.dark_rate + p.idler_background_hz + p.idler_noise_hz_per_mw * power_mw;

    let pm = PowerModel {
        p: p.creation_prob * w0 * dtau / p.reference_window_s,
        eta_s,
        eta_i,
        dark_s: dark_s * dtau,
        dark_i: dark_i * dtau,
        signal_modes: modes,
        average_darks: false,
    };
    let g2_si = 1.0 + (pm.g2_zero(power_mw) - 1.0) * fwin;

    let herald = r0 * eta_i + dark_i;
    let coincidence_rate = r0 * eta_i * eta_s * fwin;
    let eta_h = coincidence_rate / (herald * p.signal_a.efficiency);

    let f = r0 * eta_i / herald;
    let h = eta_s * fwin / 2.0;
    let singles = r0 * modes * eta_s / 2.0;
    let mu_a = (singles + p.signal_a.dark_rate) * dtau;
    let mu_b = (singles + p.signal_b.dark_rate) * dtau;
    let wf = bunching_window_factor(&p, dtau);
    // clicks near a heralded partner are enhanced by the central-mode bunching
    let near_partner = 1.0 + wf / modes;
    let pure = singles / (singles + 0.5 * dark_s);
    let g_ss = 1.0 + pure * pure * wf / effective_mode_number(&p.mode_weights)?;
    let triple = f * h * (mu_a + mu_b) * near_partner + mu_a * mu_b * g_ss;
    let g2_iss = triple / ((f * h + mu_a) * (f * h + mu_b));
    Ok(SweepModelPoint { coincidence_rate, eta_h, g2_si, g2_iss })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub power_mw: f64,
    pub coincidence_rate: f64,
    pub eta_h: f64,
    pub g2_si: f64,
    pub g2_si_sigma: f64,
    pub g2_iss: f64,
    pub g2_iss_sigma: f64,
    pub model_coincidence_rate: f64,
    pub model_eta_h: f64,
    pub model_g2_si: f64,
    pub model_g2_iss: f64,
}

/// One simulated run per pump power with the signal split over two detectors.
/// `g²_si` combines both signal detectors. A `g²_i:s,s` that cannot be
/// estimated (no triple-coincidence side counts) is reported as NaN.
pub fn sweep_power(config: &ExperimentConfig) -> Result<Vec<PowerRow>> {
    let powers = &config.sweep.powers_mw;
    if powers.len() < 2 {
        return Err(Error::Config("power sweep needs at least two powers".into()));
    }
    let a = &config.analysis;
    let live = config.source.live_time(config.sweep.duration_s);
    let eta_det = config.source.signal_a.efficiency;
    powers
        .par_iter()
        .enumerate()
        .map(|(k, &pw)| {
            let mut p = split_source(&config.source);
            p.pump_power_mw = pw;
            let stream = simulate_source(&p, config.sweep.duration_s, derive_seed(config.seed, 100 + k as u64))?;
            let cross = analyze_cross(&stream, &[ChannelRole::SIGNAL_A, ChannelRole::SIGNAL_B], live, eta_det, a)?;
            let (g2_iss, g2_iss_sigma) = match analyze_heralded(&stream, cross.center_ps, a) {
                Ok(f) => (f.g2, f.sigma),
                Err(Error::InsufficientData(_)) => (f64::NAN, f64::NAN),
                Err(e) => return Err(e),
            };
            let m = sweep_model(&config.source, pw, a.window_ps)?;
            Ok(PowerRow {
                power_mw: pw,
                coincidence_rate: cross.point.rate,
                eta_h: cross.point.eta_h,
                g2_si: cross.g2.value,
                g2_si_sigma: cross.g2.sigma,
                g2_iss,
                g2_iss_sigma,
                model_coincidence_rate: m.coincidence_rate,
                model_eta_h: m.eta_h,
                model_g2_si: m.g2_si,
                model_g2_iss: m.g2_iss,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub window_ns: f64,
    pub coincidence_rate: f64,
    pub eta_h: f64,
    pub g2_si: f64,
    pub g2_si_scaled: f64,
}

/// Window-width dependence at the configured pump power, signal on one detector.
pub fn sweep_window(config: &ExperimentConfig) -> Result<Vec<WindowRow>> {
    let a = &config.analysis;
    let p = cross_source(&config.source);
    let stream = simulate_source(&p, config.duration_s, derive_seed(config.seed, 1))?;
    let live = p.live_time(config.duration_s);
    let cross = analyze_cross(&stream, &[ChannelRole::SIGNAL_A], live, p.signal_a.efficiency, a)?;
    window_rows(&cross, &config.sweep.windows_ps, p.signal_a.efficiency, config.sweep.g2_scale, a)
}

pub fn window_rows(cross: &CrossAnalysis, windows_ps: &[u64], eta_det: f64, g2_scale: f64, a: &AnalysisParams) -> Result<Vec<WindowRow>> {
    Ok(window_sweep(&cross.hist, cross.center_ps, windows_ps, eta_det, a.floor)?
        .into_iter()
        .map(|w| WindowRow {
            window_ns: w.window_ns,
            coincidence_rate: w.rate,
            eta_h: w.eta_h,
            g2_si: w.g2,
            g2_si_scaled: w.g2 / g2_scale,
        })
        .collect())
}

/// Escape efficiency from the cavity parameters and from the heralding
/// efficiency.
#[derive(Clone, Debug, PartialEq)]
pub struct EscapeComparison {
    pub cavity: CavitySolution,
    pub from_heralding: f64,
    pub from_heralding_noise_corrected: f64,
}

pub struct CavityInputs {
    pub finesse: f64,
    pub sigma_finesse: f64,
    pub r_hr: f64,
    pub r_oc: f64,
    pub sigma_r_oc: f64,
    pub eta_h: f64,
    pub eta_t: f64,
    pub uncorrelated_fraction: f64,
}

impl Default for CavityInputs {
    fn default() -> Self {
        CavityInputs {
            finesse: 114.0,
            sigma_finesse: 0.0,
            r_hr: 0.9999,
            r_oc: 0.970,
            sigma_r_oc: 0.007,
            eta_h: 0.28,
            eta_t: 0.71,
            uncorrelated_fraction: 0.1,
        }
    }
}

pub fn escape_comparison(c: &CavityInputs) -> Result<EscapeComparison> {
    Ok(EscapeComparison {
        cavity: cavity_solve_with_uncertainty(c.finesse, c.sigma_finesse, c.r_hr, c.r_oc, c.sigma_r_oc)?,
        from_heralding: escape_from_heralding(c.eta_h, c.eta_t, 0.0)?,
        from_heralding_noise_corrected: escape_from_heralding(c.eta_h, c.eta_t, c.uncorrelated_fraction)?,
    })
}
