//! Closed-form relations for narrowband photon pairs and the cavity escape
//! efficiency solver.
//!
//! Units are SI throughout (Hz, s) unless a function says otherwise; pump
//! powers are in mW and rates normalized to pump power are per mW.

use std::f64::consts::{LN_2, PI};

use crate::{Error, Result};

/// A value with a one-sigma uncertainty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measured {
    pub value: f64,
    pub sigma: f64,
}

impl Measured {
    pub fn new(value: f64, sigma: f64) -> Self {
        Measured { value, sigma }
    }

    pub fn exact(value: f64) -> Self {
        Measured { value, sigma: 0.0 }
    }

    pub fn relative(&self) -> f64 {
        if self.value == 0.0 {
            f64::INFINITY
        } else {
            (self.sigma / self.value).abs()
        }
    }
}

impl std::fmt::Display for Measured {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} +- {}", self.value, self.sigma)
    }
}

/// Timing parameters of a photon pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiphotonSpec {
    /// Signal linewidth, Hz.
    pub dnu_s: f64,
    /// Idler linewidth, Hz.
    pub dnu_i: f64,
    /// FWHM of the signal-idler cross-correlation, s.
    pub tau_c: f64,
    /// Biphoton bandwidth, Hz.
    pub dnu_bi: f64,
}

impl BiphotonSpec {
    /// Decay rate of the signal side of the cross-correlation, 1/s.
    pub fn signal_rate(&self) -> f64 {
        2.0 * PI * self.dnu_s
    }

    /// Rise rate of the idler side of the cross-correlation, 1/s.
    pub fn idler_rate(&self) -> f64 {
        2.0 * PI * self.dnu_i
    }
}

pub fn biphoton_from_linewidths(dnu_s: f64, dnu_i: f64) -> Result<BiphotonSpec> {
    if !(dnu_s > 0.0 && dnu_i > 0.0) || !dnu_s.is_finite() || !dnu_i.is_finite() {
        return Err(Error::param(format!(
            "linewidths must be positive, got {dnu_s} and {dnu_i}"
        )));
    }
    let tau_c = LN_2 / (2.0 * PI * dnu_s) + LN_2 / (2.0 * PI * dnu_i);
    Ok(BiphotonSpec {
        dnu_s,
        dnu_i,
        tau_c,
        dnu_bi: biphoton_bandwidth(tau_c),
    })
}

/// Bandwidth of a biphoton with correlation time `tau_c`.
pub fn biphoton_bandwidth(tau_c: f64) -> f64 {
    LN_2 / (PI * tau_c)
}

/// Ratio `(g(Δτ) - 1) / (g(0) - 1)` for an exponentially decaying correlation
/// of time constant `tau_c` integrated over a window of width `dtau`.
pub fn window_correction(tau_c: f64, dtau: f64) -> f64 {
    let x = dtau / tau_c;
    if x == 0.0 {
        return 1.0;
    }
    -(-x).exp_m1() / x
}

/// Fraction of the two-sided exponential pair correlation that falls inside a
/// window of width `dtau` centred on the peak.
pub fn pair_window_fraction(dnu_s: f64, dnu_i: f64, dtau: f64) -> f64 {
    let (ks, ki) = (2.0 * PI * dnu_s, 2.0 * PI * dnu_i);
    let half = dtau / 2.0;
    (-(-ks * half).exp_m1() / ks - (-ki * half).exp_m1() / ki) / (1.0 / ks + 1.0 / ki)
}

/// Autocorrelation of the one-sided exponential wavepacket of a Lorentzian
/// line of FWHM `dnu`.
pub fn lorentzian_autocorrelation(dnu: f64, tau: f64) -> f64 {
    (-2.0 * PI * dnu * tau.abs()).exp() / (4.0 * PI * dnu)
}

/// Upper bound on zero-delay autocorrelation for a thermal single mode read by
/// two detectors with signal rates `s_*` and uncorrelated background rates `b_*`.
pub fn noise_bunching(s_a: f64, b_a: f64, s_b: f64, b_b: f64) -> Result<f64> {
    if [s_a, b_a, s_b, b_b].iter().any(|&r| r < 0.0 || !r.is_finite()) {
        return Err(Error::param("rates must be non-negative"));
    }
    let (n_a, n_b) = (s_a + b_a, s_b + b_b);
    if n_a == 0.0 || n_b == 0.0 {
        return Err(Error::param("total detector rate is zero"));
    }
    Ok(1.0 + s_a * s_b / (n_a * n_b))
}

/// Zero-delay autocorrelation of thermal light spread over `n_modes`
/// equally-populated modes.
pub fn multimode_bunching(n_modes: f64) -> Result<f64> {
    if !(n_modes >= 1.0) {
        return Err(Error::param(format!("mode number {n_modes} < 1")));
    }
    Ok(1.0 + 1.0 / n_modes)
}

/// Cauchy-Schwarz ratio `R = g_si² / (g_ss · g_ii)` with first-order error
/// propagation. `R > 1` rules out classical fields.
pub fn cauchy_schwarz(g_si: Measured, g_ss: Measured, g_ii: Measured) -> Measured {
    let r = g_si.value * g_si.value / (g_ss.value * g_ii.value);
    let rel = ((2.0 * g_si.relative()).powi(2) + g_ss.relative().powi(2) + g_ii.relative().powi(2))
        .sqrt();
    Measured::new(r, r * rel)
}

/// Heralded autocorrelation predicted from unconditioned auto- and
/// cross-correlations.
pub fn conditioned_from_unconditioned(g_ss: f64, g_ii: f64, g_si: f64) -> Result<f64> {
    if !(g_si > 0.0) {
        return Err(Error::param("cross-correlation must be positive"));
    }
    Ok(g_ss * g_ii / g_si)
}

/// Probability that a herald is accompanied by a signal photon at the signal
/// detector input.
pub fn heralding_efficiency(p_si: f64, p_i: f64, eta_det_s: f64) -> Result<f64> {
    if !(p_i > 0.0) {
        return Err(Error::param("herald probability is zero"));
    }
    if !(eta_det_s > 0.0 && eta_det_s <= 1.0) {
        return Err(Error::param(format!("detector efficiency {eta_det_s} outside (0, 1]")));
    }
    Ok(p_si / (p_i * eta_det_s))
}

/// Escape efficiency inferred by dividing the heralding efficiency by the
/// cavity-to-detector transmission, optionally discounting uncorrelated heralds.
pub fn escape_from_heralding(eta_h: f64, eta_t: f64, uncorrelated_fraction: f64) -> Result<f64> {
    if !(eta_t > 0.0 && eta_t <= 1.0) {
        return Err(Error::param(format!("transmission {eta_t} outside (0, 1]")));
    }
    if !(0.0..1.0).contains(&uncorrelated_fraction) {
        return Err(Error::param("uncorrelated fraction outside [0, 1)"));
    }
    Ok(eta_h / (eta_t * (1.0 - uncorrelated_fraction)))
}

/// A detector: quantum efficiency, dark count rate (Hz) and dead time (s).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorSpec {
    pub efficiency: f64,
    pub dark_rate: f64,
    pub dead_time: f64,
}

impl DetectorSpec {
    pub fn new(efficiency: f64, dark_rate: f64) -> Self {
        DetectorSpec {
            efficiency,
            dark_rate,
            dead_time: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::param(format!("detector efficiency {} outside [0, 1]", self.efficiency)));
        }
        if !(self.dark_rate >= 0.0) || !(self.dead_time >= 0.0) {
            return Err(Error::param("dark rate and dead time must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CavityParams {
    pub finesse: f64,
    pub r_hr: f64,
    pub r_oc: f64,
    /// Free spectral range, Hz.
    pub fsr: f64,
}

impl CavityParams {
    pub fn linewidth(&self) -> f64 {
        self.fsr / self.finesse
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CavitySolution {
    /// Power fraction recycled after one round trip.
    pub rho: f64,
    /// Internal round-trip loss.
    pub l_int: f64,
    /// Escape efficiency through the output coupler.
    pub eta_esc: f64,
    pub sigma_l_int: f64,
    pub sigma_eta_esc: f64,
}

/// Finesse of a ring cavity recycling the power fraction `rho` per round trip.
pub fn finesse_from_rho(rho: f64) -> f64 {
    PI * rho.powf(0.25) / (1.0 - rho.sqrt())
}

fn d_finesse(rho: f64) -> f64 {
    let q = rho.sqrt();
    let num = PI * rho.powf(0.25);
    let dnum = 0.25 * PI * rho.powf(-0.75);
    let den = 1.0 - q;
    let dden = -0.5 / q;
    (dnum * den - num * dden) / (den * den)
}

/// Inverts [`finesse_from_rho`] on `(0, 1)`: bisection to a tight bracket,
/// then Newton polish.
pub fn rho_from_finesse(finesse: f64) -> Result<f64> {
    if !(finesse > 1.0) || !finesse.is_finite() {
        return Err(Error::param(format!("finesse {finesse} must exceed 1")));
    }
    // finesse_from_rho increases monotonically from 0 to infinity on (0, 1).
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if finesse_from_rho(mid) < finesse {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let mut rho = 0.5 * (lo + hi);
    for _ in 0..8 {
        let step = (finesse_from_rho(rho) - finesse) / d_finesse(rho);
        let next = rho - step;
        if !(next > lo && next < hi) {
            break;
        }
        rho = next;
        if step.abs() < 1e-17 {
            break;
        }
    }
    Ok(rho)
}

fn solve_point(finesse: f64, r_hr: f64, r_oc: f64) -> Result<(f64, f64, f64)> {
    let rho = rho_from_finesse(finesse)?;
    let mirrors = r_hr.powi(3) * r_oc;
    let l_int = 1.0 - rho / mirrors;
    if l_int < 0.0 {
        return Err(Error::NoRoot(format!(
            "finesse {finesse} needs rho = {rho:.6} above the mirror-only bound {mirrors:.6}"
        )));
    }
    let t_oc = 1.0 - r_oc;
    let eta = if t_oc + l_int == 0.0 { 1.0 } else { t_oc / (t_oc + l_int) };
    Ok((rho, l_int, eta))
}

/// Internal loss and escape efficiency from measured finesse and mirror
/// reflectivities.
pub fn cavity_solve(finesse: f64, r_hr: f64, r_oc: f64) -> Result<CavitySolution> {
    cavity_solve_with_uncertainty(finesse, 0.0, r_hr, r_oc, 0.0)
}

/// As [`cavity_solve`], propagating one-sigma uncertainties on finesse and
/// output-coupler reflectivity to first order.
pub fn cavity_solve_with_uncertainty(
    finesse: f64,
    sigma_finesse: f64,
    r_hr: f64,
    r_oc: f64,
    sigma_r_oc: f64,
) -> Result<CavitySolution> {
    for r in [r_hr, r_oc] {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::param(format!("reflectivity {r} outside (0, 1]")));
        }
    }
    let (rho, l_int, eta_esc) = solve_point(finesse, r_hr, r_oc)?;

    // Central differences; the partials are smooth away from the bounds.
    let partial = |df: f64, dr: f64| -> (f64, f64) {
        let plus = solve_point(finesse + df, r_hr, (r_oc + dr).min(1.0));
        let minus = solve_point(finesse - df, r_hr, r_oc - dr);
        match (plus, minus) {
            (Ok(p), Ok(m)) => {
                let h = 2.0 * if df != 0.0 { df } else { dr };
                ((p.1 - m.1) / h, (p.2 - m.2) / h)
            }
            _ => (0.0, 0.0),
        }
    };
    let (dl_df, de_df) = if sigma_finesse > 0.0 { partial(finesse * 1e-6, 0.0) } else { (0.0, 0.0) };
    let (dl_dr, de_dr) = if sigma_r_oc > 0.0 { partial(0.0, 1e-7) } else { (0.0, 0.0) };
    let sigma_l_int = ((dl_df * sigma_finesse).powi(2) + (dl_dr * sigma_r_oc).powi(2)).sqrt();
    let sigma_eta_esc = ((de_df * sigma_finesse).powi(2) + (de_dr * sigma_r_oc).powi(2)).sqrt();
    Ok(CavitySolution {
        rho,
        l_int,
        eta_esc,
        sigma_l_int,
        sigma_eta_esc,
    })
}

/// Inputs for [`rate_budget`]. Pair-rate quantities are per mW of pump.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateInputs {
    /// Detected coincidence rate, Hz/mW.
    pub detected_rate: f64,
    pub eta_t_s: f64,
    pub eta_det_s: f64,
    pub eta_t_i: f64,
    pub eta_det_i: f64,
    pub eta_esc_s: f64,
    pub eta_esc_i: f64,
    /// Biphoton bandwidth, Hz.
    pub dnu_bi: f64,
    /// Reference window for the creation probability, s.
    pub dtau: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateBudget {
    pub detected_coinc_rate: f64,
    pub eta_t: (f64, f64),
    pub eta_det: (f64, f64),
    pub eta_esc: (f64, f64),
    /// Pairs per second per mW behind the output coupler.
    pub created_pair_rate: f64,
    /// Pairs per second per mW per MHz.
    pub spectral_brightness: f64,
    /// Intracavity creation probability per window, per mW.
    pub creation_prob: f64,
}

pub fn rate_budget(inp: &RateInputs) -> Result<RateBudget> {
    for (name, v) in [
        ("eta_t_s", inp.eta_t_s),
        ("eta_det_s", inp.eta_det_s),
        ("eta_t_i", inp.eta_t_i),
        ("eta_det_i", inp.eta_det_i),
        ("eta_esc_s", inp.eta_esc_s),
        ("eta_esc_i", inp.eta_esc_i),
    ] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::param(format!("{name} = {v} outside (0, 1]")));
        }
    }
    let created = inp.detected_rate / (inp.eta_t_s * inp.eta_det_s * inp.eta_t_i * inp.eta_det_i);
    Ok(RateBudget {
        detected_coinc_rate: inp.detected_rate,
        eta_t: (inp.eta_t_s, inp.eta_t_i),
        eta_det: (inp.eta_det_s, inp.eta_det_i),
        eta_esc: (inp.eta_esc_s, inp.eta_esc_i),
        created_pair_rate: created,
        spectral_brightness: created / (inp.dnu_bi * 1e-6),
        creation_prob: created / (inp.eta_esc_s * inp.eta_esc_i) * inp.dtau,
    })
}

/// Accidental-coincidence model of the cross-correlation versus pump power.
///
/// Per window, the idler and signal click with probabilities
/// `q_i = p·P·η_i + d_i` and `q_s = M·p·P·η_s + d_s`, and the pair
/// coincidence probability is `q_si = p·P·η_s·η_i`. The zero-delay value is
/// `1 + q_si / (q_s·q_i)`; `M` counts signal modes that reach the detector
/// without partners in the heralding mode (1 for a single mode).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerModel {
    /// Creation probability per window per mW.
    pub p: f64,
    /// Total signal detection efficiency (escape, transmission, detector).
    pub eta_s: f64,
    /// Total idler detection efficiency.
    pub eta_i: f64,
    /// Signal noise click probability per window.
    pub dark_s: f64,
    /// Idler noise click probability per window.
    pub dark_i: f64,
    /// Signal-to-central-mode intensity ratio, at least 1.
    pub signal_modes: f64,
    /// Use the mean of both noise probabilities on both detectors.
    pub average_darks: bool,
}

impl PowerModel {
    pub fn noiseless(p: f64, eta_s: f64, eta_i: f64) -> Self {
        PowerModel {
            p,
            eta_s,
            eta_i,
            dark_s: 0.0,
            dark_i: 0.0,
            signal_modes: 1.0,
            average_darks: false,
        }
    }

    /// Zero-delay cross-correlation at pump power `power` (mW).
    pub fn g2_zero(&self, power: f64) -> f64 {
        let (ds, di) = if self.average_darks {
            let m = 0.5 * (self.dark_s + self.dark_i);
            (m, m)
        } else {
            (self.dark_s, self.dark_i)
        };
        let pp = self.p * power;
        let q_s = self.signal_modes.max(1.0) * pp * self.eta_s + ds;
        let q_i = pp * self.eta_i + di;
        let q_si = pp * self.eta_s * self.eta_i;
        1.0 + q_si / (q_s * q_i)
    }

    /// Cross-correlation integrated over a window `dtau` for correlation time
    /// `tau_c`.
    pub fn g2_window(&self, power: f64, tau_c: f64, dtau: f64) -> f64 {
        1.0 + (self.g2_zero(power) - 1.0) * window_correction(tau_c, dtau)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn pair_window_fraction_limits() {
        assert_eq!(pair_window_fraction(3.7e6, 2.3e6, 0.0), 0.0);
        assert!((pair_window_fraction(3.7e6, 2.3e6, 1.0) - 1.0).abs() < 1e-12);
        // weighted one-sided exponential integrals over ±200 ns
        let f = pair_window_fraction(3.7e6, 2.3e6, 400e-9);
        assert!((f - 0.962_070_187).abs() < 1e-9, "{f}");
    }

    #[test]
    fn reference_linewidths_give_78ns() {
        let b = biphoton_from_linewidths(3.7e6, 2.3e6).unwrap();
        assert!(close(b.tau_c, 78e-9, 0.5e-9), "{}", b.tau_c);
        assert!(close(b.dnu_bi, 2.8e6, 0.05e6), "{}", b.dnu_bi);
        assert!(close(b.dnu_bi, LN_2 / (PI * b.tau_c), 1e-6));
    }

    #[test]
    fn equal_linewidths() {
        let x = 5e6;
        let b = biphoton_from_linewidths(x, x).unwrap();
        assert!(close(b.tau_c, LN_2 / (PI * x), 1e-20));
    }

    #[test]
    fn one_and_two_mhz() {
        let b = biphoton_from_linewidths(1e6, 2e6).unwrap();
        // ln2/(2π)·(1 + 1/2) µs
        assert!(close(b.tau_c, 165.4767001144887e-9, 1e-18));
    }

    #[test]
    fn linewidth_validation() {
        assert!(biphoton_from_linewidths(0.0, 1.0).is_err());
        assert!(biphoton_from_linewidths(1.0, -1.0).is_err());
    }

    #[test]
    fn window_correction_values() {
        let w = window_correction(78e-9, 400e-9);
        assert!(close(w, 0.19384419805194708, 1e-12));
        assert!(close(1.0 / w, 5.16, 0.005));
        assert!(close(window_correction(100e-9, 100e-9), 1.0 - (-1.0f64).exp(), 1e-15));
        assert_eq!(window_correction(1.0, 0.0), 1.0);
        assert!(close(window_correction(1.0, 1e-12), 1.0, 1e-11));
    }

    #[test]
    fn lorentzian_autocorrelation_is_symmetric() {
        let dnu = 3.7e6;
        assert!(close(lorentzian_autocorrelation(dnu, 0.0), 1.0 / (4.0 * PI * dnu), 1e-30));
        for k in 1..20 {
            let t = k as f64 * 7.3e-9;
            assert_eq!(lorentzian_autocorrelation(dnu, t), lorentzian_autocorrelation(dnu, -t));
        }
    }

    #[test]
    fn noise_bunching_cases() {
        assert_eq!(noise_bunching(100.0, 0.0, 50.0, 0.0).unwrap(), 2.0);
        assert_eq!(noise_bunching(0.0, 10.0, 50.0, 1.0).unwrap(), 1.0);
        assert!(close(noise_bunching(1.0, 1.0, 3.0, 3.0).unwrap(), 1.25, 1e-15));
        assert!(noise_bunching(0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn multimode_bunching_cases() {
        assert_eq!(multimode_bunching(1.0).unwrap(), 2.0);
        assert!(close(multimode_bunching(3.9).unwrap(), 1.2564, 1e-4));
        assert!(close(multimode_bunching(1e12).unwrap(), 1.0, 1e-11));
        assert!(multimode_bunching(0.5).is_err());
    }

    #[test]
    fn cauchy_schwarz_values() {
        let r = cauchy_schwarz(Measured::exact(335.0), Measured::exact(1.18), Measured::exact(1.5));
        assert!(close(r.value, 63.4e3, 50.0), "{}", r.value);
        let one = cauchy_schwarz(Measured::exact(1.0), Measured::exact(1.0), Measured::exact(1.0));
        assert_eq!(one.value, 1.0);
        let r = cauchy_schwarz(Measured::exact(70.0), Measured::exact(1.10), Measured::exact(1.32));
        assert!(close(r.value, 3374.6556473829196, 1e-9));
    }

    #[test]
    fn cauchy_schwarz_error_propagation() {
        let r = cauchy_schwarz(Measured::new(10.0, 0.1), Measured::new(2.0, 0.0), Measured::new(1.0, 0.0));
        // relative error doubles for the squared term
        assert!(close(r.sigma / r.value, 0.02, 1e-12));
    }

    #[test]
    fn conditioned_prediction() {
        assert!(close(conditioned_from_unconditioned(1.57, 1.32, 70.0).unwrap(), 0.0296057, 1e-6));
        assert_eq!(conditioned_from_unconditioned(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert!(close(conditioned_from_unconditioned(2.0, 2.0, 400.0).unwrap(), 0.01, 1e-15));
        assert!(conditioned_from_unconditioned(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn heralding_efficiency_cases() {
        assert!(close(heralding_efficiency(0.1736, 1.0, 0.62).unwrap(), 0.28, 1e-12));
        assert_eq!(heralding_efficiency(0.0, 0.3, 0.62).unwrap(), 0.0);
        assert!(close(heralding_efficiency(0.62, 1.0, 0.62).unwrap(), 1.0, 1e-15));
        assert!(heralding_efficiency(0.1, 0.0, 0.62).is_err());
    }

    #[test]
    fn escape_from_heralding_cases() {
        assert!(close(escape_from_heralding(0.28, 0.71, 0.0).unwrap(), 0.394, 5e-4));
        assert!(close(escape_from_heralding(0.28, 0.71, 0.10).unwrap(), 0.438, 5e-4));
        assert_eq!(escape_from_heralding(0.37, 1.0, 0.0).unwrap(), 0.37);
    }

    #[test]
    fn cavity_reference_values() {
        let s = cavity_solve_with_uncertainty(114.0, 0.0, 0.9999, 0.970, 0.007).unwrap();
        assert!(close(s.l_int, 0.024, 0.001), "{}", s.l_int);
        assert!(close(s.eta_esc, 0.56, 0.02), "{}", s.eta_esc);
        // 2.4(7) % and 56(13) %
        assert!(close(s.sigma_l_int, 0.007, 0.0005), "{}", s.sigma_l_int);
        assert!(close(s.sigma_eta_esc, 0.13, 0.01), "{}", s.sigma_eta_esc);
        assert!((finesse_from_rho(s.rho) - 114.0).abs() / 114.0 < 1e-12);
    }

    #[test]
    fn cavity_lossless() {
        let rho = 0.9999f64.powi(3) * 0.97;
        let f = finesse_from_rho(rho);
        let s = cavity_solve(f, 0.9999, 0.97).unwrap();
        assert!(s.l_int.abs() < 1e-12);
        assert!(close(s.eta_esc, 1.0, 1e-9));
    }

    #[test]
    fn cavity_forward_check() {
        assert!(close(finesse_from_rho(0.94564), 112.41020373829869, 1e-9));
    }

    #[test]
    fn cavity_inconsistent_inputs() {
        // finesse too high for the mirror reflectivities
        assert!(matches!(cavity_solve(1000.0, 0.9999, 0.97), Err(Error::NoRoot(_))));
        assert!(cavity_solve(0.5, 0.9999, 0.97).is_err());
        assert!(cavity_solve(100.0, 1.2, 0.97).is_err());
    }

    #[test]
    fn rate_budget_reference_values() {
        let b = rate_budget(&RateInputs {
            detected_rate: 34.0,
            eta_t_s: 0.71,
            eta_det_s: 0.62,
            eta_t_i: 0.35,
            eta_det_i: 0.10,
            eta_esc_s: 0.56,
            eta_esc_i: 0.74,
            dnu_bi: 2.8e6,
            dtau: 400e-9,
        })
        .unwrap();
        assert!(close(b.created_pair_rate, 2200.0, 15.0), "{}", b.created_pair_rate);
        assert!(close(b.spectral_brightness, 800.0, 25.0), "{}", b.spectral_brightness);
        assert!(close(b.creation_prob, 2.13e-3, 0.01e-3), "{}", b.creation_prob);
    }

    #[test]
    fn power_model_noiseless_limit() {
        let m = PowerModel::noiseless(2.2e-3, 0.3, 0.02);
        let g = m.g2_zero(1.0);
        assert!(close(g - 1.0, 454.5454545, 1e-4));
        for p in [0.01, 0.5, 3.0] {
            assert!(close(m.g2_zero(p), 1.0 + 1.0 / (2.2e-3 * p), 1e-9 * m.g2_zero(p)));
        }
    }

    #[test]
    fn power_model_noise_dominated() {
        let mut m = PowerModel::noiseless(2.2e-3, 0.3, 0.02);
        m.dark_s = 1e6;
        m.dark_i = 1e6;
        assert!(close(m.g2_zero(1.0), 1.0, 1e-12));
    }

    #[test]
    fn power_model_has_maximum_below_noiseless_curve() {
        let m = PowerModel {
            p: 2.2e-3,
            eta_s: 0.2465,
            eta_i: 0.0259,
            dark_s: 1.2e-5,
            dark_i: 7.2e-6,
            signal_modes: 1.0,
            average_darks: true,
        };
        let noiseless = PowerModel::noiseless(m.p, m.eta_s, m.eta_i);
        assert!(m.g2_zero(0.125) < noiseless.g2_zero(0.125));
        let powers: Vec<f64> = (0..60).map(|k| 0.005 * 1.12f64.powi(k)).collect();
        let g: Vec<f64> = powers.iter().map(|&p| m.g2_window(p, 78e-9, 400e-9)).collect();
        let imax = g
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!(imax > 0 && imax < g.len() - 1);
    }
}
