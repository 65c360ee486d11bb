//! Experiment configuration.
//!
//! Configs are TOML documents. Every key is optional and overrides the preset
//! named by `preset` (default `table1`); unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::correlator::{FloorRegion, DEFAULT_N_MAX};
use crate::models::DetectorSpec;
use crate::simulator::{gaussian_cluster, PhotonStatistics, SourceParams, ThermalAnchor};
use crate::tagstream::GateSpec;
use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub detectors: DetectorSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub acquisition: AcquisitionSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub pump_power_mw: Option<f64>,
    pub creation_prob: Option<f64>,
    pub reference_window_ns: Option<f64>,
    pub dnu_s_mhz: Option<f64>,
    pub dnu_i_mhz: Option<f64>,
    pub mode_weights: Option<Vec<f64>>,
    /// Replaces `mode_weights` by a Gaussian cluster of this many modes.
    pub cluster_modes: Option<usize>,
    pub cluster_fwhm_ghz: Option<f64>,
    pub fsr_mhz: Option<f64>,
    pub eta_esc_s: Option<f64>,
    pub eta_esc_i: Option<f64>,
    pub eta_t_s: Option<f64>,
    pub eta_t_i: Option<f64>,
    pub filter_central: Option<f64>,
    pub filter_side: Option<f64>,
    pub signal_split: Option<f64>,
    pub idler_split: Option<f64>,
    pub idler_background_hz: Option<f64>,
    pub idler_noise_hz_per_mw: Option<f64>,
    pub gate_period_ms: Option<f64>,
    pub gate_duty: Option<f64>,
    pub gate_darks: Option<bool>,
    pub coherence_slot_ns: Option<f64>,
    pub statistics: Option<Statistics>,
    pub anchor: Option<Anchor>,
    pub correlated: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Thermal,
    Poisson,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Anchor {
    Signal,
    Idler,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorEntry {
    pub efficiency: Option<f64>,
    pub dark_hz: Option<f64>,
    pub dead_time_ns: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub signal_a: Option<DetectorEntry>,
    pub signal_b: Option<DetectorEntry>,
    pub idler: Option<DetectorEntry>,
    pub idler_b: Option<DetectorEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowAlignment {
    /// Window centred on the fitted peak position.
    Centered,
    /// Window opening at the herald detection.
    Start,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub bin_width_ns: Option<f64>,
    pub range_ns: Option<f64>,
    pub window_ns: Option<f64>,
    pub floor_inner_ns: Option<f64>,
    pub floor_outer_ns: Option<f64>,
    pub n_max: Option<usize>,
    pub alignment: Option<WindowAlignment>,
    pub subtract_accidentals: Option<bool>,
    pub auto_fit_bin_ns: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionSection {
    /// Wall-clock duration of each simulated run, s (live time is this times the gate duty).
    pub duration_s: Option<f64>,
    /// Duration of the split-signal run (autocorrelations, heralded g²).
    pub signal_duration_s: Option<f64>,
    /// Duration of the idler autocorrelation run.
    pub idler_duration_s: Option<f64>,
    /// Pump power of the idler autocorrelation run.
    pub idler_power_mw: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub powers_mw: Option<Vec<f64>>,
    pub windows_ns: Option<Vec<f64>>,
    pub duration_s: Option<f64>,
    /// Divide the g² column of the window sweep by this factor.
    pub g2_scale: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisParams {
    pub bin_width_ps: u64,
    /// Histograms span `[-range, range)`.
    pub range_ps: i64,
    pub window_ps: u64,
    pub floor: FloorRegion,
    pub n_max: usize,
    pub alignment: WindowAlignment,
    pub subtract_accidentals: bool,
    /// Autocorrelation peaks are fitted on bins merged up to this width.
    pub auto_fit_bin_ps: u64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        AnalysisParams {
            bin_width_ps: 5_000,
            range_ps: 6_000_000,
            window_ps: 400_000,
            floor: FloorRegion { inner_ps: 1_000_000, outer_ps: 5_000_000 },
            n_max: DEFAULT_N_MAX,
            alignment: WindowAlignment::Centered,
            subtract_accidentals: false,
            auto_fit_bin_ps: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepParams {
    pub powers_mw: Vec<f64>,
    pub windows_ps: Vec<u64>,
    pub duration_s: f64,
    pub g2_scale: f64,
}

/// Fully resolved configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub preset: String,
    pub seed: u64,
    pub out: Option<String>,
    pub source: SourceParams,
    pub analysis: AnalysisParams,
    pub duration_s: f64,
    pub signal_duration_s: f64,
    pub idler_duration_s: f64,
    pub idler_power_mw: f64,
    pub sweep: SweepParams,
    /// The document the config was resolved from, echoed into reports.
    pub text: String,
}

pub const PRESETS: &[&str] = &["table1", "single-mode", "quick"];

fn preset(name: &str) -> Result<ExperimentConfig> {
    let table1 = ExperimentConfig {
        preset: name.to_string(),
        seed: 1,
        out: None,
        source: SourceParams::calibrated(),
        analysis: AnalysisParams::default(),
        duration_s: 1200.0,
        signal_duration_s: 12_000.0,
        idler_duration_s: 24_000.0,
        idler_power_mw: 4.3,
        sweep: SweepParams {
            powers_mw: vec![0.015, 0.03, 0.0625, 0.125, 0.25, 0.5, 1.0, 2.0, 5.0],
            windows_ps: [10, 20, 50, 100, 150, 200, 300, 400, 600, 800, 1000, 1500, 2000]
                .iter()
                .map(|ns| ns * 1000)
                .collect(),
            duration_s: 1200.0,
            g2_scale: 1.0,
        },
        text: String::new(),
    };
    match name {
        "table1" => Ok(table1),
        "single-mode" => Ok(ExperimentConfig {
            source: SourceParams::ideal_single_mode(20_000.0),
            duration_s: 20.0,
            signal_duration_s: 20.0,
            idler_duration_s: 20.0,
            ..table1
        }),
        "quick" => Ok(ExperimentConfig {
            duration_s: 60.0,
            signal_duration_s: 600.0,
            idler_duration_s: 600.0,
            sweep: SweepParams {
                powers_mw: vec![0.125, 0.5, 1.0, 2.0],
                duration_s: 60.0,
                ..table1.sweep.clone()
            },
            ..table1
        }),
        other => Err(Error::Config(format!(
            "unknown preset {other:?}; expected one of {}",
            PRESETS.join(", ")
        ))),
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

fn ns_to_ps(name: &str, v: f64) -> Result<u64> {
    Ok((positive(name, v)? * 1000.0).round() as u64)
}

fn apply_detector(d: &mut DetectorSpec, e: &Option<DetectorEntry>) {
    if let Some(e) = e {
        if let Some(v) = e.efficiency {
            d.efficiency = v;
        }
        if let Some(v) = e.dark_hz {
            d.dark_rate = v;
        }
        if let Some(v) = e.dead_time_ns {
            d.dead_time = v * 1e-9;
        }
    }
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let mut c = preset(name)?;
        c.text = format!("preset = {name:?}\n");
        Ok(c)
    }

    /// Parses a TOML document on top of its preset (or `default_preset`).
    pub fn parse(text: &str, default_preset: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut c = preset(file.preset.as_deref().unwrap_or(default_preset))?;
        c.text = text.to_string();
        if let Some(s) = file.seed {
            c.seed = s;
        }
        c.out = file.out.clone();

        let s = &file.source;
        let p = &mut c.source;
        macro_rules! set {
            ($field:ident, $target:expr) => {
                if let Some(v) = s.$field {
                    $target = v;
                }
            };
        }
        set!(pump_power_mw, p.pump_power_mw);
        set!(creation_prob, p.creation_prob);
        set!(eta_esc_s, p.eta_esc_s);
        set!(eta_esc_i, p.eta_esc_i);
        set!(eta_t_s, p.eta_t_s);
        set!(eta_t_i, p.eta_t_i);
        set!(filter_central, p.filter_central);
        set!(filter_side, p.filter_side);
        set!(signal_split, p.signal_split);
        set!(idler_split, p.idler_split);
        set!(idler_background_hz, p.idler_background_hz);
        set!(idler_noise_hz_per_mw, p.idler_noise_hz_per_mw);
        set!(gate_darks, p.gate_darks);
        set!(correlated, p.correlated);
        if let Some(v) = s.reference_window_ns {
            p.reference_window_s = positive("reference_window_ns", v)? * 1e-9;
        }
        if let Some(v) = s.dnu_s_mhz {
            p.dnu_s = v * 1e6;
        }
        if let Some(v) = s.dnu_i_mhz {
            p.dnu_i = v * 1e6;
        }
        if let Some(v) = s.fsr_mhz {
            p.fsr_hz = positive("fsr_mhz", v)? * 1e6;
        }
        if let Some(w) = &s.mode_weights {
            p.mode_weights = w.clone();
        }
        match (s.cluster_modes, s.cluster_fwhm_ghz) {
            (Some(n), Some(f)) => {
                if s.mode_weights.is_some() {
                    return Err(Error::Config("give either mode_weights or cluster_modes/cluster_fwhm_ghz".into()));
                }
                if n == 0 {
                    return Err(Error::Config("cluster_modes must be at least 1".into()));
                }
                p.mode_weights = gaussian_cluster(n, positive("cluster_fwhm_ghz", f)? * 1e9, p.fsr_hz);
            }
            (None, None) => {}
            _ => return Err(Error::Config("cluster_modes and cluster_fwhm_ghz go together".into())),
        }
        if s.gate_period_ms.is_some() || s.gate_duty.is_some() {
            let period = s
                .gate_period_ms
                .map(|v| positive("gate_period_ms", v).map(|v| (v * 1e9).round() as u64))
                .transpose()?
                .unwrap_or(p.gate.period_ps());
            let duty = s.gate_duty.unwrap_or(p.gate.duty());
            p.gate = GateSpec::new(period, duty, 0).map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(v) = s.coherence_slot_ns {
            p.coherence_slot_s = Some(positive("coherence_slot_ns", v)? * 1e-9);
        }
        if let Some(v) = s.statistics {
            p.statistics = match v {
                Statistics::Thermal => PhotonStatistics::Thermal,
                Statistics::Poisson => PhotonStatistics::Poisson,
            };
        }
        if let Some(v) = s.anchor {
            p.anchor = match v {
                Anchor::Signal => ThermalAnchor::Signal,
                Anchor::Idler => ThermalAnchor::Idler,
            };
        }
        apply_detector(&mut p.signal_a, &file.detectors.signal_a);
        apply_detector(&mut p.signal_b, &file.detectors.signal_b);
        apply_detector(&mut p.idler_a, &file.detectors.idler);
        apply_detector(&mut p.idler_b, &file.detectors.idler_b);
        p.validate().map_err(|e| Error::Config(e.to_string()))?;

        let a = &file.analysis;
        let an = &mut c.analysis;
        if let Some(v) = a.bin_width_ns {
            an.bin_width_ps = ns_to_ps("bin_width_ns", v)?;
        }
        if let Some(v) = a.range_ns {
            an.range_ps = ns_to_ps("range_ns", v)? as i64;
        }
        if let Some(v) = a.window_ns {
            an.window_ps = ns_to_ps("window_ns", v)?;
        }
        if let Some(v) = a.floor_inner_ns {
            an.floor.inner_ps = ns_to_ps("floor_inner_ns", v)?;
        }
        if let Some(v) = a.floor_outer_ns {
            an.floor.outer_ps = ns_to_ps("floor_outer_ns", v)?;
        }
        if let Some(v) = a.n_max {
            an.n_max = v;
        }
        if let Some(v) = a.alignment {
            an.alignment = v;
        }
        if let Some(v) = a.subtract_accidentals {
            an.subtract_accidentals = v;
        }
        if let Some(v) = a.auto_fit_bin_ns {
            an.auto_fit_bin_ps = ns_to_ps("auto_fit_bin_ns", v)?;
        }
        if (2 * an.range_ps) as u64 % an.bin_width_ps != 0 {
            return Err(Error::Config("2·range_ns must be a multiple of bin_width_ns".into()));
        }
        if an.floor.outer_ps <= an.floor.inner_ps || an.floor.outer_ps as i64 > an.range_ps {
            return Err(Error::Config("floor region must be non-empty and inside the histogram range".into()));
        }
        if an.n_max == 0 {
            return Err(Error::Config("n_max must be positive".into()));
        }

        let q = &file.acquisition;
        if let Some(v) = q.duration_s {
            c.duration_s = positive("duration_s", v)?;
        }
        if let Some(v) = q.signal_duration_s {
            c.signal_duration_s = positive("signal_duration_s", v)?;
        }
        if let Some(v) = q.idler_duration_s {
            c.idler_duration_s = positive("idler_duration_s", v)?;
        }
        if let Some(v) = q.idler_power_mw {
            c.idler_power_mw = positive("idler_power_mw", v)?;
        }

        let w = &file.sweep;
        if let Some(v) = &w.powers_mw {
            if v.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::Config("sweep powers must be positive".into()));
            }
            c.sweep.powers_mw = v.clone();
        }
        if let Some(v) = &w.windows_ns {
            c.sweep.windows_ps = v.iter().map(|&x| ns_to_ps("windows_ns", x)).collect::<Result<_>>()?;
        }
        if let Some(v) = w.duration_s {
            c.sweep.duration_s = positive("sweep duration_s", v)?;
        }
        if let Some(v) = w.g2_scale {
            c.sweep.g2_scale = positive("g2_scale", v)?;
        }
        Ok(c)
    }
}
