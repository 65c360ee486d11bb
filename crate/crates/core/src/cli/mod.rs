//! Command-line front end: configuration, presets, simulated campaigns and
//! CSV/summary emission.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 when an
//! analysis fails.

pub mod config;
pub mod experiments;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{AnalysisParams, ExperimentConfig, SweepParams, WindowAlignment};
pub use experiments::*;

use crate::tagstream::{read_file, write_file, ChannelRole, TagStream};
use crate::{Error, Result, PS_PER_S};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ANALYSIS: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "biphoton", version, about = "Simulate and analyse heralded narrowband photon pairs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// TOML configuration; keys override the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base preset (table1, single-mode, quick).
    #[arg(long, default_value = "table1")]
    pub preset: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Analyse an existing tag file instead of simulating.
    #[arg(long)]
    pub tags: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Arm {
    Signal,
    Idler,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a tag stream and write it as a tag file.
    Simulate(Common),
    /// Cross-correlation histogram and two-sided exponential fit.
    Xcorr(Common),
    /// Unconditioned autocorrelation of one arm.
    Autocorr {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "signal")]
        arm: Arm,
    },
    /// Heralded autocorrelation (triple-coincidence histogram).
    Heralded(Common),
    /// Singles, coincidences and heralding efficiency.
    Metrics(Common),
    /// Pump-power sweep.
    SweepPower(Common),
    /// Coincidence-window sweep.
    SweepWindow(Common),
    /// Escape efficiency from cavity parameters and from heralding.
    Cavity {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 114.0)]
        finesse: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma_finesse: f64,
        #[arg(long, default_value_t = 0.9999)]
        r_hr: f64,
        #[arg(long, default_value_t = 0.970)]
        r_oc: f64,
        #[arg(long, default_value_t = 0.007)]
        sigma_r_oc: f64,
        #[arg(long, default_value_t = 0.28)]
        eta_h: f64,
        #[arg(long, default_value_t = 0.71)]
        eta_t: f64,
        #[arg(long, default_value_t = 0.1)]
        uncorrelated: f64,
    },
    /// Full correlation summary with all histograms.
    Report(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c)
            | Command::Xcorr(c)
            | Command::Heralded(c)
            | Command::Metrics(c)
            | Command::SweepPower(c)
            | Command::SweepWindow(c)
            | Command::Report(c) => c,
            Command::Autocorr { common, .. } | Command::Cavity { common, .. } => common,
        }
    }
}

pub fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text, &c.preset).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
                other => other,
            })?
        }
        None => ExperimentConfig::preset(&c.preset)?,
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(c: &Common, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = c
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Writes through a temporary file so readers never see partial output.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_bytes<T: serde::Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn header(cfg: &ExperimentConfig, title: &str) -> String {
    format!("# {title}\nseed = {}\npreset = {}\n", cfg.seed, cfg.preset)
}

fn config_block(cfg: &ExperimentConfig) -> String {
    let mut s = String::from("\n# config\n");
    s.push_str(&cfg.text);
    if !cfg.text.ends_with('\n') {
        s.push('\n');
    }
    s
}

/// Stream and live time, from `--tags` or a simulation of `source`.
fn acquire(c: &Common, cfg: &ExperimentConfig, source: &crate::simulator::SourceParams, duration_s: f64, k: u64) -> Result<(TagStream, f64)> {
    match &c.tags {
        Some(path) => {
            let s = read_file(path)?;
            let end = s.tags().last().map(|t| t.time * s.resolution_ps() as u64).unwrap_or(0);
            let live = source.gate.live_time_ps(end + 1) as f64 / PS_PER_S;
            if !(live > 0.0) {
                return Err(Error::InsufficientData("tag file holds no live time".into()));
            }
            Ok((s, live))
        }
        None => {
            let s = crate::simulator::simulate_source(source, duration_s, derive_seed(cfg.seed, k))?;
            Ok((s, source.live_time(duration_s)))
        }
    }
}

fn fit_lines(f: &crate::fitting::FitResult) -> String {
    let mut s = String::new();
    for ((n, v), e) in f.model.param_names().iter().zip(&f.params).zip(&f.errors) {
        let _ = writeln!(s, "{n} = {v:.6e} ± {e:.3e}");
    }
    let _ = writeln!(s, "chi2 = {:.4}\ndof = {}\nconverged = {}\niterations = {}", f.chi2, f.dof, f.converged, f.iterations);
    s
}

/// Runs one command; returns a summary for stdout.
pub fn execute(cmd: &Command) -> Result<String> {
    let c = cmd.common();
    let cfg = load_config(c)?;
    let a = &cfg.analysis;
    let eta_det = cfg.source.signal_a.efficiency;
    match cmd {
        Command::Simulate(_) => {
            let dir = out_dir(c, &cfg)?;
            let s = crate::simulator::simulate_source(&cfg.source, cfg.duration_s, derive_seed(cfg.seed, 0))?;
            let tmp = dir.join("tags.tmp");
            write_file(&s, &tmp)?;
            fs::rename(&tmp, dir.join("tags.bptt"))?;
            let mut text = header(&cfg, "simulated tags");
            let _ = writeln!(text, "duration_s = {}\nlive_time_s = {}\ntags = {}", cfg.duration_s, cfg.source.live_time(cfg.duration_s), s.len());
            for (ch, role) in s.labels() {
                let _ = writeln!(text, "count_{} = {}", role.name(), s.count(*ch));
            }
            text.push_str(&config_block(&cfg));
            write_atomic(&dir.join("simulate.txt"), text.as_bytes())?;
            Ok(text)
        }
        Command::Xcorr(_) | Command::Metrics(_) => {
            let dir = out_dir(c, &cfg)?;
            let src = cross_source(&cfg.source);
            let (s, live) = acquire(c, &cfg, &src, cfg.duration_s, 1)?;
            let x = analyze_cross(&s, &[ChannelRole::SIGNAL_A], live, eta_det, a)?;
            let mut text = header(&cfg, if matches!(cmd, Command::Xcorr(_)) { "cross-correlation" } else { "coincidence metrics" });
            let _ = writeln!(
                text,
                "live_time_s = {live}\nherald_rate_hz = {:.4}\nsignal_rate_hz = {:.4}\ncoincidence_rate_hz = {:.4}\nheralding_efficiency = {:.5}\ng2_si_window = {:.4} ± {:.4}\ng2_si_zero = {:.4} ± {:.4}",
                x.herald_rate,
                x.signal_rate,
                x.point.rate,
                x.point.eta_h,
                x.g2.value,
                x.g2.sigma,
                x.g2_zero().value,
                x.g2_zero().sigma
            );
            if let Command::Xcorr(_) = cmd {
                let _ = writeln!(
                    text,
                    "dnu_s_mhz = {:.4}\ndnu_i_mhz = {:.4}\ntau_c_ns = {:.3}",
                    x.fit.dnu_s() / 1e6,
                    x.fit.dnu_i() / 1e6,
                    x.fit.fwhm_ns()
                );
                text.push_str(&fit_lines(&x.fit));
                let mut buf = Vec::new();
                x.hist.write_csv(&mut buf, x.g2.floor)?;
                write_atomic(&dir.join("xcorr.csv"), &buf)?;
            }
            text.push_str(&config_block(&cfg));
            let name = if matches!(cmd, Command::Xcorr(_)) { "xcorr.txt" } else { "metrics.txt" };
            write_atomic(&dir.join(name), text.as_bytes())?;
            Ok(text)
        }
        Command::Autocorr { arm, .. } => {
            let dir = out_dir(c, &cfg)?;
            let (src, dur, k, ch) = match arm {
                Arm::Signal => (split_source(&cfg.source), cfg.signal_duration_s, 2, (ChannelRole::SIGNAL_A, ChannelRole::SIGNAL_B)),
                Arm::Idler => (
                    idler_source(&cfg.source, cfg.idler_power_mw),
                    cfg.idler_duration_s,
                    3,
                    (ChannelRole::IDLER, ChannelRole::IDLER_B),
                ),
            };
            let (s, live) = acquire(c, &cfg, &src, dur, k)?;
            let r = analyze_auto(&s, ch.0, ch.1, live, a)?;
            let mut text = header(&cfg, "autocorrelation");
            let _ = writeln!(
                text,
                "arm = {arm:?}\nlive_time_s = {live}\nrate_a_hz = {:.4}\nrate_b_hz = {:.4}\ng2_window = {:.5} ± {:.5}\ng2_zero = {:.5} ± {:.5}\nfwhm_ns = {:.3}",
                r.rate_a,
                r.rate_b,
                r.g2.value,
                r.g2.sigma,
                r.g2_zero().value,
                r.g2_zero().sigma,
                r.fit.fwhm_ns()
            );
            text.push_str(&fit_lines(&r.fit));
            text.push_str(&config_block(&cfg));
            let mut buf = Vec::new();
            r.hist.write_csv(&mut buf, r.g2.floor)?;
            write_atomic(&dir.join("autocorr.csv"), &buf)?;
            write_atomic(&dir.join("autocorr.txt"), text.as_bytes())?;
            Ok(text)
        }
        Command::Heralded(_) => {
            let dir = out_dir(c, &cfg)?;
            let src = split_source(&cfg.source);
            let (s, live) = acquire(c, &cfg, &src, cfg.signal_duration_s, 2)?;
            let x = analyze_cross(&s, &[ChannelRole::SIGNAL_A, ChannelRole::SIGNAL_B], live, eta_det, a)?;
            let f = analyze_heralded(&s, x.center_ps, a)?;
            let mut text = header(&cfg, "heralded autocorrelation");
            let _ = writeln!(
                text,
                "live_time_s = {live}\nheralds = {}\nwindow_ns = {}\noffset_ns = {:.3}\ng2_iss = {:.5} ± {:.5}",
                f.heralds,
                f.window_ps as f64 / 1000.0,
                f.offset_ps as f64 / 1000.0,
                f.g2,
                f.sigma
            );
            text.push_str(&config_block(&cfg));
            let mut buf = Vec::new();
            f.write_csv(&mut buf)?;
            write_atomic(&dir.join("fasel.csv"), &buf)?;
            write_atomic(&dir.join("heralded.txt"), text.as_bytes())?;
            Ok(text)
        }
        Command::SweepPower(_) => {
            let dir = out_dir(c, &cfg)?;
            let rows = sweep_power(&cfg)?;
            write_atomic(&dir.join("sweep_power.csv"), &csv_bytes(&rows)?)?;
            let mut text = header(&cfg, "power sweep");
            for r in &rows {
                let _ = writeln!(
                    text,
                    "P = {:.4} mW  rate = {:.4} Hz  eta_h = {:.4}  g2_si = {:.2} ± {:.2} (model {:.2})  g2_iss = {:.4} ± {:.4} (model {:.4})",
                    r.power_mw, r.coincidence_rate, r.eta_h, r.g2_si, r.g2_si_sigma, r.model_g2_si, r.g2_iss, r.g2_iss_sigma, r.model_g2_iss
                );
            }
            text.push_str(&config_block(&cfg));
            write_atomic(&dir.join("sweep_power.txt"), text.as_bytes())?;
            Ok(text)
        }
        Command::SweepWindow(_) => {
            let dir = out_dir(c, &cfg)?;
            let rows = match &c.tags {
                Some(_) => {
                    let src = cross_source(&cfg.source);
                    let (s, live) = acquire(c, &cfg, &src, cfg.duration_s, 1)?;
                    let x = analyze_cross(&s, &[ChannelRole::SIGNAL_A], live, eta_det, a)?;
                    window_rows(&x, &cfg.sweep.windows_ps, eta_det, cfg.sweep.g2_scale, a)?
                }
                None => sweep_window(&cfg)?,
            };
            write_atomic(&dir.join("sweep_window.csv"), &csv_bytes(&rows)?)?;
            let mut text = header(&cfg, "window sweep");
            for r in &rows {
                let _ = writeln!(
                    text,
                    "window = {:.0} ns  rate = {:.4} Hz  eta_h = {:.4}  g2_si = {:.3}",
                    r.window_ns, r.coincidence_rate, r.eta_h, r.g2_si
                );
            }
            text.push_str(&config_block(&cfg));
            write_atomic(&dir.join("sweep_window.txt"), text.as_bytes())?;
            Ok(text)
        }
        Command::Cavity {
            finesse,
            sigma_finesse,
            r_hr,
            r_oc,
            sigma_r_oc,
            eta_h,
            eta_t,
            uncorrelated,
            ..
        } => {
            let e = escape_comparison(&CavityInputs {
                finesse: *finesse,
                sigma_finesse: *sigma_finesse,
                r_hr: *r_hr,
                r_oc: *r_oc,
                sigma_r_oc: *sigma_r_oc,
                eta_h: *eta_h,
                eta_t: *eta_t,
                uncorrelated_fraction: *uncorrelated,
            })?;
            let mut text = String::from("# escape efficiency\n");
            let _ = writeln!(
                text,
                "finesse = {finesse}\nr_hr = {r_hr}\nr_oc = {r_oc} ± {sigma_r_oc}\n\nroute | escape efficiency\ncavity | {:.4} ± {:.4} (L_int = {:.4} ± {:.4}, rho = {:.6})\nheralding | {:.4}\nheralding, noise corrected | {:.4}",
                e.cavity.eta_esc,
                e.cavity.sigma_eta_esc,
                e.cavity.l_int,
                e.cavity.sigma_l_int,
                e.cavity.rho,
                e.from_heralding,
                e.from_heralding_noise_corrected
            );
            if c.out.is_some() || cfg.out.is_some() {
                let dir = out_dir(c, &cfg)?;
                write_atomic(&dir.join("cavity.txt"), text.as_bytes())?;
            }
            Ok(text)
        }
        Command::Report(_) => {
            let dir = out_dir(c, &cfg)?;
            let r = table1(&cfg)?;
            let text = r.render(&cfg);
            let csv = |h: &crate::correlator::CorrelationHistogram, floor: f64| -> Result<Vec<u8>> {
                let mut buf = Vec::new();
                h.write_csv(&mut buf, floor)?;
                Ok(buf)
            };
            write_atomic(&dir.join("xcorr.csv"), &csv(&r.cross.hist, r.cross.g2.floor)?)?;
            write_atomic(&dir.join("signal_autocorr.csv"), &csv(&r.signal_auto.hist, r.signal_auto.g2.floor)?)?;
            write_atomic(&dir.join("idler_autocorr.csv"), &csv(&r.idler_auto.hist, r.idler_auto.g2.floor)?)?;
            let mut buf = Vec::new();
            r.heralded.write_csv(&mut buf)?;
            write_atomic(&dir.join("fasel.csv"), &buf)?;
            write_atomic(&dir.join("report.txt"), text.as_bytes())?;
            Ok(text)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_ANALYSIS,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
