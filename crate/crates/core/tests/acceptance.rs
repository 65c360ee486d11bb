//! Acceptance run: one PASS/FAIL/SKIP line per criterion, details indented
//! below. Exits non-zero when any criterion fails.

use std::time::Instant;

use biphoton::cli::{
    cross_source, idler_source, split_source, sweep_model, sweep_power, table1, window_rows, ExperimentConfig,
    PowerRow, Table1Report,
};
use biphoton::correlator::{
    auto_correlation_histogram, cross_correlation_histogram, cross_correlation_histogram_chunked, normalized_g2,
    FloorRegion,
};
use biphoton::fitting::{finite_difference_check, fit_symmetric_exponential, PeakModel};
use biphoton::models::{
    cauchy_schwarz, cavity_solve, conditioned_from_unconditioned, lorentzian_autocorrelation, window_correction,
};
use biphoton::simulator::{simulate_source, SourceParams};
use biphoton::tagstream::{read_tags, write_tags, ChannelRole, TagStream, TimeTag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(PartialEq)]
enum Status {
    Pass,
    Fail,
    Skip,
}

struct Criterion {
    lines: Vec<(Status, String)>,
}

impl Criterion {
    fn new() -> Self {
        Criterion { lines: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: String) {
        self.lines.push((if ok { Status::Pass } else { Status::Fail }, what));
    }

    fn skip(&mut self, what: String) {
        self.lines.push((Status::Skip, what));
    }

    fn report(self, id: &str, title: &str) -> bool {
        let failed = self.lines.iter().any(|(s, _)| *s == Status::Fail);
        let all_skipped = self.lines.iter().all(|(s, _)| *s == Status::Skip);
        let tag = if failed {
            "FAIL"
        } else if all_skipped {
            "SKIP"
        } else {
            "PASS"
        };
        println!("[{tag}] {id} {title}");
        for (s, what) in self.lines {
            let t = match s {
                Status::Pass => "ok  ",
                Status::Fail => "FAIL",
                Status::Skip => "skip",
            };
            println!("       {t} {what}");
        }
        !failed
    }
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x - target).abs() <= rel * target
}

fn c1(r: &Table1Report) -> Criterion {
    let mut c = Criterion::new();
    let f = &r.cross.fit;
    c.check(within(f.dnu_s(), 3.7e6, 0.05), format!("dnu_s = {:.3} ± {:.3} MHz (3.7 ± 5 %)", f.dnu_s() / 1e6, f.dnu_s_sigma() / 1e6));
    c.check(within(f.dnu_i(), 2.3e6, 0.05), format!("dnu_i = {:.3} ± {:.3} MHz (2.3 ± 5 %)", f.dnu_i() / 1e6, f.dnu_i_sigma() / 1e6));
    c.check(within(f.fwhm_ns(), 78.0, 0.05), format!("tau_c = {:.2} ns (78 ± 5 %)", f.fwhm_ns()));
    c
}

fn c2(r: &Table1Report, sweep: &[PowerRow]) -> Criterion {
    let mut c = Criterion::new();
    // Least-squares slope through the origin over the points up to 1 mW.
    let (sxy, sxx) = sweep
        .iter()
        .filter(|p| p.power_mw <= 1.0)
        .fold((0.0, 0.0), |(a, b), p| (a + p.power_mw * p.coincidence_rate, b + p.power_mw * p.power_mw));
    let slope = sxy / sxx;
    c.check(within(slope, 34.0, 0.15), format!("coincidence slope = {slope:.2} Hz/mW (34 ± 15 %)"));
    let b = &r.budget;
    c.check(within(b.created_pair_rate, 2200.0, 0.15), format!("created pairs = {:.0} /s/mW (2200 ± 15 %)", b.created_pair_rate));
    c.check(
        within(b.spectral_brightness, 800.0, 0.15),
        format!("spectral brightness = {:.0} /s/mW/MHz (800 ± 15 %)", b.spectral_brightness),
    );
    c.check(within(b.creation_prob, 2.2e-3, 0.15), format!("creation probability = {:.3e} /mW (2.2e-3 ± 15 %)", b.creation_prob));
    c
}

fn c3(r: &Table1Report, config: &ExperimentConfig) -> Criterion {
    let mut c = Criterion::new();
    let eta = r.cross.point.eta_h;
    c.check((eta - 0.28).abs() <= 0.02, format!("eta_H = {:.2} % (28 ± 2)", 100.0 * eta));
    let rows = window_rows(&r.cross, &config.sweep.windows_ps, config.source.signal_a.efficiency, 1.0, &config.analysis)
        .expect("window sweep");
    let monotone = rows.windows(2).all(|w| w[1].eta_h >= w[0].eta_h);
    c.check(monotone, format!("eta_H non-decreasing over {} windows", rows.len()));
    let slope = |a: &biphoton::cli::WindowRow, b: &biphoton::cli::WindowRow| (b.eta_h - a.eta_h) / (b.window_ns - a.window_ns);
    let first = slope(&rows[0], rows.iter().find(|w| w.window_ns >= 100.0).unwrap());
    let last = slope(&rows[rows.len() - 2], &rows[rows.len() - 1]);
    c.check(
        last < 0.05 * first,
        format!("saturating: late slope {last:.2e}/ns < 5 % of early slope {first:.2e}/ns"),
    );
    c
}

fn c4(r: &Table1Report, sweep: &[PowerRow], config: &ExperimentConfig) -> Criterion {
    let mut c = Criterion::new();
    let g = &r.cross.g2;
    c.check((56.0..=84.0).contains(&g.value), format!("g_si(400 ns) = {:.1} ± {:.1} (70 ± 20 %)", g.value, g.sigma));
    let h = &r.heralded;
    c.check(
        (0.0175..=0.07).contains(&h.g2),
        format!("g_iss = {:.4} ± {:.4} (within x2 of 0.035)", h.g2, h.sigma),
    );
    let g0 = r.cross.g2_zero();
    c.check((268.0..=402.0).contains(&g0.value), format!("g_si(0) = {:.0} ± {:.0} (335 ± 20 %)", g0.value, g0.sigma));

    let best = sweep
        .iter()
        .max_by(|a, b| a.g2_si.partial_cmp(&b.g2_si).unwrap())
        .unwrap();
    c.check(
        best.power_mw <= 0.125,
        format!("sweep maximum g_si = {:.1} ± {:.1} at {} mW", best.g2_si, best.g2_si_sigma, best.power_mw),
    );
    let at = sweep.iter().find(|p| (p.power_mw - 0.125).abs() < 1e-9).unwrap();
    let lo = 150.0 - 3.0 * at.g2_si_sigma;
    let hi = 170.0 + 3.0 * at.g2_si_sigma;
    c.check(
        (lo..=hi).contains(&at.g2_si),
        format!("g_si(0.125 mW) = {:.1} ± {:.1} (150-170 within 3 sigma)", at.g2_si, at.g2_si_sigma),
    );

    // The simulated points below ~0.25 mW hold almost no triple coincidences;
    // the low-power rise is tested on the model curve, which the simulated
    // points must agree with.
    let base = &config.source;
    let w = config.analysis.window_ps;
    let scan: Vec<(f64, f64)> = (0..=60)
        .map(|i| {
            let p = 0.005 * 10f64.powf(i as f64 / 20.0);
            (p, sweep_model(base, p, w).unwrap().g2_iss)
        })
        .collect();
    let (pmin, gmin) = scan.iter().copied().min_by(|a, b| a.1.partial_cmp(&b.1).unwrap()).unwrap();
    let lowest = scan[0];
    c.check(
        lowest.1 > gmin && pmin > lowest.0 && pmin < 1.0,
        format!("model g_iss minimum {gmin:.4} at {pmin:.3} mW, {:.4} at {} mW", lowest.1, lowest.0),
    );
    let mut worst: f64 = 0.0;
    let mut used = 0;
    for p in sweep.iter().filter(|p| p.g2_iss.is_finite() && p.g2_iss_sigma.is_finite()) {
        worst = worst.max((p.g2_iss - p.model_g2_iss).abs() / p.g2_iss_sigma);
        used += 1;
    }
    c.check(
        used >= 3 && worst <= 3.0,
        format!("simulated g_iss agrees with model at {used} powers, worst {worst:.2} sigma"),
    );
    c
}

fn signal_peak(p: &SourceParams, duration: f64, seed: u64) -> (f64, f64) {
    let s = simulate_source(p, duration, seed).expect("simulation");
    let h = auto_correlation_histogram(&s, ChannelRole::SIGNAL_A, ChannelRole::SIGNAL_B, 5_000, (-6_000_000, 6_000_000))
        .and_then(|h| h.rebinned(4))
        .expect("histogram");
    let f = fit_symmetric_exponential(&h).expect("fit");
    (f.g2_peak(), f.g2_peak_sigma())
}

fn c5(r: &Table1Report) -> Criterion {
    let mut c = Criterion::new();
    let mut ideal = SourceParams::ideal_single_mode(100_000.0);
    ideal.signal_split = 0.5;
    let (g, s) = signal_peak(&ideal, 60.0, 501);
    c.check((g - 2.0).abs() <= 0.05, format!("single mode, no darks: g(0) = {g:.3} ± {s:.3} (2.00 ± 0.05)"));
    for n in [2usize, 4, 8] {
        let mut p = ideal.clone();
        p.mode_weights = vec![1.0; n];
        let (g, s) = signal_peak(&p, 60.0, 510 + n as u64);
        let want = 1.0 + 1.0 / n as f64;
        c.check((g - want).abs() <= 0.05, format!("{n} equal modes: g(0) = {g:.3} ± {s:.3} ({want:.3} ± 0.05)"));
    }
    let gs = &r.signal_auto.g2;
    c.check(
        (1.05..=1.20).contains(&gs.value),
        format!("calibrated source g_ss(400 ns) = {:.4} ± {:.4} (in [1.05, 1.20])", gs.value, gs.sigma),
    );
    c
}

/// Window-integrated correlations of a source with the pairing switched off.
fn classical_surrogate(config: &ExperimentConfig) -> (f64, f64) {
    let mut base = config.source.clone();
    base.correlated = false;
    let floor = FloorRegion { inner_ps: 1_000_000, outer_ps: 5_000_000 };
    let range = (-6_000_000, 6_000_000);
    let g = |s: &TagStream, a: u8, b: u8| {
        let h = cross_correlation_histogram(s, a, b, 5_000, range).expect("histogram");
        normalized_g2(&h, 400_000, 0.0, floor).expect("g2").measured()
    };
    let cross = simulate_source(&cross_source(&base), 1200.0, 601).expect("simulation");
    let split = simulate_source(&split_source(&base), 2400.0, 602).expect("simulation");
    let idler = simulate_source(&idler_source(&base, 4.3), 4800.0, 603).expect("simulation");
    let r = cauchy_schwarz(
        g(&cross, ChannelRole::IDLER, ChannelRole::SIGNAL_A),
        g(&split, ChannelRole::SIGNAL_A, ChannelRole::SIGNAL_B),
        g(&idler, ChannelRole::IDLER, ChannelRole::IDLER_B),
    );
    (r.value, r.sigma)
}

fn c6(r: &Table1Report, config: &ExperimentConfig) -> Criterion {
    let mut c = Criterion::new();
    let rw = r.r_window;
    c.check(rw.value > 1000.0, format!("R(400 ns) = {:.0} ± {:.0} (> 1000)", rw.value, rw.sigma));
    let r0 = r.r_zero;
    c.check(
        within(r0.value, 63e3, 0.30),
        format!("R(0) = {:.3e} ± {:.1e} (6.3e4 ± 30 %)", r0.value, r0.sigma),
    );
    let (v, s) = classical_surrogate(config);
    c.check(v - 3.0 * s <= 1.0, format!("uncorrelated surrogate R(400 ns) = {v:.4} ± {s:.4} (<= 1 within 3 sigma)"));
    c
}

/// Adaptive Simpson quadrature.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    rec(f, a, b, fa, fm, fb, whole, tol, depth)
}

fn c7() -> Criterion {
    let mut c = Criterion::new();
    let w = window_correction(78e-9, 400e-9);
    c.check((1.0 / w - 5.16).abs() < 0.01, format!("window correction = 1/{:.4} (1/5.16)", 1.0 / w));
    let s = cavity_solve(114.0, 0.9999, 0.970).expect("cavity");
    c.check((s.l_int - 0.024).abs() <= 0.001, format!("L_int = {:.3} % (2.4 ± 0.1)", 100.0 * s.l_int));
    c.check((s.eta_esc - 0.56).abs() <= 0.02, format!("eta_esc = {:.2} % (56 ± 2)", 100.0 * s.eta_esc));

    // ∫ ψ(t) ψ(t + τ) dt for ψ(t) = exp(-2πΔν t), t ≥ 0, integrated in units
    // of the decay time on [0, 60].
    let dnu = 3.7e6;
    let k = 2.0 * std::f64::consts::PI * dnu;
    let mut worst: f64 = 0.0;
    for tau in [0.0, 5e-9, 43e-9, 150e-9, -80e-9] {
        let f = |u: f64| (-u).exp() * (-(u + k * f64::abs(tau))).exp() / k;
        let q = simpson(&f, 0.0, 60.0, 1e-16, 40);
        let closed = lorentzian_autocorrelation(dnu, tau);
        worst = worst.max(((closed - q) / q).abs());
    }
    c.check(worst < 1e-6, format!("Lorentzian closed form vs quadrature: max rel. deviation {worst:.1e} (< 1e-6)"));
    let g = conditioned_from_unconditioned(1.57, 1.32, 70.0).expect("prediction");
    c.check((g - 0.030).abs() <= 0.001, format!("1.57 * 1.32 / 70 = {g:.4} (0.030 ± 0.001)"));
    c
}

fn brute_force(starts: &[u64], stops: &[u64], bw: u64, range: (i64, i64)) -> Vec<u64> {
    let mut counts = vec![0u64; ((range.1 - range.0) as u64 / bw) as usize];
    for &a in starts {
        for &b in stops {
            let d = b as i64 - a as i64;
            if d >= range.0 && d < range.1 {
                counts[((d - range.0) as u64 / bw) as usize] += 1;
            }
        }
    }
    counts
}

fn c8() -> Criterion {
    let mut c = Criterion::new();
    let mut rng = ChaCha8Rng::seed_from_u64(801);
    let mut tags = Vec::new();
    let mut t = 0u64;
    while tags.len() < 10_000 {
        t += rng.gen_range(1..300_000);
        for _ in 0..rng.gen_range(1..4) {
            tags.push(TimeTag::new(t + rng.gen_range(0..40_000), rng.gen_range(0..3)));
        }
    }
    tags.truncate(10_000);
    let s = TagStream::from_unsorted(1, tags, 4).expect("stream");
    let range = (-250_000, 250_000);
    let h = cross_correlation_histogram(&s, 2, 0, 5_000, range).expect("histogram");
    let oracle = brute_force(&s.times_ps(2), &s.times_ps(0), 5_000, range);
    c.check(h.counts == oracle, format!("multi-stop sweep == all-pairs oracle on {} tags", s.len()));

    let sim = simulate_source(&SourceParams::calibrated(), 120.0, 802).expect("simulation");
    let serial = cross_correlation_histogram(&sim, 2, 0, 5_000, (-6_000_000, 6_000_000)).expect("histogram");
    let all_equal = [2, 5, 17, 256].iter().all(|&n| {
        cross_correlation_histogram_chunked(&sim, 2, 0, 5_000, (-6_000_000, 6_000_000), n).expect("histogram") == serial
    });
    c.check(all_equal, format!("chunked == serial, bit-exact, on {} simulated tags", sim.len()));

    let mut buf = Vec::new();
    write_tags(&sim, &mut buf).expect("write");
    let back = read_tags(&buf[..]).expect("read");
    let mut again = Vec::new();
    write_tags(&back, &mut again).expect("write");
    c.check(back == sim && buf == again, format!("tag file round-trip bit-exact ({} bytes)", buf.len()));

    let xs: Vec<f64> = (0..400).map(|i| -1000.0 + 5.0 * i as f64 + 2.5).collect();
    let d = finite_difference_check(PeakModel::DoubleExponential, &[900.0, 0.023, 0.0145, 0.3, 3.2], &xs);
    let s = finite_difference_check(PeakModel::SymmetricExponential, &[0.18, 112.0, 0.2, 23.0], &xs);
    let worst = d.max_deviation.max(s.max_deviation);
    c.check(worst < 1e-5, format!("Jacobian vs central differences: {worst:.1e} (< 1e-5)"));
    c
}

fn c9() -> Criterion {
    let mut c = Criterion::new();
    // 10⁷ tags on two channels at 500 kHz each: ~5 stops per start inside ±5 µs.
    let mut rng = ChaCha8Rng::seed_from_u64(901);
    let mut tags = Vec::with_capacity(10_000_000);
    let mut t = [0u64; 2];
    for i in 0..10_000_000usize {
        let ch = i % 2;
        t[ch] += (-(rng.gen::<f64>()).ln() * 2e6) as u64 + 1;
        tags.push(TimeTag::new(t[ch], if ch == 0 { 2 } else { 0 }));
    }
    let s = TagStream::from_unsorted(1, tags, 4).expect("stream");
    let range = (-5_000_000, 5_000_000);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
    let t0 = Instant::now();
    let h = pool.install(|| cross_correlation_histogram(&s, 2, 0, 5_000, range)).expect("histogram");
    let single = t0.elapsed().as_secs_f64();
    c.check(
        single < 5.0,
        format!("1e7 tags, ±5 µs, 5 ns bins: {single:.2} s single-threaded (< 5 s), {} pairs", h.total()),
    );
    let cpus = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    if cpus < 2 {
        c.skip(format!("thread scaling: {cpus} CPU available"));
    } else {
        let t0 = Instant::now();
        let hc = cross_correlation_histogram_chunked(&s, 2, 0, 5_000, range, 4 * cpus).expect("histogram");
        let multi = t0.elapsed().as_secs_f64();
        c.check(
            hc == h && multi < single,
            format!("thread scaling: {multi:.2} s on {cpus} threads vs {single:.2} s"),
        );
    }
    c
}

fn main() {
    // Only the acceptance target runs under `cargo test`; ignore harness flags.
    let config = ExperimentConfig::preset("table1").expect("preset");
    let report = table1(&config).expect("correlation summary");
    let sweep = sweep_power(&config).expect("power sweep");

    let results = [
        c1(&report).report("C1", "biphoton linewidths and correlation time from the cross-correlation fit"),
        c2(&report, &sweep).report("C2", "coincidence slope and rate budget"),
        c3(&report, &config).report("C3", "heralding efficiency and window dependence"),
        c4(&report, &sweep, &config).report("C4", "cross- and heralded autocorrelation, power dependence"),
        c5(&report).report("C5", "unconditioned autocorrelation and mode number"),
        c6(&report, &config).report("C6", "Cauchy-Schwarz violation"),
        c7().report("C7", "analytic oracles"),
        c8().report("C8", "engine correctness"),
        c9().report("C9", "correlator throughput"),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("\nacceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
