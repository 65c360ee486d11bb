//! Coincidence rate, heralding efficiency and g² against the width of the
//! coincidence window, from one cross-correlation histogram.

use biphoton::correlator::{cross_correlation_histogram, window_sweep, DEFAULT_FLOOR};
use biphoton::fitting::fit_double_exponential;
use biphoton::models::pair_window_fraction;
use biphoton::simulator::{simulate_source, SourceParams};
use biphoton::tagstream::ChannelRole;

fn main() -> biphoton::Result<()> {
    let p = SourceParams::calibrated();
    let duration = 1200.0;
    let s = simulate_source(&p, duration, 11)?;
    let mut h = cross_correlation_histogram(&s, ChannelRole::IDLER, ChannelRole::SIGNAL_A, 5_000, (-6_000_000, 6_000_000))?;
    h.acquisition_ps = (p.live_time(duration) * 1e12) as u64;
    let center = fit_double_exponential(&h)?.tau0_ns() * 1e3;

    let windows: Vec<u64> = [10, 25, 50, 100, 200, 300, 400, 600, 1000, 2000].iter().map(|w| w * 1000).collect();
    println!("window_ns  rate_hz  eta_h   pair_fraction  g2");
    for w in window_sweep(&h, center, &windows, p.signal_a.efficiency, DEFAULT_FLOOR)? {
        let frac = pair_window_fraction(p.dnu_s, p.dnu_i, w.window_ns * 1e-9);
        println!("{:>9.0}  {:>7.2}  {:.4}  {:.4}         {:.1}", w.window_ns, w.rate, w.eta_h, frac, w.g2);
    }
    Ok(())
}
