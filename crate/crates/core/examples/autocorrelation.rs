//! Unconditioned autocorrelation behind a 50/50 splitter as the number of
//! equally bright modes grows. Thermal statistics give 1 + 1/N at zero delay.

use biphoton::correlator::auto_correlation_histogram;
use biphoton::fitting::fit_symmetric_exponential;
use biphoton::models::multimode_bunching;
use biphoton::simulator::{simulate_source, SourceParams};
use biphoton::tagstream::ChannelRole;

fn main() -> biphoton::Result<()> {
    println!("modes   g2(0) fit          1 + 1/N   fwhm");
    for n in [1usize, 2, 3, 5, 8] {
        let mut p = SourceParams::ideal_single_mode(100_000.0);
        p.signal_split = 0.5;
        p.mode_weights = vec![1.0; n];
        let s = simulate_source(&p, 30.0, n as u64)?;
        let h = auto_correlation_histogram(&s, ChannelRole::SIGNAL_A, ChannelRole::SIGNAL_B, 5_000, (-6_000_000, 6_000_000))?
            .rebinned(4)?;
        let f = fit_symmetric_exponential(&h)?;
        println!(
            "{n:>5}   {:.3} ± {:.3}      {:.3}     {:.0} ns",
            f.g2_peak(),
            f.g2_peak_sigma(),
            multimode_bunching(n as f64)?,
            f.fwhm_ns()
        );
    }
    Ok(())
}
