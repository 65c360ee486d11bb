//! Scanning-cavity spectrum of the signal cluster, with and without the
//! idler filter selecting the central mode.

use biphoton::simulator::{cluster_spectrum, effective_mode_number, SourceParams};

fn main() -> biphoton::Result<()> {
    let p = SourceParams::calibrated();
    let span = 2.5 * p.fsr_hz;
    let scan = cluster_spectrum(&p, (-span, span), 2e6, 20e6)?;
    let peak = scan.intensities.iter().cloned().fold(0.0, f64::max);
    // one row per 40 MHz, showing the strongest point in it
    for (f, block) in scan.frequencies.chunks(20).zip(scan.intensities.chunks(20)) {
        let top = block.iter().cloned().fold(0.0, f64::max);
        println!("{:>8.0} MHz |{}", f[0] / 1e6, "*".repeat((60.0 * top / peak) as usize));
    }
    match scan.envelope_fwhm(p.fsr_hz) {
        Some(w) => println!("cluster envelope FWHM = {:.2} GHz", w / 1e9),
        None => println!("cluster envelope not resolved"),
    }
    println!("effective modes = {:.2}", effective_mode_number(&p.mode_weights)?);
    println!("heralded side-mode fraction = {:.2e}", scan.heralded_side_fraction(p.fsr_hz));
    Ok(())
}
