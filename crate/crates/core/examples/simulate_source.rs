//! Simulates the calibrated source for a minute and prints singles rates.
//!
//! cargo run --release --example simulate_source -- [seconds] [seed]

use biphoton::simulator::{effective_mode_number, simulate_source, SourceParams};
use biphoton::tagstream::ChannelRole;

fn main() -> biphoton::Result<()> {
    let mut args = std::env::args().skip(1);
    let duration: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(60.0);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);

    let params = SourceParams::calibrated();
    let stream = simulate_source(&params, duration, seed)?;
    let live = params.live_time(duration);

    println!("pair rate per unit-weight mode: {:.0} /s", params.pair_rate());
    println!("effective signal modes: {:.2}", effective_mode_number(&params.mode_weights)?);
    println!("coherence slot: {:.1} ns", params.coherence_slot() * 1e9);
    println!("{} tags over {duration} s ({live} s live)", stream.len());
    for ch in [ChannelRole::SIGNAL_A, ChannelRole::IDLER] {
        let role = stream.labels()[&ch].name();
        println!("  {role:<10} {:>9.1} Hz", stream.count(ch) as f64 / live);
    }
    Ok(())
}
