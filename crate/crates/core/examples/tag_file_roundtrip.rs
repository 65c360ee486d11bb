//! Writes a simulated stream to a tag file, reads it back and checks that
//! the correlation histogram is unchanged.

use biphoton::correlator::cross_correlation_histogram;
use biphoton::simulator::{simulate_source, SourceParams};
use biphoton::tagstream::{read_file, write_file, ChannelRole};

fn main() -> biphoton::Result<()> {
    let s = simulate_source(&SourceParams::calibrated(), 60.0, 5)?;
    let path = std::env::temp_dir().join("biphoton_example.bptt");
    let bytes = write_file(&s, &path)?;
    let back = read_file(&path)?;
    println!("{} tags, {bytes} bytes, identical: {}", back.len(), back == s);

    let h = |st| cross_correlation_histogram(st, ChannelRole::IDLER, ChannelRole::SIGNAL_A, 5_000, (-1_000_000, 1_000_000));
    println!("histograms identical: {}", h(&s)?.counts == h(&back)?.counts);
    std::fs::remove_file(&path)?;
    Ok(())
}
