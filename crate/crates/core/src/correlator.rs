//! Correlation histograms and the estimators built on them.
//!
//! Delays are always `t_stop - t_start` in picoseconds. Histograms cover the
//! half-open delay range `[τ_min, τ_max)` in equal bins. All pairs within the
//! range are counted (multi-stop), so a histogram equals the brute-force
//! all-pairs count and histograms of disjoint start chunks add exactly.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::models::{heralding_efficiency, Measured};
use crate::tagstream::TagStream;
use crate::{Error, Result, PS_PER_NS, PS_PER_S};

pub const DEFAULT_BIN_WIDTH_PS: u64 = 5_000;
pub const DEFAULT_WINDOW_PS: u64 = 400_000;
/// Floor region `|τ - τ₀| ∈ [1 µs, 5 µs]`.
pub const DEFAULT_FLOOR: FloorRegion = FloorRegion { inner_ps: 1_000_000, outer_ps: 5_000_000 };
pub const DEFAULT_N_MAX: usize = 15;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorrelationHistogram {
    pub bin_width_ps: u64,
    pub range_ps: (i64, i64),
    pub counts: Vec<u64>,
    pub start_channel: u8,
    pub stop_channel: u8,
    pub start_total: u64,
    pub stop_total: u64,
    /// Time over which the tags were acquired, used for rates and the
    /// accidental baseline.
    pub acquisition_ps: u64,
}

impl CorrelationHistogram {
    fn empty(start: u8, stop: u8, bin_width_ps: u64, range_ps: (i64, i64)) -> Result<Self> {
        check_geometry(bin_width_ps, range_ps)?;
        let n = ((range_ps.1 - range_ps.0) as u64 / bin_width_ps) as usize;
        Ok(CorrelationHistogram {
            bin_width_ps,
            range_ps,
            counts: vec![0; n],
            start_channel: start,
            stop_channel: stop,
            start_total: 0,
            stop_total: 0,
            acquisition_ps: 0,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Centre of bin `i`, ps.
    pub fn bin_center_ps(&self, i: usize) -> f64 {
        self.range_ps.0 as f64 + (i as f64 + 0.5) * self.bin_width_ps as f64
    }

    pub fn bin_centers_ns(&self) -> Vec<f64> {
        (0..self.n_bins()).map(|i| self.bin_center_ps(i) / PS_PER_NS as f64).collect()
    }

    pub fn acquisition_s(&self) -> f64 {
        self.acquisition_ps as f64 / PS_PER_S
    }

    /// Expected counts per bin for uncorrelated starts and stops.
    pub fn accidental_per_bin(&self) -> Option<f64> {
        if self.acquisition_ps == 0 {
            return None;
        }
        Some(self.start_total as f64 * self.stop_total as f64 * self.bin_width_ps as f64 / self.acquisition_ps as f64)
    }

    /// Adds the counts of a histogram with identical geometry and channels.
    pub fn merge(&mut self, other: &CorrelationHistogram) -> Result<()> {
        if self.bin_width_ps != other.bin_width_ps
            || self.range_ps != other.range_ps
            || self.start_channel != other.start_channel
            || self.stop_channel != other.stop_channel
        {
            return Err(Error::param("histograms differ in geometry or channels"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.start_total += other.start_total;
        self.stop_total += other.stop_total;
        self.acquisition_ps += other.acquisition_ps;
        Ok(())
    }

    /// Histogram with start and stop exchanged. Exact for a range symmetric
    /// about zero when both edges fall on bin boundaries.
    pub fn mirrored(&self) -> CorrelationHistogram {
        let mut h = self.clone();
        h.range_ps = (-self.range_ps.1, -self.range_ps.0);
        h.counts.reverse();
        std::mem::swap(&mut h.start_channel, &mut h.stop_channel);
        std::mem::swap(&mut h.start_total, &mut h.stop_total);
        h
    }

    /// Merges groups of `factor` adjacent bins; a trailing partial group is
    /// dropped and the range shrinks accordingly.
    pub fn rebinned(&self, factor: usize) -> Result<CorrelationHistogram> {
        if factor == 0 || factor > self.n_bins() {
            return Err(Error::param("rebin factor must be in 1..=n_bins"));
        }
        let counts: Vec<u64> = self.counts.chunks_exact(factor).map(|c| c.iter().sum()).collect();
        let bin_width_ps = self.bin_width_ps * factor as u64;
        let mut h = self.clone();
        h.range_ps.1 = self.range_ps.0 + (counts.len() as u64 * bin_width_ps) as i64;
        h.bin_width_ps = bin_width_ps;
        h.counts = counts;
        Ok(h)
    }

    /// Indices of bins whose centre lies in `[center - w/2, center + w/2)`.
    fn window_bins(&self, center_ps: f64, window_ps: f64) -> std::ops::Range<usize> {
        let lo = center_ps - window_ps / 2.0;
        let hi = center_ps + window_ps / 2.0;
        let first = (0..self.n_bins()).find(|&i| self.bin_center_ps(i) >= lo).unwrap_or(self.n_bins());
        let last = (first..self.n_bins()).find(|&i| self.bin_center_ps(i) >= hi).unwrap_or(self.n_bins());
        first..last
    }

    /// Counts summed over the bins whose centre lies in a window of width
    /// `window_ps` centred at `center_ps`.
    pub fn window_counts(&self, center_ps: f64, window_ps: u64) -> (u64, usize) {
        let r = self.window_bins(center_ps, window_ps as f64);
        (self.counts[r.clone()].iter().sum(), r.len())
    }

    /// Writes `delay_ns,counts,normalized` rows; `normalized` divides by
    /// `baseline` counts per bin.
    pub fn write_csv<W: Write>(&self, dst: W, baseline: f64) -> Result<()> {
        let mut w = csv::Writer::from_writer(dst);
        for (i, &c) in self.counts.iter().enumerate() {
            w.serialize(HistogramRow {
                delay_ns: self.bin_center_ps(i) / PS_PER_NS as f64,
                counts: c,
                normalized: if baseline > 0.0 { c as f64 / baseline } else { 0.0 },
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub delay_ns: f64,
    pub counts: u64,
    pub normalized: f64,
}

pub fn read_histogram_csv<R: Read>(src: R) -> Result<Vec<HistogramRow>> {
    let mut r = csv::Reader::from_reader(src);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

fn check_geometry(bin_width_ps: u64, range_ps: (i64, i64)) -> Result<()> {
    if bin_width_ps == 0 {
        return Err(Error::param("bin width must be positive"));
    }
    if range_ps.1 <= range_ps.0 {
        return Err(Error::param("empty delay range"));
    }
    if (range_ps.1 - range_ps.0) as u64 % bin_width_ps != 0 {
        return Err(Error::param("delay range is not a multiple of the bin width"));
    }
    Ok(())
}

/// Adds every `(start, stop)` pair with `stop - start ∈ [τ_min, τ_max)` to
/// `counts`. Both slices must be sorted. With `skip_zero` set, pairs at zero
/// delay are ignored (self pairs when a channel is correlated with itself).
fn accumulate(starts: &[u64], stops: &[u64], bin_width: u64, range: (i64, i64), skip_zero: bool, counts: &mut [u64]) {
    let (tmin, tmax) = (range.0 as i128, range.1 as i128);
    let bw = bin_width as i128;
    let mut lo = 0usize;
    for &s in starts {
        let s = s as i128;
        while lo < stops.len() && (stops[lo] as i128) - s < tmin {
            lo += 1;
        }
        for &t in &stops[lo..] {
            let d = t as i128 - s;
            if d >= tmax {
                break;
            }
            if skip_zero && d == 0 {
                continue;
            }
            counts[((d - tmin) / bw) as usize] += 1;
        }
    }
}

fn channel_times(stream: &TagStream, ch: u8) -> Result<Vec<u64>> {
    let t = stream.times_ps(ch);
    if t.is_empty() {
        return Err(Error::EmptyChannel(ch));
    }
    Ok(t)
}

/// Multi-stop correlation of `stop_ch` against `start_ch`.
///
/// The acquisition time is set to the stream span; callers analysing gated
/// data should replace it with the live time.
pub fn cross_correlation_histogram(
    stream: &TagStream,
    start_ch: u8,
    stop_ch: u8,
    bin_width_ps: u64,
    range_ps: (i64, i64),
) -> Result<CorrelationHistogram> {
    let mut h = CorrelationHistogram::empty(start_ch, stop_ch, bin_width_ps, range_ps)?;
    let starts = channel_times(stream, start_ch)?;
    let stops = channel_times(stream, stop_ch)?;
    accumulate(&starts, &stops, bin_width_ps, range_ps, start_ch == stop_ch, &mut h.counts);
    h.start_total = starts.len() as u64;
    h.stop_total = stops.len() as u64;
    h.acquisition_ps = stream.span_ps();
    Ok(h)
}

/// Correlation between the two outputs of a beam splitter.
pub fn auto_correlation_histogram(
    stream: &TagStream,
    ch_a: u8,
    ch_b: u8,
    bin_width_ps: u64,
    range_ps: (i64, i64),
) -> Result<CorrelationHistogram> {
    cross_correlation_histogram(stream, ch_a, ch_b, bin_width_ps, range_ps)
}

/// Same result as [`cross_correlation_histogram`], computed over `n_chunks`
/// contiguous blocks of start tags in parallel. Each block sees every stop
/// within its padded time span; block histograms are summed.
pub fn cross_correlation_histogram_chunked(
    stream: &TagStream,
    start_ch: u8,
    stop_ch: u8,
    bin_width_ps: u64,
    range_ps: (i64, i64),
    n_chunks: usize,
) -> Result<CorrelationHistogram> {
    let mut h = CorrelationHistogram::empty(start_ch, stop_ch, bin_width_ps, range_ps)?;
    let starts = channel_times(stream, start_ch)?;
    let stops = channel_times(stream, stop_ch)?;
    let n_chunks = n_chunks.clamp(1, starts.len());
    let chunk_len = starts.len().div_ceil(n_chunks);
    let n_bins = h.counts.len();
    let skip_zero = start_ch == stop_ch;
    let partial: Vec<Vec<u64>> = starts
        .par_chunks(chunk_len)
        .map(|block| {
            let first = block[0] as i128 + range_ps.0 as i128;
            let last = *block.last().unwrap() as i128 + range_ps.1 as i128;
            let a = stops.partition_point(|&t| (t as i128) < first);
            let b = stops.partition_point(|&t| (t as i128) < last);
            let mut counts = vec![0u64; n_bins];
            accumulate(block, &stops[a..b], bin_width_ps, range_ps, skip_zero, &mut counts);
            counts
        })
        .collect();
    for c in partial {
        for (a, b) in h.counts.iter_mut().zip(c) {
            *a += b;
        }
    }
    h.start_total = starts.len() as u64;
    h.stop_total = stops.len() as u64;
    h.acquisition_ps = stream.span_ps();
    Ok(h)
}

/// Bins with `|τ - τ₀|` between `inner_ps` and `outer_ps` form the floor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FloorRegion {
    pub inner_ps: u64,
    pub outer_ps: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct G2Result {
    pub value: f64,
    pub sigma: f64,
    pub window_ps: u64,
    pub center_ps: f64,
    /// Mean floor counts per bin.
    pub floor: f64,
    pub floor_region: FloorRegion,
    pub window_counts: u64,
    pub window_bins: usize,
}

impl G2Result {
    pub fn measured(&self) -> Measured {
        Measured::new(self.value, self.sigma)
    }
}

/// Floor mean and counted bins.
fn floor_level(hist: &CorrelationHistogram, center_ps: f64, floor: FloorRegion) -> Result<(f64, u64, usize)> {
    if floor.outer_ps <= floor.inner_ps {
        return Err(Error::param("floor region is empty"));
    }
    let mut sum = 0u64;
    let mut n = 0usize;
    for (i, &c) in hist.counts.iter().enumerate() {
        let d = (hist.bin_center_ps(i) - center_ps).abs();
        if d >= floor.inner_ps as f64 && d <= floor.outer_ps as f64 {
            sum += c;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InsufficientData("floor region holds no bins".into()));
    }
    if sum == 0 {
        return Err(Error::Degenerate("floor region holds no counts".into()));
    }
    Ok((sum as f64 / n as f64, sum, n))
}

/// Ratio of the mean counts per bin inside the window to the mean in the floor
/// region, with Poisson errors on both sums.
pub fn normalized_g2(
    hist: &CorrelationHistogram,
    window_ps: u64,
    center_ps: f64,
    floor: FloorRegion,
) -> Result<G2Result> {
    if window_ps == 0 {
        return Err(Error::param("window must be positive"));
    }
    if (floor.inner_ps as f64) < window_ps as f64 / 2.0 {
        return Err(Error::param("floor region overlaps the coincidence window"));
    }
    let (floor_mean, floor_sum, _) = floor_level(hist, center_ps, floor)?;
    let (w_sum, w_bins) = hist.window_counts(center_ps, window_ps);
    if w_bins == 0 {
        return Err(Error::InsufficientData("window holds no bins".into()));
    }
    let value = w_sum as f64 / w_bins as f64 / floor_mean;
    let sigma = value.max(1.0 / (w_bins as f64 * floor_mean))
        * (1.0 / (w_sum.max(1)) as f64 + 1.0 / floor_sum as f64).sqrt();
    Ok(G2Result {
        value,
        sigma,
        window_ps,
        center_ps,
        floor: floor_mean,
        floor_region: floor,
        window_counts: w_sum,
        window_bins: w_bins,
    })
}

/// Triple-coincidence histogram indexed by herald separation.
#[derive(Clone, Debug, PartialEq)]
pub struct FaselHistogram {
    pub n_max: usize,
    /// `H(n)` for `n = -n_max ..= n_max`.
    pub counts: Vec<u64>,
    pub heralds: u64,
    pub window_ps: u64,
    pub offset_ps: i64,
    /// `H(0) / mean(H(n ≠ 0))`.
    pub g2: f64,
    pub sigma: f64,
}

impl FaselHistogram {
    pub fn h(&self, n: i64) -> u64 {
        self.counts[(n + self.n_max as i64) as usize]
    }

    pub fn measured(&self) -> Measured {
        Measured::new(self.g2, self.sigma)
    }

    pub fn write_csv<W: Write>(&self, dst: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(dst);
        w.write_record(["n", "counts"])?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([(i as i64 - self.n_max as i64).to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// For each herald, whether `times` has an entry in the window
/// `[h + offset - w/2, h + offset + w/2)`.
fn window_hits(heralds: &[u64], times: &[u64], window_ps: u64, offset_ps: i64) -> Vec<bool> {
    let half = (window_ps / 2) as i128;
    let mut lo = 0usize;
    heralds
        .iter()
        .map(|&h| {
            let a = h as i128 + offset_ps as i128 - half;
            let b = a + window_ps as i128;
            while lo < times.len() && (times[lo] as i128) < a {
                lo += 1;
            }
            lo < times.len() && (times[lo] as i128) < b
        })
        .collect()
}

/// Heralded autocorrelation of the split signal arm from per-herald click
/// flags `a_k`, `b_k`: `H(n) = Σ_k a_k·b_{k+n}`.
pub fn heralded_autocorrelation(
    stream: &TagStream,
    herald_ch: u8,
    ch_a: u8,
    ch_b: u8,
    window_ps: u64,
    offset_ps: i64,
    n_max: usize,
) -> Result<FaselHistogram> {
    if window_ps == 0 || n_max == 0 {
        return Err(Error::param("window and n_max must be positive"));
    }
    let heralds = stream.times_ps(herald_ch);
    if heralds.len() < 2 * n_max + 1 {
        return Err(Error::InsufficientData(format!(
            "{} heralds, need at least {}",
            heralds.len(),
            2 * n_max + 1
        )));
    }
    let a = window_hits(&heralds, &stream.times_ps(ch_a), window_ps, offset_ps);
    let b = window_hits(&heralds, &stream.times_ps(ch_b), window_ps, offset_ps);
    Ok(fasel_from_flags(&a, &b, n_max, window_ps, offset_ps))
}

/// Fasel histogram from precomputed per-herald flags.
pub fn fasel_from_flags(a: &[bool], b: &[bool], n_max: usize, window_ps: u64, offset_ps: i64) -> FaselHistogram {
    let n = a.len().min(b.len());
    let mut counts = vec![0u64; 2 * n_max + 1];
    let m = n_max as i64;
    for k in (0..n).filter(|&k| a[k]) {
        for s in -m..=m {
            let j = k as i64 + s;
            if j >= 0 && (j as usize) < n && b[j as usize] {
                counts[(s + m) as usize] += 1;
            }
        }
    }
    let side: u64 = counts.iter().enumerate().filter(|&(i, _)| i != n_max).map(|(_, &c)| c).sum();
    let side_mean = side as f64 / (2 * n_max) as f64;
    let h0 = counts[n_max] as f64;
    let (g2, sigma) = if side == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let g = h0 / side_mean;
        (g, (h0.max(1.0) / (side_mean * side_mean) + g * g / side as f64).sqrt())
    };
    FaselHistogram { n_max, counts, heralds: n as u64, window_ps, offset_ps, g2, sigma }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoincidenceMetrics {
    pub herald_rate: f64,
    pub signal_rate: f64,
    pub coincidence_rate: f64,
    pub accidental_rate: f64,
    pub window_ps: u64,
    pub live_time_s: f64,
    /// Heralding efficiency from raw or accidental-corrected coincidences.
    pub eta_h: f64,
    pub accidentals_subtracted: bool,
}

/// Singles, coincidences inside the window centred at `offset_ps` and the
/// heralding efficiency `p_si / (p_i·η_det,s)`.
#[allow(clippy::too_many_arguments)]
pub fn coincidence_metrics(
    stream: &TagStream,
    herald_ch: u8,
    signal_ch: u8,
    window_ps: u64,
    offset_ps: i64,
    eta_det_s: f64,
    live_time_s: f64,
    subtract_accidentals: bool,
) -> Result<CoincidenceMetrics> {
    if window_ps == 0 || !(live_time_s > 0.0) {
        return Err(Error::param("window and live time must be positive"));
    }
    let heralds = stream.times_ps(herald_ch);
    if heralds.is_empty() {
        return Err(Error::EmptyChannel(herald_ch));
    }
    let signal = stream.times_ps(signal_ch);
    let half = (window_ps / 2) as i64;
    let lo = offset_ps - half;
    let hi = lo + window_ps as i64;
    let mut counts = [0u64; 1];
    let mut coinc = 0u64;
    if !signal.is_empty() {
        let span = (hi - lo) as u64;
        accumulate(&heralds, &signal, span, (lo, hi), herald_ch == signal_ch, &mut counts);
        coinc = counts[0];
    }
    let herald_rate = heralds.len() as f64 / live_time_s;
    let signal_rate = signal.len() as f64 / live_time_s;
    let coincidence_rate = coinc as f64 / live_time_s;
    let accidental_rate = herald_rate * signal_rate * window_ps as f64 / PS_PER_S;
    let net = if subtract_accidentals { coincidence_rate - accidental_rate } else { coincidence_rate };
    let eta_h = heralding_efficiency(net.max(0.0), herald_rate, eta_det_s)?;
    Ok(CoincidenceMetrics {
        herald_rate,
        signal_rate,
        coincidence_rate,
        accidental_rate,
        window_ps,
        live_time_s,
        eta_h,
        accidentals_subtracted: subtract_accidentals,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowPoint {
    pub window_ns: f64,
    pub coincidences: u64,
    pub rate: f64,
    pub eta_h: f64,
    pub g2: f64,
    pub g2_sigma: f64,
}

/// Coincidence rate, heralding efficiency and `g²` for each window width,
/// evaluated on a herald-started histogram. Rates use the histogram's
/// acquisition time.
pub fn window_sweep(
    hist: &CorrelationHistogram,
    center_ps: f64,
    windows_ps: &[u64],
    eta_det_s: f64,
    floor: FloorRegion,
) -> Result<Vec<WindowPoint>> {
    if windows_ps.iter().any(|&w| w == 0) {
        return Err(Error::param("window widths must be positive"));
    }
    if windows_ps.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("window widths must be ascending"));
    }
    let live = hist.acquisition_s();
    if !(live > 0.0) || hist.start_total == 0 {
        return Err(Error::InsufficientData("histogram has no acquisition time or starts".into()));
    }
    let herald_rate = hist.start_total as f64 / live;
    let (floor_mean, floor_sum, _) = floor_level(hist, center_ps, floor)?;
    windows_ps
        .iter()
        .map(|&w| {
            let (c, bins) = hist.window_counts(center_ps, w);
            let rate = c as f64 / live;
            let (g2, g2_sigma) = if bins == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let g = c as f64 / bins as f64 / floor_mean;
                (g, g * (1.0 / c.max(1) as f64 + 1.0 / floor_sum as f64).sqrt())
            };
            Ok(WindowPoint {
                window_ns: w as f64 / PS_PER_NS as f64,
                coincidences: c,
                rate,
                eta_h: heralding_efficiency(rate, herald_rate, eta_det_s)?,
                g2,
                g2_sigma,
            })
        })
        .collect()
}
