//! Time-tag streams and the `BPTT` binary file format.
//!
//! A [`TagStream`] is an immutable, validated sequence of detection events.
//! Tags are ordered by `(time, channel)`: equal timestamps are only allowed on
//! distinct channels, and the lower channel id comes first.
//!
//! File layout (little-endian):
//!
//! ```text
//! header (24 bytes)
//!   0  magic          "BPTT"
//!   4  version        u16 = 1
//!   6  reserved       u16
//!   8  resolution_ps  u32
//!  12  channel_count  u32
//!  16  record_count   u64
//! record (16 bytes)
//!   0  time           u64, units of resolution_ps
//!   8  channel        u8
//!   9  flags          u8
//!  10  reserved       u16
//!  12  reserved       u32
//! ```
//!
//! Channel roles are not stored; a reader assigns [`ChannelRole::conventional`]
//! to channels `0..channel_count`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"BPTT";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 24;
pub const RECORD_LEN: usize = 16;

/// A single detection event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimeTag {
    /// Units of the owning stream's resolution since acquisition start.
    pub time: u64,
    pub channel: u8,
    pub flags: u8,
}

impl TimeTag {
    pub fn new(time: u64, channel: u8) -> Self {
        TimeTag {
            time,
            channel,
            flags: 0,
        }
    }
}

/// What a detector channel observes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChannelRole {
    SignalA,
    SignalB,
    Idler,
    IdlerB,
    Trigger,
    Aux(u8),
}

impl ChannelRole {
    pub const SIGNAL_A: u8 = 0;
    pub const SIGNAL_B: u8 = 1;
    pub const IDLER: u8 = 2;
    pub const IDLER_B: u8 = 3;
    pub const TRIGGER: u8 = 4;

    /// The fixed channel-id convention used by the simulator and the file reader.
    pub fn conventional(channel: u8) -> Self {
        match channel {
            Self::SIGNAL_A => ChannelRole::SignalA,
            Self::SIGNAL_B => ChannelRole::SignalB,
            Self::IDLER => ChannelRole::Idler,
            Self::IDLER_B => ChannelRole::IdlerB,
            Self::TRIGGER => ChannelRole::Trigger,
            n => ChannelRole::Aux(n),
        }
    }

    pub fn name(&self) -> String {
        match self {
            ChannelRole::SignalA => "signal-A".into(),
            ChannelRole::SignalB => "signal-B".into(),
            ChannelRole::Idler => "idler".into(),
            ChannelRole::IdlerB => "idler-B".into(),
            ChannelRole::Trigger => "trigger".into(),
            ChannelRole::Aux(n) => format!("aux-{n}"),
        }
    }
}

/// Conventional labels for channels `0..count`.
pub fn conventional_labels(count: u32) -> BTreeMap<u8, ChannelRole> {
    (0..count.min(256))
        .map(|c| (c as u8, ChannelRole::conventional(c as u8)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagStream {
    resolution_ps: u32,
    tags: Vec<TimeTag>,
    labels: BTreeMap<u8, ChannelRole>,
}

impl TagStream {
    /// Validates ordering and labeling.
    pub fn new(
        resolution_ps: u32,
        tags: Vec<TimeTag>,
        labels: BTreeMap<u8, ChannelRole>,
    ) -> Result<Self> {
        if resolution_ps == 0 {
            return Err(Error::param("resolution must be positive"));
        }
        if let Some(index) = first_disorder(&tags) {
            return Err(Error::NotMonotone { index });
        }
        for (index, t) in tags.iter().enumerate() {
            if !labels.contains_key(&t.channel) {
                return Err(Error::UnlabeledChannel {
                    index,
                    channel: t.channel,
                });
            }
        }
        Ok(TagStream {
            resolution_ps,
            tags,
            labels,
        })
    }

    pub fn empty(resolution_ps: u32, labels: BTreeMap<u8, ChannelRole>) -> Result<Self> {
        Self::new(resolution_ps, Vec::new(), labels)
    }

    /// Sorts `tags`, drops exact duplicates and labels channels conventionally.
    pub fn from_unsorted(
        resolution_ps: u32,
        mut tags: Vec<TimeTag>,
        channel_count: u32,
    ) -> Result<Self> {
        tags.sort_unstable();
        tags.dedup_by(|a, b| a.time == b.time && a.channel == b.channel);
        Self::new(resolution_ps, tags, conventional_labels(channel_count))
    }

    pub fn resolution_ps(&self) -> u32 {
        self.resolution_ps
    }

    pub fn tags(&self) -> &[TimeTag] {
        &self.tags
    }

    pub fn labels(&self) -> &BTreeMap<u8, ChannelRole> {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn into_tags(self) -> Vec<TimeTag> {
        self.tags
    }

    /// Number of tags on `channel`.
    pub fn count(&self, channel: u8) -> usize {
        self.tags.iter().filter(|t| t.channel == channel).count()
    }

    /// Timestamps of one channel, converted to picoseconds.
    pub fn times_ps(&self, channel: u8) -> Vec<u64> {
        let res = self.resolution_ps as u64;
        self.tags
            .iter()
            .filter(|t| t.channel == channel)
            .map(|t| t.time * res)
            .collect()
    }

    /// Span between first and last tag in picoseconds.
    pub fn span_ps(&self) -> u64 {
        match (self.tags.first(), self.tags.last()) {
            (Some(a), Some(b)) => (b.time - a.time) * self.resolution_ps as u64,
            _ => 0,
        }
    }

    /// Keeps only the listed channels (labels are retained).
    pub fn select(&self, channels: &[u8]) -> TagStream {
        TagStream {
            resolution_ps: self.resolution_ps,
            tags: self
                .tags
                .iter()
                .filter(|t| channels.contains(&t.channel))
                .copied()
                .collect(),
            labels: self.labels.clone(),
        }
    }
}

fn first_disorder(tags: &[TimeTag]) -> Option<usize> {
    tags.windows(2)
        .position(|w| (w[0].time, w[0].channel) >= (w[1].time, w[1].channel))
        .map(|i| i + 1)
}

/// Writes `stream` in the `BPTT` format and returns the number of bytes written.
pub fn write_tags<W: Write>(stream: &TagStream, mut dst: W) -> Result<u64> {
    let channel_count = match stream.labels.keys().next_back() {
        Some(&max) => max as u32 + 1,
        None => 0,
    };
    for c in 0..channel_count {
        let c = c as u8;
        if stream.labels.get(&c) != Some(&ChannelRole::conventional(c)) {
            return Err(Error::UnrepresentableLabel(c));
        }
    }
    let res = stream.resolution_ps as u64;
    if let Some(last) = stream.tags.last() {
        last.time.checked_mul(res).ok_or(Error::Overflow)?;
    }

    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(&MAGIC);
    header[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    header[8..12].copy_from_slice(&stream.resolution_ps.to_le_bytes());
    header[12..16].copy_from_slice(&channel_count.to_le_bytes());
    header[16..24].copy_from_slice(&(stream.tags.len() as u64).to_le_bytes());
    dst.write_all(&header)?;

    let mut rec = [0u8; RECORD_LEN];
    for t in &stream.tags {
        rec[0..8].copy_from_slice(&t.time.to_le_bytes());
        rec[8] = t.channel;
        rec[9] = t.flags;
        dst.write_all(&rec)?;
    }
    dst.flush()?;
    Ok((HEADER_LEN + RECORD_LEN * stream.tags.len()) as u64)
}

/// Reads and validates a `BPTT` stream.
pub fn read_tags<R: Read>(mut src: R) -> Result<TagStream> {
    let mut header = [0u8; HEADER_LEN];
    src.read_exact(&mut header)?;
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::Version(version));
    }
    let resolution_ps = u32::from_le_bytes(header[8..12].try_into().unwrap());
    let channel_count = u32::from_le_bytes(header[12..16].try_into().unwrap());
    let record_count = u64::from_le_bytes(header[16..24].try_into().unwrap());

    // Cap the preallocation; a corrupt count must not trigger a huge allocation.
    let mut tags = Vec::with_capacity(record_count.min(1 << 24) as usize);
    let mut rec = [0u8; RECORD_LEN];
    for _ in 0..record_count {
        src.read_exact(&mut rec)?;
        tags.push(TimeTag {
            time: u64::from_le_bytes(rec[0..8].try_into().unwrap()),
            channel: rec[8],
            flags: rec[9],
        });
    }
    TagStream::new(resolution_ps, tags, conventional_labels(channel_count))
}

pub fn write_file(stream: &TagStream, path: impl AsRef<Path>) -> Result<u64> {
    let f = File::create(path)?;
    write_tags(stream, BufWriter::new(f))
}

pub fn read_file(path: impl AsRef<Path>) -> Result<TagStream> {
    let f = File::open(path)?;
    read_tags(BufReader::new(f))
}

/// Sorted union of two streams. Ties on time resolve to the lower channel.
pub fn merge_streams(a: &TagStream, b: &TagStream) -> Result<TagStream> {
    if a.resolution_ps != b.resolution_ps {
        return Err(Error::ResolutionMismatch(a.resolution_ps, b.resolution_ps));
    }
    let mut labels = a.labels.clone();
    for (&ch, &role) in &b.labels {
        match labels.get(&ch) {
            Some(&r) if r != role => return Err(Error::LabelConflict(ch)),
            _ => {
                labels.insert(ch, role);
            }
        }
    }

    let (x, y) = (&a.tags, &b.tags);
    let mut out = Vec::with_capacity(x.len() + y.len());
    let (mut i, mut j) = (0, 0);
    while i < x.len() && j < y.len() {
        let (p, q) = (x[i], y[j]);
        match (p.time, p.channel).cmp(&(q.time, q.channel)) {
            std::cmp::Ordering::Less => {
                out.push(p);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(q);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                return Err(Error::DuplicateTag {
                    time: p.time,
                    channel: p.channel,
                })
            }
        }
    }
    out.extend_from_slice(&x[i..]);
    out.extend_from_slice(&y[j..]);
    Ok(TagStream {
        resolution_ps: a.resolution_ps,
        tags: out,
        labels,
    })
}

/// Periodic measurement gate, e.g. the open half of a chopped cavity lock.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateSpec {
    period_ps: u64,
    duty: f64,
    phase_ps: u64,
}

impl GateSpec {
    pub fn new(period_ps: u64, duty: f64, phase_ps: u64) -> Result<Self> {
        if period_ps == 0 {
            return Err(Error::param("gate period must be positive"));
        }
        if !(duty > 0.0 && duty <= 1.0) {
            return Err(Error::param(format!("gate duty {duty} outside (0, 1]")));
        }
        Ok(GateSpec {
            period_ps,
            duty,
            phase_ps: phase_ps % period_ps,
        })
    }

    /// 30 Hz chop with the given duty cycle.
    pub fn chop_30hz(duty: f64) -> Result<Self> {
        Self::new(33_333_333_333, duty, 0)
    }

    /// A gate that never closes.
    pub fn always_open(period_ps: u64) -> Self {
        GateSpec {
            period_ps: period_ps.max(1),
            duty: 1.0,
            phase_ps: 0,
        }
    }

    pub fn period_ps(&self) -> u64 {
        self.period_ps
    }

    pub fn duty(&self) -> f64 {
        self.duty
    }

    pub fn phase_ps(&self) -> u64 {
        self.phase_ps
    }

    /// Length of the open part of one period.
    pub fn open_len_ps(&self) -> u64 {
        ((self.duty * self.period_ps as f64).round() as u64).min(self.period_ps)
    }

    pub fn is_open(&self, t_ps: u64) -> bool {
        let rel = (t_ps as i128 - self.phase_ps as i128).rem_euclid(self.period_ps as i128);
        (rel as u64) < self.open_len_ps()
    }

    /// Open intervals `[start, end)` clipped to `[0, end_ps)`, in time order.
    pub fn open_intervals(&self, end_ps: u64) -> Vec<(u64, u64)> {
        let open = self.open_len_ps();
        let mut out = Vec::new();
        // The window that began before t = 0 may still be open at t = 0.
        let first = self.phase_ps as i128 - self.period_ps as i128;
        let mut start = first;
        while start < end_ps as i128 {
            let s = start.max(0) as u64;
            let e = ((start + open as i128).min(end_ps as i128)).max(0) as u64;
            if e > s {
                out.push((s, e));
            }
            start += self.period_ps as i128;
        }
        out
    }

    /// Total open time within `[0, end_ps)`.
    pub fn live_time_ps(&self, end_ps: u64) -> u64 {
        self.open_intervals(end_ps).iter().map(|(s, e)| e - s).sum()
    }
}

/// Keeps tags inside the open phase of `gate` (or, with `keep_open = false`,
/// those inside the closed phase). Order is preserved.
pub fn gate_tags(stream: &TagStream, gate: &GateSpec, keep_open: bool) -> TagStream {
    let res = stream.resolution_ps as u64;
    TagStream {
        resolution_ps: stream.resolution_ps,
        tags: stream
            .tags
            .iter()
            .filter(|t| gate.is_open(t.time * res) == keep_open)
            .copied()
            .collect(),
        labels: stream.labels.clone(),
    }
}
