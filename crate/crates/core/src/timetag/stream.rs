//! In-memory tag streams and their on-disk forms.
//!
//! QTT1 layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       8     magic "QTT1\0\0\0\0"
//! 8       8     trigger_period_ps (u64)
//! 16      8     record count (u64)
//! 24      9*n   records: channel (u8), timestamp_ps (u64)
//! ```
//!
//! Records are ordered by (timestamp, channel). Channel 0 is APD-1 (bit 1),
//! channel 1 is APD-2 (bit 0), channel 2 is the trigger.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CH_APD1: u8 = 0;
pub const CH_APD2: u8 = 1;
pub const CH_TRIGGER: u8 = 2;

pub const QTT1_MAGIC: [u8; 8] = *b"QTT1\0\0\0\0";
const QTT1_HEADER: u64 = 24;
const QTT1_RECORD: u64 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Record {
    pub timestamp_ps: u64,
    pub channel: u8,
}

/// Trigger edges, stored compactly when they are strictly periodic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Triggers {
    Regular { first_ps: u64, count: u64 },
    Explicit(Vec<u64>),
}

impl Triggers {
    pub fn len(&self) -> u64 {
        match self {
            Self::Regular { count, .. } => *count,
            Self::Explicit(v) => v.len() as u64,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, k: u64, period_ps: u64) -> u64 {
        match self {
            Self::Regular { first_ps, .. } => first_ps + k * period_ps,
            Self::Explicit(v) => v[k as usize],
        }
    }

    /// Index of the last trigger at or before `t`.
    pub fn pulse_of(&self, t: u64, period_ps: u64) -> Option<u64> {
        match self {
            Self::Regular { first_ps, count } => {
                if t < *first_ps || *count == 0 {
                    return None;
                }
                Some(((t - first_ps) / period_ps).min(count - 1))
            }
            Self::Explicit(v) => {
                let after = v.partition_point(|&x| x <= t);
                (after > 0).then(|| after as u64 - 1)
            }
        }
    }

    /// Compresses a sorted list of trigger times.
    pub fn from_times(times: Vec<u64>, period_ps: u64) -> Self {
        let regular = times.first().is_some_and(|&first| {
            times
                .iter()
                .enumerate()
                .all(|(k, &t)| t == first + k as u64 * period_ps)
        });
        if regular || times.is_empty() {
            Self::Regular {
                first_ps: times.first().copied().unwrap_or(0),
                count: times.len() as u64,
            }
        } else {
            Self::Explicit(times)
        }
    }
}

/// Alice's transmitted bit sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlicePattern {
    /// 1-0-1-0…, starting with 1 on the first trigger.
    #[default]
    Alternating,
    SeededRandom {
        seed: u64,
    },
}

impl AlicePattern {
    pub fn bit(&self, k: u64) -> u8 {
        match self {
            Self::Alternating => (k % 2 == 0) as u8,
            Self::SeededRandom { seed } => (splitmix64(seed ^ k) & 1) as u8,
        }
    }
}

/// Detector channel that registers a correctly measured bit.
pub fn channel_for_bit(bit: u8) -> u8 {
    if bit == 1 {
        CH_APD1
    } else {
        CH_APD2
    }
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagStream {
    pub triggers: Triggers,
    /// Detector clicks (channels 0 and 1), sorted by (timestamp, channel).
    pub clicks: Vec<Record>,
    pub trigger_period_ps: u64,
    pub duration_s: f64,
    pub alice: AlicePattern,
    pub metadata: BTreeMap<String, String>,
}

impl TagStream {
    /// Builds a stream from arbitrary records, validating channel and order.
    pub fn from_records(
        records: impl IntoIterator<Item = Record>,
        trigger_period_ps: u64,
    ) -> Result<Self> {
        if trigger_period_ps == 0 {
            return Err(Error::Stream("trigger period must be > 0".into()));
        }
        let mut triggers = Vec::new();
        let mut clicks = Vec::new();
        let mut last = 0u64;
        for (i, r) in records.into_iter().enumerate() {
            if r.timestamp_ps < last {
                return Err(Error::Stream(format!("record {i} goes back in time")));
            }
            last = r.timestamp_ps;
            match r.channel {
                CH_TRIGGER => triggers.push(r.timestamp_ps),
                CH_APD1 | CH_APD2 => clicks.push(r),
                c => return Err(Error::Stream(format!("record {i}: unknown channel {c}"))),
            }
        }
        clicks.sort_unstable();
        let triggers = Triggers::from_times(triggers, trigger_period_ps);
        let duration_s = triggers.len() as f64 * trigger_period_ps as f64 * 1e-12;
        Ok(Self {
            triggers,
            clicks,
            trigger_period_ps,
            duration_s,
            alice: AlicePattern::default(),
            metadata: BTreeMap::new(),
        })
    }

    pub fn trigger_count(&self) -> u64 {
        self.triggers.len()
    }

    pub fn record_count(&self) -> u64 {
        self.trigger_count() + self.clicks.len() as u64
    }

    /// All records in (timestamp, channel) order, triggers merged lazily.
    pub fn records(&self) -> impl Iterator<Item = Record> + '_ {
        let mut k = 0u64;
        let n = self.trigger_count();
        let mut clicks = self.clicks.iter().copied().peekable();
        std::iter::from_fn(move || {
            let trig = (k < n).then(|| Record {
                timestamp_ps: self.triggers.time(k, self.trigger_period_ps),
                channel: CH_TRIGGER,
            });
            match (trig, clicks.peek().copied()) {
                (Some(t), Some(c)) if c < t => clicks.next(),
                (Some(t), _) => {
                    k += 1;
                    Some(t)
                }
                (None, Some(_)) => clicks.next(),
                (None, None) => None,
            }
        })
    }

    pub fn write_qtt1<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        w.write_all(&QTT1_MAGIC)?;
        w.write_all(&self.trigger_period_ps.to_le_bytes())?;
        w.write_all(&self.record_count().to_le_bytes())?;
        for r in self.records() {
            w.write_all(&[r.channel])?;
            w.write_all(&r.timestamp_ps.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_qtt1<R: Read>(input: R) -> Result<Self> {
        let mut r = BufReader::new(input);
        let mut header = [0u8; QTT1_HEADER as usize];
        read_exact_at(&mut r, &mut header, 0)?;
        if header[..8] != QTT1_MAGIC {
            return Err(Error::Format {
                offset: 0,
                reason: "bad magic, expected \"QTT1\\0\\0\\0\\0\"".into(),
            });
        }
        let period = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes"));
        let count = u64::from_le_bytes(header[16..24].try_into().expect("8 bytes"));
        if period == 0 {
            return Err(Error::Format {
                offset: 8,
                reason: "trigger period is zero".into(),
            });
        }

        let mut triggers = Vec::new();
        let mut clicks = Vec::new();
        let mut last = 0u64;
        let mut buf = [0u8; QTT1_RECORD as usize];
        for i in 0..count {
            let offset = QTT1_HEADER + i * QTT1_RECORD;
            read_exact_at(&mut r, &mut buf, offset)?;
            let channel = buf[0];
            let ts = u64::from_le_bytes(buf[1..].try_into().expect("8 bytes"));
            if ts < last {
                return Err(Error::Format {
                    offset,
                    reason: format!("timestamp {ts} precedes {last}"),
                });
            }
            last = ts;
            match channel {
                CH_TRIGGER => triggers.push(ts),
                CH_APD1 | CH_APD2 => clicks.push(Record {
                    timestamp_ps: ts,
                    channel,
                }),
                c => {
                    return Err(Error::Format {
                        offset,
                        reason: format!("unknown channel {c}"),
                    })
                }
            }
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::Format {
                offset: QTT1_HEADER + count * QTT1_RECORD,
                reason: "trailing bytes after last record".into(),
            });
        }
        clicks.sort_unstable();
        let triggers = Triggers::from_times(triggers, period);
        let duration_s = triggers.len() as f64 * period as f64 * 1e-12;
        Ok(Self {
            triggers,
            clicks,
            trigger_period_ps: period,
            duration_s,
            alice: AlicePattern::default(),
            metadata: BTreeMap::new(),
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "channel,timestamp_ps")?;
        for r in self.records() {
            writeln!(w, "{},{}", r.channel, r.timestamp_ps)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV form. The period is not stored in CSV, so it is given
    /// by the caller.
    pub fn read_csv<R: Read>(input: R, trigger_period_ps: u64) -> Result<Self> {
        let r = BufReader::new(input);
        let mut offset = 0u64;
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let len = line.len() as u64 + 1;
            if i == 0 {
                if line.trim() != "channel,timestamp_ps" {
                    return Err(Error::Format {
                        offset,
                        reason: "expected header `channel,timestamp_ps`".into(),
                    });
                }
            } else if !line.trim().is_empty() {
                let bad = |reason: String| Error::Format { offset, reason };
                let (c, t) = line
                    .split_once(',')
                    .ok_or_else(|| bad("missing comma".into()))?;
                let channel = c
                    .trim()
                    .parse::<u8>()
                    .map_err(|e| bad(format!("channel: {e}")))?;
                let timestamp_ps = t
                    .trim()
                    .parse::<u64>()
                    .map_err(|e| bad(format!("timestamp: {e}")))?;
                records.push(Record {
                    timestamp_ps,
                    channel,
                });
            }
            offset += len;
        }
        TagStream::from_records(records, trigger_period_ps)
    }
}

fn read_exact_at<R: Read>(r: &mut R, buf: &mut [u8], offset: u64) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format {
            offset,
            reason: format!("truncated: needed {} bytes", buf.len()),
        },
        _ => Error::Io(e),
    })
}
