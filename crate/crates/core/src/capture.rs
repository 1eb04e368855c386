//! Step-count telemetry as the monitoring board records it: direction-aware
//! counters on the four STEP lines, started by the homing detector, sampled
//! every 0.1 s into 16-byte transactions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axis::Axis;
use crate::firmware::PrinterProfile;
use crate::signals::{Event, Line, SignalTimeline, Tick, TICKS_PER_MS};
use crate::trojans::HomingFsm;

pub const TRANSACTION_PERIOD: Tick = 100 * TICKS_PER_MS;
pub const RECORD_LEN: usize = 16;
pub const CSV_HEADER: &str = "Index, X, Y, Z, E";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CaptureError {
    #[error("unsynchronized capture: the timeline never completes homing")]
    Unsynchronized,
    #[error("transaction {index}: {axis} count {value} does not fit in 32 bits")]
    Overflow { index: u64, axis: Axis, value: i64 },
    #[error("line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("binary stream length {0} is not a multiple of 16")]
    Truncated(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transaction {
    pub index: u64,
    pub x: i64,
    pub y: i64,
    pub z: i64,
    pub e: i64,
}

impl Transaction {
    pub fn new(index: u64, counts: [i64; 4]) -> Transaction {
        let [x, y, z, e] = counts;
        Transaction { index, x, y, z, e }
    }

    pub fn counts(&self) -> [i64; 4] {
        [self.x, self.y, self.z, self.e]
    }

    pub fn get(&self, axis: Axis) -> i64 {
        self.counts()[axis.index()]
    }
}

/// One motor's counter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AxisTracker {
    pub count: i64,
    pub dir_level: bool,
}

impl AxisTracker {
    pub fn set_dir(&mut self, high: bool) {
        self.dir_level = high;
    }

    pub fn step(&mut self) {
        self.count += if self.dir_level { 1 } else { -1 };
    }
}

/// Streaming recorder. Feed it the timeline edge by edge; it hands back each
/// transaction as soon as its window closes.
#[derive(Debug, Clone)]
pub struct Capturer {
    fsm: HomingFsm,
    trackers: [AxisTracker; 4],
    sync: Option<Tick>,
    next_index: u64,
}

impl Capturer {
    pub fn new(profile: &PrinterProfile) -> Capturer {
        Capturer {
            fsm: HomingFsm::new(&profile.homing_order),
            trackers: [AxisTracker::default(); 4],
            sync: None,
            next_index: 0,
        }
    }

    pub fn counts(&self) -> [i64; 4] {
        self.trackers.map(|t| t.count)
    }

    pub fn sync_time(&self) -> Option<Tick> {
        self.sync
    }

    pub fn is_homed(&self) -> bool {
        self.fsm.is_homed()
    }

    fn boundary(&self, k: u64) -> Option<Tick> {
        self.sync.map(|s| s + (k + 1) * TRANSACTION_PERIOD)
    }

    /// Emits every window that closes at or before `t`.
    fn close_until(&mut self, t: Tick, out: &mut Vec<Transaction>) {
        while let Some(b) = self.boundary(self.next_index) {
            if b > t {
                break;
            }
            out.push(Transaction::new(self.next_index, self.counts()));
            self.next_index += 1;
        }
    }

    pub fn push(&mut self, e: &Event) -> Vec<Transaction> {
        let mut out = Vec::new();
        self.close_until(e.t, &mut out);
        let homed = self.fsm.is_homed();
        if !homed {
            self.fsm.observe(e);
        }
        match e.line {
            l if l.is_step() => {
                if e.high && homed {
                    let axis = l.step_axis().unwrap();
                    self.sync.get_or_insert(e.t);
                    self.trackers[axis.index()].step();
                }
            }
            Line::XDir | Line::YDir | Line::ZDir | Line::EDir => {
                let axis = Axis::ALL
                    .into_iter()
                    .find(|&a| Line::dir(a) == e.line)
                    .unwrap();
                self.trackers[axis.index()].set_dir(e.high);
            }
            _ => {}
        }
        out
    }

    /// Closes the stream at `end`, flushing a trailing partial window.
    pub fn finish(&mut self, end: Tick) -> Result<Vec<Transaction>, CaptureError> {
        if !self.fsm.is_homed() {
            return Err(CaptureError::Unsynchronized);
        }
        let mut out = Vec::new();
        let Some(sync) = self.sync else {
            return Ok(out);
        };
        self.close_until(end, &mut out);
        let last = sync + self.next_index * TRANSACTION_PERIOD;
        if self.next_index == 0 || end > last {
            out.push(Transaction::new(self.next_index, self.counts()));
            self.next_index += 1;
        }
        Ok(out)
    }
}

pub fn capture(
    timeline: &SignalTimeline,
    profile: &PrinterProfile,
) -> Result<Vec<Transaction>, CaptureError> {
    let mut c = Capturer::new(profile);
    let mut out = Vec::new();
    for e in timeline.iter() {
        out.extend(c.push(e));
    }
    out.extend(c.finish(timeline.end_time())?);
    Ok(out)
}

fn word(tx: &Transaction, axis: Axis) -> Result<i32, CaptureError> {
    let value = tx.get(axis);
    i32::try_from(value).map_err(|_| CaptureError::Overflow {
        index: tx.index,
        axis,
        value,
    })
}

pub fn encode(tx: &Transaction) -> Result<[u8; RECORD_LEN], CaptureError> {
    let mut out = [0u8; RECORD_LEN];
    for (i, axis) in Axis::ALL.into_iter().enumerate() {
        out[i * 4..i * 4 + 4].copy_from_slice(&word(tx, axis)?.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(index: u64, bytes: &[u8; RECORD_LEN]) -> Transaction {
    let w = |i: usize| {
        i64::from(i32::from_le_bytes(
            bytes[i * 4..i * 4 + 4].try_into().unwrap(),
        ))
    };
    Transaction::new(index, [w(0), w(1), w(2), w(3)])
}

pub fn encode_stream(txs: &[Transaction]) -> Result<Vec<u8>, CaptureError> {
    let mut out = Vec::with_capacity(txs.len() * RECORD_LEN);
    for tx in txs {
        out.extend_from_slice(&encode(tx)?);
    }
    Ok(out)
}

/// Index is implicit: record `i` is transaction `i`.
pub fn decode_stream(bytes: &[u8]) -> Result<Vec<Transaction>, CaptureError> {
    if !bytes.len().is_multiple_of(RECORD_LEN) {
        return Err(CaptureError::Truncated(bytes.len()));
    }
    Ok(bytes
        .chunks_exact(RECORD_LEN)
        .enumerate()
        .map(|(i, c)| decode(i as u64, c.try_into().unwrap()))
        .collect())
}

pub fn write_csv(txs: &[Transaction]) -> String {
    let mut s = String::with_capacity(24 * (txs.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for t in txs {
        let _ = writeln!(s, "{}, {}, {}, {}, {}", t.index, t.x, t.y, t.z, t.e);
    }
    s
}

pub fn read_csv(text: &str) -> Result<Vec<Transaction>, CaptureError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let header_ok = lines.next().is_some_and(|(_, h)| is_csv_header(h));
    if !header_ok {
        return Err(CaptureError::Csv {
            line: 1,
            msg: format!("expected header \"{CSV_HEADER}\""),
        });
    }
    lines.map(|(i, l)| parse_csv_row(l, i + 1)).collect()
}

/// One data row; `line` is the 1-based line number used in errors.
pub fn parse_csv_row(text: &str, line: usize) -> Result<Transaction, CaptureError> {
    let err = |msg: String| CaptureError::Csv { line, msg };
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    if fields.len() != 5 {
        return Err(err(format!("expected 5 fields, found {}", fields.len())));
    }
    let index = fields[0]
        .parse::<u64>()
        .map_err(|e| err(format!("index {:?}: {e}", fields[0])))?;
    let mut counts = [0i64; 4];
    for (c, f) in counts.iter_mut().zip(&fields[1..]) {
        *c = f.parse().map_err(|e| err(format!("count {f:?}: {e}")))?;
    }
    Ok(Transaction::new(index, counts))
}

/// Whether `text` is the capture CSV header, spacing aside.
pub fn is_csv_header(text: &str) -> bool {
    text.split(',')
        .map(str::trim)
        .eq(CSV_HEADER.split(',').map(str::trim))
}
