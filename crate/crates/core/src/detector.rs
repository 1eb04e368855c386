//! Golden-model comparison of step-count captures.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axis::Axis;
use crate::capture::Transaction;

pub const DEFAULT_MARGIN: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum DetectError {
    #[error("no reference: the golden capture is empty")]
    NoReference,
    #[error("margin must be a non-negative number, got {0}")]
    BadMargin(f64),
    #[error("row {position}: golden index {golden} but observed index {observed}")]
    IndexMismatch {
        position: usize,
        golden: u64,
        observed: u64,
    },
    #[error("protocol error: expected transaction {expected}, got {got}")]
    OutOfOrder { expected: u64, got: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Clean,
    TrojanLikely,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub index: u64,
    pub column: Axis,
    pub golden: i64,
    pub observed: i64,
    pub percent_diff: f64,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Index: {}, Column: {}, Values: {}, {}",
            self.index, self.column, self.golden, self.observed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub margin: f64,
    pub mismatches: Vec<Mismatch>,
    pub largest_percent_diff: f64,
    pub transactions_compared: usize,
    pub golden_len: usize,
    pub observed_len: usize,
    pub final_check_passed: bool,
    pub verdict: Verdict,
}

impl DetectionReport {
    pub fn is_clean(&self) -> bool {
        self.verdict == Verdict::Clean
    }

    pub fn first_mismatch(&self) -> Option<&Mismatch> {
        self.mismatches.first()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }

    /// The text report without the per-mismatch lines.
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "Largest percent difference found: {:.2}%",
            self.largest_percent_diff
        );
        let _ = writeln!(
            s,
            "Number of transactions compared: {}",
            self.transactions_compared
        );
        let _ = writeln!(s, "Number of mismatches: {}", self.mismatches.len());
        let _ = writeln!(
            s,
            "Final check (0% margin): {} ({} golden, {} observed transactions)",
            if self.final_check_passed {
                "passed"
            } else {
                "FAILED"
            },
            self.golden_len,
            self.observed_len
        );
        s.push_str(match self.verdict {
            Verdict::TrojanLikely => "Trojan likely!\n",
            Verdict::Clean => "No Trojan detected.\n",
        });
        s
    }
}

impl fmt::Display for DetectionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        for m in &self.mismatches {
            let _ = writeln!(s, "{m}");
        }
        s.push_str(&self.summary_text());
        f.write_str(&s)
    }
}

/// `100·|g−o| / max(|g|, 1)`.
pub fn percent_diff(golden: i64, observed: i64) -> f64 {
    100.0 * golden.abs_diff(observed) as f64 / golden.unsigned_abs().max(1) as f64
}

fn check_margin(margin: f64) -> Result<(), DetectError> {
    if margin.is_nan() || margin < 0.0 {
        return Err(DetectError::BadMargin(margin));
    }
    Ok(())
}

fn row_mismatches(g: &Transaction, o: &Transaction, margin: f64) -> impl Iterator<Item = Mismatch> {
    let (g, o) = (*g, *o);
    Axis::ALL.into_iter().filter_map(move |axis| {
        let (gv, ov) = (g.get(axis), o.get(axis));
        let pct = percent_diff(gv, ov);
        (pct > margin).then_some(Mismatch {
            index: g.index,
            column: axis,
            golden: gv,
            observed: ov,
            percent_diff: pct,
        })
    })
}

fn final_check(golden: &[Transaction], observed: &[Transaction]) -> bool {
    match (golden.last(), observed.last()) {
        (Some(g), Some(o)) => {
            g.counts() == o.counts() && golden.len().abs_diff(observed.len()) <= 1
        }
        _ => false,
    }
}

fn report(
    golden: &[Transaction],
    observed: &[Transaction],
    margin: f64,
    mismatches: Vec<Mismatch>,
) -> DetectionReport {
    let final_check_passed = final_check(golden, observed);
    let largest_percent_diff = mismatches
        .iter()
        .map(|m| m.percent_diff)
        .fold(0.0, f64::max);
    let verdict = if mismatches.is_empty() && final_check_passed {
        Verdict::Clean
    } else {
        Verdict::TrojanLikely
    };
    DetectionReport {
        margin,
        mismatches,
        largest_percent_diff,
        transactions_compared: golden.len().min(observed.len()),
        golden_len: golden.len(),
        observed_len: observed.len(),
        final_check_passed,
        verdict,
    }
}

/// Pairs rows positionally; their indices must agree.
pub fn compare(
    golden: &[Transaction],
    observed: &[Transaction],
    margin: f64,
) -> Result<DetectionReport, DetectError> {
    check_margin(margin)?;
    if golden.is_empty() {
        return Err(DetectError::NoReference);
    }
    let mut mismatches = Vec::new();
    for (position, (g, o)) in golden.iter().zip(observed).enumerate() {
        if g.index != o.index {
            return Err(DetectError::IndexMismatch {
                position,
                golden: g.index,
                observed: o.index,
            });
        }
        mismatches.extend(row_mismatches(g, o, margin));
    }
    Ok(report(golden, observed, margin, mismatches))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum StreamEvent {
    Mismatch(Mismatch),
    /// Raised once, with the first mismatch.
    TrojanLikely {
        index: u64,
    },
}

/// Live comparison while the print runs.
#[derive(Debug, Clone)]
pub struct StreamCompare<'a> {
    golden: &'a [Transaction],
    margin: f64,
    observed: Vec<Transaction>,
    mismatches: Vec<Mismatch>,
}

impl<'a> StreamCompare<'a> {
    pub fn new(golden: &'a [Transaction], margin: f64) -> Result<StreamCompare<'a>, DetectError> {
        check_margin(margin)?;
        if golden.is_empty() {
            return Err(DetectError::NoReference);
        }
        Ok(StreamCompare {
            golden,
            margin,
            observed: Vec::new(),
            mismatches: Vec::new(),
        })
    }

    pub fn flagged(&self) -> bool {
        !self.mismatches.is_empty()
    }

    pub fn push(&mut self, tx: Transaction) -> Result<Vec<StreamEvent>, DetectError> {
        let pos = self.observed.len();
        let expected = match (self.golden.get(pos), self.observed.last()) {
            (Some(g), _) => g.index,
            (None, Some(prev)) => prev.index + 1,
            (None, None) => unreachable!("golden is non-empty"),
        };
        if tx.index != expected {
            return Err(DetectError::OutOfOrder {
                expected,
                got: tx.index,
            });
        }
        let mut events = Vec::new();
        if let Some(g) = self.golden.get(pos) {
            let was_flagged = self.flagged();
            for m in row_mismatches(g, &tx, self.margin) {
                events.push(StreamEvent::Mismatch(m.clone()));
                self.mismatches.push(m);
            }
            if !was_flagged && self.flagged() {
                events.push(StreamEvent::TrojanLikely { index: tx.index });
            }
        }
        self.observed.push(tx);
        Ok(events)
    }

    /// End of stream: the same report a batch compare would give.
    pub fn finish(self) -> DetectionReport {
        report(self.golden, &self.observed, self.margin, self.mismatches)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(start: u64, xs: &[[i64; 4]]) -> Vec<Transaction> {
        xs.iter()
            .enumerate()
            .map(|(i, c)| Transaction::new(start + i as u64, *c))
            .collect()
    }

    fn worked_example() -> (Vec<Transaction>, Vec<Transaction>) {
        let golden = rows(
            5113,
            &[
                [6060, 8266, 960, 52843],
                [6304, 8095, 960, 52856],
                [7218, 8285, 960, 52856],
                [8166, 8483, 960, 52856],
                [8671, 8620, 960, 52859],
                [8384, 8733, 960, 52875],
            ],
        );
        let observed = rows(
            5113,
            &[
                [6027, 8499, 960, 52832],
                [6113, 8213, 960, 52846],
                [6489, 8133, 960, 52856],
                [7437, 8331, 960, 52856],
                [8384, 8528, 960, 52856],
                [8601, 8644, 960, 52863],
            ],
        );
        (golden, observed)
    }

    #[test]
    fn worked_rows_flag_x_at_5115_and_5116() {
        let (g, o) = worked_example();
        let r = compare(&g, &o, DEFAULT_MARGIN).unwrap();
        let at: Vec<(u64, Axis)> = r.mismatches.iter().map(|m| (m.index, m.column)).collect();
        assert_eq!(at, vec![(5115, Axis::X), (5116, Axis::X)]);
        assert!((r.mismatches[0].percent_diff - 10.10).abs() < 0.01);
        assert!((r.mismatches[1].percent_diff - 8.93).abs() < 0.01);
        assert_eq!(r.verdict, Verdict::TrojanLikely);
        let text = r.to_text();
        assert!(text.contains("Index: 5115, Column: X, Values: 7218, 6489\n"));
        assert!(text.contains("Index: 5116, Column: X, Values: 8166, 7437\n"));
        assert!(text.contains("Largest percent difference found: 10.10%\n"));
        assert!(text.contains("Number of transactions compared: 6\n"));
        assert!(text.contains("Number of mismatches: 2\n"));
        assert!(text.ends_with("Trojan likely!\n"));
    }

    #[test]
    fn identity_is_clean() {
        let (g, _) = worked_example();
        let r = compare(&g, &g, DEFAULT_MARGIN).unwrap();
        assert!(r.is_clean());
        assert!(r.final_check_passed);
        assert_eq!(r.largest_percent_diff, 0.0);
        assert!(r.to_text().ends_with("No Trojan detected.\n"));
    }

    #[test]
    fn margin_boundary() {
        let g = rows(0, &[[1000, 0, 0, 0]]);
        let r = compare(&g, &rows(0, &[[1049, 0, 0, 0]]), 5.0).unwrap();
        assert!(r.mismatches.is_empty());
        let r = compare(&g, &rows(0, &[[1051, 0, 0, 0]]), 5.0).unwrap();
        assert_eq!(r.mismatches.len(), 1);
        assert!((r.mismatches[0].percent_diff - 5.1).abs() < 1e-9);
        assert_eq!(percent_diff(0, 1), 100.0);
    }

    #[test]
    fn length_rules() {
        let g = rows(0, &[[1, 1, 1, 1], [2, 2, 2, 2], [3, 3, 3, 3]]);
        assert_eq!(compare(&[], &g, 5.0), Err(DetectError::NoReference));
        let empty = compare(&g, &[], 5.0).unwrap();
        assert!(!empty.final_check_passed);
        assert_eq!(empty.verdict, Verdict::TrojanLikely);
        let short = compare(&g, &g[..1], 5.0).unwrap();
        assert!(short.mismatches.is_empty());
        assert!(!short.final_check_passed);
        let mut longer = g.clone();
        longer.push(Transaction::new(3, [3, 3, 3, 3]));
        assert!(compare(&g, &longer, 5.0).unwrap().is_clean());
        assert!(matches!(
            compare(&g, &rows(1, &[[1, 1, 1, 1]]), 5.0),
            Err(DetectError::IndexMismatch { .. })
        ));
        assert!(compare(&g, &g, -1.0).is_err());
    }

    #[test]
    fn stream_matches_batch() {
        let (g, o) = worked_example();
        let mut s = StreamCompare::new(&g, DEFAULT_MARGIN).unwrap();
        let mut events = Vec::new();
        for tx in &o {
            events.extend(s.push(*tx).unwrap());
        }
        assert!(matches!(&events[0], StreamEvent::Mismatch(m) if m.index == 5115));
        assert_eq!(events[1], StreamEvent::TrojanLikely { index: 5115 });
        assert_eq!(s.finish(), compare(&g, &o, DEFAULT_MARGIN).unwrap());
    }

    #[test]
    fn stream_rejects_out_of_order() {
        let (g, o) = worked_example();
        let mut s = StreamCompare::new(&g, DEFAULT_MARGIN).unwrap();
        s.push(o[0]).unwrap();
        assert_eq!(
            s.push(o[2]),
            Err(DetectError::OutOfOrder {
                expected: 5114,
                got: 5115
            })
        );
    }

    #[test]
    fn json_round_trips() {
        let (g, o) = worked_example();
        let r = compare(&g, &o, DEFAULT_MARGIN).unwrap();
        let back: DetectionReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
