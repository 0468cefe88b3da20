//! Event-log CSV parsing and `(X, Y)` extraction.
//!
//! The log holds one post-event snapshot of the best levels per row:
//!
//! ```text
//! index,side,best_bid,best_ask,bid_qty,ask_qty
//! 0,B,100.00,100.01,7,3
//! ```
//!
//! Row 0 is the opening state; event `j` is the change from row `j-1` to row `j`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{derive_flow, derive_xy, BookError, BookEvent, Side, Tick, XYEvent};
use crate::series::{Segment, XySeries};

pub const LOG_HEADER: [&str; 6] = ["index", "side", "best_bid", "best_ask", "bid_qty", "ask_qty"];
pub const REPORT_SCHEMA: &str = "xybook-ingest-report/1";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("line {line}: {source}")]
    TickMismatch { line: u64, source: BookError },
    #[error("need at least 2 events, got {0}")]
    EmptyStream(usize),
}

#[derive(Clone, Copy, Debug)]
pub struct LogFormat {
    pub tick: Tick,
    pub delimiter: u8,
}

impl LogFormat {
    pub fn csv(tick: Tick) -> Self {
        LogFormat {
            tick,
            delimiter: b',',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub schema: String,
    /// Transitions between consecutive rows.
    pub total_events: u64,
    pub a2_violations: u64,
    pub a2_violation_rate: f64,
    pub zero_y_dropped: u64,
    pub noop_dropped: u64,
    pub side_conflicts: u64,
    pub index_gaps: u64,
    /// Transitions that changed both sides and were emitted as two events.
    pub side_splits: u64,
    pub emitted_events: u64,
    pub segments: u64,
    /// Post-event spread (ticks) of every accepted transition.
    pub spread_histogram: BTreeMap<i64, u64>,
}

impl IngestReport {
    pub fn dropped(&self) -> u64 {
        self.a2_violations + self.zero_y_dropped + self.noop_dropped + self.side_conflicts + self.index_gaps
    }
}

pub fn parse_log<R: Read>(source: R, format: LogFormat) -> Result<Vec<BookEvent>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(true)
        .from_reader(source);
    let csv_err = |e: csv::Error| IngestError::Parse {
        line: e.position().map(|p| p.line()).unwrap_or(0),
        msg: e.to_string(),
    };
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().map(str::trim).ne(LOG_HEADER.iter().copied()) {
        return Err(IngestError::Parse {
            line: 1,
            msg: format!("expected header {}", LOG_HEADER.join(",")),
        });
    }

    let mut events: Vec<BookEvent> = Vec::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record).map_err(csv_err)? {
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let perr = |msg: String| IngestError::Parse { line, msg };
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let int = |i: usize| -> Result<i64, IngestError> {
            field(i)
                .parse::<i64>()
                .map_err(|_| perr(format!("{} is not an integer: {:?}", LOG_HEADER[i], field(i))))
        };
        let price = |i: usize| -> Result<i64, IngestError> {
            format.tick.parse_price(field(i)).map_err(|source| match source {
                BookError::TickMismatch { .. } => IngestError::TickMismatch { line, source },
                other => perr(other.to_string()),
            })
        };

        let index = field(0)
            .parse::<u64>()
            .map_err(|_| perr(format!("index is not a nonnegative integer: {:?}", field(0))))?;
        let side = match field(1) {
            "B" => Side::Bid,
            "A" => Side::Ask,
            other => return Err(perr(format!("side must be B or A, got {other:?}"))),
        };
        let (bid_qty, ask_qty) = (int(4)?, int(5)?);
        if bid_qty < 0 || ask_qty < 0 {
            return Err(perr("quantities must be nonnegative".to_string()));
        }
        let ev = BookEvent {
            index,
            side,
            best_bid: price(2)?,
            best_ask: price(3)?,
            bid_qty,
            ask_qty,
        };
        ev.validate().map_err(|e| perr(e.to_string()))?;
        if let Some(prev) = events.last() {
            if ev.index <= prev.index {
                return Err(perr(format!(
                    "index {} does not increase (previous {})",
                    ev.index, prev.index
                )));
            }
        }
        events.push(ev);
    }
    Ok(events)
}

pub fn write_log<W: Write>(sink: W, events: &[BookEvent], tick: Tick) -> Result<(), IngestError> {
    let mut w = csv::WriterBuilder::new().from_writer(sink);
    let io = |e: csv::Error| IngestError::Io(e.into());
    w.write_record(LOG_HEADER).map_err(io)?;
    for ev in events {
        w.write_record([
            ev.index.to_string(),
            ev.side.code().to_string(),
            tick.format_price(ev.best_bid),
            tick.format_price(ev.best_ask),
            ev.bid_qty.to_string(),
            ev.ask_qty.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Splits a transition that changed both sides into a bid event and an ask
/// event, choosing the order that keeps the intermediate book uncrossed.
fn split_two_sided(prev: &BookEvent, curr: &BookEvent) -> Option<[XYEvent; 2]> {
    let bid_first = BookEvent {
        index: prev.index + 1,
        side: Side::Bid,
        best_bid: curr.best_bid,
        bid_qty: curr.bid_qty,
        ..*prev
    };
    let ask_first = BookEvent {
        index: prev.index + 1,
        side: Side::Ask,
        best_ask: curr.best_ask,
        ask_qty: curr.ask_qty,
        ..*prev
    };
    [(bid_first, Side::Ask), (ask_first, Side::Bid)]
        .into_iter()
        .filter(|(mid, _)| mid.validate().is_ok())
        .find_map(|(mid, second_side)| {
            let last = BookEvent {
                index: mid.index + 1,
                side: second_side,
                ..*curr
            };
            let a = derive_xy(&mid, derive_flow(prev, &mid).ok()?).ok()?;
            let b = derive_xy(&last, derive_flow(&mid, &last).ok()?).ok()?;
            Some([a, b])
        })
}

/// Maps consecutive snapshots to `(X, Y)`.
///
/// Transitions that break the one-tick rule, skip an index, contradict their
/// side label or change nothing at the best levels are dropped and counted.
/// Each drop (other than a no-op) starts a new segment at the next snapshot.
pub fn extract_xy(events: &[BookEvent]) -> Result<(XySeries, IngestReport), IngestError> {
    extract_xy_with_tick(events, None)
}

pub fn extract_xy_with_tick(
    events: &[BookEvent],
    tick: Option<Tick>,
) -> Result<(XySeries, IngestReport), IngestError> {
    if events.len() < 2 {
        return Err(IngestError::EmptyStream(events.len()));
    }
    let tick = tick.unwrap_or_else(|| "1".parse().expect("unit tick"));
    let mut report = IngestReport {
        schema: REPORT_SCHEMA.to_string(),
        total_events: (events.len() - 1) as u64,
        a2_violations: 0,
        a2_violation_rate: 0.0,
        zero_y_dropped: 0,
        noop_dropped: 0,
        side_conflicts: 0,
        index_gaps: 0,
        side_splits: 0,
        emitted_events: 0,
        segments: 0,
        spread_histogram: BTreeMap::new(),
    };
    let mut series = XySeries::new(tick);
    let mut current = Segment {
        start: events[0].state(),
        events: Vec::new(),
    };

    for pair in events.windows(2) {
        let (prev, curr) = (&pair[0], &pair[1]);
        let accepted: Result<Vec<XYEvent>, BookError> = match derive_flow(prev, curr) {
            Ok(flow) if flow.is_noop() => {
                report.noop_dropped += 1;
                continue;
            }
            Ok(flow) => derive_xy(curr, flow).map(|xy| vec![xy]),
            Err(BookError::SideConflict { v_b, v_a }) => match split_two_sided(prev, curr) {
                Some(two) => {
                    report.side_splits += 1;
                    Ok(two.to_vec())
                }
                None => Err(BookError::SideConflict { v_b, v_a }),
            },
            Err(e) => Err(e),
        };
        match accepted {
            Ok(xys) => {
                current.events.extend(xys);
                *report.spread_histogram.entry(curr.best_ask - curr.best_bid).or_insert(0) += 1;
            }
            Err(e) => {
                match e {
                    BookError::AssumptionViolation { .. } => report.a2_violations += 1,
                    BookError::IndexGap { .. } => report.index_gaps += 1,
                    BookError::ZeroY => report.zero_y_dropped += 1,
                    _ => report.side_conflicts += 1,
                }
                let next = Segment {
                    start: curr.state(),
                    events: Vec::new(),
                };
                let done = std::mem::replace(&mut current, next);
                if !done.events.is_empty() {
                    series.segments.push(done);
                }
            }
        }
    }
    if !current.events.is_empty() {
        series.segments.push(current);
    }
    report.a2_violation_rate = report.a2_violations as f64 / report.total_events as f64;
    report.emitted_events = series.len() as u64;
    report.segments = series.segments.len() as u64;
    Ok((series, report))
}
