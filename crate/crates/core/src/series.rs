//! `(X, Y)` series and the xy file format.
//!
//! A series is a list of segments. Each segment carries the book state it
//! starts from, so that replaying its events reproduces the book exactly. A
//! new segment starts wherever ingest had to drop a transition.
//!
//! File layout (CSV, no header row, variable arity):
//!
//! ```text
//! schema,xybook-xy/1,tick,0.01
//! start,<s_b>,<s_a>,<q_b>,<q_a>
//! <x>,<y>
//! ...
//! ```
//!
//! Prices on `start` rows are tick counts.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::book::{BookError, BookState, Tick, XYEvent};

pub const XY_SCHEMA: &str = "xybook-xy/1";

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {msg}")]
    Format { line: u64, msg: String },
    #[error("line {line}: {source}")]
    Book { line: u64, source: BookError },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub start: BookState,
    pub events: Vec<XYEvent>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct XySeries {
    pub tick: Tick,
    pub segments: Vec<Segment>,
}

impl XySeries {
    pub fn new(tick: Tick) -> Self {
        XySeries {
            tick,
            segments: Vec::new(),
        }
    }

    pub fn single(tick: Tick, start: BookState, events: Vec<XYEvent>) -> Self {
        XySeries {
            tick,
            segments: vec![Segment { start, events }],
        }
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.events.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn events(&self) -> impl Iterator<Item = &XYEvent> + '_ {
        self.segments.iter().flat_map(|s| s.events.iter())
    }

    /// The first `n` events, keeping segment boundaries.
    pub fn truncated(&self, n: usize) -> XySeries {
        let mut out = XySeries::new(self.tick);
        let mut left = n;
        for seg in &self.segments {
            if left == 0 {
                break;
            }
            let take = seg.events.len().min(left);
            out.segments.push(Segment {
                start: seg.start,
                events: seg.events[..take].to_vec(),
            });
            left -= take;
        }
        out
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "schema,{XY_SCHEMA},tick,{}", self.tick)?;
        for seg in &self.segments {
            let s = seg.start;
            writeln!(w, "start,{},{},{},{}", s.s_b, s.s_a, s.q_b, s.q_a)?;
            for ev in &seg.events {
                writeln!(w, "{},{}", ev.x(), ev.y())?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self, SeriesError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(r);
        let mut series: Option<XySeries> = None;
        let mut record = csv::StringRecord::new();
        while rdr.read_record(&mut record)? {
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let fmt_err = |msg: &str| SeriesError::Format {
                line,
                msg: msg.to_string(),
            };
            let int = |i: usize| -> Result<i64, SeriesError> {
                record
                    .get(i)
                    .and_then(|v| v.trim().parse::<i64>().ok())
                    .ok_or_else(|| fmt_err(&format!("field {} is not an integer", i + 1)))
            };
            match record.get(0) {
                Some("schema") => {
                    if record.get(1) != Some(XY_SCHEMA) || record.get(2) != Some("tick") {
                        return Err(fmt_err("unsupported schema line"));
                    }
                    let tick: Tick = record
                        .get(3)
                        .unwrap_or("")
                        .parse()
                        .map_err(|source| SeriesError::Book { line, source })?;
                    series = Some(XySeries::new(tick));
                }
                Some("start") => {
                    let s = series.as_mut().ok_or_else(|| fmt_err("missing schema line"))?;
                    let start = BookState::new(int(1)?, int(2)?, int(3)?, int(4)?)
                        .map_err(|source| SeriesError::Book { line, source })?;
                    s.segments.push(Segment {
                        start,
                        events: Vec::new(),
                    });
                }
                _ => {
                    let s = series.as_mut().ok_or_else(|| fmt_err("missing schema line"))?;
                    if record.len() != 2 {
                        return Err(fmt_err("expected x,y"));
                    }
                    let ev = XYEvent::new(int(0)?, int(1)?)
                        .map_err(|source| SeriesError::Book { line, source })?;
                    s.segments
                        .last_mut()
                        .ok_or_else(|| fmt_err("event before any start row"))?
                        .events
                        .push(ev);
                }
            }
        }
        series.ok_or(SeriesError::Format {
            line: 0,
            msg: "empty xy file".to_string(),
        })
    }
}
