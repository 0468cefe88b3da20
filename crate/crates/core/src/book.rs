//! Domain types for the reduced-form book and the algebra linking
//! post-event snapshots to queue changes `(V^b, V^a)` and to `(X, Y)`.
//!
//! Prices are integer tick counts and sizes are integers, so every identity
//! in this module holds exactly.

use std::fmt;
use std::str::FromStr;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BookError {
    #[error("tick must be a positive decimal, got {0}")]
    InvalidTick(String),
    #[error("price {price} is not a multiple of the tick {tick}")]
    TickMismatch { price: String, tick: String },
    #[error("invalid price {0:?}")]
    InvalidPrice(String),
    #[error("crossed or locked book: best_bid={best_bid} best_ask={best_ask} (ticks)")]
    CrossedBook { best_bid: i64, best_ask: i64 },
    #[error("best queue sizes must be positive: bid_qty={bid_qty} ask_qty={ask_qty}")]
    EmptyQueue { bid_qty: i64, ask_qty: i64 },
    #[error("event index {curr} does not follow {prev}")]
    IndexGap { prev: u64, curr: u64 },
    #[error("a best price moved by more than one tick (bid {bid_move:+}, ask {ask_move:+})")]
    AssumptionViolation { bid_move: i64, ask_move: i64 },
    #[error("event changes both sides of the book (v_b={v_b}, v_a={v_a}) or disagrees with its side label")]
    SideConflict { v_b: i64, v_a: i64 },
    #[error("Y must be nonzero")]
    ZeroY,
}

/// Minimum price increment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tick(Decimal);

impl Tick {
    pub fn new(delta: Decimal) -> Result<Self, BookError> {
        if delta <= Decimal::ZERO {
            return Err(BookError::InvalidTick(delta.to_string()));
        }
        Ok(Tick(delta.normalize()))
    }

    pub fn delta(&self) -> Decimal {
        self.0
    }

    /// Converts a price to a tick count, or `None` when it is off the grid.
    pub fn to_ticks(&self, price: Decimal) -> Option<i64> {
        let q = price.checked_div(self.0)?;
        if q.fract().is_zero() {
            q.to_i64()
        } else {
            None
        }
    }

    pub fn parse_price(&self, s: &str) -> Result<i64, BookError> {
        let price =
            Decimal::from_str(s.trim()).map_err(|_| BookError::InvalidPrice(s.to_string()))?;
        self.to_ticks(price).ok_or_else(|| BookError::TickMismatch {
            price: s.trim().to_string(),
            tick: self.to_string(),
        })
    }

    /// Canonical decimal rendering of a tick count, at the tick's own scale.
    pub fn format_price(&self, ticks: i64) -> String {
        let mut p = Decimal::from(ticks) * self.0;
        p.rescale(self.0.scale());
        p.to_string()
    }
}

impl FromStr for Tick {
    type Err = BookError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let d = Decimal::from_str(s.trim()).map_err(|_| BookError::InvalidTick(s.to_string()))?;
        Tick::new(d)
    }
}

impl fmt::Display for Tick {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn code(self) -> &'static str {
        match self {
            Side::Bid => "B",
            Side::Ask => "A",
        }
    }
}

/// One post-event snapshot of the best levels. Prices are in ticks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BookEvent {
    pub index: u64,
    pub side: Side,
    pub best_bid: i64,
    pub best_ask: i64,
    pub bid_qty: i64,
    pub ask_qty: i64,
}

impl BookEvent {
    pub fn validate(&self) -> Result<(), BookError> {
        if self.best_ask - self.best_bid < 1 {
            return Err(BookError::CrossedBook {
                best_bid: self.best_bid,
                best_ask: self.best_ask,
            });
        }
        if self.bid_qty <= 0 || self.ask_qty <= 0 {
            return Err(BookError::EmptyQueue {
                bid_qty: self.bid_qty,
                ask_qty: self.ask_qty,
            });
        }
        Ok(())
    }

    pub fn state(&self) -> BookState {
        BookState {
            s_b: self.best_bid,
            s_a: self.best_ask,
            q_b: self.bid_qty,
            q_a: self.ask_qty,
        }
    }
}

/// Reduced-form state `(S^b, S^a, Q^b, Q^a)`, prices in ticks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BookState {
    pub s_b: i64,
    pub s_a: i64,
    pub q_b: i64,
    pub q_a: i64,
}

impl BookState {
    pub fn new(s_b: i64, s_a: i64, q_b: i64, q_a: i64) -> Result<Self, BookError> {
        let state = BookState { s_b, s_a, q_b, q_a };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<(), BookError> {
        if self.spread_ticks() < 1 {
            return Err(BookError::CrossedBook {
                best_bid: self.s_b,
                best_ask: self.s_a,
            });
        }
        if self.q_b <= 0 || self.q_a <= 0 {
            return Err(BookError::EmptyQueue {
                bid_qty: self.q_b,
                ask_qty: self.q_a,
            });
        }
        Ok(())
    }

    pub fn spread_ticks(&self) -> i64 {
        self.s_a - self.s_b
    }

    /// Mid price in half ticks, so that it stays an integer.
    pub fn mid_half_ticks(&self) -> i64 {
        self.s_a + self.s_b
    }
}

/// Signed changes `(V^b, V^a)` of the best queues caused by one event.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowDelta {
    pub v_b: i64,
    pub v_a: i64,
}

impl FlowDelta {
    pub fn bid(v_b: i64) -> Self {
        FlowDelta { v_b, v_a: 0 }
    }

    pub fn ask(v_a: i64) -> Self {
        FlowDelta { v_b: 0, v_a }
    }

    pub fn is_noop(&self) -> bool {
        self.v_b == 0 && self.v_a == 0
    }
}

/// The pair `(X_j, Y_j)`. `y > 0` marks an ask event and `y < 0` a bid event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "(i64, i64)", into = "(i64, i64)")]
pub struct XYEvent {
    x: i64,
    y: i64,
}

impl XYEvent {
    pub fn new(x: i64, y: i64) -> Result<Self, BookError> {
        if y == 0 {
            return Err(BookError::ZeroY);
        }
        Ok(XYEvent { x, y })
    }

    pub fn x(&self) -> i64 {
        self.x
    }

    pub fn y(&self) -> i64 {
        self.y
    }

    pub fn side(&self) -> Side {
        if self.y > 0 {
            Side::Ask
        } else {
            Side::Bid
        }
    }

    /// `(V^b, V^a)` read off `(X, Y)` when the event is not a narrowing:
    /// `V^a = X 1{Y>0}`, `V^b = -X 1{Y<0}`.
    pub fn flow(&self) -> FlowDelta {
        match self.side() {
            Side::Ask => FlowDelta::ask(self.x),
            Side::Bid => FlowDelta::bid(-self.x),
        }
    }

    /// Same-sign rule for an order placed inside the spread:
    /// `0 < Y <= X` (ask) or `X <= Y < 0` (bid).
    pub fn is_inside_spread(&self) -> bool {
        (0 < self.y && self.y <= self.x) || (self.x <= self.y && self.y < 0)
    }

    pub fn as_f64(&self) -> [f64; 2] {
        [self.x as f64, self.y as f64]
    }
}

impl TryFrom<(i64, i64)> for XYEvent {
    type Error = BookError;

    fn try_from((x, y): (i64, i64)) -> Result<Self, Self::Error> {
        XYEvent::new(x, y)
    }
}

impl From<XYEvent> for (i64, i64) {
    fn from(ev: XYEvent) -> Self {
        (ev.x, ev.y)
    }
}

fn side_flow(prev_price: i64, curr_price: i64, prev_qty: i64, curr_qty: i64, toward: i64) -> i64 {
    let moved = curr_price - prev_price;
    if moved == 0 {
        curr_qty - prev_qty
    } else if moved == toward {
        curr_qty
    } else {
        -prev_qty
    }
}

/// Queue changes between two consecutive snapshots.
///
/// Unchanged price: the queue difference. Price moved away from the spread:
/// the whole previous queue was consumed. Price moved into the spread: the
/// new queue is the event's size.
pub fn derive_flow(prev: &BookEvent, curr: &BookEvent) -> Result<FlowDelta, BookError> {
    prev.validate()?;
    curr.validate()?;
    if curr.index != prev.index + 1 {
        return Err(BookError::IndexGap {
            prev: prev.index,
            curr: curr.index,
        });
    }
    let bid_move = curr.best_bid - prev.best_bid;
    let ask_move = curr.best_ask - prev.best_ask;
    if bid_move.abs() > 1 || ask_move.abs() > 1 {
        return Err(BookError::AssumptionViolation { bid_move, ask_move });
    }
    let v_b = side_flow(prev.best_bid, curr.best_bid, prev.bid_qty, curr.bid_qty, 1);
    let v_a = side_flow(prev.best_ask, curr.best_ask, prev.ask_qty, curr.ask_qty, -1);
    if v_b != 0 && v_a != 0 {
        return Err(BookError::SideConflict { v_b, v_a });
    }
    Ok(FlowDelta { v_b, v_a })
}

/// `X = V^a` and `Y = Q^a` for an ask event; `X = -V^b` and `Y = -Q^b` for a bid event.
pub fn derive_xy(curr: &BookEvent, flow: FlowDelta) -> Result<XYEvent, BookError> {
    let conflict = BookError::SideConflict {
        v_b: flow.v_b,
        v_a: flow.v_a,
    };
    match curr.side {
        Side::Ask if flow.v_b != 0 => Err(conflict),
        Side::Bid if flow.v_a != 0 => Err(conflict),
        Side::Ask => XYEvent::new(flow.v_a, curr.ask_qty),
        Side::Bid => XYEvent::new(-flow.v_b, -curr.bid_qty),
    }
}
