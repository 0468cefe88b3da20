//! Replays an `(X, Y)` stream into the full book trajectory.
//!
//! For an ask event (`Y > 0`), with the bid side obtained by flipping signs:
//!
//! 1. `Q^a + X <= 0`: the ask queue is depleted, the ask moves up one tick
//!    and `Y` is the queue found at the new level. The consumed flow is
//!    capped at the previous queue.
//! 2. spread of two ticks or more and `0 < Y <= X`: a limit order is placed
//!    inside the spread, the ask moves down one tick and `Y` is the new queue.
//! 3. otherwise the queue absorbs the event: `Q^a := Q^a + X`, which must
//!    equal `Y`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{BookError, BookState, FlowDelta, Side, XYEvent};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReconstructError {
    #[error("invalid state: {0}")]
    InvalidState(#[from] BookError),
    #[error("Y={y} disagrees with the updated queue {queue}")]
    InconsistentY { y: i64, queue: i64 },
    #[error("event X={x}, Y={y} implies an order inside a one-tick spread")]
    NarrowAtMinSpread { x: i64, y: i64 },
    #[error("event {position}: {source}")]
    AtEvent {
        position: usize,
        source: Box<ReconstructError>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransitionKind {
    NoMove,
    WidenUp,
    WidenDown,
    NarrowAsk,
    NarrowBid,
}

impl TransitionKind {
    pub fn is_price_move(self) -> bool {
        self != TransitionKind::NoMove
    }

    /// Direction of the mid price: +1, -1 or 0.
    pub fn direction(self) -> i8 {
        match self {
            TransitionKind::WidenUp | TransitionKind::NarrowBid => 1,
            TransitionKind::WidenDown | TransitionKind::NarrowAsk => -1,
            TransitionKind::NoMove => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TransitionKind::NoMove => "NoMove",
            TransitionKind::WidenUp => "WidenUp",
            TransitionKind::WidenDown => "WidenDown",
            TransitionKind::NarrowAsk => "NarrowAsk",
            TransitionKind::NarrowBid => "NarrowBid",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub kind: TransitionKind,
    pub state_after: BookState,
    pub flow: FlowDelta,
}

/// Classifies an event against the current state without applying it.
pub fn classify(state: &BookState, ev: &XYEvent) -> TransitionKind {
    let (x, y) = (ev.x(), ev.y());
    match ev.side() {
        Side::Ask if state.q_a + x <= 0 => TransitionKind::WidenUp,
        Side::Bid if state.q_b - x <= 0 => TransitionKind::WidenDown,
        Side::Ask if state.spread_ticks() >= 2 && 0 < y && y <= x => TransitionKind::NarrowAsk,
        Side::Bid if state.spread_ticks() >= 2 && x <= y && y < 0 => TransitionKind::NarrowBid,
        _ => TransitionKind::NoMove,
    }
}

pub fn step(state: &BookState, ev: &XYEvent) -> Result<Transition, ReconstructError> {
    state.validate()?;
    let (x, y) = (ev.x(), ev.y());
    let mut next = *state;
    let kind = classify(state, ev);
    let flow = match kind {
        TransitionKind::WidenUp => {
            next.s_a += 1;
            next.q_a = y;
            FlowDelta::ask(-state.q_a)
        }
        TransitionKind::WidenDown => {
            next.s_b -= 1;
            next.q_b = -y;
            FlowDelta::bid(-state.q_b)
        }
        TransitionKind::NarrowAsk => {
            next.s_a -= 1;
            next.q_a = y;
            FlowDelta::ask(x)
        }
        TransitionKind::NarrowBid => {
            next.s_b += 1;
            next.q_b = -y;
            FlowDelta::bid(-x)
        }
        TransitionKind::NoMove => {
            if ev.is_inside_spread() {
                return Err(ReconstructError::NarrowAtMinSpread { x, y });
            }
            match ev.side() {
                Side::Ask => {
                    next.q_a = state.q_a + x;
                    if next.q_a != y {
                        return Err(ReconstructError::InconsistentY { y, queue: next.q_a });
                    }
                    FlowDelta::ask(x)
                }
                Side::Bid => {
                    next.q_b = state.q_b - x;
                    if -next.q_b != y {
                        return Err(ReconstructError::InconsistentY {
                            y,
                            queue: -next.q_b,
                        });
                    }
                    FlowDelta::bid(-x)
                }
            }
        }
    };
    Ok(Transition {
        kind,
        state_after: next,
        flow,
    })
}

/// Folds [`step`] over a stream, failing on the first bad event.
pub fn reconstruct_stream(
    initial: &BookState,
    events: &[XYEvent],
) -> Result<Vec<Transition>, ReconstructError> {
    initial.validate()?;
    let mut state = *initial;
    let mut out = Vec::with_capacity(events.len());
    for (position, ev) in events.iter().enumerate() {
        let tr = step(&state, ev).map_err(|e| ReconstructError::AtEvent {
            position,
            source: Box::new(e),
        })?;
        state = tr.state_after;
        out.push(tr);
    }
    Ok(out)
}
