//! Event-time reduced-form limit order book.
//!
//! The book is tracked only at the best levels, as `(S^b, S^a, Q^b, Q^a)`,
//! and is advanced one event at a time. Every event touches exactly one side
//! and moves each best price by at most one tick. Under that rule the whole
//! trajectory is a function of two signed processes:
//!
//! * `X`, the signed size of the event on the touched side, and
//! * `Y`, the signed size of the touched best queue after the event
//!   (positive on the ask side, negative on the bid side).
//!
//! The crate is organised bottom-up:
//!
//! * [`book`]: domain types and the exact algebra between snapshots, queue
//!   changes `(V^b, V^a)` and `(X, Y)`.
//! * [`ingest`]: CSV event logs in, `(X, Y)` series and a data-quality report out.
//! * [`reconstruct`]: the state machine that replays `(X, Y)` into full book dynamics.
//! * [`passage`]: first-passage indices and Monte Carlo estimates of the
//!   next-move probabilities and the critical ask queue.
//! * [`models`]: semi-linear autoregressive generators for `(X, Y)`.
//! * [`calib`]: lag moments and block-Toeplitz solvers used for fitting.
//! * [`evaluate`]: walk-forward predictability metrics.
//! * [`synth`]: random valid event logs for tests and demos.

pub mod book;
pub mod calib;
pub mod evaluate;
pub mod ingest;
pub mod models;
pub mod passage;
pub mod reconstruct;
pub mod series;
pub mod synth;

pub use book::{BookEvent, BookState, FlowDelta, Side, Tick, XYEvent};
pub use models::{LagBuffer, XYModel};
pub use passage::PassageEstimate;
pub use reconstruct::{Transition, TransitionKind};
pub use series::{Segment, XySeries};
