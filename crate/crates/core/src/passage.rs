//! First-passage indices and next-move probabilities.
//!
//! Starting from queue sizes `(q_b, q_a)`, the bid is depleted at the first
//! event `l_b` where the cumulative bid flow reaches `-q_b`, and likewise
//! for `l_a`. When the spread is at least two ticks an order may also
//! arrive inside the spread; the first such ask (bid) event is
//! `tilde_l_a` (`tilde_l_b`), detected by the same-sign rule
//! `0 < Y <= X` (`X <= Y < 0`). The next mid-price move happens at the
//! smallest of these indices.
//!
//! Indices are 1-based event counts into a path; `None` means the event
//! does not occur within the path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{BookError, BookState, FlowDelta, Side, XYEvent};
use crate::models::{LagBuffer, ModelError, XYModel};
use crate::reconstruct;

pub const ESTIMATE_SCHEMA: &str = "xybook-passage/1";

#[derive(Debug, Error)]
pub enum PassageError {
    #[error("stopping index {index:?} is outside a path of {len} events")]
    IndexOutOfPath { index: Option<usize>, len: usize },
    #[error(transparent)]
    InvalidState(#[from] BookError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("p_up still exceeds p_down at q_a = {bound} (search cap)")]
    BracketFailure { bound: i64 },
    #[error("{0}")]
    InvalidParams(String),
}

/// Outcome of a stage: which stopping time came first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    /// Ask depleted; the ask moves up one tick.
    AskDepleted,
    /// Bid depleted; the bid moves down one tick.
    BidDepleted,
    /// New ask inside the spread; the ask moves down one tick.
    AskInside,
    /// New bid inside the spread; the bid moves up one tick.
    BidInside,
}

impl Outcome {
    /// Sign of the mid-price move.
    pub fn direction(self) -> i8 {
        match self {
            Outcome::AskDepleted | Outcome::BidInside => 1,
            Outcome::BidDepleted | Outcome::AskInside => -1,
        }
    }
}

/// Stopping indices of one stage, starting after event `start`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub start: usize,
    pub l_b: Option<usize>,
    pub l_a: Option<usize>,
    pub tilde_l_b: Option<usize>,
    pub tilde_l_a: Option<usize>,
}

fn min_opt(a: Option<usize>, b: Option<usize>) -> Option<usize> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

impl Stage {
    pub fn tau(&self) -> Option<usize> {
        min_opt(min_opt(self.l_b, self.l_a), min_opt(self.tilde_l_b, self.tilde_l_a))
    }

    /// The stopping time attaining `tau`. Each event touches one side and
    /// is either a depletion or an inside order, so it is unique.
    pub fn outcome(&self) -> Option<Outcome> {
        let tau = self.tau()?;
        Some(if self.l_a == Some(tau) {
            Outcome::AskDepleted
        } else if self.l_b == Some(tau) {
            Outcome::BidDepleted
        } else if self.tilde_l_a == Some(tau) {
            Outcome::AskInside
        } else {
            Outcome::BidInside
        })
    }
}

/// The first two stages of a path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoppingIndices {
    pub first: Stage,
    /// Present when the first stage stops within the path.
    pub second: Option<Stage>,
}

impl StoppingIndices {
    pub fn tau0(&self) -> Option<usize> {
        self.first.tau()
    }

    pub fn tau1(&self) -> Option<usize> {
        self.second.and_then(|s| s.tau())
    }
}

/// Depletion indices from queue sizes and a flow sequence alone.
pub fn first_passage(q_b: i64, q_a: i64, flows: &[FlowDelta]) -> Stage {
    let mut stage = Stage::default();
    let (mut cb, mut ca) = (0i64, 0i64);
    for (i, f) in flows.iter().enumerate() {
        cb += f.v_b;
        ca += f.v_a;
        if stage.l_b.is_none() && cb <= -q_b {
            stage.l_b = Some(i + 1);
        }
        if stage.l_a.is_none() && ca <= -q_a {
            stage.l_a = Some(i + 1);
        }
        if stage.l_b.is_some() && stage.l_a.is_some() {
            break;
        }
    }
    stage
}

/// Stopping indices of the stage that begins after `path[..start]`, with
/// `state` the book at that point. Inside-spread indices are only defined
/// when the spread is at least two ticks.
pub fn stage_from(state: &BookState, path: &[XYEvent], start: usize) -> Stage {
    let mut stage = Stage {
        start,
        ..Stage::default()
    };
    let wide = state.spread_ticks() >= 2;
    let (mut cb, mut ca) = (0i64, 0i64);
    for (k, ev) in path.iter().enumerate().skip(start) {
        let l = k + 1;
        let f = ev.flow();
        cb += f.v_b;
        ca += f.v_a;
        if stage.l_b.is_none() && cb <= -state.q_b {
            stage.l_b = Some(l);
        }
        if stage.l_a.is_none() && ca <= -state.q_a {
            stage.l_a = Some(l);
        }
        if wide {
            let (x, y) = (ev.x(), ev.y());
            match ev.side() {
                Side::Ask if stage.tilde_l_a.is_none() && 0 < y && y <= x => stage.tilde_l_a = Some(l),
                Side::Bid if stage.tilde_l_b.is_none() && x <= y && y < 0 => stage.tilde_l_b = Some(l),
                _ => {}
            }
        }
    }
    stage
}

/// Book state right after the stage's stopping event.
///
/// On a depletion the moved side's queue becomes `|Y|` at the stopping
/// event and the other side keeps its initial size plus its cumulative
/// flow. On an inside order the new queue is `|Y|`, which equals the
/// order size `V` whenever `X = Y`.
pub fn apply_reinit(state: &BookState, stage: &Stage, path: &[XYEvent]) -> Result<BookState, PassageError> {
    state.validate()?;
    let tau = stage.tau();
    let (Some(t), Some(outcome)) = (tau, stage.outcome()) else {
        return Err(PassageError::IndexOutOfPath { index: tau, len: path.len() });
    };
    if t > path.len() || t <= stage.start {
        return Err(PassageError::IndexOutOfPath { index: tau, len: path.len() });
    }
    let (sum_b, sum_a) = path[stage.start..t]
        .iter()
        .fold((0, 0), |(b, a), ev| (b + ev.flow().v_b, a + ev.flow().v_a));
    let q_new = path[t - 1].y().abs();
    let mut next = *state;
    match outcome {
        Outcome::AskDepleted => {
            next.s_a += 1;
            next.q_a = q_new;
            next.q_b += sum_b;
        }
        Outcome::BidDepleted => {
            next.s_b -= 1;
            next.q_b = q_new;
            next.q_a += sum_a;
        }
        Outcome::AskInside => {
            next.s_a -= 1;
            next.q_a = q_new;
            next.q_b += sum_b;
        }
        Outcome::BidInside => {
            next.s_b += 1;
            next.q_b = q_new;
            next.q_a += sum_a;
        }
    }
    Ok(next)
}

pub fn stopping_indices(state: &BookState, path: &[XYEvent]) -> Result<StoppingIndices, PassageError> {
    state.validate()?;
    let first = stage_from(state, path, 0);
    let second = match first.tau() {
        Some(t) => {
            let after = apply_reinit(state, &first, path)?;
            Some(stage_from(&after, path, t))
        }
        None => None,
    };
    Ok(StoppingIndices { first, second })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassageEstimate {
    pub schema: String,
    pub p_up: f64,
    pub p_down: f64,
    pub censored: f64,
    /// 95% normal-approximation half-width for `p_up`.
    pub half_width: f64,
    pub n_up: u64,
    pub n_down: u64,
    pub n_censored: u64,
    pub n_paths: u64,
    pub horizon: u64,
}

impl PassageEstimate {
    fn from_counts(n_up: u64, n_down: u64, n_paths: u64, horizon: u64) -> Self {
        let n = n_paths as f64;
        let p_up = n_up as f64 / n;
        let n_censored = n_paths - n_up - n_down;
        PassageEstimate {
            schema: ESTIMATE_SCHEMA.to_string(),
            p_up,
            p_down: n_down as f64 / n,
            censored: n_censored as f64 / n,
            half_width: 1.96 * (p_up * (1.0 - p_up) / n).sqrt(),
            n_up,
            n_down,
            n_censored,
            n_paths,
            horizon,
        }
    }
}

/// Direction of the first mid-price move of one simulated path, or `None`
/// if there is none within `horizon` events.
pub fn simulate_first_move(
    model: &XYModel,
    history: &LagBuffer,
    state: &BookState,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Option<i8>, ModelError> {
    let mut hist = history.clone();
    let mut state = *state;
    let mut scratch = Vec::new();
    for _ in 0..horizon {
        let ev = model.simulate_next_with(&hist, &state, rng, &mut scratch)?;
        let tr = reconstruct::step(&state, &ev)?;
        if tr.kind.is_price_move() {
            return Ok(Some(tr.kind.direction()));
        }
        hist.push(ev.as_f64());
        state = tr.state_after;
    }
    Ok(None)
}

/// Generator for path `i` of a run seeded with `seed`.
pub fn path_rng(seed: u64, i: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    rng
}

/// Monte Carlo estimate of the next-move probabilities from `state`.
///
/// Path `i` draws from [`path_rng`]`(seed, i)`, so the result does not
/// depend on the number of worker threads, and two calls with the same seed
/// share their random numbers (common random numbers).
pub fn estimate_p(
    state: &BookState,
    model: &XYModel,
    history: &LagBuffer,
    n_paths: u64,
    horizon: u64,
    seed: u64,
) -> Result<PassageEstimate, PassageError> {
    if n_paths == 0 || horizon == 0 {
        return Err(PassageError::InvalidParams("n_paths and horizon must be positive".into()));
    }
    state.validate()?;
    model.validate()?;
    if history.len() < model.lag_order() {
        return Err(ModelError::InsufficientHistory {
            need: model.lag_order(),
            got: history.len(),
        }
        .into());
    }
    let (up, down) = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            simulate_first_move(model, history, state, horizon as usize, &mut rng).map(|d| match d {
                Some(1) => (1u64, 0u64),
                Some(_) => (0, 1),
                None => (0, 0),
            })
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    Ok(PassageEstimate::from_counts(up, down, n_paths, horizon))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MCParams {
    pub n_paths: u64,
    pub horizon: u64,
    pub seed: u64,
    /// Largest ask queue the bracket search may reach.
    pub max_queue: i64,
}

/// Smallest ask queue `q_a >= 1` with `p_up <= p_down` at bid queue `q_b`.
///
/// Every evaluation uses the same seed, so the estimated `p_up` is
/// non-increasing in `q_a` path by path and bisection is exact for the
/// coupled estimator. The upper bound starts at `max(2 q_b, 2)` and doubles
/// until it brackets the crossing or exceeds `max_queue`.
pub fn critical_queue(
    state: &BookState,
    model: &XYModel,
    history: &LagBuffer,
    q_b: i64,
    mc: &MCParams,
) -> Result<i64, PassageError> {
    if q_b <= 0 {
        return Err(PassageError::InvalidParams("q_b must be positive".into()));
    }
    let down_wins = |q_a: i64| -> Result<bool, PassageError> {
        let s = BookState { q_b, q_a, ..*state };
        let e = estimate_p(&s, model, history, mc.n_paths, mc.horizon, mc.seed)?;
        Ok(e.n_up <= e.n_down)
    };
    if down_wins(1)? {
        return Ok(1);
    }
    let mut lo = 1;
    let mut hi = (2 * q_b).max(2).min(mc.max_queue.max(2));
    loop {
        if down_wins(hi)? {
            break;
        }
        if hi >= mc.max_queue {
            return Err(PassageError::BracketFailure { bound: hi });
        }
        lo = hi;
        hi = (hi * 2).min(mc.max_queue);
    }
    // invariant: up wins at lo, down wins at hi
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if down_wins(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::YLink;

    fn ev(x: i64, y: i64) -> XYEvent {
        XYEvent::new(x, y).unwrap()
    }

    #[test]
    fn alternating_flows() {
        let flows: Vec<FlowDelta> = (1..=8)
            .map(|l| if l % 2 == 1 { FlowDelta::ask(-1) } else { FlowDelta::bid(-1) })
            .collect();
        let s = first_passage(2, 3, &flows);
        assert_eq!((s.l_b, s.l_a, s.tau()), (Some(4), Some(5), Some(4)));
        assert_eq!(s.outcome(), Some(Outcome::BidDepleted));
    }

    #[test]
    fn immediate_and_never() {
        let s = first_passage(5, 1, &[FlowDelta::ask(-1)]);
        assert_eq!((s.l_a, s.tau()), (Some(1), Some(1)));
        let s = first_passage(1, 1, &[FlowDelta::ask(3), FlowDelta::bid(2)]);
        assert_eq!((s.l_b, s.l_a, s.tau()), (None, None, None));
    }

    #[test]
    fn inside_orders_only_at_wide_spread() {
        let path = [ev(2, 3), ev(-4, -4)];
        let tight = BookState::new(100, 101, 5, 1).unwrap();
        assert_eq!(stage_from(&tight, &path, 0).tilde_l_b, None);
        let wide = BookState::new(100, 103, 5, 1).unwrap();
        let s = stage_from(&wide, &path, 0);
        assert_eq!((s.tilde_l_b, s.outcome()), (Some(2), Some(Outcome::BidInside)));
    }

    #[test]
    fn widen_up_reinit() {
        let state = BookState::new(100, 101, 5, 2).unwrap();
        let path = [ev(-1, -6), ev(-1, 1), ev(-3, 4)];
        let idx = stopping_indices(&state, &path).unwrap();
        assert_eq!(idx.tau0(), Some(3));
        let after = apply_reinit(&state, &idx.first, &path).unwrap();
        assert_eq!(after, BookState::new(100, 102, 6, 4).unwrap());
        let replay = reconstruct::reconstruct_stream(&state, &path).unwrap();
        assert_eq!(replay[2].state_after, after);
    }

    #[test]
    fn narrow_bid_at_second_stage() {
        // ask depleted first (spread 1 -> 2), then a bid of size 6 inside
        let state = BookState::new(100, 101, 3, 1).unwrap();
        let path = [ev(-1, 5), ev(-6, -6)];
        let idx = stopping_indices(&state, &path).unwrap();
        assert_eq!(idx.tau0(), Some(1));
        let second = idx.second.unwrap();
        assert_eq!((idx.tau1(), second.outcome()), (Some(2), Some(Outcome::BidInside)));
        let s1 = apply_reinit(&state, &idx.first, &path).unwrap();
        let s2 = apply_reinit(&s1, &second, &path).unwrap();
        assert_eq!(s2, BookState::new(101, 102, 6, 5).unwrap());
    }

    #[test]
    fn reinit_out_of_path() {
        let state = BookState::new(100, 101, 3, 3).unwrap();
        let path = [ev(1, 4)];
        let s = stage_from(&state, &path, 0);
        assert!(matches!(
            apply_reinit(&state, &s, &path),
            Err(PassageError::IndexOutOfPath { index: None, len: 1 })
        ));
    }

    #[test]
    fn forced_ask_depletion() {
        let model = XYModel::iid(&[-1], 1.0, YLink::fixed(3, 0.0));
        let state = BookState::new(100, 101, 4, 1).unwrap();
        let e = estimate_p(&state, &model, &LagBuffer::filled(1, [0.0, 1.0]), 200, 10, 1).unwrap();
        assert_eq!((e.n_up, e.n_down), (200, 0));
        assert_eq!(e.p_up, 1.0);
    }

    #[test]
    fn censoring_is_reported() {
        let model = XYModel::iid(&[1], 1.0, YLink::fixed(3, 0.0));
        let state = BookState::new(100, 101, 4, 1).unwrap();
        let e = estimate_p(&state, &model, &LagBuffer::filled(1, [0.0, 1.0]), 50, 5, 1).unwrap();
        assert_eq!((e.n_up, e.n_down, e.n_censored), (0, 0, 50));
    }
}
