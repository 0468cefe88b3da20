//! Random event logs that satisfy the one-tick rule, with optional planted
//! two-tick jumps. Used by tests, the acceptance suite and demos.

use std::collections::BTreeSet;

use rand::Rng;

use crate::book::{BookEvent, Side};

#[derive(Clone, Debug)]
pub struct SynthConfig {
    /// Number of events (the log has one more row than this).
    pub events: usize,
    pub p_deplete: f64,
    pub p_inside: f64,
    pub max_qty: i64,
    pub max_spread: i64,
    /// Event numbers (1-based) at which the ask jumps two ticks.
    pub jumps: BTreeSet<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            events: 1000,
            p_deplete: 0.1,
            p_inside: 0.3,
            max_qty: 20,
            max_spread: 6,
            jumps: BTreeSet::new(),
        }
    }
}

pub fn random_log<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Vec<BookEvent> {
    let mut ev = BookEvent {
        index: 0,
        side: Side::Bid,
        best_bid: 10_000,
        best_ask: 10_001,
        bid_qty: rng.random_range(1..=cfg.max_qty),
        ask_qty: rng.random_range(1..=cfg.max_qty),
    };
    let mut log = Vec::with_capacity(cfg.events + 1);
    log.push(ev);
    for j in 1..=cfg.events {
        ev.index = j as u64;
        let spread = ev.best_ask - ev.best_bid;
        if cfg.jumps.contains(&j) {
            ev.side = Side::Ask;
            ev.best_ask += 2;
            ev.ask_qty = rng.random_range(1..=cfg.max_qty);
            log.push(ev);
            continue;
        }
        ev.side = if rng.random_bool(0.5) { Side::Ask } else { Side::Bid };
        let u: f64 = rng.random();
        let new_qty = rng.random_range(1..=cfg.max_qty);
        let (price, qty, outward) = match ev.side {
            Side::Ask => (&mut ev.best_ask, &mut ev.ask_qty, 1),
            Side::Bid => (&mut ev.best_bid, &mut ev.bid_qty, -1),
        };
        if u < cfg.p_deplete && spread < cfg.max_spread {
            *price += outward;
            *qty = new_qty;
        } else if u < cfg.p_deplete + cfg.p_inside && spread >= 2 {
            *price -= outward;
            *qty = new_qty;
        } else {
            let mut delta = 0;
            while delta == 0 {
                delta = rng.random_range(-(*qty - 1)..=(cfg.max_qty / 2).max(1));
            }
            *qty += delta;
        }
        log.push(ev);
    }
    log
}
