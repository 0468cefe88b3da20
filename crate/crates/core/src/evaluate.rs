//! Walk-forward predictability metrics.
//!
//! The first `floor(split * N)` events form the training split and the rest
//! the test split. Nothing from the test split is used before it happens.
//!
//! * Direction: from the book right after each mid-price move (or a segment
//!   start), the model predicts whether the next move is up. The forecast is
//!   scored at the next price-moving event in the test split and compared
//!   with the larger-queue rule (up iff `Q^a < Q^b`) and a fair coin.
//! * Flow: the one-step conditional mean of `X` against the training mean
//!   of `X`, scored by mean squared error on every test event.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::BookState;
use crate::models::{mean_x, LagBuffer, XYModel};
use crate::passage::{self, PassageError};
use crate::reconstruct::{self, ReconstructError};
use crate::series::XySeries;

pub const METRICS_SCHEMA: &str = "xybook-metrics/1";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("split leaves {train} training and {test} test events")]
    SplitTooSmall { train: usize, test: usize },
    #[error(transparent)]
    Passage(#[from] PassageError),
    #[error(transparent)]
    Replay(#[from] ReconstructError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Fraction of events in the training split.
    pub split: f64,
    pub n_paths: u64,
    pub horizon: u64,
    pub seed: u64,
    /// Permute the realized directions of the test moves with this seed.
    pub shuffle_labels: Option<u64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            split: 0.5,
            n_paths: 200,
            horizon: 1000,
            seed: 0,
            shuffle_labels: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionMetrics {
    pub n_moves: usize,
    /// Test moves whose forecast origin lacked a full lag history.
    pub skipped: usize,
    pub hit_rate: f64,
    pub larger_queue_hit_rate: f64,
    pub coin_flip_hit_rate: f64,
    /// Standard error of a hit rate under a fair coin, `sqrt(0.25 / n)`.
    pub sigma: f64,
    pub lift_vs_coin_flip: f64,
    pub lift_vs_larger_queue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowMetrics {
    pub n_events: usize,
    pub mse_model: f64,
    pub mse_baseline: f64,
    pub baseline_mean: f64,
    /// `(mse_baseline - mse_model) / mse_baseline`.
    pub mse_lift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_train: usize,
    pub n_test: usize,
    pub direction: Option<DirectionMetrics>,
    pub flow: Option<FlowMetrics>,
}

pub fn train_len(n: usize, split: f64) -> usize {
    (split.clamp(0.0, 1.0) * n as f64).floor() as usize
}

struct Forecast {
    origin: BookState,
    history: LagBuffer,
    seed: u64,
    realized: i8,
}

pub fn evaluate(series: &XySeries, model: &XYModel, opts: &EvalOptions) -> Result<Metrics, EvalError> {
    let n = series.len();
    let n_train = train_len(n, opts.split);
    if n_train == 0 || n_train >= n {
        return Err(EvalError::SplitTooSmall {
            train: n_train,
            test: n - n_train,
        });
    }
    let p = model.lag_order();
    let baseline_mean = mean_x(&series.truncated(n_train));

    let mut forecasts = Vec::new();
    let mut skipped = 0;
    let (mut se_model, mut se_base, mut n_flow) = (0.0, 0.0, 0usize);
    let mut j = 0usize;
    for seg in &series.segments {
        let mut state = seg.start;
        let mut hist = LagBuffer::new(p);
        let mut origin = (state, hist.clone());
        for ev in &seg.events {
            let tr = reconstruct::step(&state, ev)?;
            if j >= n_train {
                if hist.is_full() {
                    let pred = model.predict_mean(&hist).map_err(PassageError::from)?[0];
                    let x = ev.x() as f64;
                    se_model += (x - pred).powi(2);
                    se_base += (x - baseline_mean).powi(2);
                    n_flow += 1;
                }
                if tr.kind.is_price_move() {
                    if origin.1.is_full() {
                        forecasts.push(Forecast {
                            origin: origin.0,
                            history: origin.1.clone(),
                            seed: move_seed(opts.seed, forecasts.len() as u64 + skipped as u64),
                            realized: tr.kind.direction(),
                        });
                    } else {
                        skipped += 1;
                    }
                }
            }
            hist.push(ev.as_f64());
            state = tr.state_after;
            if tr.kind.is_price_move() {
                origin = (state, hist.clone());
            }
            j += 1;
        }
    }

    let flow = (n_flow > 0).then(|| {
        let mse_model = se_model / n_flow as f64;
        let mse_baseline = se_base / n_flow as f64;
        FlowMetrics {
            n_events: n_flow,
            mse_model,
            mse_baseline,
            baseline_mean,
            mse_lift: if mse_baseline > 0.0 {
                (mse_baseline - mse_model) / mse_baseline
            } else {
                0.0
            },
        }
    });

    let direction = if forecasts.is_empty() {
        None
    } else {
        let mut labels: Vec<i8> = forecasts.iter().map(|f| f.realized).collect();
        if let Some(s) = opts.shuffle_labels {
            labels.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
        }
        let (mut hits, mut lq_hits) = (0usize, 0usize);
        for (f, &label) in forecasts.iter().zip(&labels) {
            let e = passage::estimate_p(&f.origin, model, &f.history, opts.n_paths, opts.horizon, f.seed)?;
            let predicted = if e.n_up > e.n_down { 1 } else { -1 };
            let larger_queue = if f.origin.q_a < f.origin.q_b { 1 } else { -1 };
            hits += usize::from(predicted == label);
            lq_hits += usize::from(larger_queue == label);
        }
        let m = forecasts.len() as f64;
        let hit_rate = hits as f64 / m;
        let larger_queue_hit_rate = lq_hits as f64 / m;
        Some(DirectionMetrics {
            n_moves: forecasts.len(),
            skipped,
            hit_rate,
            larger_queue_hit_rate,
            coin_flip_hit_rate: 0.5,
            sigma: (0.25 / m).sqrt(),
            lift_vs_coin_flip: hit_rate - 0.5,
            lift_vs_larger_queue: hit_rate - larger_queue_hit_rate,
        })
    };

    Ok(Metrics {
        n_train,
        n_test: n - n_train,
        direction,
        flow,
    })
}

/// Seed of the Monte Carlo run for forecast `k`.
fn move_seed(seed: u64, k: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng.next_u64()
}
