//! Generators for the `(X, Y)` process.
//!
//! The sign of `Y` (the side) comes from a logistic model on lagged basis
//! features. `X` comes from a regression that is linear in its coefficients
//! but may use nonlinear basis functions of the lagged pairs:
//!
//! ```text
//! Z_t = c + sum_{i=1..p} A_i phi(Z_{t-i}) + eps_t,   Z = (X, Y)
//! ```
//!
//! `X` is the first coordinate, rounded to a nonzero integer. `Y` is then
//! fixed by the book: it is the updated queue when no price moves, a draw
//! from the fitted re-initialisation law when the touched queue is
//! depleted, and `X` itself when the order lands inside the spread (chosen
//! with a fitted per-side probability). Generated events are therefore
//! always consistent with [`crate::reconstruct::step`].
//!
//! Linear vector autoregression is the identity-basis special case. The
//! IID bootstrap baseline has zero lag coefficients and resamples centered
//! observations.

mod basis;
mod logistic;
mod stability;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use basis::{BasisFn, BasisSpec, LagBuffer};
pub use logistic::SideModel;
pub use stability::{companion, diagnose, linearised_blocks, spectral_radius, StabilityReport, Verdict};

use crate::book::{BookState, Side, XYEvent};
use crate::calib::{self, CalibError, DesignMoments, DesignSegment, SolveMethod};
use crate::reconstruct::{self, ReconstructError, Transition, TransitionKind};
use crate::series::XySeries;

pub const MODEL_SCHEMA: &str = "xybook-model/1";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
    #[error("history holds {got} lags, model needs {need}")]
    InsufficientHistory { need: usize, got: usize },
    #[error("not enough data to fit: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Calib(#[from] CalibError),
    #[error("training data does not replay: {0}")]
    Replay(#[from] ReconstructError),
    #[error("model is not fitted or malformed: {0}")]
    NotFitted(String),
}

/// Row-major `rows x cols` block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffBlock {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl CoeffBlock {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CoeffBlock {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        CoeffBlock {
            rows: m.nrows(),
            cols: m.ncols(),
            data: (0..m.nrows()).flat_map(|i| m.row(i).iter().copied().collect::<Vec<_>>()).collect(),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResidualKind {
    Empirical,
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ResidualLaw {
    /// `mean + L n`, `n` standard normal, `L` lower triangular.
    Gaussian { mean: [f64; 2], chol: [[f64; 2]; 2] },
    /// Uniform resampling of in-sample residuals.
    Empirical { samples: Vec<[f64; 2]> },
}

impl ResidualLaw {
    pub fn zero() -> Self {
        ResidualLaw::Gaussian {
            mean: [0.0; 2],
            chol: [[0.0; 2]; 2],
        }
    }

    pub fn gaussian_from(residuals: &[[f64; 2]]) -> Self {
        let n = residuals.len().max(1) as f64;
        let mean = [
            residuals.iter().map(|r| r[0]).sum::<f64>() / n,
            residuals.iter().map(|r| r[1]).sum::<f64>() / n,
        ];
        let mut cov = [[0.0; 2]; 2];
        for r in residuals {
            let d = [r[0] - mean[0], r[1] - mean[1]];
            for i in 0..2 {
                for j in 0..2 {
                    cov[i][j] += d[i] * d[j] / n;
                }
            }
        }
        let l00 = cov[0][0].max(0.0).sqrt();
        let l10 = if l00 > 0.0 { cov[1][0] / l00 } else { 0.0 };
        let l11 = (cov[1][1] - l10 * l10).max(0.0).sqrt();
        ResidualLaw::Gaussian {
            mean,
            chol: [[l00, 0.0], [l10, l11]],
        }
    }

    /// Always consumes the same number of draws for a given law.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        match self {
            ResidualLaw::Gaussian { mean, chol } => {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                [mean[0] + chol[0][0] * a, mean[1] + chol[1][0] * a + chol[1][1] * b]
            }
            ResidualLaw::Empirical { samples } => samples[rng.random_range(0..samples.len())],
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            ResidualLaw::Gaussian { mean, chol } => mean.iter().chain(chol.iter().flatten()).all(|v| v.is_finite()),
            ResidualLaw::Empirical { samples } => !samples.is_empty(),
        }
    }
}

/// How `Y` follows from the book state and the generated `X`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YLink {
    /// Queue sizes found at the new ask level after the ask was depleted.
    pub reinit_ask: Vec<i64>,
    /// Queue sizes found at the new bid level after the bid was depleted.
    pub reinit_bid: Vec<i64>,
    /// Probability that an ask event with `X > 0` at a spread of two ticks
    /// or more is placed inside the spread.
    pub p_inside_ask: f64,
    /// Same for bid events with `X < 0`.
    pub p_inside_bid: f64,
}

impl YLink {
    pub fn fixed(reinit: i64, p_inside: f64) -> Self {
        YLink {
            reinit_ask: vec![reinit],
            reinit_bid: vec![reinit],
            p_inside_ask: p_inside,
            p_inside_bid: p_inside,
        }
    }

    /// Tabulates the link from a replay of the data.
    pub fn fit(series: &XySeries) -> Result<Self, ModelError> {
        let mut reinit_ask = Vec::new();
        let mut reinit_bid = Vec::new();
        let (mut inside_a, mut cand_a, mut inside_b, mut cand_b) = (0u64, 0u64, 0u64, 0u64);
        for seg in &series.segments {
            let mut state = seg.start;
            for ev in &seg.events {
                let tr = reconstruct::step(&state, ev)?;
                if state.spread_ticks() >= 2 {
                    match ev.side() {
                        Side::Ask if ev.x() > 0 => cand_a += 1,
                        Side::Bid if ev.x() < 0 => cand_b += 1,
                        _ => {}
                    }
                }
                match tr.kind {
                    TransitionKind::WidenUp => reinit_ask.push(ev.y()),
                    TransitionKind::WidenDown => reinit_bid.push(-ev.y()),
                    TransitionKind::NarrowAsk => inside_a += 1,
                    TransitionKind::NarrowBid => inside_b += 1,
                    TransitionKind::NoMove => {}
                }
                state = tr.state_after;
            }
        }
        // a side never depleted in the data borrows the other side's table
        match (reinit_ask.is_empty(), reinit_bid.is_empty()) {
            (true, true) => {
                reinit_ask.push(1);
                reinit_bid.push(1);
            }
            (true, false) => reinit_ask = reinit_bid.clone(),
            (false, true) => reinit_bid = reinit_ask.clone(),
            _ => {}
        }
        reinit_ask.sort_unstable();
        reinit_bid.sort_unstable();
        let ratio = |k: u64, n: u64| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        Ok(YLink {
            reinit_ask,
            reinit_bid,
            p_inside_ask: ratio(inside_a, cand_a),
            p_inside_bid: ratio(inside_b, cand_b),
        })
    }

    fn reinit(&self, side: Side, u: f64) -> i64 {
        let table = match side {
            Side::Ask => &self.reinit_ask,
            Side::Bid => &self.reinit_bid,
        };
        let i = ((u * table.len() as f64) as usize).min(table.len() - 1);
        table[i]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub family: String,
    pub method: SolveMethod,
    pub ridge_requested: f64,
    pub ridge_used: f64,
    pub n_obs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XYModel {
    pub schema: String,
    pub basis: BasisSpec,
    pub intercept: [f64; 2],
    /// `A_1 .. A_p`, each `2 x (2 |basis|)`.
    pub coeffs: Vec<CoeffBlock>,
    pub residual: ResidualLaw,
    pub side: SideModel,
    pub y_link: YLink,
    pub stability: StabilityReport,
    pub fit: Option<FitInfo>,
}

#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    pub ridge: f64,
    pub method: SolveMethod,
    pub residual: ResidualKind,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            ridge: 0.0,
            method: SolveMethod::Levinson,
            residual: ResidualKind::Empirical,
        }
    }
}

/// Coefficients of the regression part alone, fitted on real-valued pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Regression {
    pub intercept: [f64; 2],
    pub coeffs: Vec<CoeffBlock>,
    pub residuals: Vec<[f64; 2]>,
    pub ridge_used: f64,
    pub n_obs: usize,
}

fn predict_with(basis: &BasisSpec, intercept: [f64; 2], coeffs: &[CoeffBlock], features: &[f64]) -> [f64; 2] {
    let d = basis.width();
    let mut out = intercept;
    for (i, block) in coeffs.iter().enumerate() {
        let f = &features[i * d..(i + 1) * d];
        for (r, o) in out.iter_mut().enumerate() {
            *o += block.row(r).iter().zip(f).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    out
}

/// Least-squares fit of `Z_t` on `phi(Z_{t-1}) .. phi(Z_{t-p})` through the
/// block-Toeplitz moment equations. Lags never cross segment boundaries.
pub fn fit_regression(
    segments: &[Vec<[f64; 2]>],
    basis: &BasisSpec,
    ridge: f64,
    method: SolveMethod,
) -> Result<Regression, ModelError> {
    let p = basis.lag_order;
    let feats: Vec<Vec<DVector<f64>>> = segments
        .iter()
        .map(|s| s.iter().map(|z| DVector::from_vec(basis.features(*z))).collect())
        .collect();
    let targets: Vec<Vec<DVector<f64>>> = segments
        .iter()
        .map(|s| s.iter().map(|z| DVector::from_column_slice(z)).collect())
        .collect();
    let design_segments: Vec<DesignSegment<'_>> = feats
        .iter()
        .zip(&targets)
        .filter(|(f, _)| !f.is_empty())
        .map(|(f, z)| DesignSegment { features: f, targets: z })
        .collect();
    let design = DesignMoments::from_segments(&design_segments, p)?;
    let sol = calib::solve_with_escalation(&design, method, ridge)?;
    let coeffs: Vec<CoeffBlock> = sol.blocks.iter().map(CoeffBlock::from_matrix).collect();
    let intercept = [sol.intercept[0], sol.intercept[1]];

    let mut residuals = Vec::new();
    for seg in segments {
        let mut hist = LagBuffer::new(p);
        for z in seg {
            if hist.is_full() {
                let pred = predict_with(basis, intercept, &coeffs, &basis.lagged_features(&hist));
                residuals.push([z[0] - pred[0], z[1] - pred[1]]);
            }
            hist.push(*z);
        }
    }
    if residuals.is_empty() {
        return Err(ModelError::InsufficientData(format!(
            "no segment is longer than the lag order {p}"
        )));
    }
    Ok(Regression {
        intercept,
        coeffs,
        residuals,
        ridge_used: sol.ridge,
        n_obs: design.n,
    })
}

fn as_f64_segments(series: &XySeries) -> Vec<Vec<[f64; 2]>> {
    series
        .segments
        .iter()
        .map(|s| s.events.iter().map(XYEvent::as_f64).collect())
        .collect()
}

/// Mean of `X` over a series, in event order.
pub fn mean_x(series: &XySeries) -> f64 {
    let n = series.len();
    if n == 0 {
        return 0.0;
    }
    series.events().map(|e| e.x() as f64).sum::<f64>() / n as f64
}

fn round_nonzero(v: f64) -> i64 {
    let r = v.round();
    if r == 0.0 {
        if v < 0.0 {
            -1
        } else {
            1
        }
    } else {
        r as i64
    }
}

impl XYModel {
    pub fn lag_order(&self) -> usize {
        self.basis.lag_order
    }

    /// Semi-linear model fitted with [`FitOptions::default`] and the given ridge.
    pub fn fit(series: &XySeries, basis: BasisSpec, ridge: f64) -> Result<Self, ModelError> {
        Self::fit_with(series, basis, &FitOptions { ridge, ..FitOptions::default() })
    }

    pub fn fit_with(series: &XySeries, basis: BasisSpec, opts: &FitOptions) -> Result<Self, ModelError> {
        let reg = fit_regression(&as_f64_segments(series), &basis, opts.ridge, opts.method)?;

        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for seg in &series.segments {
            let mut hist = LagBuffer::new(basis.lag_order);
            for ev in &seg.events {
                if hist.is_full() {
                    rows.push(basis.lagged_features(&hist));
                    labels.push(ev.y() > 0);
                }
                hist.push(ev.as_f64());
            }
        }
        let residual = match opts.residual {
            ResidualKind::Empirical => ResidualLaw::Empirical { samples: reg.residuals.clone() },
            ResidualKind::Gaussian => ResidualLaw::gaussian_from(&reg.residuals),
        };
        let stability = diagnose(&basis, &reg.coeffs);
        Ok(XYModel {
            schema: MODEL_SCHEMA.to_string(),
            intercept: reg.intercept,
            coeffs: reg.coeffs,
            residual,
            side: SideModel::fit(&rows, &labels),
            y_link: YLink::fit(series)?,
            stability,
            fit: Some(FitInfo {
                family: "semi-linear".into(),
                method: opts.method,
                ridge_requested: opts.ridge,
                ridge_used: reg.ridge_used,
                n_obs: reg.n_obs,
            }),
            basis,
        })
    }

    /// IID bootstrap baseline: no lag dependence, resampled centered pairs.
    pub fn fit_bootstrap(series: &XySeries) -> Result<Self, ModelError> {
        let n = series.len();
        if n == 0 {
            return Err(ModelError::InsufficientData("empty series".into()));
        }
        let mx = mean_x(series);
        let my = series.events().map(|e| e.y() as f64).sum::<f64>() / n as f64;
        let samples: Vec<[f64; 2]> = series.events().map(|e| [e.x() as f64 - mx, e.y() as f64 - my]).collect();
        let p_ask = series.events().filter(|e| e.y() > 0).count() as f64 / n as f64;
        let basis = BasisSpec::identity(1);
        let coeffs = vec![CoeffBlock::zeros(2, basis.width())];
        let stability = diagnose(&basis, &coeffs);
        Ok(XYModel {
            schema: MODEL_SCHEMA.to_string(),
            intercept: [mx, my],
            side: SideModel::constant(p_ask, basis.width()),
            coeffs,
            residual: ResidualLaw::Empirical { samples },
            y_link: YLink::fit(series)?,
            stability,
            fit: Some(FitInfo {
                family: "bootstrap".into(),
                method: SolveMethod::Levinson,
                ridge_requested: 0.0,
                ridge_used: 0.0,
                n_obs: n,
            }),
            basis,
        })
    }

    /// IID sizes drawn uniformly from `sizes`, side ask with probability `p_ask`.
    pub fn iid(sizes: &[i64], p_ask: f64, y_link: YLink) -> Self {
        let basis = BasisSpec::identity(1);
        let coeffs = vec![CoeffBlock::zeros(2, basis.width())];
        let stability = diagnose(&basis, &coeffs);
        XYModel {
            schema: MODEL_SCHEMA.to_string(),
            intercept: [0.0; 2],
            side: SideModel::constant(p_ask, basis.width()),
            coeffs,
            residual: ResidualLaw::Empirical {
                samples: sizes.iter().map(|&s| [s as f64, 0.0]).collect(),
            },
            y_link,
            stability,
            fit: None,
            basis,
        }
    }

    /// Hand-specified regression model; coefficient blocks are row-major `2 x (2|basis|)`.
    pub fn from_parts(
        basis: BasisSpec,
        intercept: [f64; 2],
        coeffs: Vec<CoeffBlock>,
        residual: ResidualLaw,
        side: SideModel,
        y_link: YLink,
    ) -> Result<Self, ModelError> {
        let stability = diagnose(&basis, &coeffs);
        let model = XYModel {
            schema: MODEL_SCHEMA.to_string(),
            basis,
            intercept,
            coeffs,
            residual,
            side,
            y_link,
            stability,
            fit: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::NotFitted(m.to_string()));
        let d = self.basis.width();
        if self.schema != MODEL_SCHEMA {
            return bad("unknown schema tag");
        }
        if self.basis.lag_order == 0 || self.coeffs.len() != self.basis.lag_order {
            return bad("coefficient blocks do not match the lag order");
        }
        if self
            .coeffs
            .iter()
            .any(|b| b.rows != 2 || b.cols != d || b.data.len() != 2 * d)
        {
            return bad("coefficient block dimensions do not match the basis");
        }
        if self.side.weights.len() != d * self.basis.lag_order {
            return bad("side model width does not match the basis");
        }
        if !self.residual.is_valid() {
            return bad("residual law is empty or not finite");
        }
        if self.y_link.reinit_ask.is_empty() || self.y_link.reinit_bid.is_empty() {
            return bad("empty re-initialisation table");
        }
        if self.y_link.reinit_ask.iter().chain(&self.y_link.reinit_bid).any(|&q| q <= 0) {
            return bad("re-initialisation sizes must be positive");
        }
        Ok(())
    }

    pub fn diagnose(&self) -> StabilityReport {
        diagnose(&self.basis, &self.coeffs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let model: XYModel =
            serde_json::from_str(text).map_err(|e| ModelError::NotFitted(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    fn check_history(&self, history: &LagBuffer) -> Result<(), ModelError> {
        if history.len() < self.lag_order() {
            return Err(ModelError::InsufficientHistory {
                need: self.lag_order(),
                got: history.len(),
            });
        }
        Ok(())
    }

    /// Conditional mean of `(X, Y)` from the regression part.
    pub fn predict_mean(&self, history: &LagBuffer) -> Result<[f64; 2], ModelError> {
        self.check_history(history)?;
        Ok(predict_with(&self.basis, self.intercept, &self.coeffs, &self.basis.lagged_features(history)))
    }

    /// One step of the real-valued regression recursion with a given innovation.
    pub fn iterate(&self, history: &LagBuffer, eps: [f64; 2]) -> Result<[f64; 2], ModelError> {
        let m = self.predict_mean(history)?;
        Ok([m[0] + eps[0], m[1] + eps[1]])
    }

    /// Draws the next event. Every call consumes the same random draws
    /// regardless of the book state, so paths started from different queue
    /// sizes share their randomness.
    pub fn simulate_next<R: Rng + ?Sized>(
        &self,
        history: &LagBuffer,
        state: &BookState,
        rng: &mut R,
    ) -> Result<XYEvent, ModelError> {
        self.simulate_next_with(history, state, rng, &mut Vec::new())
    }

    /// As [`XYModel::simulate_next`], with a reusable feature buffer.
    pub fn simulate_next_with<R: Rng + ?Sized>(
        &self,
        history: &LagBuffer,
        state: &BookState,
        rng: &mut R,
        features: &mut Vec<f64>,
    ) -> Result<XYEvent, ModelError> {
        self.check_history(history)?;
        self.basis.lagged_features_into(history, features);
        let features = &features[..];
        let u_side: f64 = rng.random();
        let eps = self.residual.draw(rng);
        let u_inside: f64 = rng.random();
        let u_reinit: f64 = rng.random();

        let side = if u_side < self.side.prob_ask(features) { Side::Ask } else { Side::Bid };
        let mean = predict_with(&self.basis, self.intercept, &self.coeffs, features);
        let x = round_nonzero(mean[0] + eps[0]);
        let wide = state.spread_ticks() >= 2;
        let y = match side {
            Side::Ask => {
                if state.q_a + x <= 0 {
                    self.y_link.reinit(Side::Ask, u_reinit)
                } else if wide && x > 0 && u_inside < self.y_link.p_inside_ask {
                    x
                } else {
                    state.q_a + x
                }
            }
            Side::Bid => {
                if state.q_b - x <= 0 {
                    -self.y_link.reinit(Side::Bid, u_reinit)
                } else if wide && x < 0 && u_inside < self.y_link.p_inside_bid {
                    x
                } else {
                    -(state.q_b - x)
                }
            }
        };
        Ok(XYEvent::new(x, y).expect("generated Y is nonzero"))
    }
}

/// Simulates `n` events, advancing the book and the lag buffer.
pub fn simulate_path<R: Rng + ?Sized>(
    model: &XYModel,
    start: &BookState,
    history: &mut LagBuffer,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(XYEvent, Transition)>, ModelError> {
    let mut state = *start;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let ev = model.simulate_next(history, &state, rng)?;
        let tr = reconstruct::step(&state, &ev)?;
        history.push(ev.as_f64());
        state = tr.state_after;
        out.push((ev, tr));
    }
    Ok(out)
}
