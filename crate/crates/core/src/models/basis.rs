use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::book::XYEvent;

/// Scalar map applied coordinatewise to a lagged `(X, Y)` pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BasisFn {
    Identity,
    Sign,
    Abs,
    /// `clamp(v, -c, c)`
    Clip(f64),
    /// `tanh(s v)`
    TanhScale(f64),
}

impl BasisFn {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            BasisFn::Identity => v,
            BasisFn::Sign => {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            BasisFn::Abs => v.abs(),
            BasisFn::Clip(c) => v.clamp(-c, c),
            BasisFn::TanhScale(s) => (s * v).tanh(),
        }
    }

    /// Global Lipschitz constant; `None` for `sign`.
    pub fn lipschitz(self) -> Option<f64> {
        match self {
            BasisFn::Identity | BasisFn::Abs | BasisFn::Clip(_) => Some(1.0),
            BasisFn::TanhScale(s) => Some(s),
            BasisFn::Sign => None,
        }
    }

    /// Derivative at the origin used for the linearised system
    /// (zero for `abs` and `sign`, which have no derivative there).
    pub fn slope_at_zero(self) -> f64 {
        match self {
            BasisFn::Identity | BasisFn::Clip(_) => 1.0,
            BasisFn::TanhScale(s) => s,
            BasisFn::Abs | BasisFn::Sign => 0.0,
        }
    }
}

impl fmt::Display for BasisFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisFn::Identity => f.write_str("identity"),
            BasisFn::Sign => f.write_str("sign"),
            BasisFn::Abs => f.write_str("abs"),
            BasisFn::Clip(c) => write!(f, "clip:{c}"),
            BasisFn::TanhScale(s) => write!(f, "tanh:{s}"),
        }
    }
}

impl FromStr for BasisFn {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::InvalidBasis(s.to_string());
        let (name, arg) = match s.trim().split_once(':') {
            Some((n, a)) => (n, Some(a.parse::<f64>().map_err(|_| bad())?)),
            None => (s.trim(), None),
        };
        let f = match (name, arg) {
            ("identity", None) => BasisFn::Identity,
            ("sign", None) => BasisFn::Sign,
            ("abs", None) => BasisFn::Abs,
            ("clip", Some(c)) if c > 0.0 => BasisFn::Clip(c),
            ("tanh", Some(s)) if s > 0.0 => BasisFn::TanhScale(s),
            _ => return Err(bad()),
        };
        Ok(f)
    }
}

impl TryFrom<String> for BasisFn {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<BasisFn> for String {
    fn from(f: BasisFn) -> Self {
        f.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub functions: Vec<BasisFn>,
    pub lag_order: usize,
}

impl BasisSpec {
    pub fn new(functions: Vec<BasisFn>, lag_order: usize) -> Result<Self, ModelError> {
        if functions.is_empty() {
            return Err(ModelError::InvalidBasis("empty basis".into()));
        }
        if lag_order == 0 {
            return Err(ModelError::InvalidBasis("lag order must be at least 1".into()));
        }
        Ok(BasisSpec { functions, lag_order })
    }

    pub fn identity(lag_order: usize) -> Self {
        BasisSpec {
            functions: vec![BasisFn::Identity],
            lag_order,
        }
    }

    /// Comma-separated names, e.g. `identity,abs,tanh:0.1`.
    pub fn parse(names: &str, lag_order: usize) -> Result<Self, ModelError> {
        let functions = names
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()?;
        BasisSpec::new(functions, lag_order)
    }

    /// Features per lag: `f(x), f(y)` for each basis function in order.
    pub fn width(&self) -> usize {
        2 * self.functions.len()
    }

    pub fn features_into(&self, z: [f64; 2], out: &mut [f64]) {
        for (k, f) in self.functions.iter().enumerate() {
            out[2 * k] = f.apply(z[0]);
            out[2 * k + 1] = f.apply(z[1]);
        }
    }

    pub fn features(&self, z: [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.width()];
        self.features_into(z, &mut out);
        out
    }

    /// Stacked features of lags `1..=p` (most recent first).
    pub fn lagged_features(&self, history: &LagBuffer) -> Vec<f64> {
        let mut out = Vec::new();
        self.lagged_features_into(history, &mut out);
        out
    }

    /// As [`BasisSpec::lagged_features`], reusing `out`.
    pub fn lagged_features_into(&self, history: &LagBuffer, out: &mut Vec<f64>) {
        let d = self.width();
        out.resize(d * self.lag_order, 0.0);
        for i in 0..self.lag_order {
            self.features_into(history.lag(i + 1), &mut out[i * d..(i + 1) * d]);
        }
    }
}

/// The last `order` values of `(X, Y)`, most recent first.
#[derive(Clone, Debug, PartialEq)]
pub struct LagBuffer {
    order: usize,
    lags: VecDeque<[f64; 2]>,
}

impl LagBuffer {
    pub fn new(order: usize) -> Self {
        LagBuffer {
            order,
            lags: VecDeque::with_capacity(order + 1),
        }
    }

    /// A full buffer holding `z` at every lag.
    pub fn filled(order: usize, z: [f64; 2]) -> Self {
        LagBuffer {
            order,
            lags: std::iter::repeat_n(z, order).collect(),
        }
    }

    pub fn from_events<'a, I: IntoIterator<Item = &'a XYEvent>>(order: usize, events: I) -> Self {
        let mut buf = LagBuffer::new(order);
        for ev in events {
            buf.push(ev.as_f64());
        }
        buf
    }

    pub fn push(&mut self, z: [f64; 2]) {
        self.lags.push_front(z);
        self.lags.truncate(self.order);
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.lags.len() == self.order
    }

    /// Value at lag `i >= 1`.
    pub fn lag(&self, i: usize) -> [f64; 2] {
        self.lags[i - 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64; 2]> {
        self.lags.iter()
    }

    /// Largest Euclidean distance between matching lags.
    pub fn distance(&self, other: &LagBuffer) -> f64 {
        self.lags
            .iter()
            .zip(&other.lags)
            .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
            .fold(0.0, f64::max)
    }
}
