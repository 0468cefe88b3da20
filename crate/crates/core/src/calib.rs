//! Lag moments and symmetric block-Toeplitz solvers.
//!
//! The system matrix `T` has `p x p` blocks of size `d x d` with
//! `T[i][j] = R_{j-i}` for `j >= i` and `T[i][j] = R_{i-j}^T` below the
//! diagonal, where `R_k = (1/n) sum_t f_t f_{t-k}^T`. This is the structure
//! of least-squares normal equations on lagged stationary features.
//!
//! [`solve_block_levinson`] runs the block Levinson recursion in
//! `O(p^2 d^3)`; [`solve_dense`] is the `O(p^3 d^3)` Cholesky reference.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    #[error("need more than {need} observations, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("block Toeplitz matrix is not positive definite (recursion step {step})")]
    NotPositiveDefinite { step: usize },
    #[error("normal equations are singular even with ridge {ridge:e}")]
    SingularDesign { ridge: f64 },
}

/// Relative pivot tolerance used to declare a Schur complement singular.
const PIVOT_TOL: f64 = 1e-12;

/// Ridge ladder tried when the caller asks for automatic escalation.
pub const RIDGE_LADDER: [f64; 5] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4];

#[derive(Clone, Debug, PartialEq)]
pub struct BlockToeplitz {
    dim: usize,
    blocks: Vec<DMatrix<f64>>,
}

impl BlockToeplitz {
    /// `blocks` are `R_0 .. R_{p-1}`; `R_0` must be symmetric.
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self, CalibError> {
        let first = blocks
            .first()
            .ok_or_else(|| CalibError::DimensionMismatch("no blocks".into()))?;
        let dim = first.nrows();
        if blocks.iter().any(|b| b.nrows() != dim || b.ncols() != dim) {
            return Err(CalibError::DimensionMismatch("blocks must all be d x d".into()));
        }
        let asym = (first - first.transpose()).amax();
        if asym > 1e-12 * first.amax().max(1.0) {
            return Err(CalibError::DimensionMismatch("R_0 is not symmetric".into()));
        }
        Ok(BlockToeplitz { dim, blocks })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn order(&self) -> usize {
        self.dim * self.blocks.len()
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// Block `(i, j)` of the full matrix.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        if j >= i {
            self.blocks[j - i].clone()
        } else {
            self.blocks[i - j].transpose()
        }
    }

    pub fn with_ridge(&self, ridge: f64) -> Self {
        let mut out = self.clone();
        if ridge != 0.0 {
            for k in 0..self.dim {
                out.blocks[0][(k, k)] += ridge;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let (d, p) = (self.dim, self.num_blocks());
        let mut t = DMatrix::zeros(d * p, d * p);
        for i in 0..p {
            for j in 0..p {
                t.view_mut((i * d, j * d), (d, d)).copy_from(&self.block(i, j));
            }
        }
        t
    }

    /// `T x` without forming `T`.
    pub fn mul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (d, p) = (self.dim, self.num_blocks());
        let mut out = DMatrix::zeros(d * p, x.ncols());
        for i in 0..p {
            let mut acc = out.rows_mut(i * d, d);
            for j in 0..p {
                let xj = x.rows(j * d, d);
                if j >= i {
                    acc.gemm(1.0, &self.blocks[j - i], &xj, 1.0);
                } else {
                    acc.gemm_tr(1.0, &self.blocks[i - j], &xj, 1.0);
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockToeplitzSystem {
    pub matrix: BlockToeplitz,
    /// `(p d) x m` right-hand side.
    pub rhs: DMatrix<f64>,
}

impl BlockToeplitzSystem {
    pub fn new(matrix: BlockToeplitz, rhs: DMatrix<f64>) -> Result<Self, CalibError> {
        if rhs.nrows() != matrix.order() {
            return Err(CalibError::DimensionMismatch(format!(
                "rhs has {} rows, matrix order is {}",
                rhs.nrows(),
                matrix.order()
            )));
        }
        Ok(BlockToeplitzSystem { matrix, rhs })
    }

    pub fn with_ridge(&self, ridge: f64) -> Self {
        BlockToeplitzSystem {
            matrix: self.matrix.with_ridge(ridge),
            rhs: self.rhs.clone(),
        }
    }

    /// `||T x - rhs|| / ||rhs||` (Frobenius).
    pub fn relative_residual(&self, x: &DMatrix<f64>) -> f64 {
        let r = self.matrix.mul(x) - &self.rhs;
        let scale = self.rhs.norm();
        if scale == 0.0 {
            r.norm()
        } else {
            r.norm() / scale
        }
    }
}

fn checked_spd_inverse(m: &DMatrix<f64>, scale: f64, step: usize) -> Result<DMatrix<f64>, CalibError> {
    let sym = (m + m.transpose()) * 0.5;
    let chol = Cholesky::new(sym).ok_or(CalibError::NotPositiveDefinite { step })?;
    let l = chol.l_dirty();
    let tiny = (0..l.nrows()).any(|k| {
        let piv = l[(k, k)];
        piv * piv <= PIVOT_TOL * scale
    });
    if tiny {
        return Err(CalibError::NotPositiveDefinite { step });
    }
    Ok(chol.inverse())
}

/// Solves `T x = rhs` by the block Levinson recursion.
///
/// Alongside the running solution the recursion carries the first and last
/// block columns of `T_n^{-1}`. The inverse of the new Schur complement is
/// the last diagonal block of the extended backward vector; failing to
/// factor it (or a relative pivot below `1e-12`) means `T` is not positive
/// definite, and the step is reported.
pub fn solve_block_levinson(sys: &BlockToeplitzSystem) -> Result<DMatrix<f64>, CalibError> {
    let t = &sys.matrix;
    let (d, p, m) = (t.dim(), t.num_blocks(), sys.rhs.ncols());
    let r = t.blocks();
    let scale = (0..d).map(|k| r[0][(k, k)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let eye = DMatrix::<f64>::identity(d, d);

    // [R_1 .. R_{p-1}] and [R_{p-1}^T .. R_1^T], so that every sum over
    // past blocks is one product with a contiguous column range
    let mut up = DMatrix::<f64>::zeros(d, (p - 1) * d);
    let mut down = DMatrix::<f64>::zeros(d, (p - 1) * d);
    for k in 1..p {
        up.columns_mut((k - 1) * d, d).copy_from(&r[k]);
        down.columns_mut((p - 1 - k) * d, d).copy_from(&r[k].transpose());
    }

    // stacked block columns: block j occupies rows j*d..(j+1)*d
    let mut fwd = DMatrix::<f64>::zeros(p * d, d);
    let mut bwd = DMatrix::<f64>::zeros(p * d, d);
    let mut new_fwd = DMatrix::<f64>::zeros(p * d, d);
    let mut new_bwd = DMatrix::<f64>::zeros(p * d, d);
    let mut x = DMatrix::<f64>::zeros(p * d, m);

    let r0_inv = checked_spd_inverse(&r[0], scale, 0)?;
    fwd.rows_mut(0, d).copy_from(&r0_inv);
    bwd.rows_mut(0, d).copy_from(&r0_inv);
    x.rows_mut(0, d).gemm(1.0, &r0_inv, &sys.rhs.rows(0, d), 0.0);

    let mut eps_f = DMatrix::<f64>::zeros(d, d);
    let mut eps_b = DMatrix::<f64>::zeros(d, d);
    let mut theta = DMatrix::<f64>::zeros(d, m);
    for n in 1..p {
        let nd = n * d;
        // eps_f = sum_j R_{n-j}^T F_j,  eps_b = sum_j R_{j+1} B_j
        let past = down.columns((p - 1 - n) * d, nd);
        eps_f.gemm(1.0, &past, &fwd.rows(0, nd), 0.0);
        eps_b.gemm(1.0, &up.columns(0, nd), &bwd.rows(0, nd), 0.0);
        let alpha = (&eye - &eps_b * &eps_f)
            .try_inverse()
            .ok_or(CalibError::NotPositiveDefinite { step: n })?;
        let delta = (&eye - &eps_f * &eps_b)
            .try_inverse()
            .ok_or(CalibError::NotPositiveDefinite { step: n })?;
        let beta = -(&eps_f * &alpha);
        let gamma = -(&eps_b * &delta);

        // F' = [F; 0] alpha + [0; B] beta,  B' = [F; 0] gamma + [0; B] delta
        new_fwd.rows_mut(nd, d).fill(0.0);
        new_bwd.rows_mut(nd, d).fill(0.0);
        new_fwd.rows_mut(0, nd).gemm(1.0, &fwd.rows(0, nd), &alpha, 0.0);
        new_fwd.rows_mut(d, nd).gemm(1.0, &bwd.rows(0, nd), &beta, 1.0);
        new_bwd.rows_mut(0, nd).gemm(1.0, &fwd.rows(0, nd), &gamma, 0.0);
        new_bwd.rows_mut(d, nd).gemm(1.0, &bwd.rows(0, nd), &delta, 1.0);

        // last diagonal block of T_{n+1}^{-1} is the inverse Schur complement
        let schur = new_bwd
            .rows(nd, d)
            .clone_owned()
            .try_inverse()
            .ok_or(CalibError::NotPositiveDefinite { step: n })?;
        checked_spd_inverse(&schur, scale, n)?;

        theta.copy_from(&sys.rhs.rows(nd, d));
        theta.gemm(-1.0, &past, &x.rows(0, nd), 1.0);
        x.rows_mut(0, nd + d).gemm(1.0, &new_bwd.rows(0, nd + d), &theta, 1.0);
        std::mem::swap(&mut fwd, &mut new_fwd);
        std::mem::swap(&mut bwd, &mut new_bwd);
    }
    Ok(x)
}

/// Dense Cholesky solve of the same system.
pub fn solve_dense(sys: &BlockToeplitzSystem) -> Result<DMatrix<f64>, CalibError> {
    let dense = sys.matrix.to_dense();
    let scale = sys.matrix.blocks()[0].diagonal().amax().max(f64::MIN_POSITIVE);
    let chol = Cholesky::new(dense).ok_or(CalibError::NotPositiveDefinite { step: 0 })?;
    let l = chol.l_dirty();
    if (0..l.nrows()).any(|k| l[(k, k)] * l[(k, k)] <= PIVOT_TOL * scale) {
        return Err(CalibError::NotPositiveDefinite { step: 0 });
    }
    Ok(chol.solve(&sys.rhs))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveMethod {
    Levinson,
    Dense,
}

pub fn solve(sys: &BlockToeplitzSystem, method: SolveMethod) -> Result<DMatrix<f64>, CalibError> {
    match method {
        SolveMethod::Levinson => solve_block_levinson(sys),
        SolveMethod::Dense => solve_dense(sys),
    }
}

/// `R_0 .. R_max_lag` with `R_k = (1/n) sum_{t>=k} f_t f_{t-k}^T`.
///
/// The `1/n` normalisation (rather than `1/(n-k)`) keeps the resulting
/// block-Toeplitz matrix positive semi-definite.
pub fn lag_moments(features: &[DVector<f64>], max_lag: usize) -> Result<Vec<DMatrix<f64>>, CalibError> {
    let n = features.len();
    if n <= max_lag {
        return Err(CalibError::InsufficientData { need: max_lag, got: n });
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(CalibError::DimensionMismatch("ragged features".into()));
    }
    Ok((0..=max_lag)
        .map(|k| {
            let mut acc = DMatrix::zeros(d, d);
            for t in k..n {
                acc.ger(1.0, &features[t], &features[t - k], 1.0);
            }
            acc / n as f64
        })
        .collect())
}

/// Centered moment system for regressing `z_t` on `f_{t-1}, .., f_{t-p}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMoments {
    pub system: BlockToeplitzSystem,
    pub feature_mean: DVector<f64>,
    pub target_mean: DVector<f64>,
    pub n: usize,
}

/// A contiguous stretch of aligned feature and target rows.
pub struct DesignSegment<'a> {
    pub features: &'a [DVector<f64>],
    pub targets: &'a [DVector<f64>],
}

impl DesignMoments {
    /// Builds `R_0..R_{p-1}` from the centered features and the right-hand
    /// side blocks `(1/n) sum_t f_{t-i} z_t^T`, `i = 1..p`, pooling segments
    /// without letting lags cross segment boundaries.
    pub fn from_segments(segments: &[DesignSegment<'_>], lag_order: usize) -> Result<Self, CalibError> {
        let p = lag_order;
        if p == 0 {
            return Err(CalibError::DimensionMismatch("lag order must be at least 1".into()));
        }
        let first = segments
            .iter()
            .find(|s| !s.features.is_empty())
            .ok_or(CalibError::InsufficientData { need: p, got: 0 })?;
        let (d, m) = (first.features[0].len(), first.targets[0].len());
        let mut n = 0usize;
        let mut fsum = DVector::zeros(d);
        let mut zsum = DVector::zeros(m);
        for s in segments {
            if s.features.len() != s.targets.len() {
                return Err(CalibError::DimensionMismatch("features and targets differ in length".into()));
            }
            for (f, z) in s.features.iter().zip(s.targets) {
                fsum += f;
                zsum += z;
            }
            n += s.features.len();
        }
        if n <= p {
            return Err(CalibError::InsufficientData { need: p, got: n });
        }
        let fmean = fsum / n as f64;
        let zmean = zsum / n as f64;

        let mut blocks = vec![DMatrix::zeros(d, d); p];
        let mut rhs = DMatrix::zeros(p * d, m);
        for s in segments {
            let f: Vec<DVector<f64>> = s.features.iter().map(|v| v - &fmean).collect();
            let z: Vec<DVector<f64>> = s.targets.iter().map(|v| v - &zmean).collect();
            for (k, block) in blocks.iter_mut().enumerate() {
                for t in k..f.len() {
                    block.ger(1.0, &f[t], &f[t - k], 1.0);
                }
            }
            for i in 1..=p {
                let mut acc = DMatrix::zeros(d, m);
                for t in i..f.len() {
                    acc.ger(1.0, &f[t - i], &z[t], 1.0);
                }
                let mut rows = rhs.rows_mut((i - 1) * d, d);
                rows += acc;
            }
        }
        for b in &mut blocks {
            *b /= n as f64;
        }
        rhs /= n as f64;
        // R_0 is symmetric in exact arithmetic
        blocks[0] = (&blocks[0] + blocks[0].transpose()) * 0.5;
        Ok(DesignMoments {
            system: BlockToeplitzSystem::new(BlockToeplitz::new(blocks)?, rhs)?,
            feature_mean: fmean,
            target_mean: zmean,
            n,
        })
    }

    /// Classical Yule-Walker system from `R_0..R_p` of the series itself.
    pub fn yule_walker(moments: &[DMatrix<f64>]) -> Result<Self, CalibError> {
        if moments.len() < 2 {
            return Err(CalibError::InsufficientData { need: 1, got: moments.len().saturating_sub(1) });
        }
        let p = moments.len() - 1;
        let d = moments[0].nrows();
        let mut rhs = DMatrix::zeros(p * d, d);
        for i in 1..=p {
            rhs.rows_mut((i - 1) * d, d).copy_from(&moments[i].transpose());
        }
        Ok(DesignMoments {
            system: BlockToeplitzSystem::new(BlockToeplitz::new(moments[..p].to_vec())?, rhs)?,
            feature_mean: DVector::zeros(d),
            target_mean: DVector::zeros(d),
            n: 0,
        })
    }

    /// True when some feature coordinate has exactly zero sample variance.
    pub fn has_constant_feature(&self) -> bool {
        let r0 = &self.system.matrix.blocks()[0];
        (0..r0.nrows()).any(|k| r0[(k, k)] <= 0.0)
    }
}

/// Coefficient blocks `A_1..A_p` (each `m x d`) and the intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSolution {
    pub blocks: Vec<DMatrix<f64>>,
    pub intercept: DVector<f64>,
    pub ridge: f64,
}

pub fn solve_normal_equations(
    design: &DesignMoments,
    method: SolveMethod,
) -> Result<LinearSolution, CalibError> {
    solve_normal_equations_with_ridge(design, method, 0.0)
}

pub fn solve_normal_equations_with_ridge(
    design: &DesignMoments,
    method: SolveMethod,
    ridge: f64,
) -> Result<LinearSolution, CalibError> {
    let sys = design.system.with_ridge(ridge);
    let beta = solve(&sys, method)?;
    let d = sys.matrix.dim();
    let blocks: Vec<DMatrix<f64>> = (0..sys.matrix.num_blocks())
        .map(|i| beta.rows(i * d, d).transpose())
        .collect();
    let mut intercept = design.target_mean.clone();
    for a in &blocks {
        intercept -= a * &design.feature_mean;
    }
    Ok(LinearSolution {
        blocks,
        intercept,
        ridge,
    })
}

/// Tries `ridge` first, then every ladder value above it.
///
/// An exactly constant feature at zero ridge is reported as singular
/// without escalating, since no small ridge makes that design meaningful.
pub fn solve_with_escalation(
    design: &DesignMoments,
    method: SolveMethod,
    ridge: f64,
) -> Result<LinearSolution, CalibError> {
    if ridge == 0.0 && design.has_constant_feature() {
        return Err(CalibError::SingularDesign { ridge });
    }
    let mut ladder = vec![ridge];
    ladder.extend(RIDGE_LADDER.iter().copied().filter(|&r| r > ridge));
    let mut last = ridge;
    for r in ladder {
        last = r;
        match solve_normal_equations_with_ridge(design, method, r) {
            Ok(sol) => return Ok(sol),
            Err(CalibError::NotPositiveDefinite { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(CalibError::SingularDesign { ridge: last })
}
