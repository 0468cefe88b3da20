//! Times block Levinson against the dense Cholesky solve and writes CSV to stdout.
//!
//! ```text
//! cargo run --release -p xybook --example bench_solvers > timings.csv
//! ```

use std::io;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use xybook::calib::{solve, BlockToeplitz, BlockToeplitzSystem, SolveMethod};

fn random_system(rng: &mut ChaCha8Rng, d: usize, p: usize) -> BlockToeplitzSystem {
    // autocovariances of a vector MA(3) plus a small ridge
    let b: Vec<DMatrix<f64>> = (0..4)
        .map(|_| DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let blocks = (0..p)
        .map(|k| {
            let mut r = DMatrix::identity(d, d) * if k == 0 { 0.1 } else { 0.0 };
            for j in 0..b.len().saturating_sub(k) {
                r += &b[j + k] * b[j].transpose();
            }
            r
        })
        .collect();
    let rhs = DMatrix::from_fn(p * d, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
    BlockToeplitzSystem::new(BlockToeplitz::new(blocks).expect("symmetric R0"), rhs).expect("shapes")
}

fn best_of(sys: &BlockToeplitzSystem, method: SolveMethod, reps: usize) -> (f64, f64) {
    let mut best = f64::INFINITY;
    let mut residual = 0.0;
    for _ in 0..reps {
        let t = Instant::now();
        let x = solve(sys, method).expect("SPD system");
        best = best.min(t.elapsed().as_secs_f64());
        residual = sys.relative_residual(&x);
    }
    (best, residual)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut out = csv::Writer::from_writer(io::stdout());
    out.write_record(["d", "p", "levinson_s", "dense_s", "speedup", "levinson_residual"])?;
    for d in [1, 2, 4] {
        for p in [16, 64, 128, 256, 512] {
            let sys = random_system(&mut rng, d, p);
            let (lev, res) = best_of(&sys, SolveMethod::Levinson, 3);
            let (dense, _) = best_of(&sys, SolveMethod::Dense, 3);
            out.write_record([
                d.to_string(),
                p.to_string(),
                format!("{lev:.6}"),
                format!("{dense:.6}"),
                format!("{:.2}", dense / lev),
                format!("{res:.2e}"),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
