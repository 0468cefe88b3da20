use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use xybook::evaluate::{evaluate, train_len, EvalOptions};
use xybook::models::{simulate_path, BasisSpec, CoeffBlock, ResidualLaw, SideModel, YLink};
use xybook::{BookState, LagBuffer, Tick, XYModel, XySeries};

fn generator() -> XYModel {
    XYModel::from_parts(
        BasisSpec::identity(1),
        [0.0, 0.0],
        vec![CoeffBlock {
            rows: 2,
            cols: 2,
            data: vec![0.5, 0.0, 0.0, 0.0],
        }],
        ResidualLaw::Gaussian {
            mean: [0.0; 2],
            chol: [[2.0, 0.0], [0.0, 0.0]],
        },
        SideModel::constant(0.5, 2),
        YLink {
            reinit_ask: (1..=10).collect(),
            reinit_bid: (1..=10).collect(),
            p_inside_ask: 0.3,
            p_inside_bid: 0.3,
        },
    )
    .unwrap()
}

fn simulated(n: usize, seed: u64) -> XySeries {
    let start = BookState::new(1000, 1001, 5, 5).unwrap();
    let mut hist = LagBuffer::filled(1, [1.0, 5.0]);
    let path = simulate_path(&generator(), &start, &mut hist, n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    XySeries::single(Tick::new("0.01".parse().unwrap()).unwrap(), start, path.into_iter().map(|(e, _)| e).collect())
}

#[test]
fn self_simulated_data_is_predictable() {
    let series = simulated(20_000, 1);
    let opts = EvalOptions {
        n_paths: 100,
        horizon: 500,
        seed: 3,
        ..EvalOptions::default()
    };
    let train = series.truncated(train_len(series.len(), opts.split));
    let model = XYModel::fit(&train, BasisSpec::identity(1), 0.0).unwrap();
    let m = evaluate(&series, &model, &opts).unwrap();
    let dir = m.direction.clone().unwrap();
    let flow = m.flow.clone().unwrap();
    assert!(dir.n_moves > 500);
    assert!(dir.lift_vs_coin_flip > 0.0, "{dir:?}");
    assert!(flow.mse_lift > 0.0, "{flow:?}");

    let shuffled = evaluate(
        &series,
        &model,
        &EvalOptions {
            shuffle_labels: Some(11),
            ..opts
        },
    )
    .unwrap()
    .direction
    .unwrap();
    assert!((shuffled.hit_rate - 0.5).abs() <= 3.0 * shuffled.sigma, "{shuffled:?}");
    assert_eq!(evaluate(&series, &model, &opts).unwrap(), m);
}
