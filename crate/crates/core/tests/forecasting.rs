mod support;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sarma::forecast::{one_step_forecast, rolling_evaluate, var_baseline_fit, ForecastMethod, RollingConfig};
use sarma::model::residuals;
use sarma::simulate::{simulate_varma11, Innovation, VarmaSpec};
use support::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn forecast_plus_residual_is_the_observation(seed in 0u64..10_000, n in 1usize..4, origin in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let order = random_order(&mut rng);
        let inst = random_instance(&mut rng, n, order, 31);
        let model = unchecked_model(&inst.alpha);
        let f = one_step_forecast(&inst.series.slice(0, origin).unwrap(), &model).unwrap();
        let e = residuals(&inst.series.slice(0, origin + 1).unwrap(), &model).unwrap();
        for a in 0..n {
            prop_assert!((inst.series.row(origin)[a] - f[a] - e[(origin, a)]).abs() < 1e-12);
        }
    }
}

#[test]
fn var_baseline_recovers_phi() {
    let phi = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]);
    let spec = VarmaSpec {
        phi: phi.clone(),
        theta: DMatrix::zeros(2, 2),
        sigma0: DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]),
        dist: Innovation::Normal,
        burn_in: 200,
    };
    let len = 3000;
    let y = simulate_varma11(&spec, len, 12).unwrap().series;
    let (m, sigma) = var_baseline_fit(&y, 1).unwrap();
    let g = m.loadings().get(1);
    let mut xx = DMatrix::<f64>::zeros(2, 2);
    for t in 0..len - 1 {
        let x = DVector::from_column_slice(y.row(t));
        xx += &x * x.transpose();
    }
    let xx_inv = xx.try_inverse().unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let se = (sigma[(i, i)] * xx_inv[(j, j)]).sqrt();
            assert!((g[(i, j)] - phi[(i, j)]).abs() < 3.0 * se, "({i},{j}) {} vs {}", g[(i, j)], phi[(i, j)]);
        }
    }
    assert!(m.sigma().is_some());
}

#[test]
fn rolling_origins_and_refits() {
    let spec = VarmaSpec {
        phi: DMatrix::identity(2, 2) * 0.4,
        theta: DMatrix::zeros(2, 2),
        sigma0: DMatrix::identity(2, 2),
        dist: Innovation::Normal,
        burn_in: 50,
    };
    let y = simulate_varma11(&spec, 80, 1).unwrap().series;
    let cfg = RollingConfig { window: 60, refit_every: 4, ..RollingConfig::default() };
    let rep = rolling_evaluate(&y, ForecastMethod::Var { p: 1 }, &cfg).unwrap();
    assert_eq!(rep.points.len(), 20);
    assert_eq!(rep.points[0].origin, 60);
    let refits: Vec<bool> = rep.points.iter().map(|p| p.refit).collect();
    assert_eq!(refits.iter().filter(|r| **r).count(), 5);
    assert!(refits[0] && refits[4] && !refits[1]);
    assert!(rep.rmsfe.is_finite() && rep.mafe <= rep.rmsfe + 1e-12);
    let bad = RollingConfig { window: 80, ..RollingConfig::default() };
    assert!(rolling_evaluate(&y, ForecastMethod::Var { p: 1 }, &bad).is_err());
}

#[test]
fn window_only_history_differs_from_full_history() {
    let spec = VarmaSpec {
        phi: DMatrix::identity(1, 1) * 0.3,
        theta: DMatrix::identity(1, 1) * -0.6,
        sigma0: DMatrix::identity(1, 1),
        dist: Innovation::Normal,
        burn_in: 50,
    };
    let y = simulate_varma11(&spec, 70, 2).unwrap().series;
    let order = sarma::model::ModelOrder::new(0, 1, 0);
    let method = ForecastMethod::Sarma { order, estimator: sarma::Estimator::Lse };
    let full = rolling_evaluate(&y, method, &RollingConfig { window: 60, ..RollingConfig::default() }).unwrap();
    let short = rolling_evaluate(&y, method, &RollingConfig { window: 60, full_history: false, ..RollingConfig::default() }).unwrap();
    assert_eq!(full.points.len(), short.points.len());
    assert!(full.points.iter().zip(&short.points).any(|(a, b)| a.forecast != b.forecast));
}
