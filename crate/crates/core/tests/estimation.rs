use nalgebra::DMatrix;
use proptest::prelude::*;
use sarma::estimate::{fit, fit_lse, Estimator, FitConfig};
use sarma::model::ModelOrder;
use sarma::series::Series;
use sarma::simulate::{dgp_preset, simulate_varma11, Innovation, Preset, VarmaSpec};

fn zero_padded_ols(y: &Series<f64>, p: usize) -> Vec<DMatrix<f64>> {
    let (len, n) = (y.len(), y.dim());
    let x = DMatrix::from_fn(len, n * p, |t, c| {
        let h = c / n + 1;
        if t >= h {
            y.row(t - h)[c % n]
        } else {
            0.0
        }
    });
    let b = x.svd(true, true).solve(&y.to_matrix(), 1e-14).unwrap();
    (0..p).map(|h| b.rows(h * n, n).transpose()).collect()
}

fn var1(n: usize, seed: u64, len: usize) -> Series<f64> {
    let spec = VarmaSpec {
        phi: DMatrix::from_fn(n, n, |i, j| if i == j { 0.5 } else { 0.1 / (1 + i + j) as f64 }),
        theta: DMatrix::zeros(n, n),
        sigma0: DMatrix::identity(n, n),
        dist: Innovation::Normal,
        burn_in: 100,
    };
    simulate_varma11(&spec, len, seed).unwrap().series
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn pure_var_fit_is_least_squares(seed in 0u64..1000, n in 1usize..4, p in 1usize..3) {
        let y = var1(n, seed, 150);
        let f = fit_lse(&y, ModelOrder::new(p, 0, 0), &FitConfig::default()).unwrap();
        for (g, a) in f.model.loadings().mats().iter().zip(zero_padded_ols(&y, p)) {
            prop_assert!((g - a).amax() < 1e-8);
        }
        prop_assert!(f.converged);
    }

    #[test]
    fn block_updates_never_increase_the_objective(seed in 0u64..1000, qmle in any::<bool>(), which in 0usize..3) {
        let preset = [Preset::Dgp1, Preset::Dgp2a { lambda: 0.7 }, Preset::Dgp2b { gamma: 0.7 }][which];
        let (spec, truth) = dgp_preset(preset, 0.4, Innovation::Normal, seed).unwrap();
        let y = simulate_varma11(&spec, 200, seed).unwrap().series;
        let est = if qmle { Estimator::Qmle } else { Estimator::Lse };
        let cfg = FitConfig { restarts: 1, seed, ..FitConfig::default() };
        let f = fit(&y, truth.order(), est, &cfg).unwrap();
        for w in f.block_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
        prop_assert_eq!(*f.trace.last().unwrap(), f.loss);
    }
}

#[test]
fn lse_and_qmle_agree_under_identity_noise_at_large_len() {
    let (spec, truth) = dgp_preset(Preset::Dgp1, 0.0, Innovation::Normal, 1).unwrap();
    let y = simulate_varma11(&spec, 2000, 4).unwrap().series;
    let cfg = FitConfig { restarts: 2, ..FitConfig::default() };
    let l = fit(&y, truth.order(), Estimator::Lse, &cfg).unwrap();
    let q = fit(&y, truth.order(), Estimator::Qmle, &cfg).unwrap();
    let (ll, lq) = (l.model.omega().lambdas[0], q.model.omega().lambdas[0]);
    assert!((ll + 0.8).abs() < 0.1, "{ll}");
    assert!((ll - lq).abs() < 0.02, "{ll} vs {lq}");
}

#[test]
fn f32_and_f64_fits_agree() {
    let y = var1(2, 3, 300);
    let order = ModelOrder::new(1, 1, 0);
    let cfg = FitConfig { restarts: 2, ..FitConfig::default() };
    let a = fit_lse(&y, order, &cfg).unwrap();
    let b = fit_lse(&y.cast::<f32>(), order, &cfg).unwrap();
    assert!((a.loss - b.loss as f64).abs() < 1e-3 * a.loss);
}
