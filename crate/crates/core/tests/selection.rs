use nalgebra::DMatrix;
use sarma::model::ModelOrder;
use sarma::select::{select_order, SelectionGrid};
use sarma::estimate::FitConfig;
use sarma::simulate::{simulate_varma11, Innovation, VarmaSpec};

fn var1_series(seed: u64, len: usize) -> sarma::Series {
    let spec = VarmaSpec {
        phi: DMatrix::from_row_slice(2, 2, &[0.6, 0.2, 0.0, 0.5]),
        theta: DMatrix::zeros(2, 2),
        sigma0: DMatrix::identity(2, 2),
        dist: Innovation::Normal,
        burn_in: 100,
    };
    simulate_varma11(&spec, len, seed).unwrap().series
}

#[test]
fn strong_var1_signal_selects_var1() {
    // reduced replications and grid to keep the suite fast
    let reps = 10;
    let grid = SelectionGrid {
        p_max: 2,
        r_max: 1,
        s_max: 1,
        fit: FitConfig { restarts: 2, ..FitConfig::default() },
        ..SelectionGrid::default()
    };
    let hits = (0..reps)
        .filter(|&rep| select_order(&var1_series(rep, 1000), &grid).unwrap().order == ModelOrder::new(1, 0, 0))
        .count();
    assert!(hits as f64 >= 0.9 * reps as f64, "{hits}/{reps}");
}

#[test]
fn table_covers_grid_in_order() {
    let y = var1_series(1, 300);
    let grid = SelectionGrid { p_max: 1, r_max: 0, s_max: 1, ..SelectionGrid::default() };
    let sel = select_order(&y, &grid).unwrap();
    let orders: Vec<ModelOrder> = sel.table.iter().map(|r| r.order()).collect();
    assert_eq!(
        orders,
        vec![ModelOrder::new(0, 0, 1), ModelOrder::new(1, 0, 0), ModelOrder::new(1, 0, 1)]
    );
    let best = sel
        .table
        .iter()
        .filter(|r| r.identifiable == Some(true))
        .filter_map(|r| r.bic)
        .fold(f64::INFINITY, f64::min);
    let chosen = sel.table.iter().find(|r| r.order() == sel.order).unwrap();
    assert_eq!(chosen.bic, Some(best));
    assert_eq!(sel.fit.model.order(), sel.order);
}

#[test]
fn empty_grid_is_rejected() {
    let y = var1_series(2, 100);
    let grid = SelectionGrid { p_max: 0, r_max: 0, s_max: 0, ..SelectionGrid::default() };
    assert!(select_order(&y, &grid).is_err());
}

#[test]
fn vanishing_rate_fit_is_not_eligible() {
    let y = var1_series(1, 1000);
    let grid = SelectionGrid { p_max: 1, r_max: 1, s_max: 0, ..SelectionGrid::default() };
    let sel = select_order(&y, &grid).unwrap();
    let row = sel.table.iter().find(|r| r.order() == ModelOrder::new(0, 1, 0)).unwrap();
    assert_eq!(row.identifiable, Some(false));
    assert_eq!(sel.order, ModelOrder::new(1, 0, 0));
    let open = SelectionGrid { identifiability_tol: 0.0, ..grid };
    let all = select_order(&y, &open).unwrap();
    assert!(all.table.iter().all(|r| r.identifiable == Some(true)));
}
