mod common;

use common::{central, mms, mms_error, observed_orders};

#[test]
fn manufactured_forcing_balances_the_stress_divergence() {
    for &x in &[[0.3, 0.2], [0.9, 0.7], [0.05, 0.95]] {
        let h = 1e-5;
        let s = |k: usize, p: [f64; 2]| mms::stress(p)[k];
        let dxx = central(|t| s(0, [t, x[1]]), x[0], h);
        let dxy_x = central(|t| s(2, [t, x[1]]), x[0], h);
        let dxy_y = central(|t| s(2, [x[0], t]), x[1], h);
        let dyy = central(|t| s(1, [x[0], t]), x[1], h);
        let f = mms::body(x);
        assert!((f[0] + dxx + dxy_y).abs() < 1e-8, "{x:?}");
        assert!((f[1] + dxy_x + dyy).abs() < 1e-8, "{x:?}");
        let div = central(|t| mms::velocity([t, x[1]])[0], x[0], h) + central(|t| mms::velocity([x[0], t])[1], x[1], h);
        assert!(div.abs() < 1e-9);
    }
}

#[test]
fn velocity_converges_at_second_order() {
    let errors: Vec<f64> = [4, 8, 16].iter().map(|&n| mms_error(n)).collect();
    let orders = observed_orders(&errors);
    assert!(errors.iter().all(|e| e.is_finite() && *e > 0.0));
    assert!(orders.iter().all(|o| *o >= 1.9), "errors {errors:?} orders {orders:?}");
}
