mod common;

#[test]
fn fft_matches_direct_sum_on_8x8() {
    for (seed, l) in [(1, 1.0), (2, 3.5)] {
        let gap = common::dft_gap(8, l, seed);
        assert!(gap < 1e-13, "gap {gap:e}");
    }
}

#[test]
fn dealiased_product_matches_convolution_on_16x16() {
    for (seed, l) in [(3, 1.0), (4, 7.0)] {
        let gap = common::product_gap(16, l, seed);
        assert!(gap < 1e-12, "gap {gap:e}");
    }
}

#[test]
fn frozen_shear_converges_to_characteristics_at_first_order() {
    let (errors, orders) = common::characteristics_orders(&[1e-3, 5e-4, 2.5e-4]);
    assert!(errors[0] < 0.05, "{errors:?}");
    assert!(orders.iter().all(|&o| o >= 0.9), "orders {orders:?}, errors {errors:?}");
}

#[test]
fn trace_form_matches_double_sum_on_16x16() {
    for seed in [5, 6] {
        let gap = common::trace_form_gap(seed);
        assert!(gap < 1e-8, "gap {gap:e}");
    }
}
