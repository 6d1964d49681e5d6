mod support {
    pub mod naive_mmpp;
}

use miis_core::models::mmpp::{mmpp_loglik, MmppParams};
use support::naive_mmpp::{naive_loglik, random_instances};

#[test]
fn forward_recursion_matches_the_naive_product() {
    for (psi, q, events, window) in random_instances(50, 12345) {
        let params = MmppParams::two_state(psi[0], psi[1], q[0], q[1]).unwrap();
        let fast = mmpp_loglik(&params, &events, window).unwrap();
        let slow = naive_loglik(psi, q, &events, window);
        assert!(
            (fast - slow).abs() <= 1e-8 * slow.abs().max(1e-300),
            "psi {psi:?} q {q:?} n {}: {fast} vs {slow}",
            events.len()
        );
    }
}

#[test]
fn three_events_by_hand() {
    // small case: compare against the naive product with fixed numbers
    let events = [0.3, 0.35, 1.2];
    let params = MmppParams::two_state(2.0, 6.0, 0.8, 1.4).unwrap();
    let fast = mmpp_loglik(&params, &events, 2.0).unwrap();
    let slow = naive_loglik([2.0, 6.0], [0.8, 1.4], &events, 2.0);
    assert!((fast - slow).abs() < 1e-12 * slow.abs());
}

#[test]
fn long_series_does_not_underflow() {
    // a naive product in doubles underflows around a hundred events at these rates
    let events: Vec<f64> = (1..=1500).map(|i| i as f64 * 0.0666).collect();
    let params = MmppParams::two_state(10.0, 17.0, 1.0, 1.0).unwrap();
    let ll = mmpp_loglik(&params, &events, 100.0).unwrap();
    assert!(ll.is_finite());
    assert!(ll != 0.0);
}
