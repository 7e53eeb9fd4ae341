use mfpg_core::datagen::collect_dataset;
use mfpg_core::estimator::{build_samples, ls_estimate};
use mfpg_core::lqr::{exact_xi, noise_lift};
use mfpg_core::presets;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn least_squares_error_does_not_vanish_with_more_data() {
    let sys = presets::paper_system();
    let w = presets::paper_weights();
    let k0 = presets::paper_initial_gain().unwrap();
    let (sx, su) = presets::paper_exploration();
    let truth = exact_xi(&sys, &w, &k0).unwrap();
    let lift = noise_lift(&sys.sigma_w).unwrap();
    let err_at = |n: usize| {
        median(
            (0..20)
                .map(|seed| {
                    let ds = collect_dataset(&sys, n, &sx, &su, seed).unwrap();
                    let samples = build_samples(&ds.triples, &k0, &w, &lift).unwrap();
                    (ls_estimate(&samples).unwrap() - &truth).norm()
                })
                .collect(),
        )
    };
    let (small, large) = (err_at(500), err_at(5000));
    assert!(large > 0.5 * small, "LS error {small} at N=500, {large} at N=5000");
}

#[test]
fn initial_parameter_lies_in_unit_ball() {
    let xi = exact_xi(
        &presets::paper_system(),
        &presets::paper_weights(),
        &presets::paper_initial_gain().unwrap(),
    )
    .unwrap();
    assert_eq!(xi.len(), 21);
    assert!(xi.norm() < presets::PAPER_BALL_RADIUS, "|xi| = {}", xi.norm());
}
