use std::f64::consts::PI;

use lmagg::asymptotics::*;
use lmagg::laws::{Flavor, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn random_single_integral_fits() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let shape = Shape::ExpDecay { rate: 0.7 };
    for _ in 0..12 {
        let n = rng.gen_range(1..=4u32);
        let d = rng.gen_range(-0.9..n as f64 - 1.1);
        let flavor = if rng.gen::<bool>() { Flavor::Discrete } else { Flavor::Continuous };
        let case = match (flavor, rng.gen_range(0..3)) {
            (_, 0) => AngleCase::Zero,
            (Flavor::Discrete, 1) => AngleCase::Pi,
            (Flavor::Discrete, _) => AngleCase::Interior(rng.gen_range(0.3..PI - 0.3)),
            (Flavor::Continuous, _) => AngleCase::Interior(rng.gen_range(0.5..4.0)),
        };
        let fit = single_integral_check(flavor, d, n, case, &shape).unwrap();
        assert!(fit.exponent_error() < 0.02, "{flavor:?} d={d} n={n} {case:?}: {}", fit.fitted_exponent);
        assert!(fit.constant_error().unwrap() < 0.05, "{flavor:?} d={d} n={n} {case:?}");
        assert!(fit.power_law);
    }
}

#[test]
fn local_slopes_settle_monotonically() {
    let fit = single_integral_check(Flavor::Discrete, 0.2, 2, AngleCase::Zero, &Shape::Constant).unwrap();
    let gaps: Vec<f64> = fit
        .ladder
        .iter()
        .filter_map(|p| p.diff_slope)
        .map(|s| (s - fit.predicted_exponent).abs())
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{gaps:?}");
}

#[test]
fn double_integral_fits_in_continuous_time() {
    let (phi, psi) = (Shape::ExpDecay { rate: 1.0 }, Shape::Constant);
    let fit =
        double_integral_check(Flavor::Continuous, 0.3, 2, 0.5, AngleCase::Interior(2.0), &phi, &psi, &Ladder::coarse()).unwrap();
    assert!(fit.exponent_error() < 0.03);
    assert!(fit.constant_error().unwrap() < 0.05);
}

#[test]
fn fit_table_csv() {
    let fit = single_integral_check(Flavor::Discrete, 0.5, 2, AngleCase::Zero, &Shape::Constant).unwrap();
    let csv = fit.to_csv();
    assert_eq!(csv.lines().count(), fit.ladder.len() + 1);
    let back: AsymptoticFit = serde_json::from_str(&serde_json::to_string(&fit).unwrap()).unwrap();
    assert_eq!(back.ladder.len(), fit.ladder.len());
}
