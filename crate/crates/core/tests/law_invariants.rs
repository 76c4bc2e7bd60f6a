use std::f64::consts::PI;

use lmagg::laws::*;
use lmagg::quad::{integrate, Locus, QuadOptions, SingularPoint};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent normalisation check: integrate the returned density.
fn total_mass(piece: &PowerLawPiece) -> f64 {
    let (lo, hi) = piece.support();
    let c = piece.center();
    let mut breaks = piece.shape().kinks();
    breaks.retain(|k| *k > lo && *k < hi);
    integrate(
        |at: Locus| {
            let dist = at.relative_to(0, c).abs();
            if dist == 0.0 {
                return Ok(0.0);
            }
            // density(x) re-expressed through the exact offset
            Ok(dist.powf(piece.exponent()) * piece.regular_part(if at.x < c { Side::Below } else { Side::Above }, dist))
        },
        lo,
        hi,
        &[SingularPoint::new(c, piece.exponent())],
        &breaks,
        &QuadOptions::default().with_rel_tol(1e-12),
    )
    .unwrap()
    .value
}

fn shape_strategy() -> impl Strategy<Value = Shape> {
    prop_oneof![
        Just(Shape::Constant),
        (0.5f64..3.0).prop_map(|rate| Shape::ExpDecay { rate }),
        (0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, b)| Shape::Polynomial { coeffs: vec![1.0, 0.1 * a, b] }),
        (0.0f64..2.0).prop_map(|exponent| Shape::PowerTail { exponent }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn discrete_radial_is_normalised(d in -0.9f64..3.0, phi in shape_strategy()) {
        let law = RadialLaw::discrete(d, phi).unwrap();
        let mass = total_mass(law.piece().unwrap());
        prop_assert!((mass - 1.0).abs() < 1e-8, "mass {}", mass);
    }

    #[test]
    fn continuous_radial_is_normalised(d in -0.9f64..3.0, rate in 0.5f64..3.0) {
        let law = RadialLaw::continuous(d, Shape::ExpDecay { rate }).unwrap();
        let mass = total_mass(law.piece().unwrap());
        prop_assert!((mass - 1.0).abs() < 1e-8, "mass {}", mass);
    }

    #[test]
    fn angular_is_normalised(beta in -1.0f64..0.95, theta0 in -3.0f64..3.0, psi in shape_strategy()) {
        let law = AngularLaw::singular(beta, theta0, psi, (-PI, PI)).unwrap();
        let AngularComponent::Diffuse { piece, .. } = &law.components()[0] else { unreachable!() };
        let mass = total_mass(piece);
        prop_assert!((mass - 1.0).abs() < 1e-8, "mass {}", mass);
    }

    #[test]
    fn quantile_error_is_uniformly_small(d in -0.9f64..3.0, u in 0.001f64..0.999) {
        let law = RadialLaw::discrete(d, Shape::Polynomial { coeffs: vec![1.0, 0.3] }).unwrap();
        let q = law.quantile(u);
        prop_assert!((law.cdf(q).unwrap() - u).abs() < 1e-6);
    }
}

/// Kolmogorov-Smirnov statistic against an exact CDF.
fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn samples_pass_kolmogorov_smirnov() {
    let n = 100_000;
    let critical = 1.628 / (n as f64).sqrt();
    let laws = [
        RadialLaw::discrete(-0.6, Shape::Constant).unwrap(),
        RadialLaw::discrete(2.0, Shape::ExpDecay { rate: 1.0 }).unwrap(),
        RadialLaw::continuous(0.4, Shape::ExpDecay { rate: 1.0 }).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for law in &laws {
        let xs: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
        // tabulated CDF check on a grid, then exact CDF for the statistic
        let ks = ks_statistic(xs, |x| law.cdf(x).unwrap());
        assert!(ks < critical, "{:?}: KS {ks} >= {critical}", law.spec());
    }
    let angular = AngularLaw::singular(0.7, 0.5, Shape::Constant, (-PI, PI)).unwrap();
    let AngularComponent::Diffuse { piece, .. } = &angular.components()[0] else { unreachable!() };
    let xs: Vec<f64> = (0..n).map(|_| angular.sample(&mut rng)).collect();
    let ks = ks_statistic(xs, |x| piece.cdf(x).unwrap());
    assert!(ks < critical, "angular KS {ks}");
}

#[test]
fn two_singular_pieces_pass_chi_square() {
    let part = |at: f64| DiffusePart {
        weight: 1.0,
        beta: 0.5,
        at,
        psi: None,
        support: (-2.0, 2.0),
    };
    let law = AngularLaw::mixed(&[], &[part(-1.0), part(1.0)]).unwrap();
    let cdf = |x: f64| -> f64 {
        law.components()
            .iter()
            .map(|c| match c {
                AngularComponent::Diffuse { weight, piece } => weight * piece.cdf(x).unwrap(),
                AngularComponent::Atom { .. } => unreachable!(),
            })
            .sum()
    };
    let bins = 40;
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut counts = vec![0usize; bins];
    for _ in 0..n {
        let x = law.sample(&mut rng);
        let b = (((x + 2.0) / 4.0) * bins as f64).floor().clamp(0.0, (bins - 1) as f64) as usize;
        counts[b] += 1;
    }
    let chi2: f64 = (0..bins)
        .map(|b| {
            let lo = -2.0 + 4.0 * b as f64 / bins as f64;
            let hi = lo + 4.0 / bins as f64;
            let expected = n as f64 * (cdf(hi) - cdf(lo));
            (counts[b] as f64 - expected).powi(2) / expected
        })
        .sum();
    // 0.99 quantile of χ² with 39 degrees of freedom
    assert!(chi2 < 62.428, "chi2 {chi2}");
    // density agrees with the singular form near each centre
    let shape = |x: f64| (x - 1.0f64).abs().powf(-0.5) + (x + 1.0f64).abs().powf(-0.5);
    let z = law.density(1.0 + 1e-4).unwrap() / law.density(1.3).unwrap();
    assert!((z - shape(1.0 + 1e-4) / shape(1.3)).abs() < 1e-10, "{z}");
}

#[test]
fn two_exponent_preset_matches_min_of_powers() {
    let law = AngularLaw::singular(0.5, 0.0, Shape::PowerTail { exponent: 1.0 }, (-10.0, 10.0)).unwrap();
    let r = law.density(4.0).unwrap() / law.density(0.25).unwrap();
    // |τ|^{-0.5} below one, |τ|^{-1.5} above
    assert!((r - 4f64.powf(-1.5) / 0.25f64.powf(-0.5)).abs() < 1e-12);
}
