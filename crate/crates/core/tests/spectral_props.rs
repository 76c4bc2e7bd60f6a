use std::f64::consts::PI;

use lmagg::laws::{AngularLaw, Flavor, RadialLaw, Shape};
use lmagg::model::{InnovationScheme, ModelSpec};
use lmagg::poles::*;
use lmagg::spectral::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn model(flavor: Flavor, groups: Vec<PoleGroupSpec>) -> ModelSpec {
    ModelSpec::new(flavor, groups, 1.0, InnovationScheme::Independent).unwrap()
}

/// AR(1) at +0.5 (d = 0.4) and a diffuse pair around π/2.
fn two_group_model() -> ModelSpec {
    let real = PoleGroupSpec::real_discrete(PoleSign::Positive, 1, RadialLaw::discrete(0.4, Shape::Constant).unwrap())
        .unwrap();
    let pair = PoleGroupSpec::complex_pair_discrete(
        1,
        RadialLaw::discrete(0.5, Shape::Constant).unwrap(),
        AngularLaw::singular(0.6, PI / 2.0, Shape::Constant, (PI / 4.0, 3.0 * PI / 4.0)).unwrap(),
    )
    .unwrap();
    model(Flavor::Discrete, vec![real, pair])
}

fn continuous_model() -> ModelSpec {
    let real = PoleGroupSpec::real_continuous(1, RadialLaw::continuous(0.5, Shape::ExpDecay { rate: 1.0 }).unwrap())
        .unwrap();
    let pair = PoleGroupSpec::complex_pair_continuous(
        1,
        RadialLaw::continuous(0.5, Shape::ExpDecay { rate: 1.0 }).unwrap(),
        AngularLaw::dirac(3.0),
    )
    .unwrap();
    model(Flavor::Continuous, vec![real, pair])
}

fn random_sample(flavor: Flavor, seed: u64) -> PoleSample {
    let m = match flavor {
        Flavor::Discrete => two_group_model(),
        Flavor::Continuous => continuous_model(),
    };
    m.sample(&mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transfer_squared_is_density(seed in any::<u64>(), lambda in -PI..PI, cont in any::<bool>()) {
        let flavor = if cont { Flavor::Continuous } else { Flavor::Discrete };
        let y = random_sample(flavor, seed);
        let l = if cont { 4.0 * lambda } else { lambda };
        let g = pointwise_g(&y, l, 1.3);
        let h = pointwise_h(&y, l, 1.3);
        prop_assert!((h.norm_sqr() - g).abs() <= 1e-12 * g);
    }

    #[test]
    fn pointwise_symmetry(seed in any::<u64>(), lambda in 0.0..PI) {
        let y = random_sample(Flavor::Discrete, seed);
        let (a, b) = (pointwise_g(&y, lambda, 1.0), pointwise_g(&y, -lambda, 1.0));
        prop_assert!((a - b).abs() <= 1e-12 * a);
        let (ha, hb) = (pointwise_h(&y, lambda, 1.0), pointwise_h(&y, -lambda, 1.0));
        prop_assert!((ha - hb.conj()).norm() <= 1e-12 * ha.norm());
    }
}

#[test]
fn mixture_symmetry_and_jensen_on_a_grid() {
    let opts = MixtureOptions::default();
    for m in [two_group_model(), continuous_model()] {
        let grid: Vec<f64> = frequency_grid(&m, 256);
        let f = mixture_f(&m, &grid, &Method::Quadrature, &opts).unwrap();
        let h = mixture_h(&m, &grid, &Method::Quadrature, &opts).unwrap().magnitude_squared();
        let (f, h) = (f.real_values().unwrap().to_vec(), h.real_values().unwrap().to_vec());
        let n = grid.len();
        for i in 0..n {
            assert!(h[i] <= f[i] * (1.0 + 1e-9), "Jensen at {}: {} > {}", grid[i], h[i], f[i]);
            if let Ok(j) = grid.binary_search_by(|x| x.total_cmp(&-grid[i])) {
                assert!((f[i] - f[j]).abs() <= 1e-10 * f[i], "F asymmetric at {}", grid[i]);
                assert!((h[i] - h[j]).abs() <= 1e-10 * h[i], "|H| asymmetric at {}", grid[i]);
            }
        }
    }
}

#[test]
fn multi_group_mixture_factorizes() {
    let opts = MixtureOptions::default();
    let m = two_group_model();
    let singles: Vec<ModelSpec> = m.groups.iter().map(|g| model(Flavor::Discrete, vec![g.clone()])).collect();
    for &l in &[0.1, 0.9, 2.0, 3.0] {
        let whole = mixture_f_at(&m, l, &opts).unwrap();
        let prod: f64 = singles.iter().map(|s| mixture_f_at(s, l, &opts).unwrap()).product();
        assert!((whole - prod).abs() <= 1e-9 * whole);
        let whole = mixture_h_at(&m, l, &opts).unwrap();
        let prod = singles
            .iter()
            .map(|s| mixture_h_at(s, l, &opts).unwrap())
            .fold(num_complex::Complex64::new(1.0, 0.0), |a, b| a * b);
        assert!((whole - prod).norm() <= 1e-9 * whole.norm());
    }
}

#[test]
fn refinement_is_stable_away_from_singularities() {
    let opts = MixtureOptions::default();
    for m in [two_group_model(), continuous_model()] {
        for &l in &[0.3, 1.1, 2.4] {
            let a = mixture_f_at(&m, l, &opts).unwrap();
            let b = mixture_f_at(&m, l, &opts.refined()).unwrap();
            assert!((a - b).abs() < 1e-6 * a, "{l}: {a} vs {b}");
        }
    }
}

#[test]
fn pair_mixture_matches_monte_carlo() {
    let m = two_group_model();
    let samples = draw_samples(&m, 200_000, 11);
    for &l in &[0.5, 2.5] {
        let q = mixture_f_at(&m, l, &MixtureOptions::default()).unwrap();
        let mc = mc_f_at(&m, &samples, l);
        assert!((q - mc.value).abs() < 4.0 * mc.stderr, "{l}: {q} vs {} ± {}", mc.value, mc.stderr);
    }
}

fn ar1_path(rho: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = 0.0;
    for _ in 0..200 {
        x = rho * x + { let e: f64 = StandardNormal.sample(rng); e };
    }
    (0..n)
        .map(|_| {
            x = rho * x + { let e: f64 = StandardNormal.sample(rng); e };
            x
        })
        .collect()
}

fn ar1_density(rho: f64, l: f64) -> f64 {
    1.0 / (1.0 - 2.0 * rho * l.cos() + rho * rho) / (2.0 * PI)
}

#[test]
fn periodogram_of_white_noise_is_flat() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..1 << 16).map(|_| StandardNormal.sample(&mut rng)).collect();
    let p = periodogram(&x, &PeriodogramOptions::default()).unwrap();
    let d = smoothed_l1(&p, |_| 1.0 / (2.0 * PI), (0.0, PI));
    let v = p.real_values().unwrap();
    assert!(d < 0.05, "{d} {} {} {}", v[0], v[100], v[v.len() - 1]);
}

#[test]
fn periodogram_tracks_ar1_densities() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = ar1_path(0.5, 1 << 16, &mut rng);
    let p = periodogram(&a, &PeriodogramOptions::default()).unwrap();
    assert!(smoothed_l1(&p, |l| ar1_density(0.5, l), (0.0, PI)) < 0.10);

    let b = ar1_path(-0.7, 1 << 16, &mut rng);
    let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    let p = periodogram(&sum, &PeriodogramOptions::default()).unwrap();
    let d = smoothed_l1(&p, |l| ar1_density(0.5, l) + ar1_density(-0.7, l), (0.0, PI));
    assert!(d < 0.10, "{d}");
}

#[test]
fn curve_serialization() {
    let m = two_group_model();
    let grid = vec![-1.0, 0.5, 2.0];
    let c = mixture_f(&m, &grid, &Method::MonteCarlo { draws: 1000, seed: 3 }, &MixtureOptions::default()).unwrap();
    let csv = c.to_csv();
    assert!(csv.starts_with("frequency,value,stderr\n"));
    assert_eq!(csv.lines().count(), 4);
    let back: SpectralCurve = serde_json::from_str(&c.to_json()).unwrap();
    assert_eq!(back, c);
}
