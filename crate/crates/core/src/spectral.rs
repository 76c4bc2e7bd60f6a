//! Per-sample spectral densities and transfer functions, their mixtures
//! over the random poles, the existence integral, and the periodogram.
//!
//! Conventions: `g(λ) = σ² |A(e^{iλ})|^{-2}` integrates to `2π` times the
//! variance, and the periodogram is scaled so unit white noise sits at
//! `1/(2π)`. Compare a periodogram with `g / (2π)`.
//!
//! Every factor is written through the distance `x` of the pole to the
//! boundary (`x = 1 - ρ` or `x = r`) and the angular offset `a`:
//!
//! ```text
//! discrete    |1 - (1-x) e^{ia}|² = x² + 4 (1-x) sin²(a/2)
//! continuous  |x + ia|²           = x² + a²
//! ```
//!
//! so that quadrature near the singular point never subtracts nearly equal
//! numbers.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{classify_model, Existence};
use crate::laws::{AngularComponent, Flavor, PowerLawPiece, Side};
use crate::model::{InnovationRegime, ModelSpec};
use crate::poles::{GroupKind, PoleGroupSpec, PoleSample};
use crate::quad::{integrate, integrate_smooth, integrate_tail, Locus, QuadError, QuadOptions, QuadValue, SingularPoint};

/// Minimum periodogram input length.
pub const MIN_SERIES: usize = 256;
/// Default grid size.
pub const GRID_NODES: usize = 4096;
/// Innermost clustered offset from a singular frequency.
pub const GRID_INNER: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergent(QuadError),
    #[error("mixture diverges: {0}")]
    Divergent(String),
    #[error("series of length {0} is too short (need at least {MIN_SERIES})")]
    SeriesTooShort(usize),
    #[error("numeric verdict (converges = {numeric}) disagrees with the closed form ({condition})")]
    Inconclusive { numeric: bool, condition: String },
}

impl From<QuadError> for SpectralError {
    fn from(e: QuadError) -> Self {
        match e {
            QuadError::Divergent(s) => SpectralError::Divergent(s),
            other => SpectralError::QuadratureNonConvergent(other),
        }
    }
}

fn sin_half_sq(a: f64) -> f64 {
    let s = (0.5 * a).sin();
    s * s
}

/// `|e(x, a)|²` for one root.
#[inline]
pub(crate) fn modulus_sq(flavor: Flavor, x: f64, a: f64) -> f64 {
    match flavor {
        Flavor::Discrete => x * x + 4.0 * (1.0 - x) * sin_half_sq(a),
        Flavor::Continuous => x * x + a * a,
    }
}

/// `|e(x, a)|` through `hypot`, so tiny `x` does not underflow.
#[inline]
pub(crate) fn modulus(flavor: Flavor, x: f64, a: f64) -> f64 {
    match flavor {
        Flavor::Discrete => x.hypot(2.0 * (1.0 - x).max(0.0).sqrt() * (0.5 * a).sin()),
        Flavor::Continuous => x.hypot(a),
    }
}

/// `e(x, a)` itself: `1 - (1-x) e^{ia}` or `x + ia`.
#[inline]
fn elementary(flavor: Flavor, x: f64, a: f64) -> Complex64 {
    match flavor {
        Flavor::Discrete => {
            // 1 - e^{ia} = -2i sin(a/2) e^{ia/2}
            let half = Complex64::from_polar(1.0, 0.5 * a);
            Complex64::new(0.0, -2.0 * (0.5 * a).sin()) * half + Complex64::from_polar(x, a)
        }
        Flavor::Continuous => Complex64::new(x, a),
    }
}

/// Angular offsets of a group's factors at frequency λ for angle θ.
#[inline]
fn offsets(kind: GroupKind, lambda: f64, theta: f64) -> (f64, Option<f64>) {
    if kind.is_pair() {
        (lambda - theta, Some(lambda + theta))
    } else {
        (lambda + theta, None)
    }
}

/// g-factor of one group: `Π |e(x, a)|^{-2m}`.
#[inline]
fn g_factor(flavor: Flavor, m: i32, x: f64, a1: f64, a2: Option<f64>) -> f64 {
    let mut q = modulus_sq(flavor, x, a1);
    if let Some(a2) = a2 {
        q *= modulus_sq(flavor, x, a2);
    }
    q.powi(-m)
}

/// h-factor of one group: `Π e(x, a)^{-m}`.
#[inline]
fn h_factor(flavor: Flavor, m: i32, x: f64, a1: f64, a2: Option<f64>) -> Complex64 {
    let mut e = elementary(flavor, x, a1);
    if let Some(a2) = a2 {
        e *= elementary(flavor, x, a2);
    }
    e.powi(-m)
}

fn sample_distance(flavor: Flavor, radius: f64) -> f64 {
    match flavor {
        Flavor::Discrete => 1.0 - radius,
        Flavor::Continuous => radius,
    }
}

/// Per-sample spectral density `g(λ, y)`.
pub fn pointwise_g(sample: &PoleSample, lambda: f64, sigma: f64) -> f64 {
    sample.groups.iter().fold(sigma * sigma, |acc, g| {
        let (a1, a2) = offsets(g.kind, lambda, g.angle);
        acc * g_factor(sample.flavor, g.multiplicity as i32, sample_distance(sample.flavor, g.radius), a1, a2)
    })
}

/// Per-sample transfer function `h(λ, y)`; `|h|² = g`.
pub fn pointwise_h(sample: &PoleSample, lambda: f64, sigma: f64) -> Complex64 {
    sample.groups.iter().fold(Complex64::new(sigma, 0.0), |acc, g| {
        let (a1, a2) = offsets(g.kind, lambda, g.angle);
        acc * h_factor(sample.flavor, g.multiplicity as i32, sample_distance(sample.flavor, g.radius), a1, a2)
    })
}

/// Quadrature tolerances for mixtures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureOptions {
    pub inner_rel_tol: f64,
    pub outer_rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for MixtureOptions {
    fn default() -> Self {
        Self {
            inner_rel_tol: 1e-10,
            outer_rel_tol: 1e-9,
            max_intervals: 4000,
        }
    }
}

impl MixtureOptions {
    /// Tighter tolerances and a larger budget (refinement check).
    pub fn refined(self) -> Self {
        Self {
            inner_rel_tol: self.inner_rel_tol / 10.0,
            outer_rel_tol: self.outer_rel_tol / 10.0,
            max_intervals: self.max_intervals * 2,
        }
    }
}

/// Integral of `kernel(x)` against a radial law piece, in the distance
/// variable `x`, with peaks of width `|a|` flagged.
fn radial_integral<T: QuadValue>(
    piece: &PowerLawPiece,
    peaks: &[f64],
    opts: &QuadOptions,
    kernel: impl Fn(f64) -> T,
) -> Result<T, QuadError> {
    let mut total = T::default();
    let d = piece.exponent();
    for side in [Side::Below, Side::Above] {
        let len = piece.side_length(side);
        if len <= 0.0 {
            continue;
        }
        let mut breaks = piece.kink_offsets(side);
        for &p in peaks {
            let p = p.abs();
            for b in [0.1 * p, p, 10.0 * p] {
                if b > 0.0 && b < len {
                    breaks.push(b);
                }
            }
        }
        let est = integrate(
            |at: Locus| {
                let x = at.relative_to(0, 0.0);
                Ok(kernel(x) * (x.powf(d) * piece.regular_part(side, x)))
            },
            0.0,
            len,
            &[SingularPoint::new(0.0, d)],
            &breaks,
            opts,
        )?;
        total = total + est.value;
    }
    Ok(total)
}

/// Mixture of one group's factor over its radial and angular laws. The
/// kernel must blow up like `|e(x, a)|^{-power}` per elementary factor.
pub(crate) fn group_mixture<T, K>(
    group: &PoleGroupSpec,
    flavor: Flavor,
    lambda: f64,
    opts: &MixtureOptions,
    power: f64,
    kernel: K,
) -> Result<T, SpectralError>
where
    T: QuadValue + Send,
    K: Fn(f64, f64, Option<f64>) -> T + Sync,
{
    let kind = group.kind();
    let inner_opts = QuadOptions::default()
        .with_rel_tol(opts.inner_rel_tol)
        .with_max_intervals(opts.max_intervals);
    let outer_opts = QuadOptions::default()
        .with_rel_tol(opts.outer_rel_tol)
        .with_max_intervals(opts.max_intervals);

    let inner = |a1: f64, a2: Option<f64>| -> Result<T, QuadError> {
        match group.radial().piece() {
            None => {
                let x = sample_distance(flavor, group.radial().point_mass().unwrap());
                Ok(kernel(x, a1, a2))
            }
            Some(piece) => {
                let peaks: Vec<f64> = std::iter::once(a1).chain(a2).collect();
                radial_integral(piece, &peaks, &inner_opts, |x| kernel(x, a1, a2))
            }
        }
    };

    let mut total = T::default();
    for comp in group.angular().components() {
        match comp {
            AngularComponent::Atom { weight, at } => {
                let (a1, a2) = offsets(kind, lambda, *at);
                total = total + inner(a1, a2)? * *weight;
            }
            AngularComponent::Diffuse { weight, piece } => {
                let (lo, hi) = piece.support();
                let theta0 = piece.center();
                let beta = -piece.exponent();
                // the inner integral behaves like |a|^{d+1-power} as a → 0
                let inner_exp = match group.radial().d() {
                    Some(d) => (d + 1.0 - power).min(0.0),
                    None => 0.0,
                };
                // index 0: θ⁰; 1: θ = λ (a1 = 0); 2: θ = -λ (a2 = 0); then 2π shifts
                let mut points = vec![
                    SingularPoint::new(theta0, -beta),
                    SingularPoint::new(lambda, inner_exp),
                    SingularPoint::new(-lambda, inner_exp),
                ];
                if flavor == Flavor::Discrete {
                    for s in [-2.0 * PI, 2.0 * PI] {
                        points.push(SingularPoint::new(lambda + s, inner_exp));
                        points.push(SingularPoint::new(-lambda + s, inner_exp));
                    }
                }
                let mut breaks: Vec<f64> = piece.shape().kinks();
                breaks.retain(|k| *k > lo && *k < hi);
                let est = integrate(
                    |at: Locus| {
                        let off0 = at.relative_to(0, theta0);
                        let side = if off0 < 0.0 { Side::Below } else { Side::Above };
                        let dist = off0.abs();
                        if dist == 0.0 {
                            return Ok(T::default());
                        }
                        let density = dist.powf(-beta) * piece.regular_part(side, dist);
                        if density == 0.0 {
                            return Ok(T::default());
                        }
                        // exact offsets when anchored at ±λ
                        let a1 = -at.relative_to(1, lambda);
                        let a2 = at.relative_to(2, -lambda);
                        let (a1, a2) = if kind.is_pair() { (a1, Some(a2)) } else { (lambda + at.x, None) };
                        Ok(inner(a1, a2)? * density)
                    },
                    lo,
                    hi,
                    &points,
                    &breaks,
                    &outer_opts,
                )?;
                total = total + est.value * *weight;
            }
        }
    }
    Ok(total)
}

/// `F(λ) = σ² Π_k ∫∫ g_k dR_k dQ_k` by quadrature.
pub fn mixture_f_at(model: &ModelSpec, lambda: f64, opts: &MixtureOptions) -> Result<f64, SpectralError> {
    let mut acc = model.sigma * model.sigma;
    for g in &model.groups {
        let m = g.multiplicity() as i32;
        let flavor = model.flavor;
        acc *= group_mixture(g, flavor, lambda, opts, 2.0 * m as f64, |x, a1, a2| g_factor(flavor, m, x, a1, a2))?;
    }
    Ok(acc)
}

/// `H(λ) = σ Π_k ∫∫ h_k dR_k dQ_k` by quadrature.
pub fn mixture_h_at(model: &ModelSpec, lambda: f64, opts: &MixtureOptions) -> Result<Complex64, SpectralError> {
    let mut acc = Complex64::new(model.sigma, 0.0);
    for g in &model.groups {
        let m = g.multiplicity() as i32;
        let flavor = model.flavor;
        acc *= group_mixture(g, flavor, lambda, opts, m as f64, |x, a1, a2| h_factor(flavor, m, x, a1, a2))?;
    }
    Ok(acc)
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate<T> {
    pub value: T,
    pub stderr: f64,
}

/// Parameter draws shared by every frequency of a Monte Carlo curve.
pub fn draw_samples(model: &ModelSpec, draws: usize, seed: u64) -> Vec<PoleSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..draws).map(|_| model.sample(&mut rng)).collect()
}

pub fn mc_f_at(model: &ModelSpec, samples: &[PoleSample], lambda: f64) -> McEstimate<f64> {
    let n = samples.len() as f64;
    let (mut s, mut s2) = (0.0, 0.0);
    for y in samples {
        let v = pointwise_g(y, lambda, model.sigma);
        s += v;
        s2 += v * v;
    }
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    McEstimate {
        value: mean,
        stderr: (var / n).sqrt(),
    }
}

pub fn mc_h_at(model: &ModelSpec, samples: &[PoleSample], lambda: f64) -> McEstimate<Complex64> {
    let n = samples.len() as f64;
    let mut s = Complex64::new(0.0, 0.0);
    let mut s2 = 0.0;
    for y in samples {
        let v = pointwise_h(y, lambda, model.sigma);
        s += v;
        s2 += v.norm_sqr();
    }
    let mean = s / n;
    let var = (s2 / n - mean.norm_sqr()).max(0.0) * n / (n - 1.0).max(1.0);
    McEstimate {
        value: mean,
        stderr: (var / n).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    Quadrature,
    MonteCarlo { draws: usize, seed: u64 },
}

impl Default for Method {
    fn default() -> Self {
        Method::Quadrature
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    F,
    H,
    H2,
    Periodogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "data", rename_all = "kebab-case")]
pub enum CurveValues {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub flavor: Flavor,
    pub domain: (f64, f64),
    pub method: String,
    /// Quadrature tolerance level (0 for non-quadrature curves).
    pub refinement: u32,
    pub singular_frequencies: Vec<f64>,
}

/// Sampled curve on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralCurve {
    pub kind: CurveKind,
    pub grid: Vec<f64>,
    pub values: CurveValues,
    #[serde(default)]
    pub stderr: Option<Vec<f64>>,
    pub meta: CurveMeta,
}

impl SpectralCurve {
    pub fn real_values(&self) -> Option<&[f64]> {
        match &self.values {
            CurveValues::Real(v) => Some(v),
            CurveValues::Complex(_) => None,
        }
    }

    /// `|H|²` from an H curve; F and periodograms are returned unchanged.
    pub fn magnitude_squared(&self) -> SpectralCurve {
        match &self.values {
            CurveValues::Real(_) => self.clone(),
            CurveValues::Complex(v) => SpectralCurve {
                kind: CurveKind::H2,
                grid: self.grid.clone(),
                values: CurveValues::Real(v.iter().map(|h| h.norm_sqr()).collect()),
                stderr: None,
                meta: self.meta.clone(),
            },
        }
    }

    /// CSV with columns `frequency,value[,stderr]` or `frequency,re,im[,stderr]`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let err = self.stderr.as_deref();
        match &self.values {
            CurveValues::Real(v) => {
                s.push_str(if err.is_some() { "frequency,value,stderr\n" } else { "frequency,value\n" });
                for (i, (f, y)) in self.grid.iter().zip(v).enumerate() {
                    let _ = write!(s, "{f:.16e},{y:.16e}");
                    if let Some(e) = err {
                        let _ = write!(s, ",{:.16e}", e[i]);
                    }
                    s.push('\n');
                }
            }
            CurveValues::Complex(v) => {
                s.push_str(if err.is_some() { "frequency,re,im,stderr\n" } else { "frequency,re,im\n" });
                for (i, (f, y)) in self.grid.iter().zip(v).enumerate() {
                    let _ = write!(s, "{f:.16e},{:.16e},{:.16e}", y.re, y.im);
                    if let Some(e) = err {
                        let _ = write!(s, ",{:.16e}", e[i]);
                    }
                    s.push('\n');
                }
            }
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("curves serialize")
    }
}

/// Symmetric grid on the model's domain with `nodes` points, about half
/// uniform and half log-clustered down to `1e-5` of each singular frequency.
/// Nodes never coincide with a singular frequency.
pub fn frequency_grid(model: &ModelSpec, nodes: usize) -> Vec<f64> {
    let w = model.frequency_window();
    let sing = model.singular_frequencies();
    grid_with(w, &sing, nodes)
}

/// Grid builder behind [`frequency_grid`].
pub fn grid_with(w: f64, singular: &[f64], nodes: usize) -> Vec<f64> {
    let half = (nodes / 2).max(4);
    let uniform = half / 2;
    let mut pos: Vec<f64> = (1..=uniform).map(|i| w * i as f64 / uniform as f64).collect();
    let cluster_total = half - uniform;
    let sites: Vec<f64> = singular.iter().copied().filter(|s| *s >= 0.0 && *s <= w).collect();
    if !sites.is_empty() {
        let per_side = (cluster_total / (2 * sites.len())).max(2);
        let outer = 0.05 * w;
        let ratio = (outer / GRID_INNER).ln() / (per_side - 1) as f64;
        for &s in &sites {
            for k in 0..per_side {
                let off = GRID_INNER * (ratio * k as f64).exp();
                for x in [s - off, s + off] {
                    if x > 0.0 && x <= w {
                        pos.push(x);
                    }
                }
            }
        }
    }
    pos.sort_by(f64::total_cmp);
    pos.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * w);
    // keep clear of singular frequencies
    let guard = 1e-12 * w.max(1.0);
    pos.retain(|x| sites.iter().all(|s| (x - s).abs() > guard));
    let zero_singular = sites.iter().any(|s| *s == 0.0);
    let mut grid: Vec<f64> = pos.iter().rev().map(|x| -x).collect();
    if !zero_singular {
        grid.push(0.0);
    }
    grid.extend(pos.iter().copied());
    // (-π, π]: drop -π in discrete time
    if (w - PI).abs() < 1e-15 && grid.first().map_or(false, |x| (*x + PI).abs() < 1e-15) {
        grid.remove(0);
    }
    grid
}

fn curve_meta(model: &ModelSpec, grid: &[f64], method: &Method, refinement: u32) -> CurveMeta {
    let w = model.frequency_window();
    CurveMeta {
        flavor: model.flavor,
        domain: (grid.first().copied().unwrap_or(-w), grid.last().copied().unwrap_or(w)),
        method: match method {
            Method::Quadrature => "quadrature".into(),
            Method::MonteCarlo { draws, seed } => format!("monte-carlo(draws={draws}, seed={seed})"),
        },
        refinement,
        singular_frequencies: model.singular_frequencies(),
    }
}

/// Mixture spectral density on a grid.
pub fn mixture_f(
    model: &ModelSpec,
    grid: &[f64],
    method: &Method,
    opts: &MixtureOptions,
) -> Result<SpectralCurve, SpectralError> {
    let (values, stderr) = match method {
        Method::Quadrature => {
            let v = grid
                .par_iter()
                .map(|&l| mixture_f_at(model, l, opts))
                .collect::<Result<Vec<_>, _>>()?;
            (v, None)
        }
        Method::MonteCarlo { draws, seed } => {
            let samples = draw_samples(model, *draws, *seed);
            let est: Vec<_> = grid.par_iter().map(|&l| mc_f_at(model, &samples, l)).collect();
            (est.iter().map(|e| e.value).collect(), Some(est.iter().map(|e| e.stderr).collect()))
        }
    };
    Ok(SpectralCurve {
        kind: CurveKind::F,
        grid: grid.to_vec(),
        values: CurveValues::Real(values),
        stderr,
        meta: curve_meta(model, grid, method, refinement_level(opts)),
    })
}

/// Mixture transfer function on a grid.
pub fn mixture_h(
    model: &ModelSpec,
    grid: &[f64],
    method: &Method,
    opts: &MixtureOptions,
) -> Result<SpectralCurve, SpectralError> {
    let (values, stderr) = match method {
        Method::Quadrature => {
            let v = grid
                .par_iter()
                .map(|&l| mixture_h_at(model, l, opts))
                .collect::<Result<Vec<_>, _>>()?;
            (v, None)
        }
        Method::MonteCarlo { draws, seed } => {
            let samples = draw_samples(model, *draws, *seed);
            let est: Vec<_> = grid.par_iter().map(|&l| mc_h_at(model, &samples, l)).collect();
            (est.iter().map(|e| e.value).collect(), Some(est.iter().map(|e| e.stderr).collect()))
        }
    };
    Ok(SpectralCurve {
        kind: CurveKind::H,
        grid: grid.to_vec(),
        values: CurveValues::Complex(values),
        stderr,
        meta: curve_meta(model, grid, method, refinement_level(opts)),
    })
}

fn refinement_level(opts: &MixtureOptions) -> u32 {
    (-opts.outer_rel_tol.log10()).round().max(0.0) as u32
}

/// Which limit spectrum an existence check integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Which {
    F,
    H2,
}

impl Which {
    pub fn regime(self) -> InnovationRegime {
        match self {
            Which::F => InnovationRegime::Independent,
            Which::H2 => InnovationRegime::Common,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistenceResult {
    pub converges: bool,
    /// `∫ F` over the whole domain when finite.
    pub value: Option<f64>,
    /// Closed-form verdict, when one applies.
    pub closed_form: Option<bool>,
    pub condition: String,
    /// Annulus sums `(j, S_j)` around each singular frequency.
    pub annuli: Vec<(f64, Vec<(u32, f64)>)>,
}

/// Consecutive ratios needed to call divergence.
const RATIO_RUN: usize = 8;
const RATIO_LIMIT: f64 = 0.999;
const MAX_ANNULUS: u32 = 40;

/// Numerically decides whether the limit spectrum is integrable by summing
/// it over dyadic annuli `2^{-j-1} < |λ - λ_s| < 2^{-j}` around each
/// predicted singular frequency. Divergence is declared when the annulus
/// sums fail to shrink (`S_{j+1}/S_j ≥ 0.999` eight times in a row before
/// `j = 40`), or when the spectrum is itself infinite at some frequency.
pub fn existence_integral(model: &ModelSpec, which: Which) -> Result<ExistenceResult, SpectralError> {
    existence_integral_with(model, which, &MixtureOptions::default())
}

pub fn existence_integral_with(
    model: &ModelSpec,
    which: Which,
    opts: &MixtureOptions,
) -> Result<ExistenceResult, SpectralError> {
    let report = classify_model(model, Some(which.regime()));
    let closed_form = match report.existence {
        Existence::Exists => Some(true),
        Existence::DoesNotExist => Some(false),
        Existence::NumericCheckRequired => None,
    };
    let eval = |l: f64| -> Result<f64, SpectralError> {
        match which {
            Which::F => mixture_f_at(model, l, opts),
            Which::H2 => mixture_h_at(model, l, opts).map(|h| h.norm_sqr()),
        }
    };
    let numeric = numeric_existence(model, &eval);
    let (converges, value, annuli) = match numeric {
        Ok(r) => r,
        Err(SpectralError::Divergent(_)) => (false, None, Vec::new()),
        Err(e) => return Err(e),
    };
    if let Some(t) = closed_form {
        if t != converges {
            return Err(SpectralError::Inconclusive {
                numeric: converges,
                condition: report.condition,
            });
        }
    }
    Ok(ExistenceResult {
        converges,
        value,
        closed_form,
        condition: report.condition,
        annuli,
    })
}

type Annuli = Vec<(f64, Vec<(u32, f64)>)>;

fn numeric_existence(
    model: &ModelSpec,
    eval: &(dyn Fn(f64) -> Result<f64, SpectralError> + Sync),
) -> Result<(bool, Option<f64>, Annuli), SpectralError> {
    let w = model.frequency_window();
    let sing = model.singular_frequencies();
    let smooth = QuadOptions::default().with_rel_tol(1e-7).with_max_intervals(400);

    let integrate_plain = |a: f64, b: f64| -> Result<f64, SpectralError> {
        let mut err = None;
        let est = integrate_smooth(
            |l: f64| match eval(l) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            },
            a,
            b,
            &smooth,
        )?;
        match err {
            Some(e) => Err(e),
            None => Ok(est.value),
        }
    };

    // Intervals of the positive half-line around each singular point.
    let mut total = 0.0;
    let mut annuli = Vec::new();
    let mut excluded: Vec<(f64, f64)> = Vec::new();
    for (i, &s) in sing.iter().enumerate() {
        let left_gap = if i == 0 { s } else { s - sing[i - 1] };
        let right_gap = if i + 1 < sing.len() { sing[i + 1] - s } else { w - s };
        let mut sums = Vec::new();
        for (dir, gap) in [(-1.0, left_gap), (1.0, right_gap)] {
            if gap <= 0.0 {
                continue;
            }
            // first annulus fits inside half the gap
            let j0 = (2.0 / gap).log2().ceil().max(0.0) as u32;
            let reach = 0.5f64.powi(j0 as i32);
            excluded.push(if dir < 0.0 { (s - reach, s) } else { (s, s + reach) });
            let mut run = 0;
            let mut prev: Option<f64> = None;
            let mut diverged = false;
            let mut last = 0.0;
            let mut ratio = 0.0;
            for j in j0..=MAX_ANNULUS {
                let outer = 0.5f64.powi(j as i32);
                let (a, b) = if dir < 0.0 { (s - outer, s - 0.5 * outer) } else { (s + 0.5 * outer, s + outer) };
                let sj = integrate_plain(a, b)?;
                sums.push((j, sj));
                total += sj;
                if let Some(p) = prev {
                    ratio = if p > 0.0 { sj / p } else { 0.0 };
                    if ratio >= RATIO_LIMIT {
                        run += 1;
                        if run >= RATIO_RUN {
                            diverged = true;
                            break;
                        }
                    } else {
                        run = 0;
                    }
                }
                prev = Some(sj);
                last = sj;
            }
            if diverged {
                annuli.push((s, sums));
                return Ok((false, None, annuli));
            }
            // geometric tail below the last annulus
            if ratio > 0.0 && ratio < 1.0 {
                total += last * ratio / (1.0 - ratio);
            }
        }
        annuli.push((s, sums));
    }

    // Regular remainder of [0, w].
    excluded.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cursor = 0.0;
    for (a, b) in excluded.iter().copied().chain(std::iter::once((w, w))) {
        if a > cursor {
            total += integrate_plain(cursor, a)?;
        }
        cursor = cursor.max(b);
    }

    if model.flavor == Flavor::Continuous {
        // tail decays like λ^{-2p}
        let decay = 2.0 * model.order() as f64;
        let mut err = None;
        let tail = integrate_tail(
            |l: f64| match eval(l) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            },
            w,
            decay,
            &smooth,
        )?;
        if let Some(e) = err {
            return Err(e);
        }
        total += tail.value;
    }
    Ok((true, Some(2.0 * total), annuli))
}

/// Smoothed periodogram options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodogramOptions {
    /// Daniell half-width in Fourier frequencies; `None` uses `⌊√T⌋`.
    pub half_width: Option<usize>,
    /// Sampling step (1 for discrete series); frequencies are divided by it.
    pub step: f64,
}

impl Default for PeriodogramOptions {
    fn default() -> Self {
        Self { half_width: None, step: 1.0 }
    }
}

/// Daniell-smoothed periodogram at the positive Fourier frequencies
/// `2πj/(T·step)`, `j = 1..T/2`. Unit white noise gives `1/(2π)`; for a
/// sampled continuous process the values estimate the spectral density of
/// the process (in units of `1/step`).
pub fn periodogram(series: &[f64], opts: &PeriodogramOptions) -> Result<SpectralCurve, SpectralError> {
    let n = series.len();
    if n < MIN_SERIES {
        return Err(SpectralError::SeriesTooShort(n));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = series.iter().map(|&x| Complex64::new(x - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let raw: Vec<f64> = (1..=half)
        .map(|j| buf[j].norm_sqr() / (2.0 * PI * n as f64) * opts.step)
        .collect();
    // Daniell average with reflection at both ends
    let hw = opts.half_width.unwrap_or((n as f64).sqrt() as usize).min(half / 2);
    let m = hw as isize;
    let len = raw.len() as isize;
    let reflect = |i: isize| -> usize {
        let mut i = i;
        if i < 0 {
            i = -i - 1;
        }
        if i >= len {
            i = 2 * len - i - 1;
        }
        i.clamp(0, len - 1) as usize
    };
    let smooth: Vec<f64> = (0..len)
        .map(|i| (i - m..=i + m).map(|k| raw[reflect(k)]).sum::<f64>() / (2 * m + 1) as f64)
        .collect();
    let grid: Vec<f64> = (1..=half).map(|j| 2.0 * PI * j as f64 / (n as f64 * opts.step)).collect();
    Ok(SpectralCurve {
        kind: CurveKind::Periodogram,
        meta: CurveMeta {
            flavor: if opts.step == 1.0 { Flavor::Discrete } else { Flavor::Continuous },
            domain: (grid[0], *grid.last().unwrap()),
            method: format!("daniell(half_width={hw})"),
            refinement: 0,
            singular_frequencies: Vec::new(),
        },
        grid,
        values: CurveValues::Real(smooth),
        stderr: None,
    })
}

/// Relative smoothed-L¹ distance `Σ|P - f| / Σ f` between a periodogram and
/// a target density (already on the periodogram's scale) over `band`.
pub fn smoothed_l1(curve: &SpectralCurve, target: impl Fn(f64) -> f64, band: (f64, f64)) -> f64 {
    let values = curve.real_values().expect("real curve");
    let (mut num, mut den) = (0.0, 0.0);
    for (&l, &p) in curve.grid.iter().zip(values) {
        if l >= band.0 && l <= band.1 {
            let f = target(l);
            num += (p - f).abs();
            den += f.abs();
        }
    }
    num / den
}

/// Scale-free distance: both curves normalised to unit mean over `band`
/// before the relative L¹ comparison.
pub fn shape_distance(curve: &SpectralCurve, target: impl Fn(f64) -> f64, band: (f64, f64)) -> f64 {
    let values = curve.real_values().expect("real curve");
    let pts: Vec<(f64, f64)> = curve
        .grid
        .iter()
        .zip(values)
        .filter(|(l, _)| **l >= band.0 && **l <= band.1)
        .map(|(&l, &p)| (p, target(l)))
        .collect();
    let mp = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let mf = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    pts.iter().map(|(p, f)| (p / mp - f / mf).abs()).sum::<f64>() / pts.len() as f64
}
