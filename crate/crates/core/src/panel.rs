//! Panels of elementary AR(p) / OU(p) processes and their normalised
//! partial aggregation `X^N = B_N^{-1} Σ Z^i`.
//!
//! Reproducibility: member `i` draws its poles (and, under independent
//! innovations, its noise) from `ChaCha8Rng` stream `i` of the run seed.
//! Shared noise uses dedicated streams. Members are reduced in fixed chunks
//! of [`CHUNK`] in index order, so the aggregate is bit-identical for any
//! thread count.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::classify_model;
use crate::laws::Flavor;
use crate::model::{ChiSpec, InnovationScheme, ModelConfig, ModelSpec};
use crate::poles::{continuous_polynomial, expand_polynomial, ArCoefficients, PoleError, PoleSample};

/// Members per deterministic reduction chunk.
pub const CHUNK: usize = 64;
/// Burn-in ceiling, in steps.
pub const BURN_IN_CAP: usize = 1_000_000;
/// Residual transient left by the default burn-in.
pub const BURN_IN_TOL: f64 = 1e-8;
/// Legendre modes of the Brownian increment per OU step.
pub const OU_MODES: usize = 12;

const COMMON_STREAM: u64 = u64::MAX - 1;
const INTERACTIVE_STREAM: u64 = u64::MAX - 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PanelError {
    #[error("interaction sequence is not positive semidefinite at N = {n}: {detail}")]
    NotPSD { n: usize, detail: String },
    #[error("step {step} exceeds the aliasing guard 0.1/max|y| = {limit}")]
    StepTooCoarse { step: f64, limit: f64 },
    #[error("aggregate does not exist ({0}); pass force to simulate anyway")]
    NotExistent(String),
    #[error("invalid panel size: {0}")]
    InvalidSize(String),
    #[error(transparent)]
    Pole(#[from] PoleError),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for PanelError {
    fn from(e: std::io::Error) -> Self {
        PanelError::Io(e.to_string())
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Levinson-Durbin on `r[0..n]`. Returns `Ok(true)` when the Toeplitz matrix
/// is positive definite, `Ok(false)` when the recursion degenerates (it may
/// still be semidefinite), `Err` when it is certainly indefinite.
fn levinson_definite(r: &[f64]) -> Result<bool, String> {
    let n = r.len();
    if r[0] <= 0.0 {
        return Err(format!("χ(0) = {} is not positive", r[0]));
    }
    let tol = 1e-12 * r[0];
    let mut a: Vec<f64> = Vec::with_capacity(n);
    let mut err = r[0];
    for k in 1..n {
        let acc = r[k] - a.iter().enumerate().map(|(j, aj)| aj * r[k - 1 - j]).sum::<f64>();
        let refl = acc / err;
        let next = err * (1.0 - refl * refl);
        if next < -tol {
            return Err(format!("prediction error turns negative at order {k} (reflection {refl:.6})"));
        }
        if next <= tol {
            return Ok(false);
        }
        let prev = a.clone();
        for j in 0..a.len() {
            a[j] = prev[j] - refl * prev[a.len() - 1 - j];
        }
        a.push(refl);
        err = next;
    }
    Ok(true)
}

enum ToeplitzKind {
    Trivial,
    Circulant { sqrt_eig: Vec<f64>, fft: Arc<dyn Fft<f64>> },
    Dense(DMatrix<f64>),
}

/// Draws N-vectors with covariance `Toeplitz(χ(0..N))`.
pub struct ToeplitzSampler {
    n: usize,
    kind: ToeplitzKind,
}

impl std::fmt::Debug for ToeplitzSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.kind {
            ToeplitzKind::Trivial => "trivial",
            ToeplitzKind::Circulant { .. } => "circulant",
            ToeplitzKind::Dense(_) => "dense",
        };
        write!(f, "ToeplitzSampler {{ n: {}, kind: {kind} }}", self.n)
    }
}

impl ToeplitzSampler {
    pub fn new(chi: &ChiSpec, n: usize) -> Result<Self, PanelError> {
        if n == 0 {
            return Err(PanelError::InvalidSize("N must be positive".into()));
        }
        let r: Vec<f64> = (0..n).map(|j| chi.chi(j)).collect();
        let definite = levinson_definite(&r).map_err(|detail| PanelError::NotPSD { n, detail })?;
        if n == 1 {
            return Ok(Self { n, kind: ToeplitzKind::Trivial });
        }
        // circulant embedding of size 2(N-1)
        let m = 2 * (n - 1);
        let mut c: Vec<Complex64> = (0..m).map(|j| Complex64::new(r[j.min(m - j)], 0.0)).collect();
        let fft = FftPlanner::new().plan_fft_forward(m);
        fft.process(&mut c);
        let max = c.iter().map(|z| z.re).fold(f64::MIN, f64::max);
        let min = c.iter().map(|z| z.re).fold(f64::MAX, f64::min);
        if min >= -1e-10 * max {
            let sqrt_eig = c.iter().map(|z| (z.re.max(0.0) / m as f64).sqrt()).collect();
            return Ok(Self {
                n,
                kind: ToeplitzKind::Circulant { sqrt_eig, fft },
            });
        }
        // Dense factor: Cholesky when definite, eigen square root otherwise.
        let t = DMatrix::from_fn(n, n, |i, j| r[i.abs_diff(j)]);
        if definite {
            if let Some(ch) = t.clone().cholesky() {
                return Ok(Self {
                    n,
                    kind: ToeplitzKind::Dense(ch.l()),
                });
            }
        }
        let eig = t.symmetric_eigen();
        let lmin = eig.eigenvalues.min();
        if lmin < -1e-10 * eig.eigenvalues.max() {
            return Err(PanelError::NotPSD {
                n,
                detail: format!("smallest eigenvalue {lmin:.3e}"),
            });
        }
        let root = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
        Ok(Self {
            n,
            kind: ToeplitzKind::Dense(&eig.eigenvectors * root),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// Covariance of the draws, reconstructed from the factorisation.
    pub fn implied_covariance(&self) -> DMatrix<f64> {
        match &self.kind {
            ToeplitzKind::Trivial => DMatrix::from_element(1, 1, 1.0),
            ToeplitzKind::Circulant { sqrt_eig, .. } => {
                let m = sqrt_eig.len();
                let mut c: Vec<Complex64> = sqrt_eig.iter().map(|s| Complex64::new(s * s, 0.0)).collect();
                FftPlanner::new().plan_fft_inverse(m).process(&mut c);
                DMatrix::from_fn(self.n, self.n, |i, j| c[i.abs_diff(j)].re)
            }
            ToeplitzKind::Dense(l) => l * l.transpose(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Fills two independent draws.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R, a: &mut [f64], b: &mut [f64]) {
        match &self.kind {
            ToeplitzKind::Trivial => {
                a[0] = normal(rng);
                b[0] = normal(rng);
            }
            ToeplitzKind::Circulant { sqrt_eig, fft } => {
                let mut z: Vec<Complex64> = sqrt_eig
                    .iter()
                    .map(|s| Complex64::new(normal(rng), normal(rng)) * *s)
                    .collect();
                fft.process(&mut z);
                for i in 0..self.n {
                    a[i] = z[i].re;
                    b[i] = z[i].im;
                }
            }
            ToeplitzKind::Dense(l) => {
                for out in [a, b] {
                    let z = DVector::from_fn(self.n, |_, _| normal(rng));
                    let y = l * z;
                    out.copy_from_slice(y.as_slice());
                }
            }
        }
    }
}

/// Streams of N-vectors with the scheme's cross-sectional covariance.
struct NoiseSource {
    sampler: Option<ToeplitzSampler>,
    spare: Option<Vec<f64>>,
}

impl NoiseSource {
    fn next<R: Rng + ?Sized>(&mut self, rng: &mut R, out: &mut [f64]) {
        if let Some(v) = self.spare.take() {
            out.copy_from_slice(&v);
            return;
        }
        match &self.sampler {
            Some(s) => {
                let mut b = vec![0.0; out.len()];
                s.sample_pair(rng, out, &mut b);
                self.spare = Some(b);
            }
            None => out.iter_mut().for_each(|x| *x = normal(rng)),
        }
    }
}

/// N×T Gaussian innovation array. Rows are members.
pub fn generate_innovations<R: Rng + ?Sized>(
    scheme: &InnovationScheme,
    n: usize,
    t: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>, PanelError> {
    if n == 0 || t == 0 {
        return Err(PanelError::InvalidSize(format!("N = {n}, T = {t}")));
    }
    match scheme {
        InnovationScheme::Independent => Ok((0..n).map(|_| (0..t).map(|_| normal(rng)).collect()).collect()),
        InnovationScheme::Common => {
            let row: Vec<f64> = (0..t).map(|_| normal(rng)).collect();
            Ok(vec![row; n])
        }
        InnovationScheme::Interactive { chi, .. } => {
            let mut src = NoiseSource {
                sampler: Some(ToeplitzSampler::new(chi, n)?),
                spare: None,
            };
            let mut rows = vec![vec![0.0; t]; n];
            let mut col = vec![0.0; n];
            for s in 0..t {
                src.next(rng, &mut col);
                for i in 0..n {
                    rows[i][s] = col[i];
                }
            }
            Ok(rows)
        }
    }
}

/// Recursive AR filter `Z_t = -Σ a_k Z_{t-k} + σ ε_t`.
#[derive(Debug, Clone)]
pub struct ArFilter {
    a: Vec<f64>,
    sigma: f64,
    /// Most recent value first.
    hist: Vec<f64>,
}

impl ArFilter {
    pub fn new(coeffs: &ArCoefficients) -> Self {
        Self {
            a: coeffs.a.clone(),
            sigma: coeffs.sigma,
            hist: vec![0.0; coeffs.a.len()],
        }
    }

    #[inline]
    pub fn step(&mut self, eps: f64) -> f64 {
        let mut z = self.sigma * eps;
        for (ak, zk) in self.a.iter().zip(&self.hist) {
            z -= ak * zk;
        }
        if !self.hist.is_empty() {
            self.hist.rotate_right(1);
            self.hist[0] = z;
        }
        z
    }
}

/// Runs the AR recursion over `innovations` from a zero state and drops the
/// first `burn_in` values.
pub fn simulate_ar_member(coeffs: &ArCoefficients, innovations: &[f64], burn_in: usize) -> Vec<f64> {
    let mut f = ArFilter::new(coeffs);
    innovations
        .iter()
        .enumerate()
        .filter_map(|(t, &e)| {
            let z = f.step(e);
            (t >= burn_in).then_some(z)
        })
        .collect()
}

/// Default discrete burn-in `⌈ln 1e-8 / ln max|y|⌉`, capped.
pub fn ar_burn_in(sample: &PoleSample) -> (usize, bool) {
    let rho = sample.max_modulus();
    if rho <= 0.0 {
        return (0, false);
    }
    let b = (BURN_IN_TOL.ln() / rho.ln()).ceil();
    if b > BURN_IN_CAP as f64 {
        (BURN_IN_CAP, true)
    } else {
        (b as usize, false)
    }
}

/// Default continuous burn-in in steps: the slowest mode decays by 1e-8.
pub fn ou_burn_in(sample: &PoleSample, step: f64) -> (usize, bool) {
    let r = sample.groups.iter().map(|g| g.radius).fold(f64::INFINITY, f64::min);
    let b = (-BURN_IN_TOL.ln() / (r * step)).ceil();
    if !b.is_finite() || b > BURN_IN_CAP as f64 {
        (BURN_IN_CAP, true)
    } else {
        (b as usize, false)
    }
}

/// Largest `|y_k|` of a continuous sample, `sqrt(r² + τ²)`.
pub fn continuous_max_modulus(sample: &PoleSample) -> f64 {
    sample.roots().iter().map(|(z, _)| z.norm()).fold(0.0, f64::max)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

fn legendre_values(kmax: usize, x: f64) -> Vec<f64> {
    let mut v = vec![1.0, x];
    for k in 2..kmax {
        let p = ((2 * k - 1) as f64 * x * v[k - 1] - (k - 1) as f64 * v[k - 2]) / k as f64;
        v.push(p);
    }
    v.truncate(kmax);
    v
}

/// Exact one-step discretisation of the companion state-space system of an
/// OU(p) sample with state `(Z, Z', …, Z^{(p-1)})`.
///
/// The step noise `∫₀ʰ e^{Au} b dW` is expanded on the first [`OU_MODES`]
/// orthonormal Legendre modes of the Brownian increment, so members driven
/// by the same Brownian motion share the same mode coefficients. The
/// dropped modes carry less than `1e-12` of the step covariance for steps
/// within the aliasing guard.
#[derive(Debug, Clone)]
pub struct OuDiscretization {
    pub phi: DMatrix<f64>,
    /// Noise loading of each Legendre mode.
    pub modes: Vec<DVector<f64>>,
    pub step: f64,
}

impl OuDiscretization {
    pub fn new(sample: &PoleSample, sigma: f64, step: f64) -> Result<Self, PanelError> {
        let limit = 0.1 / continuous_max_modulus(sample);
        if step > limit {
            return Err(PanelError::StepTooCoarse { step, limit });
        }
        let (a, b) = companion(sample, sigma)?;
        let phi = (&a * step).exp();
        let rule = gauss_legendre(24);
        let mut modes = vec![DVector::zeros(a.nrows()); OU_MODES];
        for &(x, w) in &rule {
            let u = 0.5 * step * (x + 1.0);
            let v = (&a * u).exp() * &b;
            let p = legendre_values(OU_MODES, x);
            for k in 0..OU_MODES {
                // orthonormal mode sqrt((2k+1)/h) P_k, times du = h/2 dx
                let c = ((2 * k + 1) as f64 / step).sqrt() * p[k] * 0.5 * step * w;
                modes[k] += &v * c;
            }
        }
        Ok(Self { phi, modes, step })
    }

    /// Step covariance `∫₀ʰ e^{Au} b bᵀ e^{Aᵀu} du` by Van Loan's block
    /// exponential (independent of the mode expansion).
    pub fn exact_covariance(sample: &PoleSample, sigma: f64, step: f64) -> Result<DMatrix<f64>, PanelError> {
        let (a, b) = companion(sample, sigma)?;
        let p = a.nrows();
        let mut m = DMatrix::zeros(2 * p, 2 * p);
        m.view_mut((0, 0), (p, p)).copy_from(&(-&a));
        m.view_mut((0, p), (p, p)).copy_from(&(&b * b.transpose()));
        m.view_mut((p, p), (p, p)).copy_from(&a.transpose());
        let e = (m * step).exp();
        let phi_t = e.view((p, p), (p, p)).clone_owned();
        let g = e.view((0, p), (p, p)).clone_owned();
        Ok(phi_t.transpose() * g)
    }

    /// Covariance implied by the retained modes.
    pub fn mode_covariance(&self) -> DMatrix<f64> {
        let p = self.phi.nrows();
        self.modes
            .iter()
            .fold(DMatrix::zeros(p, p), |acc, v| acc + v * v.transpose())
    }
}

fn companion(sample: &PoleSample, sigma: f64) -> Result<(DMatrix<f64>, DVector<f64>), PanelError> {
    let c = continuous_polynomial(sample)?;
    let p = c.len() - 1;
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..p {
        a[(p - 1, j)] = -c[j];
    }
    let mut b = DVector::zeros(p);
    b[p - 1] = sigma;
    Ok((a, b))
}

/// OU member state.
#[derive(Debug, Clone)]
pub struct OuFilter {
    disc: OuDiscretization,
    state: DVector<f64>,
}

impl OuFilter {
    pub fn new(disc: OuDiscretization) -> Self {
        let p = disc.phi.nrows();
        Self {
            disc,
            state: DVector::zeros(p),
        }
    }

    /// Advances one step given the [`OU_MODES`] mode coefficients.
    pub fn step(&mut self, modes: &[f64]) -> f64 {
        let mut next = &self.disc.phi * &self.state;
        for (v, z) in self.disc.modes.iter().zip(modes) {
            next.axpy(*z, v, 1.0);
        }
        self.state = next;
        self.state[0]
    }
}

/// Path of one OU member on the step grid: `count` values after `burn_in`
/// steps from a zero state.
pub fn simulate_ou_member<R: Rng + ?Sized>(
    sample: &PoleSample,
    sigma: f64,
    step: f64,
    count: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<Vec<f64>, PanelError> {
    let mut f = OuFilter::new(OuDiscretization::new(sample, sigma, step)?);
    let mut z = [0.0; OU_MODES];
    let mut out = Vec::with_capacity(count);
    for t in 0..burn_in + count {
        z.iter_mut().for_each(|x| *x = normal(rng));
        let v = f.step(&z);
        if t >= burn_in {
            out.push(v);
        }
    }
    Ok(out)
}

enum Member {
    Ar(ArFilter),
    Ou(OuFilter),
}

impl Member {
    fn step(&mut self, noise: &[f64]) -> f64 {
        match self {
            Member::Ar(f) => f.step(noise[0]),
            Member::Ou(f) => f.step(noise),
        }
    }
}

/// Options of [`aggregate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelOptions {
    /// Simulate even when the limit does not exist.
    #[serde(default)]
    pub force: bool,
    /// Keep every member path (N×T memory).
    #[serde(default)]
    pub keep_members: bool,
    /// Sampling step of continuous models.
    #[serde(default)]
    pub step: Option<f64>,
    /// Fixed burn-in instead of the per-member default.
    #[serde(default)]
    pub burn_in: Option<usize>,
}

impl Default for PanelOptions {
    fn default() -> Self {
        Self {
            force: false,
            keep_members: false,
            step: None,
            burn_in: None,
        }
    }
}

/// Result of one panel simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRun {
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    pub scheme: InnovationScheme,
    pub normalization: f64,
    pub step: Option<f64>,
    pub samples: Vec<PoleSample>,
    pub burn_in: Vec<usize>,
    pub aggregate: Vec<f64>,
    #[serde(skip)]
    pub members: Option<Vec<Vec<f64>>>,
    pub warnings: Vec<String>,
}

/// Weights `(a, b)` of the expected aggregate spectrum `a F + b |H|²` for a
/// panel of `n` members: `a = N / B_N²` and `b = (S_N - N) / B_N²`, where
/// `S_N = Σ_{i,j ≤ N} Cov(ε^i, ε^j)`.
pub fn spectrum_weights(scheme: &InnovationScheme, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let s = match scheme {
        InnovationScheme::Independent => nf,
        InnovationScheme::Common => nf * nf,
        InnovationScheme::Interactive { chi, .. } => chi.total_correlation(n),
    };
    let b2 = scheme.normalization(n).powi(2);
    (nf / b2, (s - nf) / b2)
}

struct Prepared {
    members: Vec<(PoleSample, Member, usize)>,
    noise_dim: usize,
    warnings: Vec<String>,
}

fn prepare(
    model: &ModelSpec,
    n: usize,
    fixed: Option<&[PoleSample]>,
    seed: u64,
    opts: &PanelOptions,
) -> Result<Prepared, PanelError> {
    let step = match model.flavor {
        Flavor::Discrete => None,
        Flavor::Continuous => Some(
            opts.step
                .ok_or_else(|| PanelError::InvalidSize("continuous panels need a step".into()))?,
        ),
    };
    let built: Vec<Result<(PoleSample, Member, usize, bool), PanelError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let y = match fixed {
                Some(ys) => ys[i].clone(),
                None => model.sample(&mut stream_rng(seed, i as u64)),
            };
            match step {
                None => {
                    let coeffs = expand_polynomial(&y, model.sigma)?;
                    let (b, capped) = ar_burn_in(&y);
                    Ok((y, Member::Ar(ArFilter::new(&coeffs)), opts.burn_in.unwrap_or(b), capped))
                }
                Some(h) => {
                    let disc = OuDiscretization::new(&y, model.sigma, h)?;
                    let (b, capped) = ou_burn_in(&y, h);
                    Ok((y, Member::Ou(OuFilter::new(disc)), opts.burn_in.unwrap_or(b), capped))
                }
            }
        })
        .collect();
    let mut members = Vec::with_capacity(n);
    let mut capped = 0;
    for r in built {
        let (y, m, b, c) = r?;
        capped += (c && opts.burn_in.is_none()) as usize;
        members.push((y, m, b));
    }
    let mut warnings = Vec::new();
    if capped > 0 {
        let msg = format!(
            "{capped} member(s) hit the burn-in cap of {BURN_IN_CAP} steps; their near-unit-root start is not fully equilibrated"
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(Prepared {
        members,
        noise_dim: if step.is_some() { OU_MODES } else { 1 },
        warnings,
    })
}

/// Simulates `n` members over `t` steps and forms `X^N`.
pub fn aggregate(
    model: &ModelSpec,
    n: usize,
    t: usize,
    seed: u64,
    opts: &PanelOptions,
) -> Result<PanelRun, PanelError> {
    aggregate_inner(model, n, None, t, seed, opts)
}

/// As [`aggregate`], with the member poles given instead of drawn. The
/// seed still drives the innovations.
pub fn aggregate_fixed(
    model: &ModelSpec,
    samples: &[PoleSample],
    t: usize,
    seed: u64,
    opts: &PanelOptions,
) -> Result<PanelRun, PanelError> {
    aggregate_inner(model, samples.len(), Some(samples), t, seed, opts)
}

fn aggregate_inner(
    model: &ModelSpec,
    n: usize,
    fixed: Option<&[PoleSample]>,
    t: usize,
    seed: u64,
    opts: &PanelOptions,
) -> Result<PanelRun, PanelError> {
    if n == 0 || t == 0 {
        return Err(PanelError::InvalidSize(format!("N = {n}, T = {t}")));
    }
    if !opts.force {
        let report = classify_model(model, None);
        if !report.exists {
            return Err(PanelError::NotExistent(report.condition));
        }
    }
    let Prepared {
        members,
        noise_dim,
        warnings,
    } = prepare(model, n, fixed, seed, opts)?;
    let burn: Vec<usize> = members.iter().map(|m| m.2).collect();
    let max_burn = burn.iter().copied().max().unwrap_or(0);
    let bn = model.innovation.normalization(n);
    let keep = opts.keep_members;

    let (sum, kept) = match &model.innovation {
        InnovationScheme::Independent => run_chunks(members, t, keep, |i, _b| {
            let mut rng = stream_rng(seed, i as u64);
            // noise starts far past the words consumed by the pole draw
            rng.set_word_pos(1 << 40);
            move |buf: &mut [f64]| buf.iter_mut().for_each(|x| *x = normal(&mut rng))
        }),
        InnovationScheme::Common => {
            let mut rng = stream_rng(seed, COMMON_STREAM);
            let shared: Arc<Vec<f64>> =
                Arc::new((0..(max_burn + t) * noise_dim).map(|_| normal(&mut rng)).collect());
            run_chunks(members, t, keep, |_, b| {
                let shared = Arc::clone(&shared);
                let mut pos = (max_burn - b) * noise_dim;
                move |buf: &mut [f64]| {
                    buf.copy_from_slice(&shared[pos..pos + buf.len()]);
                    pos += buf.len();
                }
            })
        }
        InnovationScheme::Interactive { chi, .. } => {
            run_lockstep(members, chi, noise_dim, max_burn, t, seed, keep)?
        }
    };
    let aggregate: Vec<f64> = sum.iter().map(|x| x / bn).collect();
    let step = opts.step.filter(|_| model.flavor == Flavor::Continuous);
    Ok(PanelRun {
        n,
        t,
        seed,
        scheme: model.innovation.clone(),
        normalization: bn,
        step,
        samples: kept.0,
        burn_in: burn,
        aggregate,
        members: kept.1,
        warnings,
    })
}

type Kept = (Vec<PoleSample>, Option<Vec<Vec<f64>>>);

/// Members with private or pre-generated noise: parallel over fixed chunks,
/// summed in chunk order.
fn run_chunks<S, G>(members: Vec<(PoleSample, Member, usize)>, t: usize, keep: bool, source: S) -> (Vec<f64>, Kept)
where
    S: Fn(usize, usize) -> G + Sync,
    G: FnMut(&mut [f64]),
{
    let noise_dim = match members.first() {
        Some((_, Member::Ou(_), _)) => OU_MODES,
        _ => 1,
    };
    let samples: Vec<PoleSample> = members.iter().map(|m| m.0.clone()).collect();
    let mut indexed: Vec<(usize, Member, usize)> =
        members.into_iter().enumerate().map(|(i, (_, m, b))| (i, m, b)).collect();
    let chunks: Vec<(Vec<f64>, Vec<Vec<f64>>)> = indexed
        .par_chunks_mut(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; t];
            let mut paths = Vec::new();
            let mut buf = vec![0.0; noise_dim];
            for (i, member, b) in chunk.iter_mut() {
                let mut next = source(*i, *b);
                let mut path = if keep { Vec::with_capacity(t) } else { Vec::new() };
                for s in 0..*b + t {
                    next(&mut buf);
                    let z = member.step(&buf);
                    if s >= *b {
                        acc[s - *b] += z;
                        if keep {
                            path.push(z);
                        }
                    }
                }
                if keep {
                    paths.push(path);
                }
            }
            (acc, paths)
        })
        .collect();
    let mut sum = vec![0.0; t];
    let mut all = Vec::new();
    for (acc, paths) in chunks {
        for (s, a) in sum.iter_mut().zip(&acc) {
            *s += a;
        }
        all.extend(paths);
    }
    (sum, (samples, keep.then_some(all)))
}

/// Interactive innovations: all members advance together so that each
/// time step draws one cross-sectionally correlated vector per noise mode.
/// Member `i` starts `max_burn - burn_in[i]` steps in (tail alignment).
fn run_lockstep(
    members: Vec<(PoleSample, Member, usize)>,
    chi: &ChiSpec,
    noise_dim: usize,
    max_burn: usize,
    t: usize,
    seed: u64,
    keep: bool,
) -> Result<(Vec<f64>, Kept), PanelError> {
    let n = members.len();
    let mut sources: Vec<NoiseSource> = Vec::with_capacity(noise_dim);
    for _ in 0..noise_dim {
        sources.push(NoiseSource {
            sampler: Some(ToeplitzSampler::new(chi, n)?),
            spare: None,
        });
    }
    let mut rng = stream_rng(seed, INTERACTIVE_STREAM);
    let samples: Vec<PoleSample> = members.iter().map(|m| m.0.clone()).collect();
    let mut state: Vec<(Member, usize)> = members.into_iter().map(|(_, m, b)| (m, max_burn - b)).collect();
    let mut cols = vec![vec![0.0; n]; noise_dim];
    let mut sum = vec![0.0; t];
    let mut paths = if keep { vec![Vec::with_capacity(t); n] } else { Vec::new() };
    let mut buf = vec![0.0; noise_dim];
    for s in 0..max_burn + t {
        for (k, src) in sources.iter_mut().enumerate() {
            src.next(&mut rng, &mut cols[k]);
        }
        for (i, (member, start)) in state.iter_mut().enumerate() {
            if s < *start {
                continue;
            }
            for k in 0..noise_dim {
                buf[k] = cols[k][i];
            }
            let z = member.step(&buf);
            if s >= max_burn {
                sum[s - max_burn] += z;
                if keep {
                    paths[i].push(z);
                }
            }
        }
    }
    Ok((sum, (samples, keep.then_some(paths))))
}

fn csv_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Serialize)]
struct RunConfig<'a> {
    model: Option<&'a ModelConfig>,
    n: usize,
    t: usize,
    seed: u64,
    step: Option<f64>,
    normalization: f64,
    max_burn_in: usize,
    warnings: &'a [String],
}

impl PanelRun {
    /// Writes `config.json`, `aggregate.csv` and, when member paths were
    /// kept and `members` is set, `members.csv`. Returns the written paths.
    pub fn write_dir(&self, model: &ModelSpec, dir: &Path, members: bool) -> Result<Vec<PathBuf>, PanelError> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let cfg = RunConfig {
            model: model.config(),
            n: self.n,
            t: self.t,
            seed: self.seed,
            step: self.step,
            normalization: self.normalization,
            max_burn_in: self.burn_in.iter().copied().max().unwrap_or(0),
            warnings: &self.warnings,
        };
        let path = dir.join("config.json");
        std::fs::write(&path, serde_json::to_string_pretty(&cfg).expect("config serializes"))?;
        written.push(path);

        let mut s = String::from("t,value\n");
        let h = self.step.unwrap_or(1.0);
        for (i, x) in self.aggregate.iter().enumerate() {
            let _ = writeln!(s, "{},{}", csv_float(i as f64 * h), csv_float(*x));
        }
        let path = dir.join("aggregate.csv");
        std::fs::write(&path, s)?;
        written.push(path);

        if members {
            if let Some(paths) = &self.members {
                let mut s = String::from("member,t,value\n");
                for (i, p) in paths.iter().enumerate() {
                    for (k, x) in p.iter().enumerate() {
                        let _ = writeln!(s, "{i},{},{}", csv_float(k as f64 * h), csv_float(*x));
                    }
                }
                let path = dir.join("members.csv");
                std::fs::write(&path, s)?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::{RadialLaw, Shape};
    use crate::poles::{GroupKind, PoleGroupSpec, PoleSign, SampledGroup};

    fn ou1(r: f64) -> PoleSample {
        PoleSample::new(
            Flavor::Continuous,
            vec![SampledGroup {
                kind: GroupKind::RealContinuous,
                multiplicity: 1,
                radius: r,
                angle: 0.0,
            }],
        )
    }

    #[test]
    fn levinson_flags_indefinite_sequences() {
        assert_eq!(levinson_definite(&[1.0, 0.5, 0.25]), Ok(true));
        assert_eq!(levinson_definite(&[1.0, 1.0, 1.0]), Ok(false));
        assert!(levinson_definite(&[1.0, 0.9, 0.0]).is_err());
    }

    #[test]
    fn not_psd_is_reported() {
        let chi = ChiSpec::Explicit { values: vec![1.0, 0.9, 0.0, 0.0] };
        assert!(matches!(ToeplitzSampler::new(&chi, 4), Err(PanelError::NotPSD { .. })));
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre(24);
        let s: f64 = rule.iter().map(|(x, w)| w * x.powi(20)).sum();
        assert!((s - 2.0 / 21.0).abs() < 1e-14);
    }

    #[test]
    fn legendre_modes_reproduce_the_step_covariance() {
        let y = PoleSample::new(
            Flavor::Continuous,
            vec![
                SampledGroup {
                    kind: GroupKind::RealContinuous,
                    multiplicity: 2,
                    radius: 0.7,
                    angle: 0.0,
                },
                SampledGroup {
                    kind: GroupKind::ComplexPairContinuous,
                    multiplicity: 1,
                    radius: 0.5,
                    angle: 2.0,
                },
            ],
        );
        let h = 0.04;
        let disc = OuDiscretization::new(&y, 1.3, h).unwrap();
        let exact = OuDiscretization::exact_covariance(&y, 1.3, h).unwrap();
        let approx = disc.mode_covariance();
        assert!((&exact - &approx).norm() < 1e-12 * exact.norm(), "{exact} {approx}");
    }

    #[test]
    fn step_guard() {
        assert!(matches!(
            OuDiscretization::new(&ou1(1.0), 1.0, 0.2),
            Err(PanelError::StepTooCoarse { .. })
        ));
    }

    #[test]
    fn ou1_variance_and_autocorrelation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 0.05;
        let x = simulate_ou_member(&ou1(1.0), 1.0, h, 2_000_000, 400, &mut rng).unwrap();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((var / 0.5 - 1.0).abs() < 0.02, "{var}");
        let lag = (1.0 / h).round() as usize;
        let cov = x.windows(lag + 1).map(|w| (w[0] - mean) * (w[lag] - mean)).sum::<f64>() / n;
        assert!((cov / var - (-1.0f64).exp()).abs() < 0.02);
    }

    #[test]
    fn ar1_variance_and_autocorrelation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let eps: Vec<f64> = (0..1_000_100).map(|_| normal(&mut rng)).collect();
        let coeffs = ArCoefficients { a: vec![-0.5], sigma: 1.0 };
        let x = simulate_ar_member(&coeffs, &eps, 100);
        assert_eq!(x.len(), 1_000_000);
        let n = x.len() as f64;
        let var = x.iter().map(|v| v * v).sum::<f64>() / n;
        assert!((var / (4.0 / 3.0) - 1.0).abs() < 0.02);
        let c1 = x.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / n;
        assert!((c1 / var - 0.5).abs() < 0.01);
    }

    #[test]
    fn single_member_aggregate_is_the_member() {
        let g = PoleGroupSpec::real_discrete(PoleSign::Positive, 1, RadialLaw::discrete(0.5, Shape::Constant).unwrap())
            .unwrap();
        let m = ModelSpec::new(Flavor::Discrete, vec![g], 1.0, InnovationScheme::Independent).unwrap();
        let opts = PanelOptions {
            keep_members: true,
            ..Default::default()
        };
        let run = aggregate(&m, 1, 500, 9, &opts).unwrap();
        assert_eq!(run.normalization, 1.0);
        assert_eq!(run.members.as_ref().unwrap()[0], run.aggregate);
    }

    #[test]
    fn spectrum_weights_by_scheme() {
        let (a, b) = spectrum_weights(&InnovationScheme::Independent, 50);
        assert!((a - 1.0).abs() < 1e-15 && b == 0.0);
        let (a, b) = spectrum_weights(&InnovationScheme::Common, 50);
        assert!((a - 0.02).abs() < 1e-15 && (b - 0.98).abs() < 1e-15);
    }
}
