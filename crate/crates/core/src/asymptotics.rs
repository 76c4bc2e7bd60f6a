//! Numerical checks of the local power laws of single and double mixture
//! integrals near a singular frequency `λ_s`:
//!
//! ```text
//! f(λ_s + δ) ~ C |δ|^{-α}
//! ```
//!
//! Values are taken on a geometric ladder `δ ∈ [1e-6, 1e-1]`, averaged over
//! both sides of `λ_s`. Exponents and constants are read off the
//! differences `D(δ) = f(δ) - f(10δ)`, which cancel the additive constant
//! that otherwise dominates the correction when `α` is small:
//!
//! ```text
//! α̂ = log10(D(δ) / D(10δ)),    Ĉ = D(δ) / (δ^{-α} (1 - 10^{-α}))
//! ```

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{phase_diagram, PhasePoint, Region};
use crate::laws::{AngularLaw, Flavor, LawError, RadialLaw, Shape, Side};
use crate::model::{InnovationRegime, InnovationScheme, ModelSpec};
use crate::poles::{PoleError, PoleGroupSpec, PoleSign};
use crate::quad::{integrate, integrate_tail, Locus, QuadError, QuadOptions, SingularPoint};
use crate::spectral::{group_mixture, mixture_f_at, modulus, MixtureOptions, SpectralError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AsymptoticsError {
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Law(#[from] LawError),
    #[error(transparent)]
    Pole(#[from] PoleError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Location of the singular angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", content = "theta0", rename_all = "kebab-case")]
pub enum AngleCase {
    /// θ⁰ = 0 (τ⁰ = 0 in continuous time).
    Zero,
    /// θ⁰ = π (discrete only).
    Pi,
    /// Any other angle, carried by a complex pair.
    Interior(f64),
}

impl AngleCase {
    pub fn theta0(self) -> f64 {
        match self {
            AngleCase::Zero => 0.0,
            AngleCase::Pi => PI,
            AngleCase::Interior(t) => t,
        }
    }

    fn validate(self, flavor: Flavor) -> Result<(), AsymptoticsError> {
        match (self, flavor) {
            (AngleCase::Pi, Flavor::Continuous) => Err(AsymptoticsError::PreconditionViolated(
                "θ⁰ = π has no continuous-time analogue".into(),
            )),
            (AngleCase::Interior(t), Flavor::Discrete) if !(t > 0.0 && t < PI) => Err(
                AsymptoticsError::PreconditionViolated(format!("interior angle {t} must lie in (0, π)")),
            ),
            (AngleCase::Interior(t), Flavor::Continuous) if t <= 0.0 => Err(AsymptoticsError::PreconditionViolated(
                format!("interior frequency {t} must be positive"),
            )),
            _ => Ok(()),
        }
    }

    /// Factor contributed by the non-singular partner of a pair at the
    /// singular frequency: `[2 sin θ⁰]^{-n}` or `(2τ⁰)^{-n}`.
    fn partner_factor(self, flavor: Flavor, n: f64) -> f64 {
        match self {
            AngleCase::Interior(t) => match flavor {
                Flavor::Discrete => (2.0 * t.sin()).powf(-n),
                Flavor::Continuous => (2.0 * t).powf(-n),
            },
            _ => 1.0,
        }
    }
}

/// Geometric ladder of offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    /// Largest offset `10^{-first}`.
    pub first: u32,
    /// Smallest offset `10^{-last}`.
    pub last: u32,
    pub per_decade: usize,
}

impl Default for Ladder {
    fn default() -> Self {
        Self {
            first: 1,
            last: 6,
            per_decade: 4,
        }
    }
}

impl Ladder {
    /// Three decades ending at 1e-6 sampled at whole decades (exponent
    /// only).
    pub fn coarse() -> Self {
        Self {
            first: 3,
            last: 6,
            per_decade: 1,
        }
    }

    fn offsets(&self) -> Vec<f64> {
        let steps = (self.last - self.first) as usize * self.per_decade;
        (0..=steps)
            .map(|k| 10f64.powf(-(self.first as f64 + k as f64 / self.per_decade as f64)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderPoint {
    pub delta: f64,
    pub value: f64,
    /// `log10(f(δ)/f(10δ))`.
    pub raw_slope: Option<f64>,
    /// `log10(D(δ)/D(10δ))`.
    pub diff_slope: Option<f64>,
    /// `D(δ) / (δ^{-α} (1 - 10^{-α}))` with the predicted `α`.
    pub constant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticFit {
    pub target: f64,
    pub predicted_exponent: f64,
    pub fitted_exponent: f64,
    pub predicted_constant: Option<f64>,
    pub fitted_constant: f64,
    /// Raw log-log slope over the final decade.
    pub raw_final_slope: f64,
    /// RMS residual of a line through `log D` over the last three decades.
    pub residual: f64,
    /// Relative change of the fitted constant over the last two decades.
    pub drift: f64,
    pub power_law: bool,
    pub ladder: Vec<LadderPoint>,
}

/// Residual above which a ladder is not treated as a power law.
pub const RESIDUAL_LIMIT: f64 = 0.01;
/// Constant drift above which the `∼` relation is not certified.
pub const DRIFT_LIMIT: f64 = 0.01;

impl AsymptoticFit {
    pub fn exponent_error(&self) -> f64 {
        (self.fitted_exponent - self.predicted_exponent).abs()
    }

    pub fn constant_error(&self) -> Option<f64> {
        self.predicted_constant.map(|c| (self.fitted_constant / c - 1.0).abs())
    }

    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.16e}")).unwrap_or_default();
        let mut s = String::from("delta,value,raw_slope,diff_slope,constant\n");
        for p in &self.ladder {
            let _ = writeln!(
                s,
                "{:.16e},{:.16e},{},{},{}",
                p.delta,
                p.value,
                opt(p.raw_slope),
                opt(p.diff_slope),
                opt(p.constant)
            );
        }
        s
    }
}

/// Evaluates `f` on the ladder around `target` and fits the power law.
pub fn fit_ladder<F>(
    f: F,
    target: f64,
    ladder: &Ladder,
    predicted_exponent: f64,
    predicted_constant: Option<f64>,
) -> Result<AsymptoticFit, AsymptoticsError>
where
    F: Fn(f64) -> Result<f64, SpectralError> + Sync,
{
    let deltas = ladder.offsets();
    let values: Vec<f64> = deltas
        .par_iter()
        .map(|&d| Ok(0.5 * (f(target + d)? + f(target - d)?)))
        .collect::<Result<_, SpectralError>>()?;
    let pd = ladder.per_decade;
    let n = deltas.len();
    let alpha = predicted_exponent;
    let diff = |k: usize| (k >= pd).then(|| values[k] - values[k - pd]);
    let log_ratio = |a: f64, b: f64| (a > 0.0 && b > 0.0).then(|| (a / b).log10());
    let mut points = Vec::with_capacity(n);
    for k in 0..n {
        let raw_slope = (k >= pd).then(|| log_ratio(values[k], values[k - pd])).flatten();
        let diff_slope = if k >= 2 * pd {
            log_ratio(diff(k).unwrap(), diff(k - pd).unwrap())
        } else {
            None
        };
        let constant = diff(k).map(|dk| dk / (deltas[k].powf(-alpha) * (1.0 - 10f64.powf(-alpha))));
        points.push(LadderPoint {
            delta: deltas[k],
            value: values[k],
            raw_slope,
            diff_slope,
            constant,
        });
    }
    let last = &points[n - 1];
    let fitted_exponent = last.diff_slope.unwrap_or(f64::NAN);
    let fitted_constant = last.constant.unwrap_or(f64::NAN);
    let drift = if n > 2 * pd {
        match points[n - 1 - 2 * pd].constant {
            Some(c) => (fitted_constant / c - 1.0).abs(),
            None => f64::NAN,
        }
    } else {
        f64::NAN
    };
    // line through log D against log δ over the last three decades
    let start = (n - 1).saturating_sub(3 * pd).max(pd);
    let pts: Vec<(f64, f64)> = (start..n)
        .filter_map(|k| diff(k).filter(|d| *d > 0.0).map(|d| (deltas[k].log10(), d.log10())))
        .collect();
    let residual = if pts.len() >= 3 {
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (mx, my) = (sx / m, sy / m);
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        (pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum::<f64>() / m).sqrt()
    } else {
        f64::NAN
    };
    let power_law = residual < RESIDUAL_LIMIT && (predicted_constant.is_none() || drift < DRIFT_LIMIT);
    Ok(AsymptoticFit {
        target,
        predicted_exponent,
        fitted_exponent,
        predicted_constant,
        fitted_constant,
        raw_final_slope: points[n - 1].raw_slope.unwrap_or(f64::NAN),
        residual,
        drift,
        power_law,
        ladder: points,
    })
}

fn oracle_opts() -> QuadOptions {
    QuadOptions::default().with_rel_tol(1e-10).with_max_intervals(8000)
}

/// `∫₀^∞ u^d (1 + u²)^{-n/2} du` by adaptive quadrature.
pub fn single_integral_constant(d: f64, n: f64) -> Result<f64, AsymptoticsError> {
    let opts = oracle_opts();
    let head = integrate(
        |at: Locus| {
            let u = at.relative_to(0, 0.0);
            Ok(u.powf(d) * (1.0 + u * u).powf(-0.5 * n))
        },
        0.0,
        1.0,
        &[SingularPoint::new(0.0, d)],
        &[],
        &opts,
    )?;
    let tail = integrate_tail(|u: f64| u.powf(d) * (1.0 + u * u).powf(-0.5 * n), 1.0, n - d, &opts)?;
    Ok(head.value + tail.value)
}

/// `∫_ℝ g(v, off) dv` for `g` with power singularities at `points` and
/// `|v|^{-decay}` tails; `off(i)` is the exact signed offset `v - points[i]`.
fn line_integral(
    g: impl Fn(f64, &dyn Fn(usize) -> f64) -> f64 + Copy,
    points: &[SingularPoint],
    decay: f64,
) -> Result<f64, AsymptoticsError> {
    let opts = oracle_opts();
    let reach = points.iter().map(|p| p.at.abs()).fold(1.0, f64::max) + 1.0;
    let mid = integrate(
        |at: Locus| Ok(g(at.x, &|i| at.relative_to(i, points[i].at))),
        -reach,
        reach,
        points,
        &[],
        &opts,
    )?;
    let right = integrate_tail(|v: f64| g(v, &|i| v - points[i].at), reach, decay, &opts)?;
    let left = integrate_tail(|v: f64| g(-v, &|i| -v - points[i].at), reach, decay, &opts)?;
    Ok(mid.value + right.value + left.value)
}

/// Scaled double integral
/// `∫_ℝ |v|^{-α} ∫₀^∞ u^d K(u, v) du dv` with the pair kernel
/// `[(u² + (1-v)²)(u² + (1+v)²)]^{-n/2}` at θ⁰ ∈ {0, π}, or the single
/// factor `(u² + (1-v)²)^{-n/2}` elsewhere (partner factor excluded).
pub fn double_integral_constant(d: f64, n: f64, alpha: f64, both: bool) -> Result<f64, AsymptoticsError> {
    let e = d + 1.0 - n;
    if !both {
        // inner integral is |1 - v|^{d+1-n} times the single-integral constant
        let cu = single_integral_constant(d, n)?;
        let pts = [SingularPoint::new(0.0, -alpha), SingularPoint::new(1.0, e.min(0.0))];
        let outer = line_integral(|_, off| off(0).abs().powf(-alpha) * off(1).abs().powf(e), &pts, alpha - e)?;
        return Ok(cu * outer);
    }
    let opts = oracle_opts();
    let inner = move |v: f64, off: &dyn Fn(usize) -> f64| -> f64 {
        // u = s w with s = max(1, |v|) keeps the integrand O(1) far out
        let s = v.abs().max(1.0);
        let (q, p) = (off(0).abs() / s, off(2).abs() / s);
        // log form keeps w ≪ p ≪ 1 free of underflow
        let k = |w: f64| (d * w.ln() - n * (w.hypot(p).ln() + w.hypot(q).ln())).exp();
        let reach = 20.0;
        let breaks: Vec<f64> = [0.1 * p, p, 10.0 * p, 0.1 * q, q, 10.0 * q]
            .into_iter()
            .filter(|b| *b > 0.0 && *b < reach)
            .collect();
        // at v = ±1 one factor vanishes and the origin exponent drops to d - n
        let origin = if p == 0.0 || q == 0.0 { d - n } else { d };
        let head = integrate(
            |at: Locus| Ok(k(at.relative_to(0, 0.0))),
            0.0,
            reach,
            &[SingularPoint::new(0.0, origin)],
            &breaks,
            &opts,
        )
        .map(|e| e.value)
        .unwrap_or(f64::NAN);
        let tail = integrate_tail(k, reach, 2.0 * n - d, &opts).map(|e| e.value).unwrap_or(f64::NAN);
        s.powf(d + 1.0 - 2.0 * n) * (head + tail)
    };
    let pts = [
        SingularPoint::new(-1.0, e.min(0.0)),
        SingularPoint::new(0.0, -alpha),
        SingularPoint::new(1.0, e.min(0.0)),
    ];
    let value = line_integral(
        |v, off| off(1).abs().powf(-alpha) * inner(v, off),
        &pts,
        alpha + 2.0 * n - 1.0 - d,
    )?;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(AsymptoticsError::Quadrature(QuadError::NonFinite { x: f64::NAN }))
    }
}

fn radial_law(flavor: Flavor, d: f64, phi: &Shape) -> Result<RadialLaw, AsymptoticsError> {
    Ok(match flavor {
        Flavor::Discrete => RadialLaw::discrete(d, phi.clone())?,
        Flavor::Continuous => RadialLaw::continuous(d, phi.clone())?,
    })
}

/// Normalised regular part of a law at its singular point.
fn boundary_density(piece: &crate::laws::PowerLawPiece) -> f64 {
    let side = if piece.side_length(Side::Above) > 0.0 { Side::Above } else { Side::Below };
    piece.regular_part(side, 0.0)
}

fn mixture_options() -> MixtureOptions {
    MixtureOptions {
        inner_rel_tol: 1e-10,
        outer_rel_tol: 1e-9,
        max_intervals: 8000,
    }
}

fn group_integral(group: &PoleGroupSpec, flavor: Flavor, n: f64, lambda: f64) -> Result<f64, SpectralError> {
    group_mixture(group, flavor, lambda, &mixture_options(), n, |x, a1, a2| {
        // log form: the product of two small moduli underflows
        let log_r = modulus(flavor, x, a1).ln() + a2.map_or(0.0, |a2| modulus(flavor, x, a2).ln());
        (-n * log_r).exp()
    })
}

fn single_integral_group(flavor: Flavor, d: f64, case: AngleCase, phi: &Shape) -> Result<PoleGroupSpec, AsymptoticsError> {
    let radial = radial_law(flavor, d, phi)?;
    Ok(match (flavor, case) {
        (Flavor::Discrete, AngleCase::Zero) => PoleGroupSpec::real_discrete(PoleSign::Positive, 1, radial)?,
        (Flavor::Discrete, AngleCase::Pi) => PoleGroupSpec::real_discrete(PoleSign::Negative, 1, radial)?,
        (Flavor::Discrete, AngleCase::Interior(t)) => {
            PoleGroupSpec::complex_pair_discrete(1, radial, AngularLaw::dirac(t))?
        }
        (Flavor::Continuous, AngleCase::Interior(t)) => {
            PoleGroupSpec::complex_pair_continuous(1, radial, AngularLaw::dirac(t))?
        }
        (Flavor::Continuous, _) => PoleGroupSpec::real_continuous(1, radial)?,
    })
}

/// Single-integral profile `∫ x^d φ |e(x, λ - θ⁰)|^{-n} [× partner] dR` near
/// θ⁰ without the range check (used to show the singularity vanish).
pub fn single_integral_profile(
    flavor: Flavor,
    d: f64,
    n: u32,
    case: AngleCase,
    phi: &Shape,
    ladder: &Ladder,
) -> Result<AsymptoticFit, AsymptoticsError> {
    case.validate(flavor)?;
    let nf = n as f64;
    let group = single_integral_group(flavor, d, case, phi)?;
    let piece = group.radial().piece().expect("power law");
    let constant = if d < nf - 1.0 {
        Some(boundary_density(piece) * single_integral_constant(d, nf)? * case.partner_factor(flavor, nf))
    } else {
        None
    };
    fit_ladder(
        |l| group_integral(&group, flavor, nf, l),
        case.theta0(),
        ladder,
        nf - 1.0 - d,
        constant,
    )
}

/// Checks the single-integral law: exponent `n - 1 - d` and constant
/// `φ(1) ∫₀^∞ u^d (1+u²)^{-n/2} du`, scaled by the partner factor at
/// interior angles. Requires `-1 < d < n - 1`.
pub fn single_integral_check(
    flavor: Flavor,
    d: f64,
    n: u32,
    case: AngleCase,
    phi: &Shape,
) -> Result<AsymptoticFit, AsymptoticsError> {
    let nf = n as f64;
    if !(d > -1.0 && d < nf - 1.0) || n == 0 {
        return Err(AsymptoticsError::PreconditionViolated(format!(
            "need -1 < d < n - 1, got d = {d}, n = {n}"
        )));
    }
    single_integral_profile(flavor, d, n, case, phi, &Ladder::default())
}

/// Angular law support used by the double-integral checks.
fn angular_support(flavor: Flavor, case: AngleCase) -> (f64, f64) {
    let t = case.theta0();
    let w = match (flavor, case) {
        (Flavor::Discrete, AngleCase::Interior(t)) => 0.5 * t.min(PI - t),
        (Flavor::Continuous, AngleCase::Interior(t)) => 0.5 * t,
        _ => 1.0,
    };
    (t - w, t + w)
}

/// Checks the double-integral law for a complex pair with angular density
/// `ψ |θ - θ⁰|^{-α}`: exponent `2n - 2 - d + α` at θ⁰ ∈ {0, π} and
/// `n - 2 - d + α` elsewhere, with the constant from the scaled double
/// integral. Requires `α < 1` and `n - 1 < d < 2n - 2 + α` (resp.
/// `n - 2 < d < n - 2 + α`).
pub fn double_integral_check(
    flavor: Flavor,
    d: f64,
    n: u32,
    alpha: f64,
    case: AngleCase,
    phi: &Shape,
    psi: &Shape,
    ladder: &Ladder,
) -> Result<AsymptoticFit, AsymptoticsError> {
    case.validate(flavor)?;
    let nf = n as f64;
    let both = !matches!(case, AngleCase::Interior(_));
    let (lo, hi) = if both { (nf - 1.0, 2.0 * nf - 2.0 + alpha) } else { (nf - 2.0, nf - 2.0 + alpha) };
    if !(alpha < 1.0) || !(d > lo && d < hi) || d <= -1.0 {
        return Err(AsymptoticsError::PreconditionViolated(format!(
            "need α < 1 and {lo} < d < {hi}, got d = {d}, α = {alpha}"
        )));
    }
    let radial = radial_law(flavor, d, phi)?;
    let angular = AngularLaw::singular(alpha, case.theta0(), psi.clone(), angular_support(flavor, case))?;
    let group = match flavor {
        Flavor::Discrete => PoleGroupSpec::complex_pair_discrete(1, radial, angular)?,
        Flavor::Continuous => PoleGroupSpec::complex_pair_continuous(1, radial, angular)?,
    };
    let predicted = if both { 2.0 * nf - 2.0 - d + alpha } else { nf - 2.0 - d + alpha };
    let phi0 = boundary_density(group.radial().piece().expect("power law"));
    let psi0 = match &group.angular().components()[0] {
        crate::laws::AngularComponent::Diffuse { piece, .. } => boundary_density(piece),
        crate::laws::AngularComponent::Atom { .. } => unreachable!("α < 1"),
    };
    let constant = phi0 * psi0 * double_integral_constant(d, nf, alpha, both)? * case.partner_factor(flavor, nf);
    fit_ladder(
        |l| group_integral(&group, flavor, nf, l),
        case.theta0(),
        ladder,
        predicted,
        Some(constant),
    )
}

/// Numeric slope check at one phase-diagram point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotCheck {
    pub d: f64,
    pub beta: f64,
    pub predicted: f64,
    pub fitted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub theta0: f64,
    pub points: Vec<PhasePoint>,
    pub spots: Vec<SpotCheck>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        crate::classify::phase_csv(&self.points)
    }

    pub fn spots_csv(&self) -> String {
        let mut s = String::from("d,beta,predicted,fitted\n");
        for p in &self.spots {
            let _ = writeln!(s, "{:.16e},{:.16e},{:.16e},{:.16e}", p.d, p.beta, p.predicted, p.fitted);
        }
        s
    }
}

/// Complex-pair AR(2) model with a diffuse angle around θ⁰ (Dirac at β = 1).
pub fn pair_model(d: f64, beta: f64, theta0: f64) -> Result<ModelSpec, AsymptoticsError> {
    let case = if theta0 == 0.0 {
        AngleCase::Zero
    } else if theta0 == PI {
        AngleCase::Pi
    } else {
        AngleCase::Interior(theta0)
    };
    let angular = AngularLaw::singular(beta, theta0, Shape::Constant, angular_support(Flavor::Discrete, case))?;
    let group = PoleGroupSpec::complex_pair_discrete(1, RadialLaw::discrete(d, Shape::Constant)?, angular)?;
    ModelSpec::new(Flavor::Discrete, vec![group], 1.0, InnovationScheme::Independent)
        .map_err(|e| AsymptoticsError::PreconditionViolated(e.to_string()))
}

/// Log-log exponent of the mixture spectral density of [`pair_model`] at θ⁰.
pub fn pair_slope(d: f64, beta: f64, theta0: f64) -> Result<f64, AsymptoticsError> {
    let model = pair_model(d, beta, theta0)?;
    let opts = MixtureOptions::default();
    let fit = fit_ladder(|l| mixture_f_at(&model, l, &opts), theta0, &Ladder::coarse(), f64::NAN, None)?;
    Ok(fit.fitted_exponent)
}

/// Classifier phase table over `(d, β)` for a complex pair at `theta0`
/// with independent innovations, plus slope fits at `spots` (each must lie
/// in the long-memory region).
pub fn disappearance_sweep(
    d_range: (f64, f64),
    beta_range: (f64, f64),
    nd: usize,
    nb: usize,
    theta0: f64,
    spots: &[(f64, f64)],
) -> Result<SweepTable, AsymptoticsError> {
    if d_range.0 < -1.0 || beta_range.1 > 1.0 {
        return Err(AsymptoticsError::PreconditionViolated("grid must satisfy d ≥ -1 and β ≤ 1".into()));
    }
    let points = phase_diagram(d_range, beta_range, nd, nb, theta0, InnovationRegime::Independent);
    let spots = spots
        .iter()
        .map(|&(d, beta)| {
            let p = &phase_diagram((d, d), (beta, beta), 1, 1, theta0, InnovationRegime::Independent)[0];
            if p.region != Region::LongMemory {
                return Err(AsymptoticsError::PreconditionViolated(format!(
                    "spot ({d}, {beta}) is outside the long-memory region"
                )));
            }
            Ok(SpotCheck {
                d,
                beta,
                predicted: p.alpha,
                fitted: pair_slope(d, beta, theta0)?,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepTable { theta0, points, spots })
}
