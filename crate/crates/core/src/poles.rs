//! Pole groups, sampled poles, and the three equivalent views of an
//! elementary process: pole form, coefficient form, and moving-average or
//! impulse-response form.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::laws::{AngularLaw, AngularSpec, Flavor, LawError, RadialLaw, RadialSpec};

/// Relative tolerance on the imaginary residue of expanded coefficients.
pub const IMAG_TOL: f64 = 1e-10;
/// Absolute distance below which two continuous roots count as coincident.
pub const COINCIDENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoleError {
    #[error("coefficient {index} has imaginary residue {residue:e}")]
    NonRealCoefficient { index: usize, residue: f64 },
    #[error("roots {a} and {b} coincide")]
    DegeneratePoles { a: Complex64, b: Complex64 },
    #[error("expected a {0:?} sample")]
    WrongFlavor(Flavor),
    #[error("multiplicity must be at least 1")]
    ZeroMultiplicity,
    #[error("pole group is inconsistent: {0}")]
    InvalidGroup(String),
    #[error(transparent)]
    Law(#[from] LawError),
}

/// Location of a real discrete pole: `+ρ` (θ⁰ = 0) or `-ρ` (θ⁰ = π).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoleSign {
    Positive,
    Negative,
}

impl PoleSign {
    pub fn theta0(self) -> f64 {
        match self {
            PoleSign::Positive => 0.0,
            PoleSign::Negative => PI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GroupKind {
    RealDiscrete { sign: PoleSign },
    ComplexPairDiscrete,
    RealContinuous,
    ComplexPairContinuous,
}

impl GroupKind {
    pub fn flavor(self) -> Flavor {
        match self {
            GroupKind::RealDiscrete { .. } | GroupKind::ComplexPairDiscrete => Flavor::Discrete,
            GroupKind::RealContinuous | GroupKind::ComplexPairContinuous => Flavor::Continuous,
        }
    }

    pub fn is_pair(self) -> bool {
        matches!(self, GroupKind::ComplexPairDiscrete | GroupKind::ComplexPairContinuous)
    }

    /// Roots contributed per unit of multiplicity.
    pub fn degree(self) -> usize {
        if self.is_pair() {
            2
        } else {
            1
        }
    }
}

/// Serializable description of one pole group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupConfig {
    #[serde(flatten)]
    pub kind: GroupKind,
    #[serde(default = "one")]
    pub multiplicity: u32,
    pub radial: RadialSpec,
    #[serde(default)]
    pub angular: Option<AngularSpec>,
}

fn one() -> u32 {
    1
}

/// One group of `multiplicity` identical roots (or conjugate pairs) drawn from
/// a radial and an angular law.
#[derive(Debug, Clone)]
pub struct PoleGroupSpec {
    kind: GroupKind,
    multiplicity: u32,
    radial: RadialLaw,
    angular: AngularLaw,
}

impl PoleGroupSpec {
    pub fn new(kind: GroupKind, multiplicity: u32, radial: RadialLaw, angular: AngularLaw) -> Result<Self, PoleError> {
        if multiplicity == 0 {
            return Err(PoleError::ZeroMultiplicity);
        }
        if radial.flavor() != kind.flavor() {
            return Err(PoleError::InvalidGroup(format!(
                "{:?} radial law in a {:?} group",
                radial.flavor(),
                kind.flavor()
            )));
        }
        let fixed = match kind {
            GroupKind::RealDiscrete { sign } => Some(sign.theta0()),
            GroupKind::RealContinuous => Some(0.0),
            _ => None,
        };
        if let Some(theta0) = fixed {
            if angular.principal() != Some((1.0, theta0)) {
                return Err(PoleError::InvalidGroup(format!(
                    "real groups need a Dirac angular law at {theta0}"
                )));
            }
        }
        Ok(Self {
            kind,
            multiplicity,
            radial,
            angular,
        })
    }

    pub fn real_discrete(sign: PoleSign, multiplicity: u32, radial: RadialLaw) -> Result<Self, PoleError> {
        Self::new(
            GroupKind::RealDiscrete { sign },
            multiplicity,
            radial,
            AngularLaw::dirac(sign.theta0()),
        )
    }

    pub fn complex_pair_discrete(multiplicity: u32, radial: RadialLaw, angular: AngularLaw) -> Result<Self, PoleError> {
        Self::new(GroupKind::ComplexPairDiscrete, multiplicity, radial, angular)
    }

    pub fn real_continuous(multiplicity: u32, radial: RadialLaw) -> Result<Self, PoleError> {
        Self::new(GroupKind::RealContinuous, multiplicity, radial, AngularLaw::dirac(0.0))
    }

    pub fn complex_pair_continuous(multiplicity: u32, radial: RadialLaw, angular: AngularLaw) -> Result<Self, PoleError> {
        Self::new(GroupKind::ComplexPairContinuous, multiplicity, radial, angular)
    }

    pub fn from_config(cfg: &GroupConfig) -> Result<Self, PoleError> {
        let flavor = cfg.kind.flavor();
        let radial = RadialLaw::from_spec(flavor, &cfg.radial)?;
        let angular = match (cfg.kind, &cfg.angular) {
            (GroupKind::RealDiscrete { sign }, None) => AngularLaw::dirac(sign.theta0()),
            (GroupKind::RealContinuous, None) => AngularLaw::dirac(0.0),
            (_, Some(spec)) => AngularLaw::from_spec(flavor, spec)?,
            (_, None) => {
                return Err(PoleError::InvalidGroup("complex-pair groups need an angular law".into()))
            }
        };
        Self::new(cfg.kind, cfg.multiplicity, radial, angular)
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn multiplicity(&self) -> u32 {
        self.multiplicity
    }

    pub fn radial(&self) -> &RadialLaw {
        &self.radial
    }

    pub fn angular(&self) -> &AngularLaw {
        &self.angular
    }

    /// Contribution to the order p.
    pub fn degree(&self) -> usize {
        self.kind.degree() * self.multiplicity as usize
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SampledGroup {
        let radius = self.radial.sample(rng);
        let angle = match self.kind {
            GroupKind::RealDiscrete { sign } => sign.theta0(),
            GroupKind::RealContinuous => 0.0,
            _ => self.angular.sample(rng),
        };
        SampledGroup {
            kind: self.kind,
            multiplicity: self.multiplicity,
            radius,
            angle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledGroup {
    pub kind: GroupKind,
    pub multiplicity: u32,
    /// ρ (discrete) or r (continuous).
    pub radius: f64,
    /// θ (discrete) or τ (continuous).
    pub angle: f64,
}

/// Concrete poles of one elementary process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleSample {
    pub flavor: Flavor,
    pub groups: Vec<SampledGroup>,
}

impl PoleSample {
    pub fn new(flavor: Flavor, groups: Vec<SampledGroup>) -> Self {
        Self { flavor, groups }
    }

    /// Order p.
    pub fn order(&self) -> usize {
        self.groups.iter().map(|g| g.kind.degree() * g.multiplicity as usize).sum()
    }

    /// Distinct roots with multiplicities: `y_k` for discrete samples (so that
    /// `A(s) = ∏(1 - y_k s)^{m_k}`), and the zeros `-y_k = -r ∓ iτ` of
    /// `∏(s + y_k)^{m_k}` for continuous ones.
    pub fn roots(&self) -> Vec<(Complex64, u32)> {
        let mut out = Vec::new();
        for g in &self.groups {
            match (self.flavor, g.kind.is_pair()) {
                (Flavor::Discrete, false) => {
                    let y = if g.angle == 0.0 { g.radius } else { g.radius * g.angle.cos() };
                    out.push((Complex64::new(y, 0.0), g.multiplicity));
                }
                (Flavor::Discrete, true) => {
                    let y = Complex64::from_polar(g.radius, g.angle);
                    out.push((y, g.multiplicity));
                    out.push((y.conj(), g.multiplicity));
                }
                (Flavor::Continuous, false) => out.push((Complex64::new(-g.radius, 0.0), g.multiplicity)),
                (Flavor::Continuous, true) => {
                    let z = Complex64::new(-g.radius, g.angle);
                    out.push((z, g.multiplicity));
                    out.push((z.conj(), g.multiplicity));
                }
            }
        }
        out
    }

    /// Largest `|y_k|`, the geometric decay rate of the MA coefficients.
    pub fn max_modulus(&self) -> f64 {
        self.groups.iter().map(|g| g.radius).fold(0.0, f64::max)
    }
}

/// `A(s) = 1 + Σ a_k s^k` and the noise scale σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArCoefficients {
    pub a: Vec<f64>,
    pub sigma: f64,
}

/// Multiplies out `∏ (c0 + c1 s)^{m}` in complex arithmetic and returns the
/// real coefficients in ascending powers.
fn expand_linear_factors(factors: &[(Complex64, Complex64, u32)]) -> Result<Vec<f64>, PoleError> {
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    for &(c0, c1, m) in factors {
        for _ in 0..m {
            let mut next = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
            for (i, p) in poly.iter().enumerate() {
                next[i] += p * c0;
                next[i + 1] += p * c1;
            }
            poly = next;
        }
    }
    let scale = poly.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1.0);
    poly.iter()
        .enumerate()
        .map(|(index, c)| {
            if c.im.abs() > IMAG_TOL * scale {
                Err(PoleError::NonRealCoefficient { index, residue: c.im })
            } else {
                Ok(c.re)
            }
        })
        .collect()
}

/// Coefficients of `∏ (1 - y s)^{m}` for arbitrary roots; fails when the
/// roots are not closed under conjugation.
pub fn expand_roots(roots: &[(Complex64, u32)]) -> Result<Vec<f64>, PoleError> {
    let one = Complex64::new(1.0, 0.0);
    let factors: Vec<_> = roots.iter().map(|&(y, m)| (one, -y, m)).collect();
    expand_linear_factors(&factors)
}

/// Coefficients `a_1..a_p` of the AR polynomial of a discrete sample.
pub fn expand_polynomial(sample: &PoleSample, sigma: f64) -> Result<ArCoefficients, PoleError> {
    if sample.flavor != Flavor::Discrete {
        return Err(PoleError::WrongFlavor(Flavor::Discrete));
    }
    let coeffs = expand_roots(&sample.roots())?;
    Ok(ArCoefficients {
        a: coeffs[1..].to_vec(),
        sigma,
    })
}

/// Ascending coefficients of the monic `∏ (s + y_k)^{m_k}` of a continuous
/// sample (length p + 1, last entry 1).
pub fn continuous_polynomial(sample: &PoleSample) -> Result<Vec<f64>, PoleError> {
    if sample.flavor != Flavor::Continuous {
        return Err(PoleError::WrongFlavor(Flavor::Continuous));
    }
    let one = Complex64::new(1.0, 0.0);
    let factors: Vec<_> = sample.roots().iter().map(|&(z, m)| (-z, one, m)).collect();
    expand_linear_factors(&factors)
}

/// First `count` coefficients of `A(s)^{-1} = Σ c_j s^j`.
pub fn ma_coefficients(coeffs: &ArCoefficients, count: usize) -> Vec<f64> {
    let a = &coeffs.a;
    let mut c = Vec::with_capacity(count);
    for j in 0..count {
        if j == 0 {
            c.push(1.0);
            continue;
        }
        let s: f64 = (1..=j.min(a.len())).map(|k| a[k - 1] * c[j - k]).sum();
        c.push(-s);
    }
    c
}

/// Truncation length with `max|y|^count < 1e-12`.
pub fn suggested_ma_length(sample: &PoleSample) -> usize {
    let rho = sample.max_modulus();
    if rho <= 0.0 {
        return 1;
    }
    ((1e-12f64).ln() / rho.ln()).ceil().max(1.0) as usize + 1
}

/// Inverse Laplace transform of `∏ (s + y_k)^{-m_k}` evaluated at `t ≥ 0`.
pub fn continuous_impulse_response(sample: &PoleSample, t: f64) -> Result<f64, PoleError> {
    Ok(ImpulseResponse::new(sample)?.eval(t))
}

/// Partial-fraction form of a continuous impulse response, reusable across
/// many evaluation times.
#[derive(Debug, Clone)]
pub struct ImpulseResponse {
    /// `(z_j, [g_{m-1}, g_{m-2}/1!, …, g_0/(m-1)!])`: the term is
    /// `e^{z_j t} Σ_l coeff_l t^l`.
    terms: Vec<(Complex64, Vec<Complex64>)>,
}

impl ImpulseResponse {
    pub fn new(sample: &PoleSample) -> Result<Self, PoleError> {
        if sample.flavor != Flavor::Continuous {
            return Err(PoleError::WrongFlavor(Flavor::Continuous));
        }
        let roots = sample.roots();
        for (i, &(a, _)) in roots.iter().enumerate() {
            for &(b, _) in &roots[i + 1..] {
                if (a - b).norm() < COINCIDENT_TOL {
                    return Err(PoleError::DegeneratePoles { a, b });
                }
            }
        }
        let mut terms = Vec::with_capacity(roots.len());
        for (j, &(zj, mj)) in roots.iter().enumerate() {
            let mj = mj as usize;
            // Taylor series of G(s) = ∏_{k≠j} (s - z_k)^{-m_k} about z_j via
            // G' = G·L with L = Σ_k -m_k / (s - z_k).
            let others: Vec<_> = roots
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != j)
                .map(|(_, &(z, m))| (zj - z, m as f64))
                .collect();
            let g0 = others
                .iter()
                .fold(Complex64::new(1.0, 0.0), |acc, &(dz, m)| acc * dz.powf(-m));
            let l: Vec<Complex64> = (0..mj)
                .map(|n| {
                    let sgn = if n % 2 == 0 { -1.0 } else { 1.0 };
                    others
                        .iter()
                        .map(|&(dz, m)| sgn * m * dz.powi(-(n as i32 + 1)))
                        .sum()
                })
                .collect();
            let mut g = vec![g0];
            for n in 0..mj.saturating_sub(1) {
                let s: Complex64 = (0..=n).map(|i| g[i] * l[n - i]).sum();
                g.push(s / (n as f64 + 1.0));
            }
            let mut coeff = Vec::with_capacity(mj);
            let mut fact = 1.0;
            for lpow in 0..mj {
                if lpow > 0 {
                    fact *= lpow as f64;
                }
                coeff.push(g[mj - 1 - lpow] / fact);
            }
            terms.push((zj, coeff));
        }
        Ok(Self { terms })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let mut total = Complex64::new(0.0, 0.0);
        for (z, coeff) in &self.terms {
            let poly = coeff.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * t + c);
            total += (z * t).exp() * poly;
        }
        total.re
    }
}
