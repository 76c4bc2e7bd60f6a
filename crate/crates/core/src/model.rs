//! Model specification: flavour, pole groups, noise scale and innovation
//! scheme, plus the serializable description used by configs.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::laws::{AngularComponent, Flavor};
use crate::poles::{GroupConfig, GroupKind, PoleError, PoleGroupSpec, PoleSample};

/// Default upper bound on the order p.
pub const DEFAULT_MAX_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("group {index} is {found:?} but the model is {expected:?}")]
    FlavorMismatch { index: usize, expected: Flavor, found: Flavor },
    #[error("order {order} exceeds the maximum {max}")]
    OrderTooLarge { order: usize, max: usize },
    #[error("model has no pole groups")]
    Empty,
    #[error("sigma must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("interaction sequence: {0}")]
    InvalidChi(String),
    #[error("group {index}: {source}")]
    Group { index: usize, source: PoleError },
}

/// Cross-sectional correlation `χ(j)` of interactive innovations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChiSpec {
    /// `rate^j`, summable.
    Geometric { rate: f64 },
    /// `ln²2 / ((j+1) ln²(j+2))`: summable with a slowly decaying tail.
    SlowLog,
    /// `(1+j)^{-gamma}`; non-summable for `gamma ≤ 1`.
    PowerLaw { gamma: f64 },
    /// `χ(1), χ(2), …`; zero beyond the list.
    Explicit { values: Vec<f64> },
}

impl ChiSpec {
    pub fn chi(&self, j: usize) -> f64 {
        if j == 0 {
            return 1.0;
        }
        let jf = j as f64;
        match self {
            ChiSpec::Geometric { rate } => rate.powi(j as i32),
            ChiSpec::SlowLog => {
                let l2 = 2f64.ln();
                l2 * l2 / ((jf + 1.0) * (jf + 2.0).ln().powi(2))
            }
            ChiSpec::PowerLaw { gamma } => (1.0 + jf).powf(-gamma),
            ChiSpec::Explicit { values } => values.get(j - 1).copied().unwrap_or(0.0),
        }
    }

    /// Whether `Σ χ(j)` diverges.
    pub fn is_strong(&self) -> bool {
        matches!(self, ChiSpec::PowerLaw { gamma } if *gamma <= 1.0)
    }

    /// `Σ_{i,j<N} χ(i-j)`, the variance of the sum of N unit innovations.
    pub fn total_correlation(&self, n: usize) -> f64 {
        let mut s = n as f64;
        for k in 1..n {
            s += 2.0 * (n - k) as f64 * self.chi(k);
        }
        s
    }

    fn validate(&self) -> Result<(), ModelError> {
        match self {
            ChiSpec::Geometric { rate } if !(rate.abs() < 1.0) => {
                Err(ModelError::InvalidChi(format!("geometric rate {rate} must lie in (-1, 1)")))
            }
            ChiSpec::PowerLaw { gamma } if !(*gamma > 0.0) => {
                Err(ModelError::InvalidChi(format!("power-law exponent {gamma} must be positive")))
            }
            ChiSpec::Explicit { values } if values.iter().any(|v| !v.is_finite() || v.abs() > 1.0) => {
                Err(ModelError::InvalidChi("explicit values must lie in [-1, 1]".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InnovationScheme {
    Independent,
    Common,
    Interactive {
        chi: ChiSpec,
        /// Normalisation B_N; defaults to `sqrt(Σ χ(i-j))`.
        #[serde(default)]
        normalization: Option<f64>,
    },
}

impl Default for InnovationScheme {
    fn default() -> Self {
        InnovationScheme::Independent
    }
}

/// Innovation regime as seen by the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnovationRegime {
    Independent,
    Common,
    InteractiveWeak,
    InteractiveStrong,
}

impl InnovationRegime {
    /// Whether verdicts follow the mixture spectral density F (otherwise |H|²).
    pub fn uses_f(self) -> bool {
        matches!(self, InnovationRegime::Independent | InnovationRegime::InteractiveWeak)
    }
}

impl InnovationScheme {
    pub fn regime(&self) -> InnovationRegime {
        match self {
            InnovationScheme::Independent => InnovationRegime::Independent,
            InnovationScheme::Common => InnovationRegime::Common,
            InnovationScheme::Interactive { chi, .. } => {
                if chi.is_strong() {
                    InnovationRegime::InteractiveStrong
                } else {
                    InnovationRegime::InteractiveWeak
                }
            }
        }
    }

    /// B_N of the partial aggregation.
    pub fn normalization(&self, n: usize) -> f64 {
        match self {
            InnovationScheme::Independent => (n as f64).sqrt(),
            InnovationScheme::Common => n as f64,
            InnovationScheme::Interactive { chi, normalization } => {
                normalization.unwrap_or_else(|| chi.total_correlation(n).sqrt())
            }
        }
    }
}

/// Serializable model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub flavor: Flavor,
    #[serde(default = "unit")]
    pub sigma: f64,
    pub groups: Vec<GroupConfig>,
    #[serde(default)]
    pub innovation: InnovationScheme,
    #[serde(default = "default_max_order")]
    pub max_order: usize,
}

fn unit() -> f64 {
    1.0
}

fn default_max_order() -> usize {
    DEFAULT_MAX_ORDER
}

/// A validated model with built laws.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub flavor: Flavor,
    pub groups: Vec<PoleGroupSpec>,
    pub sigma: f64,
    pub innovation: InnovationScheme,
    config: Option<ModelConfig>,
}

impl ModelSpec {
    pub fn new(
        flavor: Flavor,
        groups: Vec<PoleGroupSpec>,
        sigma: f64,
        innovation: InnovationScheme,
    ) -> Result<Self, ModelError> {
        Self::with_max_order(flavor, groups, sigma, innovation, DEFAULT_MAX_ORDER)
    }

    pub fn with_max_order(
        flavor: Flavor,
        groups: Vec<PoleGroupSpec>,
        sigma: f64,
        innovation: InnovationScheme,
        max_order: usize,
    ) -> Result<Self, ModelError> {
        if groups.is_empty() {
            return Err(ModelError::Empty);
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(ModelError::InvalidSigma(sigma));
        }
        for (index, g) in groups.iter().enumerate() {
            let found = g.kind().flavor();
            if found != flavor {
                return Err(ModelError::FlavorMismatch {
                    index,
                    expected: flavor,
                    found,
                });
            }
        }
        let order: usize = groups.iter().map(|g| g.degree()).sum();
        if order > max_order {
            return Err(ModelError::OrderTooLarge { order, max: max_order });
        }
        if let InnovationScheme::Interactive { chi, normalization } = &innovation {
            chi.validate()?;
            if let Some(b) = normalization {
                if !(*b > 0.0) {
                    return Err(ModelError::InvalidChi(format!("normalization {b} must be positive")));
                }
            }
        }
        Ok(Self {
            flavor,
            groups,
            sigma,
            innovation,
            config: None,
        })
    }

    pub fn from_config(cfg: &ModelConfig) -> Result<Self, ModelError> {
        let groups = cfg
            .groups
            .iter()
            .enumerate()
            .map(|(index, g)| PoleGroupSpec::from_config(g).map_err(|source| ModelError::Group { index, source }))
            .collect::<Result<Vec<_>, _>>()?;
        let mut spec = Self::with_max_order(cfg.flavor, groups, cfg.sigma, cfg.innovation.clone(), cfg.max_order)?;
        spec.config = Some(cfg.clone());
        Ok(spec)
    }

    /// The description this model was built from, when available.
    pub fn config(&self) -> Option<&ModelConfig> {
        self.config.as_ref()
    }

    pub fn order(&self) -> usize {
        self.groups.iter().map(|g| g.degree()).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PoleSample {
        PoleSample::new(self.flavor, self.groups.iter().map(|g| g.sample(rng)).collect())
    }

    /// Nonnegative frequencies where the mixture may be singular, sorted.
    /// Spectra are even, so only `[0, π]` (or `[0, ∞)`) is listed.
    pub fn singular_frequencies(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.groups {
            let pair = g.kind().is_pair();
            for c in g.angular().components() {
                match c {
                    AngularComponent::Atom { at, .. } => out.push(*at),
                    AngularComponent::Diffuse { piece, .. } => {
                        out.push(piece.center());
                        // both conjugate factors peak together where the support
                        // crosses 0 (or ±π in discrete time)
                        let (lo, hi) = piece.support();
                        if pair && lo <= 0.0 && hi >= 0.0 {
                            out.push(0.0);
                        }
                        if pair && self.flavor == Flavor::Discrete && (hi >= PI || lo <= -PI) {
                            out.push(PI);
                        }
                    }
                }
            }
        }
        let mut out: Vec<f64> = out
            .into_iter()
            .map(|x| match self.flavor {
                Flavor::Discrete => {
                    let w = x.rem_euclid(2.0 * PI);
                    let w = if w > PI { 2.0 * PI - w } else { w };
                    w.abs()
                }
                Flavor::Continuous => x.abs(),
            })
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        out
    }

    /// Continuous frequency window half-width `max(10, 4·max τ⁰)`.
    pub fn frequency_window(&self) -> f64 {
        match self.flavor {
            Flavor::Discrete => PI,
            Flavor::Continuous => {
                let m = self.singular_frequencies().into_iter().fold(0.0, f64::max);
                (4.0 * m).max(10.0)
            }
        }
    }

    pub fn has_pairs(&self) -> bool {
        self.groups.iter().any(|g| g.kind().is_pair())
    }

    pub fn kinds(&self) -> Vec<GroupKind> {
        self.groups.iter().map(|g| g.kind()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::{AngularLaw, RadialLaw, Shape};
    use crate::poles::PoleSign;

    #[test]
    fn normalizations_follow_the_scheme() {
        assert_eq!(InnovationScheme::Independent.normalization(100), 10.0);
        assert_eq!(InnovationScheme::Common.normalization(100), 100.0);
        let chi = ChiSpec::Geometric { rate: 0.0 };
        let s = InnovationScheme::Interactive { chi, normalization: None };
        assert!((s.normalization(100) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn regimes() {
        let strong = InnovationScheme::Interactive {
            chi: ChiSpec::PowerLaw { gamma: 0.5 },
            normalization: None,
        };
        assert_eq!(strong.regime(), InnovationRegime::InteractiveStrong);
        let weak = InnovationScheme::Interactive {
            chi: ChiSpec::SlowLog,
            normalization: None,
        };
        assert_eq!(weak.regime(), InnovationRegime::InteractiveWeak);
        assert!((ChiSpec::SlowLog.chi(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn order_limit_and_flavor_checks() {
        let radial = RadialLaw::discrete(0.5, Shape::Constant).unwrap();
        let g = PoleGroupSpec::complex_pair_discrete(3, radial, AngularLaw::dirac(1.0)).unwrap();
        let err = ModelSpec::new(Flavor::Discrete, vec![g.clone(), g], 1.0, InnovationScheme::Independent);
        assert_eq!(err.unwrap_err(), ModelError::OrderTooLarge { order: 12, max: 8 });
        let cont = PoleGroupSpec::real_continuous(1, RadialLaw::continuous(0.5, Shape::ExpDecay { rate: 1.0 }).unwrap())
            .unwrap();
        assert!(matches!(
            ModelSpec::new(Flavor::Discrete, vec![cont], 1.0, InnovationScheme::Independent),
            Err(ModelError::FlavorMismatch { .. })
        ));
    }

    #[test]
    fn singular_frequencies_fold_to_nonnegative() {
        let radial = RadialLaw::discrete(0.5, Shape::Constant).unwrap();
        let a = PoleGroupSpec::real_discrete(PoleSign::Negative, 1, radial.clone()).unwrap();
        let b = PoleGroupSpec::complex_pair_discrete(1, radial, AngularLaw::dirac(-PI / 3.0)).unwrap();
        let m = ModelSpec::new(Flavor::Discrete, vec![a, b], 1.0, InnovationScheme::Independent).unwrap();
        let s = m.singular_frequencies();
        assert_eq!(s.len(), 2);
        assert!((s[0] - PI / 3.0).abs() < 1e-15 && (s[1] - PI).abs() < 1e-15);
    }
}
