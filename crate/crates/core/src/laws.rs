//! Radial and angular mixing laws for the random poles.
//!
//! A radial law has density proportional to `|1-ρ|^d φ(ρ)` on `[0, 1]`
//! (discrete time) or `r^d φ(r)` on `[0, ∞)` (continuous time). An angular
//! law has density proportional to `ψ(θ) |θ - θ⁰|^{-β}` for `β < 1` and is the
//! point mass at `θ⁰` for `β = 1`. Both are normalised numerically at
//! construction and carry an inverse-CDF table for sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::{integrate, integrate_smooth, Locus, QuadError, QuadOptions, SingularPoint};

/// Number of nodes in each inverse-CDF table.
pub const TABLE_NODES: usize = 4096;
/// Innermost geometric node, relative to the side length.
const TABLE_INNER: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LawError {
    #[error("exponent {0} is not integrable (need > -1)")]
    InvalidExponent(f64),
    #[error("angular exponent beta = {0} exceeds 1")]
    InvalidBeta(f64),
    #[error("invalid support [{lo}, {hi}] around singular point {center}")]
    InvalidSupport { lo: f64, hi: f64, center: f64 },
    #[error("shape function must be positive at the singular point {0}")]
    ShapeNotPositive(f64),
    #[error("density is not normalizable: {0}")]
    NotNormalizable(String),
    #[error("a Dirac law has no density")]
    DiracDensityQuery,
    #[error("{0} is outside the support")]
    OutOfSupport(f64),
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Named shape presets for φ and ψ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Shape {
    Constant,
    /// `1` on `[lo, hi]`, `0` elsewhere.
    Indicator { lo: f64, hi: f64 },
    /// `exp(-rate·x)`.
    ExpDecay { rate: f64 },
    /// `Σ c_i x^i`; must stay positive on the support.
    Polynomial { coeffs: Vec<f64> },
    /// `min(1, |x|^{-exponent})`: flat core with an algebraic tail.
    PowerTail { exponent: f64 },
}

impl Default for Shape {
    fn default() -> Self {
        Shape::Constant
    }
}

impl Shape {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Shape::Constant => 1.0,
            Shape::Indicator { lo, hi } => {
                if x >= *lo && x <= *hi {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::ExpDecay { rate } => (-rate * x).exp(),
            Shape::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
            Shape::PowerTail { exponent } => {
                let ax = x.abs();
                if ax <= 1.0 {
                    1.0
                } else {
                    ax.powf(-exponent)
                }
            }
        }
    }

    /// Interval outside which the shape vanishes.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Shape::Indicator { lo, hi } => (*lo, *hi),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Points where the shape has a kink.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            Shape::Indicator { lo, hi } => vec![*lo, *hi],
            Shape::PowerTail { .. } => vec![-1.0, 1.0],
            _ => Vec::new(),
        }
    }

    fn validate(&self) -> Result<(), LawError> {
        match self {
            Shape::Indicator { lo, hi } if !(lo < hi) => Err(LawError::NotNormalizable(format!(
                "indicator bounds [{lo}, {hi}] are empty"
            ))),
            Shape::ExpDecay { rate } if !(*rate > 0.0) => Err(LawError::NotNormalizable(format!(
                "exp-decay rate {rate} must be positive"
            ))),
            Shape::PowerTail { exponent } if !(*exponent >= 0.0) => Err(LawError::NotNormalizable(format!(
                "power-tail exponent {exponent} must be nonnegative"
            ))),
            Shape::Polynomial { coeffs } if coeffs.is_empty() => {
                Err(LawError::NotNormalizable("empty polynomial".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Which side of the singular point a table or offset refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Below,
    Above,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Below => -1.0,
            Side::Above => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
struct SideTable {
    side: Side,
    length: f64,
    /// γ + 1.
    g1: f64,
    /// Unnormalised mass of the side.
    mass: f64,
    /// `v = offset^{γ+1}` at the nodes.
    v: Vec<f64>,
    /// Cumulative unnormalised mass at the nodes.
    cum: Vec<f64>,
    /// Exact `dv/dM` at the nodes (infinite where the shape vanishes).
    slope: Vec<f64>,
}

/// One diffuse component `shape(x) |x - center|^γ` on `[lo, hi]`, normalised.
#[derive(Debug, Clone)]
pub struct PowerLawPiece {
    center: f64,
    exponent: f64,
    lo: f64,
    hi: f64,
    shape: Shape,
    norm: f64,
    sides: Vec<SideTable>,
}

impl PowerLawPiece {
    /// Builds and normalises the piece. Infinite `hi` is truncated where the
    /// tail mass drops below `1e-16` of the total.
    pub fn new(center: f64, exponent: f64, lo: f64, hi: f64, shape: Shape) -> Result<Self, LawError> {
        if !(exponent > -1.0) {
            return Err(LawError::InvalidExponent(exponent));
        }
        shape.validate()?;
        let (slo, shi) = shape.support();
        let lo = lo.max(slo);
        let hi = hi.min(shi);
        if !(lo <= center && center <= hi && lo < hi) || lo.is_infinite() {
            return Err(LawError::InvalidSupport { lo, hi, center });
        }
        if !(shape.eval(center) > 0.0) {
            return Err(LawError::ShapeNotPositive(center));
        }
        let hi = if hi.is_infinite() {
            truncation_point(center, exponent, &shape)?
        } else {
            hi
        };

        let mut piece = Self {
            center,
            exponent,
            lo,
            hi,
            shape,
            norm: 1.0,
            sides: Vec::new(),
        };
        for side in [Side::Below, Side::Above] {
            let length = match side {
                Side::Below => center - lo,
                Side::Above => hi - center,
            };
            if length > 0.0 {
                let table = piece.tabulate(side, length)?;
                piece.sides.push(table);
            }
        }
        let norm: f64 = piece.sides.iter().map(|s| s.mass).sum();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(LawError::NotNormalizable(format!("total mass {norm}")));
        }
        piece.norm = norm;
        Ok(piece)
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    /// The exponent γ of `|x - center|^γ`.
    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// Normalising constant (unnormalised total mass).
    pub fn normalizer(&self) -> f64 {
        self.norm
    }

    /// Length of `side` inside the support (0 when absent).
    pub fn side_length(&self, side: Side) -> f64 {
        self.sides.iter().find(|s| s.side == side).map_or(0.0, |s| s.length)
    }

    /// Probability of landing on `side`.
    pub fn side_probability(&self, side: Side) -> f64 {
        self.sides.iter().find(|s| s.side == side).map_or(0.0, |s| s.mass / self.norm)
    }

    /// Normalised density without the singular factor, at distance `offset`
    /// from the center on `side`: `shape(center ± offset) / Z`.
    pub fn regular_part(&self, side: Side, offset: f64) -> f64 {
        self.shape.eval(self.center + side.sign() * offset) / self.norm
    }

    pub fn density(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        let dist = (x - self.center).abs();
        if dist == 0.0 {
            return if self.exponent < 0.0 {
                f64::INFINITY
            } else if self.exponent == 0.0 {
                self.shape.eval(x) / self.norm
            } else {
                0.0
            };
        }
        dist.powf(self.exponent) * self.shape.eval(x) / self.norm
    }

    /// Kinks of the regular part, as offsets from the center on each side.
    pub fn kink_offsets(&self, side: Side) -> Vec<f64> {
        let len = self.side_length(side);
        self.shape
            .kinks()
            .into_iter()
            .map(|k| (k - self.center) * side.sign())
            .filter(|&o| o > 0.0 && o < len)
            .collect()
    }

    /// CDF by direct quadrature (independent of the sampling table).
    pub fn cdf(&self, x: f64) -> Result<f64, LawError> {
        if x <= self.lo {
            return Ok(0.0);
        }
        if x >= self.hi {
            return Ok(1.0);
        }
        let below = self.side_probability(Side::Below);
        let value = if x <= self.center {
            below - self.mass_within(Side::Below, self.center - x)?
        } else {
            below + self.mass_within(Side::Above, x - self.center)?
        };
        Ok(value.clamp(0.0, 1.0))
    }

    /// Normalised mass within `reach` of the center on `side`, by quadrature
    /// in the offset variable.
    fn mass_within(&self, side: Side, reach: f64) -> Result<f64, LawError> {
        if reach <= 0.0 {
            return Ok(0.0);
        }
        let opts = QuadOptions::default().with_rel_tol(1e-12);
        let pts = [SingularPoint::new(0.0, self.exponent)];
        let mut breaks = self.kink_offsets(side);
        breaks.retain(|k| *k < reach);
        let est = integrate(
            |at: Locus| {
                let t = at.relative_to(0, 0.0);
                Ok(t.powf(self.exponent) * self.shape.eval(self.center + side.sign() * t))
            },
            0.0,
            reach,
            &pts,
            &breaks,
            &opts,
        )?;
        Ok(est.value / self.norm)
    }

    /// Inverse CDF from the tabulated cumulative mass.
    pub fn quantile(&self, u: f64) -> f64 {
        let mut target = u.clamp(0.0, 1.0) * self.norm;
        // Below side first (x increasing), then above.
        for table in &self.sides {
            let last = table.sides_last();
            if table.side == Side::Below {
                if target <= table.mass {
                    // mass measured from lo, i.e. from the far end of the below side
                    let from_center = table.mass - target;
                    return self.center - table.offset_for(from_center.min(last));
                }
                target -= table.mass;
            } else {
                return self.center + table.offset_for(target.min(last));
            }
        }
        self.hi
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.gen::<f64>())
    }

    fn tabulate(&self, side: Side, length: f64) -> Result<SideTable, LawError> {
        let g1 = self.exponent + 1.0;
        let v_end = length.powf(g1);
        let half = TABLE_NODES / 2;
        let mut v: Vec<f64> = Vec::with_capacity(TABLE_NODES + 8);
        v.push(0.0);
        for i in 1..=half {
            v.push(v_end * i as f64 / half as f64);
        }
        let ratio = (1.0 / TABLE_INNER).ln() / (half - 1) as f64;
        for i in 0..half {
            let off = length * TABLE_INNER * (ratio * i as f64).exp();
            v.push(off.min(length).powf(g1));
        }
        for k in self.kink_offsets_raw(side, length) {
            v.push(k.powf(g1));
        }
        v.sort_by(f64::total_cmp);
        v.dedup();

        let center = self.center;
        let sign = side.sign();
        let shape = &self.shape;
        // dM = offset^γ shape(offset) d(offset) = shape(offset(v)) dv / (γ+1)
        let opts = QuadOptions::default().with_rel_tol(1e-13);
        let mut cum = Vec::with_capacity(v.len());
        cum.push(0.0);
        let mut acc = 0.0;
        for w in v.windows(2) {
            let est = integrate_smooth(
                |vv: f64| shape.eval(center + sign * vv.powf(1.0 / g1)) / g1,
                w[0],
                w[1],
                &opts,
            )?;
            acc += est.value;
            cum.push(acc);
        }
        let slope = v
            .iter()
            .map(|&vv| g1 / shape.eval(center + sign * vv.powf(1.0 / g1)))
            .collect();
        Ok(SideTable {
            side,
            length,
            g1,
            mass: acc,
            v,
            cum,
            slope,
        })
    }

    fn kink_offsets_raw(&self, side: Side, length: f64) -> Vec<f64> {
        self.shape
            .kinks()
            .into_iter()
            .map(|k| (k - self.center) * side.sign())
            .filter(|&o| o > 0.0 && o < length)
            .collect()
    }
}

impl SideTable {
    fn sides_last(&self) -> f64 {
        *self.cum.last().unwrap_or(&0.0)
    }

    /// Offset from the center at which the cumulative mass (measured from
    /// the center outwards) equals `mass`.
    fn offset_for(&self, mass: f64) -> f64 {
        let idx = self.cum.partition_point(|&c| c < mass);
        let v = if idx == 0 {
            self.v[0]
        } else if idx >= self.cum.len() {
            *self.v.last().unwrap()
        } else {
            let (c0, c1) = (self.cum[idx - 1], self.cum[idx]);
            let (v0, v1) = (self.v[idx - 1], self.v[idx]);
            if c1 > c0 {
                let h = c1 - c0;
                let secant = (v1 - v0) / h;
                // Fritsch-Carlson limits keep the cubic monotone.
                let limit = |m: f64| if m.is_finite() { m.clamp(0.0, 3.0 * secant) } else { 3.0 * secant };
                let (m0, m1) = (limit(self.slope[idx - 1]), limit(self.slope[idx]));
                let t = (mass - c0) / h;
                let (t2, t3) = (t * t, t * t * t);
                (2.0 * t3 - 3.0 * t2 + 1.0) * v0
                    + (t3 - 2.0 * t2 + t) * h * m0
                    + (-2.0 * t3 + 3.0 * t2) * v1
                    + (t3 - t2) * h * m1
            } else {
                v0
            }
        };
        v.powf(1.0 / self.g1).min(self.length)
    }
}

fn truncation_point(center: f64, exponent: f64, shape: &Shape) -> Result<f64, LawError> {
    // Mass of the first unit, then double until the local tail weight is negligible.
    let opts = QuadOptions::default();
    let pts = [SingularPoint::new(center, exponent)];
    let core = integrate(
        |at: Locus| Ok(at.relative_to(0, center).abs().powf(exponent) * shape.eval(at.x)),
        center,
        center + 1.0,
        &pts,
        &[],
        &opts,
    )?
    .value;
    let mut x = 1.0f64;
    while x < 1e8 {
        let w = x.powf(exponent + 1.0) * shape.eval(center + x);
        if w <= 1e-18 * core {
            return Ok(center + 2.0 * x);
        }
        x *= 2.0;
    }
    Err(LawError::NotNormalizable(format!(
        "shape does not decay on [{center}, ∞) against |x|^{exponent}"
    )))
}

/// Time flavour of a model: discrete AR or continuous OU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    Discrete,
    Continuous,
}

/// Serializable description of a radial law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RadialSpec {
    /// Point mass at `at` (degenerate mixture).
    Point { at: f64 },
    /// Density ∝ `dist^d φ`.
    Power {
        d: f64,
        #[serde(default)]
        phi: Option<Shape>,
    },
}

/// Law of the pole radius ρ (discrete) or real part r (continuous).
#[derive(Debug, Clone)]
pub struct RadialLaw {
    flavor: Flavor,
    spec: RadialSpec,
    piece: Option<PowerLawPiece>,
}

impl RadialLaw {
    /// `|1-ρ|^d φ(ρ)` on `[0, 1]`; φ defaults to a constant.
    pub fn discrete(d: f64, phi: Shape) -> Result<Self, LawError> {
        let piece = PowerLawPiece::new(1.0, d, 0.0, 1.0, phi.clone())?;
        Ok(Self {
            flavor: Flavor::Discrete,
            spec: RadialSpec::Power { d, phi: Some(phi) },
            piece: Some(piece),
        })
    }

    /// `r^d φ(r)` on `[0, ∞)`; the default φ is `exp(-r)`.
    pub fn continuous(d: f64, phi: Shape) -> Result<Self, LawError> {
        let piece = PowerLawPiece::new(0.0, d, 0.0, f64::INFINITY, phi.clone())?;
        Ok(Self {
            flavor: Flavor::Continuous,
            spec: RadialSpec::Power { d, phi: Some(phi) },
            piece: Some(piece),
        })
    }

    pub fn point(flavor: Flavor, at: f64) -> Result<Self, LawError> {
        let ok = match flavor {
            Flavor::Discrete => at > 0.0 && at < 1.0,
            Flavor::Continuous => at > 0.0 && at.is_finite(),
        };
        if !ok {
            return Err(LawError::OutOfSupport(at));
        }
        Ok(Self {
            flavor,
            spec: RadialSpec::Point { at },
            piece: None,
        })
    }

    pub fn from_spec(flavor: Flavor, spec: &RadialSpec) -> Result<Self, LawError> {
        match spec {
            RadialSpec::Point { at } => Self::point(flavor, *at),
            RadialSpec::Power { d, phi } => match flavor {
                Flavor::Discrete => Self::discrete(*d, phi.clone().unwrap_or(Shape::Constant)),
                Flavor::Continuous => Self::continuous(*d, phi.clone().unwrap_or(Shape::ExpDecay { rate: 1.0 })),
            },
        }
    }

    pub fn spec(&self) -> &RadialSpec {
        &self.spec
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    /// The exponent d, or `None` for a point mass.
    pub fn d(&self) -> Option<f64> {
        self.piece.as_ref().map(|p| p.exponent())
    }

    pub fn point_mass(&self) -> Option<f64> {
        match self.spec {
            RadialSpec::Point { at } => Some(at),
            _ => None,
        }
    }

    pub fn piece(&self) -> Option<&PowerLawPiece> {
        self.piece.as_ref()
    }

    /// Shape value at the singular point (φ(1) or φ(0)), unnormalised.
    pub fn phi_at_boundary(&self) -> Option<f64> {
        self.piece.as_ref().map(|p| p.shape().eval(p.center()))
    }

    pub fn density(&self, x: f64) -> Result<f64, LawError> {
        let piece = self.piece.as_ref().ok_or(LawError::DiracDensityQuery)?;
        let (lo, hi) = piece.support();
        if x < lo || x > hi {
            return Err(LawError::OutOfSupport(x));
        }
        Ok(piece.density(x))
    }

    pub fn cdf(&self, x: f64) -> Result<f64, LawError> {
        match (&self.piece, &self.spec) {
            (Some(p), _) => p.cdf(x),
            (None, RadialSpec::Point { at }) => Ok(if x >= *at { 1.0 } else { 0.0 }),
            _ => unreachable!(),
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match (&self.piece, &self.spec) {
            (Some(p), _) => p.quantile(u),
            (None, RadialSpec::Point { at }) => *at,
            _ => unreachable!(),
        }
    }

    /// A draw strictly inside the stability region.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = self.quantile(rng.gen::<f64>());
        match self.flavor {
            Flavor::Discrete => x.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0),
            Flavor::Continuous => x.max(f64::MIN_POSITIVE),
        }
    }
}

/// Serializable description of an angular law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngularSpec {
    pub beta: f64,
    pub theta0: f64,
    #[serde(default)]
    pub psi: Option<Shape>,
    /// Support window; defaults to `[-π, π]` (discrete) or `τ⁰ ± 10` (continuous).
    #[serde(default)]
    pub support: Option<(f64, f64)>,
}

/// Half-width of the default continuous angular window.
pub const DEFAULT_CONTINUOUS_WINDOW: f64 = 10.0;

#[derive(Debug, Clone)]
pub enum AngularComponent {
    Atom { weight: f64, at: f64 },
    Diffuse { weight: f64, piece: PowerLawPiece },
}

impl AngularComponent {
    pub fn weight(&self) -> f64 {
        match self {
            AngularComponent::Atom { weight, .. } | AngularComponent::Diffuse { weight, .. } => *weight,
        }
    }
}

/// One singular diffuse part of a mixed angular law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusePart {
    pub weight: f64,
    pub beta: f64,
    pub at: f64,
    #[serde(default)]
    pub psi: Option<Shape>,
    pub support: (f64, f64),
}

/// Law of the pole angle θ (discrete) or imaginary part τ (continuous).
#[derive(Debug, Clone)]
pub struct AngularLaw {
    components: Vec<AngularComponent>,
    principal: Option<(f64, f64)>,
}

impl AngularLaw {
    pub fn dirac(theta0: f64) -> Self {
        Self {
            components: vec![AngularComponent::Atom { weight: 1.0, at: theta0 }],
            principal: Some((1.0, theta0)),
        }
    }

    /// `ψ(θ)|θ-θ⁰|^{-β}` on `support`, or the Dirac mass when `β = 1`.
    pub fn singular(beta: f64, theta0: f64, psi: Shape, support: (f64, f64)) -> Result<Self, LawError> {
        if beta > 1.0 || beta.is_nan() {
            return Err(LawError::InvalidBeta(beta));
        }
        if beta == 1.0 {
            return Ok(Self::dirac(theta0));
        }
        let piece = PowerLawPiece::new(theta0, -beta, support.0, support.1, psi)?;
        Ok(Self {
            components: vec![AngularComponent::Diffuse { weight: 1.0, piece }],
            principal: Some((beta, theta0)),
        })
    }

    pub fn from_spec(flavor: Flavor, spec: &AngularSpec) -> Result<Self, LawError> {
        let support = spec.support.unwrap_or(match flavor {
            Flavor::Discrete => (-std::f64::consts::PI, std::f64::consts::PI),
            Flavor::Continuous => (
                spec.theta0 - DEFAULT_CONTINUOUS_WINDOW,
                spec.theta0 + DEFAULT_CONTINUOUS_WINDOW,
            ),
        });
        Self::singular(spec.beta, spec.theta0, spec.psi.clone().unwrap_or_default(), support)
    }

    /// Atoms `(weight, location)` plus singular diffuse parts; weights are
    /// normalised to total mass one.
    pub fn mixed(atoms: &[(f64, f64)], diffuse: &[DiffusePart]) -> Result<Self, LawError> {
        let total: f64 = atoms.iter().map(|a| a.0).sum::<f64>() + diffuse.iter().map(|d| d.weight).sum::<f64>();
        if atoms.iter().any(|a| a.0 < 0.0) || diffuse.iter().any(|d| d.weight < 0.0) {
            return Err(LawError::InvalidMixture("negative weight".into()));
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(LawError::InvalidMixture("total mass is zero".into()));
        }
        let mut components = Vec::new();
        for &(w, at) in atoms {
            if w > 0.0 {
                components.push(AngularComponent::Atom { weight: w / total, at });
            }
        }
        for part in diffuse {
            if part.weight == 0.0 {
                continue;
            }
            if part.beta >= 1.0 {
                return Err(LawError::InvalidBeta(part.beta));
            }
            let piece = PowerLawPiece::new(
                part.at,
                -part.beta,
                part.support.0,
                part.support.1,
                part.psi.clone().unwrap_or_default(),
            )?;
            components.push(AngularComponent::Diffuse {
                weight: part.weight / total,
                piece,
            });
        }
        let principal = match components.as_slice() {
            [AngularComponent::Atom { at, .. }] => Some((1.0, *at)),
            [AngularComponent::Diffuse { piece, .. }] => Some((-piece.exponent(), piece.center())),
            _ => None,
        };
        Ok(Self { components, principal })
    }

    pub fn components(&self) -> &[AngularComponent] {
        &self.components
    }

    /// `(β, θ⁰)` when the law has a single component.
    pub fn principal(&self) -> Option<(f64, f64)> {
        self.principal
    }

    pub fn is_dirac(&self) -> bool {
        matches!(self.components.as_slice(), [AngularComponent::Atom { .. }])
    }

    /// Density of the diffuse part.
    pub fn density(&self, x: f64) -> Result<f64, LawError> {
        let mut any = false;
        let mut inside = false;
        let mut total = 0.0;
        for c in &self.components {
            if let AngularComponent::Diffuse { weight, piece } = c {
                any = true;
                let (lo, hi) = piece.support();
                inside |= x >= lo && x <= hi;
                total += weight * piece.density(x);
            }
        }
        if !any {
            return Err(LawError::DiracDensityQuery);
        }
        if !inside {
            return Err(LawError::OutOfSupport(x));
        }
        Ok(total)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let pick = if self.components.len() == 1 {
            &self.components[0]
        } else {
            let mut u = rng.gen::<f64>();
            let mut chosen = self.components.last().unwrap();
            for c in &self.components {
                if u < c.weight() {
                    chosen = c;
                    break;
                }
                u -= c.weight();
            }
            chosen
        };
        match pick {
            AngularComponent::Atom { at, .. } => *at,
            AngularComponent::Diffuse { piece, .. } => piece.sample(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn uniform_radial_density() {
        let law = RadialLaw::discrete(0.0, Shape::Constant).unwrap();
        assert!((law.density(0.3).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_radial_density() {
        let law = RadialLaw::discrete(1.0, Shape::Constant).unwrap();
        assert!((law.density(0.5).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_angular_density() {
        let law = AngularLaw::singular(0.5, 0.0, Shape::Constant, (-PI, PI)).unwrap();
        let z = 4.0 * PI.sqrt();
        let expected = 0.25f64.powf(-0.5) / z;
        assert!((law.density(0.25).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn dirac_has_no_density_and_samples_exactly() {
        let law = AngularLaw::singular(1.0, PI / 3.0, Shape::Constant, (-PI, PI)).unwrap();
        assert_eq!(law.density(0.1), Err(LawError::DiracDensityQuery));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(law.sample(&mut rng), PI / 3.0);
        }
    }

    #[test]
    fn out_of_support_is_an_error() {
        let law = RadialLaw::discrete(0.0, Shape::Constant).unwrap();
        assert_eq!(law.density(1.5), Err(LawError::OutOfSupport(1.5)));
    }

    #[test]
    fn bad_parameters_are_rejected() {
        assert!(matches!(
            RadialLaw::discrete(-1.0, Shape::Constant),
            Err(LawError::InvalidExponent(_))
        ));
        assert!(matches!(
            AngularLaw::singular(1.2, 0.0, Shape::Constant, (-PI, PI)),
            Err(LawError::InvalidBeta(_))
        ));
        assert!(matches!(
            RadialLaw::continuous(0.5, Shape::Constant),
            Err(LawError::NotNormalizable(_))
        ));
        assert!(matches!(
            RadialLaw::discrete(0.5, Shape::Indicator { lo: 0.0, hi: 0.5 }),
            Err(LawError::InvalidSupport { .. })
        ));
        assert!(matches!(AngularLaw::mixed(&[], &[]), Err(LawError::InvalidMixture(_))));
    }

    #[test]
    fn sample_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let uniform = RadialLaw::discrete(0.0, Shape::Constant).unwrap();
        let mean: f64 = (0..100_000).map(|_| uniform.sample(&mut rng)).sum::<f64>() / 1e5;
        assert!((mean - 0.5).abs() < 0.005, "{mean}");
        // ∫ρ·2(1-ρ)dρ = 1/3
        let linear = RadialLaw::discrete(1.0, Shape::Constant).unwrap();
        let mean: f64 = (0..100_000).map(|_| linear.sample(&mut rng)).sum::<f64>() / 1e5;
        assert!((mean - 1.0 / 3.0).abs() < 0.005, "{mean}");
    }

    #[test]
    fn pure_atom_mixture() {
        let law = AngularLaw::mixed(&[(1.0, 2.0)], &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..100).all(|_| law.sample(&mut rng) == 2.0));
    }

    #[test]
    fn atom_plus_uniform_frequency() {
        let law = AngularLaw::mixed(
            &[(0.5, 0.0)],
            &[DiffusePart {
                weight: 0.5,
                beta: 0.0,
                at: 1.0,
                psi: None,
                support: (1.0, 2.0),
            }],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let hits = (0..10_000).filter(|_| law.sample(&mut rng) == 0.0).count();
        assert!((hits as f64 / 1e4 - 0.5).abs() < 0.01, "{hits}");
    }

    #[test]
    fn quantile_inverts_exact_cdf() {
        let laws = [
            PowerLawPiece::new(1.0, -0.7, 0.0, 1.0, Shape::Constant).unwrap(),
            PowerLawPiece::new(1.0, 1.5, 0.0, 1.0, Shape::Polynomial { coeffs: vec![1.0, 0.5] }).unwrap(),
            PowerLawPiece::new(0.0, 0.3, 0.0, f64::INFINITY, Shape::ExpDecay { rate: 1.0 }).unwrap(),
            PowerLawPiece::new(0.4, -0.5, -PI, PI, Shape::Indicator { lo: -1.0, hi: 2.0 }).unwrap(),
        ];
        for piece in &laws {
            for i in 1..=99 {
                let u = 0.001 + 0.998 * i as f64 / 100.0;
                let q = piece.quantile(u);
                let c = piece.cdf(q).unwrap();
                assert!((c - u).abs() < 1e-6, "u {u} q {q} cdf {c}");
            }
        }
    }

    #[test]
    fn continuous_default_truncation_keeps_mass() {
        let law = RadialLaw::continuous(0.5, Shape::ExpDecay { rate: 1.0 }).unwrap();
        let p = law.piece().unwrap();
        // Z = Γ(1.5)
        assert!((p.normalizer() - 0.886_226_925_452_758).abs() < 1e-10);
    }
}
