//! Closed-form existence and long-memory verdicts for aggregated AR(p) and
//! OU(p) models with random poles.
//!
//! Every group contributes a blow-up exponent
//!
//! ```text
//! e_k = n_k (1 + D_k) - 2 + β_k - d_k
//! ```
//!
//! at its frequency (`±θ⁰` or `±τ⁰`), where `n_k = 2 m_k` when the verdict
//! follows the mixture spectral density F and `n_k = m_k` when it follows the
//! squared mixture transfer function |H|², and `D_k = 1` exactly for complex
//! pairs sitting at a real frequency (`θ⁰ ∈ {0, π}`, `τ⁰ = 0`), where both
//! conjugate factors blow up together. A bounded factor adds nothing, so
//! exponents are clamped at zero and summed over co-located groups. The
//! spectral exponent is `α = Σ e_k` for F and `α = 2 Σ e_k` for |H|².
//! The aggregate exists iff every `α < 1` and has long memory iff it exists
//! and some `α > 0`. Thresholds are strict.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::laws::Flavor;
use crate::model::{InnovationRegime, ModelSpec};

/// Frequencies closer than this are treated as the same singular point.
const FREQ_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootClass {
    Real,
    ComplexPair,
}

/// Parameters of one pole group as seen by the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupInput {
    pub class: RootClass,
    pub d: f64,
    pub beta: f64,
    /// θ⁰ (discrete) or τ⁰ (continuous).
    pub theta0: f64,
    pub multiplicity: u32,
}

impl GroupInput {
    pub fn real(d: f64, theta0: f64, multiplicity: u32) -> Self {
        Self {
            class: RootClass::Real,
            d,
            beta: 1.0,
            theta0,
            multiplicity,
        }
    }

    pub fn pair(d: f64, beta: f64, theta0: f64, multiplicity: u32) -> Self {
        Self {
            class: RootClass::ComplexPair,
            d,
            beta,
            theta0,
            multiplicity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Existence {
    Exists,
    DoesNotExist,
    /// No closed form applies; the numeric existence integral decides.
    NumericCheckRequired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Singularity {
    pub frequency: f64,
    pub alpha: f64,
    /// Indices of the groups that blow up here.
    pub groups: Vec<usize>,
}

/// Per-group inputs with the effective multiplicity `n_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeInput {
    pub d: f64,
    pub beta: f64,
    pub theta0: f64,
    pub multiplicity: u32,
    pub n: u32,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LMReport {
    pub flavor: Flavor,
    pub regime: InnovationRegime,
    pub exists: bool,
    pub existence: Existence,
    /// The inequality that decided existence, with the numbers plugged in.
    pub condition: String,
    pub long_memory: bool,
    /// Singular frequencies with a positive exponent; both signs listed.
    pub singularities: Vec<Singularity>,
    pub regime_inputs: Vec<RegimeInput>,
    pub notes: Vec<String>,
}

impl LMReport {
    /// `exists=true lm=true alpha=0.5@0` style one-liner.
    pub fn summary_line(&self) -> String {
        let mut s = format!("exists={} lm={}", self.exists, self.long_memory);
        if self.existence == Existence::NumericCheckRequired {
            s.push_str(" (existence: numeric check required)");
        }
        let alphas: Vec<String> = self
            .singularities
            .iter()
            .filter(|s| s.frequency >= 0.0)
            .map(|s| format!("{}@{}", fmt_num(s.alpha), fmt_num(s.frequency)))
            .collect();
        if !alphas.is_empty() {
            let _ = write!(s, " alpha={}", alphas.join(","));
        }
        s
    }

    /// Fixed-width table of the singular frequencies.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.summary_line());
        let _ = writeln!(out, "condition: {}", self.condition);
        let _ = writeln!(out, "{:>14} {:>10}  groups", "frequency", "alpha");
        for s in &self.singularities {
            let groups: Vec<String> = s.groups.iter().map(|g| g.to_string()).collect();
            let _ = writeln!(out, "{:>14.6} {:>10.6}  {}", s.frequency, s.alpha, groups.join(","));
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

/// Shortest decimal that round-trips, trimmed of float noise.
pub fn fmt_num(x: f64) -> String {
    let r = (x * 1e12).round() / 1e12;
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r}")
}

fn at_real_frequency(flavor: Flavor, theta0: f64) -> bool {
    match flavor {
        Flavor::Discrete => fold(flavor, theta0) < FREQ_TOL || (fold(flavor, theta0) - PI).abs() < FREQ_TOL,
        Flavor::Continuous => theta0.abs() < FREQ_TOL,
    }
}

/// Representative in `[0, π]` (discrete) or `[0, ∞)` (continuous).
fn fold(flavor: Flavor, x: f64) -> f64 {
    match flavor {
        Flavor::Discrete => {
            let w = x.rem_euclid(2.0 * PI);
            if w > PI {
                2.0 * PI - w
            } else {
                w
            }
        }
        Flavor::Continuous => x.abs(),
    }
}

/// Effective multiplicity `n_k`.
pub fn effective_n(regime: InnovationRegime, multiplicity: u32) -> u32 {
    if regime.uses_f() {
        2 * multiplicity
    } else {
        multiplicity
    }
}

/// Unclamped group exponent `e_k`.
pub fn group_exponent(flavor: Flavor, regime: InnovationRegime, g: &GroupInput) -> f64 {
    let n = effective_n(regime, g.multiplicity) as f64;
    let doubled = g.class == RootClass::ComplexPair && at_real_frequency(flavor, g.theta0);
    n * if doubled { 2.0 } else { 1.0 } - 2.0 + g.beta - g.d
}

fn validate(groups: &[GroupInput]) {
    for g in groups {
        assert!(g.d > -1.0, "radial exponent d = {} must exceed -1", g.d);
        assert!(g.beta <= 1.0, "angular exponent beta = {} must not exceed 1", g.beta);
        assert!(g.multiplicity >= 1, "multiplicity must be positive");
    }
}

fn classify_groups(flavor: Flavor, groups: &[GroupInput], regime: InnovationRegime) -> LMReport {
    validate(groups);
    let scale = if regime.uses_f() { 1.0 } else { 2.0 };
    let target = if regime.uses_f() { "F" } else { "|H|^2" };

    // (folded frequency, summed clamped exponent, groups)
    let mut sites: Vec<(f64, f64, Vec<usize>)> = Vec::new();
    let mut inputs = Vec::with_capacity(groups.len());
    for (k, g) in groups.iter().enumerate() {
        let e = group_exponent(flavor, regime, g);
        inputs.push(RegimeInput {
            d: g.d,
            beta: g.beta,
            theta0: g.theta0,
            multiplicity: g.multiplicity,
            n: effective_n(regime, g.multiplicity),
            exponent: e,
        });
        let f = fold(flavor, g.theta0);
        let contribution = scale * e.max(0.0);
        match sites.iter_mut().find(|s| (s.0 - f).abs() < FREQ_TOL) {
            Some(site) => {
                site.1 += contribution;
                site.2.push(k);
            }
            None => sites.push((f, contribution, vec![k])),
        }
    }
    sites.sort_by(|a, b| a.0.total_cmp(&b.0));

    let worst = sites.iter().max_by(|a, b| a.1.total_cmp(&b.1));
    let exists = sites.iter().all(|s| s.1 < 1.0);
    let long_memory = exists && sites.iter().any(|s| s.1 > 0.0);
    let condition = match worst {
        Some((f, a, _)) => format!(
            "{target} exponent {} at frequency {} {} 1 ({})",
            fmt_num(*a),
            fmt_num(*f),
            if exists { "<" } else { ">=" },
            if exists { "aggregate exists" } else { "spectrum not integrable" }
        ),
        None => "no pole groups".to_string(),
    };

    let mut singularities = Vec::new();
    for (f, a, g) in &sites {
        if *a > 0.0 {
            if *f > 0.0 && !(flavor == Flavor::Discrete && (*f - PI).abs() < FREQ_TOL) {
                singularities.push(Singularity {
                    frequency: -f,
                    alpha: *a,
                    groups: g.clone(),
                });
            }
            singularities.push(Singularity {
                frequency: *f,
                alpha: *a,
                groups: g.clone(),
            });
        }
    }
    singularities.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));

    let mut notes = Vec::new();
    if regime == InnovationRegime::InteractiveWeak {
        notes.push("weak interaction: the |H|^2 component does not produce long memory".to_string());
    }
    if regime == InnovationRegime::InteractiveStrong {
        notes.push("strong interaction: the limit spectrum is driven by |H|^2".to_string());
    }

    LMReport {
        flavor,
        regime,
        exists,
        existence: if exists {
            Existence::Exists
        } else {
            Existence::DoesNotExist
        },
        condition,
        long_memory,
        singularities,
        regime_inputs: inputs,
        notes,
    }
}

/// AR(1) with a real pole at `θ⁰ ∈ {0, π}`.
pub fn classify_ar1(d: f64, theta0: f64, regime: InnovationRegime) -> LMReport {
    let mut r = classify_groups(Flavor::Discrete, &[GroupInput::real(d, theta0, 1)], regime);
    r.condition = if regime.uses_f() {
        format!("AR(1), F-driven: exists iff d > 0 (d = {})", fmt_num(d))
    } else {
        format!("AR(1), |H|^2-driven: exists iff d > -1/2 (d = {})", fmt_num(d))
    };
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "kebab-case")]
pub enum Ar2Case {
    RealPoles { d1: f64, d2: f64, theta1: f64, theta2: f64 },
    ComplexPair { d: f64, beta: f64, theta0: f64 },
}

pub fn classify_ar2(case: Ar2Case, regime: InnovationRegime) -> LMReport {
    match case {
        Ar2Case::RealPoles { d1, d2, theta1, theta2 } => classify_groups(
            Flavor::Discrete,
            &[GroupInput::real(d1, theta1, 1), GroupInput::real(d2, theta2, 1)],
            regime,
        ),
        Ar2Case::ComplexPair { d, beta, theta0 } => {
            let mut r = classify_groups(Flavor::Discrete, &[GroupInput::pair(d, beta, theta0, 1)], regime);
            let real = at_real_frequency(Flavor::Discrete, theta0);
            let (lo, hi) = match (regime.uses_f(), real) {
                (true, true) => ("1 + beta", "2 + beta"),
                (true, false) => ("beta - 1", "beta"),
                (false, true) => ("beta - 1/2", "beta"),
                (false, false) => ("beta - 3/2", "beta - 1"),
            };
            r.condition = format!(
                "AR(2) complex pair: exists iff d > {lo}, long memory iff d < {hi} (d = {}, beta = {})",
                fmt_num(d),
                fmt_num(beta)
            );
            r
        }
    }
}

/// General AR(p) with independent groups.
pub fn classify_arp(groups: &[GroupInput], regime: InnovationRegime) -> LMReport {
    classify_groups(Flavor::Discrete, groups, regime)
}

/// OU(p). With all angular laws degenerate the verdict is closed-form;
/// otherwise existence is left to the numeric check and long memory follows
/// the group exponents alone.
pub fn classify_oup(groups: &[GroupInput], regime: InnovationRegime) -> LMReport {
    let mut r = classify_groups(Flavor::Continuous, groups, regime);
    if groups.iter().any(|g| g.beta < 1.0) {
        let lm_condition = r.regime_inputs.iter().any(|g| g.exponent > 0.0);
        r.existence = Existence::NumericCheckRequired;
        r.exists = false;
        r.long_memory = false;
        r.condition = "diffuse imaginary-part law: no closed-form existence condition".into();
        r.notes.push(format!(
            "long memory if the aggregate exists: {}",
            if lm_condition { "yes" } else { "no" }
        ));
    }
    r
}

/// Classifier inputs of a model; `None` when a group has no power-law
/// description (mixed angular law). Point-mass radial laws are bounded and
/// represented by `d = +∞`.
pub fn model_inputs(model: &ModelSpec) -> Option<Vec<GroupInput>> {
    model
        .groups
        .iter()
        .map(|g| {
            let (beta, theta0) = g.angular().principal()?;
            let d = g.radial().d().unwrap_or(f64::INFINITY);
            Some(GroupInput {
                class: if g.kind().is_pair() {
                    RootClass::ComplexPair
                } else {
                    RootClass::Real
                },
                d,
                beta,
                theta0,
                multiplicity: g.multiplicity(),
            })
        })
        .collect()
}

/// Verdict for a model under `regime` (defaults to the model's own scheme).
pub fn classify_model(model: &ModelSpec, regime: Option<InnovationRegime>) -> LMReport {
    let regime = regime.unwrap_or_else(|| model.innovation.regime());
    match model_inputs(model) {
        Some(groups) => match model.flavor {
            Flavor::Discrete => classify_arp(&groups, regime),
            Flavor::Continuous => classify_oup(&groups, regime),
        },
        None => LMReport {
            flavor: model.flavor,
            regime,
            exists: false,
            existence: Existence::NumericCheckRequired,
            condition: "mixed angular law: no closed-form condition".into(),
            long_memory: false,
            singularities: Vec::new(),
            regime_inputs: Vec::new(),
            notes: Vec::new(),
        },
    }
}

/// Region of a phase-diagram node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    NoExistence,
    ExistsNoLm,
    LongMemory,
}

impl Region {
    pub fn code(self) -> u8 {
        match self {
            Region::NoExistence => 0,
            Region::ExistsNoLm => 1,
            Region::LongMemory => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub d: f64,
    pub beta: f64,
    pub region: Region,
    /// Exponent at `θ⁰` (may be out of `(0, 1)` outside the LM region).
    pub alpha: f64,
}

pub fn region_of(report: &LMReport) -> Region {
    if !report.exists {
        Region::NoExistence
    } else if report.long_memory {
        Region::LongMemory
    } else {
        Region::ExistsNoLm
    }
}

/// Complex-pair AR(2) phase diagram over `nd × nb` nodes spanning the closed
/// ranges.
pub fn phase_diagram(
    d_range: (f64, f64),
    beta_range: (f64, f64),
    nd: usize,
    nb: usize,
    theta0: f64,
    regime: InnovationRegime,
) -> Vec<PhasePoint> {
    let lin = |r: (f64, f64), n: usize, i: usize| {
        if n <= 1 {
            r.0
        } else {
            r.0 + (r.1 - r.0) * i as f64 / (n - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(nd * nb);
    for ib in 0..nb {
        let beta = lin(beta_range, nb, ib);
        for id in 0..nd {
            let d = lin(d_range, nd, id);
            if d <= -1.0 {
                // outside the law's parameter space: nothing is normalizable
                out.push(PhasePoint {
                    d,
                    beta,
                    region: Region::NoExistence,
                    alpha: f64::NAN,
                });
                continue;
            }
            let g = GroupInput::pair(d, beta, theta0, 1);
            let report = classify_arp(&[g], regime);
            let scale = if regime.uses_f() { 1.0 } else { 2.0 };
            out.push(PhasePoint {
                d,
                beta,
                region: region_of(&report),
                alpha: scale * group_exponent(Flavor::Discrete, regime, &g),
            });
        }
    }
    out
}

pub fn phase_csv(points: &[PhasePoint]) -> String {
    let mut s = String::from("d,beta,region,alpha\n");
    for p in points {
        let _ = writeln!(s, "{:.16e},{:.16e},{},{:.16e}", p.d, p.beta, p.region.code(), p.alpha);
    }
    s
}
