//! Experiment description: a versioned TOML document naming a task, a model
//! (preset or inline) and per-task settings.

use std::f64::consts::PI;
use std::path::PathBuf;

use lmagg::laws::{AngularSpec, Flavor, RadialSpec, Shape};
use lmagg::model::{InnovationScheme, ModelConfig, DEFAULT_MAX_ORDER};
use lmagg::poles::{GroupConfig, GroupKind, PoleSign};
use lmagg::spectral::MixtureOptions;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Schema version written by this build.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ConfigError {
    pub fn at(path: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn path(&self) -> &str {
        match self {
            ConfigError::Invalid { path, .. } => path,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Classify,
    Spectra,
    Simulate,
    LemmaCheck,
    PhaseDiagram,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Classify => "classify",
            Task::Spectra => "spectra",
            Task::Simulate => "simulate",
            Task::LemmaCheck => "lemma-check",
            Task::PhaseDiagram => "phase-diagram",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Ar1Independent,
    Ar2ComplexPair,
    OuRealAndPair,
    DisappearanceHalfPi,
    DisappearanceZero,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Ar1Independent,
        Preset::Ar2ComplexPair,
        Preset::OuRealAndPair,
        Preset::DisappearanceHalfPi,
        Preset::DisappearanceZero,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Ar1Independent => "ar1-independent",
            Preset::Ar2ComplexPair => "ar2-complex-pair",
            Preset::OuRealAndPair => "ou-real-and-pair",
            Preset::DisappearanceHalfPi => "disappearance-half-pi",
            Preset::DisappearanceZero => "disappearance-zero",
        }
    }

    /// Task run when a preset is used without a config file.
    pub fn default_task(self) -> Task {
        match self {
            Preset::DisappearanceHalfPi | Preset::DisappearanceZero => Task::PhaseDiagram,
            _ => Task::Classify,
        }
    }

    /// Angle the phase-diagram presets sweep around.
    pub fn theta0(self, params: &PresetParams) -> f64 {
        match self {
            Preset::DisappearanceZero => params.theta0.unwrap_or(0.0),
            _ => params.theta0.unwrap_or(PI / 2.0),
        }
    }

    pub fn model(self, p: &PresetParams) -> Result<ModelConfig, ConfigError> {
        let innovation = p.innovation.clone().unwrap_or_default();
        let m = p.multiplicity.unwrap_or(1);
        let power = |d: f64, phi: Option<Shape>| RadialSpec::Power { d, phi };
        let pair_angle = |beta: f64, theta0: f64| AngularSpec {
            beta,
            theta0,
            psi: None,
            support: None,
        };
        let (flavor, groups) = match self {
            Preset::Ar1Independent => (
                Flavor::Discrete,
                vec![GroupConfig {
                    kind: GroupKind::RealDiscrete {
                        sign: p.sign.unwrap_or(PoleSign::Positive),
                    },
                    multiplicity: m,
                    radial: power(p.d.unwrap_or(0.5), None),
                    angular: None,
                }],
            ),
            Preset::Ar2ComplexPair | Preset::DisappearanceHalfPi | Preset::DisappearanceZero => {
                let theta0 = self.theta0(p);
                let beta = p.beta.unwrap_or(match self {
                    Preset::Ar2ComplexPair => 1.0,
                    _ => 0.9,
                });
                let support = (beta < 1.0).then(|| {
                    let w = if theta0 > 0.0 && theta0 < PI { 0.5 * theta0.min(PI - theta0) } else { 1.0 };
                    (theta0 - w, theta0 + w)
                });
                (
                    Flavor::Discrete,
                    vec![GroupConfig {
                        kind: GroupKind::ComplexPairDiscrete,
                        multiplicity: m,
                        radial: power(p.d.unwrap_or(0.5), None),
                        angular: Some(AngularSpec {
                            support,
                            ..pair_angle(beta, theta0)
                        }),
                    }],
                )
            }
            Preset::OuRealAndPair => {
                let d = p.d.unwrap_or(0.5);
                let tau0 = p.theta0.unwrap_or(3.0);
                (
                    Flavor::Continuous,
                    vec![
                        GroupConfig {
                            kind: GroupKind::RealContinuous,
                            multiplicity: m,
                            radial: power(d, None),
                            angular: None,
                        },
                        GroupConfig {
                            kind: GroupKind::ComplexPairContinuous,
                            multiplicity: m,
                            radial: power(d, None),
                            angular: Some(pair_angle(p.beta.unwrap_or(1.0), tau0)),
                        },
                    ],
                )
            }
        };
        Ok(ModelConfig {
            flavor,
            sigma: p.sigma.unwrap_or(1.0),
            groups,
            innovation,
            max_order: DEFAULT_MAX_ORDER,
        })
    }
}

/// Overrides for preset defaults. Unset fields keep the preset's values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// θ⁰ for discrete pairs, τ⁰ for the continuous pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplicity: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign: Option<PoleSign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub innovation: Option<InnovationScheme>,
}

/// Either a named preset with overrides or a full inline model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub params: PresetParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<ModelConfig>,
}

fn is_default<T: Default + PartialEq>(t: &T) -> bool {
    *t == T::default()
}

impl ModelSection {
    pub fn resolve(&self) -> Result<ModelConfig, ConfigError> {
        match (&self.preset, &self.spec) {
            (Some(p), None) => p.model(&self.params),
            (None, Some(spec)) if is_default(&self.params) => Ok(spec.clone()),
            (None, Some(_)) => Err(ConfigError::at("model.params", "params only apply to presets")),
            (Some(_), Some(_)) => Err(ConfigError::at("model", "give either `preset` or `spec`, not both")),
            (None, None) => Err(ConfigError::at("model", "missing `preset` or `spec`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Curve {
    F,
    H,
    H2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectraSection {
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_curves")]
    pub curves: Vec<Curve>,
    /// Monte-Carlo draws instead of quadrature when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo_draws: Option<usize>,
}

fn default_nodes() -> usize {
    512
}

fn default_curves() -> Vec<Curve> {
    vec![Curve::F, Curve::H2]
}

impl Default for SpectraSection {
    fn default() -> Self {
        Self {
            nodes: default_nodes(),
            curves: default_curves(),
            monte_carlo_draws: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub n: usize,
    pub t: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub keep_members: bool,
    /// Also write the smoothed periodogram of the aggregate.
    #[serde(default = "yes")]
    pub periodogram: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaKind {
    /// Single integral with a point-mass angle.
    Single,
    /// Double integral with a singular angular density.
    Double,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaSection {
    pub kind: LemmaKind,
    #[serde(default = "discrete")]
    pub flavor: Flavor,
    pub d: f64,
    pub n: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Singular angle; 0 and π select the real-axis cases.
    #[serde(default)]
    pub theta0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Shape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Shape>,
}

fn discrete() -> Flavor {
    Flavor::Discrete
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSection {
    #[serde(default = "d_range")]
    pub d_range: (f64, f64),
    #[serde(default = "beta_range")]
    pub beta_range: (f64, f64),
    #[serde(default = "grid_size")]
    pub nd: usize,
    #[serde(default = "grid_size")]
    pub nb: usize,
    /// Sweep angle; defaults to the preset's (π/2, or 0 for `disappearance-zero`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
    /// `(d, β)` points inside the long-memory region to check by slope fits.
    #[serde(default)]
    pub spots: Vec<(f64, f64)>,
}

fn d_range() -> (f64, f64) {
    (-1.0, 2.0)
}

fn beta_range() -> (f64, f64) {
    (-1.0, 1.0)
}

fn grid_size() -> usize {
    41
}

impl Default for PhaseSection {
    fn default() -> Self {
        Self {
            d_range: d_range(),
            beta_range: beta_range(),
            nd: grid_size(),
            nb: grid_size(),
            theta0: None,
            spots: Vec::new(),
        }
    }
}

/// Quadrature overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_intervals: Option<usize>,
}

impl Tolerances {
    pub fn mixture_options(&self) -> MixtureOptions {
        let base = MixtureOptions::default();
        MixtureOptions {
            inner_rel_tol: self.inner_rel_tol.unwrap_or(base.inner_rel_tol),
            outer_rel_tol: self.outer_rel_tol.unwrap_or(base.outer_rel_tol),
            max_intervals: self.max_intervals.unwrap_or(base.max_intervals),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    /// May be left out when the CLI verb names the task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub force: bool,
    /// Also render SVG figures.
    #[serde(default)]
    pub svg: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectra: Option<SpectraSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma: Option<LemmaSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<PhaseSection>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub tolerances: Tolerances,
}

impl ExperimentConfig {
    /// Minimal config running `preset` with its default task.
    pub fn from_preset(preset: Preset) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            task: Some(preset.default_task()),
            output: None,
            seed: None,
            force: false,
            svg: false,
            model: Some(ModelSection {
                preset: Some(preset),
                ..Default::default()
            }),
            spectra: None,
            simulate: None,
            lemma: None,
            phase: None,
            tolerances: Tolerances::default(),
        }
    }

    /// Parses TOML; errors carry the path of the offending field.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ConfigError::at(if path == "." { "<root>" } else { &path }, inner.message().trim())
        })?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(ConfigError::at(
                "schema",
                format!("unsupported schema {} (expected {SCHEMA_VERSION})", cfg.schema),
            ));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks the cross-field rules for `task`.
    pub fn validate(&self, task: Task) -> Result<(), ConfigError> {
        if let Some(t) = self.task {
            if t != task {
                return Err(ConfigError::at(
                    "task",
                    format!("config is for `{}` but `{}` was requested", t.name(), task.name()),
                ));
            }
        }
        let need_model = matches!(task, Task::Classify | Task::Spectra | Task::Simulate);
        if need_model && self.model.is_none() {
            return Err(ConfigError::at("model", format!("`{}` needs a model", task.name())));
        }
        if let Some(m) = &self.model {
            m.resolve()?;
        }
        match task {
            Task::Simulate => {
                if self.seed.is_none() {
                    return Err(ConfigError::at("seed", "simulate needs a seed"));
                }
                let s = self
                    .simulate
                    .as_ref()
                    .ok_or_else(|| ConfigError::at("simulate", "missing [simulate] section"))?;
                if s.n == 0 || s.t == 0 {
                    return Err(ConfigError::at("simulate", "n and t must be positive"));
                }
            }
            Task::LemmaCheck => {
                let l = self.lemma.as_ref().ok_or_else(|| ConfigError::at("lemma", "missing [lemma] section"))?;
                if l.kind == LemmaKind::Double && l.alpha.is_none() {
                    return Err(ConfigError::at("lemma.alpha", "double-integral checks need alpha"));
                }
            }
            Task::PhaseDiagram => {
                let p = self.phase.clone().unwrap_or_default();
                if p.nd == 0 || p.nb == 0 {
                    return Err(ConfigError::at("phase", "grid sizes must be positive"));
                }
            }
            Task::Spectra => {
                if self.spectra.as_ref().is_some_and(|s| s.nodes < 2) {
                    return Err(ConfigError::at("spectra.nodes", "need at least 2 nodes"));
                }
            }
            Task::Classify => {}
        }
        Ok(())
    }
}
