//! Task dispatch and artifact persistence.
//!
//! Every run directory holds the task outputs, `config.toml` (the resolved
//! config), `summary.txt` and `manifest.json`; a failed run leaves
//! `error.json` instead of the manifest.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use lmagg::asymptotics::{single_integral_check, double_integral_check, disappearance_sweep, AsymptoticsError, Ladder, AngleCase};
use lmagg::classify::{classify_model, fmt_num, Existence, LMReport, Region};
use lmagg::laws::{Flavor, Shape};
use lmagg::model::{ModelConfig, ModelSpec};
use lmagg::panel::{aggregate, PanelError, PanelOptions};
use lmagg::spectral::{
    existence_integral, frequency_grid, mixture_f, mixture_h, periodogram, Method, PeriodogramOptions, SpectralError,
    Which,
};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, Curve, ExperimentConfig, LemmaKind, Task};
use crate::svg;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid config at {0}")]
    Config(#[from] ConfigError),
    #[error("{kind}: {message}")]
    TaskFailed { kind: &'static str, message: String },
    #[error("i/o: {0}")]
    Io(String),
}

impl RunError {
    fn task(kind: &'static str, e: impl std::fmt::Display) -> Self {
        RunError::TaskFailed {
            kind,
            message: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::TaskFailed { .. } => 1,
            RunError::Config(_) => 2,
            RunError::Io(_) => 3,
        }
    }

    /// Machine-readable report written to `error.json`.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Report<'a> {
            error: &'a str,
            kind: &'a str,
            #[serde(skip_serializing_if = "Option::is_none")]
            path: Option<&'a str>,
            message: String,
        }
        let r = match self {
            RunError::Config(ConfigError::Invalid { path, message }) => Report {
                error: "config-invalid",
                kind: "schema",
                path: Some(path),
                message: message.clone(),
            },
            RunError::TaskFailed { kind, message } => Report {
                error: "task-failed",
                kind,
                path: None,
                message: message.clone(),
            },
            RunError::Io(m) => Report {
                error: "io",
                kind: "io",
                path: None,
                message: m.clone(),
            },
        };
        serde_json::to_string_pretty(&r).expect("report serializes") + "\n"
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<SpectralError> for RunError {
    fn from(e: SpectralError) -> Self {
        RunError::task("spectral", e)
    }
}

impl From<AsymptoticsError> for RunError {
    fn from(e: AsymptoticsError) -> Self {
        match e {
            AsymptoticsError::PreconditionViolated(m) => RunError::task("precondition", m),
            other => RunError::task("asymptotics", other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub dir: PathBuf,
    pub summary: String,
    /// Output files relative to `dir`, in write order.
    pub files: Vec<String>,
}

/// Collects output files in a run directory.
struct Sink {
    dir: PathBuf,
    files: Vec<String>,
}

impl Sink {
    fn put(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), RunError> {
        std::fs::write(self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), RunError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| RunError::Io(e.to_string()))?;
        self.put(name, text + "\n")
    }
}

#[derive(Serialize)]
struct FileEntry {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Timings {
    started_unix: f64,
    elapsed_seconds: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    schema: u32,
    task: &'static str,
    seed: Option<u64>,
    config: &'a ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a ModelConfig>,
    timings: Timings,
    files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Runs `task` and persists its artifacts in `out`. On failure `error.json`
/// is written there instead of the manifest.
pub fn run(cfg: &ExperimentConfig, task: Task, out: &Path) -> Result<Outcome, RunError> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let clock = Instant::now();
    let result = cfg.validate(task).map_err(RunError::from).and_then(|()| {
        std::fs::create_dir_all(out)?;
        let mut sink = Sink {
            dir: out.to_path_buf(),
            files: Vec::new(),
        };
        let model = cfg.model.as_ref().map(|m| m.resolve()).transpose()?;
        let summary = dispatch(cfg, task, model.as_ref(), &mut sink)?;
        Ok((sink, model, summary))
    });
    let (mut sink, model, summary) = match result {
        Ok(r) => r,
        Err(e) => {
            if std::fs::create_dir_all(out).is_ok() {
                let _ = std::fs::remove_file(out.join("manifest.json"));
                std::fs::write(out.join("error.json"), e.to_json())?;
            }
            return Err(e);
        }
    };
    let resolved = ExperimentConfig {
        task: Some(task),
        ..cfg.clone()
    };
    sink.put("config.toml", resolved.to_toml())?;
    sink.put("summary.txt", format!("{summary}\n"))?;
    let files = sink
        .files
        .iter()
        .map(|name| {
            let bytes = std::fs::read(sink.dir.join(name))?;
            Ok(FileEntry {
                path: name.clone(),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            })
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    let manifest = Manifest {
        tool: "lmagg",
        version: env!("CARGO_PKG_VERSION"),
        schema: resolved.schema,
        task: task.name(),
        seed: resolved.seed,
        config: &resolved,
        model: model.as_ref(),
        timings: Timings {
            started_unix: started,
            elapsed_seconds: clock.elapsed().as_secs_f64(),
        },
        files,
    };
    let _ = std::fs::remove_file(out.join("error.json"));
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| RunError::Io(e.to_string()))?;
    std::fs::write(out.join("manifest.json"), text + "\n")?;
    Ok(Outcome {
        dir: out.to_path_buf(),
        summary,
        files: sink.files,
    })
}

fn dispatch(cfg: &ExperimentConfig, task: Task, model: Option<&ModelConfig>, sink: &mut Sink) -> Result<String, RunError> {
    let build = || {
        let m = model.expect("validated");
        ModelSpec::from_config(m).map_err(|e| RunError::Config(ConfigError::at("model", e.to_string())))
    };
    match task {
        Task::Classify => classify(&build()?, sink),
        Task::Spectra => spectra(cfg, &build()?, sink),
        Task::Simulate => simulate(cfg, &build()?, sink),
        Task::LemmaCheck => lemma(cfg, sink),
        Task::PhaseDiagram => phase(cfg, sink),
    }
}

/// Closed-form verdict, settled numerically when no closed form applies.
fn existence(model: &ModelSpec, report: &LMReport) -> Result<(bool, String), RunError> {
    if report.existence != Existence::NumericCheckRequired {
        return Ok((report.exists, report.condition.clone()));
    }
    let which = if report.regime.uses_f() { Which::F } else { Which::H2 };
    let r = existence_integral(model, which)?;
    Ok((r.converges, r.condition))
}

fn refuse(condition: &str) -> RunError {
    RunError::task(
        "not-existent",
        format!("the aggregate does not exist ({condition}); use --force to override"),
    )
}

fn classify(model: &ModelSpec, sink: &mut Sink) -> Result<String, RunError> {
    let report = classify_model(model, None);
    sink.json("report.json", &report)?;
    sink.put("report.txt", report.table())?;
    let mut summary = report.summary_line();
    if report.existence == Existence::NumericCheckRequired {
        let which = if report.regime.uses_f() { Which::F } else { Which::H2 };
        let r = existence_integral(model, which)?;
        sink.json("existence.json", &r)?;
        let _ = write!(summary, "\nnumeric existence: converges={}", r.converges);
    }
    Ok(summary)
}

fn spectra(cfg: &ExperimentConfig, model: &ModelSpec, sink: &mut Sink) -> Result<String, RunError> {
    let report = classify_model(model, None);
    let (exists, condition) = existence(model, &report)?;
    if !exists && !cfg.force {
        return Err(refuse(&condition));
    }
    let s = cfg.spectra.clone().unwrap_or_default();
    let opts = cfg.tolerances.mixture_options();
    let method = match s.monte_carlo_draws {
        Some(draws) => Method::MonteCarlo {
            draws,
            seed: cfg.seed.unwrap_or(0),
        },
        None => Method::Quadrature,
    };
    let grid = frequency_grid(model, s.nodes);
    let wants = |c: Curve| s.curves.contains(&c);
    let mut plotted = Vec::new();
    if wants(Curve::F) {
        let f = mixture_f(model, &grid, &method, &opts)?;
        sink.put("f.csv", f.to_csv())?;
        plotted.push(("F", f.real_values().expect("real curve").to_vec()));
    }
    if wants(Curve::H) || wants(Curve::H2) {
        let h = mixture_h(model, &grid, &method, &opts)?;
        if wants(Curve::H) {
            sink.put("h.csv", h.to_csv())?;
        }
        if wants(Curve::H2) {
            let h2 = h.magnitude_squared();
            sink.put("h2.csv", h2.to_csv())?;
            plotted.push(("|H|²", h2.real_values().expect("real curve").to_vec()));
        }
    }
    if cfg.svg && !plotted.is_empty() {
        let series: Vec<svg::Series> = plotted
            .iter()
            .map(|(label, y)| svg::Series { label, x: &grid, y })
            .collect();
        sink.put("spectra.svg", svg::line_plot("mixture spectra", "frequency", &series, true))?;
    }
    let names: Vec<&str> = s
        .curves
        .iter()
        .map(|c| match c {
            Curve::F => "f",
            Curve::H => "h",
            Curve::H2 => "h2",
        })
        .collect();
    Ok(format!("exists={exists} curves={} nodes={}", names.join(","), grid.len()))
}

fn simulate(cfg: &ExperimentConfig, model: &ModelSpec, sink: &mut Sink) -> Result<String, RunError> {
    let s = cfg.simulate.as_ref().expect("validated");
    let seed = cfg.seed.expect("validated");
    let opts = PanelOptions {
        force: cfg.force,
        keep_members: s.keep_members,
        step: s.step,
        burn_in: s.burn_in,
    };
    let run = aggregate(model, s.n, s.t, seed, &opts).map_err(|e| match e {
        PanelError::NotExistent(c) => refuse(&c),
        other => RunError::task("simulation", other),
    })?;
    let written = run
        .write_dir(model, &sink.dir, s.keep_members)
        .map_err(|e| RunError::Io(e.to_string()))?;
    for p in written {
        sink.files.push(p.file_name().expect("file").to_string_lossy().into_owned());
    }
    if s.periodogram {
        let p = periodogram(
            &run.aggregate,
            &PeriodogramOptions {
                half_width: None,
                step: run.step.unwrap_or(1.0),
            },
        )?;
        sink.put("periodogram.csv", p.to_csv())?;
        if cfg.svg {
            let y = p.real_values().expect("real curve");
            let series = [svg::Series {
                label: "smoothed periodogram",
                x: &p.grid,
                y,
            }];
            sink.put("periodogram.svg", svg::line_plot("aggregate periodogram", "frequency", &series, true))?;
        }
    }
    let mut summary = format!(
        "n={} t={} normalization={} max_burn_in={}",
        run.n,
        run.t,
        fmt_num(run.normalization),
        run.burn_in.iter().max().copied().unwrap_or(0)
    );
    for w in &run.warnings {
        let _ = write!(summary, "\nwarning: {w}");
    }
    Ok(summary)
}

fn angle_case(flavor: Flavor, theta0: f64) -> AngleCase {
    if theta0 == 0.0 {
        AngleCase::Zero
    } else if flavor == Flavor::Discrete && (theta0 - PI).abs() < 1e-12 {
        AngleCase::Pi
    } else {
        AngleCase::Interior(theta0)
    }
}

fn lemma(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<String, RunError> {
    let l = cfg.lemma.as_ref().expect("validated");
    let phi = l.phi.clone().unwrap_or(match l.flavor {
        Flavor::Discrete => Shape::Constant,
        Flavor::Continuous => Shape::ExpDecay { rate: 1.0 },
    });
    let psi = l.psi.clone().unwrap_or_default();
    let case = angle_case(l.flavor, l.theta0);
    let fit = match l.kind {
        LemmaKind::Single => single_integral_check(l.flavor, l.d, l.n, case, &phi)?,
        LemmaKind::Double => {
            double_integral_check(l.flavor, l.d, l.n, l.alpha.expect("validated"), case, &phi, &psi, &Ladder::default())?
        }
    };
    sink.json("fit.json", &fit)?;
    sink.put("fit.csv", fit.to_csv())?;
    if cfg.svg {
        let (x, y): (Vec<f64>, Vec<f64>) = fit
            .ladder
            .iter()
            .filter_map(|p| p.diff_slope.map(|s| (p.delta.log10(), s)))
            .unzip();
        let target = vec![fit.predicted_exponent; x.len()];
        let series = [
            svg::Series {
                label: "local exponent",
                x: &x,
                y: &y,
            },
            svg::Series {
                label: "predicted",
                x: &x,
                y: &target,
            },
        ];
        sink.put("fit.svg", svg::line_plot("local exponent", "log10 offset", &series, false))?;
    }
    let constant = match fit.predicted_constant {
        Some(c) => format!(" constant fitted={:.6e} predicted={c:.6e}", fit.fitted_constant),
        None => String::new(),
    };
    Ok(format!(
        "exponent fitted={:.6} predicted={}{constant} power_law={}",
        fit.fitted_exponent,
        fmt_num(fit.predicted_exponent),
        fit.power_law
    ))
}

fn phase(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<String, RunError> {
    let p = cfg.phase.clone().unwrap_or_default();
    let preset = cfg.model.as_ref().and_then(|m| m.preset.map(|pr| (pr, m.params.clone())));
    let theta0 = p
        .theta0
        .or_else(|| preset.as_ref().map(|(pr, params)| pr.theta0(params)))
        .unwrap_or(PI / 2.0);
    let table = disappearance_sweep(p.d_range, p.beta_range, p.nd, p.nb, theta0, &p.spots)?;
    sink.put("phase.csv", table.to_csv())?;
    if !table.spots.is_empty() {
        sink.put("spots.csv", table.spots_csv())?;
    }
    if cfg.svg {
        let codes: Vec<u8> = table.points.iter().map(|q| q.region.code()).collect();
        sink.put(
            "phase.svg",
            svg::region_map(
                &format!("phase diagram, θ⁰ = {}", fmt_num(theta0)),
                p.d_range,
                p.beta_range,
                p.nd,
                p.nb,
                &codes,
                &["no aggregate", "exists, no LM", "long memory"],
            ),
        )?;
    }
    let count = |r: Region| table.points.iter().filter(|q| q.region == r).count();
    let mut summary = format!(
        "grid={}x{} theta0={} no-existence={} exists-no-lm={} long-memory={}",
        p.nd,
        p.nb,
        fmt_num(theta0),
        count(Region::NoExistence),
        count(Region::ExistsNoLm),
        count(Region::LongMemory)
    );
    if !table.spots.is_empty() {
        let worst = table.spots.iter().map(|s| (s.fitted - s.predicted).abs()).fold(0.0, f64::max);
        let _ = write!(summary, " spots={} max_spot_error={worst:.4}", table.spots.len());
    }
    Ok(summary)
}
