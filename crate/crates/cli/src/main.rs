use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lmagg_cli::{run, ConfigError, ExperimentConfig, Preset, RunError, Task};

#[derive(Parser)]
#[command(name = "lmagg", version, about = "Long memory of aggregated random-pole AR/OU processes")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Existence and long-memory verdict with singular exponents.
    Classify(Common),
    /// Mixture spectral density F and transfer function H on a grid.
    Spectra(Common),
    /// Simulate a panel and form the normalized aggregate.
    Simulate(Common),
    /// Fit local power laws of single and double mixture integrals.
    LemmaCheck(Common),
    /// Region table over (d, β) for a complex pair.
    PhaseDiagram(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment description (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Start from a named model preset instead of a config file.
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    /// Output directory; defaults to `$LMAGG_OUT/<task>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "LMAGG_OUT", hide_env_values = true)]
    out_root: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Proceed even when the aggregate does not exist.
    #[arg(long)]
    force: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Also render SVG figures.
    #[arg(long)]
    svg: bool,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    Preset::ALL
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| {
            let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
            format!("unknown preset `{s}`; choose one of {}", names.join(", "))
        })
}

fn load(args: &Common, task: Task) -> Result<ExperimentConfig, RunError> {
    let mut cfg = match (&args.config, args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        (None, Some(p)) => ExperimentConfig {
            task: None,
            ..ExperimentConfig::from_preset(p)
        },
        (None, None) => return Err(ConfigError::at("<root>", "pass --config <file> or --preset <name>").into()),
    };
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    cfg.force |= args.force;
    cfg.svg |= args.svg;
    if cfg.task.is_none() && args.config.is_none() {
        cfg.task = Some(task);
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (task, args) = match &cli.verb {
        Verb::Classify(a) => (Task::Classify, a),
        Verb::Spectra(a) => (Task::Spectra, a),
        Verb::Simulate(a) => (Task::Simulate, a),
        Verb::LemmaCheck(a) => (Task::LemmaCheck, a),
        Verb::PhaseDiagram(a) => (Task::PhaseDiagram, a),
    };
    if let Some(j) = args.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("warning: --jobs ignored: {e}");
        }
    }
    let cfg = match load(args, task) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            eprint!("{}", e.to_json());
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| args.out_root.clone().unwrap_or_else(|| PathBuf::from("lmagg-out")).join(task.name()));
    match run(&cfg, task, &out) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            println!("artifacts: {}", outcome.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
