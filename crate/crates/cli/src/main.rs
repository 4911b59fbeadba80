use clap::{Args, Parser, Subcommand};
use cocycle_stability::experiment::config::{SetSpec, UniformMode};
use cocycle_stability::experiment::{find_template, load_config, registry_list, run_experiment, ExperimentConfig, ExperimentKind};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

/// Run cocycle stability experiments from config files.
///
/// Exit status: 0 positive verdict, 2 negative, 3 inconclusive, 1 error or
/// violated inequality.
#[derive(Parser)]
#[command(name = "cocycle-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the largest Lyapunov exponent.
    Lyapunov {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        orbits: Option<usize>,
        #[arg(long)]
        nmax: Option<u64>,
    },
    /// p-sums or p-integrals over sampled points and directions.
    Datko {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        directions: Option<usize>,
        #[arg(long)]
        nmax: Option<u64>,
    },
    /// Adapted norm and induced-cocycle contraction on a set.
    Induce {
        #[command(flatten)]
        common: Common,
        /// `whole`, `cylinder:0,1` or `interval:0,0.25`.
        #[arg(long)]
        set: Option<String>,
        #[arg(long)]
        returns: Option<usize>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Tempered envelope along sampled orbits.
    Temper {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        horizon: Option<u64>,
    },
    /// Uniform-stability certificate from maximal growth.
    Uniform {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        nmax: Option<usize>,
        #[arg(long)]
        periods: Option<usize>,
        /// `exact` or `sampled`.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Continuous-time p-integrals, discretization and uniform decay.
    Flow {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long = "t-budget")]
        t_budget: Option<usize>,
    },
    /// List the built-in templates, or print one.
    Registry {
        /// Print the config text of this template.
        #[arg(long)]
        show: Option<String>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config file.
    #[arg(long, conflicts_with = "template", required_unless_present = "template")]
    config: Option<PathBuf>,
    /// Built-in template name instead of a config file.
    #[arg(long)]
    template: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "COCYCLE_OUT_DIR")]
    out: Option<PathBuf>,
    /// Cut every budget to a quick check.
    #[arg(long)]
    smoke: bool,
}

struct Failure {
    code: &'static str,
    message: String,
}

impl Failure {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

fn load(common: &Common, kind: ExperimentKind) -> Result<ExperimentConfig, Failure> {
    let mut config = match (&common.config, &common.template) {
        (Some(path), _) => load_config(path).map_err(|e| Failure::new("config", e.to_string()))?,
        (None, Some(name)) => find_template(name)
            .ok_or_else(|| Failure::new("config", format!("no template named {name:?}")))?
            .config()
            .map_err(|e| Failure::new("config", e.to_string()))?,
        (None, None) => return Err(Failure::new("config", "--config or --template is required")),
    };
    if config.kind != kind {
        return Err(Failure::new(
            "config",
            format!("config describes a {} experiment, not {}", config.kind.name(), kind.name()),
        ));
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if common.smoke {
        config = config.smoke();
    }
    Ok(config)
}

fn parse_set(s: &str) -> Result<SetSpec, Failure> {
    let bad = || Failure::new("config", format!("`--set {s}` must be whole, cylinder:A,B,.. or interval:A,B"));
    match s.split_once(':') {
        None if s == "whole" => Ok(SetSpec::Whole),
        Some(("cylinder", word)) => word
            .split(',')
            .map(|a| a.trim().parse::<u8>().map_err(|_| bad()))
            .collect::<Result<_, _>>()
            .map(SetSpec::Cylinder),
        Some(("interval", bounds)) => match bounds.split_once(',') {
            Some((a, b)) => Ok(SetSpec::Intervals(vec![(a.trim().to_string(), b.trim().to_string())])),
            None => Err(bad()),
        },
        _ => Err(bad()),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn run(command: Command) -> Result<i32, Failure> {
    let (common, config) = match command {
        Command::Registry { show: Some(name) } => {
            let t = find_template(&name).ok_or_else(|| Failure::new("config", format!("no template named {name:?}")))?;
            print!("{}", t.text);
            return Ok(0);
        }
        Command::Registry { show: None } => {
            let list: Vec<_> = registry_list()
                .into_iter()
                .map(|t| {
                    let kind = t.config().map(|c| c.kind.name()).unwrap_or("invalid");
                    json!({ "name": t.name, "kind": kind, "statement": t.statement })
                })
                .collect();
            println!("{}", serde_json::to_string_pretty(&list).expect("serializes"));
            return Ok(0);
        }
        Command::Lyapunov { common, orbits, nmax } => {
            let mut c = load(&common, ExperimentKind::Lyapunov)?;
            set(&mut c.lyapunov.orbits, orbits);
            set(&mut c.lyapunov.n_max, nmax);
            (common, c)
        }
        Command::Datko {
            common,
            p,
            tolerance,
            points,
            directions,
            nmax,
        } => {
            let mut c = load(&common, ExperimentKind::Datko)?;
            set(&mut c.datko.p, p);
            set(&mut c.datko.tolerance, tolerance);
            set(&mut c.datko.points, points);
            set(&mut c.datko.directions, directions);
            set(&mut c.datko.n_max, nmax);
            (common, c)
        }
        Command::Induce {
            common,
            set: set_arg,
            returns,
            points,
        } => {
            let mut c = load(&common, ExperimentKind::Induce)?;
            set(&mut c.induce.set, set_arg.as_deref().map(parse_set).transpose()?);
            set(&mut c.induce.returns, returns);
            set(&mut c.induce.points, points);
            (common, c)
        }
        Command::Temper { common, epsilon, horizon } => {
            let mut c = load(&common, ExperimentKind::Temper)?;
            if epsilon.is_some() {
                c.temper.epsilon = epsilon;
            }
            set(&mut c.temper.horizon, horizon);
            (common, c)
        }
        Command::Uniform {
            common,
            nmax,
            periods,
            mode,
        } => {
            let mut c = load(&common, ExperimentKind::Uniform)?;
            set(&mut c.uniform.n_max, nmax);
            set(&mut c.uniform.periods, periods);
            let mode = match mode.as_deref() {
                None => None,
                Some("exact") => Some(UniformMode::Exact),
                Some("sampled") => Some(UniformMode::Sampled),
                Some(m) => return Err(Failure::new("config", format!("`--mode {m}` must be exact or sampled"))),
            };
            set(&mut c.uniform.mode, mode);
            (common, c)
        }
        Command::Flow {
            common,
            p,
            points,
            t_budget,
        } => {
            let mut c = load(&common, ExperimentKind::Flow)?;
            set(&mut c.flow.p, p);
            set(&mut c.flow.points, points);
            set(&mut c.flow.t_budget, t_budget);
            (common, c)
        }
    };
    config.validate().map_err(|e| Failure::new("config", e.to_string()))?;
    let out = common
        .out
        .clone()
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("cocycle-out").join(config.kind.name()));
    let record = run_experiment(&config, &out).map_err(|e| Failure::new(e.code(), e.to_string()))?;
    println!("{}", serde_json::to_string_pretty(&record).expect("serializes"));
    Ok(record.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(f) => {
            let report = json!({ "error": f.code, "message": f.message });
            println!("{}", serde_json::to_string_pretty(&report).expect("serializes"));
            eprintln!("error: {}", f.message);
            ExitCode::from(1)
        }
    }
}
