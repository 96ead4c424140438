use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use evopca::es::ObjectiveMode;
use evopca::harness::{
    dataset_source, emit_outputs, ensure_writable, parse_methods, run_experiment, ConfigFile,
    ExperimentConfig,
};
use evopca::{Error, Result};

#[derive(Parser)]
#[command(name = "evopca", version, about = "Non-linear PCA experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run repeated experiments and write results to --out.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with defaults for any of the options below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in dataset (circles, spheres, stripes) or path to a CSV file.
    #[arg(long)]
    dataset: Option<String>,
    /// JSON schema for a CSV dataset.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Comma-separated methods: pca, kpca, es, es-global, es-partial, gp.
    #[arg(long = "method")]
    methods: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Base seed; repeat r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    /// Generations for ES and GP.
    #[arg(long)]
    generations: Option<usize>,
    /// Population size for ES and GP.
    #[arg(long)]
    population: Option<usize>,
    /// ES noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// ES learning rate.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Generations between full eigendecompositions in ES.
    #[arg(long)]
    pca_refresh: Option<usize>,
    /// Objective used by the bare `es` method.
    #[arg(long, value_parser = ["global", "partial"])]
    objective: Option<String>,
    /// Subtract the population mean objective in ES updates.
    #[arg(long)]
    subtract_mean: bool,
    /// Worker threads for repeats (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_config(args: RunArgs) -> Result<ExperimentConfig> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let dataset = args
        .dataset
        .or(file.dataset)
        .ok_or_else(|| Error::Config("--dataset is required".into()))?;
    let schema = args.schema.or(file.schema);
    let out = args
        .out
        .or(file.out)
        .ok_or_else(|| Error::Config("--out is required".into()))?;
    let objective = match args.objective {
        Some(o) => o.parse()?,
        None => file.objective.unwrap_or(ObjectiveMode::Global),
    };

    let mut cfg = ExperimentConfig::new(dataset_source(&dataset, schema.as_deref())?, out);
    if let Some(list) = args.methods {
        cfg.methods = parse_methods(&list, objective)?;
    } else if let Some(list) = file.methods {
        cfg.methods = parse_methods(&list.join(","), objective)?;
    }
    if let Some(es) = file.es {
        cfg.es = es;
    }
    if let Some(gp) = file.gp {
        cfg.gp = gp;
    }
    cfg.k = args.k.or(file.k).unwrap_or(cfg.k);
    cfg.repeats = args.repeats.or(file.repeats).unwrap_or(cfg.repeats);
    cfg.seed = args.seed.or(file.seed).unwrap_or(cfg.seed);
    cfg.workers = args.workers.or(file.workers);
    if let Some(g) = args.generations {
        cfg.es.generations = g;
        cfg.gp.generations = g;
    }
    if let Some(p) = args.population {
        cfg.es.population = p;
        cfg.gp.population = p;
    }
    if let Some(s) = args.sigma {
        cfg.es.noise_std = s;
    }
    if let Some(a) = args.alpha {
        cfg.es.learning_rate = a;
    }
    if let Some(b) = args.batch_size {
        cfg.es.batch_size = b;
    }
    if let Some(m) = args.pca_refresh {
        cfg.es.pca_refresh = m;
    }
    if args.subtract_mean {
        cfg.es.subtract_mean = true;
    }
    cfg.es.objective = objective;
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = build_config(args)?;
    ensure_writable(&cfg.out)?;
    let results = run_experiment(&cfg)?;
    for path in emit_outputs(&results, &cfg.out)? {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
