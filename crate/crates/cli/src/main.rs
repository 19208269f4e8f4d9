use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use typicality_core::config::{RunConfig, TextPrototype};
use typicality_core::datastore::{load_logits, load_ratings, read_embedding_records};
use typicality_core::fixture::PlantedFixture;
use typicality_core::model::validate_embedding_set;
use typicality_core::pipeline::{load_inputs, run_stability, run_with_inputs};
use typicality_core::report::{
    stability_summary_line, write_run_outputs, write_stability, SupercategoryMap,
};
use typicality_core::Error;

#[derive(Parser)]
#[command(
    name = "typicality",
    version,
    about = "Score model embeddings against human typicality ratings"
)]
struct Cli {
    /// Cap on worker threads (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that every input the config references loads and validates.
    Validate(RunArgs),
    /// Run every enabled evaluation and write result tables.
    Eval(RunArgs),
    /// Single-image resampling study for the configured model and category.
    Stability(RunArgs),
    /// Write a seeded synthetic dataset and a matching config.
    GenFixture(FixtureArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_prototype)]
    text_prototype: Option<TextPrototype>,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 27)]
    categories: usize,
    #[arg(long, default_value_t = 10)]
    exemplars: usize,
    #[arg(long, default_value_t = 8)]
    images: usize,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long, default_value_t = 0.05)]
    image_jitter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of text-only and of image-only models.
    #[arg(long, default_value_t = 3)]
    models: usize,
}

fn parse_prototype(s: &str) -> Result<TextPrototype, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Exit codes: 0 success, 1 data or evaluation error, 2 usage or config error.
enum Failure {
    Data(String),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut config = RunConfig::load(&args.config).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(p) = args.text_prototype {
        config.text_prototype = p;
    }
    config.validate()?;
    let referenced = [
        Some(&config.ratings_path),
        config.embeddings_path.as_ref(),
        config.logits_path.as_ref(),
        config.supercategories_path.as_ref(),
    ];
    if let Some(missing) = referenced.into_iter().flatten().find(|p| !p.exists()) {
        return Err(Failure::Usage(format!(
            "{} does not exist",
            missing.display()
        )));
    }
    Ok(config)
}

fn validate(args: &RunArgs) -> Result<(), Failure> {
    let config = load_config(args)?;
    let mut problems = Vec::new();
    if let Err(e) = load_ratings(&config.ratings_path) {
        problems.push(format!("{}: {e}", config.ratings_path.display()));
    }
    if let Some(path) = &config.embeddings_path {
        match read_embedding_records(path) {
            Ok(records) => {
                let report = validate_embedding_set(&records);
                problems.extend(
                    report
                        .violations
                        .iter()
                        .map(|v| format!("{}: {v}", path.display())),
                );
            }
            Err(e) => problems.push(format!("{}: {e}", path.display())),
        }
    }
    if let Some(path) = &config.logits_path {
        if let Err(e) = load_logits(path) {
            problems.push(format!("{}: {e}", path.display()));
        }
    }
    if let Some(path) = &config.supercategories_path {
        if let Err(e) = SupercategoryMap::load(path) {
            problems.push(format!("{}: {e}", path.display()));
        }
    }
    if problems.is_empty() {
        return Ok(());
    }
    for p in &problems {
        println!("{p}");
    }
    Err(Failure::Data(format!(
        "{} problem(s) found",
        problems.len()
    )))
}

fn supercategories(config: &RunConfig) -> Result<SupercategoryMap, Failure> {
    match &config.supercategories_path {
        Some(p) => Ok(SupercategoryMap::load(p)?),
        None => Ok(SupercategoryMap::default()),
    }
}

fn eval(args: &RunArgs) -> Result<(), Failure> {
    let config = load_config(args)?;
    let supers = supercategories(&config)?;
    let inputs = load_inputs(&config)?;
    let run = run_with_inputs(&config, &inputs)?;
    let written = write_run_outputs(&run, &supers, &config.output_dir)?;
    if !run.warnings.is_empty() {
        log::warn!("{} unit(s) skipped; see manifest.json", run.warnings.len());
    }
    println!(
        "run {}: wrote {} file(s) to {}",
        run.run_id,
        written.len(),
        config.output_dir.display()
    );
    Ok(())
}

fn stability(args: &RunArgs) -> Result<(), Failure> {
    let config = load_config(args)?;
    let study = config
        .stability
        .as_ref()
        .ok_or_else(|| Failure::Usage("config has no [stability] section".into()))?;
    let seed = config.stability_seed().unwrap_or(config.seed);
    let inputs = load_inputs(&config)?;
    let store = inputs
        .store
        .as_ref()
        .expect("validated config has embeddings");
    let report = run_stability(
        store,
        &inputs.ratings,
        &study.model_id,
        &study.category,
        study.trials,
        seed,
    )?;
    write_stability(&report, &config.output_dir.join("stability.csv"))?;
    println!("{}", stability_summary_line(&report));
    Ok(())
}

fn gen_fixture(args: &FixtureArgs) -> Result<(), Failure> {
    let names = |prefix: &str| {
        (0..args.models)
            .map(|i| format!("{prefix}-{i}"))
            .collect::<Vec<_>>()
    };
    let fixture = PlantedFixture {
        categories: args.categories,
        exemplars: args.exemplars,
        images: args.images,
        dim: args.dim,
        sigma: args.sigma,
        image_jitter: args.image_jitter,
        seed: args.seed,
        text_models: names("text"),
        vision_models: names("vision"),
        clip_model: Some("clip".into()),
    };
    fixture.write(&args.out)?;
    let quoted = |v: &[String]| {
        v.iter()
            .map(|m| format!("\"{m}\""))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let config = format!(
        "embeddings_path = \"embeddings.jsonl\"\n\
         ratings_path = \"ratings.csv\"\n\
         logits_path = \"logits.csv\"\n\
         text_models = [{}]\n\
         vision_models = [{}]\n\
         clip_model = \"clip\"\n\
         clip_approaches = [\"category\", \"mean\", \"appended\", \"cross_modality\"]\n\
         output_dir = \"results\"\n\
         seed = {}\n\
         \n\
         [stability]\n\
         model_id = \"vision-0\"\n\
         category = \"cat00\"\n\
         trials = 100\n",
        quoted(&fixture.text_models),
        quoted(&fixture.vision_models),
        args.seed
    );
    let path = args.out.join("run.toml");
    std::fs::write(&path, config).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    println!("wrote fixture to {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Validate(a) => validate(a),
        Command::Eval(a) => eval(a),
        Command::Stability(a) => stability(a),
        Command::GenFixture(a) => gen_fixture(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
