//! `alignprobe`: run the experiment pipeline, or any single stage of it.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 stage failure.

use std::path::PathBuf;
use std::process::ExitCode;

use alignprobe::matcher::MatcherKind;
use alignprobe::pipeline::{emit_report, run_pipeline, ExperimentConfig, Run, StageName};
use alignprobe::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "alignprobe", version, about = "Probe alignment scorers by optimizing a captioner against them")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment configuration (defaults apply to absent keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run seed; every stage derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Start from the smoke configuration instead of the default one.
    #[arg(long, global = true)]
    smoke: bool,
}

#[derive(Args, Debug)]
struct StageArgs {
    /// Re-run even when the stage's artifacts exist.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic world, its references and the vocabulary.
    GenData(StageArgs),
    /// Train the bag and sequence matchers.
    TrainMatcher(StageArgs),
    /// Train the captioner with cross-entropy.
    TrainCe(StageArgs),
    /// Fine-tune the CE captioner against the reward matcher.
    TrainScst {
        #[command(flatten)]
        stage: StageArgs,
        /// Reward matcher family; overrides `reward`.
        #[arg(long)]
        reward: Option<MatcherKind>,
    },
    /// Caption the test split with both checkpoints.
    Caption(StageArgs),
    /// Statistics, prefixes, patterns and unigrams of the captions.
    Analyze(StageArgs),
    /// Replacement, template and noun-scaling probes.
    Probe(StageArgs),
    /// Render the markdown report of a run directory.
    Report,
    /// Run every stage whose artifacts are missing.
    Pipeline,
    /// Print the effective configuration as TOML.
    ShowConfig,
}

enum Failure {
    Usage(String),
    Stage(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse { .. } => Failure::Usage(e.to_string()),
            e => Failure::Stage(e),
        }
    }
}

fn load_config(c: &Common) -> Result<ExperimentConfig, Failure> {
    let mut config = match &c.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
        None if c.smoke => ExperimentConfig::smoke(),
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &c.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = c.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn stage(config: ExperimentConfig, name: StageName, force: bool) -> Result<(), Failure> {
    let run = Run::create(config)?;
    if run.is_done(name) && !force {
        println!("{name}: artifacts present, skipped (use --force to re-run)");
        return Ok(());
    }
    run.run_stage(name).map_err(Failure::Stage)?;
    println!("{name}: done in {}", run.paths.root.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let mut config = load_config(&cli.common)?;
    match cli.command {
        Command::ShowConfig => print!("{}", config.to_toml()),
        Command::Pipeline => {
            let summary = run_pipeline(config).map_err(Failure::Stage)?;
            if summary.ran.is_empty() {
                println!("all stages complete in {}", summary.dir.display());
            }
            for s in &summary.ran {
                println!("{s}: done");
            }
            println!("report: {}", summary.dir.join("report/report.md").display());
        }
        Command::Report => {
            let dir = cli.common.out.unwrap_or(config.output_dir);
            let path = emit_report(&dir).map_err(Failure::Stage)?;
            println!("{}", path.display());
        }
        Command::GenData(a) => stage(config, StageName::GenData, a.force)?,
        Command::TrainMatcher(a) => stage(config, StageName::TrainMatcher, a.force)?,
        Command::TrainCe(a) => stage(config, StageName::TrainCe, a.force)?,
        Command::TrainScst { stage: a, reward } => {
            if let Some(r) = reward {
                config.reward = r;
            }
            stage(config, StageName::TrainScst, a.force)?
        }
        Command::Caption(a) => stage(config, StageName::Caption, a.force)?,
        Command::Analyze(a) => stage(config, StageName::Analyze, a.force)?,
        Command::Probe(a) => stage(config, StageName::Probe, a.force)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(2)
        }
    }
}
