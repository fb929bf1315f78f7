use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use molrange_core::pipeline::{run, Command, Overrides, PipelineConfig, Preset, CONFIG_ENV};

#[derive(Parser)]
#[command(name = "molrange", version, about = "Property-constrained molecule generation")]
struct Cli {
    #[command(subcommand)]
    command: Stage,
    /// Config file (`section.key = value` lines).
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    preset: Option<PresetArg>,
    /// Number of molecules for `generate`.
    #[arg(long, global = true)]
    count: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Stage {
    /// Train the descriptor-to-SMILES transformer.
    TrainEmbedder,
    /// Write embedding matrices for a SMILES file.
    Embed,
    /// Train the property classifier on labeled embeddings.
    TrainClassifier,
    /// Train the range-constrained GAN.
    TrainGan,
    /// Sample, score and decode new molecules.
    Generate,
    /// Compute the generation report.
    Evaluate,
    /// Write descriptors and fingerprints of the corpus as CSV.
    ExportDescriptors,
}

#[derive(ValueEnum, Clone, Copy)]
enum PresetArg {
    Paper,
    Desk,
}

impl From<Stage> for Command {
    fn from(s: Stage) -> Self {
        match s {
            Stage::TrainEmbedder => Command::TrainEmbedder,
            Stage::Embed => Command::Embed,
            Stage::TrainClassifier => Command::TrainClassifier,
            Stage::TrainGan => Command::TrainGan,
            Stage::Generate => Command::Generate,
            Stage::Evaluate => Command::Evaluate,
            Stage::ExportDescriptors => Command::ExportDescriptors,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("error: no config file; pass --config or set {CONFIG_ENV}");
        return ExitCode::from(2);
    };
    let overrides = Overrides {
        seed: cli.seed,
        preset: cli.preset.map(|p| match p {
            PresetArg::Paper => Preset::Paper,
            PresetArg::Desk => Preset::Desk,
        }),
        count: cli.count,
    };
    let cmd = Command::from(cli.command);
    let result = PipelineConfig::load(&config, &overrides).and_then(|cfg| run(cmd, &cfg, cli.force));
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}: {e}", cmd.name());
            ExitCode::FAILURE
        }
    }
}
