//! Command-line interface over the pipeline stages.
//!
//! Exit codes: 0 success, 1 stage failure, 2 usage or configuration error,
//! 3 verification-independence violation.

use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::pipeline::{
    append_manifest, assemble_case, calibrate_stage, data_test, eval_model, gen_data, report,
    system_test, train_cage_stage, train_detector_stage, verify_model, ManifestEntry,
    OutputLock, PipelineConfig, StageOutcome, OUT_ENV_VAR,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INDEPENDENCE: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Machine,
}

#[derive(Debug, Parser)]
#[command(
    name = "paeb",
    about = "Pedestrian automatic emergency braking: data, models, tests, safety case",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Random seed (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Campaign grid scale in (0, 1] (overrides the config file).
    #[arg(long, global = true)]
    pub scale: Option<f64>,
    /// JSON pipeline configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $PAEB_OUT, else ./paeb-out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format for the command summary.
    #[arg(long, global = true, value_enum, default_value = "text")]
    pub format: OutputFormat,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the scenario campaign and dataset splits.
    GenData,
    /// Run the data expectation suite against the generated campaign.
    DataTest,
    /// Train the pedestrian detector on the development split.
    TrainDetector,
    /// Train and calibrate the safety-cage autoencoder.
    TrainCage,
    /// Calibrate the detection confidence threshold and bundle the model.
    Calibrate,
    /// Evaluate the model bundle on the internal test split.
    EvalModel,
    /// Evaluate the model bundle on the sequestered verification split.
    VerifyModel,
    /// Concretize and execute the system-level test suites.
    SystemTest,
    /// Assemble and validate the safety assurance case.
    AssembleCase,
    /// Summarize the run manifest and assembled case.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::DataTest => "data-test",
            Command::TrainDetector => "train-detector",
            Command::TrainCage => "train-cage",
            Command::Calibrate => "calibrate",
            Command::EvalModel => "eval-model",
            Command::VerifyModel => "verify-model",
            Command::SystemTest => "system-test",
            Command::AssembleCase => "assemble-case",
            Command::Report => "report",
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(scale) = cli.scale {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::Config(format!(
                "scale must be in (0, 1], got {scale}"
            )));
        }
        config.scale = scale;
    }
    Ok(config)
}

fn output_root(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV_VAR).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("paeb-out"))
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

fn execute(cli: &Cli) -> Result<StageOutcome> {
    let config = load_config(cli)?;
    let out = output_root(cli);
    let _lock = OutputLock::acquire(&out)?;
    let started = now_ms();
    let outcome = match cli.command {
        Command::GenData => gen_data(&config, &out)?,
        Command::DataTest => data_test(&config, &out)?,
        Command::TrainDetector => train_detector_stage(&config, &out)?,
        Command::TrainCage => train_cage_stage(&config, &out)?,
        Command::Calibrate => calibrate_stage(&config, &out)?,
        Command::EvalModel => eval_model(&config, &out)?,
        Command::VerifyModel => verify_model(&config, &out)?,
        Command::SystemTest => system_test(&config, &out)?,
        Command::AssembleCase => assemble_case(&config, &out)?,
        Command::Report => report(&config, &out)?,
    };
    append_manifest(
        &out,
        &ManifestEntry {
            command: cli.command.name().to_string(),
            config_hash: config.config_hash(),
            seed: config.seed,
            inputs: outcome.inputs.clone(),
            outputs: outcome.outputs.clone(),
            produced_artifacts: outcome.artifacts.clone(),
            started_unix_ms: started,
            finished_unix_ms: now_ms(),
        },
    )?;
    Ok(outcome)
}

/// Run the CLI on the given arguments (including argv[0]) and return the
/// process exit code. Factored out of `main` so tests can drive it.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            match cli.format {
                OutputFormat::Text => println!("{}", outcome.summary),
                OutputFormat::Machine => println!("{}", outcome.machine),
            }
            if outcome.ok {
                EXIT_OK
            } else {
                EXIT_FAILURE
            }
        }
        Err(Error::Independence(message)) => {
            eprintln!("error: {message}");
            EXIT_INDEPENDENCE
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_is_a_usage_error() {
        assert_eq!(run(["paeb", "frobnicate"]), EXIT_USAGE);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(["paeb", "--help"]), EXIT_OK);
    }

    #[test]
    fn out_of_range_scale_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o");
        assert_eq!(
            run([
                "paeb",
                "gen-data",
                "--scale",
                "1.5",
                "--out",
                out.to_str().unwrap()
            ]),
            EXIT_USAGE
        );
    }

    #[test]
    fn report_on_empty_directory_succeeds() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o");
        assert_eq!(run(["paeb", "report", "--out", out.to_str().unwrap()]), EXIT_OK);
        // The report command itself is recorded in the manifest.
        let entries = crate::pipeline::read_manifest(&out).unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].command, "report");
    }
}
