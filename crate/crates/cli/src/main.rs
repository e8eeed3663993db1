use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use reask_core::dataset::{load_dataset, ColumnMapping, Dataset, DatasetFormat};
use reask_core::harness::{self, BackendConfig, HarnessError, RunConfig};
use reask_core::inference::live::DEFAULT_API_KEY_ENV;
use reask_core::inference::sim::SimConfig;
use reask_core::policy::TriggerThresholds;
use reask_core::runlog::RunMode;

const DEFAULT_GRID_TAU_H: [f64; 4] = [0.7, 0.9, 1.1, 1.3];
const DEFAULT_GRID_TAU_MSP: [f64; 4] = [0.3, 0.4, 0.5, 0.6];

#[derive(Parser)]
#[command(name = "reask", version, about = "Uncertainty-gated re-asking for multiple-choice QA")]
struct Cli {
    /// TOML file with defaults for any flag
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Suppress progress output
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Mode {
    Baseline,
    Tr,
    Ur,
    PromptOnly,
}

impl From<Mode> for RunMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Baseline => RunMode::Baseline,
            Mode::Tr => RunMode::Tr,
            Mode::Ur => RunMode::Ur,
            Mode::PromptOnly => RunMode::PromptOnly,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Backend {
    Live,
    Sim,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum InputFormat {
    /// One JSON record per line
    Canonical,
    /// MMLU-Pro CSV export
    MmluPro,
    /// MMLU CSV export
    Mmlu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum OutputFormat {
    Text,
    Csv,
    Json,
}

#[derive(clap::Args, Debug, Default)]
struct RunArgs {
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    dataset_format: Option<InputFormat>,
    #[arg(long, value_enum)]
    backend: Option<Backend>,
    /// Chat-completions URL for the live backend
    #[arg(long)]
    endpoint: Option<String>,
    /// Environment variable holding the API key
    #[arg(long)]
    api_key_env: Option<String>,
    /// Ground-truth file written by `synth`, for the sim backend
    #[arg(long)]
    sim_truth: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    tau_h: Option<f64>,
    #[arg(long)]
    tau_msp: Option<f64>,
    #[arg(long)]
    parallel: Option<usize>,
    /// Maximum backend calls, retries included
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run log to create or resume
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a mode over a dataset, resuming an existing log
    Run(RunArgs),
    /// Replay a uniform re-ask log over a threshold grid
    Sweep {
        log: PathBuf,
        #[arg(long, value_delimiter = ',')]
        grid_tau_h: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        grid_tau_msp: Option<Vec<f64>>,
        /// Write plot data (CSV) here
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
    },
    /// Report accuracies, transitions, statistics and subject table for a log
    Analyze {
        log: PathBuf,
        /// Orders subjects by the dataset and checks records against it
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum)]
        dataset_format: Option<InputFormat>,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Map an entropy threshold between option counts
    Transfer {
        #[arg(long)]
        tau_h: f64,
        #[arg(long, default_value_t = 10)]
        k_src: usize,
        #[arg(long, default_value_t = 4)]
        k_dst: usize,
    },
    /// Write a synthetic dataset and its hidden ground truth
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset output (canonical format)
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth output; defaults to <out>.truth.jsonl
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Check a log's integrity
    Verify {
        log: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum)]
        dataset_format: Option<InputFormat>,
    },
}

/// Config-file keys; every one mirrors a flag of the same name.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    mode: Option<Mode>,
    dataset: Option<PathBuf>,
    dataset_format: Option<InputFormat>,
    backend: Option<Backend>,
    endpoint: Option<String>,
    api_key_env: Option<String>,
    sim_truth: Option<PathBuf>,
    model: Option<String>,
    tau_h: Option<f64>,
    tau_msp: Option<f64>,
    parallel: Option<usize>,
    budget: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    grid_tau_h: Option<Vec<f64>>,
    grid_tau_msp: Option<Vec<f64>>,
    format: Option<OutputFormat>,
    quiet: Option<bool>,
    /// Simulator parameters
    sim: Option<SimConfig>,
}

fn read_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())).into())
}

fn dataset_format(f: InputFormat) -> DatasetFormat {
    match f {
        InputFormat::Canonical => DatasetFormat::CanonicalLines,
        InputFormat::MmluPro => DatasetFormat::DelimitedTable(ColumnMapping::mmlu_pro()),
        InputFormat::Mmlu => DatasetFormat::DelimitedTable(ColumnMapping::mmlu()),
    }
}

fn config_error(msg: &str) -> anyhow::Error {
    HarnessError::Config(msg.to_string()).into()
}

fn run_config(args: RunArgs, file: &FileConfig, quiet: bool) -> Result<RunConfig> {
    let mode = args.mode.or(file.mode).ok_or_else(|| config_error("--mode is required"))?;
    let dataset = args
        .dataset
        .or_else(|| file.dataset.clone())
        .ok_or_else(|| config_error("--dataset is required"))?;
    let out = args.out.or_else(|| file.out.clone()).ok_or_else(|| config_error("--out is required"))?;
    let backend = match args.backend.or(file.backend).unwrap_or(Backend::Sim) {
        Backend::Live => BackendConfig::Live {
            endpoint: args
                .endpoint
                .or_else(|| file.endpoint.clone())
                .ok_or_else(|| config_error("--endpoint is required for the live backend"))?,
            api_key_env: args
                .api_key_env
                .or_else(|| file.api_key_env.clone())
                .unwrap_or_else(|| DEFAULT_API_KEY_ENV.to_string()),
            timeout_secs: 600,
        },
        Backend::Sim => BackendConfig::Sim {
            truth: args
                .sim_truth
                .or_else(|| file.sim_truth.clone())
                .ok_or_else(|| config_error("--sim-truth is required for the sim backend"))?,
            config: file.sim.clone().unwrap_or_default(),
        },
    };
    let defaults = TriggerThresholds::default();
    let mut rc = RunConfig::new(mode.into(), dataset, backend, out);
    rc.thresholds = TriggerThresholds::new(
        args.tau_h.or(file.tau_h).unwrap_or(defaults.tau_h),
        args.tau_msp.or(file.tau_msp).unwrap_or(defaults.tau_msp),
    )
    .map_err(HarnessError::from)?;
    rc.dataset_format = dataset_format(args.dataset_format.or(file.dataset_format).unwrap_or(InputFormat::Canonical));
    if let Some(model) = args.model.or_else(|| file.model.clone()) {
        rc.params.model_name = model;
    }
    rc.parallel = args.parallel.or(file.parallel).unwrap_or(4);
    rc.budget = args.budget.or(file.budget);
    rc.seed = args.seed.or(file.seed).unwrap_or(0);
    rc.quiet = quiet;
    Ok(rc)
}

fn load_optional_dataset(
    path: Option<PathBuf>,
    format: Option<InputFormat>,
    file: &FileConfig,
) -> Result<Option<Dataset>> {
    let Some(path) = path else { return Ok(None) };
    let format = dataset_format(format.or(file.dataset_format).unwrap_or(InputFormat::Canonical));
    Ok(Some(load_dataset(&path, &format).map_err(HarnessError::from)?))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    let file = read_config(cli.config.as_deref())?;
    let quiet = cli.quiet || file.quiet.unwrap_or(false);
    match cli.command {
        Command::Run(args) => {
            let rc = run_config(args, &file, quiet)?;
            let summary = harness::run(&rc)?;
            let r = &summary.report;
            println!("run {} -> {}", summary.run_id, rc.out.display());
            println!(
                "processed {} new questions ({} already logged), {} backend calls",
                summary.processed, summary.resumed_from, summary.backend_calls
            );
            print!("{}", r.render_text());
            Ok(if r.identities_hold() { ExitCode::SUCCESS } else { ExitCode::from(4) })
        }
        Command::Sweep {
            log,
            grid_tau_h,
            grid_tau_msp,
            out,
            format,
        } => {
            let h = grid_tau_h.or(file.grid_tau_h).unwrap_or(DEFAULT_GRID_TAU_H.to_vec());
            let m = grid_tau_msp.or(file.grid_tau_msp).unwrap_or(DEFAULT_GRID_TAU_MSP.to_vec());
            let sweep = harness::sweep(&log, &h, &m)?;
            if let Some(p) = &out {
                fs::write(p, sweep.to_csv()).with_context(|| format!("writing {}", p.display()))?;
            }
            match format.or(file.format).unwrap_or(OutputFormat::Text) {
                OutputFormat::Text => print!("{}", sweep.render_text()),
                OutputFormat::Csv => print!("{}", sweep.to_csv()),
                OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&sweep.points)?),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze {
            log,
            dataset,
            dataset_format,
            format,
            out,
        } => {
            let dataset = load_optional_dataset(dataset, dataset_format, &file)?;
            let report = harness::analyze(&log, dataset.as_ref())?;
            let text = match format.or(file.format).unwrap_or(OutputFormat::Text) {
                OutputFormat::Text => report.render_text(),
                OutputFormat::Csv => report.subject_csv(),
                OutputFormat::Json => serde_json::to_string_pretty(&report)? + "\n",
            };
            emit(out.as_deref(), &text)?;
            Ok(if report.identities_hold() { ExitCode::SUCCESS } else { ExitCode::from(4) })
        }
        Command::Transfer { tau_h, k_src, k_dst } => {
            let t = harness::transfer(tau_h, k_src, k_dst)?;
            println!("tau_h (K={k_src}): {:.4} nats", t.tau_src);
            println!("normalized entropy: {:.4}", t.normalized);
            println!("tau_h (K={k_dst}): {:.4} nats ({:.2})", t.tau_dst, t.tau_dst);
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { n, seed, out, truth } => {
            let truth = truth.unwrap_or_else(|| out.with_extension("truth.jsonl"));
            let cfg = file.sim.clone().unwrap_or_default();
            let d = harness::write_synth(&cfg, n, seed.or(file.seed).unwrap_or(0), &out, &truth)?;
            println!(
                "wrote {} questions over {} subjects to {} (truth: {})",
                d.len(),
                d.subjects().len(),
                out.display(),
                truth.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            log,
            dataset,
            dataset_format,
        } => {
            let dataset = load_optional_dataset(dataset, dataset_format, &file)?;
            let report = harness::verify(&log, dataset.as_ref());
            for w in &report.warnings {
                println!("warning: {w}");
            }
            for p in &report.problems {
                println!("problem: {p}");
            }
            if report.ok() {
                println!("ok: {} records", report.records);
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(4))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet { "error" } else { "warn" }))
        .init();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<HarnessError>().map_or(2, HarnessError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_file() {
        let file: FileConfig = toml::from_str(
            r#"
            mode = "ur"
            dataset = "d.jsonl"
            out = "o.jsonl"
            sim_truth = "t.jsonl"
            tau_h = 1.3
            tau_msp = 0.4
            parallel = 2
            [sim]
            uplift = 0.5
            "#,
        )
        .unwrap();
        let args = RunArgs {
            mode: Some(Mode::Tr),
            tau_msp: Some(0.5),
            ..Default::default()
        };
        let rc = run_config(args, &file, true).unwrap();
        assert_eq!(rc.mode, RunMode::Tr);
        assert_eq!(rc.thresholds, TriggerThresholds::new(1.3, 0.5).unwrap());
        assert_eq!(rc.parallel, 2);
        match rc.backend {
            BackendConfig::Sim { config, .. } => assert_eq!(config.uplift, 0.5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_config_keys_rejected() {
        assert!(toml::from_str::<FileConfig>("tau = 1").is_err());
    }

    #[test]
    fn missing_required_values() {
        let err = run_config(RunArgs::default(), &FileConfig::default(), true).unwrap_err();
        assert_eq!(err.downcast_ref::<HarnessError>().unwrap().exit_code(), 2);
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from(["reask", "sweep", "ur.jsonl", "--grid-tau-h", "0.7,0.9", "--format", "csv"]).unwrap();
        match cli.command {
            Command::Sweep { grid_tau_h, .. } => assert_eq!(grid_tau_h, Some(vec![0.7, 0.9])),
            _ => panic!(),
        }
    }
}
