use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;
use tracedom_cli::commands;
use tracedom_core::judge::JudgeMode;
use tracedom_core::validation::Verdict;

#[derive(Parser)]
#[command(name = "tracedom")]
#[command(about = "Learns essential-state models from passing execution traces and validates new runs against them", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum JudgeArg {
    Mock,
    Remote,
}

impl From<JudgeArg> for JudgeMode {
    fn from(j: JudgeArg) -> Self {
        match j {
            JudgeArg::Mock => JudgeMode::Mock,
            JudgeArg::Remote => JudgeMode::Remote,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Learn a model from passing training traces.
    Learn {
        /// Trace directories (each holding trace.json), or manifest paths.
        #[arg(long, num_args = 1.., required = true)]
        traces: Vec<PathBuf>,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
        /// Threshold config file overriding the defaults.
        #[arg(long)]
        thresholds: Option<PathBuf>,
        /// Semantic judge backing Tier 2.
        #[arg(long, value_enum, default_value = "mock")]
        judge: JudgeArg,
    },
    /// Validate a test trace against a model. Exits 0 on PASS, 1 on FAIL,
    /// 2 on error.
    Validate {
        #[arg(long)]
        model: PathBuf,
        /// Trace directory (holding trace.json) or manifest path.
        #[arg(long)]
        trace: PathBuf,
        /// Coverage threshold in percent.
        #[arg(long, default_value_t = 100.0)]
        threshold: f64,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "mock")]
        judge: JudgeArg,
    },
    /// Print a model's essential states, branches and optional states.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
    /// Generate a synthetic suite and run the closed-loop benchmark.
    Bench {
        /// Benchmark spec JSON; defaults to the built-in case-study mix.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output report file.
        #[arg(long)]
        report: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Learn {
            traces,
            out,
            thresholds,
            judge,
        } => commands::cmd_learn(&traces, &out, thresholds.as_deref(), judge.into())
            .map(|()| ExitCode::SUCCESS),
        Command::Validate {
            model,
            trace,
            threshold,
            json,
            judge,
        } => commands::cmd_validate(&model, &trace, threshold, json.as_deref(), judge.into()).map(
            |result| match result.verdict {
                Verdict::Pass => ExitCode::SUCCESS,
                Verdict::Fail => ExitCode::from(1),
            },
        ),
        Command::Inspect { model } => commands::cmd_inspect(&model).map(|()| ExitCode::SUCCESS),
        Command::Bench { spec, report } => {
            commands::cmd_bench(spec.as_deref(), &report).map(|()| ExitCode::SUCCESS)
        }
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
