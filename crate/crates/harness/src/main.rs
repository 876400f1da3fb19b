use clap::{Args, Parser, Subcommand, ValueEnum};
use lmmp_harness::config::{BudgetRule, ConfigError, ExperimentConfig};
use lmmp_harness::output::write_outputs;
use lmmp_harness::presets::{self, Overrides};
use lmmp_harness::runner::run_experiment;
use lmmp_harness::HarnessError;
use std::path::PathBuf;
use std::process::ExitCode;

/// Simulate linear multi-class multi-resource packing problems and compare
/// allocation policies against the fluid optimum.
#[derive(Debug, Parser)]
#[command(name = "lmmp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        exec: Exec,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dimension sweep with B = sqrt(dT).
    Fig1(Preset),
    /// AMF against the OCO baseline.
    Fig2 {
        /// Budget rule.
        #[arg(long, value_enum, default_value_t = Budget::SqrtDT)]
        budget: Budget,
        #[command(flatten)]
        preset: Preset,
    },
    /// Hyperparameter sensitivity grid on the three-class scenario.
    Fig3(Preset),
    /// Check a config without running it.
    Validate {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Exec {
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "LMMP_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct Preset {
    #[command(flatten)]
    exec: Exec,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Repeats per configuration.
    #[arg(long)]
    repeats: Option<usize>,
    /// Horizon T.
    #[arg(long)]
    horizon: Option<usize>,
    /// Context dimensions, comma separated.
    #[arg(long, value_delimiter = ',')]
    d: Option<Vec<usize>>,
    /// Print the resolved config as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Budget {
    #[value(name = "sqrt_dT")]
    SqrtDT,
    #[value(name = "sqrtd_T34")]
    SqrtdT34,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Invalid(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn execute(cfg: ExperimentConfig, exec: &Exec) -> Result<(), Failure> {
    cfg.validate()?;
    if exec.threads == Some(0) {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    let out = run_experiment(&cfg, exec.threads)?;
    for p in write_outputs(&cfg.out_dir, &out, cfg.write_rounds, cfg.diagnostics)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn preset(mut cfg: ExperimentConfig, p: &Preset) -> Result<(), Failure> {
    Overrides {
        out_dir: p.out.clone(),
        repeats: p.repeats,
        horizon: p.horizon,
        master_seed: p.seed,
        d: p.d.clone(),
    }
    .apply(&mut cfg);
    if p.print_config {
        cfg.validate()?;
        println!("{}", cfg.to_json());
        return Ok(());
    }
    execute(cfg, &p.exec)
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, exec, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            execute(cfg, &exec)
        }
        Command::Fig1(p) => preset(presets::fig1(), &p),
        Command::Fig2 { budget, preset: p } => {
            let rule = match budget {
                Budget::SqrtDT => BudgetRule::SqrtDT,
                Budget::SqrtdT34 => BudgetRule::SqrtdT34,
            };
            preset(presets::fig2(rule), &p)
        }
        Command::Fig3(p) => preset(presets::fig3(), &p),
        Command::Validate { config } => {
            ExperimentConfig::load(&config)?;
            println!("ok");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
