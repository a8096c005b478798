use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lowrank_tomo::experiments::{
    exceedance_fraction, run_bound_check, run_to_writer, write_rows, ExperimentConfig, ExperimentKind,
};
use lowrank_tomo::TomoError;

/// Runs a tomography simulation experiment and writes its results as CSV.
///
/// Values come from the defaults, then the config file, then the flags.
#[derive(Debug, Parser)]
#[command(name = "lrtomo", version)]
struct Cli {
    /// `key = value` config file; `#` starts a comment.
    #[arg(long)]
    config: Option<PathBuf>,
    /// fisher-concentration, mse-concentration, scaling, bound-check or table1-validate.
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output CSV path; `-` writes to stdout.
    #[arg(long)]
    out: Option<String>,
    /// Comma-separated list.
    #[arg(long = "lambda2_values", alias = "lambda2-values")]
    lambda2_values: Option<String>,
    /// Comma-separated list.
    #[arg(long = "k_values", alias = "k-values")]
    k_values: Option<String>,
    /// Repetitions per setting.
    #[arg(long)]
    m: Option<String>,
    #[arg(long = "n_states", alias = "n-states")]
    n_states: Option<String>,
    #[arg(long = "n_design_draws", alias = "n-design-draws")]
    n_design_draws: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    rank: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long = "n_mc_samples", alias = "n-mc-samples")]
    n_mc_samples: Option<String>,
    #[arg(long = "fig2_normalize", alias = "fig2-normalize")]
    fig2_normalize: Option<String>,
    #[arg(long)]
    c2: Option<String>,
}

impl Cli {
    fn overrides(&self) -> [(&'static str, &Option<String>); 15] {
        [
            ("experiment", &self.experiment),
            ("seed", &self.seed),
            ("output_path", &self.out),
            ("lambda2_values", &self.lambda2_values),
            ("k_values", &self.k_values),
            ("m", &self.m),
            ("n_states", &self.n_states),
            ("n_design_draws", &self.n_design_draws),
            ("epsilon", &self.epsilon),
            ("delta", &self.delta),
            ("rank", &self.rank),
            ("dim", &self.dim),
            ("n_mc_samples", &self.n_mc_samples),
            ("fig2_normalize", &self.fig2_normalize),
            ("c2", &self.c2),
        ]
    }

    fn load(&self) -> Result<ExperimentConfig, TomoError> {
        let mut config = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| TomoError::Config(format!("cannot read {}: {e}", path.display())))?;
            config.apply_text(&text)?;
        }
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

fn open_output(path: &str) -> Result<Box<dyn Write>, TomoError> {
    if path == "-" {
        return Ok(Box::new(BufWriter::new(io::stdout().lock())));
    }
    let file = File::create(path).map_err(|e| TomoError::Config(format!("cannot create {path}: {e}")))?;
    Ok(Box::new(BufWriter::new(file)))
}

fn run(config: &ExperimentConfig) -> Result<(), TomoError> {
    let out = open_output(&config.output_path)?;
    if config.experiment == ExperimentKind::BoundCheck {
        let rows = run_bound_check(config)?;
        write_rows(out, config.experiment, config.seed, &rows)?;
        eprintln!(
            "k = {}, bound = {}, exceedance fraction = {}",
            rows[0].k,
            rows[0].bound,
            exceedance_fraction(&rows)
        );
        return Ok(());
    }
    run_to_writer(config, out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match cli.load() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("lrtomo: config error: {e}");
            return ExitCode::from(1);
        }
    };
    match run(&config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ TomoError::Config(_)) => {
            eprintln!("lrtomo: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("lrtomo: numerical error: {e}");
            ExitCode::from(2)
        }
    }
}
