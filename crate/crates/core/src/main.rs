use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use demand_tracking::experiments::{
    confidence_bands, convergence_study, resolve, run_scenario, write_bands_csv,
    write_convergence_csv, Scenario, ScenarioOverrides,
};
use demand_tracking::Error;

#[derive(Parser)]
#[command(
    name = "demand-tracking",
    version,
    about = "Injection control under stochastic demand"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its CSV artifacts.
    Run(Common),
    /// Sequential-update convergence table on a fixed path.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Update intervals in model time units.
        #[arg(long, value_delimiter = ',', required = true)]
        dtup: Vec<f64>,
    },
    /// Demand quantile bands.
    Bands {
        #[command(flatten)]
        common: Common,
        /// Quantile levels in (0, 1).
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML scenario file.
    config: Option<PathBuf>,
    /// PS1, PS2, PS3 or deterministic-fig5.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo path count.
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

impl Common {
    fn scenario(&self, band_levels: Option<Vec<f64>>) -> anyhow::Result<Scenario> {
        let file = self
            .config
            .as_deref()
            .map(ScenarioOverrides::from_file)
            .transpose()?;
        let flags = ScenarioOverrides {
            preset: self.preset.clone(),
            seed: self.seed,
            paths: self.paths,
            band_levels,
            ..Default::default()
        };
        Ok(resolve(file.as_ref(), &flags)?)
    }
}

fn execute(cli: Cli) -> anyhow::Result<Vec<PathBuf>> {
    match cli.command {
        Command::Run(common) => {
            let scenario = common.scenario(None)?;
            Ok(run_scenario(&scenario, &common.out_dir)?.files)
        }
        Command::Converge { common, dtup } => {
            let scenario = common.scenario(None)?;
            let rows = convergence_study(&scenario, &dtup)?;
            let path = prepare(&common.out_dir)?.join("convergence.csv");
            write_convergence_csv(&path, &rows)?;
            Ok(vec![path])
        }
        Command::Bands { common, levels } => {
            let scenario = common.scenario(levels)?;
            let params = scenario.params()?;
            let times = scenario.grid()?.times();
            let bands = confidence_bands(
                &params,
                &times,
                &scenario.band_levels,
                scenario.mc_paths,
                scenario.seed,
            )?;
            let path = prepare(&common.out_dir)?.join("bands.csv");
            write_bands_csv(&path, &bands)?;
            Ok(vec![path])
        }
    }
}

fn prepare(dir: &Path) -> anyhow::Result<&Path> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn error_line(err: &anyhow::Error) -> serde_json::Value {
    let (kind, field) = match err.downcast_ref::<Error>() {
        Some(Error::Config { field, .. }) => ("config", Some(field.clone())),
        Some(Error::InvalidArgument(_)) => ("invalid_argument", None),
        Some(Error::Cfl { .. }) => ("cfl", None),
        Some(Error::Stability { .. }) => ("stability", None),
        Some(Error::Quadrature { .. }) => ("quadrature", None),
        Some(Error::Convergence { .. }) => ("convergence", None),
        None => ("io", None),
    };
    serde_json::json!({ "status": "error", "kind": kind, "field": field, "message": format!("{err:#}") })
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", error_line(&err));
            ExitCode::FAILURE
        }
    }
}
