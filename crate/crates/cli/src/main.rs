use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use wsnloc::filters::FilterKind;
use wsnloc::harness::output::{
    format_table, write_rounds, write_summary, write_sweep_long, write_sweep_summary, write_trace,
    write_trajectory, OutputHeader,
};
use wsnloc::harness::{
    run_experiment_with, run_round_on, simulate_truth, sweep, Execution, RmseReport,
    ScenarioConfig, SweepParameter, DEFAULT_SCENARIO, DEFAULT_SCENARIO_NAME,
};
use wsnloc::rng::round_seed;

/// Moving-node TDOA localization: simulate, compare filters, sweep
/// parameters, and validate scenario files.
#[derive(Debug, Parser)]
#[command(name = "wsnloc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one round and write the trajectory and per-step estimates.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Filters to run (repeatable); defaults to the scenario's filter.
        #[arg(long = "filter")]
        filters: Vec<FilterKind>,
    },
    /// Run every filter on paired rounds and print a comparison table.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Repeat the experiment over values of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of: particles, anchors, steps.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        /// Filter to sweep; defaults to the scenario's filter.
        #[arg(long)]
        filter: Option<FilterKind>,
    },
    /// Check a scenario and print the resolved configuration.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file. The bundled `table1.defaults` is used when a file of
    /// that name does not exist.
    #[arg(default_value = "table1.defaults")]
    scenario: PathBuf,
    /// Override a scenario key, e.g. `--set mobility.v_max=5` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte Carlo rounds.
    #[arg(long)]
    rounds: Option<usize>,
    /// Worker threads for rounds; output does not depend on it.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Exit with status 2 if any filter update degenerated.
    #[arg(long)]
    strict: bool,
    /// Output directory.
    #[arg(long, env = "WSNLOC_OUT", default_value = "wsnloc-out")]
    out: PathBuf,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Degenerate(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

impl From<wsnloc::Error> for Failure {
    fn from(e: wsnloc::Error) -> Self {
        Failure::Config(e.into())
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

impl Common {
    fn load(&self) -> Outcome<ScenarioConfig> {
        let text = read_scenario(&self.scenario)?;
        let mut config = ScenarioConfig::parse(&text, &self.overrides)
            .with_context(|| format!("invalid scenario {}", self.scenario.display()))?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(rounds) = self.rounds {
            config.rounds = rounds;
        }
        config.validate()?;
        Ok(config)
    }

    fn execution(&self) -> Execution {
        match self.parallel {
            0 | 1 => Execution::Serial,
            k => Execution::Parallel(k),
        }
    }

    fn header(&self, config: &ScenarioConfig) -> OutputHeader {
        OutputHeader {
            config_hash: config.hash(),
            seed: config.seed,
            overrides: self.overrides.clone(),
        }
    }

    fn output_dir(&self) -> Outcome<&Path> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("cannot create output directory {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn read_scenario(path: &Path) -> anyhow::Result<String> {
    if path.exists() {
        return fs::read_to_string(path)
            .with_context(|| format!("cannot read scenario {}", path.display()));
    }
    if path.file_name().is_some_and(|n| n == DEFAULT_SCENARIO_NAME) {
        return Ok(DEFAULT_SCENARIO.to_string());
    }
    anyhow::bail!("scenario file not found: {}", path.display())
}

fn create(dir: &Path, name: &str) -> Outcome<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn io<T>(result: std::io::Result<T>, what: &str) -> Outcome<T> {
    result
        .with_context(|| format!("writing {what}"))
        .map_err(Failure::Config)
}

fn check_strict(strict: bool, reports: &[RmseReport]) -> Outcome {
    let degenerate: usize = reports.iter().map(|r| r.degenerate_rounds).sum();
    if strict && degenerate > 0 {
        return Err(Failure::Degenerate(format!(
            "{degenerate} round(s) had an update where every particle weight underflowed"
        )));
    }
    Ok(())
}

fn simulate(common: &Common, filters: &[FilterKind]) -> Outcome {
    let config = common.load()?;
    let filters = if filters.is_empty() {
        vec![config.filter.kind]
    } else {
        filters.to_vec()
    };
    let seed = round_seed(config.seed, 0);
    let truth = simulate_truth(&config, seed)?;
    let header = common.header(&config);
    let dir = common.output_dir()?;

    let mut out = create(dir, "trajectory.csv")?;
    io(
        write_trajectory(&mut out, &header, &truth.trajectory).and_then(|_| out.flush()),
        "trajectory",
    )?;
    print_overrides(&header);
    let mut degenerate = 0;
    for kind in filters {
        let round = run_round_on(&config, kind, seed, &truth)?;
        let name = format!("trace_{kind}.csv");
        let mut out = create(dir, &name)?;
        io(
            write_trace(&mut out, &header, &round).and_then(|_| out.flush()),
            &name,
        )?;
        println!("{:<8} rmse {:.4} m", kind.label(), round.rmse);
        degenerate += round.degenerate_steps();
    }
    println!("wrote {}", dir.display());
    if common.strict && degenerate > 0 {
        return Err(Failure::Degenerate(format!(
            "{degenerate} degenerate update(s)"
        )));
    }
    Ok(())
}

fn compare(common: &Common) -> Outcome {
    let config = common.load()?;
    let reports = FilterKind::ALL
        .iter()
        .map(|&k| run_experiment_with(&config, k, common.execution()))
        .collect::<wsnloc::Result<Vec<_>>>()?;
    let header = common.header(&config);
    let dir = common.output_dir()?;

    let mut out = create(dir, "compare.csv")?;
    io(
        write_summary(&mut out, &header, &reports).and_then(|_| out.flush()),
        "compare.csv",
    )?;
    let mut out = create(dir, "compare_rounds.csv")?;
    io(
        write_rounds(&mut out, &header, &reports).and_then(|_| out.flush()),
        "compare_rounds.csv",
    )?;
    let json = serde_json::to_string_pretty(&reports).context("serializing reports")?;
    io(
        fs::write(dir.join("compare.json"), json + "\n"),
        "compare.json",
    )?;

    print_overrides(&header);
    println!(
        "# config_hash: {}  seed: {}",
        header.config_hash, header.seed
    );
    print!("{}", format_table(&reports));
    check_strict(common.strict, &reports)
}

fn run_sweep(
    common: &Common,
    param: &str,
    values: &[String],
    filter: Option<FilterKind>,
) -> Outcome {
    let parameter: SweepParameter = param.parse()?;
    let values = values
        .iter()
        .filter(|v| !v.trim().is_empty())
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .with_context(|| format!("sweep value '{v}' is not a non-negative integer"))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(Failure::Config(anyhow::anyhow!(
            "--values needs at least one value"
        )));
    }
    let mut config = common.load()?;
    if let Some(kind) = filter {
        config.filter.kind = kind;
    }
    let reports = sweep(&config, parameter, &values, common.execution())?;
    let header = common.header(&config);
    let dir = common.output_dir()?;

    let name = format!("sweep_{parameter}.csv");
    let mut out = create(dir, &name)?;
    io(
        write_sweep_summary(&mut out, &header, parameter.name(), &values, &reports)
            .and_then(|_| out.flush()),
        &name,
    )?;
    let name = format!("sweep_{parameter}_long.csv");
    let mut out = create(dir, &name)?;
    io(
        write_sweep_long(&mut out, &header, parameter.name(), &values, &reports)
            .and_then(|_| out.flush()),
        &name,
    )?;
    let json = serde_json::to_string_pretty(&reports).context("serializing reports")?;
    io(
        fs::write(dir.join(format!("sweep_{parameter}.json")), json + "\n"),
        "sweep json",
    )?;

    print_overrides(&header);
    println!(
        "{:>8} {:<8} {:>10} {:>10} {:>7}",
        parameter.name(),
        "filter",
        "mean",
        "variance",
        "rounds"
    );
    for (v, r) in values.iter().zip(&reports) {
        println!(
            "{v:>8} {:<8} {:>10.4} {:>10.4} {:>7}",
            r.filter.label(),
            r.mean,
            r.variance,
            r.rounds
        );
    }
    check_strict(common.strict, &reports)
}

fn validate(common: &Common) -> Outcome {
    let config = common.load()?;
    let text = config.to_toml()?;
    println!("# valid scenario, config_hash {}", config.hash());
    println!(
        "# N = {} particles, N_a = {} anchors, N_th = {}",
        config.filter.particles, config.anchors.count, config.filter.n_threshold
    );
    print!("{text}");
    Ok(())
}

fn print_overrides(header: &OutputHeader) {
    if !header.overrides.is_empty() {
        println!("# overrides: {}", header.overrides.join(" "));
    }
}

fn main() -> ExitCode {
    // Usage errors are configuration errors (status 1); status 2 is
    // reserved for degeneracy under --strict.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Simulate { common, filters } => simulate(common, filters),
        Command::Compare { common } => compare(common),
        Command::Sweep {
            common,
            param,
            values,
            filter,
        } => run_sweep(common, param, values, *filter),
        Command::Validate { common } => validate(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Degenerate(msg)) => {
            eprintln!("degenerate: {msg}");
            ExitCode::from(2)
        }
    }
}
