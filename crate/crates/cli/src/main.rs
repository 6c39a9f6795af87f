use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bootloc::dataio::{
    export_estimates, export_results, export_sweep, load_config, load_dataset, DataError, ResultTables,
};
use bootloc::harness::{
    run_algorithm, run_dataset, run_scenario, sample_size_sweep, trial_realization, AlgorithmId, AlgorithmSummary,
    HarnessError, RunOptions, TrialContext,
};
use bootloc::ScenarioConfig;
use clap::{Args, CommandFactory, Parser, Subcommand};

/// Cooperative sensor-network localization simulator.
#[derive(Parser)]
#[command(name = "bootloc", version, about)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm on one trial and export estimates and trace.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// NLOS link ratio.
        #[arg(long)]
        nlos: Option<f64>,
        /// Trial index to realize.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Monte Carlo comparison across NLOS ratios and algorithms.
    Compare {
        #[command(flatten)]
        common: Common,
        /// NLOS link ratios, comma separated.
        #[arg(long, value_delimiter = ',')]
        nlos: Option<Vec<f64>>,
    },
    /// Bootstrap accuracy as a function of samples per link.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Samples per link, comma separated.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// NLOS link ratio.
        #[arg(long)]
        nlos: Option<f64>,
    },
    /// Compare algorithms on an external measurement dataset.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Node table (`id,role,x,y`).
        #[arg(long)]
        nodes: PathBuf,
        /// Range table (`i,j,l,range_m`).
        #[arg(long)]
        ranges: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file, or `reference` for the bundled reference scenario.
    #[arg(long, default_value = "reference")]
    config: String,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Algorithms, comma separated.
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<AlgorithmId>>,
    /// Number of trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

enum Failure {
    Usage(String),
    Invalid(String),
    Divergence(String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::DivergenceCap { .. } => Failure::Divergence(e.to_string()),
            HarnessError::Config(_) => Failure::Invalid(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } => Failure::Runtime(e.to_string()),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig, Failure> {
        let mut cfg = if self.config == "reference" {
            ScenarioConfig::reference()
        } else if !Path::new(&self.config).is_file() {
            return Err(Failure::Usage(format!("config file `{}` does not exist", self.config)));
        } else {
            load_config(&self.config)?
        };
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(algos) = &self.algos {
            cfg.algorithms = algos.clone();
        }
        if let Some(trials) = self.trials {
            cfg.n_trials = trials;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn options(&self) -> RunOptions {
        RunOptions { jobs: self.jobs }
    }
}

fn summary_line(s: &AlgorithmSummary) -> String {
    let ratio = if s.nlos_ratio.is_nan() { "dataset".to_string() } else { s.nlos_ratio.to_string() };
    format!(
        "{:<17} nlos={ratio:<5} rmse={:.4} ger={:.5} gde={:.4} trials={} diverged={}",
        s.algorithm.name(),
        s.rmse,
        s.mean_ger,
        s.mean_gde,
        s.trials,
        s.diverged
    )
}

fn simulate(common: &Common, nlos: Option<f64>, trial: usize) -> Result<(), Failure> {
    let mut cfg = common.scenario()?;
    let algo = match cfg.algorithms.as_slice() {
        [one] => *one,
        _ if common.algos.is_none() => AlgorithmId::StageIBootstrap,
        _ => return Err(Failure::Usage("simulate runs exactly one algorithm; pass a single --algos value".into())),
    };
    cfg.algorithms = vec![algo];
    let ratio = nlos.unwrap_or(cfg.nlos_ratio);
    cfg.nlos_ratio = ratio;
    cfg.validate()?;
    let (network, ms, seed) = trial_realization(&cfg, trial, ratio, cfg.samples_per_link)?;
    let run = run_algorithm(algo, &network, &ms, &cfg, TrialContext { trial, nlos_ratio: ratio, seed })?;
    export_estimates(common.out.join("estimates.csv"), &network, &run.estimates)?;
    let r = &run.result;
    let tables = ResultTables {
        rows: vec![r.clone()],
        ecdfs: Vec::new(),
        traces: vec![(algo, ratio, trial, run.trace)],
    };
    export_results(&common.out, &tables)?;
    println!(
        "{:<17} nlos={ratio:<5} rmse={:.4} ger={:.5} gde={:.4} iterations={} messages={} converged={}",
        algo.name(),
        r.rmse,
        r.ger,
        r.gde,
        r.iterations_used,
        r.messages_sent,
        r.converged
    );
    Ok(())
}

fn compare(common: &Common, nlos: Option<Vec<f64>>) -> Result<(), Failure> {
    let mut cfg = common.scenario()?;
    if let Some(ratios) = nlos {
        cfg.nlos_ratios = ratios;
    }
    cfg.validate()?;
    let mut outcomes = Vec::new();
    for &ratio in &cfg.nlos_ratios {
        let o = run_scenario(&cfg, ratio, common.options())?;
        for s in &o.summaries {
            println!("{}", summary_line(s));
        }
        outcomes.push(o);
    }
    export_results(&common.out, &ResultTables::from_outcomes(&outcomes))?;
    Ok(())
}

fn sweep(common: &Common, sizes: Option<Vec<usize>>, nlos: Option<f64>) -> Result<(), Failure> {
    let mut cfg = common.scenario()?;
    if let Some(sizes) = sizes {
        cfg.sample_sizes = sizes;
    }
    if let Some(r) = nlos {
        cfg.nlos_ratio = r;
    }
    cfg.validate()?;
    let entries = sample_size_sweep(&cfg, &cfg.sample_sizes, common.options())?;
    for e in &entries {
        println!("samples={:<3} {}", e.samples_per_link, summary_line(&e.summary));
    }
    export_sweep(&common.out, &entries)?;
    Ok(())
}

fn validate(common: &Common, nodes: &Path, ranges: &Path) -> Result<(), Failure> {
    let cfg = common.scenario()?;
    let ds = load_dataset(nodes, ranges, cfg.comm_range)?;
    for w in &ds.warnings {
        eprintln!("warning: {w}");
    }
    let o = run_dataset(&ds.network, &ds.measurements, &cfg, common.options())?;
    for s in &o.summaries {
        println!("{}", summary_line(s));
    }
    export_results(&common.out, &ResultTables::from_outcomes(std::slice::from_ref(&o)))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    let outcome = match &cli.command {
        Command::Simulate { common, nlos, trial } => simulate(common, *nlos, *trial),
        Command::Compare { common, nlos } => compare(common, nlos.clone()),
        Command::Sweep { common, sizes, nlos } => sweep(common, sizes.clone(), *nlos),
        Command::Validate { common, nodes, ranges } => validate(common, nodes, ranges),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
        Err(Failure::Invalid(msg)) => {
            eprintln!("invalid input: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Divergence(msg)) => {
            eprintln!("divergence: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
