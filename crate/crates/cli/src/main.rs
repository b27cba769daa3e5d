use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::LevelFilter;
use opinion_game::experiment::{
    plot_directory, plot_sweep, plot_trace, read_opinions, run_seeds, scenario_dir,
    sweep_homophily, ExperimentConfig, MetricsRecord, OPINIONS_FILE,
};

/// Adversary-defender opinion games on homophily networks.
#[derive(Parser, Debug)]
#[command(name = "opgame", version)]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configured scenario for each seed.
    Run {
        #[command(flatten)]
        common: Common,
        /// Homophily coefficient overriding the configured kernel width.
        #[arg(long)]
        sigma: Option<f64>,
        /// Skip rendering plots.
        #[arg(long)]
        no_plots: bool,
    },
    /// Sweep the homophily coefficient over every seed.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Kernel widths to sweep.
        #[arg(long, value_delimiter = ',', required = true)]
        sigma: Vec<f64>,
        #[arg(long)]
        no_plots: bool,
    },
    /// Render plots from a run or sweep output directory.
    Plot {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file (TOML). Defaults to the built-in synthetic scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds overriding the configured list.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Output directory overriding the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scenarios run concurrently (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

impl Common {
    fn config(&self) -> opinion_game::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::synthetic(),
        };
        if !self.seed.is_empty() {
            cfg.seeds = self.seed.clone();
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

fn print_table(rows: &[MetricsRecord]) {
    println!("{}", MetricsRecord::HEADER.join(","));
    for r in rows {
        println!("{}", r.row().join(","));
    }
    for r in rows {
        if let Some(msg) = &r.error {
            eprintln!("sigma {} seed {}: {msg}", r.sigma, r.seed);
        }
    }
}

fn execute(command: Command) -> opinion_game::Result<bool> {
    match command {
        Command::Run {
            common,
            sigma,
            no_plots,
        } => {
            let mut cfg = common.config()?;
            if let Some(s) = sigma {
                cfg.kernel.sigma = s;
            }
            let rows = run_seeds(&cfg, common.jobs)?;
            print_table(&rows);
            if !no_plots {
                for r in rows.iter().filter(|r| !r.is_error()) {
                    let dir = scenario_dir(&cfg.output_dir, r.seed);
                    plot_trace(&read_opinions(&dir.join(OPINIONS_FILE))?, &dir)?;
                }
            }
            Ok(rows.iter().any(MetricsRecord::is_error))
        }
        Command::Sweep {
            common,
            sigma,
            no_plots,
        } => {
            let cfg = common.config()?;
            let rows = sweep_homophily(&cfg, &sigma, common.jobs)?;
            print_table(&rows);
            if !no_plots {
                plot_sweep(&rows, &cfg.output_dir)?;
            }
            Ok(rows.iter().any(MetricsRecord::is_error))
        }
        Command::Plot { out } => {
            for f in plot_directory(&out)? {
                log::info!("wrote {}", f.display());
            }
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match execute(cli.command) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
