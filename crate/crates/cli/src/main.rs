use std::path::PathBuf;
use std::process::ExitCode;

use bdp_cli::commands::{self, GridOutput};
use bdp_cli::CliError;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bdp", version, about = "Architecture search with bi-level data pruning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one search and write its trajectory, counts, heatmap, genotype and result.
    Search {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the criterion x ratio grid (or the split-ratio sweep).
    Grid {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Retrain a genotype from scratch and report test accuracy.
    Eval {
        #[arg(short, long)]
        genotype: PathBuf,
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Render trajectory.csv in a run directory as SVG line charts.
    Plot {
        #[arg(short, long)]
        input: PathBuf,
        /// Plot only these columns, in one panel.
        #[arg(short, long, value_delimiter = ',')]
        series: Option<Vec<String>>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Search { config, out } => {
            let r = commands::cmd_search(&config, out.as_deref())?;
            println!(
                "genotype test acc {:.4}, remaining train {:.4}, remaining val {:.4}",
                r.genotype_test_acc, r.remaining_train_fraction, r.remaining_val_fraction
            );
        }
        Command::Grid { config, out } => match commands::cmd_grid(&config, out.as_deref())? {
            GridOutput::Criteria(rows) => println!("{} grid cells", rows.len()),
            GridOutput::SplitRatio(rows) => println!("{} split ratios", rows.len()),
        },
        Command::Eval { genotype, config, out } => {
            let r = commands::cmd_eval(&genotype, &config, out.as_deref())?;
            println!("test acc {:.4}", r.test_acc);
        }
        Command::Plot { input, series } => {
            let path = commands::cmd_plot(&input, series.as_deref())?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bdp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
