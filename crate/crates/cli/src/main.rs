//! `corrnet`: rank-correlation networks from daily price series.

mod commands;
mod config;
mod error;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use corrnet::layout::LayoutParams;
use corrnet::network::{build_network, SplitOptions};
use corrnet::rank_stats::{rank_pairs, Method, MissingPolicy, DEFAULT_EXACT_N_MAX};
use corrnet::render::{render_abbreviations, render_significance, render_table, to_dot, to_svg};
use corrnet::returns::GapPolicy;

use crate::commands::StrategyParams;
use crate::config::{parse_strategy, ConfigArgs, PipelineConfig};
use crate::error::CliError;
use crate::files::{emit, write_atomic};

#[derive(Debug, Parser)]
#[command(name = "corrnet", version, about = "Rank-correlation networks from daily price series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load, validate and window prices; writes prices/<symbol>.csv and missing.csv.
    Ingest(ConfigArgs),

    /// Daily returns from generic date,price files.
    Returns {
        #[arg(long)]
        prices_dir: PathBuf,
        /// Comma-separated symbols; defaults to every CSV in the directory.
        #[arg(long, value_delimiter = ',')]
        assets: Option<Vec<String>>,
        #[arg(long)]
        start: Option<NaiveDate>,
        #[arg(long)]
        end: Option<NaiveDate>,
        #[arg(long, default_value = "bridge")]
        gap_policy: GapPolicy,
        #[arg(long)]
        output: Option<PathBuf>,
    },

    /// Correlation matrix with significance, as JSON.
    Corr {
        #[arg(long)]
        returns: PathBuf,
        #[arg(long, default_value = "spearman")]
        method: Method,
        #[arg(long, default_value = "pairwise_complete")]
        missing_policy: MissingPolicy,
        #[arg(long, default_value_t = DEFAULT_EXACT_N_MAX)]
        exact_n_max: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },

    /// Significance report for a matrix, or a single test with --pair.
    Test {
        #[arg(long, required_unless_present = "returns")]
        matrix: Option<PathBuf>,
        #[arg(long, requires = "pair")]
        returns: Option<PathBuf>,
        /// Two comma-separated symbols.
        #[arg(long, value_delimiter = ',')]
        pair: Option<Vec<String>>,
        #[arg(long, default_value = "spearman")]
        method: Method,
        #[arg(long, default_value_t = DEFAULT_EXACT_N_MAX)]
        exact_n_max: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },

    /// Network JSON from a matrix, optionally thresholded.
    Network {
        #[arg(long)]
        matrix: PathBuf,
        /// jump, top_k or split; omit for the complete network.
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long, default_value_t = 1)]
        gap_index: usize,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        absolute: bool,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long)]
        count_isolated: bool,
        /// symbol,dimension,category CSV attached to the nodes.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Where to write the threshold summary JSON.
        #[arg(long)]
        summary: Option<PathBuf>,
    },

    /// Force-directed layout of a network.
    Layout {
        #[arg(long)]
        network: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        iterations: usize,
        #[arg(long, default_value_t = 1.0)]
        weight_exponent: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },

    /// Diagrams and tables.
    #[command(subcommand)]
    Render(Render),

    /// Run every stage and write all artifacts to the output directory.
    Pipeline(ConfigArgs),

    /// Within- versus across-category correlation with permutation p-values.
    Concordance {
        #[arg(long)]
        matrix: PathBuf,
        /// Defaults to the bundled cryptocurrency categories.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        permutations: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum Render {
    Svg {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    Dot {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Ranked pair table; text goes to stdout unless --text is given.
    Table {
        #[arg(long)]
        matrix: PathBuf,
        /// Add n, p and p_kind columns.
        #[arg(long)]
        significance: bool,
        #[arg(long)]
        text: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Display names and symbols of assets.
    Abbreviations {
        #[arg(long, value_delimiter = ',', required = true)]
        assets: Vec<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest(args) => {
            let plan = PipelineConfig::from_args(args)?.plan()?;
            let dataset = commands::ingest(&plan)?;
            eprintln!(
                "wrote {} price series to {}",
                dataset.series().len(),
                plan.output_dir.join("prices").display()
            );
            Ok(())
        }
        Command::Returns {
            prices_dir,
            assets,
            start,
            end,
            gap_policy,
            output,
        } => {
            let m = commands::returns_from_dir(&prices_dir, assets, (start, end), gap_policy)?;
            emit(output.as_deref(), &m.to_csv())
        }
        Command::Corr {
            returns,
            method,
            missing_policy,
            exact_n_max,
            output,
        } => commands::corr(&returns, method, missing_policy, exact_n_max, output.as_deref()),
        Command::Test {
            matrix,
            returns,
            pair,
            method,
            exact_n_max,
            output,
        } => {
            let report = match (returns, pair, matrix) {
                (Some(_), Some(pair), _) if pair.len() != 2 => {
                    return Err(CliError::Usage("--pair takes exactly two symbols".into()))
                }
                (Some(returns), Some(pair), _) => {
                    commands::test_pair(&returns, &pair[0], &pair[1], method, exact_n_max)?
                }
                (_, _, Some(matrix)) => render_significance(&commands::read_matrix(&matrix)?),
                _ => return Err(CliError::Usage("give --matrix, or --returns with --pair".into())),
            };
            emit(output.as_deref(), &report)
        }
        Command::Network {
            matrix,
            strategy,
            gap_index,
            k,
            absolute,
            step,
            count_isolated,
            labels,
            output,
            summary,
        } => {
            let cm = commands::read_matrix(&matrix)?;
            let mut net = build_network(&cm);
            if let Some(path) = &labels {
                let symbols: Vec<&str> = cm.assets().iter().map(|a| a.symbol.as_str()).collect();
                if let Some(l) = commands::resolve_labels(Some(path), &symbols)? {
                    net = net.with_labels(&l);
                }
            }
            if let Some(strategy) = strategy {
                let strategy = parse_strategy(&strategy).map_err(CliError::Usage)?;
                let params = StrategyParams {
                    gap_index,
                    k,
                    absolute,
                    split: SplitOptions { step, count_isolated },
                };
                let result = commands::run_strategy(&net, strategy, params)?;
                if let Some(path) = summary {
                    let text = serde_json::to_string_pretty(&commands::threshold_summary(&result))
                        .expect("summary serializes");
                    write_atomic(&path, &(text + "\n"))?;
                }
                net = result.network;
            }
            emit(output.as_deref(), &net.to_json())
        }
        Command::Layout {
            network,
            seed,
            iterations,
            weight_exponent,
            output,
        } => commands::layout(
            &network,
            LayoutParams {
                seed,
                iterations,
                weight_exponent,
            },
            output.as_deref(),
        ),
        Command::Render(render) => match render {
            Render::Svg {
                network,
                layout,
                output,
            } => {
                let svg = to_svg(&commands::read_network(&network)?, &commands::read_layout(&layout)?)?;
                emit(output.as_deref(), &svg)
            }
            Render::Dot { network, output } => {
                emit(output.as_deref(), &to_dot(&commands::read_network(&network)?))
            }
            Render::Table {
                matrix,
                significance,
                text,
                csv,
            } => {
                let cm = commands::read_matrix(&matrix)?;
                let table = render_table(&rank_pairs(&cm), cm.method(), significance);
                if let Some(path) = csv {
                    write_atomic(&path, &table.csv)?;
                }
                match text {
                    Some(path) => write_atomic(&path, &table.text),
                    None => emit(None, &table.text),
                }
            }
            Render::Abbreviations { assets, output } => {
                let assets = assets
                    .iter()
                    .map(|s| {
                        corrnet::bundled::asset(s)
                            .map(Ok)
                            .unwrap_or_else(|| corrnet::market_data::AssetId::from_symbol(s.as_str()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                emit(output.as_deref(), &render_abbreviations(&assets))
            }
        },
        Command::Pipeline(args) => {
            let plan = PipelineConfig::from_args(args)?.plan()?;
            let written = commands::pipeline(&plan)?;
            eprintln!("wrote {} files to {}", written.len(), plan.output_dir.display());
            Ok(())
        }
        Command::Concordance {
            matrix,
            labels,
            permutations,
            seed,
            output,
        } => {
            let cm = commands::read_matrix(&matrix)?;
            let symbols: Vec<&str> = cm.assets().iter().map(|a| a.symbol.as_str()).collect();
            let Some(labels) = commands::resolve_labels(labels.as_deref(), &symbols)? else {
                return Err(CliError::Usage(
                    "the bundled labels do not cover every asset; pass --labels".into(),
                ));
            };
            let report = commands::concordance_report(&cm, &labels, permutations, seed);
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            emit(output.as_deref(), &(text + "\n"))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
