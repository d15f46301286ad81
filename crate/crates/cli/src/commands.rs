use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use corrnet::bundled;
use corrnet::layout::{fruchterman_reingold, Layout, LayoutParams};
use corrnet::market_data::{
    build_dataset, fetch_many, missing_report_csv, parse_price_csv, report_missing, AssetId,
    CsvFormat, Dataset, DatasetWindow, PriceSeries,
};
use corrnet::network::{
    build_network, group_concordance, load_labelings, network_agreement, threshold_jump,
    threshold_split, threshold_top_k, CorrelationNetwork, GroupLabeling, SplitOptions, Strategy,
    ThresholdResult,
};
use corrnet::rank_stats::{
    corr_matrix, rank_pairs, test, CorrelationMatrix, Method, MissingPolicy,
};
use corrnet::render::{
    format_value, render_abbreviations, render_significance, render_table, to_dot, to_svg,
};
use corrnet::returns::{align, daily_returns, GapPolicy, ReturnsMatrix};
use serde_json::json;

use crate::config::{Plan, Source};
use crate::error::CliError;
use crate::files::{emit, read, write_atomic};

fn asset(symbol: &str) -> Result<AssetId, CliError> {
    match bundled::asset(symbol) {
        Some(a) => Ok(a),
        None => Ok(AssetId::from_symbol(symbol)?),
    }
}

fn load_series(plan: &Plan) -> Result<Vec<PriceSeries>, CliError> {
    let assets = plan.assets.iter().map(|s| asset(s)).collect::<Result<Vec<_>, _>>()?;
    match &plan.source {
        Source::Files { dir, format } => assets
            .into_iter()
            .map(|a| {
                let path = dir.join(format!("{}.csv", a.symbol));
                parse_price_csv(a, &read(&path)?, *format).map_err(|e| CliError::format(&path, e))
            })
            .collect(),
        Source::Endpoint { template, cache_dir } => {
            Ok(fetch_many(&assets, &plan.window, template, cache_dir.as_deref())
                .into_iter()
                .collect::<Result<Vec<_>, _>>()?)
        }
    }
}

/// Loads and windows prices, writing `prices/<symbol>.csv` and
/// `missing.csv` under the output directory.
pub fn ingest(plan: &Plan) -> Result<Dataset, CliError> {
    let dataset = build_dataset(load_series(plan)?, plan.window)?;
    for s in dataset.series() {
        let path = plan.output_dir.join("prices").join(format!("{}.csv", s.symbol()));
        write_atomic(&path, &s.to_generic_csv())?;
    }
    write_atomic(
        &plan.output_dir.join("missing.csv"),
        &missing_report_csv(&report_missing(&dataset)),
    )?;
    Ok(dataset)
}

fn returns_of(series: &[PriceSeries], window: &DatasetWindow, gap_policy: GapPolicy) -> Result<ReturnsMatrix, CliError> {
    let returns = series
        .iter()
        .map(|s| daily_returns(s, gap_policy))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(align(&returns, window)?)
}

/// Builds a returns matrix from generic `date,price` files.
pub fn returns_from_dir(
    prices_dir: &Path,
    symbols: Option<Vec<String>>,
    window: (Option<chrono::NaiveDate>, Option<chrono::NaiveDate>),
    gap_policy: GapPolicy,
) -> Result<ReturnsMatrix, CliError> {
    let symbols = match symbols {
        Some(s) => s,
        None => {
            let entries = fs::read_dir(prices_dir).map_err(|source| CliError::Read {
                path: prices_dir.to_path_buf(),
                source,
            })?;
            let mut names: Vec<String> = entries
                .filter_map(|e| e.ok())
                .filter_map(|e| {
                    let name = e.file_name().into_string().ok()?;
                    name.strip_suffix(".csv").map(String::from)
                })
                .collect();
            names.sort();
            names
        }
    };
    let series = symbols
        .iter()
        .map(|s| {
            let path = prices_dir.join(format!("{s}.csv"));
            parse_price_csv(asset(s)?, &read(&path)?, CsvFormat::GenericTwoColumn)
                .map_err(|e| CliError::format(&path, e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if series.is_empty() {
        return Err(CliError::Usage(format!("no price files in {}", prices_dir.display())));
    }
    // default window: from the latest first observation to the latest last one
    let start = window.0.unwrap_or_else(|| series.iter().map(|s| s.first_date()).max().unwrap());
    let end = window.1.unwrap_or_else(|| series.iter().map(|s| s.last_date()).max().unwrap());
    let window = DatasetWindow::new(start, end).map_err(|e| CliError::Usage(e.to_string()))?;
    let dataset = build_dataset(series, window)?;
    returns_of(dataset.series(), &window, gap_policy)
}

/// Reads a returns CSV, restoring bundled display names for known symbols.
pub fn read_returns(path: &Path) -> Result<ReturnsMatrix, CliError> {
    let m = ReturnsMatrix::from_csv(&read(path)?).map_err(|e| CliError::format(path, e))?;
    let assets = m
        .assets()
        .iter()
        .map(|a| asset(&a.symbol))
        .collect::<Result<Vec<_>, _>>()?;
    let columns = (0..m.n_assets()).map(|c| m.column(c)).collect();
    Ok(ReturnsMatrix::from_columns(m.dates().to_vec(), assets, columns)?)
}

pub fn read_matrix(path: &Path) -> Result<CorrelationMatrix, CliError> {
    CorrelationMatrix::from_json(&read(path)?).map_err(|e| CliError::format(path, e))
}

pub fn read_network(path: &Path) -> Result<CorrelationNetwork, CliError> {
    CorrelationNetwork::from_json(&read(path)?).map_err(|e| CliError::format(path, e))
}

pub fn read_layout(path: &Path) -> Result<Layout, CliError> {
    Layout::from_json(&read(path)?).map_err(|e| CliError::format(path, e))
}

/// Labels from a file, else the bundled labels when they cover every
/// symbol, else none.
pub fn resolve_labels(path: Option<&Path>, symbols: &[&str]) -> Result<Option<Vec<GroupLabeling>>, CliError> {
    if let Some(path) = path {
        return Ok(Some(load_labelings(&read(path)?).map_err(|e| CliError::format(path, e))?));
    }
    let labels = bundled::labelings();
    let covered = labels
        .iter()
        .all(|l| symbols.iter().all(|s| l.assignment.contains_key(*s)));
    Ok(covered.then_some(labels))
}

#[derive(Debug, Clone, Copy)]
pub struct StrategyParams {
    pub gap_index: usize,
    pub k: usize,
    pub absolute: bool,
    pub split: SplitOptions,
}

pub fn run_strategy(net: &CorrelationNetwork, strategy: Strategy, p: StrategyParams) -> Result<ThresholdResult, CliError> {
    Ok(match strategy {
        Strategy::Jump => threshold_jump(net, p.gap_index)?,
        Strategy::TopK => threshold_top_k(net, p.k, p.absolute)?,
        Strategy::Split => threshold_split(net, p.split)?,
    })
}

/// Threshold summary with the kept edges listed by pair name.
pub fn threshold_summary(result: &ThresholdResult) -> serde_json::Value {
    let mut value = serde_json::to_value(result).expect("threshold result serializes");
    let mut edges: Vec<String> = result.network.edges().iter().map(|e| e.pair_name()).collect();
    edges.sort();
    value["edges"] = json!(edges);
    value
}

pub fn concordance_report(
    cm: &CorrelationMatrix,
    labels: &[GroupLabeling],
    permutations: usize,
    seed: u64,
) -> serde_json::Value {
    let entries: Vec<serde_json::Value> = labels
        .iter()
        .map(|l| match group_concordance(cm, l, permutations, seed) {
            Ok(c) => serde_json::to_value(c).expect("concordance serializes"),
            Err(e) => json!({ "dimension": l.dimension, "error": e.to_string() }),
        })
        .collect();
    json!(entries)
}

fn to_json(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

pub fn pipeline(plan: &Plan) -> Result<Vec<PathBuf>, CliError> {
    let out = &plan.output_dir;
    let mut written = Vec::new();
    let mut put = |name: String, contents: &str| -> Result<(), CliError> {
        let path = out.join(name);
        write_atomic(&path, contents)?;
        written.push(path);
        Ok(())
    };

    let dataset = ingest(plan)?;
    put("abbreviations.txt".into(), &render_abbreviations(&dataset.assets().into_iter().cloned().collect::<Vec<_>>()))?;
    let returns = returns_of(dataset.series(), &plan.window, plan.gap_policy)?;
    put("returns.csv".into(), &returns.to_csv())?;

    let symbols: Vec<&str> = plan.assets.iter().map(String::as_str).collect();
    let labels = resolve_labels(plan.labels.as_deref(), &symbols)?;
    let params = StrategyParams {
        gap_index: plan.jump_gap_index,
        k: plan.top_k,
        absolute: plan.top_k_absolute,
        split: plan.split,
    };

    let mut thresholded: Vec<(Method, BTreeMap<Strategy, CorrelationNetwork>, CorrelationNetwork)> = Vec::new();
    for &method in &plan.methods {
        let m = method.name();
        let cm = corr_matrix(&returns, method, plan.missing_policy, plan.exact_n_max)?;
        put(format!("matrix_{m}.json"), &cm.to_json())?;
        let table = render_table(&rank_pairs(&cm), method, true);
        put(format!("ranked_{m}.csv"), &table.csv)?;
        put(format!("ranked_{m}.txt"), &table.text)?;
        put(format!("significance_{m}.txt"), &render_significance(&cm))?;

        let mut net = build_network(&cm);
        if let Some(labels) = &labels {
            net = net.with_labels(labels);
        }
        put(format!("network_{m}.json"), &net.to_json())?;
        put(format!("network_{m}.dot"), &to_dot(&net))?;
        let layout = fruchterman_reingold(&net, plan.layout)?;
        put(format!("layout_{m}.json"), &layout.to_json())?;
        put(format!("network_{m}.svg"), &to_svg(&net, &layout)?)?;

        let mut summaries = Vec::new();
        let mut kept = BTreeMap::new();
        for &strategy in &plan.strategies {
            match run_strategy(&net, strategy, params) {
                Ok(result) => {
                    put(format!("network_{m}_{strategy}.svg"), &to_svg(&result.network, &layout)?)?;
                    put(format!("network_{m}_{strategy}.dot"), &to_dot(&result.network))?;
                    summaries.push(threshold_summary(&result));
                    kept.insert(strategy, result.network);
                }
                Err(e) => {
                    eprintln!("warning: {m} {strategy} threshold skipped: {e}");
                    summaries.push(json!({ "strategy": strategy, "error": e.to_string() }));
                }
            }
        }
        put(format!("thresholds_{m}.json"), &to_json(&json!(summaries)))?;

        if let Some(labels) = &labels {
            let report = concordance_report(&cm, labels, plan.permutations, plan.permutation_seed);
            put(format!("concordance_{m}.json"), &to_json(&report))?;
        }
        thresholded.push((method, kept, net));
    }

    if let [(a_method, a_kept, a_net), (b_method, b_kept, b_net)] = thresholded.as_slice() {
        let mut report = format!("edge-set agreement (Jaccard), {a_method} vs {b_method}\n");
        report.push_str(&format!("full {}\n", format_value(network_agreement(a_net, b_net)?)));
        for strategy in &plan.strategies {
            match (a_kept.get(strategy), b_kept.get(strategy)) {
                (Some(a), Some(b)) => {
                    report.push_str(&format!("{strategy} {}\n", format_value(network_agreement(a, b)?)))
                }
                _ => report.push_str(&format!("{strategy} unavailable\n")),
            }
        }
        put("agreement.txt".into(), &report)?;
    }
    Ok(written)
}

pub fn corr(
    returns: &Path,
    method: Method,
    policy: MissingPolicy,
    exact_n_max: usize,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let cm = corr_matrix(&read_returns(returns)?, method, policy, exact_n_max)?;
    emit(output, &cm.to_json())
}

/// Tests one pair on its pairwise-complete rows.
pub fn test_pair(returns: &Path, a: &str, b: &str, method: Method, exact_n_max: usize) -> Result<String, CliError> {
    let m = read_returns(returns)?;
    let column = |s: &str| {
        m.column_of(s)
            .ok_or_else(|| CliError::Usage(format!("{s} is not a column of {}", returns.display())))
    };
    let (x, y) = (column(a)?, column(b)?);
    let (x, y): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(&y)
        .filter_map(|(u, v)| Some(((*u)?, (*v)?)))
        .unzip();
    let outcome = test(method, &x, &y, exact_n_max)?;
    Ok(to_json(&serde_json::to_value(outcome).expect("outcome serializes")))
}

pub fn layout(network: &Path, params: LayoutParams, output: Option<&Path>) -> Result<(), CliError> {
    let layout = fruchterman_reingold(&read_network(network)?, params)?;
    emit(output, &layout.to_json())
}
