//! Flat JSON pipeline configuration. Every field can also be given as a
//! flag; flags win over the file.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::Args;
use corrnet::market_data::{CsvFormat, DatasetWindow, CACHE_DIR_ENV};
use corrnet::network::{SplitOptions, Strategy};
use corrnet::rank_stats::{Method, MissingPolicy, DEFAULT_EXACT_N_MAX};
use corrnet::returns::GapPolicy;
use corrnet::layout::LayoutParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::files;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub assets: Vec<String>,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    /// Directory holding one `<symbol>.csv` per asset.
    pub input_dir: Option<PathBuf>,
    pub csv_format: String,
    /// Endpoint template used when no `input_dir` is set.
    pub endpoint: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub methods: Vec<String>,
    pub missing_policy: String,
    pub gap_policy: String,
    pub exact_n_max: usize,
    pub strategies: Vec<String>,
    pub jump_gap_index: usize,
    pub top_k: usize,
    pub top_k_absolute: bool,
    pub split_step: f64,
    pub count_isolated: bool,
    pub layout_seed: u64,
    pub layout_iterations: usize,
    pub weight_exponent: f64,
    /// `symbol,dimension,category` CSV; the bundled labels are used when
    /// every asset has one.
    pub labels: Option<PathBuf>,
    pub permutations: usize,
    pub permutation_seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let layout = LayoutParams::default();
        let split = SplitOptions::default();
        Self {
            assets: Vec::new(),
            start: None,
            end: None,
            input_dir: None,
            csv_format: "coingecko_export".into(),
            endpoint: None,
            cache_dir: None,
            methods: vec!["spearman".into()],
            missing_policy: "pairwise_complete".into(),
            gap_policy: "bridge".into(),
            exact_n_max: DEFAULT_EXACT_N_MAX,
            strategies: vec!["jump".into(), "top_k".into(), "split".into()],
            jump_gap_index: 1,
            top_k: 10,
            top_k_absolute: false,
            split_step: split.step,
            count_isolated: split.count_isolated,
            layout_seed: layout.seed,
            layout_iterations: layout.iterations,
            weight_exponent: layout.weight_exponent,
            labels: None,
            permutations: 1000,
            permutation_seed: 42,
            output_dir: None,
        }
    }
}

/// Flags mirroring [`PipelineConfig`].
#[derive(Debug, Default, Args)]
pub struct ConfigArgs {
    /// JSON config file; flags below override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated asset symbols.
    #[arg(long, value_delimiter = ',')]
    pub assets: Option<Vec<String>>,
    #[arg(long)]
    pub start: Option<NaiveDate>,
    #[arg(long)]
    pub end: Option<NaiveDate>,
    #[arg(long)]
    pub input_dir: Option<PathBuf>,
    /// coingecko_export or generic_two_column.
    #[arg(long)]
    pub csv_format: Option<String>,
    /// URL template with {symbol}, {name}, {from} and {to} placeholders.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Comma-separated: spearman, kendall_b.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub missing_policy: Option<String>,
    #[arg(long)]
    pub gap_policy: Option<String>,
    #[arg(long)]
    pub exact_n_max: Option<usize>,
    /// Comma-separated: jump, top_k, split.
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<String>>,
    #[arg(long)]
    pub jump_gap_index: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub top_k_absolute: Option<bool>,
    #[arg(long)]
    pub split_step: Option<f64>,
    #[arg(long)]
    pub count_isolated: Option<bool>,
    #[arg(long)]
    pub layout_seed: Option<u64>,
    #[arg(long)]
    pub layout_iterations: Option<usize>,
    #[arg(long)]
    pub weight_exponent: Option<f64>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long)]
    pub permutation_seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

impl PipelineConfig {
    /// Paths in a config file are taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut config: Self =
            serde_json::from_str(&files::read(path)?).map_err(|e| CliError::format(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.input_dir,
            &mut config.cache_dir,
            &mut config.labels,
            &mut config.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            *p = base.join(&*p);
        }
        Ok(config)
    }

    pub fn from_args(args: ConfigArgs) -> Result<Self, CliError> {
        let mut c = match &args.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = args.$field {
                    c.$field = v;
                }
            )*};
        }
        macro_rules! set_some {
            ($($field:ident),*) => {$(
                if args.$field.is_some() {
                    c.$field = args.$field;
                }
            )*};
        }
        set!(
            assets, csv_format, methods, missing_policy, gap_policy, exact_n_max, strategies,
            jump_gap_index, top_k, top_k_absolute, split_step, count_isolated, layout_seed,
            layout_iterations, weight_exponent, permutations, permutation_seed
        );
        set_some!(start, end, input_dir, endpoint, cache_dir, labels, output_dir);
        Ok(c)
    }

    pub fn plan(&self) -> Result<Plan, CliError> {
        let usage = |m: String| CliError::Usage(m);
        if self.assets.len() < 2 {
            return Err(usage("config needs at least two assets".into()));
        }
        let (Some(start), Some(end)) = (self.start, self.end) else {
            return Err(usage("config needs start and end dates".into()));
        };
        let window = DatasetWindow::new(start, end).map_err(|e| usage(e.to_string()))?;
        let source = match (&self.input_dir, &self.endpoint) {
            (Some(dir), _) => Source::Files {
                dir: dir.clone(),
                format: self.csv_format.parse::<CsvFormat>().map_err(usage)?,
            },
            (None, Some(endpoint)) => Source::Endpoint {
                template: endpoint.clone(),
                cache_dir: self
                    .cache_dir
                    .clone()
                    .or_else(|| std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from)),
            },
            (None, None) => return Err(usage("config needs input_dir or endpoint".into())),
        };
        let mut methods = Vec::new();
        for m in &self.methods {
            let m: Method = m.parse().map_err(usage)?;
            if !methods.contains(&m) {
                methods.push(m);
            }
        }
        if methods.is_empty() {
            return Err(usage("config needs at least one method".into()));
        }
        let mut strategies = Vec::new();
        for s in &self.strategies {
            let s = parse_strategy(s).map_err(usage)?;
            if !strategies.contains(&s) {
                strategies.push(s);
            }
        }
        Ok(Plan {
            assets: self.assets.clone(),
            window,
            source,
            methods,
            missing_policy: self.missing_policy.parse().map_err(usage)?,
            gap_policy: self.gap_policy.parse().map_err(usage)?,
            exact_n_max: self.exact_n_max,
            strategies,
            jump_gap_index: self.jump_gap_index,
            top_k: self.top_k,
            top_k_absolute: self.top_k_absolute,
            split: SplitOptions {
                step: self.split_step,
                count_isolated: self.count_isolated,
            },
            layout: LayoutParams {
                seed: self.layout_seed,
                iterations: self.layout_iterations,
                weight_exponent: self.weight_exponent,
            },
            labels: self.labels.clone(),
            permutations: self.permutations,
            permutation_seed: self.permutation_seed,
            output_dir: self
                .output_dir
                .clone()
                .ok_or_else(|| usage("config needs output_dir".into()))?,
        })
    }
}

pub fn parse_strategy(s: &str) -> Result<Strategy, String> {
    match s {
        "jump" => Ok(Strategy::Jump),
        "top_k" | "top-k" => Ok(Strategy::TopK),
        "split" => Ok(Strategy::Split),
        other => Err(format!("unknown strategy {other:?} (expected jump, top_k or split)")),
    }
}

#[derive(Debug, Clone)]
pub enum Source {
    Files { dir: PathBuf, format: CsvFormat },
    Endpoint { template: String, cache_dir: Option<PathBuf> },
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct Plan {
    pub assets: Vec<String>,
    pub window: DatasetWindow,
    pub source: Source,
    pub methods: Vec<Method>,
    pub missing_policy: MissingPolicy,
    pub gap_policy: GapPolicy,
    pub exact_n_max: usize,
    pub strategies: Vec<Strategy>,
    pub jump_gap_index: usize,
    pub top_k: usize,
    pub top_k_absolute: bool,
    pub split: SplitOptions,
    pub layout: LayoutParams,
    pub labels: Option<PathBuf>,
    pub permutations: usize,
    pub permutation_seed: u64,
    pub output_dir: PathBuf,
}
