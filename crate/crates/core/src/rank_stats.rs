//! Rank correlation (Spearman's rho, Kendall's tau-b) and two-sided tests of
//! no association.
//!
//! Tests take an exact null distribution when the input is tie-free and
//! short enough to enumerate, and an asymptotic approximation otherwise:
//!
//! * Spearman: Student's t with `n - 2` degrees of freedom on
//!   `t = rho * sqrt((n - 2) / (1 - rho^2))`.
//! * Kendall: normal approximation to `S = n_concordant - n_discordant`
//!   using the tie-corrected variance of `S`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::AssetId;
use crate::returns::ReturnsMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("input lengths differ: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },

    #[error("need at least 3 observations, got {n}")]
    TooShort { n: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("degenerate input: {0} has zero rank variance")]
    DegenerateInput(&'static str),

    #[error("pair {a}/{b} has {n} complete observation(s); at least 3 are needed")]
    TooFewObservations { a: String, b: String, n: usize },

    #[error("pair {a}/{b}: {source}")]
    DegeneratePair {
        a: String,
        b: String,
        #[source]
        source: Box<StatsError>,
    },

    #[error("a correlation matrix needs at least 2 assets, got {0}")]
    TooFewAssets(usize),

    #[error("invalid correlation matrix: {0}")]
    InvalidMatrix(String),
}

pub type Result<T, E = StatsError> = std::result::Result<T, E>;

/// Default largest `n` for which exact p-values are enumerated.
pub const DEFAULT_EXACT_N_MAX: usize = 8;

/// Hard cap on exact Spearman enumeration; `n!` permutations are visited.
pub const SPEARMAN_EXACT_LIMIT: usize = 10;

/// Hard cap on the exact Kendall distribution; `n!` must fit in a `u128`.
pub const KENDALL_EXACT_LIMIT: usize = 33;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Spearman,
    KendallB,
}

impl Method {
    /// Column heading used in ranked tables.
    pub fn short_label(self) -> &'static str {
        match self {
            Method::Spearman => "SR",
            Method::KendallB => "KT",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Spearman => "spearman",
            Method::KendallB => "kendall_b",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "spearman" | "sr" => Ok(Method::Spearman),
            "kendall_b" | "kendall" | "kt" => Ok(Method::KendallB),
            other => Err(format!("unknown method {other:?} (expected spearman or kendall_b)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Drop a date only for pairs where either member is missing.
    #[default]
    PairwiseComplete,
    /// Drop a date from every pair if any asset is missing on it.
    ListwiseComplete,
}

impl FromStr for MissingPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pairwise_complete" | "pairwise" => Ok(MissingPolicy::PairwiseComplete),
            "listwise_complete" | "listwise" => Ok(MissingPolicy::ListwiseComplete),
            other => Err(format!(
                "unknown missing policy {other:?} (expected pairwise_complete or listwise_complete)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PKind {
    Exact,
    Asymptotic,
}

impl fmt::Display for PKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PKind::Exact => "exact",
            PKind::Asymptotic => "asymptotic",
        })
    }
}

/// Midranks of a sample: tied values share the mean of their positions.
#[derive(Debug, Clone, PartialEq)]
pub struct RankVector(Vec<f64>);

impl RankVector {
    pub fn ranks(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(StatsError::NonFinite { index }),
        None => Ok(()),
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(StatsError::TooShort { n: x.len() });
    }
    check_finite(x)?;
    check_finite(y)
}

fn order_of(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    // finite inputs only, so partial_cmp never fails
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    idx
}

/// Sizes of the runs of equal values in an ascending ordering.
fn tie_groups(values: &[f64], order: &[usize]) -> Vec<usize> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=order.len() {
        if i == order.len() || values[order[i]] != values[order[start]] {
            groups.push(i - start);
            start = i;
        }
    }
    groups
}

pub fn midranks(values: &[f64]) -> Result<RankVector> {
    check_finite(values)?;
    let order = order_of(values);
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    for len in tie_groups(values, &order) {
        // positions start+1 ..= start+len share their mean
        let rank = (2 * start + len + 1) as f64 / 2.0;
        for &i in &order[start..start + len] {
            ranks[i] = rank;
        }
        start += len;
    }
    Ok(RankVector(ranks))
}

fn has_ties(values: &[f64]) -> bool {
    let order = order_of(values);
    order.windows(2).any(|w| values[w[0]] == values[w[1]])
}

/// Product-moment correlation of the midranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let rx = midranks(x)?.into_inner();
    let ry = midranks(y)?.into_inner();
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::DegenerateInput("x"));
    }
    if syy == 0.0 {
        return Err(StatsError::DegenerateInput("y"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pair counts behind Kendall's tau-b.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KendallCounts {
    pub n: usize,
    /// `n_concordant - n_discordant`, pairs tied in either series excluded.
    pub s: i64,
    /// Pairs not tied in x.
    pub untied_x: u64,
    /// Pairs not tied in y.
    pub untied_y: u64,
    pub ties_x: Vec<usize>,
    pub ties_y: Vec<usize>,
}

impl KendallCounts {
    pub fn tau_b(&self) -> f64 {
        // sqrt(n_x) * sqrt(n_y) as a single sqrt so that equal counts
        // divide exactly
        self.s as f64 / ((self.untied_x as f64) * (self.untied_y as f64)).sqrt()
    }

    pub fn has_ties(&self) -> bool {
        self.ties_x.iter().chain(&self.ties_y).any(|&t| t > 1)
    }
}

fn pairs_within(groups: &[usize]) -> u64 {
    groups.iter().map(|&t| (t * (t.saturating_sub(1)) / 2) as u64).sum()
}

/// Knight's O(n log n) pair counting: sort by (x, y), then count the
/// exchanges a merge sort on y needs; each one is a discordant pair.
pub fn kendall_counts(x: &[f64], y: &[f64]) -> Result<KendallCounts> {
    check_pair(x, y)?;
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        x[a].partial_cmp(&x[b])
            .unwrap()
            .then(y[a].partial_cmp(&y[b]).unwrap())
    });
    let ties_x = tie_groups(x, &order);

    let mut joint = 0u64;
    let mut start = 0;
    for i in 1..=n {
        if i == n || x[order[i]] != x[order[start]] || y[order[i]] != y[order[start]] {
            let t = (i - start) as u64;
            joint += t * (t - 1) / 2;
            start = i;
        }
    }

    let mut buf = vec![0usize; n];
    let discordant = merge_count(&mut order, &mut buf, y);
    let ties_y = tie_groups(y, &order);

    let total = (n * (n - 1) / 2) as u64;
    let tied_x = pairs_within(&ties_x);
    let tied_y = pairs_within(&ties_y);
    let s = total as i64 - tied_x as i64 - tied_y as i64 + joint as i64 - 2 * discordant as i64;
    Ok(KendallCounts {
        n,
        s,
        untied_x: total - tied_x,
        untied_y: total - tied_y,
        ties_x,
        ties_y,
    })
}

/// Stable merge sort of `idx` by `key`, returning the number of strict
/// inversions removed.
fn merge_count(idx: &mut [usize], buf: &mut [usize], key: &[f64]) -> u64 {
    let n = idx.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut idx[..mid], &mut buf[..mid], key)
        + merge_count(&mut idx[mid..], &mut buf[mid..], key);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if key[idx[j]] < key[idx[i]] {
            buf[k] = idx[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = idx[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&idx[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&idx[j..n]);
    idx.copy_from_slice(&buf[..n]);
    swaps
}

/// `(n_c - n_d) / (sqrt(n_x) * sqrt(n_y))`.
///
/// Pairs tied in either series are left out of both counts; `n_x` and `n_y`
/// count the pairs not tied in x and y. Without ties this is
/// `(n_c - n_d) / (n(n-1)/2)`.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    let counts = kendall_counts(x, y)?;
    if counts.untied_x == 0 {
        return Err(StatsError::DegenerateInput("x"));
    }
    if counts.untied_y == 0 {
        return Err(StatsError::DegenerateInput("y"));
    }
    Ok(counts.tau_b().clamp(-1.0, 1.0))
}

/// Result of a two-sided test of no association.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub method: Method,
    pub value: f64,
    pub n: usize,
    pub had_ties: bool,
    pub p_two_sided: f64,
    pub p_kind: PKind,
}

/// Spearman test. Exact by enumerating all `n!` rank permutations when
/// there are no ties and `n <= min(exact_n_max, SPEARMAN_EXACT_LIMIT)`.
pub fn sr_test(x: &[f64], y: &[f64], exact_n_max: usize) -> Result<TestOutcome> {
    let rho = spearman_rho(x, y)?;
    let n = x.len();
    let had_ties = has_ties(x) || has_ties(y);
    let exact = !had_ties && n <= exact_n_max.min(SPEARMAN_EXACT_LIMIT);
    let (p, p_kind) = if exact {
        (spearman_exact_p(x, y), PKind::Exact)
    } else {
        (spearman_asymptotic_p(rho, n), PKind::Asymptotic)
    };
    Ok(TestOutcome {
        method: Method::Spearman,
        value: rho,
        n,
        had_ties,
        p_two_sided: p,
        p_kind,
    })
}

/// Two-sided p from the t approximation.
///
/// With `t = rho * sqrt(df / (1 - rho^2))` and `df = n - 2`,
/// `P(|T| >= |t|) = I_{df / (df + t^2)}(df/2, 1/2)` and the argument
/// simplifies to `1 - rho^2`, evaluated as `(1 - rho)(1 + rho)`.
pub fn spearman_asymptotic_p(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let x = (1.0 - rho) * (1.0 + rho);
    statrs::function::beta::beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

fn spearman_exact_p(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    // tie-free, so the midranks are the integers 1..=n
    let rx = midranks(x).unwrap().into_inner();
    let ry = midranks(y).unwrap().into_inner();
    let d_obs: i64 = rx
        .iter()
        .zip(&ry)
        .map(|(a, b)| {
            let d = (*a - *b) as i64;
            d * d
        })
        .sum();
    let null = spearman_null_distribution(n);
    // |rho| >= |rho_obs|  <=>  |c - 6D| >= |c - 6D_obs|, c = n(n^2 - 1)
    let c = (n * (n * n - 1)) as i64;
    let obs = (c - 6 * d_obs).abs();
    let hits: u64 = null
        .iter()
        .enumerate()
        .filter(|(d, _)| (c - 6 * *d as i64).abs() >= obs)
        .map(|(_, &count)| count)
        .sum();
    let total: u64 = null.iter().sum();
    hits as f64 / total as f64
}

/// Histogram of `D = sum (i - pi(i))^2` over all permutations of `n`,
/// indexed by `D`. Memoized per `n`.
fn spearman_null_distribution(n: usize) -> Arc<Vec<u64>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<u64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(hist) = cache.lock().unwrap().get(&n) {
        return hist.clone();
    }
    let max_d = n * (n * n - 1) / 3;
    let mut hist = vec![0u64; max_d + 1];
    let d_of = |perm: &[usize]| -> usize {
        perm.iter()
            .enumerate()
            .map(|(i, &p)| i.abs_diff(p).pow(2))
            .sum()
    };
    // Heap's algorithm
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    hist[d_of(&perm)] += 1;
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            hist[d_of(&perm)] += 1;
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    let hist = Arc::new(hist);
    cache.lock().unwrap().insert(n, hist.clone());
    hist
}

/// Kendall test. Exact when there are no ties and
/// `n <= min(exact_n_max, KENDALL_EXACT_LIMIT)`.
pub fn kt_test(x: &[f64], y: &[f64], exact_n_max: usize) -> Result<TestOutcome> {
    let tau = kendall_tau_b(x, y)?;
    let counts = kendall_counts(x, y)?;
    let n = counts.n;
    let had_ties = counts.has_ties();
    let exact = !had_ties && n <= exact_n_max.min(KENDALL_EXACT_LIMIT);
    let (p, p_kind) = if exact {
        (kendall_exact_p(n, counts.s), PKind::Exact)
    } else {
        (kendall_asymptotic_p(&counts), PKind::Asymptotic)
    };
    Ok(TestOutcome {
        method: Method::KendallB,
        value: tau,
        n,
        had_ties,
        p_two_sided: p,
        p_kind,
    })
}

/// Number of permutations of `n` items with exactly `k` inversions, for
/// every `k` (the Mahonian numbers).
pub fn inversion_counts(n: usize) -> Vec<u128> {
    let mut counts = vec![1u128];
    for m in 1..=n {
        let max = counts.len() - 1 + (m - 1);
        let mut next = vec![0u128; max + 1];
        for (k, slot) in next.iter_mut().enumerate() {
            let lo = k.saturating_sub(m - 1);
            let hi = k.min(counts.len() - 1);
            if lo <= hi {
                *slot = counts[lo..=hi].iter().sum();
            }
        }
        counts = next;
    }
    counts
}

/// `P(|S| >= |s|)` under the permutation null; a permutation with `k`
/// inversions has `S = n(n-1)/2 - 2k`.
fn kendall_exact_p(n: usize, s: i64) -> f64 {
    let counts = inversion_counts(n);
    let pairs = (n * (n - 1) / 2) as i64;
    let total: u128 = counts.iter().sum();
    let hits: u128 = counts
        .iter()
        .enumerate()
        .filter(|(k, _)| (pairs - 2 * *k as i64).abs() >= s.abs())
        .map(|(_, &c)| c)
        .sum();
    hits as f64 / total as f64
}

/// Normal approximation with the tie-corrected variance of `S`:
///
/// ```text
/// var(S) = (v0 - vt - vu) / 18
///        + (sum t(t-1)) (sum u(u-1)) / (2 n (n-1))
///        + (sum t(t-1)(t-2)) (sum u(u-1)(u-2)) / (9 n (n-1) (n-2))
/// ```
///
/// where `v0 = n(n-1)(2n+5)`, `vt = sum t(t-1)(2t+5)` over tie groups `t`
/// in x and likewise `vu` over groups `u` in y.
pub fn kendall_asymptotic_p(counts: &KendallCounts) -> f64 {
    let n = counts.n as f64;
    let v = |groups: &[usize], f: fn(f64) -> f64| groups.iter().map(|&t| f(t as f64)).sum::<f64>();
    let v0 = n * (n - 1.0) * (2.0 * n + 5.0);
    let cubic = |t: f64| t * (t - 1.0) * (2.0 * t + 5.0);
    let pairs = |t: f64| t * (t - 1.0);
    let triples = |t: f64| t * (t - 1.0) * (t - 2.0);
    let var = (v0 - v(&counts.ties_x, cubic) - v(&counts.ties_y, cubic)) / 18.0
        + v(&counts.ties_x, pairs) * v(&counts.ties_y, pairs) / (2.0 * n * (n - 1.0))
        + v(&counts.ties_x, triples) * v(&counts.ties_y, triples) / (9.0 * n * (n - 1.0) * (n - 2.0));
    if counts.s == 0 {
        return 1.0;
    }
    let z = counts.s as f64 / var.sqrt();
    statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Runs the test for `method`.
pub fn test(method: Method, x: &[f64], y: &[f64], exact_n_max: usize) -> Result<TestOutcome> {
    match method {
        Method::Spearman => sr_test(x, y, exact_n_max),
        Method::KendallB => kt_test(x, y, exact_n_max),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub p_two_sided: f64,
    pub p_kind: PKind,
}

/// One pair's correlation. `pair` holds symbols in matrix column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrEstimate {
    pub pair: (String, String),
    pub method: Method,
    pub value: f64,
    pub n: usize,
    pub had_ties: bool,
    /// Absent for matrices assembled from bare values.
    pub significance: Option<Significance>,
}

impl CorrEstimate {
    pub fn from_outcome(a: &str, b: &str, outcome: TestOutcome) -> Self {
        Self {
            pair: (a.to_string(), b.to_string()),
            method: outcome.method,
            value: outcome.value,
            n: outcome.n,
            had_ties: outcome.had_ties,
            significance: Some(Significance {
                p_two_sided: outcome.p_two_sided,
                p_kind: outcome.p_kind,
            }),
        }
    }

    /// `"a b"`, the label used in tables and for tie-breaking.
    pub fn pair_name(&self) -> String {
        format!("{} {}", self.pair.0, self.pair.1)
    }
}

/// Symmetric matrix of pairwise estimates, stored once per unordered pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct CorrelationMatrix {
    assets: Vec<AssetId>,
    method: Method,
    missing_policy: MissingPolicy,
    estimates: Vec<CorrEstimate>,
}

#[derive(Deserialize)]
struct RawMatrix {
    assets: Vec<AssetId>,
    method: Method,
    missing_policy: MissingPolicy,
    estimates: Vec<CorrEstimate>,
}

impl TryFrom<RawMatrix> for CorrelationMatrix {
    type Error = StatsError;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        Self::new(raw.assets, raw.method, raw.missing_policy, raw.estimates)
    }
}

impl CorrelationMatrix {
    /// Validates that `estimates` holds exactly one entry per unordered pair
    /// of `assets` and puts them in canonical (column order) sequence.
    pub fn new(
        assets: Vec<AssetId>,
        method: Method,
        missing_policy: MissingPolicy,
        estimates: Vec<CorrEstimate>,
    ) -> Result<Self> {
        if assets.len() < 2 {
            return Err(StatsError::TooFewAssets(assets.len()));
        }
        let index: HashMap<&str, usize> = assets
            .iter()
            .enumerate()
            .map(|(i, a)| (a.symbol.as_str(), i))
            .collect();
        if index.len() != assets.len() {
            return Err(StatsError::InvalidMatrix("duplicate asset".into()));
        }
        let k = assets.len();
        let mut slots: Vec<Option<CorrEstimate>> = vec![None; k * (k - 1) / 2];
        for mut e in estimates {
            let name = e.pair_name();
            let bad = |msg: &str| StatsError::InvalidMatrix(format!("{msg}: {name}"));
            let (Some(&i), Some(&j)) = (index.get(e.pair.0.as_str()), index.get(e.pair.1.as_str())) else {
                return Err(bad("unknown asset in pair"));
            };
            if i == j {
                return Err(bad("self pair"));
            }
            if e.value.is_nan() || e.value.abs() > 1.0 {
                return Err(bad("value outside [-1, 1]"));
            }
            if e.method != method {
                return Err(bad("method differs from matrix"));
            }
            let (i, j) = if i < j {
                (i, j)
            } else {
                e.pair = (e.pair.1.clone(), e.pair.0.clone());
                (j, i)
            };
            let slot = &mut slots[pair_slot(k, i, j)];
            if slot.is_some() {
                return Err(bad("duplicate pair"));
            }
            *slot = Some(e);
        }
        let estimates = slots
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| StatsError::InvalidMatrix("missing pair estimates".into()))?;
        Ok(Self {
            assets,
            method,
            missing_policy,
            estimates,
        })
    }

    /// Matrix of bare correlation values with no sample sizes or p-values.
    pub fn from_values(assets: Vec<AssetId>, method: Method, values: &[(&str, &str, f64)]) -> Result<Self> {
        let estimates = values
            .iter()
            .map(|&(a, b, value)| CorrEstimate {
                pair: (a.to_string(), b.to_string()),
                method,
                value,
                n: 0,
                had_ties: false,
                significance: None,
            })
            .collect();
        Self::new(assets, method, MissingPolicy::default(), estimates)
    }

    pub fn assets(&self) -> &[AssetId] {
        &self.assets
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn missing_policy(&self) -> MissingPolicy {
        self.missing_policy
    }

    /// Estimates in canonical order: `(0,1), (0,2), ..., (1,2), ...`.
    pub fn estimates(&self) -> &[CorrEstimate] {
        &self.estimates
    }

    pub fn get(&self, a: &str, b: &str) -> Option<&CorrEstimate> {
        let i = self.assets.iter().position(|x| x.symbol == a)?;
        let j = self.assets.iter().position(|x| x.symbol == b)?;
        if i == j {
            return None;
        }
        let (i, j) = (i.min(j), i.max(j));
        Some(&self.estimates[pair_slot(self.assets.len(), i, j)])
    }

    /// Correlation by column index; the diagonal is 1.
    pub fn value_at(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        let (i, j) = (i.min(j), i.max(j));
        self.estimates[pair_slot(self.assets.len(), i, j)].value
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn pair_slot(k: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < k);
    i * (2 * k - i - 1) / 2 + (j - i - 1)
}

/// Estimates every pair of columns of `m`.
///
/// Pairs are computed in parallel; output order and the reported error (the
/// first failing pair in canonical order) do not depend on scheduling.
pub fn corr_matrix(
    m: &ReturnsMatrix,
    method: Method,
    missing_policy: MissingPolicy,
    exact_n_max: usize,
) -> Result<CorrelationMatrix> {
    let k = m.n_assets();
    if k < 2 {
        return Err(StatsError::TooFewAssets(k));
    }
    let columns: Vec<Vec<Option<f64>>> = (0..k).map(|c| m.column(c)).collect();
    let complete_rows: Option<Vec<bool>> = match missing_policy {
        MissingPolicy::PairwiseComplete => None,
        MissingPolicy::ListwiseComplete => Some(
            (0..m.n_rows())
                .map(|r| columns.iter().all(|c| c[r].is_some()))
                .collect(),
        ),
    };
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let results: Vec<Result<CorrEstimate>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&m.assets()[i].symbol, &m.assets()[j].symbol);
            let (x, y): (Vec<f64>, Vec<f64>) = columns[i]
                .iter()
                .zip(&columns[j])
                .enumerate()
                .filter(|(r, _)| complete_rows.as_ref().is_none_or(|rows| rows[*r]))
                .filter_map(|(_, (x, y))| Some(((*x)?, (*y)?)))
                .unzip();
            if x.len() < 3 {
                return Err(StatsError::TooFewObservations {
                    a: a.clone(),
                    b: b.clone(),
                    n: x.len(),
                });
            }
            let outcome = test(method, &x, &y, exact_n_max).map_err(|e| StatsError::DegeneratePair {
                a: a.clone(),
                b: b.clone(),
                source: Box::new(e),
            })?;
            Ok(CorrEstimate::from_outcome(a, b, outcome))
        })
        .collect();
    let estimates = results.into_iter().collect::<Result<Vec<_>>>()?;
    CorrelationMatrix::new(m.assets().to_vec(), method, missing_policy, estimates)
}

/// One row of a ranked pair table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedPair {
    pub rank: usize,
    pub pair: (String, String),
    pub value: f64,
    pub n: usize,
    pub significance: Option<Significance>,
}

impl RankedPair {
    pub fn pair_name(&self) -> String {
        format!("{} {}", self.pair.0, self.pair.1)
    }
}

/// All pairs by value, highest first; equal values ordered by pair name.
pub fn rank_pairs(cm: &CorrelationMatrix) -> Vec<RankedPair> {
    let mut rows: Vec<&CorrEstimate> = cm.estimates.iter().collect();
    rows.sort_by(|a, b| {
        b.value
            .total_cmp(&a.value)
            .then_with(|| a.pair_name().cmp(&b.pair_name()))
    });
    rows.into_iter()
        .enumerate()
        .map(|(i, e)| RankedPair {
            rank: i + 1,
            pair: e.pair.clone(),
            value: e.value,
            n: e.n,
            significance: e.significance,
        })
        .collect()
}

/// Counts of pairs whose p-value falls below each conventional level.
pub fn significance_counts(cm: &CorrelationMatrix, levels: &[f64]) -> Vec<(f64, usize)> {
    levels
        .iter()
        .map(|&level| {
            let count = cm
                .estimates
                .iter()
                .filter(|e| e.significance.is_some_and(|s| s.p_two_sided < level))
                .count();
            (level, count)
        })
        .collect()
}

/// Symbols appearing in the matrix, for membership checks.
pub fn symbol_set(cm: &CorrelationMatrix) -> HashSet<&str> {
    cm.assets.iter().map(|a| a.symbol.as_str()).collect()
}
