//! Correlation networks: construction from a matrix, the three thresholding
//! strategies (largest jump, top-k, split search), connected components,
//! edge-set agreement and a permutation test of group concordance.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use petgraph::unionfind::UnionFind;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::AssetId;
use crate::rank_stats::CorrelationMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("no positive edges to threshold")]
    NoPositiveEdges,

    #[error("gap index {gap_index} out of range: {gaps} gap(s) between positive weights")]
    InvalidGapIndex { gap_index: usize, gaps: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("network is not connected on non-negative edges ({components} components at threshold 0)")]
    NotConnected { components: usize },

    #[error("threshold passed the largest weight {max_weight} without splitting the network")]
    NeverSplits { max_weight: f64 },

    #[error("networks have different node sets")]
    NodeSetMismatch,

    #[error("degenerate labeling: {0}")]
    DegenerateLabeling(String),

    #[error("{symbol} has no {dimension} label")]
    MissingLabel { symbol: String, dimension: Dimension },

    #[error("malformed label CSV at line {line}: {message}")]
    LabelCsv { line: u64, message: String },
}

pub type Result<T, E = NetworkError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub asset: AssetId,
    /// Category per labeling dimension, e.g. `token_function -> hybrid`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<Dimension, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub weight: f64,
}

impl Edge {
    /// Endpoints in lexicographic order, identifying the unordered pair.
    pub fn key(&self) -> (&str, &str) {
        if self.source <= self.target {
            (&self.source, &self.target)
        } else {
            (&self.target, &self.source)
        }
    }

    pub fn pair_name(&self) -> String {
        format!("{} {}", self.source, self.target)
    }
}

/// Undirected graph over assets with signed correlation weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetwork")]
pub struct CorrelationNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

#[derive(Deserialize)]
struct RawNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl TryFrom<RawNetwork> for CorrelationNetwork {
    type Error = NetworkError;

    fn try_from(raw: RawNetwork) -> Result<Self> {
        Self::new(raw.nodes, raw.edges)
    }
}

impl CorrelationNetwork {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        let invalid = |m: String| Err(NetworkError::InvalidNetwork(m));
        let mut symbols = HashSet::new();
        for n in &nodes {
            if !symbols.insert(n.asset.symbol.as_str()) {
                return invalid(format!("duplicate node {}", n.asset.symbol));
            }
        }
        let mut pairs = HashSet::new();
        for e in &edges {
            if !symbols.contains(e.source.as_str()) || !symbols.contains(e.target.as_str()) {
                return invalid(format!("edge {} references an unknown node", e.pair_name()));
            }
            if e.source == e.target {
                return invalid(format!("self edge on {}", e.source));
            }
            if e.weight.is_nan() || e.weight.abs() > 1.0 {
                return invalid(format!("edge {} weight {} outside [-1, 1]", e.pair_name(), e.weight));
            }
            if !pairs.insert(e.key()) {
                return invalid(format!("duplicate edge {}", e.pair_name()));
            }
        }
        Ok(Self { nodes, edges })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn symbols(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.asset.symbol.as_str()).collect()
    }

    /// Same nodes, only the edges `keep` accepts.
    pub fn filter_edges(&self, keep: impl Fn(&Edge) -> bool) -> Self {
        Self {
            nodes: self.nodes.clone(),
            edges: self.edges.iter().filter(|e| keep(e)).cloned().collect(),
        }
    }

    /// Attaches each labeling's category to the nodes it covers.
    pub fn with_labels(mut self, labelings: &[GroupLabeling]) -> Self {
        for labeling in labelings {
            for node in &mut self.nodes {
                if let Some(cat) = labeling.assignment.get(&node.asset.symbol) {
                    node.labels.insert(labeling.dimension, cat.clone());
                }
            }
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    fn index(&self) -> HashMap<&str, usize> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.asset.symbol.as_str(), i))
            .collect()
    }
}

/// Complete graph over the matrix's assets, one edge per estimated pair.
pub fn build_network(cm: &CorrelationMatrix) -> CorrelationNetwork {
    let nodes = cm
        .assets()
        .iter()
        .map(|a| Node {
            asset: a.clone(),
            labels: BTreeMap::new(),
        })
        .collect();
    let edges = cm
        .estimates()
        .iter()
        .map(|e| Edge {
            source: e.pair.0.clone(),
            target: e.pair.1.clone(),
            weight: e.value,
        })
        .collect();
    CorrelationNetwork { nodes, edges }
}

/// Keeps edges with `weight >= threshold`.
pub fn apply_threshold(net: &CorrelationNetwork, threshold: f64) -> CorrelationNetwork {
    net.filter_edges(|e| e.weight >= threshold)
}

/// Connected components over all nodes, isolated nodes as singletons.
/// Members are sorted; groups are ordered by their smallest member.
pub fn connected_components(net: &CorrelationNetwork) -> Vec<Vec<String>> {
    components(net, true)
}

/// Connected components among nodes with at least one edge.
pub fn active_components(net: &CorrelationNetwork) -> Vec<Vec<String>> {
    components(net, false)
}

fn components(net: &CorrelationNetwork, include_isolated: bool) -> Vec<Vec<String>> {
    let index = net.index();
    let mut uf = UnionFind::new(net.nodes.len());
    let mut degree = vec![0usize; net.nodes.len()];
    for e in &net.edges {
        let (a, b) = (index[e.source.as_str()], index[e.target.as_str()]);
        uf.union(a, b);
        degree[a] += 1;
        degree[b] += 1;
    }
    let mut groups: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (i, node) in net.nodes.iter().enumerate() {
        if include_isolated || degree[i] > 0 {
            groups
                .entry(uf.find(i))
                .or_default()
                .insert(node.asset.symbol.clone());
        }
    }
    let mut groups: Vec<Vec<String>> = groups.into_values().map(|g| g.into_iter().collect()).collect();
    groups.sort();
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Jump,
    TopK,
    Split,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Jump => "jump",
            Strategy::TopK => "top_k",
            Strategy::Split => "split",
        })
    }
}

/// Edges sharing the cut-off weight of a top-k selection, split into those
/// kept and those dropped by the pair-name tie-break.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryTie {
    pub weight: f64,
    pub kept: Vec<String>,
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub strategy: Strategy,
    pub threshold: f64,
    pub kept_edges: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary_tie: Option<BoundaryTie>,
    /// Components among nodes that kept at least one edge.
    pub components: Vec<Vec<String>>,
    #[serde(skip)]
    pub network: CorrelationNetwork,
}

impl ThresholdResult {
    fn new(strategy: Strategy, threshold: f64, network: CorrelationNetwork) -> Self {
        Self {
            strategy,
            threshold,
            kept_edges: network.edges.len(),
            boundary_tie: None,
            components: active_components(&network),
            network,
        }
    }
}

/// Cuts at the `gap_index`-th largest drop between consecutive positive
/// weights (sorted descending), placing the threshold at the gap midpoint.
///
/// Equal gaps rank higher-up first. With a single positive edge there are
/// no gaps and that edge's weight is the threshold.
pub fn threshold_jump(net: &CorrelationNetwork, gap_index: usize) -> Result<ThresholdResult> {
    if gap_index == 0 {
        return Err(NetworkError::InvalidParameter("gap_index starts at 1".into()));
    }
    let mut weights: Vec<f64> = net.edges.iter().map(|e| e.weight).filter(|w| *w > 0.0).collect();
    if weights.is_empty() {
        return Err(NetworkError::NoPositiveEdges);
    }
    weights.sort_by(|a, b| b.total_cmp(a));
    let threshold = if weights.len() == 1 {
        if gap_index != 1 {
            return Err(NetworkError::InvalidGapIndex { gap_index, gaps: 0 });
        }
        weights[0]
    } else {
        let mut gaps: Vec<(f64, usize)> = weights
            .windows(2)
            .enumerate()
            .map(|(i, w)| (w[0] - w[1], i))
            .collect();
        gaps.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let &(_, at) = gaps.get(gap_index - 1).ok_or(NetworkError::InvalidGapIndex {
            gap_index,
            gaps: gaps.len(),
        })?;
        (weights[at] + weights[at + 1]) / 2.0
    };
    Ok(ThresholdResult::new(Strategy::Jump, threshold, apply_threshold(net, threshold)))
}

/// Keeps the `k` largest edges by signed weight (or by `|weight|` when
/// `absolute`), breaking ties at the cut by pair name.
pub fn threshold_top_k(net: &CorrelationNetwork, k: usize, absolute: bool) -> Result<ThresholdResult> {
    if k == 0 {
        return Err(NetworkError::InvalidParameter("k must be at least 1".into()));
    }
    let score = |e: &Edge| if absolute { e.weight.abs() } else { e.weight };
    let mut ranked: Vec<&Edge> = net.edges.iter().collect();
    ranked.sort_by(|a, b| {
        score(b)
            .total_cmp(&score(a))
            .then_with(|| a.pair_name().cmp(&b.pair_name()))
    });
    let cut = k.min(ranked.len());
    let kept: HashSet<(&str, &str)> = ranked[..cut].iter().map(|e| e.key()).collect();
    let threshold = ranked.get(cut.wrapping_sub(1)).map_or(f64::INFINITY, |e| score(e));
    let boundary_tie = (cut < ranked.len() && cut > 0 && score(ranked[cut]) == threshold).then(|| {
        let tied = |e: &&&Edge| score(e) == threshold;
        BoundaryTie {
            weight: threshold,
            kept: ranked[..cut].iter().filter(tied).map(|e| e.pair_name()).collect(),
            dropped: ranked[cut..].iter().filter(tied).map(|e| e.pair_name()).collect(),
        }
    });
    let network = net.filter_edges(|e| kept.contains(&e.key()));
    let mut result = ThresholdResult::new(Strategy::TopK, threshold, network);
    result.boundary_tie = boundary_tie;
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOptions {
    pub step: f64,
    /// Count nodes isolated by thresholding as groups of their own.
    pub count_isolated: bool,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            step: 0.01,
            count_isolated: false,
        }
    }
}

/// The `i`-th threshold of the split search, `i * step` rounded to 12
/// decimals so that grid points compare equal to their decimal literals.
pub fn grid_threshold(step: f64, i: usize) -> f64 {
    (i as f64 * step * 1e12).round() / 1e12
}

fn group_count(net: &CorrelationNetwork, threshold: f64, count_isolated: bool) -> usize {
    components(&apply_threshold(net, threshold), count_isolated).len()
}

/// Raises the threshold from 0 in steps of `step` until the network falls
/// into at least two groups, returning the first such threshold.
pub fn threshold_split(net: &CorrelationNetwork, options: SplitOptions) -> Result<ThresholdResult> {
    let SplitOptions { step, count_isolated } = options;
    if !(step.is_finite() && step > 0.0) {
        return Err(NetworkError::InvalidParameter(format!("step must be positive, got {step}")));
    }
    let start = group_count(net, 0.0, count_isolated);
    if start != 1 {
        return Err(NetworkError::NotConnected { components: start });
    }
    let max_weight = net.edges.iter().map(|e| e.weight).fold(f64::NEG_INFINITY, f64::max);
    for i in 1.. {
        let t = grid_threshold(step, i);
        if t > max_weight + step {
            break;
        }
        if group_count(net, t, count_isolated) >= 2 {
            let mut result = ThresholdResult::new(Strategy::Split, t, apply_threshold(net, t));
            if count_isolated {
                result.components = connected_components(&result.network);
            }
            return Ok(result);
        }
    }
    Err(NetworkError::NeverSplits { max_weight })
}

/// Jaccard similarity of two networks' edge sets over the same nodes.
/// Two edgeless networks agree fully.
pub fn network_agreement(a: &CorrelationNetwork, b: &CorrelationNetwork) -> Result<f64> {
    let nodes = |n: &CorrelationNetwork| -> BTreeSet<String> {
        n.nodes.iter().map(|x| x.asset.symbol.clone()).collect()
    };
    if nodes(a) != nodes(b) {
        return Err(NetworkError::NodeSetMismatch);
    }
    let ea: HashSet<(&str, &str)> = a.edges.iter().map(Edge::key).collect();
    let eb: HashSet<(&str, &str)> = b.edges.iter().map(Edge::key).collect();
    let union = ea.union(&eb).count();
    if union == 0 {
        return Ok(1.0);
    }
    Ok(ea.intersection(&eb).count() as f64 / union as f64)
}

/// Axis along which assets are grouped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    TokenCreation,
    Validation,
    TargetMarket,
    TokenFunction,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::TokenCreation,
        Dimension::Validation,
        Dimension::TargetMarket,
        Dimension::TokenFunction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::TokenCreation => "token_creation",
            Dimension::Validation => "validation",
            Dimension::TargetMarket => "target_market",
            Dimension::TokenFunction => "token_function",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown dimension {s:?}"))
    }
}

/// One category per asset along a single dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupLabeling {
    pub dimension: Dimension,
    pub assignment: BTreeMap<String, String>,
}

/// Reads `symbol,dimension,category` rows into one labeling per dimension,
/// in dimension order.
pub fn load_labelings(text: &str) -> Result<Vec<GroupLabeling>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let err = |line: u64, message: String| NetworkError::LabelCsv { line, message };
    let mut by_dim: BTreeMap<Dimension, BTreeMap<String, String>> = BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx as u64 + 1;
        let record = record.map_err(|e| err(line, e.to_string()))?;
        if line == 1 {
            if record.iter().ne(["symbol", "dimension", "category"]) {
                return Err(err(1, "expected header symbol,dimension,category".into()));
            }
            continue;
        }
        if record.len() != 3 {
            return Err(err(line, format!("expected 3 fields, found {}", record.len())));
        }
        let dim: Dimension = record[1].parse().map_err(|e| err(line, e))?;
        let previous = by_dim
            .entry(dim)
            .or_default()
            .insert(record[0].to_string(), record[2].to_string());
        if previous.is_some() {
            return Err(err(line, format!("{} labeled twice for {dim}", &record[0])));
        }
    }
    Ok(by_dim
        .into_iter()
        .map(|(dimension, assignment)| GroupLabeling { dimension, assignment })
        .collect())
}

/// Mean within- and between-category correlation and a permutation p-value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Concordance {
    pub dimension: Dimension,
    pub intra_mean: f64,
    pub inter_mean: f64,
    pub p_value: f64,
    pub permutations: usize,
}

/// Compares mean correlation within categories against across categories.
///
/// The p-value is the fraction of label shuffles whose `intra - inter`
/// difference reaches the observed one. Shuffle `i` draws from its own
/// ChaCha stream, so results do not depend on the thread count.
pub fn group_concordance(
    cm: &CorrelationMatrix,
    labels: &GroupLabeling,
    permutations: usize,
    seed: u64,
) -> Result<Concordance> {
    if permutations == 0 {
        return Err(NetworkError::InvalidParameter("permutations must be at least 1".into()));
    }
    let mut category_ids: HashMap<&str, usize> = HashMap::new();
    let mut assigned = Vec::with_capacity(cm.assets().len());
    for asset in cm.assets() {
        let cat = labels
            .assignment
            .get(&asset.symbol)
            .ok_or_else(|| NetworkError::MissingLabel {
                symbol: asset.symbol.clone(),
                dimension: labels.dimension,
            })?;
        let next = category_ids.len();
        assigned.push(*category_ids.entry(cat.as_str()).or_insert(next));
    }
    let mut sizes = vec![0usize; category_ids.len()];
    for &c in &assigned {
        sizes[c] += 1;
    }
    if sizes.iter().filter(|&&s| s >= 2).count() < 2 {
        return Err(NetworkError::DegenerateLabeling(format!(
            "{} needs at least two categories with two or more members",
            labels.dimension
        )));
    }

    let k = assigned.len();
    let values: Vec<(usize, usize, f64)> = (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, cm.value_at(i, j)))
        .collect();
    let means = |cats: &[usize]| -> (f64, f64) {
        let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
        for &(i, j, v) in &values {
            if cats[i] == cats[j] {
                intra += v;
                n_intra += 1;
            } else {
                inter += v;
                n_inter += 1;
            }
        }
        (intra / n_intra as f64, inter / n_inter as f64)
    };
    let (intra_mean, inter_mean) = means(&assigned);
    let observed = intra_mean - inter_mean;

    let hits: usize = (0..permutations)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            let mut cats = assigned.clone();
            cats.shuffle(&mut rng);
            let (a, b) = means(&cats);
            usize::from(a - b >= observed - 1e-12)
        })
        .sum();

    Ok(Concordance {
        dimension: labels.dimension,
        intra_mean,
        inter_mean,
        p_value: hits as f64 / permutations as f64,
        permutations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rank_stats::Method;

    fn asset(s: &str) -> AssetId {
        AssetId::from_symbol(s).unwrap()
    }

    fn net(symbols: &[&str], edges: &[(&str, &str, f64)]) -> CorrelationNetwork {
        let nodes = symbols
            .iter()
            .map(|s| Node {
                asset: asset(s),
                labels: BTreeMap::new(),
            })
            .collect();
        let edges = edges
            .iter()
            .map(|&(a, b, w)| Edge {
                source: a.into(),
                target: b.into(),
                weight: w,
            })
            .collect();
        CorrelationNetwork::new(nodes, edges).unwrap()
    }

    fn matrix(symbols: &[&str], values: &[(&str, &str, f64)]) -> CorrelationMatrix {
        CorrelationMatrix::from_values(symbols.iter().map(|s| asset(s)).collect(), Method::Spearman, values).unwrap()
    }

    #[test]
    fn build_complete_graph() {
        let cm = matrix(&["a", "b", "c"], &[("a", "b", 0.1), ("a", "c", 0.2), ("b", "c", -0.3)]);
        let n = build_network(&cm);
        assert_eq!((n.nodes().len(), n.edges().len()), (3, 3));
        assert_eq!(n.edges()[2].weight, -0.3);
    }

    #[test]
    fn network_validation() {
        let node = |s| Node { asset: asset(s), labels: BTreeMap::new() };
        let edge = |a: &str, b: &str| Edge { source: a.into(), target: b.into(), weight: 0.5 };
        assert!(CorrelationNetwork::new(vec![node("a"), node("a")], vec![]).is_err());
        assert!(CorrelationNetwork::new(vec![node("a")], vec![edge("a", "a")]).is_err());
        assert!(CorrelationNetwork::new(vec![node("a"), node("b")], vec![edge("a", "b"), edge("b", "a")]).is_err());
        assert!(CorrelationNetwork::new(vec![node("a"), node("b")], vec![edge("a", "z")]).is_err());
    }

    #[test]
    fn jump_largest_gap() {
        let n = net(
            &["a", "b", "c", "d", "e"],
            &[("a", "b", 0.9), ("a", "c", 0.88), ("a", "d", 0.6), ("a", "e", 0.58), ("b", "c", -0.4)],
        );
        let r = threshold_jump(&n, 1).unwrap();
        approx::assert_abs_diff_eq!(r.threshold, 0.74, epsilon = 1e-12);
        assert_eq!(r.kept_edges, 2);
        let r = threshold_jump(&n, 2).unwrap();
        assert_eq!(r.kept_edges, 1);
        assert!(matches!(threshold_jump(&n, 4), Err(NetworkError::InvalidGapIndex { gaps: 3, .. })));
    }

    #[test]
    fn jump_equal_weights_keep_all() {
        let n = net(&["a", "b", "c"], &[("a", "b", 0.5), ("a", "c", 0.5), ("b", "c", 0.5)]);
        let r = threshold_jump(&n, 1).unwrap();
        assert_eq!(r.kept_edges, 3);
    }

    #[test]
    fn jump_single_gap_midpoint() {
        let n = net(&["a", "b", "c"], &[("a", "b", 0.7), ("a", "c", 0.3), ("b", "c", -0.2)]);
        let r = threshold_jump(&n, 1).unwrap();
        approx::assert_abs_diff_eq!(r.threshold, 0.5, epsilon = 1e-12);
        assert_eq!(r.kept_edges, 1);
    }

    #[test]
    fn jump_without_positive_edges() {
        let n = net(&["a", "b"], &[("a", "b", -0.7)]);
        assert_eq!(threshold_jump(&n, 1).unwrap_err(), NetworkError::NoPositiveEdges);
    }

    #[test]
    fn top_k_examples() {
        let n = net(
            &["a", "b", "c", "d"],
            &[("a", "b", 0.5), ("a", "c", 0.5), ("a", "d", 0.5), ("b", "c", 0.2), ("c", "d", -0.9)],
        );
        let r = threshold_top_k(&n, 3, false).unwrap();
        assert_eq!(r.kept_edges, 3);
        assert!(r.network.edges().iter().all(|e| e.weight == 0.5));
        assert_eq!(r.boundary_tie, None);

        let r = threshold_top_k(&n, 1, false).unwrap();
        assert_eq!(r.network.edges()[0].pair_name(), "a b");
        let tie = r.boundary_tie.unwrap();
        assert_eq!(tie.kept, vec!["a b"]);
        assert_eq!(tie.dropped, vec!["a c", "a d"]);

        let r = threshold_top_k(&n, 1, true).unwrap();
        assert_eq!(r.network.edges()[0].pair_name(), "c d");

        assert_eq!(threshold_top_k(&n, 50, false).unwrap().kept_edges, 5);
    }

    fn two_triangles() -> CorrelationNetwork {
        net(
            &["a", "b", "c", "d", "e", "f"],
            &[
                ("a", "b", 0.8),
                ("a", "c", 0.8),
                ("b", "c", 0.8),
                ("d", "e", 0.8),
                ("d", "f", 0.8),
                ("e", "f", 0.8),
                ("c", "d", 0.3),
            ],
        )
    }

    #[test]
    fn split_two_triangles() {
        let r = threshold_split(&two_triangles(), SplitOptions::default()).unwrap();
        assert_eq!(r.threshold, 0.31);
        assert_eq!(r.components, vec![vec!["a", "b", "c"], vec!["d", "e", "f"]]);
        assert_eq!(group_count(&two_triangles(), 0.30, false), 1);
    }

    #[test]
    fn split_never_for_equal_weights() {
        let n = net(&["a", "b", "c"], &[("a", "b", 0.5), ("a", "c", 0.5), ("b", "c", 0.5)]);
        assert!(matches!(
            threshold_split(&n, SplitOptions::default()),
            Err(NetworkError::NeverSplits { .. })
        ));
    }

    #[test]
    fn split_counting_isolated_nodes() {
        // a pendant node drops off first
        let n = net(
            &["a", "b", "c", "d"],
            &[("a", "b", 0.9), ("b", "c", 0.9), ("a", "c", 0.9), ("c", "d", 0.2)],
        );
        assert!(matches!(
            threshold_split(&n, SplitOptions::default()),
            Err(NetworkError::NeverSplits { .. })
        ));
        let r = threshold_split(&n, SplitOptions { step: 0.01, count_isolated: true }).unwrap();
        assert_eq!(r.threshold, 0.21);
        assert_eq!(r.components, vec![vec!["a", "b", "c"], vec!["d"]]);
    }

    #[test]
    fn split_requires_connected_start() {
        let n = net(&["a", "b", "c", "d"], &[("a", "b", 0.9), ("c", "d", 0.9)]);
        assert_eq!(
            threshold_split(&n, SplitOptions::default()).unwrap_err(),
            NetworkError::NotConnected { components: 2 }
        );
    }

    #[test]
    fn component_examples() {
        let n = net(&["c", "a", "b"], &[]);
        assert_eq!(connected_components(&n), vec![vec!["a"], vec!["b"], vec!["c"]]);
        let n = net(&["a", "b", "c"], &[("a", "b", 0.1), ("b", "c", 0.1)]);
        assert_eq!(connected_components(&n), vec![vec!["a", "b", "c"]]);
        let n = net(&["d", "c", "b", "a"], &[("a", "b", 0.1), ("c", "d", 0.1)]);
        assert_eq!(connected_components(&n), vec![vec!["a", "b"], vec!["c", "d"]]);
    }

    #[test]
    fn agreement_examples() {
        let nodes = ["a", "b", "c", "d"];
        let x = net(&nodes, &[("a", "b", 0.5), ("b", "c", 0.5)]);
        let y = net(&nodes, &[("b", "a", 0.1), ("c", "d", 0.5)]);
        let z = net(&nodes, &[("c", "d", 0.5)]);
        assert_eq!(network_agreement(&x, &x).unwrap(), 1.0);
        assert_eq!(network_agreement(&x, &z).unwrap(), 0.0);
        approx::assert_abs_diff_eq!(network_agreement(&x, &y).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        let other = net(&["a", "b"], &[]);
        assert_eq!(network_agreement(&x, &other).unwrap_err(), NetworkError::NodeSetMismatch);
    }

    fn labeling(pairs: &[(&str, &str)]) -> GroupLabeling {
        GroupLabeling {
            dimension: Dimension::TokenFunction,
            assignment: pairs.iter().map(|(s, c)| (s.to_string(), c.to_string())).collect(),
        }
    }

    fn block_matrix(within: f64, across: f64) -> CorrelationMatrix {
        let symbols = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"];
        let block = |s: &str| if "abcde".contains(s) { 0 } else { 1 };
        let mut values = Vec::new();
        for (i, a) in symbols.iter().enumerate() {
            for b in &symbols[i + 1..] {
                values.push((*a, *b, if block(a) == block(b) { within } else { across }));
            }
        }
        matrix(&symbols, &values)
    }

    fn true_labels() -> GroupLabeling {
        let mut pairs: Vec<(&str, &str)> = ["a", "b", "c", "d", "e"].iter().map(|s| (*s, "x")).collect();
        pairs.extend(["f", "g", "h", "i", "j"].iter().map(|s| (*s, "y")));
        labeling(&pairs)
    }

    #[test]
    fn concordance_uniform_matrix() {
        let c = group_concordance(&block_matrix(0.4, 0.4), &true_labels(), 200, 7).unwrap();
        approx::assert_abs_diff_eq!(c.intra_mean, c.inter_mean, epsilon = 1e-12);
        assert_eq!(c.p_value, 1.0);
    }

    #[test]
    fn concordance_planted_blocks() {
        let c = group_concordance(&block_matrix(0.7, 0.1), &true_labels(), 1000, 7).unwrap();
        approx::assert_abs_diff_eq!(c.intra_mean, 0.7, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(c.inter_mean, 0.1, epsilon = 1e-12);
        // 2 of the C(10,5) = 252 arrangements reach the observed split
        assert!(c.p_value <= 0.05, "p = {}", c.p_value);
        let again = group_concordance(&block_matrix(0.7, 0.1), &true_labels(), 1000, 7).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn concordance_rejects_degenerate_labels() {
        let mut pairs: Vec<(&str, &str)> = ["a", "b", "c", "d", "e", "f", "g", "h", "i"].iter().map(|s| (*s, "x")).collect();
        pairs.push(("j", "y"));
        let labels = labeling(&pairs);
        assert!(matches!(
            group_concordance(&block_matrix(0.7, 0.1), &labels, 10, 1),
            Err(NetworkError::DegenerateLabeling(_))
        ));
        let partial = labeling(&[("a", "x"), ("b", "x")]);
        assert!(matches!(
            group_concordance(&block_matrix(0.7, 0.1), &partial, 10, 1),
            Err(NetworkError::MissingLabel { .. })
        ));
    }

    #[test]
    fn labels_from_csv() {
        let text = "symbol,dimension,category\nbtc,token_function,hybrid\nltc,token_function,transaction\nbtc,validation,proof_of_work\n";
        let l = load_labelings(text).unwrap();
        assert_eq!(l.len(), 2);
        assert_eq!(l[0].dimension, Dimension::Validation);
        assert_eq!(l[1].assignment["ltc"], "transaction");
        assert!(load_labelings("symbol,dimension,category\nbtc,colour,red\n").is_err());
        assert!(load_labelings("symbol,dimension,category\nbtc,validation,a\nbtc,validation,b\n").is_err());
    }

    #[test]
    fn json_round_trip_with_labels() {
        let n = two_triangles().with_labels(&[true_labels()]);
        assert_eq!(n.nodes()[0].labels[&Dimension::TokenFunction], "x");
        assert_eq!(CorrelationNetwork::from_json(&n.to_json()).unwrap(), n);
    }
}
