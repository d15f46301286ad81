//! Fruchterman-Reingold force-directed placement.
//!
//! Nodes repel each other with force `k^2 / d`; every positive edge pulls
//! its endpoints together with force `|w|^weight_exponent * d^2 / k`, where
//! `k = sqrt(area / |V|)` on the unit square. Negative edges exert no force.
//! Moves are capped by a temperature that falls linearly from 0.1 to 0, and
//! the final positions are rescaled per axis onto `[0, 1]`.
//!
//! The loop is single-threaded and draws all randomness from a seeded
//! ChaCha stream, so equal inputs give bit-identical layouts.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::CorrelationNetwork;

#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    #[error("cannot lay out a network without nodes")]
    EmptyNetwork,

    #[error("invalid layout parameter: {0}")]
    InvalidParameter(String),
}

pub const INITIAL_TEMPERATURE: f64 = 0.1;
/// Pairs closer than this are treated as coincident and jittered apart.
const COINCIDENT: f64 = 1e-9;
const JITTER: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutParams {
    pub seed: u64,
    pub iterations: usize,
    pub weight_exponent: f64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            seed: 42,
            iterations: 500,
            weight_exponent: 1.0,
        }
    }
}

/// Node positions in the unit square, keyed by symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    positions: BTreeMap<String, [f64; 2]>,
    params: Option<LayoutParams>,
}

impl Layout {
    pub fn from_positions(positions: BTreeMap<String, [f64; 2]>) -> Self {
        Self {
            positions,
            params: None,
        }
    }

    pub fn positions(&self) -> &BTreeMap<String, [f64; 2]> {
        &self.positions
    }

    pub fn position(&self, symbol: &str) -> Option<[f64; 2]> {
        self.positions.get(symbol).copied()
    }

    /// Parameters that produced the layout; `None` when loaded from JSON.
    pub fn params(&self) -> Option<LayoutParams> {
        self.params
    }

    /// `{"symbol": [x, y], ...}` with keys sorted.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.positions).expect("positions serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text).map(Self::from_positions)
    }
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(v: [f64; 2]) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

pub fn fruchterman_reingold(net: &CorrelationNetwork, params: LayoutParams) -> Result<Layout, LayoutError> {
    layout_from(net, params, None)
}

/// Runs the layout, optionally from given starting positions instead of
/// seeded uniform ones.
fn layout_from(
    net: &CorrelationNetwork,
    params: LayoutParams,
    initial: Option<Vec<[f64; 2]>>,
) -> Result<Layout, LayoutError> {
    let n = net.nodes().len();
    if n == 0 {
        return Err(LayoutError::EmptyNetwork);
    }
    if params.iterations == 0 {
        return Err(LayoutError::InvalidParameter("iterations must be at least 1".into()));
    }
    if !params.weight_exponent.is_finite() || params.weight_exponent < 0.0 {
        return Err(LayoutError::InvalidParameter(format!(
            "weight_exponent must be finite and non-negative, got {}",
            params.weight_exponent
        )));
    }

    let index: BTreeMap<&str, usize> = net
        .symbols()
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect();
    let springs: Vec<(usize, usize, f64)> = net
        .edges()
        .iter()
        .filter(|e| e.weight > 0.0)
        .map(|e| {
            (
                index[e.source.as_str()],
                index[e.target.as_str()],
                e.weight.abs().powf(params.weight_exponent),
            )
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut pos: Vec<[f64; 2]> = match initial {
        Some(p) => {
            assert_eq!(p.len(), n, "one starting position per node");
            p
        }
        None => (0..n).map(|_| [rng.random(), rng.random()]).collect(),
    };
    let k = (1.0 / n as f64).sqrt();
    let k2 = k * k;
    let mut disp = vec![[0.0f64; 2]; n];

    for it in 0..params.iterations {
        let temperature = INITIAL_TEMPERATURE * (1.0 - it as f64 / params.iterations as f64);
        disp.iter_mut().for_each(|d| *d = [0.0, 0.0]);

        for i in 0..n {
            for j in i + 1..n {
                let mut delta = sub(pos[i], pos[j]);
                let mut dist = norm(delta);
                if dist < COINCIDENT {
                    delta = [
                        (rng.random::<f64>() - 0.5) * JITTER,
                        (rng.random::<f64>() - 0.5) * JITTER,
                    ];
                    dist = norm(delta).max(COINCIDENT);
                }
                let f = k2 / dist;
                for a in 0..2 {
                    let push = delta[a] / dist * f;
                    disp[i][a] += push;
                    disp[j][a] -= push;
                }
            }
        }

        for &(i, j, strength) in &springs {
            let delta = sub(pos[i], pos[j]);
            let dist = norm(delta);
            if dist < COINCIDENT {
                continue;
            }
            let f = strength * dist * dist / k;
            for a in 0..2 {
                let pull = delta[a] / dist * f;
                disp[i][a] -= pull;
                disp[j][a] += pull;
            }
        }

        for (p, d) in pos.iter_mut().zip(&disp) {
            let len = norm(*d);
            if len > 0.0 {
                let step = len.min(temperature) / len;
                p[0] += d[0] * step;
                p[1] += d[1] * step;
            }
        }
    }

    rescale(&mut pos);
    let positions = net
        .symbols()
        .into_iter()
        .zip(pos)
        .map(|(s, p)| (s.to_string(), p))
        .collect();
    Ok(Layout {
        positions,
        params: Some(params),
    })
}

/// Maps each axis onto `[0, 1]`; an axis with no spread maps to 0.5.
fn rescale(pos: &mut [[f64; 2]]) {
    for a in 0..2 {
        let lo = pos.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min);
        let hi = pos.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for p in pos.iter_mut() {
            p[a] = if span > 0.0 { (p[a] - lo) / span } else { 0.5 };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::AssetId;
    use crate::network::{Edge, Node};

    fn net(symbols: &[&str], edges: &[(&str, &str, f64)]) -> CorrelationNetwork {
        let nodes = symbols
            .iter()
            .map(|s| Node {
                asset: AssetId::from_symbol(*s).unwrap(),
                labels: Default::default(),
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

    #[test]
    fn single_node_is_centered() {
        let l = fruchterman_reingold(&net(&["a"], &[]), LayoutParams::default()).unwrap();
        assert_eq!(l.position("a"), Some([0.5, 0.5]));
    }

    #[test]
    fn two_nodes_distinct_and_finite() {
        let l = fruchterman_reingold(&net(&["a", "b"], &[("a", "b", 0.6)]), LayoutParams::default()).unwrap();
        let (a, b) = (l.position("a").unwrap(), l.position("b").unwrap());
        assert!(a.iter().chain(&b).all(|v| v.is_finite()));
        assert_ne!(a, b);
    }

    #[test]
    fn rejects_empty_and_bad_params() {
        assert_eq!(
            fruchterman_reingold(&net(&[], &[]), LayoutParams::default()),
            Err(LayoutError::EmptyNetwork)
        );
        let params = LayoutParams {
            iterations: 0,
            ..LayoutParams::default()
        };
        assert!(fruchterman_reingold(&net(&["a"], &[]), params).is_err());
    }

    #[test]
    fn bounding_box_is_unit_square() {
        let n = net(
            &["a", "b", "c", "d"],
            &[("a", "b", 0.9), ("b", "c", 0.2), ("c", "d", -0.5)],
        );
        let l = fruchterman_reingold(&n, LayoutParams::default()).unwrap();
        for a in 0..2 {
            let vals: Vec<f64> = l.positions().values().map(|p| p[a]).collect();
            assert_eq!(vals.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
            assert_eq!(vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
        }
    }

    #[test]
    fn coincident_start_stays_finite() {
        let n = net(
            &["a", "b", "c", "d"],
            &[("a", "b", 0.9), ("b", "c", 0.4), ("c", "d", 0.7)],
        );
        let l = layout_from(&n, LayoutParams::default(), Some(vec![[0.3, 0.3]; 4])).unwrap();
        assert!(l.positions().values().flatten().all(|v| v.is_finite()));
        let distinct: std::collections::BTreeSet<_> =
            l.positions().values().map(|p| (p[0].to_bits(), p[1].to_bits())).collect();
        assert_eq!(distinct.len(), 4);
    }

    #[test]
    fn seed_changes_layout() {
        let n = net(&["a", "b", "c"], &[("a", "b", 0.9), ("b", "c", 0.2)]);
        let one = fruchterman_reingold(&n, LayoutParams::default()).unwrap();
        let two = fruchterman_reingold(&n, LayoutParams { seed: 7, ..LayoutParams::default() }).unwrap();
        assert_eq!(one, fruchterman_reingold(&n, LayoutParams::default()).unwrap());
        assert_ne!(one.positions(), two.positions());
    }

    #[test]
    fn json_is_symbol_to_pair() {
        let l = Layout::from_positions([("b".to_string(), [0.0, 1.0]), ("a".to_string(), [0.5, 0.25])].into());
        assert_eq!(
            serde_json::from_str::<serde_json::Value>(&l.to_json()).unwrap(),
            serde_json::json!({"a": [0.5, 0.25], "b": [0.0, 1.0]})
        );
        assert_eq!(Layout::from_json(&l.to_json()).unwrap(), l);
    }
}
