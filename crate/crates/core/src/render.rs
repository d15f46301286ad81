//! Tables and diagrams. Every emitter is deterministic: equal inputs give
//! identical bytes.

use std::fmt::Write as _;

use thiserror::Error;

use crate::layout::Layout;
use crate::market_data::AssetId;
use crate::network::{CorrelationNetwork, Edge};
use crate::rank_stats::{CorrelationMatrix, Method, RankedPair};

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("layout has no position for node {0}")]
    MissingPosition(String),
}

pub const DEFAULT_MIN_WIDTH: f64 = 0.5;
pub const DEFAULT_MAX_WIDTH: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeStyle {
    pub width: f64,
    /// 0 is the lightest stroke, 1 the darkest.
    pub darkness: f64,
    pub dashed: bool,
}

/// Style with the default width range.
pub fn style_edge(weight: f64) -> EdgeStyle {
    style_edge_with(weight, DEFAULT_MIN_WIDTH, DEFAULT_MAX_WIDTH)
}

/// Width and darkness grow linearly with `|weight|`; negative edges dash.
pub fn style_edge_with(weight: f64, min_width: f64, max_width: f64) -> EdgeStyle {
    let strength = weight.abs().min(1.0);
    EdgeStyle {
        width: min_width + (max_width - min_width) * strength,
        darkness: strength,
        dashed: weight < 0.0,
    }
}

/// Fixed-point with 4 decimals, rounding exact halves away from zero.
pub fn format_value(v: f64) -> String {
    let mut s = format!("{:.4}", v);
    // std rounds exact binary halves to even; a half at the 5th decimal is
    // exactly representable only with a short expansion, so 30 digits see it
    let long = format!("{:.30}", v.abs());
    let frac = &long[long.find('.').unwrap() + 1..];
    if frac.as_bytes()[4] == b'5' && frac[5..].bytes().all(|b| b == b'0') {
        let scaled = (v.abs() * 1e4 + 0.5).floor();
        let sign = if v < 0.0 { "-" } else { "" };
        s = format!("{sign}{}.{:04}", (scaled / 1e4).trunc(), scaled % 1e4);
    }
    if s.trim_start_matches('-').bytes().all(|b| b == b'0' || b == b'.') {
        s = s.trim_start_matches('-').to_string();
    }
    s
}

const CANVAS: f64 = 1000.0;
const MARGIN: f64 = 70.0;
const NODE_RADIUS: f64 = 28.0;

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn to_canvas(p: [f64; 2]) -> (f64, f64) {
    let span = CANVAS - 2.0 * MARGIN;
    // SVG y grows downward
    (MARGIN + p[0] * span, MARGIN + (1.0 - p[1]) * span)
}

fn sorted_edges(net: &CorrelationNetwork) -> Vec<&Edge> {
    let mut edges: Vec<&Edge> = net.edges().iter().collect();
    edges.sort_by(|a, b| a.key().cmp(&b.key()));
    edges
}

/// 1000×1000 SVG 1.1 diagram: styled edges first, then one labelled circle
/// per node on top.
pub fn to_svg(net: &CorrelationNetwork, layout: &Layout) -> Result<String, RenderError> {
    let pos = |s: &str| {
        layout
            .position(s)
            .map(to_canvas)
            .ok_or_else(|| RenderError::MissingPosition(s.to_string()))
    };
    let mut nodes: Vec<&str> = net.symbols();
    nodes.sort_unstable();
    for s in &nodes {
        pos(s)?;
    }

    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{c}\" height=\"{c}\" viewBox=\"0 0 {c} {c}\">",
        c = CANVAS
    );
    let _ = writeln!(out, "  <rect width=\"{c}\" height=\"{c}\" fill=\"#ffffff\"/>", c = CANVAS);

    out.push_str("  <g id=\"edges\" fill=\"none\" stroke-linecap=\"round\">\n");
    for e in sorted_edges(net) {
        let (a, b) = e.key();
        let ((x1, y1), (x2, y2)) = (pos(a)?, pos(b)?);
        let style = style_edge(e.weight);
        let level = (200.0 * (1.0 - style.darkness)).round() as u8;
        let dash = if style.dashed { " stroke-dasharray=\"10 6\"" } else { "" };
        let _ = writeln!(
            out,
            "    <line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"rgb({level},{level},{level})\" stroke-width=\"{:.2}\"{dash}><title>{} {}</title></line>",
            style.width,
            escape_xml(&e.pair_name()),
            format_value(e.weight)
        );
    }
    out.push_str("  </g>\n");

    out.push_str("  <g id=\"nodes\" font-family=\"sans-serif\" font-size=\"18\" text-anchor=\"middle\">\n");
    for s in nodes {
        let (x, y) = pos(s)?;
        let label = escape_xml(s);
        let _ = writeln!(
            out,
            "    <circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{NODE_RADIUS}\" fill=\"#f4f4f4\" stroke=\"#333333\" stroke-width=\"2\"/>"
        );
        let _ = writeln!(
            out,
            "    <text x=\"{x:.2}\" y=\"{:.2}\" fill=\"#111111\">{label}</text>",
            y + 6.0
        );
    }
    out.push_str("  </g>\n");
    out.push_str(
        "  <text x=\"20\" y=\"985\" font-family=\"sans-serif\" font-size=\"14\" fill=\"#555555\">solid: positive, dashed: negative; wider and darker: stronger correlation</text>\n",
    );
    out.push_str("</svg>\n");
    Ok(out)
}

fn dot_id(s: &str) -> String {
    const KEYWORDS: [&str; 6] = ["node", "edge", "graph", "digraph", "subgraph", "strict"];
    let plain = s.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !KEYWORDS.contains(&s.to_ascii_lowercase().as_str());
    if plain {
        s.to_string()
    } else {
        format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
    }
}

/// Undirected graphviz DOT. `weight` carries `|correlation|` (graphviz
/// rejects negative weights); `corr` keeps the sign.
pub fn to_dot(net: &CorrelationNetwork) -> String {
    let mut out = String::from("graph correlation_network {\n");
    let mut nodes: Vec<_> = net.nodes().iter().collect();
    nodes.sort_by(|a, b| a.asset.symbol.cmp(&b.asset.symbol));
    for node in nodes {
        let attrs: Vec<String> = node
            .labels
            .iter()
            .map(|(dim, cat)| format!("{}={}", dim, dot_id(cat)))
            .collect();
        if attrs.is_empty() {
            let _ = writeln!(out, "  {};", dot_id(&node.asset.symbol));
        } else {
            let _ = writeln!(out, "  {} [{}];", dot_id(&node.asset.symbol), attrs.join(", "));
        }
    }
    for e in sorted_edges(net) {
        let (a, b) = e.key();
        let dashed = if e.weight < 0.0 { ", style=dashed" } else { "" };
        let _ = writeln!(
            out,
            "  {} -- {} [weight={}, corr={}{dashed}];",
            dot_id(a),
            dot_id(b),
            e.weight.abs(),
            e.weight
        );
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedTable {
    pub text: String,
    pub csv: String,
}

fn format_p(p: f64) -> String {
    format!("{p:.4e}")
}

/// Ranked pair table as aligned text and as CSV. With `significance` the
/// `n`, `p` and `p_kind` columns are added.
pub fn render_table(pairs: &[RankedPair], method: Method, significance: bool) -> RenderedTable {
    let mut header = vec!["RANK".to_string(), "PAIR".to_string(), method.short_label().to_string()];
    let mut csv = String::from("rank,pair,value");
    if significance {
        header.extend(["N", "P", "P_KIND"].map(String::from));
        csv.push_str(",n,p,p_kind");
    }
    csv.push('\n');

    let mut rows = Vec::with_capacity(pairs.len());
    for r in pairs {
        let mut row = vec![r.rank.to_string(), r.pair_name(), format_value(r.value)];
        let _ = write!(csv, "{},{},{}", r.rank, r.pair_name(), format_value(r.value));
        if significance {
            let (p_text, p_csv, kind) = match r.significance {
                Some(s) => (format_p(s.p_two_sided), format!("{:e}", s.p_two_sided), s.p_kind.to_string()),
                None => ("-".to_string(), String::new(), String::new()),
            };
            row.extend([r.n.to_string(), p_text, if kind.is_empty() { "-".into() } else { kind.clone() }]);
            let _ = write!(csv, ",{},{},{}", r.n, p_csv, kind);
        }
        csv.push('\n');
        rows.push(row);
    }

    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap())
        .collect();
    let mut text = String::new();
    for row in std::iter::once(&header).chain(&rows) {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| match c {
                // pair and p_kind read better left-aligned
                1 | 5 => format!("{cell:<w$}", w = widths[c]),
                _ => format!("{cell:>w$}", w = widths[c]),
            })
            .collect();
        text.push_str(cells.join("  ").trim_end());
        text.push('\n');
    }
    RenderedTable { text, csv }
}

/// Two-column table of display names and symbols.
pub fn render_abbreviations(assets: &[AssetId]) -> String {
    let width = assets
        .iter()
        .map(|a| a.display_name.len())
        .chain(["ASSET".len()])
        .max()
        .unwrap();
    let mut out = format!("{:<width$}  ABBREVIATION\n", "ASSET");
    for a in assets {
        let _ = writeln!(out, "{:<width$}  {}", a.display_name, a.symbol);
    }
    out
}

/// Counts of pairs significant at 1%, 5% and 10%, and every pair that is
/// not significant at 5%.
pub fn render_significance(cm: &CorrelationMatrix) -> String {
    let mut out = String::new();
    let tested: Vec<_> = cm.estimates().iter().filter_map(|e| e.significance.map(|s| (e, s))).collect();
    let _ = writeln!(
        out,
        "{} two-sided tests ({}), {} pair(s)",
        cm.method(),
        match tested.iter().filter(|(_, s)| s.p_kind == crate::rank_stats::PKind::Exact).count() {
            0 => "all asymptotic".to_string(),
            k if k == tested.len() => "all exact".to_string(),
            k => format!("{k} exact"),
        },
        tested.len()
    );
    for level in [0.01, 0.05, 0.10] {
        let count = tested.iter().filter(|(_, s)| s.p_two_sided < level).count();
        let _ = writeln!(out, "p < {level:.2}: {count}");
    }
    let mut weak: Vec<_> = tested.iter().filter(|(_, s)| s.p_two_sided >= 0.05).collect();
    weak.sort_by_key(|(e, _)| e.pair_name());
    if !weak.is_empty() {
        out.push_str("not significant at 5%:\n");
        for (e, s) in weak {
            let _ = writeln!(out, "  {}  {}  p={}", e.pair_name(), format_value(e.value), format_p(s.p_two_sided));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Node;
    use crate::rank_stats::{rank_pairs, PKind, Significance};

    #[test]
    fn style_examples() {
        assert_eq!(style_edge(0.0), EdgeStyle { width: 0.5, darkness: 0.0, dashed: false });
        assert_eq!(style_edge(1.0), EdgeStyle { width: 6.0, darkness: 1.0, dashed: false });
        let s = style_edge(-0.2);
        assert!(s.dashed);
        assert_eq!(s.darkness, 0.2);
        assert!(style_edge(0.3).width < style_edge(-0.4).width);
    }

    #[test]
    fn value_rounding() {
        assert_eq!(format_value(0.76438), "0.7644");
        assert_eq!(format_value(0.568), "0.5680");
        assert_eq!(format_value(-0.2585), "-0.2585");
        assert_eq!(format_value(0.03125), "0.0313");
        assert_eq!(format_value(-0.03125), "-0.0313");
        assert_eq!(format_value(0.00005), "0.0001");
        assert_eq!(format_value(-0.00001), "0.0000");
        assert_eq!(format_value(1.0), "1.0000");
    }

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

    fn layout(points: &[(&str, [f64; 2])]) -> Layout {
        Layout::from_positions(points.iter().map(|(s, p)| (s.to_string(), *p)).collect())
    }

    #[test]
    fn svg_single_node() {
        let svg = to_svg(&net(&["a"], &[]), &layout(&[("a", [0.5, 0.5])])).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.descendants().filter(|n| n.has_tag_name("circle")).count(), 1);
        assert_eq!(doc.descendants().filter(|n| n.has_tag_name("line")).count(), 0);
    }

    #[test]
    fn svg_dashes_negative_edges() {
        let n = net(&["a", "b"], &[("a", "b", -0.3)]);
        let l = layout(&[("a", [0.0, 0.0]), ("b", [1.0, 1.0])]);
        let svg = to_svg(&n, &l).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let dashed: Vec<_> = doc
            .descendants()
            .filter(|n| n.attribute("stroke-dasharray").is_some())
            .collect();
        assert_eq!(dashed.len(), 1);
        assert!(dashed[0].has_tag_name("line"));
        assert_eq!(svg, to_svg(&n, &l).unwrap());
    }

    #[test]
    fn svg_needs_every_position() {
        let err = to_svg(&net(&["a", "b"], &[]), &layout(&[("a", [0.0, 0.0])])).unwrap_err();
        assert_eq!(err, RenderError::MissingPosition("b".into()));
    }

    #[test]
    fn svg_escapes_labels() {
        assert_eq!(escape_xml("a<b&\"c\""), "a&lt;b&amp;&quot;c&quot;");
    }

    #[test]
    fn dot_edges_and_nodes() {
        let dot = to_dot(&net(&["b", "a"], &[("b", "a", 0.5)]));
        assert_eq!(dot, "graph correlation_network {\n  a;\n  b;\n  a -- b [weight=0.5, corr=0.5];\n}\n");
        let dot = to_dot(&net(&["a", "b"], &[]));
        assert_eq!(dot, "graph correlation_network {\n  a;\n  b;\n}\n");
    }

    #[test]
    fn dot_is_canonical() {
        let one = net(&["a", "b", "c"], &[("a", "b", 0.5), ("b", "c", -0.25)]);
        let two = net(&["c", "b", "a"], &[("c", "b", -0.25), ("b", "a", 0.5)]);
        assert_eq!(to_dot(&one), to_dot(&two));
        assert!(to_dot(&one).contains("b -- c [weight=0.25, corr=-0.25, style=dashed];"));
    }

    #[test]
    fn dot_quotes_awkward_ids() {
        assert_eq!(dot_id("btc"), "btc");
        assert_eq!(dot_id("node"), "\"node\"");
        assert_eq!(dot_id("1inch"), "\"1inch\"");
        assert_eq!(dot_id("a-b"), "\"a-b\"");
    }

    fn ranked(values: &[(&str, &str, f64)]) -> Vec<RankedPair> {
        let mut symbols: Vec<&str> = values.iter().flat_map(|(a, b, _)| [*a, *b]).collect();
        symbols.dedup();
        let mut seen = std::collections::HashSet::new();
        symbols.retain(|s| seen.insert(*s));
        let assets = symbols.iter().map(|s| AssetId::from_symbol(*s).unwrap()).collect();
        rank_pairs(&CorrelationMatrix::from_values(assets, Method::Spearman, values).unwrap())
    }

    #[test]
    fn table_rows_in_rank_order() {
        let t = render_table(
            &ranked(&[("a", "b", 0.5), ("a", "c", 0.76438), ("b", "c", -0.1)]),
            Method::Spearman,
            false,
        );
        assert_eq!(t.text, "RANK  PAIR       SR\n   1  a c    0.7644\n   2  a b    0.5000\n   3  b c   -0.1000\n");
        assert_eq!(t.csv, "rank,pair,value\n1,a c,0.7644\n2,a b,0.5000\n3,b c,-0.1000\n");
    }

    #[test]
    fn table_empty_is_header_only() {
        let t = render_table(&[], Method::KendallB, true);
        assert_eq!(t.csv, "rank,pair,value,n,p,p_kind\n");
        assert_eq!(t.text, "RANK  PAIR  KT  N  P  P_KIND\n");
    }

    #[test]
    fn table_with_significance() {
        let rows = vec![RankedPair {
            rank: 1,
            pair: ("eth".into(), "etc".into()),
            value: 0.568,
            n: 537,
            significance: Some(Significance { p_two_sided: 1.5e-47, p_kind: PKind::Asymptotic }),
        }];
        let t = render_table(&rows, Method::Spearman, true);
        assert_eq!(t.csv, "rank,pair,value,n,p,p_kind\n1,eth etc,0.5680,537,1.5e-47,asymptotic\n");
        assert!(t.text.lines().nth(1).unwrap().contains("1.5000e-47  asymptotic"));
    }

    #[test]
    fn abbreviation_table() {
        let assets = vec![AssetId::new("btc", "Bitcoin").unwrap(), AssetId::new("usdt", "USD tether").unwrap()];
        assert_eq!(
            render_abbreviations(&assets),
            "ASSET       ABBREVIATION\nBitcoin     btc\nUSD tether  usdt\n"
        );
    }
}
