//! Rank-correlation networks for daily asset returns.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! - [`market_data`]: parse, fetch and window daily USD price series.
//! - [`returns`]: daily percentage returns aligned into a date × asset matrix.
//! - [`rank_stats`]: Spearman's rho, Kendall's tau-b and their two-sided tests.
//! - [`network`]: correlation networks, thresholding and group concordance.
//! - [`layout`]: deterministic Fruchterman-Reingold placement.
//! - [`render`]: SVG, DOT and ranked-table output.
//!
//! ```
//! use corrnet::rank_stats::{kendall_tau_b, spearman_rho};
//!
//! let rho = spearman_rho(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap();
//! assert_eq!(rho, 1.0);
//! let tau = kendall_tau_b(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
//! assert!((tau - 1.0 / 3.0).abs() < 1e-15);
//! ```

pub mod bundled;
pub mod layout;
pub mod market_data;
pub mod network;
pub mod rank_stats;
pub mod render;
pub mod returns;

pub use layout::{fruchterman_reingold, Layout, LayoutParams};
pub use market_data::{AssetId, Dataset, DatasetWindow, PricePoint, PriceSeries};
pub use network::{CorrelationNetwork, GroupLabeling, ThresholdResult};
pub use rank_stats::{CorrEstimate, CorrelationMatrix, Method, MissingPolicy};
pub use returns::{GapPolicy, ReturnSeries, ReturnsMatrix};
