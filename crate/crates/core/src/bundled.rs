//! Built-in reference data for fourteen major cryptocurrencies: display
//! names and a four-dimension categorization (token creation, validation,
//! target market, token function).

use crate::market_data::AssetId;
use crate::network::{load_labelings, GroupLabeling};

pub const ASSETS_CSV: &str = include_str!("../data/assets.csv");
pub const GROUPS_CSV: &str = include_str!("../data/crypto_groups.csv");

/// Bundled assets in table order.
pub fn assets() -> Vec<AssetId> {
    ASSETS_CSV
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|line| {
            let (symbol, name) = line.split_once(',').expect("bundled asset row");
            AssetId::new(symbol, name).expect("bundled asset is valid")
        })
        .collect()
}

pub fn asset(symbol: &str) -> Option<AssetId> {
    assets().into_iter().find(|a| a.symbol == symbol)
}

pub fn labelings() -> Vec<GroupLabeling> {
    load_labelings(GROUPS_CSV).expect("bundled labels parse")
}
