//! Bundled benchmark networks and named configurations.

use deconv_core::{AccelConfig, Dims, NetworkDescriptor};

use crate::formats::parse_network;

const FILES: [(&str, &str); 4] = [
    ("dcgan", include_str!("../data/benchmarks/dcgan.json")),
    ("gp-gan", include_str!("../data/benchmarks/gp-gan.json")),
    ("3d-gan", include_str!("../data/benchmarks/3d-gan.json")),
    ("v-net", include_str!("../data/benchmarks/v-net.json")),
];

pub const BENCHMARK_NAMES: [&str; 4] = ["dcgan", "gp-gan", "3d-gan", "v-net"];

/// The four bundled networks, 2D ones first.
pub fn builtin_benchmarks() -> Vec<NetworkDescriptor> {
    FILES
        .iter()
        .map(|(name, text)| parse_network(text).unwrap_or_else(|e| panic!("bundled {name}: {e}")))
        .collect()
}

pub fn builtin_network(name: &str) -> Option<NetworkDescriptor> {
    FILES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_network(text).expect("bundled network parses"))
}

/// Named configurations: `table2-2d`, `table2-3d`, or `table2`, which picks
/// the one matching the network's dimensionality.
pub fn builtin_config(name: &str, dims: Dims) -> Option<AccelConfig> {
    match (name, dims) {
        ("table2-2d", _) | ("table2", Dims::Two) => Some(AccelConfig::table2_2d()),
        ("table2-3d", _) | ("table2", Dims::Three) => Some(AccelConfig::table2_3d()),
        _ => None,
    }
}

pub const CONFIG_NAMES: [&str; 3] = ["table2-2d", "table2-3d", "table2"];
