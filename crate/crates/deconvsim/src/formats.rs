//! JSON descriptor files for networks and accelerator configurations.

use std::fs;
use std::path::Path;

use deconv_core::network::ChainViolation;
use deconv_core::{AccelConfig, BufferSizes, Dims, LayerDescriptor, NetworkDescriptor};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Schema(String),
    #[error("invalid network:\n  {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n  "))]
    Chain(Vec<ChainViolation>),
}

impl FormatError {
    pub fn is_io(&self) -> bool {
        matches!(self, FormatError::Io { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[H, W]` or `[D, H, W]`.
    pub in_size: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    #[serde(default)]
    pub crop: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub name: String,
    pub dims: u64,
    pub layers: Vec<LayerFile>,
}

impl NetworkFile {
    pub fn into_descriptor(self) -> Result<NetworkDescriptor, FormatError> {
        let dims = Dims::from_count(self.dims)
            .ok_or_else(|| FormatError::Schema(format!("dims: expected 2 or 3, got {}", self.dims)))?;
        let layers = self
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let in_size = match (dims, l.in_size.as_slice()) {
                    (Dims::Two, &[h, w]) => [1, h, w],
                    (Dims::Three, &[d, h, w]) => [d, h, w],
                    (_, other) => {
                        return Err(FormatError::Schema(format!(
                            "layers[{i}].in_size: expected {} extents, got {}",
                            dims.count(),
                            other.len()
                        )))
                    }
                };
                Ok(LayerDescriptor {
                    name: l.name,
                    dims,
                    in_channels: l.in_channels,
                    out_channels: l.out_channels,
                    in_size,
                    kernel: l.kernel,
                    stride: l.stride,
                    crop: l.crop,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let net = NetworkDescriptor {
            name: self.name,
            dims,
            layers,
        };
        let violations = net.validate();
        if violations.is_empty() {
            Ok(net)
        } else {
            Err(FormatError::Chain(violations))
        }
    }
}

impl From<&NetworkDescriptor> for NetworkFile {
    fn from(net: &NetworkDescriptor) -> Self {
        Self {
            name: net.name.clone(),
            dims: u64::from(net.dims.count()),
            layers: net
                .layers
                .iter()
                .map(|l| LayerFile {
                    name: l.name.clone(),
                    in_channels: l.in_channels,
                    out_channels: l.out_channels,
                    in_size: match net.dims {
                        Dims::Two => l.in_size[1..].to_vec(),
                        Dims::Three => l.in_size.to_vec(),
                    },
                    kernel: l.kernel,
                    stride: l.stride,
                    crop: l.crop,
                })
                .collect(),
        }
    }
}

pub fn parse_network(text: &str) -> Result<NetworkDescriptor, FormatError> {
    serde_json::from_str::<NetworkFile>(text)?.into_descriptor()
}

pub fn serialize_network(net: &NetworkDescriptor) -> String {
    let mut s = serde_json::to_string_pretty(&NetworkFile::from(net)).expect("network serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuffersFile {
    pub input: u64,
    pub weight: u64,
    pub output: u64,
}

/// Accelerator configuration file. Accumulator width and bandwidth derating
/// are not part of the file; they keep their defaults unless overridden on
/// the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub t_m: usize,
    pub t_n: usize,
    pub t_z: usize,
    pub t_r: usize,
    pub t_c: usize,
    pub word_bits: u32,
    pub frac_bits: u32,
    pub clock_mhz: f64,
    pub ddr_bandwidth_gbps: f64,
    pub buffers: BuffersFile,
}

impl From<ConfigFile> for AccelConfig {
    fn from(f: ConfigFile) -> Self {
        AccelConfig {
            word_bits: f.word_bits,
            frac_bits: f.frac_bits,
            clock_mhz: f.clock_mhz,
            ddr_bandwidth_gbps: f.ddr_bandwidth_gbps,
            buffers: BufferSizes {
                input: f.buffers.input,
                weight: f.buffers.weight,
                output: f.buffers.output,
            },
            ..AccelConfig::with_mesh(f.t_m, f.t_n, f.t_z, f.t_r, f.t_c)
        }
    }
}

impl From<&AccelConfig> for ConfigFile {
    fn from(c: &AccelConfig) -> Self {
        Self {
            t_m: c.t_m,
            t_n: c.t_n,
            t_z: c.t_z,
            t_r: c.t_r,
            t_c: c.t_c,
            word_bits: c.word_bits,
            frac_bits: c.frac_bits,
            clock_mhz: c.clock_mhz,
            ddr_bandwidth_gbps: c.ddr_bandwidth_gbps,
            buffers: BuffersFile {
                input: c.buffers.input,
                weight: c.buffers.weight,
                output: c.buffers.output,
            },
        }
    }
}

/// Parses a configuration file. Structural checks only; semantic problems
/// are reported by `validate_config`.
pub fn parse_config(text: &str) -> Result<AccelConfig, FormatError> {
    Ok(serde_json::from_str::<ConfigFile>(text)?.into())
}

pub fn serialize_config(cfg: &AccelConfig) -> String {
    let mut s = serde_json::to_string_pretty(&ConfigFile::from(cfg)).expect("config serializes");
    s.push('\n');
    s
}

pub fn read_to_string(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}
