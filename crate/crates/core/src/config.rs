//! Accelerator parameters.
//!
//! The engine has `T_m` groups (one output channel each at a time). Every
//! group is a 3D mesh of `T_n × T_z` PE arrays of `T_r × T_c` PEs. In 3D mode
//! the `T_z` arrays of a lane hold consecutive depth planes of one input
//! channel; in 2D mode every array holds its own input channel and FIFO-D is
//! unused.

use alloc::vec::Vec;

use crate::fixed::FxFormat;
use crate::layer::{Dims, LayerDescriptor};
use crate::schedule::fifo_depth_requirement;

pub const KIB: u64 = 1024;
pub const MIB: u64 = 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BufferSizes {
    pub input: u64,
    pub weight: u64,
    pub output: u64,
}

impl Default for BufferSizes {
    fn default() -> Self {
        Self {
            input: 2 * MIB,
            weight: MIB,
            output: 2 * MIB,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AccelConfig {
    pub t_m: usize,
    pub t_n: usize,
    pub t_z: usize,
    pub t_r: usize,
    pub t_c: usize,
    pub word_bits: u32,
    pub frac_bits: u32,
    pub accumulator_bits: u32,
    pub clock_mhz: f64,
    /// Aggregate off-chip bandwidth in GB/s.
    pub ddr_bandwidth_gbps: f64,
    /// Fraction of the nominal bandwidth that transfers actually achieve.
    pub derating: f64,
    pub buffers: BufferSizes,
}

impl Default for AccelConfig {
    fn default() -> Self {
        Self::table2_3d()
    }
}

impl AccelConfig {
    pub fn with_mesh(t_m: usize, t_n: usize, t_z: usize, t_r: usize, t_c: usize) -> Self {
        Self {
            t_m,
            t_n,
            t_z,
            t_r,
            t_c,
            word_bits: 16,
            frac_bits: 8,
            accumulator_bits: 48,
            clock_mhz: 200.0,
            ddr_bandwidth_gbps: 25.6,
            derating: 0.8,
            buffers: BufferSizes::default(),
        }
    }

    /// The fixed configuration used for the 2D benchmarks.
    pub fn table2_2d() -> Self {
        Self::with_mesh(2, 64, 1, 4, 4)
    }

    /// The fixed configuration used for the 3D benchmarks.
    pub fn table2_3d() -> Self {
        Self::with_mesh(2, 16, 4, 4, 4)
    }

    pub fn fx(&self) -> FxFormat {
        FxFormat {
            word_bits: self.word_bits,
            frac_bits: self.frac_bits,
            accumulator_bits: self.accumulator_bits,
        }
    }

    pub fn word_bytes(&self) -> u64 {
        u64::from(self.word_bits.div_ceil(8))
    }

    pub fn accumulator_bytes(&self) -> u64 {
        u64::from(self.accumulator_bits.div_ceil(8))
    }

    /// Input channels processed side by side in one tile.
    pub fn channel_lanes(&self, dims: Dims) -> usize {
        match dims {
            Dims::Two => self.t_n * self.t_z,
            Dims::Three => self.t_n,
        }
    }

    /// Spatial extent of one tile, `[depth, rows, cols]`.
    pub fn spatial_tile(&self, dims: Dims) -> [usize; 3] {
        match dims {
            Dims::Two => [1, self.t_r, self.t_c],
            Dims::Three => [self.t_z, self.t_r, self.t_c],
        }
    }

    /// Sustained off-chip bytes per accelerator cycle.
    pub fn bytes_per_cycle(&self) -> f64 {
        self.ddr_bandwidth_gbps * 1e9 * self.derating / (self.clock_mhz * 1e6)
    }
}

pub fn pe_count(cfg: &AccelConfig) -> usize {
    cfg.t_m * cfg.t_n * cfg.t_z * cfg.t_r * cfg.t_c
}

/// Adders in the cross-channel reduction trees: `T_m · T_c · T_z · log2(T_n)`.
pub fn adder_count(cfg: &AccelConfig) -> Result<usize, ConfigViolation> {
    if !cfg.t_n.is_power_of_two() {
        return Err(ConfigViolation::NotPowerOfTwo { t_n: cfg.t_n });
    }
    Ok(cfg.t_m * cfg.t_c * cfg.t_z * cfg.t_n.trailing_zeros() as usize)
}

/// Raw MAC peak in GOP/s (two operations per MAC).
pub fn peak_throughput(cfg: &AccelConfig) -> f64 {
    pe_count(cfg) as f64 * 2.0 * cfg.clock_mhz * 1e6 / 1e9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BufferKind {
    Input,
    Weight,
    Output,
}

impl core::fmt::Display for BufferKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            BufferKind::Input => "input",
            BufferKind::Weight => "weight",
            BufferKind::Output => "output",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigViolation {
    #[error("{0} must be at least 1")]
    ZeroParameter(&'static str),
    #[error("T_n = {t_n} must be a power of two")]
    NotPowerOfTwo { t_n: usize },
    #[error("word width {word_bits} / fraction {frac_bits} bits is not a valid fixed-point format")]
    Format { word_bits: u32, frac_bits: u32 },
    #[error("accumulator of {available} bits is too narrow for layer {layer}, which needs {required}")]
    AccumulatorTooNarrow {
        layer: alloc::string::String,
        required: u32,
        available: u32,
    },
    #[error("clock must be positive, got {0} MHz")]
    Clock(f64),
    #[error("bandwidth must be positive, got {0} GB/s")]
    Bandwidth(f64),
    #[error("derating must be in (0, 1], got {0}")]
    Derating(f64),
    #[error("{buffer} buffer holds {available} B but one tile of layer {layer} needs {required} B")]
    BufferTooSmall {
        layer: alloc::string::String,
        buffer: BufferKind,
        required: u64,
        available: u64,
    },
}

/// On-chip bytes needed by one tile of `layer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileFootprint {
    pub input: u64,
    pub weight: u64,
    /// Partial-sum block of the tile including its trailing overlap slab.
    pub output: u64,
}

pub fn tile_footprint(cfg: &AccelConfig, layer: &LayerDescriptor) -> TileFootprint {
    let tile = cfg.spatial_tile(layer.dims);
    let lanes = cfg.channel_lanes(layer.dims) as u64;
    let axes = layer.axes();
    let activations: u64 = tile.iter().map(|&e| e as u64).product();
    let block: u64 = (0..3)
        .map(|a| ((tile[a] - 1) * axes[a].stride + axes[a].kernel) as u64)
        .product();
    TileFootprint {
        input: lanes * activations * cfg.word_bytes(),
        weight: cfg.t_m as u64 * lanes * layer.kernel_volume() as u64 * cfg.word_bytes(),
        output: cfg.t_m as u64 * block * cfg.accumulator_bytes(),
    }
}

/// All problems with `cfg`, and with running `layer` on it when given.
pub fn validate_config(cfg: &AccelConfig, layer: Option<&LayerDescriptor>) -> Vec<ConfigViolation> {
    let mut out = Vec::new();
    for (name, v) in [
        ("T_m", cfg.t_m),
        ("T_n", cfg.t_n),
        ("T_z", cfg.t_z),
        ("T_r", cfg.t_r),
        ("T_c", cfg.t_c),
    ] {
        if v == 0 {
            out.push(ConfigViolation::ZeroParameter(name));
        }
    }
    if cfg.t_n > 0 && !cfg.t_n.is_power_of_two() {
        out.push(ConfigViolation::NotPowerOfTwo { t_n: cfg.t_n });
    }
    if cfg.fx().validate().is_err() {
        out.push(ConfigViolation::Format {
            word_bits: cfg.word_bits,
            frac_bits: cfg.frac_bits,
        });
    }
    if !(cfg.clock_mhz > 0.0 && cfg.clock_mhz.is_finite()) {
        out.push(ConfigViolation::Clock(cfg.clock_mhz));
    }
    if !(cfg.ddr_bandwidth_gbps > 0.0 && cfg.ddr_bandwidth_gbps.is_finite()) {
        out.push(ConfigViolation::Bandwidth(cfg.ddr_bandwidth_gbps));
    }
    if !(cfg.derating > 0.0 && cfg.derating <= 1.0) {
        out.push(ConfigViolation::Derating(cfg.derating));
    }
    let Some(layer) = layer else { return out };
    if !out.is_empty() {
        return out;
    }

    let fx = cfg.fx();
    let terms = (layer.in_channels * layer.kernel_volume()) as u64;
    if !fx.accumulation_fits(terms) {
        out.push(ConfigViolation::AccumulatorTooNarrow {
            layer: layer.name.clone(),
            required: fx.required_accumulator_bits(terms),
            available: cfg.accumulator_bits,
        });
    }
    let need = tile_footprint(cfg, layer);
    for (buffer, required, available) in [
        (BufferKind::Input, need.input, cfg.buffers.input),
        (BufferKind::Weight, need.weight, cfg.buffers.weight),
        (BufferKind::Output, need.output, cfg.buffers.output),
    ] {
        if required > available {
            out.push(ConfigViolation::BufferTooSmall {
                layer: layer.name.clone(),
                buffer,
                required,
                available,
            });
        }
    }
    out
}

/// Coarse hardware inventory. Multipliers map to DSP slices; adders and
/// FIFOs map to logic and distributed RAM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResourceEstimate {
    pub multipliers: usize,
    /// Adder-tree adders plus one accumulate adder per PE.
    pub adders: usize,
    pub buffer_bits: u64,
    pub fifo_bits: u64,
}

/// Resources for `cfg` with overlap FIFOs sized for kernel `kernel` and stride `stride`.
pub fn resource_estimate(cfg: &AccelConfig, kernel: usize, stride: usize) -> ResourceEstimate {
    let pes = pe_count(cfg);
    let depth = fifo_depth_requirement(kernel, stride, Dims::Three) + kernel.pow(3);
    ResourceEstimate {
        multipliers: pes,
        adders: adder_count(cfg).unwrap_or(0) + pes,
        buffer_bits: 8 * (cfg.buffers.input + cfg.buffers.weight + cfg.buffers.output),
        fifo_bits: (pes * 3 * depth) as u64 * u64::from(cfg.accumulator_bits),
    }
}
