//! Utilization, throughput and per-layer / per-network reports.

use alloc::string::String;
use alloc::vec::Vec;

use crate::config::{peak_throughput, AccelConfig, BufferSizes};
use crate::error::{Error, Result};
use crate::layer::{Dims, LayerDescriptor};
use crate::memory::{layer_traffic, TrafficSummary};
use crate::oracle::{count_ops, sparsity, OpBasis};
use crate::sim::{pe_occupancy, CycleStats, StageBreakdown};

/// Stalls above this share of total cycles make a layer memory-bound.
pub const MEMORY_BOUND_STALL_SHARE: f64 = 0.05;

/// Compute cycles over total cycles.
pub fn utilization(stats: &CycleStats) -> Result<f64> {
    if stats.total == 0 {
        return Err(Error::ZeroCycles);
    }
    Ok(stats.compute as f64 / stats.total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Throughput {
    /// Operations actually executed per second, in GOP/s.
    pub valid_gops: f64,
    /// Equivalent dense-convolution operations per second, in GOP/s.
    pub effective_gops: f64,
}

pub fn seconds(cycles: u64, cfg: &AccelConfig) -> f64 {
    cycles as f64 / (cfg.clock_mhz * 1e6)
}

pub fn effective_throughput(layer: &LayerDescriptor, stats: &CycleStats, cfg: &AccelConfig) -> Result<Throughput> {
    if stats.total == 0 {
        return Err(Error::ZeroCycles);
    }
    let t = seconds(stats.total, cfg);
    Ok(Throughput {
        valid_gops: count_ops(layer, OpBasis::Valid) as f64 / t / 1e9,
        effective_gops: count_ops(layer, OpBasis::Nominal) as f64 / t / 1e9,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum BoundClass {
    Compute,
    Memory,
}

impl BoundClass {
    pub fn of(stall: u64, total: u64) -> Self {
        if stall as f64 > MEMORY_BOUND_STALL_SHARE * total as f64 {
            BoundClass::Memory
        } else {
            BoundClass::Compute
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BoundClass::Compute => "compute",
            BoundClass::Memory => "memory",
        }
    }
}

impl core::fmt::Display for BoundClass {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerReport {
    pub network: String,
    pub layer: String,
    pub dims: u32,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Input extents, depth omitted for 2D.
    pub in_size: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub crop: usize,
    pub cycles_total: u64,
    pub cycles_compute: u64,
    pub cycles_stall: u64,
    pub mac_count: u64,
    pub utilization: f64,
    pub gops_valid: f64,
    pub gops_effective: f64,
    pub sparsity: f64,
    pub bound_class: BoundClass,
    pub pe_occupancy: f64,
    pub overlap_messages: u64,
    pub saturations: u64,
    pub stages: StageBreakdown,
    pub traffic: TrafficSummary,
    pub nominal_ops: u64,
    pub valid_ops: u64,
}

impl LayerReport {
    pub fn new(network: &str, layer: &LayerDescriptor, stats: &CycleStats, cfg: &AccelConfig) -> Result<Self> {
        let tp = effective_throughput(layer, stats, cfg)?;
        Ok(Self {
            network: network.into(),
            layer: layer.name.clone(),
            dims: layer.dims.count(),
            in_channels: layer.in_channels,
            out_channels: layer.out_channels,
            in_size: crate::layer::spatial(layer.dims, &layer.in_size).to_vec(),
            kernel: layer.kernel,
            stride: layer.stride,
            crop: layer.crop,
            cycles_total: stats.total,
            cycles_compute: stats.compute,
            cycles_stall: stats.stall,
            mac_count: stats.mac_count,
            utilization: utilization(stats)?,
            gops_valid: tp.valid_gops,
            gops_effective: tp.effective_gops,
            sparsity: sparsity(layer),
            bound_class: BoundClass::of(stats.stall, stats.total),
            pe_occupancy: pe_occupancy(stats, cfg),
            overlap_messages: stats.overlap_messages,
            saturations: stats.saturations,
            stages: stats.stages(),
            traffic: layer_traffic(layer, cfg),
            nominal_ops: count_ops(layer, OpBasis::Nominal),
            valid_ops: count_ops(layer, OpBasis::Valid),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetworkSummary {
    pub network: String,
    pub dims: u32,
    pub layers: usize,
    pub cycles_total: u64,
    pub cycles_compute: u64,
    pub cycles_stall: u64,
    pub mac_count: u64,
    pub utilization: f64,
    pub gops_valid: f64,
    pub gops_effective: f64,
    /// Zeros over all inserted maps of the network.
    pub sparsity: f64,
    pub bound_class: BoundClass,
}

/// Aggregate layer reports of one network: cycles and ops are summed, so
/// throughput is total work over total time.
pub fn summarize(network: &str, dims: Dims, layers: &[LayerReport], cfg: &AccelConfig) -> NetworkSummary {
    let sum = |f: fn(&LayerReport) -> u64| layers.iter().map(f).sum::<u64>();
    let total = sum(|l| l.cycles_total);
    let compute = sum(|l| l.cycles_compute);
    let stall = sum(|l| l.cycles_stall);
    let t = seconds(total, cfg);
    let rate = |ops: u64| if total == 0 { 0.0 } else { ops as f64 / t / 1e9 };
    let (real, inserted) = layers.iter().fold((0.0, 0.0), |(r, i), l| {
        let real = l.in_size.iter().map(|&e| e as f64).product::<f64>();
        let ins = l.in_size.iter().map(|&e| ((e - 1) * l.stride + 1) as f64).product::<f64>();
        (r + real, i + ins)
    });
    NetworkSummary {
        network: network.into(),
        dims: dims.count(),
        layers: layers.len(),
        cycles_total: total,
        cycles_compute: compute,
        cycles_stall: stall,
        mac_count: sum(|l| l.mac_count),
        utilization: if total == 0 { 0.0 } else { compute as f64 / total as f64 },
        gops_valid: rate(sum(|l| l.valid_ops)),
        gops_effective: rate(sum(|l| l.nominal_ops)),
        sparsity: if inserted == 0.0 { 0.0 } else { 1.0 - real / inserted },
        bound_class: BoundClass::of(stall, total),
    }
}

/// Modelling assumptions echoed next to every report.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Assumptions {
    pub clock_mhz: f64,
    pub ddr_bandwidth_gbps: f64,
    pub derating: f64,
    pub bytes_per_cycle: f64,
    pub buffers: BufferSizes,
    pub peak_gops: f64,
    pub overlap_add_cycles: u64,
    pub crops: Vec<(String, usize)>,
    pub cross_tile_overlap: String,
    pub throughput_basis: String,
    pub utilization_basis: String,
}

impl Assumptions {
    pub fn new(cfg: &AccelConfig, overlap_add_cycles: u64, layers: &[LayerDescriptor]) -> Self {
        Self {
            clock_mhz: cfg.clock_mhz,
            ddr_bandwidth_gbps: cfg.ddr_bandwidth_gbps,
            derating: cfg.derating,
            bytes_per_cycle: cfg.bytes_per_cycle(),
            buffers: cfg.buffers,
            peak_gops: peak_throughput(cfg),
            overlap_add_cycles,
            crops: layers.iter().map(|l| (l.name.clone(), l.crop)).collect(),
            cross_tile_overlap: "halo accumulation in the output buffer".into(),
            throughput_basis: "gops_effective counts dense-convolution ops on the zero-inserted map; gops_valid counts executed ops".into(),
            utilization_basis: "MAC cycles over total cycles".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(compute: u64, total: u64, stall: u64) -> CycleStats {
        CycleStats {
            compute,
            total,
            stall,
            ..CycleStats::default()
        }
    }

    #[test]
    fn utilization_ratio() {
        assert_eq!(utilization(&stats(90, 100, 0)), Ok(0.9));
        assert_eq!(utilization(&stats(0, 0, 0)), Err(Error::ZeroCycles));
    }

    #[test]
    fn bound_threshold() {
        assert_eq!(BoundClass::of(5, 100), BoundClass::Compute);
        assert_eq!(BoundClass::of(6, 100), BoundClass::Memory);
    }

    #[test]
    fn unit_stride_has_equal_bases() {
        let layer = LayerDescriptor::new_2d("l", 4, 4, [5, 5], 3, 1);
        // with S=1 nominal counts the padded border, so compare at K=1
        let point = LayerDescriptor::new_2d("l", 4, 4, [5, 5], 1, 1);
        let s = stats(100, 1000, 0);
        let cfg = AccelConfig::table2_2d();
        let tp = effective_throughput(&point, &s, &cfg).unwrap();
        assert_eq!(tp.valid_gops, tp.effective_gops);
        let tp = effective_throughput(&layer, &s, &cfg).unwrap();
        assert!(tp.effective_gops > tp.valid_gops);
    }
}
