//! Off-chip traffic and double-buffered transfer/compute overlap.
//!
//! Transfers for tile `i + 1` run while tile `i` computes. Each compute slot
//! also carries a share of the next output-channel tile's weights and a
//! share of the previous output block's write-back, so a slot lasts
//! `max(busy, transfer)` cycles.

use alloc::vec;
use alloc::vec::Vec;

use crate::config::AccelConfig;
use crate::error::{Error, Result};
use crate::layer::LayerDescriptor;
use crate::schedule::TileSchedule;

/// Byte counts for one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrafficSummary {
    pub input_bytes: u64,
    pub weight_bytes: u64,
    pub output_bytes: u64,
    /// How many times the input feature maps are read.
    pub refetch_factor: u64,
    /// The whole input fits the input buffer and is read once.
    pub input_resident: bool,
    /// A double-buffered output-channel tile of weights fits the weight buffer.
    pub weights_resident: bool,
}

impl TrafficSummary {
    pub fn total_bytes(&self) -> u64 {
        self.input_bytes + self.weight_bytes + self.output_bytes
    }
}

pub fn input_fits(layer: &LayerDescriptor, cfg: &AccelConfig) -> bool {
    (layer.input_volume() * layer.in_channels) as u64 * cfg.word_bytes() <= cfg.buffers.input
}

pub fn weights_fit(layer: &LayerDescriptor, cfg: &AccelConfig) -> bool {
    2 * (cfg.t_m * layer.in_channels * layer.kernel_volume()) as u64 * cfg.word_bytes() <= cfg.buffers.weight
}

pub fn layer_traffic(layer: &LayerDescriptor, cfg: &AccelConfig) -> TrafficSummary {
    let bytes = cfg.word_bytes();
    let input_resident = input_fits(layer, cfg);
    let weights_resident = weights_fit(layer, cfg);
    let refetch_factor = if input_resident {
        1
    } else {
        layer.out_channels.div_ceil(cfg.t_m) as u64
    };
    let spatial_tiles: u64 = (0..3)
        .map(|a| layer.in_size[a].div_ceil(cfg.spatial_tile(layer.dims)[a]) as u64)
        .product();
    let weight_reads = if weights_resident { 1 } else { spatial_tiles };
    let out_vol: u64 = layer.output_shape().cropped.iter().map(|&e| e as u64).product();
    TrafficSummary {
        input_bytes: (layer.input_volume() * layer.in_channels) as u64 * refetch_factor * bytes,
        weight_bytes: (layer.in_channels * layer.out_channels * layer.kernel_volume()) as u64 * weight_reads * bytes,
        output_bytes: out_vol * layer.out_channels as u64 * bytes,
        refetch_factor,
        input_resident,
        weights_resident,
    }
}

/// `ceil(x)`, except that values within floating-point noise of an integer
/// round to it.
pub fn ceil_cycles(x: f64) -> u64 {
    let r = libm::round(x);
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as u64
    } else {
        libm::ceil(x) as u64
    }
}

/// Cycles to move `bytes` at the configured (derated) bandwidth.
pub fn transfer_cycles(bytes: f64, cfg: &AccelConfig) -> Result<u64> {
    let per_cycle = cfg.bytes_per_cycle();
    if per_cycle <= 0.0 || !per_cycle.is_finite() {
        return Err(Error::ZeroBandwidth);
    }
    Ok(ceil_cycles(bytes / per_cycle))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Overlapped {
    pub total: u64,
    pub stalls: u64,
}

/// Uniform double buffering: the first transfer is exposed, then every tile
/// takes `max(compute, transfer)`.
pub fn overlap_transfer_compute(compute: u64, transfer: u64, tiles: u64) -> Overlapped {
    overlap_schedule(transfer, (0..tiles).map(|_| (compute, transfer)), 0)
}

/// General form: `slots` yields `(busy, transfer)` per compute slot.
pub fn overlap_schedule(prologue: u64, slots: impl IntoIterator<Item = (u64, u64)>, epilogue: u64) -> Overlapped {
    let mut total = prologue + epilogue;
    let mut stalls = 0;
    for (busy, transfer) in slots {
        total += busy.max(transfer);
        stalls += transfer.saturating_sub(busy);
    }
    Overlapped { total, stalls }
}

/// Bytes moved before, during and after the compute slots of a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferPlan {
    pub prologue_bytes: f64,
    /// Bytes transferred while tile `i` computes.
    pub slot_bytes: Vec<f64>,
    pub epilogue_bytes: f64,
}

impl TransferPlan {
    pub fn total_bytes(&self) -> f64 {
        self.prologue_bytes + self.slot_bytes.iter().sum::<f64>() + self.epilogue_bytes
    }
}

/// Output elements written back by the block of spatial tile `idx`: along
/// each axis tile `[a, b)` owns output `[a·S, b·S)`, the last tile owns
/// through the end, and the crop border is never written.
fn owned_span(layer: &LayerDescriptor, tile_shape: [usize; 3], grid: [usize; 3], idx: [usize; 3]) -> u64 {
    let axes = layer.axes();
    (0..3)
        .map(|a| {
            let ax = axes[a];
            let start = idx[a] * tile_shape[a];
            let end = (start + tile_shape[a]).min(ax.input);
            let lo = start * ax.stride;
            let hi = if idx[a] + 1 == grid[a] { ax.full() } else { end * ax.stride };
            let lo = lo.max(ax.crop);
            let hi = hi.min(ax.full() - ax.crop);
            hi.saturating_sub(lo) as u64
        })
        .product()
}

pub fn transfer_plan(layer: &LayerDescriptor, cfg: &AccelConfig, schedule: &TileSchedule) -> TransferPlan {
    let bytes = cfg.word_bytes() as f64;
    let kvol = layer.kernel_volume();
    let input_resident = input_fits(layer, cfg);
    let weights_resident = weights_fit(layer, cfg);
    let per_m = schedule.tiles_per_m();
    let n = schedule.len();

    let load = |i: usize| -> f64 {
        let t = &schedule.tiles[i];
        let mut b = 0.0;
        if t.m_tile == 0 || !input_resident {
            b += (t.activations() * t.in_channels.len()) as f64 * bytes;
        }
        if !weights_resident {
            b += (t.out_channels.len() * t.in_channels.len() * kvol) as f64 * bytes;
        }
        b
    };
    let m_weights = |m: usize| -> f64 {
        let oc = (cfg.t_m).min(layer.out_channels - m * cfg.t_m);
        (oc * layer.in_channels * kvol) as f64 * bytes
    };

    let mut slot_bytes = vec![0.0; n];
    for (i, slot) in slot_bytes.iter_mut().enumerate().take(n.saturating_sub(1)) {
        *slot += load(i + 1);
    }
    if weights_resident {
        for m in 0..schedule.m_tiles.saturating_sub(1) {
            let share = m_weights(m + 1) / per_m as f64;
            for slot in &mut slot_bytes[m * per_m..(m + 1) * per_m] {
                *slot += share;
            }
        }
    }
    let nt = schedule.n_tiles;
    let blocks = n / nt;
    let mut epilogue_bytes = 0.0;
    for b in 0..blocks {
        let closing = &schedule.tiles[b * nt + nt - 1];
        let wb = owned_span(layer, schedule.tile_shape, schedule.spatial_grid, closing.spatial_tile) as f64
            * closing.out_channels.len() as f64
            * bytes;
        if b + 1 < blocks {
            for slot in &mut slot_bytes[(b + 1) * nt..(b + 2) * nt] {
                *slot += wb / nt as f64;
            }
        } else {
            epilogue_bytes = wb;
        }
    }
    let prologue_bytes = load(0) + if weights_resident { m_weights(0) } else { 0.0 };
    TransferPlan {
        prologue_bytes,
        slot_bytes,
        epilogue_bytes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BufferSizes, KIB, MIB};
    use crate::schedule::tile_layer;

    #[test]
    fn single_activation_traffic() {
        let l = LayerDescriptor::new_3d("l", 1, 1, [1, 1, 1], 3, 2);
        let t = layer_traffic(&l, &AccelConfig::table2_3d());
        assert_eq!((t.input_bytes, t.weight_bytes, t.output_bytes), (2, 54, 54));
        assert_eq!(t.refetch_factor, 1);
    }

    #[test]
    fn refetch_per_output_channel_tile() {
        let mut cfg = AccelConfig::table2_3d();
        let l = LayerDescriptor::new_3d("l", 16, 4 * cfg.t_m, [4, 4, 4], 3, 2);
        assert_eq!(layer_traffic(&l, &cfg).refetch_factor, 1);
        cfg.buffers.input = KIB;
        let t = layer_traffic(&l, &cfg);
        assert_eq!(t.refetch_factor, 4);
        assert_eq!(t.input_bytes, 4 * 16 * 64 * 2);
        let narrow = LayerDescriptor::new_3d("l", 16, cfg.t_m, [4, 4, 4], 3, 2);
        assert_eq!(layer_traffic(&narrow, &cfg).refetch_factor, 1);
    }

    #[test]
    fn transfer_cycle_examples() {
        let mut cfg = AccelConfig::table2_3d();
        cfg.derating = 1.0;
        assert_eq!(transfer_cycles(0.0, &cfg), Ok(0));
        assert_eq!(transfer_cycles(128.0, &cfg), Ok(1));
        assert_eq!(transfer_cycles(129.0, &cfg), Ok(2));
        assert_eq!(transfer_cycles(MIB as f64, &cfg), Ok(8192));
        cfg.derating = 0.8;
        assert_eq!(transfer_cycles(MIB as f64, &cfg), Ok(10240));
        cfg.ddr_bandwidth_gbps = 0.0;
        assert_eq!(transfer_cycles(1.0, &cfg), Err(Error::ZeroBandwidth));
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(
            overlap_transfer_compute(90, 100, 10),
            Overlapped {
                total: 100 + 10 * 100,
                stalls: 100
            }
        );
        assert_eq!(overlap_transfer_compute(90, 0, 10), Overlapped { total: 900, stalls: 0 });
        assert_eq!(overlap_transfer_compute(50, 50, 4).stalls, 0);
    }

    #[test]
    fn plan_moves_every_byte_once() {
        let mut cfg = AccelConfig::table2_2d();
        for buffers in [
            BufferSizes::default(),
            BufferSizes {
                input: 4 * KIB,
                weight: 4 * KIB,
                output: MIB,
            },
        ] {
            cfg.buffers = buffers;
            let l = LayerDescriptor::new_2d("l", 100, 5, [7, 6], 3, 2).with_crop(1);
            let s = tile_layer(&l, &cfg);
            let plan = transfer_plan(&l, &cfg, &s);
            let t = layer_traffic(&l, &cfg);
            assert!((plan.total_bytes() - t.total_bytes() as f64).abs() < 1e-6);
        }
    }
}
