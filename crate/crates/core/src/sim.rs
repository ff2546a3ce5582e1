//! Layer simulation: functional result plus cycle accounting.
//!
//! Timing per tile is `K^dims` MAC cycles. Filling the mesh (`T_c` cycles)
//! is paid at the start of every output-channel sweep and draining it
//! (`T_c` hops plus `log2 T_n` adder-tree levels) at the end, since
//! consecutive tiles of a sweep pipeline behind each other. Memory
//! transfers overlap compute through double buffering; a slot whose
//! transfer outlasts its compute stalls.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::config::{pe_count, validate_config, AccelConfig};
use crate::error::{Error, Result};
use crate::fixed::{add, mac, sum, sums_cannot_overflow, Arith};
use crate::layer::LayerDescriptor;
use crate::memory::{overlap_schedule, transfer_cycles, transfer_plan};
use crate::mesh::{MeshSim, PeCoord, TraceEvent};
use crate::oracle::check_inputs;
use crate::schedule::{fifo_depth_requirement, lane_location, max_messages_received, tile_layer, tile_messages, Tile, TileSchedule};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Fidelity {
    /// Tile-granular functional model with analytic message counts.
    #[default]
    Tile,
    /// Every PE array stepped cycle by cycle. Small layers only.
    Cycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimOptions {
    pub fidelity: Fidelity,
    /// Extra cycles per overlap addition; 0 means additions are fused into MACs.
    pub overlap_add_cycles: u64,
    /// Record a per-cycle trace (cycle fidelity only).
    pub trace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CycleStats {
    pub total: u64,
    /// MAC cycles, `K^dims` per tile.
    pub compute: u64,
    pub fill: u64,
    pub drain: u64,
    /// Exposed transfer before the first tile.
    pub load: u64,
    /// Exposed write-back after the last tile.
    pub write_back: u64,
    /// Cycles the mesh waited on memory.
    pub stall: u64,
    pub overlap_add: u64,
    pub mac_count: u64,
    pub overlap_messages: u64,
    pub tiles: u64,
    pub saturations: u64,
}

/// Cycles attributed to each dataflow stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageBreakdown {
    pub loading: u64,
    pub computing: u64,
    pub writing_back: u64,
}

impl CycleStats {
    pub fn stages(&self) -> StageBreakdown {
        StageBreakdown {
            loading: self.load + self.stall,
            computing: self.compute + self.fill + self.overlap_add,
            writing_back: self.drain + self.write_back,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub output: Tensor,
    pub stats: CycleStats,
    pub trace: Vec<TraceEvent>,
    /// Deepest overlap FIFO seen; only measured at cycle fidelity.
    pub peak_fifo_occupancy: usize,
    pub fifo_capacity: usize,
}

/// Per-FIFO depth the mesh is built with: the largest slab plus one block.
pub fn fifo_capacity(layer: &LayerDescriptor) -> usize {
    fifo_depth_requirement(layer.kernel, layer.stride, layer.dims) + layer.kernel_volume()
}

/// Binary reduction of `partials`, one tree level at a time.
pub fn adder_tree_reduce(partials: &[i64]) -> Result<i64> {
    if !partials.len().is_power_of_two() {
        return Err(Error::NotPowerOfTwo(partials.len()));
    }
    let mut level = partials.to_vec();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|p| add(p[0], p[1]))
            .collect::<Result<_>>()?;
    }
    Ok(level[0])
}

pub fn adder_tree_levels(t_n: usize) -> u64 {
    u64::from(t_n.trailing_zeros())
}

fn check_config(layer: &LayerDescriptor, cfg: &AccelConfig) -> Result<()> {
    let v = layer.validate();
    if !v.is_empty() {
        return Err(Error::InvalidLayer(v));
    }
    let v = validate_config(cfg, Some(layer));
    if !v.is_empty() {
        return Err(Error::InvalidConfig(v));
    }
    Ok(())
}

/// Timing and analytic counts without touching data.
pub fn estimate_layer(layer: &LayerDescriptor, cfg: &AccelConfig, opts: &SimOptions) -> Result<CycleStats> {
    check_config(layer, cfg)?;
    let schedule = tile_layer(layer, cfg);
    layer_timing(layer, cfg, &schedule, opts)
}

fn layer_timing(layer: &LayerDescriptor, cfg: &AccelConfig, schedule: &TileSchedule, opts: &SimOptions) -> Result<CycleStats> {
    let kvol = layer.kernel_volume() as u64;
    let kernel = layer.kernel_extent();
    let stride = layer.axes().map(|a| a.stride);
    let per_m = schedule.tiles_per_m();
    let plan = transfer_plan(layer, cfg, schedule);
    let fill = cfg.t_c as u64;
    let drain = cfg.t_c as u64 + adder_tree_levels(cfg.t_n);

    let mut busiest: BTreeMap<[usize; 3], u64> = BTreeMap::new();
    let mut stats = CycleStats {
        tiles: schedule.len() as u64,
        mac_count: (layer.in_channels * layer.out_channels * layer.input_volume()) as u64 * kvol,
        ..CycleStats::default()
    };
    let mut slots = Vec::with_capacity(schedule.len());
    for (i, tile) in schedule.iter().enumerate() {
        let mut busy = kvol;
        stats.compute += kvol;
        if i % per_m == 0 {
            busy += fill;
            stats.fill += fill;
        }
        if i % per_m == per_m - 1 {
            busy += drain;
            stats.drain += drain;
        }
        if opts.overlap_add_cycles > 0 {
            let worst = *busiest
                .entry(tile.extent)
                .or_insert_with(|| max_messages_received(tile.extent, kernel, stride) as u64);
            busy += opts.overlap_add_cycles * worst;
            stats.overlap_add += opts.overlap_add_cycles * worst;
        }
        stats.overlap_messages += tile_messages(tile.extent, kernel, stride)
            * (tile.out_channels.len() * tile.in_channels.len()) as u64;
        slots.push((busy, transfer_cycles(plan.slot_bytes[i], cfg)?));
    }
    stats.load = transfer_cycles(plan.prologue_bytes, cfg)?;
    stats.write_back = transfer_cycles(plan.epilogue_bytes, cfg)?;
    let o = overlap_schedule(stats.load, slots, stats.write_back);
    stats.total = o.total;
    stats.stall = o.stalls;
    Ok(stats)
}

/// Scatter one array's activations into its partial block.
fn stamp<const CHECKED: bool>(
    block: &mut [i64],
    acts: &[i64],
    kern: &[i64],
    extent: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    bext: [usize; 3],
) -> Result<u64> {
    let mut macs = 0;
    let mut t = 0;
    for z in 0..extent[0] {
        for r in 0..extent[1] {
            for c in 0..extent[2] {
                let a = acts[t];
                t += 1;
                let mut kidx = 0;
                for kd in 0..kernel[0] {
                    for kh in 0..kernel[1] {
                        let base = ((z * stride[0] + kd) * bext[1] + r * stride[1] + kh) * bext[2] + c * stride[2];
                        for (o, &wt) in block[base..base + kernel[2]].iter_mut().zip(&kern[kidx..kidx + kernel[2]]) {
                            *o = mac::<CHECKED>(*o, a, wt)?;
                        }
                        kidx += kernel[2];
                        macs += kernel[2] as u64;
                    }
                }
            }
        }
    }
    Ok(macs)
}

struct Functional {
    acc: Vec<i64>,
    /// MACs actually executed.
    macs: u64,
    messages: u64,
    peak_fifo: usize,
    trace: Vec<TraceEvent>,
}

/// Partial block of one array: `(extent - 1) · S + K` per axis.
fn block_extent(tile: &Tile, kernel: [usize; 3], stride: [usize; 3]) -> [usize; 3] {
    core::array::from_fn(|a| (tile.extent[a] - 1) * stride[a] + kernel[a])
}

fn run_functional(
    layer: &LayerDescriptor,
    cfg: &AccelConfig,
    schedule: &TileSchedule,
    input: &Tensor,
    weights: &Tensor,
    opts: &SimOptions,
) -> Result<Functional> {
    let axes = layer.axes();
    let kernel = axes.map(|a| a.kernel);
    let stride = axes.map(|a| a.stride);
    let full = axes.map(|a| a.full());
    let full_vol: usize = full.iter().product();
    let size = layer.in_size;
    let kvol = layer.kernel_volume();
    let nc = layer.in_channels;
    let x = input.data();
    let w = weights.data();
    let capacity = fifo_capacity(layer);
    // in 2D the lanes sharing one adder tree sit T_z apart
    let trees = schedule.lanes / cfg.t_n;

    let mut out = Functional {
        acc: vec![0; layer.out_channels * full_vol],
        macs: 0,
        messages: 0,
        peak_fifo: 0,
        trace: Vec::new(),
    };
    let fast = sums_cannot_overflow(x, w, (nc * kvol) as u64);
    let mut partials = Vec::new();
    let mut acts = Vec::new();
    let mut tile_base = 0u64;
    for tile in schedule {
        let bext = block_extent(tile, kernel, stride);
        let bvol: usize = bext.iter().product();
        let mut tile_cycles = 0;
        for (g, m) in tile.out_channels.clone().enumerate() {
            partials.clear();
            partials.resize(schedule.lanes * bvol, 0);
            for (l, c) in tile.in_channels.clone().enumerate() {
                acts.clear();
                for z in 0..tile.extent[0] {
                    for r in 0..tile.extent[1] {
                        let row = ((c * size[0] + tile.origin[0] + z) * size[1] + tile.origin[1] + r) * size[2] + tile.origin[2];
                        acts.extend_from_slice(&x[row..row + tile.extent[2]]);
                    }
                }
                let kern = &w[(m * nc + c) * kvol..(m * nc + c + 1) * kvol];
                let block = &mut partials[l * bvol..(l + 1) * bvol];
                match opts.fidelity {
                    Fidelity::Tile if fast => out.macs += stamp::<false>(block, &acts, kern, tile.extent, kernel, stride, bext)?,
                    Fidelity::Tile => out.macs += stamp::<true>(block, &acts, kern, tile.extent, kernel, stride, bext)?,
                    Fidelity::Cycle => {
                        let (lane, plane) = lane_location(cfg, layer.dims, l);
                        let base = PeCoord {
                            group: g,
                            lane,
                            plane,
                            row: 0,
                            col: 0,
                        };
                        let mut mesh = MeshSim::new(tile.extent, kernel, stride, acts.clone(), kern.to_vec(), capacity, base);
                        if opts.trace {
                            mesh = mesh.with_trace();
                        }
                        let (run, trace) = mesh.run()?;
                        out.messages += run.messages;
                        out.macs += run.macs;
                        out.peak_fifo = out.peak_fifo.max(run.peak_fifo);
                        tile_cycles = tile_cycles.max(run.cycles);
                        out.trace.extend(trace.into_iter().map(|mut e| {
                            e.cycle += tile_base;
                            e.pe[0] += plane;
                            e
                        }));
                        let mut p = 0;
                        for z in 0..tile.extent[0] {
                            for r in 0..tile.extent[1] {
                                for cc in 0..tile.extent[2] {
                                    for (s, &v) in run.results[p].iter().enumerate() {
                                        let kd = s / (kernel[1] * kernel[2]);
                                        let kh = (s / kernel[2]) % kernel[1];
                                        let kw = s % kernel[2];
                                        let o = ((z * stride[0] + kd) * bext[1] + r * stride[1] + kh) * bext[2]
                                            + cc * stride[2]
                                            + kw;
                                        block[o] = sum::<true>(block[o], v)?;
                                    }
                                    p += 1;
                                }
                            }
                        }
                    }
                }
            }
            // cross-lane adder trees, one level at a time, then output-buffer accumulation
            let mut span = 1;
            while span < cfg.t_n {
                for n in (0..cfg.t_n).step_by(2 * span) {
                    for tree in 0..trees {
                        let (lo, hi) = partials.split_at_mut((n + span) * trees * bvol + tree * bvol);
                        let dst = &mut lo[(n * trees + tree) * bvol..][..bvol];
                        for (d, &v) in dst.iter_mut().zip(&hi[..bvol]) {
                            *d = if fast { sum::<false>(*d, v)? } else { sum::<true>(*d, v)? };
                        }
                    }
                }
                span *= 2;
            }
            let dest = &mut out.acc[m * full_vol..(m + 1) * full_vol];
            for tree in 0..trees {
                let root = &partials[tree * bvol..(tree + 1) * bvol];
                let mut o = 0;
                for bd in 0..bext[0] {
                    for bh in 0..bext[1] {
                        let at = ((tile.origin[0] * stride[0] + bd) * full[1] + tile.origin[1] * stride[1] + bh) * full[2]
                            + tile.origin[2] * stride[2];
                        for (d, &v) in dest[at..at + bext[2]].iter_mut().zip(&root[o..o + bext[2]]) {
                            *d = if fast { sum::<false>(*d, v)? } else { sum::<true>(*d, v)? };
                        }
                        o += bext[2];
                    }
                }
            }
        }
        tile_base += tile_cycles;
    }
    Ok(out)
}

/// Run `layer` on the accelerator model. The output is cropped and written
/// back through `arith`; it matches the reference oracles exactly.
pub fn simulate_layer(
    layer: &LayerDescriptor,
    cfg: &AccelConfig,
    input: &Tensor,
    weights: &Tensor,
    arith: Arith,
    opts: &SimOptions,
) -> Result<SimOutput> {
    check_config(layer, cfg)?;
    check_inputs(input, weights, layer, arith)?;
    let schedule = tile_layer(layer, cfg);
    let mut stats = layer_timing(layer, cfg, &schedule, opts)?;
    let f = run_functional(layer, cfg, &schedule, input, weights, opts)?;
    stats.mac_count = f.macs;
    if opts.fidelity == Fidelity::Cycle {
        stats.overlap_messages = f.messages;
    }

    let axes = layer.axes();
    let full = axes.map(|a| a.full());
    let crop = axes.map(|a| a.crop);
    let ext = axes.map(|a| a.cropped());
    let mut data = Vec::with_capacity(layer.out_channels * ext.iter().product::<usize>());
    for m in 0..layer.out_channels {
        for d in 0..ext[0] {
            for h in 0..ext[1] {
                let row = ((m * full[0] + d + crop[0]) * full[1] + h + crop[1]) * full[2] + crop[2];
                for &v in &f.acc[row..row + ext[2]] {
                    let (v, sat) = arith.finish(v)?;
                    stats.saturations += u64::from(sat);
                    data.push(v);
                }
            }
        }
    }
    Ok(SimOutput {
        output: Tensor::new(layer.output_tensor_shape(), data)?,
        stats,
        trace: f.trace,
        peak_fifo_occupancy: f.peak_fifo,
        fifo_capacity: fifo_capacity(layer),
    })
}

/// Share of PE-cycles spent on useful MACs during compute cycles.
pub fn pe_occupancy(stats: &CycleStats, cfg: &AccelConfig) -> f64 {
    if stats.compute == 0 {
        return 0.0;
    }
    stats.mac_count as f64 / (pe_count(cfg) as f64 * stats.compute as f64)
}
