//! Tiling of a layer onto the PE mesh and overlap routing inside a tile.
//!
//! Loop order is output-channel tile, then spatial tile (depth, row, column
//! major), then input-channel tile innermost, so partial sums for one output
//! block finish accumulating before it is written back.
//!
//! Inside a tile, each output position covered by several activations is
//! owned by the lowest-indexed PE whose block covers it. Products computed
//! elsewhere travel toward the owner one hop per message, vertically first,
//! then horizontally, then across planes. Overlap that crosses a tile edge
//! is summed in the output buffer instead.

use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::config::AccelConfig;
use crate::layer::{Dims, LayerDescriptor};

/// Direction an overlap message travels; always toward the lower index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Direction {
    /// Toward the row above (FIFO-V).
    V,
    /// Toward the column to the left (FIFO-H).
    H,
    /// Toward the previous depth plane (FIFO-D).
    D,
}

impl Direction {
    pub const ROUTING_ORDER: [Direction; 3] = [Direction::V, Direction::H, Direction::D];

    /// Index into `[depth, row, col]`.
    pub fn axis(self) -> usize {
        match self {
            Direction::D => 0,
            Direction::V => 1,
            Direction::H => 2,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::V => "V",
            Direction::H => "H",
            Direction::D => "D",
        })
    }
}

/// Physical PE address in the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PeCoord {
    /// Output-channel group, `0..T_m`.
    pub group: usize,
    /// Input-channel lane, `0..T_n`.
    pub lane: usize,
    pub plane: usize,
    pub row: usize,
    pub col: usize,
}

impl fmt::Display for PeCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "PE[m{} n{}]({},{},{})",
            self.group, self.lane, self.plane, self.row, self.col
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tile {
    pub ordinal: usize,
    pub m_tile: usize,
    pub n_tile: usize,
    /// Tile index along `[depth, row, col]`.
    pub spatial_tile: [usize; 3],
    pub out_channels: Range<usize>,
    pub in_channels: Range<usize>,
    /// First input activation covered, `[d, h, w]`.
    pub origin: [usize; 3],
    /// Activations covered per axis; smaller than the mesh on edge tiles.
    pub extent: [usize; 3],
    /// Spatial extent is smaller than the mesh on some axis.
    pub is_edge: bool,
}

impl Tile {
    pub fn activations(&self) -> usize {
        self.extent.iter().product()
    }

    /// Last input-channel tile of its output block.
    pub fn closes_block(&self, schedule: &TileSchedule) -> bool {
        self.n_tile + 1 == schedule.n_tiles
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TileSchedule {
    pub dims: Dims,
    pub m_tiles: usize,
    pub n_tiles: usize,
    pub spatial_grid: [usize; 3],
    /// Mesh extent per spatial axis for this layer's mode.
    pub tile_shape: [usize; 3],
    /// Input channels handled side by side.
    pub lanes: usize,
    pub tiles: Vec<Tile>,
}

impl TileSchedule {
    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Tile> {
        self.tiles.iter()
    }

    pub fn spatial_tiles(&self) -> usize {
        self.spatial_grid.iter().product()
    }

    /// Tiles in one output-channel sweep.
    pub fn tiles_per_m(&self) -> usize {
        self.spatial_tiles() * self.n_tiles
    }
}

impl<'a> IntoIterator for &'a TileSchedule {
    type Item = &'a Tile;
    type IntoIter = core::slice::Iter<'a, Tile>;

    fn into_iter(self) -> Self::IntoIter {
        self.tiles.iter()
    }
}

fn chunk(index: usize, size: usize, total: usize) -> Range<usize> {
    let start = index * size;
    start..total.min(start + size)
}

pub fn tile_layer(layer: &LayerDescriptor, cfg: &AccelConfig) -> TileSchedule {
    let tile_shape = cfg.spatial_tile(layer.dims);
    let lanes = cfg.channel_lanes(layer.dims);
    let m_tiles = layer.out_channels.div_ceil(cfg.t_m);
    let n_tiles = layer.in_channels.div_ceil(lanes);
    let grid: [usize; 3] = core::array::from_fn(|a| layer.in_size[a].div_ceil(tile_shape[a]));

    let mut tiles = Vec::with_capacity(m_tiles * n_tiles * grid.iter().product::<usize>());
    for m in 0..m_tiles {
        for d in 0..grid[0] {
            for h in 0..grid[1] {
                for w in 0..grid[2] {
                    let idx = [d, h, w];
                    let ranges: [Range<usize>; 3] =
                        core::array::from_fn(|a| chunk(idx[a], tile_shape[a], layer.in_size[a]));
                    let origin = ranges.clone().map(|r| r.start);
                    let extent = ranges.map(|r| r.len());
                    let is_edge = (0..3).any(|a| extent[a] < tile_shape[a]);
                    for n in 0..n_tiles {
                        tiles.push(Tile {
                            ordinal: tiles.len(),
                            m_tile: m,
                            n_tile: n,
                            spatial_tile: idx,
                            out_channels: chunk(m, cfg.t_m, layer.out_channels),
                            in_channels: chunk(n, lanes, layer.in_channels),
                            origin,
                            extent,
                            is_edge,
                        });
                    }
                }
            }
        }
    }
    TileSchedule {
        dims: layer.dims,
        m_tiles,
        n_tiles,
        spatial_grid: grid,
        tile_shape,
        lanes,
        tiles,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PeAssignment {
    pub pe: PeCoord,
    pub in_channel: usize,
    pub out_channel: usize,
    /// Input activation coordinate `[d, h, w]`.
    pub position: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockMapping {
    pub assignments: Vec<PeAssignment>,
    pub active: usize,
    pub idle: usize,
}

/// Where lane `l` of a tile lives in the mesh: `(lane, plane)` for 2D,
/// where every array takes its own channel, or `(l, 0)` for 3D.
pub fn lane_location(cfg: &AccelConfig, dims: Dims, l: usize) -> (usize, usize) {
    match dims {
        Dims::Two => (l / cfg.t_z, l % cfg.t_z),
        Dims::Three => (l, 0),
    }
}

/// Activation to PE assignment for one tile across the whole engine.
pub fn map_block_to_mesh(tile: &Tile, cfg: &AccelConfig, dims: Dims) -> BlockMapping {
    let mut assignments = Vec::new();
    for (g, out_channel) in tile.out_channels.clone().enumerate() {
        for (l, in_channel) in tile.in_channels.clone().enumerate() {
            let (lane, plane0) = lane_location(cfg, dims, l);
            for z in 0..tile.extent[0] {
                for r in 0..tile.extent[1] {
                    for c in 0..tile.extent[2] {
                        assignments.push(PeAssignment {
                            pe: PeCoord {
                                group: g,
                                lane,
                                plane: plane0 + z,
                                row: r,
                                col: c,
                            },
                            in_channel,
                            out_channel,
                            position: [tile.origin[0] + z, tile.origin[1] + r, tile.origin[2] + c],
                        });
                    }
                }
            }
        }
    }
    let active = assignments.len();
    BlockMapping {
        assignments,
        active,
        idle: crate::config::pe_count(cfg) - active,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DirectionOverlap {
    pub direction: Direction,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OverlapDescriptor {
    /// `K - S`
    pub thickness: usize,
    /// Elements of one face slab of a block, `(K - S) · K^(dims - 1)`.
    pub slab_volume: usize,
    pub directions: Vec<DirectionOverlap>,
}

pub fn overlap_regions(kernel: usize, stride: usize, dims: Dims) -> OverlapDescriptor {
    let thickness = kernel - stride;
    let directions = Direction::ROUTING_ORDER
        .iter()
        .filter(|&&d| dims == Dims::Three || d != Direction::D)
        .map(|&direction| DirectionOverlap {
            direction,
            active: thickness > 0,
        })
        .collect();
    OverlapDescriptor {
        thickness,
        slab_volume: thickness * kernel.pow(dims.count() - 1),
        directions,
    }
}

/// Largest overlap slab in flight per FIFO, `(K - S) · K^(dims - 1)`.
pub fn fifo_depth_requirement(kernel: usize, stride: usize, dims: Dims) -> usize {
    kernel.saturating_sub(stride) * kernel.pow(dims.count() - 1)
}

/// Lowest local index along one axis whose block covers the product of
/// local index `j` at kernel offset `k`.
#[inline]
pub fn owner(j: usize, k: usize, kernel: usize, stride: usize) -> usize {
    let reach = j * stride + k + 1;
    if reach <= kernel {
        0
    } else {
        (reach - kernel).div_ceil(stride)
    }
}

/// Offset of that product within the owner's block.
#[inline]
pub fn owner_offset(j: usize, k: usize, stride: usize, owner: usize) -> usize {
    (j - owner) * stride + k
}

/// Routing table for one axis of a tile of extent `extent`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxisRouting {
    pub kernel: usize,
    /// `hops[j * kernel + k]`
    pub hops: Vec<usize>,
}

impl AxisRouting {
    pub fn new(extent: usize, kernel: usize, stride: usize) -> Self {
        let mut hops = Vec::with_capacity(extent * kernel);
        for j in 0..extent {
            for k in 0..kernel {
                hops.push(j - owner(j, k, kernel, stride));
            }
        }
        Self { kernel, hops }
    }

    #[inline]
    pub fn hops(&self, j: usize, k: usize) -> usize {
        self.hops[j * self.kernel + k]
    }

    pub fn total(&self) -> usize {
        self.hops.iter().sum()
    }
}

/// Inter-PE messages one output channel of one input channel of a tile
/// generates: the sum of hop counts over every product.
pub fn tile_messages(extent: [usize; 3], kernel: [usize; 3], stride: [usize; 3]) -> u64 {
    let tables: [AxisRouting; 3] = core::array::from_fn(|a| AxisRouting::new(extent[a], kernel[a], stride[a]));
    let mut total = 0u64;
    for a in 0..3 {
        let others: usize = (0..3).filter(|&b| b != a).map(|b| extent[b] * kernel[b]).product();
        total += (tables[a].total() * others) as u64;
    }
    total
}

/// Messages received by the busiest PE of one array for one kernel pass.
/// A message counts at every PE it enters, including pass-through hops.
pub fn max_messages_received(extent: [usize; 3], kernel: [usize; 3], stride: [usize; 3]) -> usize {
    let vol = extent[0] * extent[1] * extent[2];
    let mut received = alloc::vec![0usize; vol];
    let idx = |p: [usize; 3]| (p[0] * extent[1] + p[1]) * extent[2] + p[2];
    for z in 0..extent[0] {
        for r in 0..extent[1] {
            for c in 0..extent[2] {
                for kd in 0..kernel[0] {
                    for kh in 0..kernel[1] {
                        for kw in 0..kernel[2] {
                            let mut pos = [z, r, c];
                            let k = [kd, kh, kw];
                            for dir in Direction::ROUTING_ORDER {
                                let a = dir.axis();
                                let own = owner(pos[a], k[a], kernel[a], stride[a]);
                                while pos[a] > own {
                                    pos[a] -= 1;
                                    received[idx(pos)] += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    received.into_iter().max().unwrap_or(0)
}
