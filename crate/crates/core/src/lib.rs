//! Functional and timing model of a uniform accelerator for 2D and 3D
//! deconvolution (transposed convolution) layers.
//!
//! The crate is `no_std` and only needs `alloc`. It contains:
//!
//! * [`oracle`]: two independent reference implementations of transposed
//!   convolution (zero insertion + convolution, and per-activation
//!   scatter-add), op counting and sparsity analysis.
//! * [`network`]: layer chains and their validation.
//! * [`config`]: accelerator parameters, resource estimates and buffer checks.
//! * [`schedule`]: tiling of a layer onto the PE mesh with input-oriented
//!   mapping and overlap routing.
//! * [`mesh`]: a per-cycle model of one tile on the PE mesh.
//! * [`sim`]: layer-level simulation (functional + timing).
//! * [`memory`]: off-chip traffic and double-buffered transfer overlap.
//! * [`metrics`]: utilization, throughput and per-layer reports.
//!
//! All tensors use the `(channel, depth, height, width)` order; 2D tensors
//! simply omit the depth extent.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod config;
pub mod error;
pub mod fixed;
pub mod layer;
pub mod memory;
pub mod mesh;
pub mod metrics;
pub mod network;
pub mod oracle;
pub mod schedule;
pub mod sim;
pub mod tensor;

pub use config::{AccelConfig, BufferSizes};
pub use error::{Error, Result};
pub use fixed::{Arith, FxFormat};
pub use layer::{Dims, LayerDescriptor, OutputShape};
pub use network::NetworkDescriptor;
pub use sim::{CycleStats, Fidelity, SimOptions, SimOutput};
pub use tensor::Tensor;
