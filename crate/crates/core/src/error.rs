use alloc::vec::Vec;

use crate::config::ConfigViolation;
use crate::layer::LayerViolation;
use crate::mesh::{Direction, PeCoord};
use crate::network::ChainViolation;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{what} shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        what: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("tensor has {found} elements but its shape {shape:?} needs {expected}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        found: usize,
    },

    #[error("invalid layer: {}", join(.0))]
    InvalidLayer(Vec<LayerViolation>),

    #[error("invalid accelerator config: {}", join(.0))]
    InvalidConfig(Vec<ConfigViolation>),

    #[error("invalid network: {}", join(.0))]
    InvalidNetwork(Vec<ChainViolation>),

    #[error("accumulator overflow ({bits}-bit accumulator)")]
    AccumulatorOverflow { bits: u32 },

    #[error("operand {value} is not representable in a {bits}-bit word")]
    OperandOutOfRange { value: i64, bits: u32 },

    #[error("invalid fixed-point format: word {word_bits} bits, fraction {frac_bits} bits, accumulator {accumulator_bits} bits")]
    InvalidFormat {
        word_bits: u32,
        frac_bits: u32,
        accumulator_bits: u32,
    },

    #[error("overlap FIFO-{direction} of {pe} overflowed its depth of {depth}")]
    FifoOverflow {
        pe: PeCoord,
        direction: Direction,
        depth: usize,
    },

    #[error("T_n = {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("off-chip bandwidth must be positive")]
    ZeroBandwidth,

    #[error("total cycle count is zero")]
    ZeroCycles,
}

fn join<T: core::fmt::Display>(items: &[T]) -> alloc::string::String {
    use core::fmt::Write;
    let mut out = alloc::string::String::new();
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        let _ = write!(out, "{item}");
    }
    out
}
