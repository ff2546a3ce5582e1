use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::layer::{Dims, LayerDescriptor, LayerViolation};

/// A linear chain of deconvolution layers.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetworkDescriptor {
    pub name: String,
    pub dims: Dims,
    pub layers: Vec<LayerDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChainViolation {
    #[error("network has no layers")]
    Empty,
    #[error("layer {layer} is {found:?} but the network is {expected:?}")]
    DimsMismatch {
        layer: String,
        expected: Dims,
        found: Dims,
    },
    #[error("{0}")]
    Layer(LayerViolation),
    #[error("layer {from} produces {produced} channels but layer {to} expects {expected}")]
    Channels {
        from: String,
        to: String,
        produced: usize,
        expected: usize,
    },
    #[error("layer {from} produces spatial size {produced:?} but layer {to} expects {expected:?}")]
    Size {
        from: String,
        to: String,
        produced: [usize; 3],
        expected: [usize; 3],
    },
}

impl NetworkDescriptor {
    pub fn validate(&self) -> Vec<ChainViolation> {
        let mut out = Vec::new();
        if self.layers.is_empty() {
            out.push(ChainViolation::Empty);
        }
        for layer in &self.layers {
            if layer.dims != self.dims {
                out.push(ChainViolation::DimsMismatch {
                    layer: layer.name.clone(),
                    expected: self.dims,
                    found: layer.dims,
                });
            }
            out.extend(layer.validate().into_iter().map(ChainViolation::Layer));
        }
        for pair in self.layers.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.out_channels != b.in_channels {
                out.push(ChainViolation::Channels {
                    from: a.name.clone(),
                    to: b.name.clone(),
                    produced: a.out_channels,
                    expected: b.in_channels,
                });
            }
            let produced = a.output_shape().cropped;
            if a.is_valid() && produced != b.in_size {
                out.push(ChainViolation::Size {
                    from: a.name.clone(),
                    to: b.name.clone(),
                    produced,
                    expected: b.in_size,
                });
            }
        }
        out
    }

    pub fn validated(self) -> Result<Self> {
        let v = self.validate();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidNetwork(v))
        }
    }
}
