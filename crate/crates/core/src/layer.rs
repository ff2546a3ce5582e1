//! Deconvolution layer geometry.
//!
//! Spatial quantities are always carried as `[depth, height, width]`. A 2D
//! layer has depth 1 and behaves on that axis like a 1-wide kernel with unit
//! stride and no crop, so every formula below works unchanged for both
//! dimensionalities.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Dims {
    Two,
    Three,
}

impl Dims {
    pub fn count(self) -> u32 {
        match self {
            Dims::Two => 2,
            Dims::Three => 3,
        }
    }

    pub fn from_count(n: u64) -> Option<Self> {
        match n {
            2 => Some(Dims::Two),
            3 => Some(Dims::Three),
            _ => None,
        }
    }
}

/// Geometry of one spatial axis of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Axis {
    pub input: usize,
    pub kernel: usize,
    pub stride: usize,
    pub crop: usize,
}

impl Axis {
    /// `(I - 1) * S + K`
    pub fn full(&self) -> usize {
        (self.input.saturating_sub(1)) * self.stride + self.kernel
    }

    pub fn cropped(&self) -> usize {
        self.full().saturating_sub(2 * self.crop)
    }

    /// Extent after zero insertion: `(I - 1) * S + 1`.
    pub fn inserted(&self) -> usize {
        (self.input.saturating_sub(1)) * self.stride + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerDescriptor {
    pub name: String,
    pub dims: Dims,
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[depth, height, width]`; depth is 1 for 2D layers.
    pub in_size: [usize; 3],
    pub kernel: usize,
    pub stride: usize,
    /// Trimmed from each border of every spatial axis.
    pub crop: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LayerViolation {
    #[error("{0}: input channels must be positive channels")]
    ZeroInChannels(String),
    #[error("{0}: output channels must be positive channels")]
    ZeroOutChannels(String),
    #[error("{layer}: spatial extent {axis} must be positive")]
    ZeroExtent { layer: String, axis: &'static str },
    #[error("{0}: a 2D layer has no depth extent")]
    DepthIn2d(String),
    #[error("{0}: kernel must be positive")]
    ZeroKernel(String),
    #[error("{0}: stride must be positive")]
    ZeroStride(String),
    #[error("{layer}: stride {stride} exceeds kernel {kernel} (need K ≥ S)")]
    StrideExceedsKernel {
        layer: String,
        kernel: usize,
        stride: usize,
    },
    #[error("{layer}: crop {crop} leaves no output on axis {axis} (full extent {full})")]
    EmptyOutput {
        layer: String,
        axis: &'static str,
        full: usize,
        crop: usize,
    },
}

pub const AXIS_NAMES: [&str; 3] = ["depth", "height", "width"];

/// Full and cropped output extents, `[depth, height, width]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OutputShape {
    pub dims: Dims,
    pub full: [usize; 3],
    pub cropped: [usize; 3],
}

impl OutputShape {
    /// Spatial extents with the depth axis dropped for 2D.
    pub fn full_spatial(&self) -> &[usize] {
        spatial(self.dims, &self.full)
    }

    pub fn cropped_spatial(&self) -> &[usize] {
        spatial(self.dims, &self.cropped)
    }
}

pub(crate) fn spatial(dims: Dims, v: &[usize; 3]) -> &[usize] {
    match dims {
        Dims::Two => &v[1..],
        Dims::Three => &v[..],
    }
}

impl LayerDescriptor {
    pub fn new_2d(
        name: impl Into<String>,
        in_channels: usize,
        out_channels: usize,
        [h, w]: [usize; 2],
        kernel: usize,
        stride: usize,
    ) -> Self {
        Self {
            name: name.into(),
            dims: Dims::Two,
            in_channels,
            out_channels,
            in_size: [1, h, w],
            kernel,
            stride,
            crop: 0,
        }
    }

    pub fn new_3d(
        name: impl Into<String>,
        in_channels: usize,
        out_channels: usize,
        in_size: [usize; 3],
        kernel: usize,
        stride: usize,
    ) -> Self {
        Self {
            name: name.into(),
            dims: Dims::Three,
            in_channels,
            out_channels,
            in_size,
            kernel,
            stride,
            crop: 0,
        }
    }

    pub fn with_crop(mut self, crop: usize) -> Self {
        self.crop = crop;
        self
    }

    pub fn axes(&self) -> [Axis; 3] {
        let spatial = |input| Axis {
            input,
            kernel: self.kernel,
            stride: self.stride,
            crop: self.crop,
        };
        let depth = match self.dims {
            Dims::Two => Axis {
                input: 1,
                kernel: 1,
                stride: 1,
                crop: 0,
            },
            Dims::Three => spatial(self.in_size[0]),
        };
        [depth, spatial(self.in_size[1]), spatial(self.in_size[2])]
    }

    /// Kernel extent per axis, `[1, K, K]` for 2D.
    pub fn kernel_extent(&self) -> [usize; 3] {
        self.axes().map(|a| a.kernel)
    }

    /// `K^dims`
    pub fn kernel_volume(&self) -> usize {
        self.kernel.pow(self.dims.count())
    }

    pub fn input_volume(&self) -> usize {
        self.in_size.iter().product()
    }

    pub fn output_shape(&self) -> OutputShape {
        let axes = self.axes();
        OutputShape {
            dims: self.dims,
            full: axes.map(|a| a.full()),
            cropped: axes.map(|a| a.cropped()),
        }
    }

    /// `(Nc, [D], H, W)`
    pub fn input_tensor_shape(&self) -> Vec<usize> {
        let mut s = vec![self.in_channels];
        s.extend_from_slice(spatial(self.dims, &self.in_size));
        s
    }

    /// `(Nm, Nc, [K], K, K)`
    pub fn weight_tensor_shape(&self) -> Vec<usize> {
        let mut s = vec![self.out_channels, self.in_channels];
        s.extend(core::iter::repeat_n(self.kernel, self.dims.count() as usize));
        s
    }

    /// `(Nm, [D'], H', W')` after cropping.
    pub fn output_tensor_shape(&self) -> Vec<usize> {
        let mut s = vec![self.out_channels];
        s.extend_from_slice(self.output_shape().cropped_spatial());
        s
    }

    pub fn validate(&self) -> Vec<LayerViolation> {
        validate_layer(self)
    }

    pub fn is_valid(&self) -> bool {
        validate_layer(self).is_empty()
    }
}

/// Every invariant violation of a layer, not just the first.
pub fn validate_layer(layer: &LayerDescriptor) -> Vec<LayerViolation> {
    let name = || layer.name.clone();
    let mut out = Vec::new();
    if layer.in_channels == 0 {
        out.push(LayerViolation::ZeroInChannels(name()));
    }
    if layer.out_channels == 0 {
        out.push(LayerViolation::ZeroOutChannels(name()));
    }
    match layer.dims {
        Dims::Two if layer.in_size[0] != 1 => out.push(LayerViolation::DepthIn2d(name())),
        _ => {}
    }
    let first_axis = if layer.dims == Dims::Two { 1 } else { 0 };
    for axis in first_axis..3 {
        if layer.in_size[axis] == 0 {
            out.push(LayerViolation::ZeroExtent {
                layer: name(),
                axis: AXIS_NAMES[axis],
            });
        }
    }
    if layer.kernel == 0 {
        out.push(LayerViolation::ZeroKernel(name()));
    }
    if layer.stride == 0 {
        out.push(LayerViolation::ZeroStride(name()));
    }
    if layer.stride > layer.kernel {
        out.push(LayerViolation::StrideExceedsKernel {
            layer: name(),
            kernel: layer.kernel,
            stride: layer.stride,
        });
    }
    if layer.kernel > 0 {
        for axis in first_axis..3 {
            let geom = layer.axes()[axis];
            if layer.in_size[axis] > 0 && geom.full() < 2 * geom.crop + 1 {
                out.push(LayerViolation::EmptyOutput {
                    layer: name(),
                    axis: AXIS_NAMES[axis],
                    full: geom.full(),
                    crop: geom.crop,
                });
            }
        }
    }
    out
}
