//! Reference transposed convolution.
//!
//! Two formulations that share nothing but the layer geometry and the final
//! write-back rounding:
//!
//! * [`deconv_insert_conv`] materializes the zero-inserted input and runs a
//!   dense, padded, flipped-kernel convolution over it.
//! * [`deconv_scatter_add`] stamps `activation × kernel` blocks into the
//!   output at stride offsets and sums where blocks overlap.
//!
//! They agree element-exactly on every valid layer, which is what the
//! simulator is checked against.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fixed::{add, mac, mul, sums_cannot_overflow, Arith};
use crate::layer::{Dims, LayerDescriptor};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum OpBasis {
    /// Operations actually needed: every real activation times every kernel tap.
    Valid,
    /// Operations of the equivalent dense convolution over the zero-inserted,
    /// padded map that yields the full (uncropped) output.
    Nominal,
}

/// Shape of an output tensor together with how many results saturated on write-back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deconvolved {
    pub output: Tensor,
    pub saturated: usize,
    /// Multiply-accumulate steps performed (including ones on inserted zeros
    /// or padding for the insert+conv route).
    pub macs: u64,
}

pub(crate) fn check_inputs(
    input: &Tensor,
    weights: &Tensor,
    layer: &LayerDescriptor,
    arith: Arith,
) -> Result<()> {
    let violations = layer.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidLayer(violations));
    }
    input.expect_shape("input", &layer.input_tensor_shape())?;
    weights.expect_shape("weights", &layer.weight_tensor_shape())?;
    arith.check_operands(input.data())?;
    arith.check_operands(weights.data())?;
    arith.check_accumulation((layer.in_channels * layer.kernel_volume()) as u64)
}

/// Place `S - 1` zeros between neighbouring activations on every spatial
/// axis (and whole zero planes between depth planes for 3D).
pub fn zero_insert(input: &Tensor, layer: &LayerDescriptor) -> Result<Tensor> {
    input.expect_shape("input", &layer.input_tensor_shape())?;
    let axes = layer.axes();
    let [id, ih, iw] = layer.in_size;
    let [zd, zh, zw] = axes.map(|a| a.inserted());
    let [sd, sh, sw] = axes.map(|a| a.stride);
    let mut shape = vec![layer.in_channels];
    if layer.dims == Dims::Three {
        shape.push(zd);
    }
    shape.extend([zh, zw]);
    let mut out = Tensor::zeros(shape);
    let src = input.data();
    let dst = out.data_mut();
    for c in 0..layer.in_channels {
        for d in 0..id {
            for h in 0..ih {
                for w in 0..iw {
                    let from = ((c * id + d) * ih + h) * iw + w;
                    let to = ((c * zd + d * sd) * zh + h * sh) * zw + w * sw;
                    dst[to] = src[from];
                }
            }
        }
    }
    Ok(out)
}

/// Oracle A: zero insertion, border padding of `K - 1 - p`, then a valid
/// convolution with the kernel flipped on every spatial axis, summed over
/// input channels.
pub fn deconv_insert_conv(
    input: &Tensor,
    weights: &Tensor,
    layer: &LayerDescriptor,
    arith: Arith,
) -> Result<Tensor> {
    deconv_insert_conv_counted(input, weights, layer, arith).map(|d| d.output)
}

pub fn deconv_insert_conv_counted(
    input: &Tensor,
    weights: &Tensor,
    layer: &LayerDescriptor,
    arith: Arith,
) -> Result<Deconvolved> {
    check_inputs(input, weights, layer, arith)?;
    let inserted = zero_insert(input, layer)?;
    let axes = layer.axes();
    let z = axes.map(|a| a.inserted() as isize);
    let k = axes.map(|a| a.kernel);
    let pad = axes.map(|a| a.kernel as isize - 1 - a.crop as isize);
    let out_ext = axes.map(|a| a.cropped());
    let (nc, nm) = (layer.in_channels, layer.out_channels);
    let kvol = k[0] * k[1] * k[2];
    let zmap = inserted.data();
    let wts = weights.data();

    let mut data = Vec::with_capacity(nm * out_ext.iter().product::<usize>());
    let mut saturated = 0;
    let mut macs = 0u64;
    for m in 0..nm {
        for od in 0..out_ext[0] {
            for oh in 0..out_ext[1] {
                for ow in 0..out_ext[2] {
                    let mut acc = 0i64;
                    for c in 0..nc {
                        for kd in 0..k[0] {
                            let zd = od as isize + kd as isize - pad[0];
                            for kh in 0..k[1] {
                                let zh = oh as isize + kh as isize - pad[1];
                                for kw in 0..k[2] {
                                    let zw = ow as isize + kw as isize - pad[2];
                                    macs += 1;
                                    let inside = (0..z[0]).contains(&zd)
                                        && (0..z[1]).contains(&zh)
                                        && (0..z[2]).contains(&zw);
                                    if !inside {
                                        continue;
                                    }
                                    let zi = ((c as isize * z[0] + zd) * z[1] + zh) * z[2] + zw;
                                    let flipped = ((k[0] - 1 - kd) * k[1] + (k[1] - 1 - kh)) * k[2]
                                        + (k[2] - 1 - kw);
                                    let wi = (m * nc + c) * kvol + flipped;
                                    acc = add(acc, mul(zmap[zi as usize], wts[wi])?)?;
                                }
                            }
                        }
                    }
                    let (v, sat) = arith.finish(acc)?;
                    saturated += usize::from(sat);
                    data.push(v);
                }
            }
        }
    }
    Ok(Deconvolved {
        output: Tensor::new(layer.output_tensor_shape(), data)?,
        saturated,
        macs,
    })
}

/// Oracle B: every activation scales the whole kernel into an output block
/// anchored at `i * S`; overlapping blocks add. The border crop is applied
/// after accumulation.
pub fn deconv_scatter_add(
    input: &Tensor,
    weights: &Tensor,
    layer: &LayerDescriptor,
    arith: Arith,
) -> Result<Tensor> {
    deconv_scatter_add_counted(input, weights, layer, arith).map(|d| d.output)
}

pub fn deconv_scatter_add_counted(
    input: &Tensor,
    weights: &Tensor,
    layer: &LayerDescriptor,
    arith: Arith,
) -> Result<Deconvolved> {
    check_inputs(input, weights, layer, arith)?;
    let axes = layer.axes();
    let full = axes.map(|a| a.full());
    let (nc, nm) = (layer.in_channels, layer.out_channels);
    let full_vol = full[0] * full[1] * full[2];
    let x = input.data();
    let wts = weights.data();

    let mut acc = vec![0i64; nm * full_vol];
    let macs = if sums_cannot_overflow(x, wts, (nc * layer.kernel_volume()) as u64) {
        scatter::<false>(layer, x, wts, &mut acc)?
    } else {
        scatter::<true>(layer, x, wts, &mut acc)?
    };

    let crop = axes.map(|a| a.crop);
    let out_ext = axes.map(|a| a.cropped());
    let mut data = Vec::with_capacity(nm * out_ext.iter().product::<usize>());
    let mut saturated = 0;
    for m in 0..nm {
        for d in 0..out_ext[0] {
            for h in 0..out_ext[1] {
                for w in 0..out_ext[2] {
                    let o = ((m * full[0] + d + crop[0]) * full[1] + h + crop[1]) * full[2] + w + crop[2];
                    let (v, sat) = arith.finish(acc[o])?;
                    saturated += usize::from(sat);
                    data.push(v);
                }
            }
        }
    }
    Ok(Deconvolved {
        output: Tensor::new(layer.output_tensor_shape(), data)?,
        saturated,
        macs,
    })
}

fn scatter<const CHECKED: bool>(layer: &LayerDescriptor, x: &[i64], wts: &[i64], acc: &mut [i64]) -> Result<u64> {
    let axes = layer.axes();
    let full = axes.map(|a| a.full());
    let k = axes.map(|a| a.kernel);
    let s = axes.map(|a| a.stride);
    let size = layer.in_size;
    let (nc, nm) = (layer.in_channels, layer.out_channels);
    let kvol = k[0] * k[1] * k[2];
    let full_vol = full[0] * full[1] * full[2];
    let mut macs = 0u64;
    for m in 0..nm {
        let block = &mut acc[m * full_vol..(m + 1) * full_vol];
        for c in 0..nc {
            let kernel = &wts[(m * nc + c) * kvol..(m * nc + c + 1) * kvol];
            for d in 0..size[0] {
                for h in 0..size[1] {
                    for w in 0..size[2] {
                        let a = x[((c * size[0] + d) * size[1] + h) * size[2] + w];
                        let mut t = 0;
                        for kd in 0..k[0] {
                            for kh in 0..k[1] {
                                let row = ((d * s[0] + kd) * full[1] + h * s[1] + kh) * full[2] + w * s[2];
                                for (o, &wt) in block[row..row + k[2]].iter_mut().zip(&kernel[t..t + k[2]]) {
                                    *o = mac::<CHECKED>(*o, a, wt)?;
                                }
                                t += k[2];
                                macs += k[2] as u64;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(macs)
}

/// Operation count (one multiply plus one add per MAC).
pub fn count_ops(layer: &LayerDescriptor, basis: OpBasis) -> u64 {
    let per_position = 2 * (layer.in_channels * layer.out_channels * layer.kernel_volume()) as u64;
    let positions: u64 = match basis {
        OpBasis::Valid => layer.input_volume() as u64,
        OpBasis::Nominal => layer.output_shape().full.iter().map(|&e| e as u64).product(),
    };
    per_position * positions
}

/// Fraction of zeros in the zero-inserted (unpadded, uncropped) input map.
pub fn sparsity(layer: &LayerDescriptor) -> f64 {
    let axes = layer.axes();
    let real: f64 = axes.iter().map(|a| a.input as f64).product();
    let inserted: f64 = axes.iter().map(|a| a.inserted() as f64).product();
    1.0 - real / inserted
}
