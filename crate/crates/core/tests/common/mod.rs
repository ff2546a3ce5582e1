#![allow(dead_code)]

use deconv_core::{AccelConfig, Dims, LayerDescriptor, Tensor};
use proptest::prelude::*;

/// Random valid layer from the small grid: I per axis 1..=8, K 2..=5,
/// S 1..=K, channels 1..=4, crop within the output.
pub fn layer() -> impl Strategy<Value = LayerDescriptor> {
    (
        prop_oneof![Just(Dims::Two), Just(Dims::Three)],
        [1usize..=8, 1usize..=8, 1usize..=8],
        2usize..=5,
        1usize..=4,
        1usize..=4,
        0usize..=2,
    )
        .prop_flat_map(|(dims, size, k, nc, nm, crop)| {
            (1usize..=k).prop_map(move |s| {
                let mut l = match dims {
                    Dims::Two => LayerDescriptor::new_2d("p", nc, nm, [size[1], size[2]], k, s),
                    Dims::Three => LayerDescriptor::new_3d("p", nc, nm, size, k, s),
                };
                let first = if dims == Dims::Two { 1 } else { 0 };
                let smallest = l.axes()[first..].iter().map(|a| a.full()).min().unwrap();
                l.crop = crop.min((smallest - 1) / 2);
                l
            })
        })
}

/// Layer with tensors whose values lie in `lo..=hi`.
pub fn case(lo: i64, hi: i64) -> impl Strategy<Value = (LayerDescriptor, Tensor, Tensor)> {
    layer().prop_flat_map(move |l| {
        let xs = l.input_tensor_shape().iter().product::<usize>();
        let ws = l.weight_tensor_shape().iter().product::<usize>();
        (
            Just(l),
            proptest::collection::vec(lo..=hi, xs),
            proptest::collection::vec(lo..=hi, ws),
        )
            .prop_map(|(l, x, w)| {
                let input = Tensor::new(l.input_tensor_shape(), x).unwrap();
                let weights = Tensor::new(l.weight_tensor_shape(), w).unwrap();
                (l, input, weights)
            })
    })
}

/// Small meshes so that layers from [`layer`] span several tiles.
pub fn config() -> impl Strategy<Value = AccelConfig> {
    (1usize..=3, prop_oneof![Just(1usize), Just(2), Just(4)], 1usize..=3, 1usize..=4, 1usize..=4)
        .prop_map(|(m, n, z, r, c)| AccelConfig::with_mesh(m, n, z, r, c))
}
