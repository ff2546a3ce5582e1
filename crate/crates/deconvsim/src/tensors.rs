//! Seeded random operands for oracle checks.

use deconv_core::{FxFormat, LayerDescriptor, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Reals drawn uniformly from `[-1, 1)` and quantized to `fx`. Each layer
/// index gets its own ChaCha stream, so results do not depend on the order
/// in which layers are generated.
pub fn layer_operands(layer: &LayerDescriptor, fx: &FxFormat, seed: u64, index: u64) -> (Tensor, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut draw = |shape: Vec<usize>| {
        let n: usize = shape.iter().product();
        let reals: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new(shape, fx.quantize(&reals).raw).expect("length matches shape")
    };
    let input = draw(layer.input_tensor_shape());
    let weights = draw(layer.weight_tensor_shape());
    (input, weights)
}
