mod common;

use deconv_core::oracle::{count_ops, deconv_scatter_add, OpBasis};
use deconv_core::schedule::fifo_depth_requirement;
use deconv_core::sim::{estimate_layer, simulate_layer};
use deconv_core::{AccelConfig, Arith, Dims, Fidelity, FxFormat, LayerDescriptor, SimOptions, Tensor};
use proptest::prelude::*;

fn opts(fidelity: Fidelity) -> SimOptions {
    SimOptions {
        fidelity,
        ..SimOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn tile_sim_matches_oracle((layer, x, w) in common::case(-50, 50), cfg in common::config()) {
        let out = simulate_layer(&layer, &cfg, &x, &w, Arith::Integer, &opts(Fidelity::Tile)).unwrap();
        prop_assert_eq!(&out.output, &deconv_scatter_add(&x, &w, &layer, Arith::Integer).unwrap());
        prop_assert_eq!(2 * out.stats.mac_count, count_ops(&layer, OpBasis::Valid));
        prop_assert!(out.stats.total >= out.stats.compute);
    }

    #[test]
    fn tile_sim_matches_oracle_fixed((layer, x, w) in common::case(-32768, 32767), cfg in common::config()) {
        let fx = Arith::Fixed(FxFormat::default());
        let out = simulate_layer(&layer, &cfg, &x, &w, fx, &opts(Fidelity::Tile)).unwrap();
        prop_assert_eq!(&out.output, &deconv_scatter_add(&x, &w, &layer, fx).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn cycle_sim_matches_tile_sim((layer, x, w) in common::case(-50, 50), cfg in common::config()) {
        let tile = simulate_layer(&layer, &cfg, &x, &w, Arith::Integer, &opts(Fidelity::Tile)).unwrap();
        let cycle = simulate_layer(&layer, &cfg, &x, &w, Arith::Integer, &opts(Fidelity::Cycle)).unwrap();
        prop_assert_eq!(&tile.output, &cycle.output);
        prop_assert_eq!(tile.stats, cycle.stats);
        prop_assert!(cycle.peak_fifo_occupancy <= cycle.fifo_capacity);
        prop_assert_eq!(
            cycle.fifo_capacity,
            fifo_depth_requirement(layer.kernel, layer.stride, layer.dims) + layer.kernel_volume()
        );
    }

    #[test]
    fn two_d_mapping_is_mesh_independent((layer, x, w) in common::case(-50, 50)) {
        prop_assume!(layer.dims == Dims::Two);
        let a = simulate_layer(&layer, &AccelConfig::with_mesh(2, 16, 4, 4, 4), &x, &w, Arith::Integer, &opts(Fidelity::Tile)).unwrap();
        let b = simulate_layer(&layer, &AccelConfig::with_mesh(2, 64, 1, 4, 4), &x, &w, Arith::Integer, &opts(Fidelity::Tile)).unwrap();
        prop_assert_eq!(a.output, b.output);
        prop_assert_eq!(a.stats.mac_count, b.stats.mac_count);
    }
}

/// Activations whose blocks cover output position `x` along one axis.
fn covering(x: usize, input: usize, k: usize, s: usize) -> i64 {
    (0..input).filter(|&i| i * s <= x && x < i * s + k).count() as i64
}

#[test]
fn every_contribution_lands_once() {
    for (layer, cfg) in [
        (LayerDescriptor::new_3d("a", 3, 2, [5, 3, 6], 3, 2), AccelConfig::with_mesh(1, 2, 2, 2, 4)),
        (LayerDescriptor::new_2d("b", 5, 1, [7, 5], 5, 2), AccelConfig::with_mesh(1, 4, 2, 3, 2)),
        (LayerDescriptor::new_3d("c", 1, 1, [4, 4, 4], 4, 1), AccelConfig::with_mesh(1, 1, 3, 3, 3)),
    ] {
        let x = Tensor::from_fn(layer.input_tensor_shape(), |_| 1);
        let w = Tensor::from_fn(layer.weight_tensor_shape(), |_| 1);
        for fidelity in [Fidelity::Tile, Fidelity::Cycle] {
            let out = simulate_layer(&layer, &cfg, &x, &w, Arith::Integer, &opts(fidelity)).unwrap();
            let axes = layer.axes();
            let full = axes.map(|a| a.full());
            let mut i = 0;
            for _m in 0..layer.out_channels {
                for d in 0..full[0] {
                    for h in 0..full[1] {
                        for c in 0..full[2] {
                            let cover: i64 = [d, h, c]
                                .iter()
                                .zip(axes)
                                .map(|(&p, a)| covering(p, a.input, a.kernel, a.stride))
                                .product();
                            assert_eq!(out.output.data()[i], cover * layer.in_channels as i64);
                            i += 1;
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn overlap_messages_match_face_slabs() {
    // one 3x3x3 tile: 2 neighbour faces per axis, 9 PEs per face, 9-element slabs
    let layer = LayerDescriptor::new_3d("l", 1, 1, [3, 3, 3], 3, 2);
    let cfg = AccelConfig::with_mesh(1, 1, 4, 4, 4);
    let x = Tensor::from_fn(layer.input_tensor_shape(), |i| i as i64 % 5 - 2);
    let w = Tensor::from_fn(layer.weight_tensor_shape(), |i| i as i64 % 3 - 1);
    let out = simulate_layer(&layer, &cfg, &x, &w, Arith::Integer, &opts(Fidelity::Cycle)).unwrap();
    assert_eq!(out.stats.overlap_messages, 3 * 2 * 9 * 9);
    assert_eq!(out.output, deconv_scatter_add(&x, &w, &layer, Arith::Integer).unwrap());
}

#[test]
fn repeated_runs_are_identical() {
    let layer = LayerDescriptor::new_3d("l", 6, 3, [5, 4, 3], 3, 2);
    let cfg = AccelConfig::with_mesh(2, 2, 2, 2, 2);
    let x = Tensor::from_fn(layer.input_tensor_shape(), |i| (i as i64 * 31) % 17 - 8);
    let w = Tensor::from_fn(layer.weight_tensor_shape(), |i| (i as i64 * 7) % 5 - 2);
    let o = opts(Fidelity::Cycle);
    let a = simulate_layer(&layer, &cfg, &x, &w, Arith::Integer, &o).unwrap();
    let b = simulate_layer(&layer, &cfg, &x, &w, Arith::Integer, &o).unwrap();
    assert_eq!(a, b);
}

#[test]
fn trace_covers_small_layers() {
    let layer = LayerDescriptor::new_2d("l", 1, 1, [2, 2], 3, 2);
    let cfg = AccelConfig::with_mesh(1, 1, 1, 2, 2);
    let x = Tensor::from_fn(layer.input_tensor_shape(), |i| i as i64 + 1);
    let w = Tensor::from_fn(layer.weight_tensor_shape(), |_| 1);
    let o = SimOptions {
        fidelity: Fidelity::Cycle,
        trace: true,
        ..SimOptions::default()
    };
    let out = simulate_layer(&layer, &cfg, &x, &w, Arith::Integer, &o).unwrap();
    let macs = out.trace.iter().filter(|e| e.to_string().contains(", mac,")).count();
    assert_eq!(macs, 4 * 9);
}

#[test]
fn estimate_agrees_with_simulation() {
    let layer = LayerDescriptor::new_2d("l", 70, 3, [9, 9], 3, 2);
    let cfg = AccelConfig::table2_2d();
    let x = Tensor::from_fn(layer.input_tensor_shape(), |i| i as i64 % 3);
    let w = Tensor::from_fn(layer.weight_tensor_shape(), |i| i as i64 % 2);
    let sim = simulate_layer(&layer, &cfg, &x, &w, Arith::Integer, &SimOptions::default()).unwrap();
    assert_eq!(sim.stats, estimate_layer(&layer, &cfg, &SimOptions::default()).unwrap());
}
