mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use utilscope::cost_model::{batch_sweep, layer_cost, network_cost, LayerSpec, Padding, ScalarWidth, TensorShape};

use common::random_net;

proptest! {
    #[test]
    fn totals_scale_with_batch(seed in any::<u64>(), k in 1u64..64) {
        let net = random_net(&mut ChaCha8Rng::seed_from_u64(seed));
        let one = network_cost::<f64>(&net, 1).unwrap();
        let many = network_cost::<f64>(&net, k).unwrap();
        prop_assert_eq!(many.total_flops, k * one.total_flops);
        prop_assert_eq!(many.input_bytes(), k * one.input_bytes());
        prop_assert_eq!(many.output_bytes(), k * one.output_bytes());
        prop_assert_eq!(many.weight_bytes(), one.weight_bytes());
        for layer in &many.per_layer {
            prop_assert_eq!(layer.total_bytes(), layer.input_bytes + layer.weight_bytes + layer.output_bytes);
        }
        prop_assert_eq!(many.total_bytes, many.per_layer.iter().map(|l| l.total_bytes()).sum::<u64>());
    }

    #[test]
    fn intensity_rises_towards_asymptote(seed in any::<u64>()) {
        let net = random_net(&mut ChaCha8Rng::seed_from_u64(seed));
        let batches: Vec<u64> = (0..12).map(|i| 1 << i).collect();
        let sweep = batch_sweep::<f64>(&net, &batches).unwrap();
        let limit = sweep.asymptote.unwrap();
        for w in sweep.points.windows(2) {
            prop_assert!(w[1].1 >= w[0].1);
        }
        // Weights are always present, so the bound is strict.
        prop_assert!(sweep.points.iter().all(|&(_, i)| i < limit));
    }

    #[test]
    fn asymptote_reached_without_weights(c in 1u64..8, h in 1u64..16, batch in 1u64..32) {
        let net = utilscope::cost_model::NetworkSpec::new(
            "pool",
            utilscope::cost_model::ImageShape { c, h, w: h },
            ScalarWidth::FP16,
            vec![LayerSpec::elementwise(), LayerSpec::global_pool()],
        );
        let sweep = batch_sweep::<f64>(&net, &[batch]).unwrap();
        prop_assert_eq!(sweep.points[0].1, sweep.asymptote.unwrap());
    }

    #[test]
    fn conv_flops_match_loop_nest(
        n in 1u64..3, c in 1u64..=8, h in 1u64..=8, w in 1u64..=8,
        cout in 1u64..=8, k in 1u64..=5, stride in 1u64..=3, same in any::<bool>(),
    ) {
        let padding = if same { Padding::Same } else { Padding::Valid };
        prop_assume!(same || (k <= h && k <= w));
        let shape = TensorShape::new(n, c, h, w).unwrap();
        let cost = layer_cost(&LayerSpec::conv2d(c, cout, k, stride, padding), shape, ScalarWidth::FP32).unwrap();
        // Count one MAC per (output element, input channel, kernel tap).
        let (oh, ow) = if same {
            (h.div_ceil(stride), w.div_ceil(stride))
        } else {
            ((h - k) / stride + 1, (w - k) / stride + 1)
        };
        let mut macs = 0u64;
        for _ in 0..n { for _ in 0..cout { for _ in 0..oh { for _ in 0..ow {
            for _ in 0..c { for _ in 0..k { for _ in 0..k { macs += 1; } } }
        } } } }
        prop_assert_eq!(cost.flops, 2 * macs);
    }
}
