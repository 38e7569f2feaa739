mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use utilscope::nas_search::{approximate_filter_search, run_search, Proxy, SamplerKind, SearchConfig};
use utilscope::pareto::MetricPoint;
use utilscope::search_space::{enumerate_size_space, synthetic_oracle, synthetic_space, SyntheticConfig, TabularSpace};
use utilscope::DeviceSpec;

use common::brute_force_frontier;

fn small_config() -> SyntheticConfig {
    SyntheticConfig { layer_count: 3, channel_choices: vec![8, 16, 32, 48, 64], ..SyntheticConfig::default() }
}

fn space(seed: u64) -> TabularSpace {
    synthetic_space(&small_config(), seed, &DeviceSpec::v100_fp16()).unwrap()
}

fn sampler(reinforce: bool) -> SamplerKind {
    if reinforce {
        SamplerKind::reinforce_default()
    } else {
        SamplerKind::Random
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn enumeration_is_exhaustive(layers in 1usize..5, choices in prop::collection::btree_set(1u32..100, 1..5)) {
        let choices: Vec<u32> = choices.into_iter().collect();
        let ids = enumerate_size_space(layers, &choices).unwrap();
        prop_assert_eq!(ids.len(), choices.len().pow(layers as u32));
        prop_assert_eq!(ids.iter().collect::<BTreeSet<_>>().len(), ids.len());
    }

    #[test]
    fn seed_moves_only_noise(a in any::<u64>(), b in any::<u64>(), pick in 0usize..125) {
        let device = DeviceSpec::v100_fp16();
        let cfg = small_config();
        let arch = &enumerate_size_space(3, &cfg.channel_choices).unwrap()[pick];
        let (x, y) = (synthetic_oracle(arch, a, &cfg, &device).unwrap(), synthetic_oracle(arch, b, &cfg, &device).unwrap());
        prop_assert_eq!(x.flops_per_input, y.flops_per_input);
        prop_assert_eq!(x.throughput, y.throughput);
        prop_assert_eq!(x.clone(), synthetic_oracle(arch, a, &cfg, &device).unwrap());
        let ident = x.throughput * x.flops_per_input / device.peak_flops_per_sec;
        prop_assert!((x.utilization - ident).abs() <= 1e-12 * ident);
    }

    #[test]
    fn frontier_only_holds_evaluated_archs(seed in 0u64..1000, budget in 100.0f64..5000.0, reinforce in any::<bool>()) {
        let space = space(seed % 4);
        let cfg = SearchConfig { time_budget: budget, seed, sampler: sampler(reinforce), ..SearchConfig::default() };
        let trace = run_search(&space, &cfg).unwrap();
        prop_assert_eq!(trace.rows.len(), (budget / 100.0).floor() as usize);
        let seen: BTreeSet<String> = trace.rows.iter().map(|r| r.arch.to_string()).collect();
        prop_assert!(trace.frontier.members().iter().all(|m| seen.contains(*m)));
        let points: Vec<MetricPoint> =
            trace.rows.iter().map(|r| MetricPoint::new(r.arch.to_string(), r.throughput, r.accuracy)).collect();
        let got: BTreeSet<String> = trace.frontier.members().into_iter().map(str::to_string).collect();
        prop_assert_eq!(got, brute_force_frontier(&points));
    }

    #[test]
    fn filter_accounting(seed in 0u64..4, extra in 0.0f64..3000.0, flops in any::<bool>(), parallel in any::<bool>()) {
        let space = space(seed);
        let proxy = if flops { Proxy::Flops } else { Proxy::Utilization };
        let cfg = SearchConfig { time_budget: space.len() as f64 + extra, parallel_evals: parallel, ..SearchConfig::default() };
        let r = approximate_filter_search(&space, &cfg, proxy).unwrap();
        prop_assert_eq!(r.n_tput_evals, space.len());
        prop_assert!(r.n_acc_evals <= r.proxy_frontier.len());
        prop_assert_eq!(r.n_acc_evals, ((extra / 100.0).floor() as usize).min(r.proxy_frontier.len()));
        prop_assert_eq!(r.time_spent, space.len() as f64 + 100.0 * r.n_acc_evals as f64);
        prop_assert!(r.evaluated.iter().all(|c| r.proxy_frontier.contains(&c.arch.to_string())));
        prop_assert!(r.time_spent <= cfg.time_budget);
    }
}
