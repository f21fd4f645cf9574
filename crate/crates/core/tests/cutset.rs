mod common;

use std::collections::BTreeSet;

use common::oracle::{all_partitions, dc_flows, random_network};
use cscopf_core::cutset::{disconnects, find_saturated_cutsets, min_cut_between, FtOptions};
use cscopf_core::grid::Network;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small network with limits scaled around the base flows so that some
/// branches and cuts saturate.
fn stressed(seed: u64, nb: usize, extra: usize) -> (Network, Vec<f64>) {
    let mut net = random_network(seed, nb, extra);
    let flows = dc_flows(&net, &net.base_injections_mw(), &BTreeSet::new()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for (br, f) in net.branches.iter_mut().zip(&flows) {
        br.flow_limit_mw = (f.abs() * rng.random_range(0.6..1.6)).max(1.0);
    }
    (net, flows)
}

/// Brute-force check of the seeded search on one network.
fn check_against_brute_force(net: &Network, flows: &[f64], threshold: f64) -> Result<(), TestCaseError> {
    let opts = FtOptions { utilization_threshold: threshold, corridor: vec![] };
    let found = find_saturated_cutsets(net, flows, &opts);
    let parts = all_partitions(net, flows);
    for cut in &found {
        let side: BTreeSet<u32> = cut.side_a.iter().copied().collect();
        let p = parts.iter().find(|p| p.side_a == side).expect("reported side is a bipartition");
        prop_assert_eq!(&p.branches, &cut.branches);
        prop_assert!((p.flow - cut.aggregate_flow_mw).abs() < 1e-9);
        prop_assert!((p.capacity - cut.aggregate_limit_mw).abs() < 1e-9);
        prop_assert!(p.flow / p.capacity > threshold);
        prop_assert!(disconnects(net, cut));
        prop_assert!((cut.transfer_margin_mw - (p.flow - p.capacity).max(0.0)).abs() < 1e-9);
    }
    let keys: BTreeSet<String> = found.iter().map(|c| c.key()).collect();
    prop_assert_eq!(keys.len(), found.len());
    for (u, br) in net.branches.iter().enumerate() {
        if flows[u].abs() / br.flow_limit_mw < threshold {
            continue;
        }
        let (s, t) = if flows[u] >= 0.0 { (br.from_bus, br.to_bus) } else { (br.to_bus, br.from_bus) };
        let separating: Vec<_> = parts.iter().filter(|p| p.side_a.contains(&s) && !p.side_a.contains(&t)).collect();
        let best = separating.iter().map(|p| p.capacity).fold(f64::INFINITY, f64::min);
        let (_, lib_cap) = min_cut_between(net, s, t);
        prop_assert!((lib_cap - best).abs() < 1e-6 * (1.0 + best));
        let tied: Vec<_> = separating.iter().filter(|p| p.capacity <= best + 1e-6 * (1.0 + best)).collect();
        if tied.iter().all(|p| p.flow / p.capacity > threshold) {
            prop_assert!(tied.iter().any(|p| found.iter().any(|c| c.branches == p.branches)));
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn seeded_search_agrees_with_brute_force(seed in any::<u64>(), nb in 3usize..=6, extra in 0usize..=3) {
        let (net, flows) = stressed(seed, nb, extra);
        prop_assume!(net.branches.len() <= 8);
        check_against_brute_force(&net, &flows, 1.0)?;
        check_against_brute_force(&net, &flows, 0.98)?;
    }

    #[test]
    fn cut_flow_is_orientation_antisymmetric(seed in any::<u64>(), nb in 3usize..=6) {
        let (net, flows) = stressed(seed, nb, 2);
        for cut in find_saturated_cutsets(&net, &flows, &FtOptions::default()) {
            let back = cut.flipped();
            prop_assert_eq!(back.aggregate_flow_mw, -cut.aggregate_flow_mw);
            prop_assert_eq!(back.transfer_margin_mw, 0.0);
        }
    }
}

#[test]
fn unloaded_network_has_no_saturated_cuts() {
    let net = random_network(9, 6, 3);
    let flows = vec![0.0; net.branches.len()];
    assert!(find_saturated_cutsets(&net, &flows, &FtOptions::default()).is_empty());
}

#[test]
fn fixture_reports_the_fire_corridor() {
    let net = cscopf_core::fixtures::wildfire9();
    let flows = dc_flows(&net, &net.base_injections_mw(), &BTreeSet::new()).unwrap();
    let c = cscopf_core::fixtures::wildfire9_contingency();
    let post = net.apply_outage(&c.outage_set().into_iter().collect()).unwrap().network;
    let post_flows = dc_flows(&post, &post.base_injections_mw(), &BTreeSet::new()).unwrap();
    assert!(find_saturated_cutsets(&net, &flows, &FtOptions::default()).is_empty());
    assert!(!find_saturated_cutsets(&post, &post_flows, &FtOptions::default()).is_empty());
}
