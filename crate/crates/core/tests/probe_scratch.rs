//! Scratch probe for tuning; replaced by the acceptance suite.

use wrsn_core::metrics::{detection_rate, energy_usage_efficiency, survival_rate, travel_distance};
use wrsn_core::scenario::{per_node_max_scores, run_scenario};
use wrsn_core::{AttackSpec, AttackTier, ScenarioConfig};

fn config(r: u32, m: u32, tier: AttackTier, seed: u64, controller: bool) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.network.node_count = r;
    cfg.network.mcv_count = m;
    cfg.network.rng_seed = seed;
    cfg.attack = AttackSpec::for_tier(tier);
    cfg.controller.enabled = controller;
    cfg
}

#[test]
#[ignore]
fn probe_detection_and_survival() {
    for tier in [AttackTier::Lai, AttackTier::Mai, AttackTier::Hai] {
        for controller in [true, false] {
            let cfg = config(200, 5, tier, 1000, controller);
            let t0 = std::time::Instant::now();
            let outcome = run_scenario(&cfg).unwrap();
            let (det, fpr) = detection_rate(&outcome.trace, &outcome.ground_truth);
            let surv = survival_rate(&outcome.trace, cfg.network.horizon);
            let eff = energy_usage_efficiency(&outcome.trace);
            let travel = travel_distance(&outcome.trace);
            println!(
                "tier={:?} ctrl={} det={:?} fpr={:.2} surv={:.1} eff={:?} travel={:.0} truth={} elapsed={:?}",
                tier,
                controller,
                det,
                fpr,
                surv,
                eff,
                travel,
                outcome.ground_truth.len(),
                t0.elapsed()
            );
            if controller {
                let maxima = per_node_max_scores(&outcome.trace);
                let mut honest_max = 0.0f64;
                let mut mal_min = 1.0f64;
                let mut mal_max = 0.0f64;
                for (node, score) in &maxima {
                    if outcome
                        .ground_truth
                        .contains(&wrsn_core::config::NodeId(*node))
                    {
                        mal_min = mal_min.min(*score);
                        mal_max = mal_max.max(*score);
                    } else {
                        honest_max = honest_max.max(*score);
                    }
                }
                println!(
                    "  scores: honest_max={honest_max:.3} mal_min={mal_min:.3} mal_max={mal_max:.3} scored_nodes={}",
                    maxima.len()
                );
            }
        }
    }
}
